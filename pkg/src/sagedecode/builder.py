"""Draft tree construction: confidence-shaped expansion and static templates.

Inclusion rule used by ``build_tree`` (and re-derived by
``validate_tree_against_rule``): a child of an expanded node at level ``l``
is kept iff its rank among the parent's draft candidates is below the
level width ``W_l`` and either it is the top-ranked child or its score
exceeds ``theta_l = 0.1 * l / depth``. The score is the node probability
(``threshold_mode="node"``) or the cumulative path probability
(``"path"``). Every kept node above the depth limit is expanded, so each
expanded node proposes at least its top-1 child. Expansion is depth-first,
children in rank order, and stops at ``n_max`` nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .confidence import topk_order
from .models import Context, LanguageModel
from .policy import AdaptiveConfig, TreeShapeParams, level_threshold, level_width
from .tree import ROOT, DraftTree, TemplateError, TreeShape


def build_tree(
    draft: LanguageModel, ctx: Context, shape: TreeShapeParams, cfg: AdaptiveConfig
) -> tuple[DraftTree, np.ndarray]:
    """Grow a tree for ``shape`` and return it with the root draft distribution."""
    if not cfg.d_min <= shape.depth <= cfg.d_max or not cfg.w_min <= shape.width <= cfg.w_max:
        raise ValueError(f"shape {shape} outside config bounds")
    tree = DraftTree(cfg.n_max)
    depth = shape.depth
    use_path = cfg.threshold_mode == "path"

    def expand(node: int, node_ctx: Context, level: int, parent_prob: float, base: float) -> None:
        p = draft.forward(node_ctx)
        tree.draft_dists[node] = p
        child_level = level + 1
        width = min(level_width(shape.width, child_level, parent_prob), p.shape[0])
        theta = level_threshold(child_level, depth)
        for rank, tok in enumerate(topk_order(p)[:width]):
            if tree.node_count >= cfg.n_max:
                return
            q = float(p[tok])
            score = base * q if use_path else q
            if rank > 0 and score <= theta:
                # candidates arrive in descending probability
                break
            idx = tree.add_child(node, int(tok), q, rank)
            if child_level < depth:
                expand(idx, node_ctx.extend((int(tok),)), child_level, q, base * q)

    expand(ROOT, ctx, 0, 1.0, 1.0)
    return tree, tree.draft_dists[ROOT]


def fill_template(draft: LanguageModel, ctx: Context, shape: TreeShape, n_max: int | None = None) -> DraftTree:
    """Place the rank-r draft token at every template node."""
    tree = DraftTree(n_max if n_max is not None else max(1, shape.node_count))
    for parent, rank in zip(shape.parents, shape.ranks):
        dist = tree.draft_dists.get(parent)
        if dist is None:
            node_ctx = ctx if parent == ROOT else ctx.extend(tree.path_tokens(parent))
            dist = draft.forward(node_ctx)
            tree.draft_dists[parent] = dist
        if rank >= dist.shape[0]:
            raise TemplateError(f"rank {rank} exceeds vocabulary size {dist.shape[0]}")
        tok = int(topk_order(dist)[rank])
        tree.add_child(parent, tok, float(dist[tok]), rank)
    if ROOT not in tree.draft_dists:
        tree.draft_dists[ROOT] = draft.forward(ctx)
    return tree


@dataclass
class ValidationReport:
    valid: bool
    truncated: bool
    problems: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.valid


def validate_tree_against_rule(
    tree: DraftTree, draft: LanguageModel, ctx: Context, shape: TreeShapeParams, cfg: AdaptiveConfig
) -> ValidationReport:
    """Re-derive the rule-satisfying paths from the draft model and compare.

    Soundness: each node is checked against the rule on its own. Complete-
    ness: the rule's paths are enumerated in depth-first rank order and the
    tree must equal the first ``n_max`` of them.
    """
    depth = shape.depth
    use_path = cfg.threshold_mode == "path"
    problems: list[str] = []

    # per-node soundness
    for i, node in enumerate(tree.nodes):
        if node.depth > depth:
            problems.append(f"node {i}: depth {node.depth} > {depth}")
            continue
        tokens = tree.path_tokens(i)
        parent_ctx = ctx.extend(tokens[:-1])
        p = draft.forward(parent_ctx)
        ranked = list(topk_order(p))
        rank = ranked.index(node.token)
        parent_prob = 1.0 if node.parent == ROOT else tree.nodes[node.parent].node_prob
        width = min(level_width(shape.width, node.depth, parent_prob), p.shape[0])
        q = float(p[node.token])
        path_q = float(np.prod([draft.forward(ctx.extend(tokens[:j]))[tokens[j]] for j in range(len(tokens))]))
        score = path_q if use_path else q
        if rank >= width:
            problems.append(f"node {i}: rank {rank} >= level width {width}")
        if rank > 0 and not score > level_threshold(node.depth, depth):
            problems.append(f"node {i}: score {score:.6g} <= threshold {level_threshold(node.depth, depth):.6g}")
        if abs(node.node_prob - q) > 1e-12:
            problems.append(f"node {i}: stored node_prob {node.node_prob} != draft prob {q}")

    # completeness in deterministic expansion order
    expected: list[tuple[int, ...]] = []
    limit = cfg.n_max + 1

    def walk(tokens: tuple[int, ...], level: int, parent_prob: float, base: float) -> None:
        if level >= depth or len(expected) >= limit:
            return
        p = draft.forward(ctx.extend(tokens))
        lvl = level + 1
        width = min(level_width(shape.width, lvl, parent_prob), p.shape[0])
        theta = level_threshold(lvl, depth)
        for rank, tok in enumerate(topk_order(p)[:width]):
            q = float(p[tok])
            score = base * q if use_path else q
            if rank == 0 or score > theta:
                if len(expected) >= limit:
                    return
                expected.append(tokens + (int(tok),))
                walk(tokens + (int(tok),), lvl, q, base * q)

    walk((), 0, 1.0, 1.0)
    truncated = len(expected) > cfg.n_max
    want = expected[: cfg.n_max]
    have = [tuple(tree.path_tokens(i)) for i in range(tree.node_count)]
    if have != want:
        missing = [w for w in want if w not in set(have)]
        extra = [h for h in have if h not in set(want)]
        problems.append(f"membership mismatch: missing={missing[:5]} extra={extra[:5]}")
    return ValidationReport(not problems, truncated, problems)
