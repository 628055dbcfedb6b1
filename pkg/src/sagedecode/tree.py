"""Draft tree storage, root-to-leaf paths, tree attention masks and static shapes.

The root is implicit: it stands for the last committed token, so depth-1
nodes have ``parent == ROOT``. Nodes are append-only and every parent
precedes its children, which makes insertion order a topological order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

ROOT = -1
PROB_SLACK = 1e-9


class CapacityError(ValueError):
    """Adding a node would exceed the tree's node budget."""


class TemplateError(ValueError):
    """Malformed static tree template."""


@dataclass(frozen=True)
class TreeNode:
    token: int
    parent: int
    depth: int
    node_prob: float
    path_prob: float
    rank: int = 0


class DraftTree:
    def __init__(self, n_max: int = 64):
        self.n_max = n_max
        self.nodes: list[TreeNode] = []
        self._children: dict[int, list[int]] = {ROOT: []}
        # draft distributions computed while building, keyed by node (ROOT included)
        self.draft_dists: dict[int, np.ndarray] = {}

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def add_child(self, parent: int, token: int, node_prob: float, rank: int = 0) -> int:
        if len(self.nodes) >= self.n_max:
            raise CapacityError(f"tree already holds n_max={self.n_max} nodes")
        if parent != ROOT and not 0 <= parent < len(self.nodes):
            raise IndexError(f"invalid parent index {parent}")
        if not -PROB_SLACK <= node_prob <= 1.0 + PROB_SLACK:
            raise ValueError(f"node_prob must lie in [0, 1], got {node_prob}")
        # normalized float vectors can overshoot 1 by an ulp or two
        node_prob = min(1.0, max(0.0, float(node_prob)))
        if parent == ROOT:
            depth, base = 1, 1.0
        else:
            up = self.nodes[parent]
            depth, base = up.depth + 1, up.path_prob
        idx = len(self.nodes)
        self.nodes.append(TreeNode(int(token), parent, depth, float(node_prob), base * node_prob, rank))
        self._children[parent].append(idx)
        self._children[idx] = []
        return idx

    def children(self, index: int = ROOT) -> list[int]:
        return list(self._children[index])

    def path(self, index: int) -> list[int]:
        """Node indices from depth 1 down to ``index``."""
        out = []
        while index != ROOT:
            out.append(index)
            index = self.nodes[index].parent
        return out[::-1]

    def path_tokens(self, index: int) -> list[int]:
        return [self.nodes[i].token for i in self.path(index)]

    def leaves(self) -> list[int]:
        return [i for i in range(len(self.nodes)) if not self._children[i]]

    @property
    def parents(self) -> np.ndarray:
        return np.array([n.parent for n in self.nodes], dtype=np.int64)

    @property
    def depth(self) -> int:
        return max((n.depth for n in self.nodes), default=0)

    @property
    def root_width(self) -> int:
        return len(self._children[ROOT])

    def to_template(self) -> list[dict]:
        return [{"parent": n.parent, "rank": n.rank} for n in self.nodes]


AttentionMask = np.ndarray


def build_attention_mask(tree: DraftTree) -> AttentionMask:
    """``mask[i, j]`` is True iff node j is node i or one of its ancestors."""
    if tree.node_count == 0:
        return np.zeros((0, 0), dtype=np.bool_)
    return kernels.ancestor_mask(tree.parents)


def enumerate_root_paths(tree: DraftTree) -> list[list[int]]:
    """One depth-1-to-leaf path per leaf, leaves in insertion order."""
    return [tree.path(leaf) for leaf in tree.leaves()]


# ------------------------------------------------------------ static shapes


@dataclass(frozen=True)
class TreeShape:
    """Token-free tree: per node, parent index (or ROOT) and rank among siblings."""

    parents: tuple[int, ...]
    ranks: tuple[int, ...]

    @property
    def node_count(self) -> int:
        return len(self.parents)

    @property
    def depths(self) -> list[int]:
        d: list[int] = []
        for p in self.parents:
            d.append(1 if p == ROOT else d[p] + 1)
        return d

    @property
    def depth(self) -> int:
        return max(self.depths, default=0)

    @property
    def root_width(self) -> int:
        return sum(1 for p in self.parents if p == ROOT)

    def to_template(self) -> list[dict]:
        return [{"parent": p, "rank": r} for p, r in zip(self.parents, self.ranks)]


def static_tree(template: Sequence[dict]) -> TreeShape:
    """Validate a ``[{parent, rank}, ...]`` template into a TreeShape."""
    parents, ranks = [], []
    seen = set()
    for i, entry in enumerate(template):
        try:
            p, r = int(entry["parent"]), int(entry["rank"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TemplateError(f"entry {i}: expected {{parent, rank}}, got {entry!r}") from exc
        if p != ROOT and not 0 <= p < i:
            raise TemplateError(f"entry {i}: parent {p} must be -1 or an earlier index")
        if r < 0:
            raise TemplateError(f"entry {i}: negative rank {r}")
        if (p, r) in seen:
            raise TemplateError(f"entry {i}: duplicate rank {r} under parent {p}")
        seen.add((p, r))
        parents.append(p)
        ranks.append(r)
    return TreeShape(tuple(parents), tuple(ranks))


def chain_template(depth: int) -> TreeShape:
    return TreeShape(tuple(range(-1, depth - 1)), (0,) * depth)


def load_template(path=None) -> TreeShape:
    if path is None:
        text = (resources.files("sagedecode") / "data" / "initial_tree.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TemplateError(f"template is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise TemplateError("template must be a JSON array of {parent, rank}")
    return static_tree(data)


def dump_template(shape: TreeShape | DraftTree, path) -> None:
    rows = shape.to_template()
    Path(path).write_text("[\n" + ",\n".join(json.dumps(r) for r in rows) + "\n]\n")


def initial_tree() -> TreeShape:
    """The committed static tree used by the static baseline and for round one."""
    return load_template()
