"""Greedy parallel verification of a draft tree against the target model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import Context, LanguageModel
from .tree import ROOT, AttentionMask, DraftTree, build_attention_mask, enumerate_root_paths


@dataclass(frozen=True)
class VerificationResult:
    best_path: tuple[int, ...]
    tau: int
    bonus_token: int
    accepted_tokens: tuple[int, ...]
    target_calls: int

    @property
    def committed(self) -> tuple[int, ...]:
        return self.accepted_tokens + (self.bonus_token,)


def argmax_token(p: np.ndarray) -> int:
    """Greedy token; the lowest id wins ties."""
    return int(np.argmax(p))


def verify(
    target: LanguageModel, ctx: Context, tree: DraftTree, mask: AttentionMask | None = None
) -> VerificationResult:
    """Longest accepted prefix over all root-to-leaf paths, plus the bonus token.

    A node matches when its parent matched (or is the root) and its token is
    the target's greedy choice after its ancestor path, read from the
    attention mask row. Nodes below a mismatch can never be accepted, so
    the target is only queried after matched nodes; the committed tokens are
    the same as a full parallel pass.
    """
    if mask is None:
        mask = build_attention_mask(tree)
    n = tree.node_count
    root_greedy = argmax_token(target.forward(ctx))
    calls = 1
    matched = np.zeros(n, dtype=np.bool_)
    greedy_after: dict[int, int] = {ROOT: root_greedy}
    for i, node in enumerate(tree.nodes):
        if node.parent != ROOT and not matched[node.parent]:
            continue
        if node.token != greedy_after[node.parent]:
            continue
        matched[i] = True
        path = np.flatnonzero(mask[i])
        greedy_after[i] = argmax_token(target.forward(ctx.extend(tree.nodes[j].token for j in path)))
        calls += 1

    best: tuple[int, ...] = ()
    tau = 0
    for k, path in enumerate(enumerate_root_paths(tree)):
        c = 0
        while c < len(path) and matched[path[c]]:
            c += 1
        if k == 0 or c > tau:
            best, tau = tuple(path), c
    accepted = tuple(tree.nodes[j].token for j in best[:tau])
    bonus = greedy_after[best[tau - 1]] if tau else root_greedy
    return VerificationResult(best, tau, bonus, accepted, calls)


def greedy_decode(target: LanguageModel, prompt: Context, max_tokens: int, eos_token: int | None = None) -> list[int]:
    """Target-only greedy reference output."""
    buf = list(prompt.prefix)
    start = len(buf)
    while len(buf) - start < max_tokens:
        tok = argmax_token(target.forward(Context.view(buf, len(buf), prompt.prompt_state)))
        buf.append(tok)
        if eos_token is not None and tok == eos_token:
            break
    return buf[start:]
