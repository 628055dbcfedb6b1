"""Draft, verify, re-shape: the adaptive speculative decoding loop and static baselines.

Every mode shares ``verify``, so all of them commit exactly the target's
greedy output. Key-value caches are not modelled: models are pure functions
of the context.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .builder import build_tree, fill_template
from .confidence import confidence_of
from .models import Context, LanguageModel
from .policy import AdaptiveConfig, HistoryTracker, shape_for
from .tree import ROOT, DraftTree, TreeShape, build_attention_mask, chain_template, initial_tree
from .verifier import VerificationResult, verify

MODES = ("vanilla_ar", "sd_chain", "sd_tree", "sage")
TRACE_SCHEMA = 1


@dataclass
class DecodeStepRecord:
    step_index: int
    position: int
    alpha_used: float | None
    depth_used: int
    width_used: int
    node_count: int
    tree_depth: int
    tau: int
    committed_tokens: int
    effective_d_max: int | None
    entropy: float | None
    draft_cost_units: int
    target_cost_units: int


@dataclass
class DecodeTrace:
    mode: str
    prompt: tuple[int, ...]
    records: list[DecodeStepRecord] = field(default_factory=list)
    output: list[int] = field(default_factory=list)

    @property
    def tokens(self) -> int:
        return len(self.output)

    @property
    def rounds(self) -> int:
        return len(self.records)

    @property
    def draft_cost_units(self) -> int:
        return sum(r.draft_cost_units for r in self.records)

    @property
    def target_cost_units(self) -> int:
        return sum(r.target_cost_units for r in self.records)

    def to_dict(self) -> dict:
        return {
            "schema": TRACE_SCHEMA,
            "mode": self.mode,
            "prompt": list(self.prompt),
            "output": list(self.output),
            "totals": {
                "tokens": self.tokens,
                "rounds": self.rounds,
                "draft_cost_units": self.draft_cost_units,
                "target_cost_units": self.target_cost_units,
            },
            "records": [asdict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecodeTrace":
        if d.get("schema") != TRACE_SCHEMA:
            raise ValueError(f"unsupported trace schema {d.get('schema')!r}")
        return cls(
            d["mode"],
            tuple(d["prompt"]),
            [DecodeStepRecord(**r) for r in d["records"]],
            list(d["output"]),
        )

    def __eq__(self, other):
        if not isinstance(other, DecodeTrace):
            return NotImplemented
        return self.to_dict() == other.to_dict()


class _Session:
    """Committed-token buffer shared by the contexts of one decode."""

    def __init__(self, prompt: Context, max_tokens: int, eos_token: int | None):
        if max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        self.buf = list(prompt.prefix)
        self.start = len(self.buf)
        self.state = prompt.prompt_state
        self.max_tokens = max_tokens
        self.eos = eos_token
        self.done = False

    @property
    def produced(self) -> int:
        return len(self.buf) - self.start

    def context(self) -> Context:
        return Context.view(self.buf, len(self.buf), self.state)

    def commit(self, tokens) -> int:
        room = self.max_tokens - self.produced
        tokens = list(tokens)[:room]
        if self.eos is not None and self.eos in tokens:
            tokens = tokens[: tokens.index(self.eos) + 1]
            self.done = True
        self.buf.extend(tokens)
        if self.produced >= self.max_tokens:
            self.done = True
        return len(tokens)


def _record(i, pos, res: VerificationResult, tree, committed, **kw) -> DecodeStepRecord:
    return DecodeStepRecord(
        step_index=i,
        position=pos,
        node_count=tree.node_count,
        tree_depth=tree.depth,
        tau=res.tau,
        committed_tokens=committed,
        draft_cost_units=tree.node_count,
        target_cost_units=1,
        **kw,
    )


def sage_decode(
    draft: LanguageModel,
    target: LanguageModel,
    prompt: Context,
    max_tokens: int,
    cfg: AdaptiveConfig | None = None,
    init_shape: TreeShape | None = None,
) -> DecodeTrace:
    """Adaptive decode: each round's tree shape comes from the previous round's confidence.

    Round one fills the static initial tree with confidence 0.5 on record.
    After verification, the confidence is computed from the draft
    distribution at the deepest accepted position (the one that predicted
    the bonus token) and, with the history tracker's depth cap, fixes the
    depth and width of the next tree.
    """
    cfg = cfg or AdaptiveConfig()
    init_shape = init_shape if init_shape is not None else initial_tree()
    s = _Session(prompt, max_tokens, cfg.eos_token)
    tracker = HistoryTracker(cfg)
    trace = DecodeTrace("sage", tuple(prompt.prefix))
    alpha = 0.5
    step = 0
    while not s.done:
        ctx = s.context()
        pos = s.produced
        eff = tracker.effective_d_max
        if step == 0:
            tree = fill_template(draft, ctx, init_shape, max(cfg.n_max, init_shape.node_count))
            depth_used, width_used = init_shape.depth, init_shape.root_width
        else:
            shape = shape_for(alpha, cfg, tracker)
            tree, _ = build_tree(draft, ctx, shape, cfg)
            depth_used, width_used = shape.depth, shape.width
        mask = build_attention_mask(tree)
        res = verify(target, ctx, tree, mask)
        committed = s.commit(res.committed)
        tracker.update(res.tau + 1 if cfg.history_signal == "committed" else res.tau)

        deepest = res.best_path[res.tau - 1] if res.tau else ROOT
        p_out = tree.draft_dists.get(deepest)
        if p_out is None:
            p_out = draft.forward(ctx.extend(res.accepted_tokens))
        score = confidence_of(p_out, min(cfg.k, p_out.shape[0]))
        trace.records.append(
            _record(
                step, pos, res, tree, committed,
                alpha_used=alpha, depth_used=depth_used, width_used=width_used,
                effective_d_max=eff, entropy=score.entropy,
            )
        )
        alpha = score.alpha
        step += 1
    trace.output = s.buf[s.start :]
    return trace


def baseline_decode(
    mode: str,
    draft: LanguageModel | None,
    target: LanguageModel,
    prompt: Context,
    max_tokens: int,
    depth: int = 5,
    template: TreeShape | None = None,
    eos_token: int | None = None,
) -> DecodeTrace:
    """Vanilla autoregressive decoding or static-shape speculation."""
    if mode not in ("vanilla_ar", "sd_chain", "sd_tree"):
        raise ValueError(f"unknown baseline mode {mode!r}")
    if mode == "sd_chain":
        if depth < 1:
            raise ValueError("sd_chain depth must be >= 1")
        shape = chain_template(depth)
    elif mode == "sd_tree":
        shape = template if template is not None else initial_tree()
    else:
        shape = TreeShape((), ())
    if shape.node_count and draft is None:
        raise ValueError(f"{mode} needs a draft model")
    s = _Session(prompt, max_tokens, eos_token)
    trace = DecodeTrace(mode, tuple(prompt.prefix))
    step = 0
    while not s.done:
        ctx = s.context()
        pos = s.produced
        tree = fill_template(draft, ctx, shape) if shape.node_count else DraftTree(0)
        res = verify(target, ctx, tree)
        committed = s.commit(res.committed)
        trace.records.append(
            _record(
                step, pos, res, tree, committed,
                alpha_used=None, depth_used=shape.depth, width_used=shape.root_width,
                effective_d_max=None, entropy=None,
            )
        )
        step += 1
    trace.output = s.buf[s.start :]
    return trace


def decode(
    mode: str,
    draft: LanguageModel,
    target: LanguageModel,
    prompt: Context,
    max_tokens: int,
    cfg: AdaptiveConfig | None = None,
    chain_depth: int = 5,
    template: TreeShape | None = None,
) -> DecodeTrace:
    """Dispatch on ``mode`` (one of ``MODES``)."""
    cfg = cfg or AdaptiveConfig()
    if mode == "sage":
        return sage_decode(draft, target, prompt, max_tokens, cfg, template)
    return baseline_decode(mode, draft, target, prompt, max_tokens, chain_depth, template, cfg.eos_token)
