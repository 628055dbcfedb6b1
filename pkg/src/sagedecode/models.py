"""Language-model interface and the synthetic draft/target model zoo.

Every model is a pure function of its construction parameters and the
context it is queried with. Randomness comes from a counter-mode hash of
``(seed, stream, context features)``, so models hold no mutable RNG state
and can be shared between workers.

Three families are provided:

* ``coupled_pair`` - seeded random target distributions and a draft that
  moves at most ``epsilon`` total mass, so the draft/target total variation
  distance is bounded by ``epsilon``.
* ``entropy_schedule`` - draft entropy follows a mean-reverting AR(1)
  schedule over positions; the target's greedy token is drawn from the
  draft distribution, so draft confidence is calibrated.
* ``ngram_corpus`` - additively smoothed n-gram models of two orders
  trained on a whitespace-tokenized text corpus.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import kernels

MASK64 = (1 << 64) - 1
DEFAULT_MAX_CONTEXT = 1 << 30

_STREAM_TARGET = 1
_STREAM_ALT = 2
_STREAM_TOP = 3
_STREAM_PICK = 4

MODEL_KINDS = ("coupled_pair", "entropy_schedule", "ngram_corpus")


class ConfigError(ValueError):
    """Invalid model or decoder configuration."""


class ContextOverflowError(ValueError):
    """Context is longer than the model's declared maximum."""


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix64(*values: int) -> int:
    """Fold integers (negative allowed) into one well-mixed 64-bit key."""
    h = 0x243F6A8885A308D3
    for v in values:
        h = _splitmix64(h ^ (v & MASK64))
    return h


class Context:
    """Committed prefix plus opaque prompt conditioning (the visual stand-in).

    Immutable view. ``extend`` shares the committed buffer and copies only
    the speculative suffix, so long decodes stay linear.
    """

    __slots__ = ("_base", "_base_len", "_suffix", "prompt_state")

    def __init__(self, prefix: Iterable[int] = (), prompt_state: int = 0):
        self._base = tuple(int(t) for t in prefix)
        self._base_len = len(self._base)
        self._suffix: tuple[int, ...] = ()
        self.prompt_state = int(prompt_state)

    @classmethod
    def view(cls, buffer: Sequence[int], length: int, prompt_state: int = 0) -> "Context":
        """Context over ``buffer[:length]``; the buffer may only grow afterwards."""
        ctx = cls.__new__(cls)
        ctx._base = buffer
        ctx._base_len = length
        ctx._suffix = ()
        ctx.prompt_state = int(prompt_state)
        return ctx

    @property
    def prefix(self) -> tuple[int, ...]:
        return tuple(self._base[: self._base_len]) + self._suffix

    def __len__(self) -> int:
        return self._base_len + len(self._suffix)

    def tail(self, n: int) -> tuple[int, ...]:
        """The last ``n`` tokens (fewer if the context is shorter)."""
        if n <= 0:
            return ()
        s = self._suffix
        if len(s) >= n:
            return s[len(s) - n :]
        need = n - len(s)
        lo = max(0, self._base_len - need)
        return tuple(self._base[lo : self._base_len]) + s

    def extend(self, tokens: Iterable[int]) -> "Context":
        ctx = Context.__new__(Context)
        ctx._base = self._base
        ctx._base_len = self._base_len
        ctx._suffix = self._suffix + tuple(int(t) for t in tokens)
        ctx.prompt_state = self.prompt_state
        return ctx

    def __eq__(self, other):
        if not isinstance(other, Context):
            return NotImplemented
        return self.prompt_state == other.prompt_state and self.prefix == other.prefix

    def __hash__(self):
        return hash((self.prompt_state, self.prefix))

    def __repr__(self):
        return f"Context(prefix={self.prefix!r}, prompt_state={self.prompt_state})"


class LanguageModel:
    """Next-token distribution over a vocabulary of ``vocab_size`` ids.

    Subclasses implement ``_probs(ctx)``; ``forward`` adds the overflow check.
    Returned arrays are read-only and may be shared between calls.
    """

    vocab_size: int
    max_context: int = DEFAULT_MAX_CONTEXT
    name: str = "model"

    def forward(self, ctx: Context) -> np.ndarray:
        if len(ctx) > self.max_context:
            raise ContextOverflowError(
                f"{self.name}: context length {len(ctx)} exceeds maximum {self.max_context}"
            )
        return self._probs(ctx)

    __call__ = forward

    def _probs(self, ctx: Context) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def _check_tokens(self, tokens: Sequence[int]) -> None:
        for t in tokens:
            if not 0 <= t < self.vocab_size:
                raise ValueError(f"{self.name}: token {t} outside vocabulary of size {self.vocab_size}")


def model_forward(model: LanguageModel, ctx: Context) -> np.ndarray:
    return model.forward(ctx)


def _frozen(p: np.ndarray) -> np.ndarray:
    p.setflags(write=False)
    return p


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance, half the L1 distance."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"size mismatch: {p.shape} vs {q.shape}")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def shift_mass(target: np.ndarray, alt: int, epsilon: float) -> np.ndarray:
    """Move up to ``epsilon`` mass onto ``alt``, draining the largest entries first.

    The moved amount is ``min(epsilon, 1 - target[alt])``, which is also the
    resulting total variation distance.
    """
    draft = np.array(target, dtype=np.float64)
    order = np.lexsort((np.arange(draft.size), -draft))
    remaining = float(epsilon)
    for i in order:
        if remaining <= 0.0:
            break
        if i == alt:
            continue
        take = min(draft[i], remaining)
        draft[i] -= take
        draft[alt] += take
        remaining -= take
    return draft


# ---------------------------------------------------------------- coupled pair


class _CoupledCore:
    def __init__(self, vocab_size, epsilon, seed, sharpness, order):
        self.vocab_size = vocab_size
        self.epsilon = epsilon
        self.seed = seed
        self.sharpness = sharpness
        self.order = order
        self.target_cached = lru_cache(maxsize=1 << 16)(self._target)
        self.draft_cached = lru_cache(maxsize=1 << 16)(self._draft)

    def key(self, ctx: Context) -> tuple:
        tail = ctx.tail(self.order)
        pad = (-1,) * (self.order - len(tail))
        return (ctx.prompt_state, len(ctx)) + pad + tail

    def _target(self, key: tuple) -> np.ndarray:
        u = kernels.hash_uniforms(mix64(self.seed, _STREAM_TARGET, *key), self.vocab_size)
        w = (-np.log(u)) ** self.sharpness
        return _frozen(w / w.sum())

    def _draft(self, key: tuple) -> np.ndarray:
        target = self.target_cached(key)
        if self.epsilon == 0.0:
            return target
        top = int(np.argmax(target))
        r = kernels.hash_uniforms(mix64(self.seed, _STREAM_ALT, *key), 1)[0]
        alt = int(r * (self.vocab_size - 1))
        if alt >= top:
            alt += 1
        return _frozen(shift_mass(target, alt, self.epsilon))


class CoupledModel(LanguageModel):
    def __init__(self, core: _CoupledCore, role: str, max_context: int):
        self.core = core
        self.role = role
        self.vocab_size = core.vocab_size
        self.max_context = max_context
        self.name = f"coupled_{role}"

    def _probs(self, ctx):
        key = self.core.key(ctx)
        if self.role == "target":
            return self.core.target_cached(key)
        return self.core.draft_cached(key)


# ------------------------------------------------------------ entropy schedule


def ar1_entropy_schedule(
    length: int,
    regimes: Sequence[tuple[int, float]],
    ar_coef: float,
    noise_std: float,
    seed: int,
    max_entropy: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-position entropies and regime labels.

    Regime means cycle through ``regimes`` (block length, mean entropy in
    nats); a stationary AR(1) deviation with standard deviation
    ``noise_std`` is added and the result clipped to ``[0, max_entropy]``.
    """
    lengths = np.array([int(r[0]) for r in regimes])
    means = np.array([float(r[1]) for r in regimes])
    pos = np.arange(length) % lengths.sum()
    labels = np.searchsorted(np.cumsum(lengths), pos, side="right")
    rng = np.random.default_rng([seed & MASK64, 0xE7])
    xi = rng.standard_normal(length)
    dev = np.empty(length)
    innov = noise_std * math.sqrt(max(0.0, 1.0 - ar_coef**2))
    if length:
        dev[0] = noise_std * xi[0]
    for t in range(1, length):
        dev[t] = ar_coef * dev[t - 1] + innov * xi[t]
    h = np.clip(means[labels] + dev, 0.0, max_entropy)
    return h, labels


class _ScheduleCore:
    def __init__(self, vocab_size, seed, entropies, labels, target_mix):
        self.vocab_size = vocab_size
        self.seed = seed
        self.entropies = entropies
        self.labels = labels
        self.target_mix = target_mix
        self.weights = kernels.mix_weight_for_entropy(entropies, vocab_size)
        self.draft_cached = lru_cache(maxsize=1 << 16)(self._draft)
        self.target_cached = lru_cache(maxsize=1 << 16)(self._target)

    def key(self, ctx: Context) -> tuple:
        last = ctx.tail(1)
        return (ctx.prompt_state, len(ctx), last[0] if last else -1)

    def _draft(self, key):
        t = key[1]
        w = float(self.weights[t])
        v = self.vocab_size
        top = mix64(self.seed, _STREAM_TOP, *key) % v
        p = np.full(v, w / v)
        p[top] = 1.0 - w + w / v
        return _frozen(p)

    def _target(self, key):
        draft = self.draft_cached(key)
        r = kernels.hash_uniforms(mix64(self.seed, _STREAM_PICK, *key), 1)[0]
        pick = int(np.searchsorted(np.cumsum(draft), r, side="right"))
        pick = min(pick, self.vocab_size - 1)
        p = (1.0 - self.target_mix) * draft
        p[pick] += self.target_mix
        return _frozen(p)


class ScheduleModel(LanguageModel):
    def __init__(self, core: _ScheduleCore, role: str):
        self.core = core
        self.role = role
        self.vocab_size = core.vocab_size
        self.max_context = len(core.entropies) - 1
        self.name = f"schedule_{role}"

    def _probs(self, ctx):
        key = self.core.key(ctx)
        if self.role == "target":
            return self.core.target_cached(key)
        return self.core.draft_cached(key)

    def scheduled_entropy(self, position: int) -> float:
        return float(self.core.entropies[position])


# -------------------------------------------------------------------- n-grams


def tokenize(text: str) -> list[str]:
    return text.split()


@dataclass
class Vocab:
    """Token <-> id table, ids in order of first appearance."""

    tokens: list[str]
    ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self.ids) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def from_tokens(cls, stream: Iterable[str]) -> "Vocab":
        return cls(list(dict.fromkeys(stream)))

    def encode(self, stream: Iterable[str]) -> list[int]:
        return [self.ids[t] for t in stream]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def __len__(self):
        return len(self.tokens)

    def to_json(self) -> str:
        return json.dumps({"schema": 1, "tokens": self.tokens}, ensure_ascii=False, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Vocab":
        return cls(list(json.loads(text)["tokens"]))


class NGramModel(LanguageModel):
    """Additively smoothed n-gram model; ``order`` counts the predicted token."""

    def __init__(self, order: int, vocab_size: int, counts: dict, smoothing: float):
        self.order = order
        self.vocab_size = vocab_size
        self.counts = counts
        self.smoothing = smoothing
        self.name = f"ngram{order}"
        self._cached = lru_cache(maxsize=1 << 16)(self._dist)

    def _dist(self, key: tuple) -> np.ndarray:
        c = self.counts.get(key)
        v = self.vocab_size
        if c is None:
            return _frozen(np.full(v, 1.0 / v))
        c = c + self.smoothing
        total = c.sum()
        if total <= 0:
            return _frozen(np.full(v, 1.0 / v))
        return _frozen(c / total)

    def _probs(self, ctx):
        n = self.order - 1
        key = ctx.tail(n)
        if len(key) < n:
            key = None
        self._check_tokens(key or ())
        return self._cached(key)

    def __eq__(self, other):
        if not isinstance(other, NGramModel):
            return NotImplemented
        return (
            self.order == other.order
            and self.vocab_size == other.vocab_size
            and self.smoothing == other.smoothing
            and self.counts.keys() == other.counts.keys()
            and all(np.array_equal(self.counts[k], other.counts[k]) for k in self.counts)
        )

    __hash__ = None


def ngram_train(
    corpus: Sequence[int], order: int, vocab_size: int | None = None, smoothing: float = 1.0
) -> NGramModel:
    """Count ``order``-grams of an id stream.

    ``smoothing`` is the additive constant (1 = add-one); ``vocab_size``
    defaults to ``max(corpus) + 1``.
    """
    corpus = [int(t) for t in corpus]
    if not corpus:
        raise ValueError("empty corpus")
    if order < 1:
        raise ValueError("order must be >= 1")
    if len(corpus) < order:
        raise ValueError(f"corpus of length {len(corpus)} is shorter than order {order}")
    if vocab_size is None:
        vocab_size = max(corpus) + 1
    if min(corpus) < 0 or max(corpus) >= vocab_size:
        raise ValueError("corpus token outside vocabulary")
    grams = Counter(tuple(corpus[i : i + order]) for i in range(len(corpus) - order + 1))
    counts: dict[tuple, np.ndarray] = {}
    for gram in sorted(grams):
        ctx = gram[:-1]
        if ctx not in counts:
            counts[ctx] = np.zeros(vocab_size)
        counts[ctx][gram[-1]] += grams[gram]
    return NGramModel(order, vocab_size, counts, float(smoothing))


def default_corpus_path() -> Path:
    return Path(str(resources.files("sagedecode") / "data" / "corpus.txt"))


# ------------------------------------------------------------------ ModelSpec


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of a draft/target pair."""

    kind: str
    vocab_size: int = 32
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.kind != "ngram_corpus" and int(self.vocab_size) < 2:
            raise ConfigError("vocab_size must be >= 2")
        p = self.params
        if self.kind == "coupled_pair":
            eps = float(p.get("epsilon", 0.05))
            if not 0.0 <= eps <= 1.0:
                raise ConfigError(f"epsilon must lie in [0, 1], got {eps}")
        elif self.kind == "entropy_schedule":
            phi = float(p.get("ar_coef", 0.8))
            if not -1.0 < phi < 1.0:
                raise ConfigError(f"ar_coef must lie in (-1, 1), got {phi}")
            if not p.get("regimes", [[1, 1.0]]):
                raise ConfigError("entropy_schedule needs at least one regime")
        else:
            nd, nt = int(p.get("n_draft", 2)), int(p.get("n_target", 3))
            if not 1 <= nd < nt:
                raise ConfigError(f"need 1 <= n_draft < n_target, got {nd}, {nt}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        try:
            kind = d.pop("kind")
        except KeyError:
            raise ConfigError("model spec needs a 'kind'") from None
        vocab_size = int(d.pop("vocab_size", 32))
        seed = int(d.pop("seed", 0))
        params = dict(d.pop("params", {}))
        params.update(d)
        return cls(kind, vocab_size, seed, params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "vocab_size": self.vocab_size, "seed": self.seed, "params": dict(self.params)}

    @classmethod
    def load(cls, path) -> "ModelSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load model spec {path}: {exc}") from exc


def make_coupled_pair(spec: ModelSpec) -> tuple[CoupledModel, CoupledModel]:
    if spec.kind != "coupled_pair":
        raise ConfigError(f"expected a coupled_pair spec, got {spec.kind}")
    p = spec.params
    eps = float(p.get("epsilon", 0.05))
    if not 0.0 <= eps <= 1.0:
        raise ConfigError(f"epsilon must lie in [0, 1], got {eps}")
    core = _CoupledCore(
        int(spec.vocab_size), eps, int(spec.seed), float(p.get("sharpness", 3.0)), int(p.get("order", 2))
    )
    max_ctx = int(p.get("max_context", DEFAULT_MAX_CONTEXT))
    return CoupledModel(core, "draft", max_ctx), CoupledModel(core, "target", max_ctx)


def make_schedule_pair(spec: ModelSpec) -> tuple[ScheduleModel, ScheduleModel]:
    if spec.kind != "entropy_schedule":
        raise ConfigError(f"expected an entropy_schedule spec, got {spec.kind}")
    p = spec.params
    v = int(spec.vocab_size)
    horizon = int(p.get("horizon", 4096))
    # relative_entropy: regime means are fractions of log V
    scale = math.log(v) if p.get("relative_entropy", False) else 1.0
    regimes = [(int(a), float(b) * scale) for a, b in p.get("regimes", [[1 << 30, 1.0]])]
    h, labels = ar1_entropy_schedule(
        horizon + 1,
        regimes,
        float(p.get("ar_coef", 0.8)),
        float(p.get("noise_std", 0.0)),
        int(spec.seed),
        math.log(v),
    )
    core = _ScheduleCore(v, int(spec.seed), h, labels, float(p.get("target_mix", 0.5)))
    return ScheduleModel(core, "draft"), ScheduleModel(core, "target")


def load_corpus(path=None) -> tuple[Vocab, list[int]]:
    text = Path(path or default_corpus_path()).read_text(encoding="utf-8")
    stream = tokenize(text)
    if not stream:
        raise ValueError(f"empty corpus: {path}")
    vocab = Vocab.from_tokens(stream)
    return vocab, vocab.encode(stream)


def make_ngram_pair(spec: ModelSpec) -> tuple[NGramModel, NGramModel]:
    if spec.kind != "ngram_corpus":
        raise ConfigError(f"expected an ngram_corpus spec, got {spec.kind}")
    p = spec.params
    vocab, ids = load_corpus(p.get("corpus"))
    smoothing = float(p.get("smoothing", 1.0))
    draft = ngram_train(ids, int(p.get("n_draft", 2)), len(vocab), smoothing)
    target = ngram_train(ids, int(p.get("n_target", 3)), len(vocab), smoothing)
    return draft, target


def make_pair(spec: ModelSpec) -> tuple[LanguageModel, LanguageModel]:
    """Build ``(draft, target)`` for any model kind."""
    if spec.kind == "coupled_pair":
        return make_coupled_pair(spec)
    if spec.kind == "entropy_schedule":
        return make_schedule_pair(spec)
    return make_ngram_pair(spec)


def default_prompt(spec: ModelSpec) -> Context:
    """A deterministic prompt for the pair: corpus opening for n-grams, empty otherwise."""
    if spec.kind == "ngram_corpus":
        _, ids = load_corpus(spec.params.get("corpus"))
        n = max(1, int(spec.params.get("n_target", 3)) - 1)
        return Context(tuple(ids[:n]), int(spec.seed))
    return Context((), int(spec.seed))
