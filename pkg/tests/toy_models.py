"""Small hand-built models for unit tests."""

import numpy as np

from sagedecode.models import LanguageModel, mix64


class FixedModel(LanguageModel):
    """Same distribution for every context."""

    def __init__(self, probs, name="fixed"):
        self.p = np.asarray(probs, dtype=np.float64)
        self.p.setflags(write=False)
        self.vocab_size = self.p.size
        self.name = name

    def _probs(self, ctx):
        return self.p


class OneHotModel(LanguageModel):
    """Deterministic next token hashed from the full context."""

    def __init__(self, vocab_size, seed=0):
        self.vocab_size = vocab_size
        self.seed = seed
        self.name = "onehot"

    def _probs(self, ctx):
        p = np.zeros(self.vocab_size)
        p[mix64(self.seed, ctx.prompt_state, *ctx.prefix) % self.vocab_size] = 1.0
        return p


class CountingModel(LanguageModel):
    def __init__(self, inner):
        self.inner = inner
        self.vocab_size = inner.vocab_size
        self.calls = 0
        self.name = "counting"

    def _probs(self, ctx):
        self.calls += 1
        return self.inner.forward(ctx)
