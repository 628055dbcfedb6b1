"""Closed forms for the acceptance/cost analysis and the oracles that audit them.

Each closed form sits next to an independent check: bisection over the
simplex for the confidence/top-probability bound, adversarial draft/target
pairs for the acceptance threshold, exhaustive enumeration and Monte Carlo
for the expected acceptance length, and grid enumeration for the optimal
depth and width. Where a bound fails, the report says so.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .kernels import leading_successes, min_p1_for_entropy
from .models import tv_distance

GUARANTEED = "guaranteed"
COUNTEREXAMPLE = "counterexample"
NOT_GUARANTEED = "not_guaranteed"
REPORT_SCHEMA = 1


class InfeasibleTargetError(ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    """Per-node draft cost and per-round target cost.

    ``c_d = 0`` is allowed (free drafting); both zero is rejected.
    """

    c_d: float = 0.05
    c_t: float = 1.0

    def __post_init__(self):
        if self.c_d < 0 or self.c_t < 0:
            raise ValueError("costs must be non-negative")
        if self.c_d == 0 and self.c_t == 0:
            raise ValueError("c_d and c_t cannot both be zero")

    def scaled(self, lam: float) -> "CostModel":
        return CostModel(self.c_d * lam, self.c_t * lam)


@dataclass(frozen=True)
class AcceptanceModel:
    """Depth-decaying acceptance ``p * gamma**(l-1)`` and width-decaying ``q1 / i**beta``."""

    p: float
    gamma: float = 1.0
    beta: float = 0.0
    q1: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0.0 < self.q1 <= 1.0:
            raise ValueError("q1 must lie in (0, 1]")

    def depth_probs(self, depth: int) -> np.ndarray:
        return self.p * self.gamma ** np.arange(depth, dtype=np.float64)


# -- confidence vs. top probability ---------------------------------------


def _check_alpha(alpha, k):
    if k < 2:
        raise ValueError("k must be >= 2")
    if not (0.0 <= alpha <= 1.0):
        raise InfeasibleTargetError(f"alpha={alpha} gives no feasible entropy target")


def p1_lower_bound(alpha, k: int):
    _check_alpha(alpha, k)
    return Fraction(1, k) + alpha * Fraction(k - 1, k) if isinstance(alpha, Fraction) else 1.0 / k + alpha * (k - 1) / k


def entropy_of(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def alpha_of(p) -> float:
    """Confidence of an already-normalized k-distribution."""
    p = np.asarray(p, dtype=np.float64)
    return 1.0 - entropy_of(p) / math.log(p.size)


def min_p1_given_alpha(alpha: float, k: int) -> float:
    """Smallest top probability over k-distributions with entropy ``(1-alpha) log k``.

    For fixed p1 the least entropy sits on ``(p1, ..., p1, r, 0, ...)``,
    and that envelope falls as p1 grows, so bisection on p1 finds the
    constrained minimum.
    """
    _check_alpha(alpha, k)
    target = (1.0 - alpha) * math.log(k)
    return float(min_p1_for_entropy(np.array([target]), k)[0])


def min_p1_batch(alphas, k: int) -> np.ndarray:
    a = np.asarray(alphas, dtype=np.float64)
    if np.any((a < 0) | (a > 1)) or np.any(np.isnan(a)):
        raise InfeasibleTargetError("alphas must lie in [0, 1]")
    return min_p1_for_entropy((1.0 - a) * math.log(k), k)


def envelope_distribution(p1: float, k: int) -> np.ndarray:
    """The least-entropy descending k-distribution with top probability ``p1``."""
    if not 1.0 / k - 1e-15 <= p1 <= 1.0:
        raise ValueError("p1 must lie in [1/k, 1]")
    m = min(int(math.floor(1.0 / p1 + 1e-12)), k)
    out = np.zeros(k)
    out[:m] = p1
    if m < k:
        out[m] = max(0.0, 1.0 - m * p1)
    return out / out.sum()


def max_p1_given_alpha(alpha: float, k: int, iters: int = 200) -> float:
    """Largest top probability at the given confidence (uniform tail)."""
    _check_alpha(alpha, k)
    target = (1.0 - alpha) * math.log(k)
    lo, hi = 1.0 / k, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        tail = (1.0 - mid) / (k - 1)
        h = -mid * math.log(mid) - (k - 1) * (tail * math.log(tail) if tail > 0 else 0.0)
        if h > target:
            lo = mid
        else:
            hi = mid
    return lo


def uniform_tail_distribution(p1: float, k: int) -> np.ndarray:
    out = np.full(k, (1.0 - p1) / (k - 1))
    out[0] = p1
    return out


# -- acceptance threshold -------------------------------------------------


def acceptance_threshold(k: int, epsilon):
    """Confidence above which greedy acceptance is guaranteed under TV <= epsilon.

    Plain arithmetic, so ``Fraction`` inputs give exact results.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if not 0 <= epsilon <= Fraction(1, 4):
        raise ValueError("epsilon must lie in [0, 0.25]")
    return (k - 2 + 4 * epsilon * k) / (2 * (k - 1))


@dataclass
class AdversarialResult:
    status: str
    k: int
    epsilon: float
    alpha: float
    threshold: float
    above_threshold: bool
    violates_theorem: bool
    draft: list[float] | None = None
    target: list[float] | None = None
    tv: float | None = None
    candidates: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _worst_target(draft: np.ndarray, epsilon: float) -> np.ndarray:
    # move epsilon mass from the argmax (index 0) to the runner-up (index 1)
    t = draft.copy()
    d = min(epsilon, t[0])
    t[0] -= d
    t[1] += d
    return t


def adversarial_acceptance_search(k: int, epsilon: float, alpha: float) -> AdversarialResult:
    """Look for a draft/target pair within TV ``epsilon`` whose argmaxes differ.

    Candidate drafts are the extreme k-distributions at confidence ``alpha``
    (least and largest top probability); each is paired with the target
    that moves ``epsilon`` mass from the draft argmax to the runner-up,
    which closes the top-two gap by ``2 * epsilon``. Ties go to the lower
    token id, so a flip needs the runner-up to end strictly ahead.
    """
    thr = float(acceptance_threshold(k, epsilon))
    above = alpha > thr
    drafts = [
        ("least_top_probability", envelope_distribution(min_p1_given_alpha(alpha, k), k)),
        ("uniform_tail", uniform_tail_distribution(max_p1_given_alpha(alpha, k), k)),
    ]
    found = None
    cands = []
    for name, q in drafts:
        t = _worst_target(q, epsilon)
        tv = tv_distance(q, t)
        flips = int(np.argmax(t)) != int(np.argmax(q))
        cands.append({"draft_kind": name, "p1": float(q[0]), "p2": float(q[1]), "tv": tv, "flips": flips})
        if flips and found is None and tv <= epsilon + 1e-12:
            found = (q, t, tv)
    if found is None:
        return AdversarialResult(GUARANTEED, k, epsilon, alpha, thr, above, False, candidates=cands)
    q, t, tv = found
    return AdversarialResult(
        COUNTEREXAMPLE, k, epsilon, alpha, thr, above, above,
        draft=q.tolist(), target=t.tolist(), tv=tv, candidates=cands,
    )


def multi_step_acceptance(alphas, k: int, epsilon) -> str:
    alphas = list(alphas)
    if not alphas:
        raise ValueError("need at least one step")
    thr = acceptance_threshold(k, epsilon)
    return GUARANTEED if all(a > thr for a in alphas) else NOT_GUARANTEED


# -- expected acceptance length --------------------------------------------


def expected_tau_closed_form(model: AcceptanceModel, depth: int) -> float:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return float(sum(model.p**l * model.gamma ** (l * (l - 1) / 2) for l in range(1, depth + 1)))


def expected_tau_telescoped(probs) -> float:
    return float(np.cumprod(np.asarray(probs, dtype=np.float64)).sum())


def expected_tau_enumeration(probs) -> float:
    """Sum of ``l * P(tau = l)`` over every accept/reject outcome vector."""
    probs = [float(x) for x in probs]
    if len(probs) > 16:
        raise ValueError("enumeration limited to depth 16")
    total = 0.0
    for outcome in itertools.product((True, False), repeat=len(probs)):
        w = 1.0
        for ok, q in zip(outcome, probs):
            w *= q if ok else 1.0 - q
        tau = 0
        while tau < len(outcome) and outcome[tau]:
            tau += 1
        total += tau * w
    return total


def _mc_chunk(args):
    ss, m, probs = args
    rng = np.random.default_rng(ss)
    c = leading_successes(rng.random((m, probs.shape[0])), probs)
    return int(c.sum()), int((c * c).sum())


def expected_tau_monte_carlo(
    model: AcceptanceModel, depth: int, trials: int, seed=0, chunk: int = 1 << 17, workers: int = 1
) -> tuple[float, float]:
    """Mean and standard error (ddof=1) of simulated acceptance lengths.

    Trials are cut into fixed chunks with spawned seeds, so the result does
    not depend on ``workers``. Sums are kept as integers; a single trial
    reports a standard error of 0.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    probs = model.depth_probs(depth)
    n_chunks = -(-trials // chunk)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seqs = root.spawn(n_chunks)
    jobs = [(ss, min(chunk, trials - i * chunk), probs) for i, ss in enumerate(seqs)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(_mc_chunk, jobs))
    else:
        parts = [_mc_chunk(j) for j in jobs]
    s = sum(a for a, _ in parts)
    ss2 = sum(b for _, b in parts)
    n = trials
    mean = s / n
    if n == 1:
        return mean, 0.0
    var = Fraction(n * ss2 - s * s, n * (n - 1))
    return mean, math.sqrt(float(var) / n)


# -- speedup, depth and width ------------------------------------------------


def speedup(e_tau: float, tree_size: int, cost: CostModel) -> float:
    if tree_size < 0:
        raise ValueError("tree_size must be >= 0")
    denom = cost.c_d * tree_size + cost.c_t
    if denom <= 0:
        raise ZeroDivisionError("zero cost per round")
    return (e_tau + 1.0) / denom


@dataclass(frozen=True)
class DepthCandidates:
    """``floor(x - 1)`` and ``floor(x)`` for ``x = log(c_t/c_d) / log(1/p)``; ``None`` means unbounded."""

    d_lower: int | None
    d_upper: int | None

    @property
    def unbounded(self) -> bool:
        return self.d_lower is None


def optimal_depth_closed_form(p: float, cost: CostModel) -> DepthCandidates:
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0, 1]")
    if p == 1.0 or cost.c_d == 0:
        return DepthCandidates(None, None)
    if not cost.c_t > cost.c_d:
        raise ValueError("need c_t > c_d")
    x = math.log(cost.c_t / cost.c_d) / math.log(1.0 / p)
    return DepthCandidates(max(1, math.floor(x - 1.0)), max(1, math.floor(x)))


def depth_speedup_curve(p: float, gamma: float, cost: CostModel, d_max_search: int) -> np.ndarray:
    """``S(D)`` for D = 1..d_max_search under a chain of D nodes."""
    if d_max_search < 1:
        raise ValueError("d_max_search must be >= 1")
    m = AcceptanceModel(p, gamma)
    return np.array([speedup(expected_tau_closed_form(m, d), d, cost) for d in range(1, d_max_search + 1)])


def optimal_depth_brute_force(p: float, gamma: float, cost: CostModel, d_max_search: int) -> int:
    s = depth_speedup_curve(p, gamma, cost, d_max_search)
    return int(np.argmax(s)) + 1


def width_speedup_curve(q1: float, beta: float, cost: CostModel, w_max_search: int) -> np.ndarray:
    if w_max_search < 1:
        raise ValueError("w_max_search must be >= 1")
    w = np.arange(1, w_max_search + 1, dtype=np.float64)
    acc = np.minimum(1.0, np.cumsum(q1 / w**beta))
    return (acc + 1.0) / (cost.c_d * w + cost.c_t)


def optimal_width_brute_force(q1: float, beta: float, cost: CostModel, w_max_search: int) -> int:
    return int(np.argmax(width_speedup_curve(q1, beta, cost, w_max_search))) + 1


# -- report ---------------------------------------------------------------------

CONFIDENCE_KS = (2, 3, 5, 10)
ALPHA_GRID = tuple(round(0.05 * i, 2) for i in range(21))
TAU_GRID = [(p, g, d) for p in (0.2, 0.5, 0.8) for g in (0.5, 0.9, 1.0) for d in (1, 4, 8)]
DEPTH_GRID = [(p, r) for p in (0.3, 0.5, 0.8) for r in (4, 16, 64)]
Q1_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


def confidence_bound_section(ks=CONFIDENCE_KS, alphas=ALPHA_GRID, tol: float = 1e-9) -> dict:
    rows = []
    for k in ks:
        mins = min_p1_batch(alphas, k)
        for a, m in zip(alphas, mins):
            b = p1_lower_bound(a, k)
            rows.append({"k": k, "alpha": a, "bound": b, "min_p1": float(m),
                         "max_p1": max_p1_given_alpha(a, k), "violated": bool(m < b - tol)})
    endpoints = [
        {"k": k, "alpha0_min_p1": float(min_p1_batch([0.0], k)[0]),
         "alpha1_min_p1": float(min_p1_batch([1.0], k)[0]), "expected": [1.0 / k, 1.0]}
        for k in ks
    ]
    tight = all(abs(e["alpha0_min_p1"] - 1.0 / e["k"]) <= 1e-6 and abs(e["alpha1_min_p1"] - 1.0) <= 1e-6
                for e in endpoints)
    witness = np.array([0.5, 0.5, 0.0])
    a3 = alpha_of(witness)
    finding = {
        "k": 3, "distribution": witness.tolist(), "alpha": a3, "p1": 0.5,
        "bound": p1_lower_bound(a3, 3), "oracle_min_p1": min_p1_given_alpha(a3, 3),
    }
    finding["violated"] = bool(finding["p1"] < finding["bound"])
    violations = [r for r in rows if r["violated"]]
    return {
        "grid": rows,
        "endpoints": endpoints,
        "tight_at_endpoints": tight,
        "findings": [finding] + [{"k": r["k"], "alpha": r["alpha"], "oracle_min_p1": r["min_p1"],
                                  "bound": r["bound"]} for r in violations],
        "violation_count": len(violations),
        "verdict": "bound_violated" if violations or finding["violated"] else "bound_holds",
    }


def acceptance_threshold_section() -> dict:
    exact = acceptance_threshold(10, Fraction(1, 20))
    cases = [(10, 0.05, a) for a in (0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0)]
    cases += [(3, 0.05, a) for a in (0.37, 0.6, 0.9)] + [(10, 0.0, 1.0), (2, 0.1, 0.9)]
    adv = [adversarial_acceptance_search(k, e, a).to_dict() for k, e, a in cases]
    return {
        "k": 10, "epsilon": 0.05, "value": float(exact), "exact": str(exact),
        "rounded_2dp": round(float(exact), 2),
        "adversarial": adv,
        "theorem_violations": sum(r["violates_theorem"] for r in adv),
        "verdict": "counterexamples_found" if any(r["violates_theorem"] for r in adv) else "no_counterexample",
    }


def multi_step_section() -> list[dict]:
    cases = [([1.0] * 4, 10, 0.0), ([0.6] * 4, 10, 0.05), ([0.6, 0.5, 0.7], 10, 0.05)]
    return [{"alphas": a, "k": k, "epsilon": e, "result": multi_step_acceptance(a, k, e)} for a, k, e in cases]


def expected_length_section(trials: int, seed: int, workers: int = 1) -> dict:
    ss = np.random.SeedSequence(seed).spawn(len(TAU_GRID))
    rows = []
    for (p, g, d), s in zip(TAU_GRID, ss):
        m = AcceptanceModel(p, g)
        cf = expected_tau_closed_form(m, d)
        mean, se = expected_tau_monte_carlo(m, d, trials, s, workers=workers)
        rows.append({"p": p, "gamma": g, "depth": d, "closed_form": cf, "mc_mean": mean, "mc_std_error": se,
                     "delta": mean - cf, "within_3se": bool(abs(mean - cf) <= 3.0 * se)})
    enum = []
    for p, g in [(0.2, 0.5), (0.5, 1.0), (0.8, 0.9), (0.9, 0.7)]:
        for d in range(1, 7):
            m = AcceptanceModel(p, g)
            probs = m.depth_probs(d)
            cf, en, tel = expected_tau_closed_form(m, d), expected_tau_enumeration(probs), expected_tau_telescoped(probs)
            enum.append({"p": p, "gamma": g, "depth": d, "closed_form": cf, "enumerated": en, "telescoped": tel,
                         "max_abs_error": max(abs(cf - en), abs(cf - tel))})
    ok = all(r["within_3se"] for r in rows) and all(r["max_abs_error"] <= 1e-12 for r in enum)
    return {"trials": trials, "grid": rows, "enumeration": enum, "verdict": "pass" if ok else "fail"}


def optimal_depth_section(gamma: float = 1.0, d_max_search: int = 64) -> dict:
    rows = []
    for p, r in DEPTH_GRID:
        cost = CostModel(1.0 / r, 1.0)
        curve = depth_speedup_curve(p, gamma, cost, d_max_search)
        c = optimal_depth_closed_form(p, cost)
        db = int(np.argmax(curve)) + 1
        s_lower, s_app = curve[c.d_lower - 1], curve[c.d_upper - 1]
        rows.append({
            "p": p, "cost_ratio": r, "c_d": cost.c_d, "c_t": cost.c_t,
            "d_brute": db, "d_lower": c.d_lower, "d_upper": c.d_upper,
            "s_brute": float(curve[db - 1]), "s_lower": float(s_lower), "s_upper": float(s_app),
            "lower_matches": c.d_lower == db, "upper_matches": c.d_upper == db,
            "maximizer_ok": bool(curve[db - 1] >= s_lower and curve[db - 1] >= s_app),
        })
    return {
        "gamma": gamma, "d_max_search": d_max_search, "grid": rows,
        "lower_agreement": sum(r["lower_matches"] for r in rows),
        "upper_agreement": sum(r["upper_matches"] for r in rows),
        "points": len(rows),
        "verdict": "pass" if all(r["maximizer_ok"] for r in rows) else "fail",
    }


def optimal_width_section(beta: float = 0.7, cost: CostModel = CostModel(0.05, 1.0), w_max_search: int = 200) -> dict:
    ws = [optimal_width_brute_force(q, beta, cost, w_max_search) for q in Q1_GRID]
    deviations = [
        {"q1_from": Q1_GRID[i], "w_from": ws[i], "q1_to": Q1_GRID[i + 1], "w_to": ws[i + 1]}
        for i in range(len(ws) - 1) if ws[i + 1] > ws[i]
    ]
    return {
        "beta": beta, "c_d": cost.c_d, "c_t": cost.c_t, "w_max_search": w_max_search,
        "q1": list(Q1_GRID), "w_star": ws,
        "non_increasing": not deviations,
        "deviations": deviations,
        "w_star_q1_1": optimal_width_brute_force(1.0, beta, cost, w_max_search),
        "w_star_q1_1e-6": optimal_width_brute_force(1e-6, beta, cost, w_max_search),
        "w09_le_w03": ws[Q1_GRID.index(0.9)] <= ws[Q1_GRID.index(0.3)],
        "verdict": "trend_holds" if not deviations else "deviations_recorded",
    }


def theory_report(seed: int = 0, trials: int = 10**6, workers: int = 1) -> dict:
    """Every check on the default grids, as a JSON-ready dict."""
    return {
        "schema": REPORT_SCHEMA,
        "seed": seed,
        "confidence_probability_bound": confidence_bound_section(),
        "acceptance_threshold": acceptance_threshold_section(),
        "multi_step_acceptance": multi_step_section(),
        "expected_acceptance_length": expected_length_section(trials, seed, workers),
        "optimal_depth": optimal_depth_section(),
        "optimal_width": optimal_width_section(),
    }
