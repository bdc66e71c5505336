"""Exact Bayesian preference optimization over finite hypothesis sets.

With finitely many candidate utility functions on a finite alternative
set, every quantity of interest — posterior weights, expected best-option
utility, expected improvement, and the one-step value of a query — is a
finite sum and can be computed without approximation.  This module is the
ground-truth engine used to check the optimality and approximation
guarantees of the best-option acquisition rule, and to reproduce the
four-point instance on which greedy expected improvement provably stalls.

Weights and utilities may be ``fractions.Fraction`` values; with the
constant-correct response likelihood all updates then stay exact, which is
how the stall instance reproduces its regret constant bit-for-bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

__all__ = [
    "SoftmaxLikelihood",
    "ConstantCorrectLikelihood",
    "FiniteHypothesisState",
    "TheoremReport",
    "Theorem4Result",
    "exact_update",
    "response_probs",
    "exact_posterior_mean",
    "exact_posterior_means",
    "exact_qeubo",
    "exact_qei",
    "exact_u",
    "exact_v",
    "lambert_w",
    "noise_gap_constant",
    "verify_theorem1",
    "verify_theorem2",
    "verify_lemma_a1",
    "verify_lemma_a2",
    "run_theorem4_instance",
    "random_state",
]

Number = Union[float, Fraction, int]

ARGMAX_TIE_TOL = 1e-9


@dataclass(frozen=True)
class SoftmaxLikelihood:
    """P(choice i) proportional to exp(u_i / lam); lam = 0 is noise-free."""

    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("noise level must be non-negative")

    @property
    def noise_free(self) -> bool:
        return self.lam == 0

    def probs(self, utilities: Sequence[Number]) -> list[Number]:
        if self.lam == 0:
            best = max(utilities)
            hits = [u == best for u in utilities]
            n_hits = sum(hits)
            unit = Fraction(1, n_hits) if _all_exact(utilities) else 1.0 / n_hits
            return [unit if h else 0 * unit for h in hits]
        z = [float(u) / self.lam for u in utilities]
        top = max(z)
        e = [math.exp(v - top) for v in z]
        total = sum(e)
        return [v / total for v in e]


@dataclass(frozen=True)
class ConstantCorrectLikelihood:
    """Pairwise responses correct with fixed probability a > 1/2.

    Only defined for q = 2.  A utility tie makes both responses equally
    likely.  With rational ``a`` the factors stay exact.
    """

    a: Number

    def __post_init__(self):
        if not Fraction(1, 2) < Fraction(self.a) < 1:
            raise ValueError("correctness probability must lie in (1/2, 1)")

    def probs(self, utilities: Sequence[Number]) -> list[Number]:
        if len(utilities) != 2:
            raise ValueError("constant-correct likelihood is defined for pairs only")
        u0, u1 = utilities
        a = self.a
        if u0 > u1:
            return [a, 1 - a]
        if u1 > u0:
            return [1 - a, a]
        half = Fraction(1, 2) if isinstance(a, (Fraction, int)) else 0.5
        return [half, half]


Likelihood = Union[SoftmaxLikelihood, ConstantCorrectLikelihood]


def _all_exact(values) -> bool:
    return all(isinstance(v, (Fraction, int)) for v in values)


@dataclass(frozen=True)
class FiniteHypothesisState:
    """Posterior over finitely many utility hypotheses on a finite domain.

    ``hypotheses[i][x]`` is hypothesis i's utility for alternative x;
    ``weights[i]`` its posterior probability.  Queries are tuples of
    alternative indices.
    """

    hypotheses: tuple[tuple[Number, ...], ...]
    weights: tuple[Number, ...]
    likelihood: Likelihood
    points: tuple | None = None

    def __post_init__(self):
        hyps = tuple(tuple(row) for row in self.hypotheses)
        wts = tuple(self.weights)
        object.__setattr__(self, "hypotheses", hyps)
        object.__setattr__(self, "weights", wts)
        if not hyps or not hyps[0]:
            raise ValueError("need at least one hypothesis over at least one alternative")
        n_alt = len(hyps[0])
        if any(len(row) != n_alt for row in hyps):
            raise ValueError("all hypotheses must cover the same alternatives")
        if len(wts) != len(hyps):
            raise ValueError("one weight per hypothesis required")
        if any(w < 0 for w in wts):
            raise ValueError("weights must be non-negative")
        if abs(float(sum(wts)) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    @property
    def n_alternatives(self) -> int:
        return len(self.hypotheses[0])

    @property
    def n_hypotheses(self) -> int:
        return len(self.hypotheses)

    def utilities_at(self, x: Sequence[int]) -> list[list[Number]]:
        return [[row[i] for i in x] for row in self.hypotheses]


def _check_query(state: FiniteHypothesisState, x: Sequence[int]) -> tuple[int, ...]:
    xt = tuple(int(i) for i in x)
    if len(xt) < 2:
        raise ValueError("queries need at least 2 alternatives")
    if any(i < 0 or i >= state.n_alternatives for i in xt):
        raise ValueError(f"alternative index out of range in query {xt}")
    return xt


def response_probs(state: FiniteHypothesisState, x: Sequence[int]) -> list[Number]:
    """Marginal probability of each response index under the current state."""
    xt = _check_query(state, x)
    per_hyp = [state.likelihood.probs([row[i] for i in xt]) for row in state.hypotheses]
    return [
        sum(w * probs[r] for w, probs in zip(state.weights, per_hyp))
        for r in range(len(xt))
    ]


def exact_update(
    state: FiniteHypothesisState, x: Sequence[int], r: int
) -> FiniteHypothesisState:
    """Bayes update: weight_i <- weight_i * P(r | hypothesis i, x), renormalized."""
    xt = _check_query(state, x)
    if not 0 <= r < len(xt):
        raise ValueError(f"response {r} out of range for a {len(xt)}-wise query")
    factors = [
        state.likelihood.probs([row[i] for i in xt])[r] for row in state.hypotheses
    ]
    raw = [w * f for w, f in zip(state.weights, factors)]
    total = sum(raw)
    if total == 0:
        raise ValueError(
            f"response {r} to query {xt} is impossible under every live hypothesis"
        )
    return FiniteHypothesisState(
        hypotheses=state.hypotheses,
        weights=tuple(w / total for w in raw),
        likelihood=state.likelihood,
        points=state.points,
    )


def exact_posterior_mean(state: FiniteHypothesisState, x: int) -> Number:
    return sum(w * row[x] for w, row in zip(state.weights, state.hypotheses))


def exact_posterior_means(state: FiniteHypothesisState) -> list[Number]:
    return [exact_posterior_mean(state, x) for x in range(state.n_alternatives)]


def exact_qeubo(state: FiniteHypothesisState, x: Sequence[int]) -> Number:
    """Exact expected best utility in the query: sum_i w_i max_j f_i(x_j)."""
    xt = _check_query(state, x)
    return sum(
        w * max(row[i] for i in xt) for w, row in zip(state.weights, state.hypotheses)
    )


def exact_qei(state: FiniteHypothesisState, x: Sequence[int], incumbent: Number) -> Number:
    """Exact expected improvement of the query's best point over the incumbent."""
    xt = _check_query(state, x)
    zero = Fraction(0) if _all_exact([incumbent]) and _all_exact(
        [u for row in state.hypotheses for u in row]
    ) else 0.0
    return sum(
        w * max(zero, max(row[i] for i in xt) - incumbent)
        for w, row in zip(state.weights, state.hypotheses)
    )


def exact_u(state: FiniteHypothesisState, x: Sequence[int]) -> Number:
    """Exact expected utility of the alternative the DM will choose."""
    xt = _check_query(state, x)
    total = 0
    for w, row in zip(state.weights, state.hypotheses):
        utilities = [row[i] for i in xt]
        probs = state.likelihood.probs(utilities)
        total += w * sum(p * u for p, u in zip(probs, utilities))
    return total


def exact_v(state: FiniteHypothesisState, x: Sequence[int]) -> Number:
    """One-step value: expected posterior-mean maximum after observing x.

    Enumerates every response; responses of probability zero contribute
    nothing.
    """
    xt = _check_query(state, x)
    probs = response_probs(state, xt)
    total = 0
    for r, p in enumerate(probs):
        if p == 0:
            continue
        nxt = exact_update(state, xt, r)
        total += p * max(exact_posterior_means(nxt))
    return total


def lambert_w(z: float, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Principal-branch Lambert W: the w >= -1 with w * exp(w) = z.

    Halley iteration from a branch-point series or log-based start;
    converges to residual |w e^w - z| <= tol for moderate z.
    """
    z = float(z)
    min_z = -math.exp(-1.0)
    if z < min_z - 1e-12:
        raise ValueError(f"lambert_w requires z >= -1/e, got {z}")
    if z < min_z:
        z = min_z
    if z == 0.0:
        return 0.0
    if z == min_z:
        return -1.0

    if z < -0.25:
        # series around the branch point z = -1/e
        p = math.sqrt(2.0 * (math.e * z + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 * p**3 / 72.0
    elif z < math.e:
        w = math.log1p(z)
    else:
        lg = math.log(z)
        w = lg - math.log(lg)

    for _ in range(max_iter):
        ew = math.exp(w)
        res = w * ew - z
        if abs(res) <= tol:
            return w
        denom = ew * (w + 1.0) - (w + 2.0) * res / (2.0 * w + 2.0)
        w -= res / denom
    raise RuntimeError(f"lambert_w failed to converge for z={z}")


def noise_gap_constant(q: int) -> float:
    """The additive constant L_W((q-1)/e) in the noisy-response guarantee."""
    return lambert_w((q - 1) / math.e)


@dataclass(frozen=True)
class TheoremReport:
    """Outcome of one verification run, with enough witness data to audit."""

    theorem: str
    instance: str
    passed: bool
    witness: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "theorem": self.theorem,
            "instance": self.instance,
            "passed": self.passed,
            "witness": _jsonable(self.witness),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _argmax_set(values: list[float], tol: float = ARGMAX_TIE_TOL) -> set[int]:
    best = max(values)
    return {i for i, v in enumerate(values) if v >= best - tol}


def _all_queries(n_alternatives: int, q: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(n_alternatives), repeat=q))


def verify_theorem1(state: FiniteHypothesisState, q: int = 2) -> TheoremReport:
    """Noise-free optimality: best-option argmaxes are one-step optimal.

    Enumerates all ordered q-wise queries and checks that every maximizer
    of the expected-best-option score also maximizes the one-step value.
    """
    if not (isinstance(state.likelihood, SoftmaxLikelihood) and state.likelihood.noise_free):
        raise ValueError("theorem 1 verification requires the noise-free likelihood")
    queries = _all_queries(state.n_alternatives, q)
    qeubo_vals = [float(exact_qeubo(state, x)) for x in queries]
    v_vals = [float(exact_v(state, x)) for x in queries]
    qeubo_arg = _argmax_set(qeubo_vals)
    v_arg = _argmax_set(v_vals)
    passed = qeubo_arg <= v_arg
    witness = {
        "qeubo_argmax": sorted(queries[i] for i in qeubo_arg),
        "value_argmax": sorted(queries[i] for i in v_arg),
    }
    if not passed:
        offender = next(i for i in qeubo_arg if i not in v_arg)
        witness["counterwitness"] = {
            "query": queries[offender],
            "qeubo": qeubo_vals[offender],
            "value": v_vals[offender],
            "max_value": max(v_vals),
        }
    return TheoremReport(
        theorem="theorem1",
        instance=f"|X|={state.n_alternatives}, H={state.n_hypotheses}, q={q}",
        passed=passed,
        witness=witness,
    )


def verify_theorem2(state: FiniteHypothesisState, lam: float, q: int = 2) -> TheoremReport:
    """Noisy-response guarantee: V^lam at the best-option maximizer is within

    lam * L_W((q-1)/e) of the best noise-free one-step value.
    """
    if lam <= 0:
        raise ValueError("theorem 2 verification requires lam > 0")
    noisy = FiniteHypothesisState(
        state.hypotheses, state.weights, SoftmaxLikelihood(lam), state.points
    )
    free = FiniteHypothesisState(
        state.hypotheses, state.weights, SoftmaxLikelihood(0.0), state.points
    )
    queries = _all_queries(state.n_alternatives, q)
    qeubo_vals = [float(exact_qeubo(noisy, x)) for x in queries]
    x_star = queries[int(np.argmax(qeubo_vals))]
    v_noisy_at_star = float(exact_v(noisy, x_star))
    v_free_max = max(float(exact_v(free, x)) for x in queries)
    constant = noise_gap_constant(q)
    slack = v_noisy_at_star - (v_free_max - lam * constant)
    passed = slack >= -ARGMAX_TIE_TOL
    return TheoremReport(
        theorem="theorem2",
        instance=f"|X|={state.n_alternatives}, H={state.n_hypotheses}, q={q}, lam={lam}",
        passed=passed,
        witness={
            "x_star": x_star,
            "v_noisy_at_star": v_noisy_at_star,
            "v_free_max": v_free_max,
            "constant": constant,
            "bound": v_free_max - lam * constant,
            "slack": slack,
        },
    )


def verify_lemma_a1(s: Sequence[float], lam: float) -> TheoremReport:
    """Softmax expected score dominates the max up to lam * L_W((q-1)/e)."""
    if lam <= 0:
        raise ValueError("lemma A.1 requires lam > 0")
    s = [float(v) for v in s]
    probs = SoftmaxLikelihood(lam).probs(s)
    lhs = sum(p * v for p, v in zip(probs, s))
    constant = noise_gap_constant(len(s))
    rhs = max(s) - lam * constant
    slack = lhs - rhs
    return TheoremReport(
        theorem="lemma_a1",
        instance=f"q={len(s)}, lam={lam}",
        passed=slack >= -ARGMAX_TIE_TOL,
        witness={"lhs": lhs, "rhs": rhs, "constant": constant, "slack": slack},
    )


def verify_lemma_a2(state: FiniteHypothesisState, q: int = 2) -> TheoremReport:
    """Expected chosen utility dominates qEUBO minus lam * C on every query."""
    if not isinstance(state.likelihood, SoftmaxLikelihood) or state.likelihood.lam <= 0:
        raise ValueError("lemma A.2 requires a softmax likelihood with lam > 0")
    lam = state.likelihood.lam
    constant = noise_gap_constant(q)
    worst = None
    for x in _all_queries(state.n_alternatives, q):
        slack = float(exact_u(state, x)) - (float(exact_qeubo(state, x)) - lam * constant)
        if worst is None or slack < worst[1]:
            worst = (x, slack)
    return TheoremReport(
        theorem="lemma_a2",
        instance=f"|X|={state.n_alternatives}, H={state.n_hypotheses}, q={q}, lam={lam}",
        passed=worst[1] >= -ARGMAX_TIE_TOL,
        witness={"worst_query": worst[0], "worst_slack": worst[1], "constant": constant},
    )


# The four-point instance on which greedy expected improvement stalls:
# four alternatives (0-based), every hypothesis assigns -1 and 0 to the
# first two, and the hypotheses split on the last two; the prior puts p/2
# on each of the two "high" hypotheses and (1-p)/2 on each "low" one.
_STALL_TABLE = (
    (-1, 0, 1, Fraction(1, 2)),
    (-1, 0, Fraction(1, 2), 1),
    (-1, 0, Fraction(-1, 2), -1),
    (-1, 0, -1, Fraction(-1, 2)),
)


def stall_instance_state(p: Number, a: Number) -> FiniteHypothesisState:
    """Initial state of the stall instance (before the seed observation)."""
    p = Fraction(p)
    a = Fraction(a)
    if not 0 < p < Fraction(1, 3):
        raise ValueError("p must lie in (0, 1/3)")
    comp = 1 - p
    weights = (p / 2, p / 2, comp / 2, comp / 2)
    return FiniteHypothesisState(
        hypotheses=_STALL_TABLE,
        weights=weights,
        likelihood=ConstantCorrectLikelihood(a),
    )


@dataclass(frozen=True)
class Theorem4Result:
    """Per-run traces from the stall-instance rollout.

    ``mean_regret[n]`` is the across-run average of the exact posterior
    simple regret after n policy queries (n = 0 is the state right after
    the seed observation).
    """

    policy: str
    mean_regret: list[float]
    queries: list[list[tuple[int, int]]]          # [run][step]
    recommendations: list[list[int]]              # [run][step], includes step 0


def run_theorem4_instance(
    p: Number,
    a: Number,
    n_steps: int,
    policy: str,
    runs: int = 1,
    seed: int = 0,
) -> Theorem4Result:
    """Greedy rollout of qEI or qEUBO on the stall instance, exactly.

    The true hypothesis and the noisy responses are simulated; posterior
    arithmetic is exact, so the expected improvement policy's regret
    reproduces its constant bit-for-bit.  Weights are carried as exact
    unnormalized integers (posterior ratios only ever get multiplied by
    small likelihood numerators); acquisition argmaxes are invariant to
    the common scale and the regret divides it out once per step.
    The seed observation compares the first two alternatives with
    response "second"; every hypothesis ranks them the same way, so this
    leaves the prior untouched.
    """
    if policy not in ("qei", "qeubo"):
        raise ValueError("policy must be 'qei' or 'qeubo'")
    p_frac = Fraction(p)
    a_frac = Fraction(a)
    if not 0 < p_frac < Fraction(1, 3):
        raise ValueError("p must lie in (0, 1/3)")
    if not Fraction(1, 2) < a_frac < 1:
        raise ValueError("a must lie in (1/2, 1)")
    rows = _STALL_TABLE
    row_max = [max(row) for row in rows]
    pairs = _all_queries(4, 2)
    # per-update weight factors in units of 1/(2*da): correct response 2*na,
    # incorrect 2*(da-na), utility tie da (probability one half each way)
    na, da = a_frac.numerator, a_frac.denominator
    correct_f, incorrect_f, tie_f = 2 * na, 2 * (da - na), da

    w0 = (
        p_frac.numerator,
        p_frac.numerator,
        p_frac.denominator - p_frac.numerator,
        p_frac.denominator - p_frac.numerator,
    )
    prior = [float(Fraction(w, 2 * p_frac.denominator)) for w in w0]
    a_float = float(a_frac)
    rng = np.random.default_rng(seed)

    sum_regret = [Fraction(0)] * (n_steps + 1)
    all_queries: list[list[tuple[int, int]]] = []
    all_recs: list[list[int]] = []

    for _ in range(runs):
        truth_row = rows[int(rng.choice(4, p=prior))]
        weights = list(w0)  # seed observation scales all weights equally
        seen = {0, 1}
        run_queries: list[tuple[int, int]] = []
        run_recs: list[int] = []
        for step in range(n_steps + 1):
            means = [
                sum(w * row[x] for w, row in zip(weights, rows)) for x in range(4)
            ]
            best_mean = max(means)
            rec = means.index(best_mean)
            run_recs.append(rec)
            scale = sum(weights)
            regret_num = sum(
                w * (mx - row[rec]) for w, row, mx in zip(weights, rows, row_max)
            )
            sum_regret[step] += Fraction(regret_num, scale)
            if step == n_steps:
                break

            if policy == "qei":
                # means may be plain ints; int / int would give a float and
                # silently break exactness, so divide with a Fraction
                incumbent = max(means[i] for i in seen) * Fraction(1, scale)
                scores = [
                    sum(
                        w * max(Fraction(0), max(row[x1], row[x2]) - incumbent)
                        for w, row in zip(weights, rows)
                    )
                    for x1, x2 in pairs
                ]
            else:
                scores = [
                    sum(w * max(row[x1], row[x2]) for w, row in zip(weights, rows))
                    for x1, x2 in pairs
                ]
            best = max(scores)
            query = pairs[scores.index(best)]
            run_queries.append(query)

            u0, u1 = truth_row[query[0]], truth_row[query[1]]
            if u0 == u1:
                r = int(rng.integers(0, 2))
            else:
                correct = 0 if u0 > u1 else 1
                r = correct if rng.random() < a_float else 1 - correct
            chosen, other = query[r], query[1 - r]
            for i, row in enumerate(rows):
                if row[chosen] > row[other]:
                    weights[i] *= correct_f
                elif row[chosen] < row[other]:
                    weights[i] *= incorrect_f
                else:
                    weights[i] *= tie_f
            seen.update(query)
        all_queries.append(run_queries)
        all_recs.append(run_recs)

    mean_regret = [float(s / runs) for s in sum_regret]
    return Theorem4Result(
        policy=policy,
        mean_regret=mean_regret,
        queries=all_queries,
        recommendations=all_recs,
    )


def random_state(
    rng: np.random.Generator,
    n_alternatives: int | None = None,
    n_hypotheses: int | None = None,
    likelihood: Likelihood | None = None,
) -> FiniteHypothesisState:
    """Random fuzz instance with distinct within-hypothesis utilities.

    Utilities are i.i.d. uniform(-1, 1), resampled while any hypothesis
    assigns two alternatives exactly equal values (ties have probability
    zero in the modeled setting, and the argmax-set checks assume them
    away).
    """
    n_alt = n_alternatives or int(rng.integers(3, 6))
    n_hyp = n_hypotheses or int(rng.integers(2, 6))
    rows = []
    for _ in range(n_hyp):
        while True:
            row = rng.uniform(-1.0, 1.0, size=n_alt)
            if len(set(row.tolist())) == n_alt:
                rows.append(tuple(row.tolist()))
                break
    raw = rng.uniform(0.1, 1.0, size=n_hyp)
    weights = tuple((raw / raw.sum()).tolist())
    return FiniteHypothesisState(
        hypotheses=tuple(rows),
        weights=weights,
        likelihood=likelihood or SoftmaxLikelihood(0.0),
    )
