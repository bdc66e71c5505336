"""Synthetic test problems and simulated decision-makers.

Problems follow a maximization convention: the classic minimization
benchmarks are negated so their global optimum value is a maximum.  The
simulated decision-maker picks among a query's alternatives with softmax
probabilities at noise level ``lam_sim`` (equivalently: argmax of utility
plus scaled Gumbel noise), and ``calibrate_noise`` solves for the level at
which comparisons of top-1% points go wrong at a target rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import BoxDomain, Domain, PreferenceDataset, Query, Response, append_observation

__all__ = [
    "TestProblem",
    "SimulatedDM",
    "simulate_response",
    "eval_problem",
    "calibrate_noise",
    "initial_design",
    "get_problem",
    "PROBLEM_NAMES",
    "problem_from_json",
]


@dataclass(frozen=True)
class TestProblem:
    """A named utility function over a box domain, to be maximized.

    ``vectorized`` marks utilities that accept an (n, d) stack directly;
    plain per-point callables are looped over.
    """

    name: str
    domain: Domain
    utility: Callable[[np.ndarray], float]
    optimum_point: np.ndarray | None = None
    optimum_value: float | None = None
    vectorized: bool = False

    def batch_utility(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.vectorized:
            return np.asarray(self.utility(xs), dtype=float)
        return np.array([self.utility(x) for x in xs])


def eval_problem(problem: TestProblem, x: np.ndarray) -> float:
    """Utility at one point; raises if the point is outside the domain."""
    x = np.asarray(x, dtype=float)
    if not problem.domain.contains(x):
        raise ValueError(f"point {x} is outside the domain of {problem.name}")
    return float(problem.utility(x))


@dataclass(frozen=True)
class SimulatedDM:
    """Softmax chooser over true utilities with noise level ``lam_sim``."""

    problem: TestProblem
    lam_sim: float

    def __post_init__(self):
        if self.lam_sim < 0:
            raise ValueError("lam_sim must be non-negative")


def simulate_response(dm: SimulatedDM, query: Query, rng: np.random.Generator) -> Response:
    """Sample the simulated decision-maker's choice for one query.

    Sampling uses the Gumbel-argmax form — argmax of utility plus
    lam_sim-scaled Gumbel noise — which draws from exactly the softmax
    choice probabilities.  At lam_sim = 0 the exact argmax is returned
    (lowest index on ties).
    """
    utilities = dm.problem.batch_utility(query.points)
    if dm.lam_sim == 0:
        return Response(int(np.argmax(utilities)))
    gumbel = rng.gumbel(size=len(utilities))
    return Response(int(np.argmax(utilities + dm.lam_sim * gumbel)))


def initial_design(
    problem: TestProblem, q: int, dm: SimulatedDM, rng: np.random.Generator
) -> PreferenceDataset:
    """4d uniformly random queries, each answered by the simulated DM."""
    d = problem.domain.dim
    ds = PreferenceDataset()
    for _ in range(4 * d):
        query = Query(problem.domain.sample(q, rng))
        resp = simulate_response(dm, query, rng)
        ds = append_observation(ds, query, resp)
    return ds


def calibrate_noise(
    problem: TestProblem,
    target_error_rate: float,
    rng: np.random.Generator,
    n_grid: int = 100_000,
    tol: float = 0.005,
) -> float:
    """Noise level at which top-1% pairwise comparisons err at the target rate.

    Draws a fresh uniform grid, keeps the top 1% of points by utility, and
    computes the exact expected mistake probability over random pairs —
    for a pair with utility gap g > 0 a softmax chooser errs with
    probability 1 / (1 + exp(g / lam)) — then bisects lam to the target.
    A mistake is a choice with strictly lower true utility.
    """
    if not 0 < target_error_rate < 0.5:
        raise ValueError("target error rate must lie in (0, 0.5)")
    grid = problem.domain.sample(n_grid, rng)
    values = problem.batch_utility(grid)
    n_top = max(2, int(np.ceil(0.01 * n_grid)))
    top = np.sort(values)[-n_top:]

    gaps = np.abs(top[:, None] - top[None, :])[np.triu_indices(n_top, k=1)]
    if np.all(gaps == 0):
        raise ValueError("utility is constant on the top set; target rate unreachable")

    def mistake_rate(lam: float) -> float:
        if lam == 0:
            return 0.0
        with np.errstate(over="ignore"):
            per_pair = np.where(gaps > 0, 1.0 / (1.0 + np.exp(gaps / lam)), 0.0)
        return float(per_pair.mean())

    lo, hi = 0.0, 1.0
    while mistake_rate(hi) < target_error_rate:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("target error rate unreachable on this problem")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        rate = mistake_rate(mid)
        if abs(rate - target_error_rate) <= tol:
            return mid
        if rate < target_error_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Built-in problems.  Constants for the 6-d Hartmann function are data
# tables; a transcription slip is the dominant risk, so the tests check a
# probe point against an independent straight-line implementation.

_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_HARTMANN_P = 1e-4 * np.array(
    [
        [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
        [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
        [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
        [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
    ]
)


def _hartmann6(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    inner = np.sum(_HARTMANN_A * (x[..., None, :] - _HARTMANN_P) ** 2, axis=-1)
    return np.sum(_HARTMANN_ALPHA * np.exp(-inner), axis=-1)


def _ackley(x: np.ndarray, a: float = 20.0, b: float = 0.2, c: float = 2.0 * np.pi):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    term1 = -a * np.exp(-b * np.sqrt(np.sum(x * x, axis=-1) / d))
    term2 = -np.exp(np.sum(np.cos(c * x), axis=-1) / d)
    return -(term1 + term2 + a + np.e)  # negated: maximum 0 at the origin


def _alpine1(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    return -np.sum(np.abs(x * np.sin(x) + 0.1 * x), axis=-1)


def _quadratic(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    return -np.sum((x - 0.5) ** 2, axis=-1)


def _make_problems() -> dict[str, TestProblem]:
    problems = {}
    problems["ackley6"] = TestProblem(
        name="ackley6",
        domain=BoxDomain(np.full(6, -32.768), np.full(6, 32.768)),
        utility=_ackley,
        optimum_point=np.zeros(6),
        optimum_value=0.0,
        vectorized=True,
    )
    problems["alpine1-7"] = TestProblem(
        name="alpine1-7",
        domain=BoxDomain(np.full(7, -10.0), np.full(7, 10.0)),
        utility=_alpine1,
        optimum_point=np.zeros(7),
        optimum_value=0.0,
        vectorized=True,
    )
    problems["hartmann6"] = TestProblem(
        name="hartmann6",
        domain=BoxDomain(np.zeros(6), np.ones(6)),
        utility=_hartmann6,
        optimum_point=np.array(
            [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573]
        ),
        optimum_value=3.32236801141551,
        vectorized=True,
    )
    for d in (1, 2, 3):
        problems[f"quadratic{d}"] = TestProblem(
            name=f"quadratic{d}",
            domain=BoxDomain(np.zeros(d), np.ones(d)),
            utility=_quadratic,
            optimum_point=np.full(d, 0.5),
            optimum_value=0.0,
            vectorized=True,
        )
    return problems


_PROBLEMS = _make_problems()
PROBLEM_NAMES = tuple(sorted(_PROBLEMS))

_UTILITY_KINDS = {
    "ackley": _ackley,
    "alpine1": _alpine1,
    "hartmann6": _hartmann6,
    "quadratic": _quadratic,
}


def get_problem(name: str) -> TestProblem:
    try:
        return _PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; built-ins: {PROBLEM_NAMES}") from None


def problem_from_json(payload: dict) -> TestProblem:
    """Custom problem: box bounds plus one of the built-in utility kinds."""
    kind = payload["utility"]
    if kind not in _UTILITY_KINDS:
        raise ValueError(f"unknown utility kind {kind!r}; use one of {sorted(_UTILITY_KINDS)}")
    domain = BoxDomain(payload["lower"], payload["upper"])
    if kind == "hartmann6" and domain.dim != 6:
        raise ValueError("hartmann6 requires a 6-d domain")
    return TestProblem(
        name=payload.get("name", f"custom-{kind}"),
        domain=domain,
        utility=_UTILITY_KINDS[kind],
        optimum_point=None,
        optimum_value=payload.get("optimum_value"),
        vectorized=True,
    )
