"""Acquisition functions over a fitted posterior and their maximizer.

qEUBO scores a query by the expected maximum utility among its
alternatives; qEI by the expected positive part of that maximum over the
incumbent.  Both are evaluated by sample average approximation (SAA): one
fixed matrix of base normal draws per optimization call makes the
objective deterministic, so multi-restart projected gradient ascent
applies.  Thompson sampling draws approximate posterior paths via random
Fourier features with a pathwise (Matheron) update.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import ndtr

from .core import BoxDomain, Domain, FiniteDomain, PreferenceDataset, Query
from .model import (
    PosteriorModel,
    posterior_at,
    posterior_mean_grad,
    posterior_with_derivatives,
    rbf_matrix,
)

__all__ = [
    "AcquisitionSpec",
    "BaseSampleSet",
    "qeubo_value",
    "qei_value",
    "eubo_closed_form_q2",
    "incumbent_value",
    "thompson_query",
    "random_query",
    "optimize_acquisition",
    "acquisition_value_and_grad",
]

ALGORITHMS = ("qeubo", "qei", "thompson", "random")
FINITE_ENUMERATION_LIMIT = 100_000
RFF_FEATURES = 1000


@dataclass(frozen=True)
class AcquisitionSpec:
    """Which acquisition to run and with how much effort."""

    kind: str = "qeubo"
    q: int = 2
    mc_samples: int = 128
    restarts: int = 16
    raw_candidates: int = 512
    max_steps: int = 60

    def __post_init__(self):
        kind = {"qts": "thompson"}.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in ALGORITHMS:
            raise ValueError(f"unknown acquisition kind {self.kind!r}; use one of {ALGORITHMS}")
        if self.q < 2:
            raise ValueError("q must be at least 2")
        if self.mc_samples < 1 or self.restarts < 1 or self.raw_candidates < 1:
            raise ValueError("mc_samples, restarts, and raw_candidates must be >= 1")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "q": self.q,
            "mc_samples": self.mc_samples,
            "restarts": self.restarts,
            "raw_candidates": self.raw_candidates,
            "max_steps": self.max_steps,
        }

    @staticmethod
    def from_json(payload: dict) -> "AcquisitionSpec":
        return AcquisitionSpec(**payload)


@dataclass(frozen=True)
class BaseSampleSet:
    """Fixed standard-normal draws shared by every SAA evaluation of one call.

    Draws are antithetic (each row paired with its negation) so a
    degenerate query of identical points evaluates to the posterior mean
    exactly.
    """

    samples: np.ndarray  # (n, q)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def q(self) -> int:
        return self.samples.shape[1]

    @staticmethod
    def draw(mc_samples: int, q: int, rng: np.random.Generator) -> "BaseSampleSet":
        half = rng.standard_normal(((mc_samples + 1) // 2, q))
        eps = np.concatenate([half, -half], axis=0)[:mc_samples]
        eps.setflags(write=False)
        return BaseSampleSet(eps)


def _query_points(x) -> np.ndarray:
    pts = x.points if isinstance(x, Query) else np.asarray(x, dtype=float)
    return np.atleast_2d(pts)


def _sym_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root.

    Unlike a Cholesky factor this commutes with permuting the points, so
    values are invariant under reordering a query along with the base
    columns; it also degrades gracefully on exactly singular covariances.
    """
    vals, vecs = np.linalg.eigh(cov)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def _saa_row_max(model: PosteriorModel, pts: np.ndarray, base: BaseSampleSet) -> np.ndarray:
    post = posterior_at(model, pts)
    factor = _sym_sqrt(post.covariance)
    vals = post.mean[None, :] + base.samples @ factor.T
    return vals.max(axis=1)


def qeubo_value(model: PosteriorModel, x, base: BaseSampleSet) -> float:
    """SAA estimate of the expected best utility among the query's points."""
    pts = _query_points(x)
    if base.q != len(pts):
        raise ValueError(f"base samples have q={base.q}, query has q={len(pts)}")
    return float(_saa_row_max(model, pts, base).mean())


def qei_value(model: PosteriorModel, x, incumbent: float, base: BaseSampleSet) -> float:
    """SAA estimate of expected improvement of the query's best point."""
    pts = _query_points(x)
    if base.q != len(pts):
        raise ValueError(f"base samples have q={base.q}, query has q={len(pts)}")
    return float(np.maximum(_saa_row_max(model, pts, base) - incumbent, 0.0).mean())


def eubo_closed_form_q2(mean: np.ndarray, cov: np.ndarray) -> float:
    """Exact expected max of a bivariate Gaussian.

    With s^2 = cov00 + cov11 - 2 cov01 and delta = mean0 - mean1:
    mean0 * Phi(delta/s) + mean1 * Phi(-delta/s) + s * phi(delta/s),
    degenerating to max(mean) when s vanishes.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    if mean.shape != (2,) or cov.shape != (2, 2):
        raise ValueError("closed form is for exactly two alternatives")
    if abs(cov[0, 1] - cov[1, 0]) > 1e-8 or np.any(np.linalg.eigvalsh(cov) < -1e-8):
        raise ValueError("covariance must be symmetric PSD")
    s2 = cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1]
    s = np.sqrt(max(s2, 0.0))
    if s <= 1e-12:
        return float(mean.max())
    delta = mean[0] - mean[1]
    z = delta / s
    phi = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return float(mean[0] * ndtr(z) + mean[1] * ndtr(-z) + s * phi)


def incumbent_value(model: PosteriorModel, ds: PreferenceDataset) -> float:
    """Maximum predictive mean over the dataset's distinct points."""
    if ds.n == 0:
        raise ValueError("incumbent is undefined for an empty dataset")
    mean, _ = posterior_mean_grad(model, ds.points)
    return float(mean.max())


def random_query(domain: Domain, q: int, rng: np.random.Generator) -> Query:
    """q i.i.d. uniform draws over the domain."""
    if q < 2:
        raise ValueError("q must be at least 2")
    return Query(domain.sample(q, rng))


def thompson_query(
    model: PosteriorModel,
    q: int,
    candidates: np.ndarray,
    rng: np.random.Generator,
) -> Query:
    """One query from q independent approximate posterior sample paths.

    Each path is a random-Fourier-feature draw from the RBF prior,
    pathwise-conditioned on a joint sample of the Laplace posterior at the
    anchors; the path's argmax over the candidate set joins the query.
    Duplicate argmaxes are permitted.
    """
    cands = np.atleast_2d(np.asarray(candidates, dtype=float))
    if len(cands) == 0:
        raise ValueError("candidate set must be non-empty")
    hyper = model.hyper
    z_cand = model.normalize(cands)
    m = model.n_anchors
    chosen = []
    for _ in range(q):
        omega = rng.standard_normal((RFF_FEATURES, hyper.dim)) / hyper.lengthscales
        phase = rng.uniform(0.0, 2.0 * np.pi, size=RFF_FEATURES)
        weights = rng.standard_normal(RFF_FEATURES)
        scale = np.sqrt(2.0 * hyper.outputscale / RFF_FEATURES)

        def prior_path(z):
            return hyper.mean_const + scale * (np.cos(z @ omega.T + phase) @ weights)

        values = prior_path(z_cand)
        if m > 0:
            u = model.mode + model.anchor_cov_factor @ rng.standard_normal(m)
            residual = u - prior_path(model.anchors)
            correction = rbf_matrix(z_cand, model.anchors, hyper) @ cho_solve(
                model.chol_k, residual
            )
            values = values + correction
        chosen.append(cands[int(np.argmax(values))])
    return Query(np.array(chosen))


def acquisition_value_and_grad(
    model: PosteriorModel,
    x,
    base: BaseSampleSet,
    incumbent: float | None = None,
):
    """SAA objective and its analytic gradient w.r.t. the query points.

    ``incumbent=None`` gives qEUBO; otherwise qEI.  The gradient follows
    the almost-everywhere-differentiable max: each sample contributes its
    argmax coordinate's gradient (ties broken by lowest index), chained
    through the Cholesky factor differential
    dL = L * phi(L^{-1} dCov L^{-T}).
    """
    pts = _query_points(x)
    k, d = pts.shape
    mean, cov, dmean, dcov = posterior_with_derivatives(model, pts)
    eigvals, vecs = np.linalg.eigh(cov)
    roots = np.sqrt(np.clip(eigvals, 0.0, None))
    factor = (vecs * roots) @ vecs.T
    vals = mean[None, :] + base.samples @ factor.T
    winners = np.argmax(vals, axis=1)
    row_max = vals[np.arange(base.n), winners]

    if incumbent is None:
        value = float(row_max.mean())
        active = np.ones(base.n, dtype=bool)
    else:
        improvement = row_max - incumbent
        value = float(np.maximum(improvement, 0.0).mean())
        active = improvement > 0.0

    win_frac = np.zeros(k)
    np.add.at(win_frac, winners[active], 1.0)
    win_frac /= base.n
    cross = np.zeros((k, k))
    np.add.at(cross, winners[active], base.samples[active])
    cross /= base.n

    # batched square-root differential over all k*d parameters: with
    # S = V sqrt(D) V^T, the perturbation solves S dS + dS S = dCov, i.e.
    # dS = V ((V^T dCov V) / (sqrt(d_i) + sqrt(d_j))) V^T in the eigenbasis
    dcov_full = np.zeros((k, d, k, k))
    rows = np.arange(k)
    dcov_full[rows, :, rows, :] = np.swapaxes(dcov, 1, 2)   # row i
    dcov_full[rows, :, :, rows] = np.swapaxes(dcov, 1, 2)   # column i
    dcov_full[rows, :, rows, rows] = dcov[rows, rows, :]    # diagonal once
    denom = roots[:, None] + roots[None, :]
    safe = np.where(denom > 1e-12 * max(1.0, roots.max()), denom, np.inf)
    inner = np.einsum("ba,itbc,cd->itad", vecs, dcov_full, vecs) / safe
    d_factor = np.einsum("ab,itbc,dc->itad", vecs, inner, vecs)
    grad = win_frac[:, None] * dmean + np.einsum("jk,itjk->it", cross, d_factor)
    return value, grad


def _batch_saa_values(
    model: PosteriorModel,
    queries: np.ndarray,
    base: BaseSampleSet,
    incumbent: float | None = None,
) -> np.ndarray:
    """SAA objective for a stack of queries, shape (n_queries,)."""
    n, q, d = queries.shape
    flat = queries.reshape(n * q, d)
    z = model.normalize(flat)
    hyper = model.hyper
    means = np.full(n * q, hyper.mean_const)
    u = None
    if model.n_anchors > 0:
        k_za = rbf_matrix(z, model.anchors, hyper)
        means = means + k_za @ model.a_vec
        u = k_za @ model.q_root.T
    means = means.reshape(n, q)

    values = np.empty(n)
    chunk = max(1, 200_000 // max(base.n, 1))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = slice(start * q, stop * q)
        zb = z[block].reshape(stop - start, q, d)
        cov = _batch_rbf(zb, hyper)
        if u is not None:
            ub = u[block].reshape(stop - start, q, -1)
            cov = cov - np.einsum("bqm,bpm->bqp", ub, ub)
        vals, vecs = np.linalg.eigh(cov)
        factors = np.einsum(
            "bqr,br,bsr->bqs", vecs, np.sqrt(np.clip(vals, 0.0, None)), vecs
        )
        draws = means[start:stop, None, :] + np.einsum(
            "bqr,nr->bnq", factors, base.samples
        )
        row_max = draws.max(axis=2)
        if incumbent is not None:
            row_max = np.maximum(row_max - incumbent, 0.0)
        values[start:stop] = row_max.mean(axis=1)
    return values


def _batch_rbf(z: np.ndarray, hyper) -> np.ndarray:
    zs = z / hyper.lengthscales
    d2 = np.sum(
        (zs[:, :, None, :] - zs[:, None, :, :]) ** 2,
        axis=-1,
    )
    return hyper.outputscale * np.exp(-0.5 * d2)


def _ascend(
    model: PosteriorModel,
    start: np.ndarray,
    base: BaseSampleSet,
    domain: BoxDomain,
    incumbent: float | None,
    max_steps: int,
):
    """Projected gradient ascent with an adaptive step size."""
    lo, hi = domain.lower, domain.upper
    width = float(np.mean(domain.width))
    x = start.copy()
    value, grad = acquisition_value_and_grad(model, x, base, incumbent)
    step = 0.1 * width
    for _ in range(max_steps):
        norm = float(np.max(np.abs(grad)))
        if norm < 1e-12:
            break
        proposal = np.clip(x + step * grad / norm, lo, hi)
        new_value, new_grad = acquisition_value_and_grad(model, proposal, base, incumbent)
        if new_value > value:
            x, value, grad = proposal, new_value, new_grad
            step *= 2.0
        else:
            step *= 0.5
        if step < 1e-9 * width:
            break
    return x, value


def optimize_acquisition(
    model: PosteriorModel,
    spec: AcquisitionSpec,
    ds: PreferenceDataset,
    rng: np.random.Generator,
) -> Query:
    """Maximize qEUBO or qEI and return the next query.

    Box domains: score ``raw_candidates`` random joint queries under one
    fixed base sample set, then run projected gradient ascent from the top
    ``restarts`` candidates plus one dedicated restart at the posterior-mean
    maximizer replicated q times (so incumbent-vs-challenger queries are
    always reachable).  Finite domains are enumerated exhaustively when
    |X|^q is small enough, otherwise scored on a random subset.
    """
    if spec.kind not in ("qeubo", "qei"):
        raise ValueError(f"optimize_acquisition handles qeubo/qei, not {spec.kind!r}")
    domain = model.domain
    if domain is None:
        raise ValueError("the model must be fitted with a domain to optimize over")
    q = spec.q
    base = BaseSampleSet.draw(spec.mc_samples, q, rng)
    incumbent = None
    if spec.kind == "qei" and ds.n > 0:
        incumbent = incumbent_value(model, ds)

    if isinstance(domain, FiniteDomain):
        return _optimize_finite(model, spec, domain, base, incumbent, rng)

    raw = domain.sample(spec.raw_candidates * q, rng).reshape(spec.raw_candidates, q, -1)
    raw_values = _batch_saa_values(model, raw, base, incumbent)

    seed_points = raw.reshape(-1, raw.shape[-1])
    if ds.n > 0:
        seed_points = np.concatenate([seed_points, ds.points], axis=0)
    mean_at_seeds, _ = posterior_mean_grad(model, seed_points)
    best_mean_point = seed_points[int(np.argmax(mean_at_seeds))]
    incumbent_query = np.tile(best_mean_point, (q, 1))

    order = np.argsort(-raw_values)[: spec.restarts]
    starts = [raw[i] for i in order] + [incumbent_query]

    best_x = raw[int(np.argmax(raw_values))]
    best_value = float(np.max(raw_values))
    for start in starts:
        x, value = _ascend(model, start, base, domain, incumbent, spec.max_steps)
        if value > best_value + 1e-15:
            best_x, best_value = x, value
    return Query(best_x)


def _optimize_finite(model, spec, domain, base, incumbent, rng):
    points = domain.points
    n_pts = len(points)
    q = spec.q
    total = n_pts**q
    if total <= FINITE_ENUMERATION_LIMIT:
        index_tuples = np.array(list(itertools.product(range(n_pts), repeat=q)))
    else:
        index_tuples = rng.integers(0, n_pts, size=(FINITE_ENUMERATION_LIMIT, q))
        mean_all, _ = posterior_mean_grad(model, points)
        best_idx = int(np.argmax(mean_all))
        index_tuples = np.concatenate(
            [index_tuples, np.full((1, q), best_idx)], axis=0
        )
    queries = points[index_tuples]
    values = _batch_saa_values(model, queries, base, incumbent)
    return Query(queries[int(np.argmax(values))])
