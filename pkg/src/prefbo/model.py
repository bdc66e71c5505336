"""Gaussian-process surrogate over the latent utility, trained on choices.

The decision-maker's responses enter through a softmax choice likelihood
with noise level ``lam``:  P(choice = i) = exp(u_i/lam) / sum_j exp(u_j/lam).
The posterior over latent utilities at the dataset's distinct points is
approximated by a Laplace approximation at the mode, found by damped
Newton iterations; predictive Gaussians anywhere follow by standard GP
conditioning on that Gaussian state.

Inputs are mapped to the unit cube internally (when a domain is supplied)
so one set of kernel hyperparameter bounds works across problems.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .core import Domain, PreferenceDataset
from .numerics import FactorizationError, chol_with_jitter, psd_factor

__all__ = [
    "Hyperparameters",
    "GaussianPosterior",
    "PosteriorModel",
    "HyperFitConfig",
    "rbf_kernel",
    "choice_likelihood",
    "fit_laplace",
    "posterior_at",
    "fit_hyperparameters",
    "snapshot_to_json",
    "snapshot_from_json",
]

GRAD_TOL = 1e-6
MAX_NEWTON_ITER = 100
MAX_HALVINGS = 30


@dataclass(frozen=True)
class Hyperparameters:
    """RBF kernel hyperparameters plus the softmax noise level.

    ``lengthscales`` and ``outputscale`` live in the model's internal
    (unit-cube) coordinates when a domain is used for normalization.
    ``noise_level`` of zero is allowed only for simulated decision-makers;
    the Laplace fit requires it strictly positive.
    """

    lengthscales: np.ndarray
    outputscale: float = 1.0
    mean_const: float = 0.0
    noise_level: float = 0.1

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        if np.any(ls <= 0):
            raise ValueError("lengthscales must be strictly positive")
        if self.outputscale <= 0:
            raise ValueError("outputscale must be strictly positive")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def to_json(self) -> dict:
        return {
            "lengthscales": self.lengthscales.tolist(),
            "outputscale": self.outputscale,
            "mean_const": self.mean_const,
            "noise_level": self.noise_level,
        }

    @staticmethod
    def from_json(payload: dict) -> "Hyperparameters":
        return Hyperparameters(
            lengthscales=payload["lengthscales"],
            outputscale=payload["outputscale"],
            mean_const=payload["mean_const"],
            noise_level=payload["noise_level"],
        )


def rbf_kernel(x: np.ndarray, y: np.ndarray, hyper: Hyperparameters) -> float:
    """outputscale * exp(-0.5 * sum(((x - y) / lengthscales)**2))."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.shape != (hyper.dim,):
        raise ValueError(
            f"kernel inputs must both have dimension {hyper.dim}, "
            f"got {x.shape} and {y.shape}"
        )
    z = (x - y) / hyper.lengthscales
    return hyper.outputscale * float(np.exp(-0.5 * np.dot(z, z)))


def rbf_matrix(x: np.ndarray, y: np.ndarray, hyper: Hyperparameters) -> np.ndarray:
    """Kernel cross-matrix for row stacks of points, shape (len(x), len(y))."""
    xs = np.asarray(x, dtype=float) / hyper.lengthscales
    ys = np.asarray(y, dtype=float) / hyper.lengthscales
    d2 = (
        np.sum(xs * xs, axis=1)[:, None]
        + np.sum(ys * ys, axis=1)[None, :]
        - 2.0 * xs @ ys.T
    )
    return hyper.outputscale * np.exp(-0.5 * np.maximum(d2, 0.0))


def choice_likelihood(utilities: np.ndarray, lam: float) -> np.ndarray:
    """Softmax choice probabilities over one query's utilities.

    Computed with max-subtraction for overflow safety.  ``lam == 0``
    returns the noise-free limit: uniform over the argmax set.
    """
    if lam < 0:
        raise ValueError("noise level must be non-negative")
    u = np.asarray(utilities, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("utilities must be a non-empty vector")
    if lam == 0.0:
        best = u == u.max()
        return best / best.sum()
    z = u / lam
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class GaussianPosterior:
    """Joint Gaussian over latent utility values at k points."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean length")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("posterior moments must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", 0.5 * (cov + cov.T))


@dataclass(frozen=True)
class PosteriorModel:
    """Fitted Laplace state: mode and Gaussian curvature at the anchors.

    ``anchors`` are the dataset's distinct points in normalized
    coordinates.  ``q_mat`` is the PSD matrix such that the predictive
    covariance at points Z is  K(Z,Z) - K(Z,A) q_mat K(A,Z);  ``a_vec`` is
    K(A,A)^{-1} (mode - prior mean), so the predictive mean at an anchor
    reproduces its mode entry exactly.
    """

    hyper: Hyperparameters
    domain: Domain | None
    dataset: PreferenceDataset
    anchors: np.ndarray          # (m, d) normalized
    mode: np.ndarray             # (m,)
    a_vec: np.ndarray            # (m,)
    q_mat: np.ndarray            # (m, m) PSD
    q_root: np.ndarray           # (m, m), q_root.T @ q_root = q_mat
    chol_k: tuple | None         # cho_factor of K(A,A) + jitter
    anchor_cov_factor: np.ndarray  # (m, m), L L^T = Laplace covariance at anchors
    log_marginal: float
    newton_iters: int

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    def normalize(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.domain is None:
            return pts
        return (pts - self.domain.lower) / self.domain.width


def _normalized_anchors(ds: PreferenceDataset, domain: Domain | None) -> np.ndarray:
    pts = np.asarray(ds.points, dtype=float)
    if domain is None or pts.size == 0:
        return pts
    return (pts - domain.lower) / domain.width


def _likelihood_index(ds: PreferenceDataset):
    """Stacked (n, q) anchor indices and (n,) choices for vectorized math."""
    idx = np.stack(ds.indices)
    choices = np.array([resp.choice for _, resp in ds.observations])
    return idx, choices


def _loglik_terms(ds: PreferenceDataset, f: np.ndarray, lam: float):
    """Total log-likelihood, gradient, and negative Hessian W at anchors."""
    m = f.size
    idx, choices = _likelihood_index(ds)
    n, q = idx.shape
    z = f[idx] / lam
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    totals = e.sum(axis=1)
    p = e / totals[:, None]
    rows = np.arange(n)
    total = float(np.sum(z[rows, choices] - np.log(totals)))

    g = -p / lam
    g[rows, choices] += 1.0 / lam
    grad = np.zeros(m)
    np.add.at(grad, idx.ravel(), g.ravel())

    blocks = -p[:, :, None] * p[:, None, :]
    diag = np.arange(q)
    blocks[:, diag, diag] += p
    blocks /= lam * lam
    w = np.zeros((m, m))
    np.add.at(
        w,
        (np.repeat(idx, q, axis=1).ravel(), np.tile(idx, (1, q)).ravel()),
        blocks.ravel(),
    )
    return total, grad, w


def _newton(ds, lam, k_mat, mu0, hyper, stable: bool):
    """Damped Newton ascent of the latent-utility log posterior.

    Iterates on a = K^{-1}(f - mu0) with f = mu0 + K a maintained by
    construction, so the objective and the gradient residual g - a carry
    no solve noise even when K is badly conditioned.  The fast direction
    solves with an explicit K^{-1}; the stable one uses
    (K^{-1} + W)^{-1} r = (I - K V B^{-1} V^T)(K r)  with  W = V V^T and
    B = I + V^T K V, which never factorizes K and survives near-singular
    kernels at the cost of an eigendecomposition per iteration.
    """
    m = len(mu0)
    k_inv = None
    if not stable:
        k_factor, _ = chol_with_jitter(k_mat, scale=hyper.outputscale)
        k_inv = cho_solve(k_factor, np.eye(m))

    a = np.zeros(m)
    f = mu0.copy()
    loglik, grad, w = _loglik_terms(ds, f, lam)
    psi = loglik
    iters = 0
    for iters in range(1, MAX_NEWTON_ITER + 1):
        residual = grad - a
        if np.max(np.abs(residual)) <= GRAD_TOL:
            break
        if stable:
            vals, vecs = np.linalg.eigh(0.5 * (w + w.T))
            v_half = vecs * np.sqrt(np.clip(vals, 0.0, None))
            b_mat = np.eye(m) + v_half.T @ k_mat @ v_half
            b_vec = w @ (f - mu0) + grad
            kb = k_mat @ b_vec
            a_target = b_vec - v_half @ np.linalg.solve(b_mat, v_half.T @ kb)
            step_a = a_target - a
        else:
            h = k_inv + w
            h_factor, _ = chol_with_jitter(h, scale=1.0 / hyper.outputscale)
            step_a = k_inv @ cho_solve(h_factor, residual)

        t = 1.0
        accepted = False
        for halving in range(MAX_HALVINGS + 1):
            a_new = a + t * step_a
            f_new = mu0 + k_mat @ a_new
            ll_new, grad_new, w_new = _loglik_terms(ds, f_new, lam)
            psi_new = ll_new - 0.5 * float(a_new @ (f_new - mu0))
            # near the mode the improvement of a full Newton step can fall
            # below float resolution of psi; accept it on equality so the
            # quadratic contraction can finish driving the gradient down
            flat_ok = halving == 0 and psi_new >= psi - 1e-12 * (1.0 + abs(psi))
            if psi_new > psi or flat_ok:
                f, a, psi = f_new, a_new, psi_new
                loglik, grad, w = ll_new, grad_new, w_new
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    if np.max(np.abs(grad - a)) > GRAD_TOL:
        raise RuntimeError(
            "Laplace Newton did not converge: gradient inf-norm "
            f"{np.max(np.abs(grad - a)):.3e} after {iters} iterations"
        )
    return f, a, loglik, grad, w, psi, iters


def fit_laplace(
    ds: PreferenceDataset, hyper: Hyperparameters, domain: Domain | None = None
) -> PosteriorModel:
    """Laplace approximation of the utility posterior at the dataset's points.

    Maximizes the log prior plus the softmax log likelihood over latent
    values at the anchors by damped Newton iterations (step halving on
    objective decrease), to gradient infinity-norm <= 1e-6 or 100
    iterations.  An empty dataset returns the prior.

    Raises
    ------
    ValueError
        If ``hyper.noise_level`` is not strictly positive.
    RuntimeError
        On Newton non-convergence (reports the final gradient norm) or an
        irrecoverably non-PSD kernel matrix.
    """
    lam = hyper.noise_level
    if lam <= 0:
        raise ValueError("fit_laplace requires a strictly positive noise level")

    anchors = _normalized_anchors(ds, domain)
    m = len(anchors)
    if m > 0 and anchors.shape[1] != hyper.dim:
        raise ValueError(
            f"dataset points have dimension {anchors.shape[1]}, "
            f"hyperparameters expect {hyper.dim}"
        )
    if m == 0:
        empty = np.zeros((0, 0))
        return PosteriorModel(
            hyper=hyper,
            domain=domain,
            dataset=ds,
            anchors=np.zeros((0, hyper.dim)),
            mode=np.zeros(0),
            a_vec=np.zeros(0),
            q_mat=empty,
            q_root=empty,
            chol_k=None,
            anchor_cov_factor=empty,
            log_marginal=0.0,
            newton_iters=0,
        )

    k_raw = rbf_matrix(anchors, anchors, hyper)
    try:
        k_factor, jitter = chol_with_jitter(k_raw, scale=hyper.outputscale)
    except FactorizationError as exc:
        raise RuntimeError(f"kernel matrix is not PSD: {exc}") from exc
    # the jittered matrix is the effective prior covariance for this fit
    k_mat = k_raw if jitter == 0.0 else k_raw + jitter * hyper.outputscale * np.eye(m)
    mu0 = np.full(m, hyper.mean_const)

    try:
        f, a, loglik, grad, w, psi, iters = _newton(
            ds, lam, k_mat, mu0, hyper, stable=False
        )
    except RuntimeError:
        # retry with the slower direction that never inverts K
        f, a, loglik, grad, w, psi, iters = _newton(
            ds, lam, k_mat, mu0, hyper, stable=True
        )

    # PSD-by-construction predictive correction: with W = V V^T,
    # (K + W^{-1})^{-1} = V B^{-1} V^T where B = I + V^T K V.
    vals, vecs = np.linalg.eigh(0.5 * (w + w.T))
    v_half = vecs * np.sqrt(np.clip(vals, 0.0, None))
    b = np.eye(m) + v_half.T @ k_mat @ v_half
    b_chol = np.linalg.cholesky(b)
    root = solve_triangular(b_chol, v_half.T, lower=True)  # root^T root = Q
    q_mat = root.T @ root

    sigma_anchor = k_mat - (k_mat @ root.T) @ (root @ k_mat)
    anchor_cov_factor = psd_factor(0.5 * (sigma_anchor + sigma_anchor.T))

    logdet_b = 2.0 * float(np.sum(np.log(np.diag(b_chol))))
    log_marginal = psi - 0.5 * logdet_b

    # realign the stored mode with the representation the predictor uses
    # (mu0 + K a with the unjittered cross-kernel), so predictive means at
    # anchors reproduce mode entries to machine precision
    f = mu0 + k_raw @ a

    return PosteriorModel(
        hyper=hyper,
        domain=domain,
        dataset=ds,
        anchors=anchors,
        mode=f,
        a_vec=a,
        q_mat=q_mat,
        q_root=root,
        chol_k=k_factor,
        anchor_cov_factor=anchor_cov_factor,
        log_marginal=float(log_marginal),
        newton_iters=iters,
    )


def posterior_at(model: PosteriorModel, points: np.ndarray) -> GaussianPosterior:
    """Joint Gaussian over latent utilities at the given points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != model.hyper.dim:
        raise ValueError(
            f"points have dimension {pts.shape[1]}, model expects {model.hyper.dim}"
        )
    z = model.normalize(pts)
    hyper = model.hyper
    k_zz = rbf_matrix(z, z, hyper)
    if model.n_anchors == 0:
        mean = np.full(len(z), hyper.mean_const)
        return GaussianPosterior(mean, k_zz)
    k_za = rbf_matrix(z, model.anchors, hyper)
    mean = hyper.mean_const + k_za @ model.a_vec
    cov = k_zz - k_za @ model.q_mat @ k_za.T
    return GaussianPosterior(mean, cov)


def posterior_with_derivatives(model: PosteriorModel, points: np.ndarray):
    """Posterior moments at k points plus their derivatives in raw coordinates.

    Returns ``(mean (k,), cov (k,k), dmean (k,d), dcov (k,k,d))`` where
    ``dmean[i, t] = d mean_i / d x_{i,t}`` and
    ``dcov[i, l, t] = d cov_{i,l} / d x_{i,t}`` (the full derivative of the
    covariance w.r.t. ``x_{i,t}`` is the symmetric matrix with row and
    column ``i`` taken from ``dcov[i]``).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    k, d = pts.shape
    hyper = model.hyper
    z = model.normalize(pts)
    width = np.ones(d) if model.domain is None else np.asarray(model.domain.width)
    inv_sq = 1.0 / hyper.lengthscales**2

    k_zz = rbf_matrix(z, z, hyper)
    # d k(z_i, z_l) / d z_i = K_il * (z_l - z_i) / ls^2 (zero on the diagonal)
    dz = (z[None, :, :] - z[:, None, :]) * inv_sq
    dk_zz = k_zz[:, :, None] * dz

    if model.n_anchors == 0:
        mean = np.full(k, hyper.mean_const)
        dmean = np.zeros((k, d))
        dcov = dk_zz.copy()
        for i in range(k):
            dcov[i, i, :] = 0.0
        return mean, k_zz, dmean / width, dcov / width

    k_za = rbf_matrix(z, model.anchors, hyper)
    mean = hyper.mean_const + k_za @ model.a_vec
    s_mat = k_za @ model.q_mat         # (k, m)
    cov = k_zz - s_mat @ k_za.T

    da = (model.anchors[None, :, :] - z[:, None, :]) * inv_sq  # (k, m, d)
    jac = k_za[:, :, None] * da                                # d k(z_i,A)/d z_i
    dmean = np.einsum("imd,m->id", jac, model.a_vec)
    # d cov_{il} / d z_i = dK_zz[i,l] - jac_i^T s_l  (diagonal: -2 jac_i^T s_i)
    cross = np.einsum("imd,lm->ild", jac, s_mat)
    dcov = dk_zz - cross
    for i in range(k):
        dcov[i, i, :] = -2.0 * cross[i, i, :]
    return mean, cov, dmean / width, dcov / width


def posterior_mean_grad(model: PosteriorModel, points: np.ndarray):
    """Predictive mean and its gradient w.r.t. raw coordinates, batched.

    Returns ``(mean (k,), grad (k, d))``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hyper = model.hyper
    if model.n_anchors == 0:
        return np.full(len(pts), hyper.mean_const), np.zeros_like(pts)
    z = model.normalize(pts)
    k_za = rbf_matrix(z, model.anchors, hyper)
    mean = hyper.mean_const + k_za @ model.a_vec
    inv_sq = 1.0 / hyper.lengthscales**2
    # d k(z_i, A_j) / d z_i = k_ij * (A_j - z_i) / ls^2
    diff = model.anchors[None, :, :] - z[:, None, :]
    grad_norm = np.einsum("ij,ijd,j->id", k_za, diff * inv_sq, model.a_vec)
    width = 1.0 if model.domain is None else model.domain.width
    return mean, grad_norm / width


@dataclass(frozen=True)
class HyperFitConfig:
    """Bounds and search effort for marginal-likelihood hyperparameter fitting.

    Bounds are in normalized (unit-cube) coordinates; the mean constant is
    unbounded.  ``init`` seeds the first restart (e.g. the previous round's
    hyperparameters); the returned value never scores below that
    initialization.

    The default regularizers make this a MAP fit rather than plain maximum
    likelihood.  Choice data identifies utilities only up to scale, so the
    likelihood has a ridge along (outputscale, noise) and reliably pins
    lengthscales at the upper bound on a handful of comparisons; the mild
    priors (Gamma on lengthscales, a soft box on the outputscale, a weak
    normal on the mean) anchor the scale and break those traps.  Set them
    to None for plain maximum likelihood.
    """

    lengthscale_bounds: tuple[float, float] = (0.01, 10.0)
    outputscale_bounds: tuple[float, float] = (0.01, 100.0)
    noise_bounds: tuple[float, float] = (1e-3, 10.0)
    lengthscale_prior: tuple[float, float] | None = (1.2, 0.5)
    outputscale_prior: tuple[float, float] | None = (1.0, 4.0)
    mean_prior_std: float | None = 1.0
    restarts: int = 3
    maxiter: int = 30
    seed: int = 0
    init: Hyperparameters | None = None


def default_hyperparameters(dim: int) -> Hyperparameters:
    return Hyperparameters(
        lengthscales=np.full(dim, 0.5),
        outputscale=1.0,
        mean_const=0.0,
        noise_level=0.2,
    )


def snapshot_to_json(model: PosteriorModel) -> dict:
    """Persistable snapshot: hyperparameters plus dataset.

    The Laplace state itself is not persisted; loading refits, which
    reproduces it exactly (the fit is deterministic).
    """
    return {
        "hyperparameters": model.hyper.to_json(),
        "dataset": model.dataset.to_json(),
    }


def snapshot_from_json(payload: dict, domain: Domain | None = None) -> PosteriorModel:
    from .core import dataset_from_json

    hyper = Hyperparameters.from_json(payload["hyperparameters"])
    ds = dataset_from_json(payload["dataset"])
    return fit_laplace(ds, hyper, domain)


def _log_prior(theta: np.ndarray, dim: int, cfg: HyperFitConfig) -> float:
    """Log-density of the hyperparameter regularizers at packed theta."""
    total = 0.0
    if cfg.lengthscale_prior is not None:
        conc, rate = cfg.lengthscale_prior
        ls = np.exp(theta[:dim])
        total += float(np.sum((conc - 1.0) * np.log(ls) - rate * ls))
    if cfg.outputscale_prior is not None:
        lo, hi = np.log(cfg.outputscale_prior)
        excess = max(0.0, lo - theta[dim], theta[dim] - hi)
        total += -0.5 * (excess / 0.1) ** 2
    if cfg.mean_prior_std is not None:
        total += -0.5 * (theta[dim + 1] / cfg.mean_prior_std) ** 2
    return total


def _clip_to_bounds(hyper: Hyperparameters, cfg: HyperFitConfig) -> Hyperparameters:
    return replace(
        hyper,
        lengthscales=np.clip(hyper.lengthscales, *cfg.lengthscale_bounds),
        outputscale=float(np.clip(hyper.outputscale, *cfg.outputscale_bounds)),
        noise_level=float(np.clip(hyper.noise_level, *cfg.noise_bounds)),
    )


def fit_hyperparameters(
    ds: PreferenceDataset,
    config: HyperFitConfig = HyperFitConfig(),
    domain: Domain | None = None,
) -> Hyperparameters:
    """Maximize the Laplace log marginal likelihood within bounds.

    Multi-restart L-BFGS-B over (log lengthscales, log outputscale,
    mean_const, log noise).  Restart 0 starts from ``config.init`` (or the
    package default); further restarts from log-uniform draws inside the
    bounds.  Raises ``RuntimeError`` if every restart fails numerically.
    """
    if ds.n == 0:
        raise ValueError("hyperparameter fitting needs a non-empty dataset")
    dim = ds.points.shape[1]
    cfg = config
    init = _clip_to_bounds(cfg.init or default_hyperparameters(dim), cfg)

    def pack(h: Hyperparameters) -> np.ndarray:
        return np.concatenate(
            [
                np.log(h.lengthscales),
                [np.log(h.outputscale), h.mean_const, np.log(h.noise_level)],
            ]
        )

    def unpack(theta: np.ndarray) -> Hyperparameters:
        return Hyperparameters(
            lengthscales=np.exp(theta[:dim]),
            outputscale=float(np.exp(theta[dim])),
            mean_const=float(theta[dim + 1]),
            noise_level=float(np.exp(theta[dim + 2])),
        )

    def objective(theta: np.ndarray) -> float:
        try:
            score = fit_laplace(ds, unpack(theta), domain).log_marginal
        except (RuntimeError, FactorizationError, np.linalg.LinAlgError):
            return 1e12
        score += _log_prior(theta, dim, cfg)
        return -score

    log_bounds = (
        [tuple(np.log(cfg.lengthscale_bounds))] * dim
        + [tuple(np.log(cfg.outputscale_bounds))]
        + [(None, None)]
        + [tuple(np.log(cfg.noise_bounds))]
    )

    rng = np.random.default_rng(cfg.seed)
    starts = [pack(init)]
    if cfg.restarts > 1:
        starts.append(pack(_clip_to_bounds(default_hyperparameters(dim), cfg)))
    for _ in range(max(cfg.restarts - 2, 0)):
        theta = np.empty(dim + 3)
        theta[:dim] = rng.uniform(*np.log(cfg.lengthscale_bounds), size=dim)
        theta[dim] = rng.uniform(*np.log(cfg.outputscale_bounds))
        theta[dim + 1] = rng.normal(0.0, 1.0)
        theta[dim + 2] = rng.uniform(*np.log(cfg.noise_bounds))
        starts.append(theta)

    candidates: list[tuple[float, int, np.ndarray]] = [(objective(starts[0]), 0, starts[0])]
    for i, theta0 in enumerate(starts):
        try:
            res = minimize(
                objective,
                theta0,
                method="L-BFGS-B",
                bounds=log_bounds,
                options={"maxiter": cfg.maxiter, "ftol": 1e-9},
            )
            candidates.append((float(res.fun), i + 1, res.x))
        except (RuntimeError, np.linalg.LinAlgError):
            continue

    feasible = [c for c in candidates if c[0] < 1e12]
    if not feasible:
        raise RuntimeError("all hyperparameter restarts failed numerically")
    best = min(feasible, key=lambda c: (c[0], c[1]))
    return _clip_to_bounds(unpack(best[2]), cfg)
