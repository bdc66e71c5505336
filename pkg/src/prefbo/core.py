"""Domains, queries, choice datasets, and seeded randomness.

These are the value types shared by the surrogate model, the acquisition
functions, and the benchmark/service layers.  Everything here is immutable
after construction: appending an observation returns a new dataset and
never touches the old one.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

__all__ = [
    "BoxDomain",
    "FiniteDomain",
    "Domain",
    "Query",
    "Response",
    "PreferenceDataset",
    "validate_query",
    "append_observation",
    "rng_stream",
    "derive_seed",
]


def _frozen_array(values, dtype=float, ndim=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("array entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BoxDomain:
    """Box-constrained continuous alternative space ``[lower, upper]^d``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen_array(self.lower, ndim=1))
        object.__setattr__(self, "upper", _frozen_array(self.upper, ndim=1))
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper must have the same length")
        if self.dim < 1:
            raise ValueError("domain dimension must be at least 1")
        if not np.all(self.lower < self.upper):
            raise ValueError("every lower bound must be strictly below its upper bound")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape == (self.dim,) and bool(
            np.all(x >= self.lower) and np.all(x <= self.upper)
        )

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` i.i.d. uniform points, shape ``(n, d)``."""
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / self.width

    def to_json(self) -> dict:
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class FiniteDomain:
    """Explicit finite set of alternative vectors."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen_array(self.points, ndim=2))
        if len(self.points) < 2:
            raise ValueError("a finite domain needs at least 2 alternatives")
        if len({p.tobytes() for p in self.points}) != len(self.points):
            raise ValueError("finite-domain alternatives must be distinct")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def lower(self) -> np.ndarray:
        return self.points.min(axis=0)

    @property
    def upper(self) -> np.ndarray:
        return self.points.max(axis=0)

    @property
    def width(self) -> np.ndarray:
        w = self.upper - self.lower
        return np.where(w > 0, w, 1.0)

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            return False
        return any(np.array_equal(x, p) for p in self.points)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.integers(0, len(self.points), size=n)
        return self.points[idx]

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / self.width

    def to_json(self) -> dict:
        return {"kind": "finite", "points": self.points.tolist()}


Domain = Union[BoxDomain, FiniteDomain]


def domain_from_json(payload: dict) -> Domain:
    kind = payload.get("kind")
    if kind == "box":
        return BoxDomain(payload["lower"], payload["upper"])
    if kind == "finite":
        return FiniteDomain(payload["points"])
    raise ValueError(f"unknown domain kind: {kind!r}")


@dataclass(frozen=True)
class Query:
    """A tuple of q >= 2 alternatives shown to the decision-maker at once."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen_array(self.points, ndim=2))
        if self.q < 2:
            raise ValueError(f"a query needs at least 2 alternatives, got {self.q}")

    @property
    def q(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.points)


@dataclass(frozen=True)
class Response:
    """0-based index of the alternative the decision-maker preferred."""

    choice: int

    def __post_init__(self):
        if not isinstance(self.choice, (int, np.integer)) or self.choice < 0:
            raise ValueError(f"choice must be a non-negative integer, got {self.choice!r}")
        object.__setattr__(self, "choice", int(self.choice))


def validate_query(domain: Domain, query: Query) -> None:
    """Raise ``ValueError`` unless every query point lies inside the domain.

    The q >= 2 requirement is enforced by ``Query`` itself; this adds the
    domain-membership check with a precise error location.
    """
    if query.dim != domain.dim:
        raise ValueError(
            f"query dimension {query.dim} does not match domain dimension {domain.dim}"
        )
    if isinstance(domain, BoxDomain):
        for i, point in enumerate(query.points):
            low = point < domain.lower
            high = point > domain.upper
            if low.any() or high.any():
                coord = int(np.argmax(low | high))
                raise ValueError(
                    f"query point {i} is out of bounds at coordinate {coord}: "
                    f"{point[coord]} not in [{domain.lower[coord]}, {domain.upper[coord]}]"
                )
    else:
        for i, point in enumerate(query.points):
            if not domain.contains(point):
                raise ValueError(f"query point {i} is not a member of the finite domain")


@dataclass(frozen=True)
class PreferenceDataset:
    """Ordered choice observations plus a deduplicated index of all points.

    ``points`` holds every distinct alternative seen so far (exact
    floating-point equality; duplicates only arise from deliberate re-use,
    and tolerance-based merging would corrupt the likelihood).
    ``indices[k]`` maps observation k's query positions into ``points``.
    """

    observations: tuple[tuple[Query, Response], ...] = ()
    points: np.ndarray = field(default_factory=lambda: _frozen_array(np.zeros((0, 0))))
    indices: tuple[np.ndarray, ...] = ()

    @property
    def n(self) -> int:
        return len(self.observations)

    @property
    def q(self) -> int | None:
        """Query size, or None while the dataset is empty."""
        return self.observations[0][0].q if self.observations else None

    @property
    def n_points(self) -> int:
        return len(self.points)

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "observations": [
                {"points": obs.points.tolist(), "choice": resp.choice}
                for obs, resp in self.observations
            ],
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json())


def dataset_from_json(payload: dict | str) -> PreferenceDataset:
    if isinstance(payload, str):
        payload = json.loads(payload)
    ds = PreferenceDataset()
    for obs in payload["observations"]:
        ds = append_observation(ds, Query(obs["points"]), Response(obs["choice"]))
    return ds


def append_observation(
    ds: PreferenceDataset, query: Query, response: Response
) -> PreferenceDataset:
    """Return a new dataset with ``(query, response)`` appended.

    The input dataset is left untouched.  New points extend the dedup
    index; points equal (coordinate-exact) to an existing one reuse its
    index.
    """
    if response.choice >= query.q:
        raise ValueError(
            f"choice {response.choice} out of range for a query of {query.q} alternatives"
        )
    if ds.observations and query.q != ds.q:
        raise ValueError(f"dataset holds {ds.q}-wise queries, got q={query.q}")
    if ds.observations and query.dim != ds.points.shape[1]:
        raise ValueError(
            f"dataset holds {ds.points.shape[1]}-d points, got {query.dim}-d query"
        )

    known = {p.tobytes(): i for i, p in enumerate(ds.points)}
    new_points = list(ds.points) if ds.n_points else []
    idx = np.empty(query.q, dtype=np.intp)
    for j, point in enumerate(query.points):
        key = point.tobytes()
        if key not in known:
            known[key] = len(new_points)
            new_points.append(point)
        idx[j] = known[key]
    idx.setflags(write=False)
    return PreferenceDataset(
        observations=ds.observations + ((query, response),),
        points=_frozen_array(np.array(new_points), ndim=2),
        indices=ds.indices + (idx,),
    )


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labels.

    Python's builtin ``hash`` is salted per process; this uses SHA-256 over
    a canonical rendering so prefetched and synchronous computations on
    different processes derive identical streams.
    """
    blob = "\x1f".join(repr(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") >> 1


def rng_stream(root_seed: int, *labels) -> np.random.Generator:
    """Named child generator of a root seed.

    Separate streams per purpose (model fit, acquisition, simulated
    decision-maker) keep e.g. a change of Monte Carlo sample counts from
    perturbing the simulated responses.
    """
    return np.random.default_rng(np.random.SeedSequence(derive_seed(root_seed, *labels)))
