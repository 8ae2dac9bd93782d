"""Sensing model: random snapshot ensembles and the gained forward map.

The measurement model is ``y_l = diag(d) A_l x`` for ``l = 1..p`` snapshots,
where the ``A_l`` are independent m-by-n random matrices with i.i.d. centred
isotropic rows and ``d`` is a fixed vector of positive per-sensor gains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .errors import DimensionError, ParameterError
from .seeding import derive_seed

GAUSSIAN = "gaussian"
RADEMACHER = "rademacher"
DISTRIBUTIONS = (GAUSSIAN, RADEMACHER)

# Ensembles with at most this many cells (p*m*n) are kept stacked in memory;
# larger ones are regenerated snapshot by snapshot so that grid experiments
# never hold all p matrices at once.
CACHE_LIMIT_CELLS = 1 << 25


class Point(NamedTuple):
    """A signal/gain iterate pair (xi, gamma)."""

    xi: np.ndarray
    gamma: np.ndarray


def as_point(obj) -> Point:
    """Coerce a Point, a (xi, gamma) pair, or any object with .xi/.gamma."""
    if isinstance(obj, Point):
        return obj
    if isinstance(obj, (tuple, list)) and len(obj) == 2:
        return Point(np.asarray(obj[0], dtype=float), np.asarray(obj[1], dtype=float))
    return Point(np.asarray(obj.xi, dtype=float), np.asarray(obj.gamma, dtype=float))


def _check_vector(v, size: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (size,):
        raise DimensionError(f"{name} must have shape ({size},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ParameterError(f"{name} contains non-finite entries")
    return v


@dataclass
class SensingEnsemble:
    """p random m-by-n sensing matrices, generated lazily per snapshot.

    Snapshot ``l`` is drawn from ``derive_seed(seed, [("snapshot", l)])``, so
    any single matrix can be regenerated independently and deterministically.
    Small ensembles are cached stacked as a (p, m, n) array for speed.
    """

    n: int
    m: int
    p: int
    distribution: str = GAUSSIAN
    seed: int = 0
    _cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def matrix(self, l: int) -> np.ndarray:
        """The l-th snapshot matrix A_l, shape (m, n)."""
        if self._cache is not None:
            return self._cache[l]
        return self._draw(l)

    def _draw(self, l: int) -> np.ndarray:
        if not 0 <= l < self.p:
            raise DimensionError(f"snapshot index {l} outside [0, {self.p})")
        rng = np.random.default_rng(derive_seed(self.seed, [("snapshot", l)]))
        if self.distribution == GAUSSIAN:
            return rng.standard_normal((self.m, self.n))
        return 2.0 * rng.integers(0, 2, size=(self.m, self.n)) - 1.0

    def stacked(self) -> np.ndarray | None:
        """All matrices as a (p, m, n) array, or None when too large to cache."""
        if self._cache is None:
            if self.p * self.m * self.n > CACHE_LIMIT_CELLS:
                return None
            self._cache = np.stack([self._draw(l) for l in range(self.p)])
        return self._cache

    def iter_matrices(self) -> Iterator[np.ndarray]:
        for l in range(self.p):
            yield self.matrix(l)


def generate_ensemble(n: int, m: int, p: int, distribution: str = GAUSSIAN,
                      seed: int = 0) -> SensingEnsemble:
    """Create a seeded ensemble of p i.i.d. m-by-n sensing matrices.

    Gaussian rows have standard normal entries; Rademacher rows have entries
    +-1 with equal probability. Both are centred with identity covariance.
    """
    for name, value in (("n", n), ("m", m), ("p", p)):
        if int(value) < 1:
            raise DimensionError(f"{name} must be a positive integer, got {value}")
    if distribution not in DISTRIBUTIONS:
        raise ParameterError(
            f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")
    return SensingEnsemble(n=int(n), m=int(m), p=int(p),
                           distribution=distribution, seed=int(seed))


# ---------------------------------------------------------------------------
# Helpers that accept either a SensingEnsemble or an explicit (p, m, n) array.
# ---------------------------------------------------------------------------

def ensemble_dims(ensemble) -> tuple[int, int, int]:
    """Return (n, m, p) for an ensemble or a stacked (p, m, n) array."""
    if isinstance(ensemble, np.ndarray):
        if ensemble.ndim != 3:
            raise DimensionError(
                f"stacked matrices must be 3-d (p, m, n), got ndim={ensemble.ndim}")
        p, m, n = ensemble.shape
        return n, m, p
    return ensemble.n, ensemble.m, ensemble.p


def stacked_matrices(ensemble) -> np.ndarray | None:
    if isinstance(ensemble, np.ndarray):
        return ensemble
    return ensemble.stacked()


def iter_snapshot_matrices(ensemble) -> Iterator[np.ndarray]:
    if isinstance(ensemble, np.ndarray):
        yield from ensemble
    else:
        yield from ensemble.iter_matrices()


def sense(ensemble, x, d) -> np.ndarray:
    """Apply the forward model: snapshot l is ``d * (A_l @ x)``.

    Returns the (p, m) array of measurements. Linear in x and in d; invariant
    under the rescaling (x, d) -> (x / a, a * d) for any a != 0.
    """
    n, m, p = ensemble_dims(ensemble)
    x = _check_vector(x, n, "x")
    d = _check_vector(d, m, "d")
    stacked = stacked_matrices(ensemble)
    if stacked is not None:
        return d[None, :] * (stacked @ x)
    out = np.empty((p, m))
    for l, a in enumerate(iter_snapshot_matrices(ensemble)):
        out[l] = d * (a @ x)
    return out


@dataclass(frozen=True)
class GroundTruth:
    """The unknowns (x, d) of one problem instance plus the gain deviation bound.

    Gains are stored already rescaled onto the scaled simplex (sum(d) = m),
    which pins the one representative of the scaling orbit that all error
    metrics compare against. ``x_star``/``d_star`` apply the exact rescaling
    once more to absorb any residual drift in sum(d).
    """

    x: np.ndarray
    d: np.ndarray
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        if self.x.ndim != 1 or self.d.ndim != 1:
            raise DimensionError("x and d must be 1-d vectors")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.d))):
            raise ParameterError("ground truth contains non-finite entries")
        if not 0.0 <= self.rho < 1.0:
            raise ParameterError(f"rho must lie in [0, 1), got {self.rho}")
        m = self.d.size
        if np.any(self.d <= 0.0):
            raise ParameterError("gains must be strictly positive")
        if abs(float(np.sum(self.d)) - m) > 1e-9 * m:
            raise ParameterError("gains must sum to m (scaled-simplex representative)")
        if float(np.max(np.abs(self.d - 1.0))) > self.rho + 1e-12:
            raise ParameterError("max gain deviation exceeds rho")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def m(self) -> int:
        return self.d.size

    @property
    def x_star(self) -> np.ndarray:
        return (float(np.sum(self.d)) / self.m) * self.x

    @property
    def d_star(self) -> np.ndarray:
        return (self.m / float(np.sum(self.d))) * self.d
