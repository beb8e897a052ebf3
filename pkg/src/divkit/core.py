"""Data model for probability measures and the shared numeric plumbing.

Weighted point sets, tabulated grid densities, analytic reference
densities, and the tagged result record that every divergence returns.
All containers are immutable after construction; the pairwise reduction
routes through the selected kernel backend and is deterministic
regardless of thread count.
"""

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from ._backend import SingularPairError, pairwise_power_sum as _kernel_pairwise

__all__ = [
    "WeightedSampleSet",
    "GridDensity",
    "ReferenceDensity",
    "DivergenceReport",
    "SingularPairError",
    "load_samples",
    "save_samples",
    "moments",
    "moment_mismatch",
    "covariance",
    "covariance_is_degenerate",
    "pairwise_power_sum",
]

WEIGHT_SUM_TOL = 1e-12
GRID_MASS_TOL = 1e-6
MAX_MOMENT_ORDER = 4
DEGENERACY_RTOL = 1e-10

NORMS = ("euclidean", "l1")

FAMILIES = ("Energy", "Fourier", "Wasserstein", "KL", "Fisher", "Cramer", "GiniFamily")


class WeightedSampleSet:
    """An empirical measure: points in R^n with weights summing to one.

    Weights are renormalized on construction (CSV exports routinely
    carry unnormalized frequencies); negative weights and non-finite
    coordinates are rejected.
    """

    __slots__ = ("points", "weights", "dim")

    def __init__(self, points, weights=None):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("need at least one point of fixed dimension")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain NaN or Inf")
        n = pts.shape[0]
        if weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (n,):
                raise ValueError(f"expected {n} weights, got shape {w.shape}")
            if not np.all(np.isfinite(w)):
                raise ValueError("weights contain NaN or Inf")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            total = math.fsum(w.tolist())
            if total <= 0:
                raise ValueError("weights sum to zero")
            if abs(total - 1.0) > WEIGHT_SUM_TOL:  # idempotent: round-trips exactly
                w = w / total
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        w = np.ascontiguousarray(w)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dim", pts.shape[1])
        assert abs(math.fsum(self.weights.tolist()) - 1.0) < WEIGHT_SUM_TOL

    def __setattr__(self, name, value):
        raise AttributeError("WeightedSampleSet is immutable")

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, WeightedSampleSet):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(
            self.weights, other.weights
        )

    def __repr__(self):
        return f"WeightedSampleSet(n={len(self)}, dim={self.dim})"

    def mean(self):
        return self.weights @ self.points

    def map_points(self, fn):
        """New set with transformed points and unchanged weights."""
        return WeightedSampleSet(fn(np.asarray(self.points)), np.asarray(self.weights))

    def scale(self, c):
        return self.map_points(lambda p: p * float(c))

    def shift(self, delta):
        delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), (self.dim,))
        return self.map_points(lambda p: p + delta)

    def _sort_key(self):
        return (len(self), self.dim, self.points.tobytes(), self.weights.tobytes())


def load_samples(path, weight_column=None):
    """Read a WeightedSampleSet from CSV (header row, '.' decimals).

    A column named by ``weight_column`` (or literally ``weight`` when
    the argument is omitted) supplies weights; otherwise weights are
    uniform.  Malformed rows are reported with their 1-based data row
    number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if weight_column is not None:
            if weight_column not in header:
                raise ValueError(f"{path}: weight column {weight_column!r} not found")
            wcol = header.index(weight_column)
        elif "weight" in header:
            wcol = header.index("weight")
        else:
            wcol = None
        xcols = [k for k in range(len(header)) if k != wcol]
        if not xcols:
            raise ValueError(f"{path}: no coordinate columns")
        rows = []
        wvals = []
        for rownum, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {rownum} has {len(row)} fields, expected {len(header)}"
                )
            try:
                vals = [float(row[k]) for k in xcols]
                wv = float(row[wcol]) if wcol is not None else 1.0
            except ValueError:
                raise ValueError(f"{path}: row {rownum} has a non-numeric cell") from None
            if wv < 0:
                raise ValueError(f"{path}: row {rownum} has a negative weight")
            rows.append(vals)
            wvals.append(wv)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    weights = np.array(wvals) if wcol is not None else None
    return WeightedSampleSet(np.array(rows), weights)


def save_samples(sset, path, include_weights=True):
    """Write CSV that round-trips through load_samples at full precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = [f"x{k + 1}" for k in range(sset.dim)]
        if include_weights:
            header.append("weight")
        writer.writerow(header)
        for p, w in zip(sset.points, sset.weights):
            row = [repr(float(c)) for c in p]
            if include_weights:
                row.append(repr(float(w)))
            writer.writerow(row)


def _multi_indices(dim, order):
    for combo in itertools.combinations_with_replacement(range(dim), order):
        beta = [0] * dim
        for k in combo:
            beta[k] += 1
        yield tuple(beta)


def moments(mu, order):
    """All mixed moments of total degree <= order, keyed by multi-index.

    Exact weighted power sums; order 0 is the total mass, identically 1.
    Orders above 4 are unsupported by design.
    """
    if order < 0 or order != int(order):
        raise ValueError("order must be a nonnegative integer")
    order = int(order)
    if order > MAX_MOMENT_ORDER:
        raise ValueError(f"moment order {order} exceeds supported maximum {MAX_MOMENT_ORDER}")
    out = {}
    pts = np.asarray(mu.points)
    w = np.asarray(mu.weights)
    for total in range(order + 1):
        for beta in _multi_indices(mu.dim, total):
            mono = np.ones(len(mu))
            for k, b in enumerate(beta):
                if b:
                    mono = mono * pts[:, k] ** b
            out[beta] = float(math.fsum((w * mono).tolist()))
    return out


def moment_mismatch(mu, nu, order, tol):
    """First mixed moment (by total degree) on which mu and nu disagree.

    Returns (degree, multi_index, |difference|) or None when all
    moments up to ``order`` agree within ``tol``.
    """
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch")
    ma = moments(mu, order)
    mb = moments(nu, order)
    for total in range(1, order + 1):
        for beta in _multi_indices(mu.dim, total):
            diff = abs(ma[beta] - mb[beta])
            if diff > tol:
                return total, beta, diff
    return None


def covariance(mu):
    """Weighted covariance matrix, symmetrized; no Bessel correction."""
    if len(mu) < 2:
        raise ValueError("covariance needs at least two points")
    pts = np.asarray(mu.points)
    w = np.asarray(mu.weights)
    m = w @ pts
    centered = pts - m
    cov = (centered * w[:, None]).T @ centered
    return 0.5 * (cov + cov.T)


def covariance_is_degenerate(cov, rtol=DEGENERACY_RTOL):
    """Rank deficiency flag: smallest eigenvalue below rtol * trace."""
    tr = float(np.trace(cov))
    if tr <= 0:
        return True
    eigs = np.linalg.eigvalsh(cov)
    return bool(eigs[0] < rtol * tr)


def pairwise_power_sum(a, b, alpha, norm="euclidean", _skip_equal_index=False):
    """Sum_ij w_i v_j ||x_i - y_j||^alpha with the selected norm.

    Deterministic row-major compensated summation; the argument order is
    canonicalized first, so pairwise_power_sum(a, b, ...) and
    pairwise_power_sum(b, a, ...) are bit-identical.  Negative alpha
    raises SingularPairError on any pair closer than 1e-12.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}")
    alpha = float(alpha)
    if not math.isfinite(alpha):
        raise ValueError("alpha must be finite")
    if not _skip_equal_index and b._sort_key() < a._sort_key():
        a, b = b, a
    return _kernel_pairwise(
        a.points, a.weights, b.points, b.weights, alpha, norm == "l1", _skip_equal_index
    )


class GridDensity:
    """A probability density tabulated on a regular rectangular grid.

    Values are normalized at construction so the trapezoidal mass is 1;
    supports 1 to 3 dimensions.
    """

    __slots__ = ("origin", "spacing", "values", "dim")

    def __init__(self, origin, spacing, values):
        values = np.asarray(values, dtype=np.float64)
        dim = values.ndim
        if dim < 1 or dim > 3:
            raise ValueError("grid densities support 1 to 3 dimensions")
        origin = np.broadcast_to(np.asarray(origin, dtype=np.float64), (dim,)).copy()
        spacing = np.broadcast_to(np.asarray(spacing, dtype=np.float64), (dim,)).copy()
        if np.any(spacing <= 0) or not np.all(np.isfinite(spacing)):
            raise ValueError("spacing must be strictly positive and finite")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values contain NaN or Inf")
        if np.any(values < 0):
            raise ValueError("grid values must be nonnegative")
        if any(s < 2 for s in values.shape):
            raise ValueError("need at least two nodes per axis")
        mass = float(np.sum(values * _trapezoid_weights(values.shape, spacing)))
        if mass <= 0:
            raise ValueError("grid density has zero mass")
        values = np.ascontiguousarray(values / mass)
        values.setflags(write=False)
        origin.setflags(write=False)
        spacing.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dim", dim)
        assert abs(self.mass() - 1.0) <= GRID_MASS_TOL

    def __setattr__(self, name, value):
        raise AttributeError("GridDensity is immutable")

    @property
    def shape(self):
        return self.values.shape

    def axes(self):
        return [
            self.origin[k] + self.spacing[k] * np.arange(self.shape[k])
            for k in range(self.dim)
        ]

    def cell_weights(self):
        return _trapezoid_weights(self.shape, self.spacing)

    def integrate(self, field):
        """Trapezoidal integral of a nodal field over the grid."""
        return float(np.sum(np.asarray(field) * self.cell_weights()))

    def mass(self):
        return self.integrate(self.values)

    @classmethod
    def from_callable(cls, fn, origin, spacing, shape):
        origin = np.broadcast_to(np.asarray(origin, dtype=np.float64), (len(shape),))
        spacing = np.broadcast_to(np.asarray(spacing, dtype=np.float64), (len(shape),))
        axes = [origin[k] + spacing[k] * np.arange(shape[k]) for k in range(len(shape))]
        mesh = np.meshgrid(*axes, indexing="ij")
        values = fn(np.stack([m.ravel() for m in mesh], axis=-1)).reshape(shape)
        return cls(origin, spacing, values)

    def to_dict(self):
        return {
            "origin": [float(v) for v in self.origin],
            "spacing": [float(v) for v in self.spacing],
            "shape": list(self.shape),
            "values": [float(v) for v in self.values.ravel()],
        }

    @classmethod
    def from_dict(cls, d):
        values = np.asarray(d["values"], dtype=np.float64).reshape(d["shape"])
        return cls(d["origin"], d["spacing"], values)


def _trapezoid_weights(shape, spacing):
    full = np.ones(shape)
    for k, (m, h) in enumerate(zip(shape, spacing)):
        wk = np.full(m, h)
        wk[0] = 0.5 * h
        wk[-1] = 0.5 * h
        shape1 = [1] * len(shape)
        shape1[k] = m
        full = full * wk.reshape(shape1)
    return full


class ReferenceDensity:
    """Analytic reference densities with closed-form moments.

    ``gaussian``: mass-one isotropic Gaussian with mean vector ``u`` and
    temperature (per-axis variance) ``T``.  ``inverse_gamma``: the
    mass-one, mean-one heavy-tailed law with tail index ``mu`` and scale
    ``mu - 1`` (1-D only).
    """

    __slots__ = ("kind", "dim", "u", "T", "mu")

    def __init__(self, kind, dim=1, u=None, T=1.0, mu=None):
        if kind == "gaussian":
            if T <= 0:
                raise ValueError("temperature must be positive")
            u = np.zeros(dim) if u is None else np.broadcast_to(
                np.asarray(u, dtype=np.float64), (dim,)
            ).copy()
            u.setflags(write=False)
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "T", float(T))
            object.__setattr__(self, "mu", None)
        elif kind == "inverse_gamma":
            if dim != 1:
                raise ValueError("inverse_gamma is one-dimensional")
            if mu is None or mu <= 1:
                raise ValueError("inverse_gamma needs tail index mu > 1")
            object.__setattr__(self, "u", None)
            object.__setattr__(self, "T", None)
            object.__setattr__(self, "mu", float(mu))
        else:
            raise ValueError(f"unknown reference density kind {kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "dim", int(dim))

    def __setattr__(self, name, value):
        raise AttributeError("ReferenceDensity is immutable")

    @property
    def scale(self):
        """Scale parameter of the inverse-gamma branch (mu - 1)."""
        if self.kind != "inverse_gamma":
            raise AttributeError("scale is defined for inverse_gamma only")
        return self.mu - 1.0

    def pdf(self, x):
        """Density at points of shape (..., dim); inverse_gamma also accepts scalars."""
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "gaussian":
            q = np.sum((x - self.u) ** 2, axis=-1)
            return np.exp(-q / (2.0 * self.T)) / (2.0 * np.pi * self.T) ** (self.dim / 2.0)
        w = np.atleast_1d(x.reshape(-1) if x.ndim > 1 else x)
        out = np.zeros_like(w, dtype=np.float64)
        pos = w > 0
        b = self.scale
        out[pos] = (
            b ** self.mu / special.gamma(self.mu)
            * np.exp(-b / w[pos]) / w[pos] ** (1.0 + self.mu)
        )
        return out.reshape(x.shape[:-1] if x.ndim > 1 else np.shape(x))

    def mean(self):
        if self.kind == "gaussian":
            return np.asarray(self.u)
        return np.array([1.0])

    def entropy(self):
        """Differential entropy, closed form."""
        if self.kind == "gaussian":
            return 0.5 * self.dim * (1.0 + math.log(2.0 * math.pi * self.T))
        return float(stats.invgamma.entropy(self.mu, scale=self.scale))

    def fisher_information(self):
        """The nonparametric information integral |grad f|^2 / f."""
        if self.kind == "gaussian":
            return self.dim / self.T
        mu = self.mu
        return mu * (mu + 1.0) * (mu + 3.0) / (mu - 1.0) ** 2

    def ppf(self, q):
        """Quantile function (inverse_gamma branch)."""
        if self.kind != "inverse_gamma":
            raise NotImplementedError("ppf implemented for inverse_gamma")
        return stats.invgamma.ppf(q, self.mu, scale=self.scale)

    def tabulate(self, origin, spacing, shape):
        """Evaluate on a regular grid and normalize as a GridDensity."""
        if self.kind == "gaussian":
            fn = lambda pts: self.pdf(pts)
        else:
            fn = lambda pts: self.pdf(pts[:, 0])
        return GridDensity.from_callable(fn, origin, spacing, shape)


@dataclass(frozen=True)
class DivergenceReport:
    """Tagged divergence result with an explicit numerical-error estimate."""

    family: str
    order: float | None
    value: float
    error_estimate: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not self.value >= 0.0:
            raise ValueError(f"divergence value must be nonnegative, got {self.value}")
        if not self.error_estimate >= 0.0:
            raise ValueError("error estimate must be nonnegative")

    def to_dict(self):
        return {
            "family": self.family,
            "order": self.order,
            "value": self.value,
            "error_estimate": self.error_estimate,
            "diagnostics": dict(self.diagnostics),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        return cls(
            family=d["family"],
            order=d["order"],
            value=d["value"],
            error_estimate=d.get("error_estimate", 0.0),
            diagnostics=dict(d.get("diagnostics", {})),
        )
