"""Parametric manifold models, chord sampling and condition-number checks.

A point in ``C^N`` is identified with ``2N`` reals laid out as interleaved
``(re, im)`` pairs; see :func:`realify`.  Chord sampling is uniform in
parameter space (not in manifold volume), so any empirical distortion over a
:class:`ChordSet` is a lower bound on the true worst case.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .bounds import ManifoldParams

TWO_PI = 2 * math.pi
STRATUM_LEVELS = 32


def realify(x):
    """Interleave real and imaginary parts along the last axis."""
    x = np.asarray(x, dtype=complex)
    out = np.empty(x.shape[:-1] + (2 * x.shape[-1],))
    out[..., 0::2] = x.real
    out[..., 1::2] = x.imag
    return out


def complexify(x):
    """Inverse of :func:`realify`."""
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


class ManifoldModel:
    """Parametric map ``theta -> x`` over a box (optionally periodic) domain.

    Parameters
    ----------
    name : str
    D : int
        Intrinsic dimension.
    N : int
        Length of the (complex) output vectors.
    eval_fn : callable
        Maps an array of parameters of shape ``(k, D)`` to ``(k, N)``.
    lower, upper : array_like
        Parameter box.
    periodic : bool
        Whether every parameter wraps around the box.
    geometry : ManifoldParams, optional
        Closed-form ``(tau, V, R)`` when known.
    geodesic_fn : callable, optional
        ``(theta1, theta2) -> d_M`` for batches of parameter pairs.
    trusted : bool
        False for user-supplied models whose regularity cannot be checked.
    """

    def __init__(self, name, D, N, eval_fn, lower, upper, periodic=False,
                 geometry=None, geodesic_fn=None, trusted=True):
        self.name = name
        self.D = int(D)
        self.N = int(N)
        self._eval = eval_fn
        self.lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.D,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.D,)).copy()
        self.periodic = periodic
        self.geometry = geometry
        self._geodesic = geodesic_fn
        self.trusted = trusted

    @property
    def ambient_n(self):
        """Real ambient dimension (``2N`` for complex-valued models)."""
        return 2 * self.N

    @property
    def width(self):
        return self.upper - self.lower

    def _params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.D == 1 and theta.ndim <= 1:
            theta = theta.reshape(-1, 1)
        return theta.reshape(-1, self.D)

    def eval(self, theta):
        """Points for a batch of parameters; returns shape ``(k, N)``."""
        return np.asarray(self._eval(self._params(theta)), dtype=complex)

    def wrap(self, theta):
        theta = self._params(theta)
        if self.periodic:
            return self.lower + np.mod(theta - self.lower, self.width)
        return np.clip(theta, self.lower, self.upper)

    def geodesic_distance(self, theta1, theta2):
        if self._geodesic is None:
            raise NotImplementedError(f"manifold {self.name!r} has no geodesic distance")
        return np.asarray(self._geodesic(self._params(theta1), self._params(theta2)), dtype=float)

    @property
    def has_geodesic(self):
        return self._geodesic is not None

    def __repr__(self):
        return f"<ManifoldModel {self.name} D={self.D} N={self.N}>"


# --------------------------------------------------------------------------
# sampled sinusoids


def _power_sums(N):
    """Exact integer sums of n^2 and n^4 over n = 1..N."""
    s2 = N * (N + 1) * (2 * N + 1) // 6
    s4 = N * (N + 1) * (2 * N + 1) * (3 * N * N + 3 * N - 1) // 30
    return s2, s4


def sinusoid_point(omega, N):
    """Sampled sinusoid ``(e^{j omega}, e^{j 2 omega}, ..., e^{j N omega})``.

    ``omega`` outside ``[0, 2 pi)`` is reduced modulo ``2 pi`` with a warning.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not 0 <= omega < TWO_PI:
        warnings.warn(f"omega={omega} outside [0, 2pi); reducing modulo 2pi", RuntimeWarning, stacklevel=2)
        omega = math.fmod(omega, TWO_PI)
        if omega < 0:
            omega += TWO_PI
    return np.exp(1j * omega * np.arange(1, N + 1))


def sinusoid_geometry(N):
    """Closed-form ``tau``, volume and regularity of the sinusoid manifold.

    ``1/tau = sqrt(sum n^4) / sum n^2``, ``V = 2 pi sqrt(sum n^2)``, ``R = 1``.
    The ambient dimension is the real dimension ``2N``.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    s2, s4 = _power_sums(N)
    tau = s2 / math.sqrt(s4)
    return ManifoldParams(D=1, N=2 * N, tau=tau, V=TWO_PI * math.sqrt(s2), R=1.0)


def sinusoid_speed(N):
    return math.sqrt(_power_sums(N)[0])


def sinusoid_geodesic_distance(omega1, omega2, N):
    """Arc length between two sinusoids along the constant-speed curve."""
    gap = np.abs(np.mod(np.asarray(omega1, dtype=float) - np.asarray(omega2, dtype=float), TWO_PI))
    return np.minimum(gap, TWO_PI - gap) * sinusoid_speed(N)


def sinusoid_manifold(N):
    """The one-dimensional manifold of sampled sinusoids in ``C^N``."""
    k = np.arange(1, N + 1)

    def eval_fn(theta):
        return np.exp(1j * theta[:, :1] * k[None, :])

    def geodesic(t1, t2):
        return sinusoid_geodesic_distance(t1[:, 0], t2[:, 0], N)

    return ManifoldModel(
        "sinusoid", 1, N, eval_fn, 0.0, TWO_PI, periodic=True,
        geometry=sinusoid_geometry(N), geodesic_fn=geodesic,
    )


def circle_manifold(radius):
    """Circle of the given radius in the plane, as a real-valued model in ``C^2``."""

    def eval_fn(theta):
        t = theta[:, 0]
        return np.stack([radius * np.cos(t), radius * np.sin(t)], axis=1).astype(complex)

    def geodesic(t1, t2):
        gap = np.abs(np.mod(t1[:, 0] - t2[:, 0], TWO_PI))
        return radius * np.minimum(gap, TWO_PI - gap)

    geometry = ManifoldParams(D=1, N=2, tau=radius, V=TWO_PI * radius, R=1.0)
    return ManifoldModel("circle", 1, 2, eval_fn, 0.0, TWO_PI, periodic=True,
                         geometry=geometry, geodesic_fn=geodesic)


def load_custom_manifold(path):
    """Manifold interpolated (multilinearly) from a tensor grid stored as CSV.

    Columns whose names start with ``theta`` hold the parameters; the rest are
    point coordinates, interleaved ``re, im``.  Rows must cover a full tensor
    grid of parameter values.  The result is flagged ``trusted=False`` since
    nothing guarantees the grid samples a smooth embedded submanifold.
    """
    from scipy.interpolate import RegularGridInterpolator

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader if row])
    theta_cols = [i for i, name in enumerate(header) if name.strip().startswith("theta")]
    coord_cols = [i for i in range(len(header)) if i not in theta_cols]
    if not theta_cols or not coord_cols or len(coord_cols) % 2:
        raise ValueError("custom manifold CSV needs theta columns and an even number of re/im columns")
    D = len(theta_cols)
    thetas = rows[:, theta_cols]
    axes = [np.unique(thetas[:, d]) for d in range(D)]
    shape = tuple(len(a) for a in axes)
    if math.prod(shape) != len(rows):
        raise ValueError(f"parameter values do not form a full tensor grid {shape}")
    order = np.lexsort(thetas.T[::-1])
    points = complexify(rows[order][:, coord_cols]).reshape(shape + (-1,))
    interp = RegularGridInterpolator(axes, points, method="linear")
    lower = [a[0] for a in axes]
    upper = [a[-1] for a in axes]
    return ManifoldModel("custom", D, points.shape[-1], interp, lower, upper, trusted=False)


MANIFOLDS = {"sinusoid": sinusoid_manifold, "custom": load_custom_manifold}


def get_manifold(name, **kwargs):
    if name not in MANIFOLDS:
        raise ValueError(f"unknown manifold {name!r}; expected one of {sorted(MANIFOLDS)}")
    return MANIFOLDS[name](**kwargs)


# --------------------------------------------------------------------------
# chords


@dataclass
class ChordSet:
    """Unit-normalized differences of manifold points."""

    chords: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    seed: int | None
    min_separation: float
    separations: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.chords)

    @property
    def dim(self):
        return self.chords.shape[1]

    def realified(self):
        """Same chords in the real ``2N``-dimensional layout (still unit norm)."""
        return ChordSet(realify(self.chords).astype(complex), self.theta1, self.theta2,
                        self.seed, self.min_separation, self.separations)

    def to_csv(self, path):
        D = self.theta1.shape[1]
        if D == 1:
            tcols = ["theta1", "theta2"]
        else:
            tcols = [f"theta1_{d}" for d in range(D)] + [f"theta2_{d}" for d in range(D)]
        ccols = [f"c{i}_{part}" for i in range(self.dim) for part in ("re", "im")]
        body = np.hstack([self.theta1, self.theta2, realify(self.chords)])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(tcols + ccols)
            for row in body:
                writer.writerow([repr(float(v)) for v in row])


def default_min_separation(model):
    return 1e-8 * math.sqrt(model.ambient_n)


def chords_from_pairs(model, theta1, theta2, min_separation=0.0):
    """Chords for explicitly given parameter pairs."""
    theta1 = model._params(theta1)
    theta2 = model._params(theta2)
    diff = model.eval(theta1) - model.eval(theta2)
    sep = np.linalg.norm(diff, axis=1)
    if np.any(sep <= min_separation) or np.any(sep == 0):
        raise ValueError("a forced pair is closer than min_separation")
    return ChordSet(diff / sep[:, None], theta1, theta2, None, min_separation, sep)


def _random_directions(rng, count, D):
    v = rng.standard_normal((count, D))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _step(model, theta, direction, size):
    """Move from ``theta`` by ``size * direction``, staying inside the domain."""
    target = theta + size[:, None] * direction
    if model.periodic:
        return model.wrap(target)
    outside = np.any((target < model.lower) | (target > model.upper), axis=1)
    target[outside] = theta[outside] - size[outside, None] * direction[outside]
    return np.clip(target, model.lower, model.upper)


def _local_speed(model):
    centre = (model.lower + model.upper) / 2
    h = 1e-4 * float(np.max(model.width))
    speeds = []
    for d in range(model.D):
        e = np.zeros(model.D)
        e[d] = h
        pts = model.eval(np.stack([centre + e, centre - e]))
        speeds.append(np.linalg.norm(pts[0] - pts[1]) / (2 * h))
    return max(max(speeds), 1e-300)


def sample_chords(model, count, seed, min_separation=None, stratum=True):
    """Sample ``count`` chords of ``model``.

    Most pairs are drawn uniformly from the parameter box.  When ``count`` is
    at least ``4 * 32`` a quarter of the budget goes to a short-chord stratum:
    32 geometrically spaced parameter gaps from half the domain width down to
    the gap whose chord length is about ``min_separation``, each paired with
    a random base point and direction.  Pairs closer than ``min_separation``
    in ambient norm are rejected.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if min_separation is None:
        min_separation = default_min_separation(model)
    if min_separation < 0:
        raise ValueError("min_separation must be >= 0")
    rng = _rng.stream(seed, _rng.SAMPLES)
    D = model.D

    n_strat = 0
    if stratum and count >= 4 * STRATUM_LEVELS:
        n_strat = STRATUM_LEVELS * (count // (4 * STRATUM_LEVELS))

    strat = None
    if n_strat:
        reps = n_strat // STRATUM_LEVELS
        top = float(np.min(model.width)) / 2
        floor = 2 * max(min_separation, 1e-8 * math.sqrt(model.ambient_n)) / _local_speed(model)
        floor = min(max(floor, top * 1e-14), top)
        gaps = np.repeat(np.geomspace(top, floor, STRATUM_LEVELS), reps)
        base = model.lower + rng.random((n_strat, D)) * model.width
        other = _step(model, base, _random_directions(rng, n_strat, D), gaps)
        diff = model.eval(base) - model.eval(other)
        sep = np.linalg.norm(diff, axis=1)
        keep = (sep > min_separation) & (sep > 0)
        strat = (base[keep], other[keep], diff[keep])

    # uniform pairs fill whatever the stratum did not
    n_uniform = count - (0 if strat is None else len(strat[0]))
    t1_parts, t2_parts, d_parts = [], [], []
    accepted = drawn = 0
    while accepted < n_uniform:
        batch = max(2 * (n_uniform - accepted), 16)
        a = model.lower + rng.random((batch, D)) * model.width
        b = model.lower + rng.random((batch, D)) * model.width
        diff = model.eval(a) - model.eval(b)
        sep = np.linalg.norm(diff, axis=1)
        keep = np.flatnonzero((sep > min_separation) & (sep > 0))[: n_uniform - accepted]
        drawn += batch
        accepted += len(keep)
        t1_parts.append(a[keep])
        t2_parts.append(b[keep])
        d_parts.append(diff[keep])
        if drawn >= 1000 and accepted < 0.01 * drawn:
            raise ValueError(
                f"rejected {drawn - accepted} of {drawn} pairs; use a smaller min_separation"
            )
    if strat is not None:
        t1_parts.append(strat[0])
        t2_parts.append(strat[1])
        d_parts.append(strat[2])

    theta1 = np.concatenate(t1_parts)
    theta2 = np.concatenate(t2_parts)
    diff = np.concatenate(d_parts)
    sep = np.linalg.norm(diff, axis=1)
    return ChordSet(diff / sep[:, None], theta1, theta2, seed, float(min_separation), sep)


# --------------------------------------------------------------------------
# condition-number checks


@dataclass
class SelfAvoidanceReport:
    tau: float
    pair_count: int
    in_range: int
    violations: int
    max_excess: float
    status: str

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class CurvatureReport:
    bound: float
    max_curvature: float
    sample_count: int
    violations: int
    rtol: float
    status: str

    def to_dict(self):
        return dict(self.__dict__)


def _tau_of(model, geometry):
    if geometry is None:
        geometry = model.geometry
    if geometry is None:
        raise ValueError(f"manifold {model.name!r} has no known tau; pass geometry")
    return float(geometry.tau if isinstance(geometry, ManifoldParams) else geometry)


def _pairs_for_checks(model, pair_count, rng):
    """Half uniform pairs, half local pairs with log-uniform parameter gaps."""
    n_local = pair_count // 2
    n_uniform = pair_count - n_local
    D = model.D
    a = model.lower + rng.random((n_uniform, D)) * model.width
    b = model.lower + rng.random((n_uniform, D)) * model.width
    top = float(np.min(model.width)) / 2
    gaps = top * 10.0 ** (-6 * rng.random(n_local))
    base = model.lower + rng.random((n_local, D)) * model.width
    other = _step(model, base, _random_directions(rng, n_local, D), gaps)
    return np.vstack([a, base]), np.vstack([b, other])


def verify_self_avoidance(model, geometry=None, pair_count=10_000, seed=0, slack=1e-9):
    """Check the self-avoidance inequalities implied by condition number ``1/tau``.

    For sampled pairs with ``0 < ||p - q|| <= 3 tau / 8`` this checks

    * ``d_M(p, q) <= tau - tau sqrt(1 - 2 ||p - q|| / tau)``
    * ``||p - q|| >= d_M - d_M^2 / (2 tau)``

    and counts pairs violating either by more than ``slack`` (relative to the
    compared magnitudes, floored at 1).  ``geometry`` may be a
    :class:`ManifoldParams` or a bare ``tau``; inflating it is a useful
    negative control.
    """
    tau = _tau_of(model, geometry)
    if not model.has_geodesic:
        raise ValueError(f"manifold {model.name!r} has no geodesic distance")
    rng = _rng.stream(seed, _rng.SAMPLES)
    t1, t2 = _pairs_for_checks(model, pair_count, rng)
    euclid = np.linalg.norm(model.eval(t1) - model.eval(t2), axis=1)
    geo = model.geodesic_distance(t1, t2)
    mask = (euclid > 0) & (euclid <= 3 * tau / 8)
    e, d = euclid[mask], geo[mask]
    if len(e) == 0:
        return SelfAvoidanceReport(tau, pair_count, 0, 0, 0.0, "inconclusive")
    # tau - tau sqrt(1 - a) written without cancellation
    geo_cap = 2 * e / (1 + np.sqrt(1 - 2 * e / tau))
    excess1 = (d - geo_cap) / np.maximum(1.0, geo_cap)
    excess2 = ((d - d**2 / (2 * tau)) - e) / np.maximum(1.0, e)
    excess = np.maximum(excess1, excess2)
    violations = int(np.count_nonzero(excess > slack))
    return SelfAvoidanceReport(
        tau, pair_count, int(mask.sum()), violations, float(excess.max()),
        "pass" if violations == 0 else "fail",
    )


def _fd_steps(theta):
    eps = np.finfo(float).eps
    scale = np.maximum(1.0, np.abs(theta))
    h1 = eps ** (1 / 3) * scale
    h2 = eps ** (1 / 4) * scale
    with np.errstate(over="ignore", invalid="ignore"):
        bad = ~np.isfinite(theta) | (theta + h1 == theta) | (theta + h2 == theta) | ~np.isfinite(h2 * h2)
    if np.any(bad):
        raise FloatingPointError("finite-difference step under- or overflows at this parameter")
    return h1, h2


def normal_curvature(model, theta, direction):
    """Curvature of the geodesic through ``theta`` leaving in ``direction``.

    The second directional derivative of the parameterization, projected off
    the tangent space and divided by the squared speed, equals the norm of
    the geodesic's acceleration at unit speed.
    """
    theta = np.asarray(theta, dtype=float).reshape(model.D)
    v = np.asarray(direction, dtype=float).reshape(model.D)
    v = v / np.linalg.norm(v)
    h1, h2 = _fd_steps(theta)
    h1, h2 = float(np.max(h1)), float(np.max(h2))

    cols = []
    for d in range(model.D):
        e = np.zeros(model.D)
        e[d] = h1
        pts = model.eval(np.stack([theta + e, theta - e]))
        cols.append(realify(pts[0] - pts[1]) / (2 * h1))
    jac = np.stack(cols, axis=1)
    pts = model.eval(np.stack([theta + h2 * v, theta, theta - h2 * v]))
    accel = realify(pts[0] - 2 * pts[1] + pts[2]) / h2**2
    q, _ = np.linalg.qr(jac)
    normal = accel - q @ (q.T @ accel)
    speed = np.linalg.norm(jac @ v)
    kappa = float(np.linalg.norm(normal) / speed**2)
    if not math.isfinite(kappa):
        raise FloatingPointError(f"curvature estimate is not finite at theta={theta}")
    return kappa


def verify_curvature_bound(model, geometry=None, sample_count=1000, seed=0, rtol=1e-3):
    """Estimate geodesic curvature by finite differences and compare with ``1/tau``.

    For one-dimensional models the samples are evenly spaced across the
    parameter interval; otherwise base points and directions are random.
    """
    tau = _tau_of(model, geometry)
    if model.D == 1:
        thetas = model.lower + (np.arange(sample_count) + 0.5) / sample_count * model.width
        thetas = thetas.reshape(-1, 1)
        dirs = np.ones((sample_count, 1))
    else:
        rng = _rng.stream(seed, _rng.SAMPLES)
        thetas = model.lower + rng.random((sample_count, model.D)) * model.width
        dirs = _random_directions(rng, sample_count, model.D)
    kappa = np.array([normal_curvature(model, t, v) for t, v in zip(thetas, dirs)])
    bound = 1 / tau
    violations = int(np.count_nonzero(kappa > bound * (1 + rtol)))
    return CurvatureReport(bound, float(kappa.max()), sample_count, violations, rtol,
                           "pass" if violations == 0 else "fail")
