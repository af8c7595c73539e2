"""Closed-form measurement and RIP-order bounds.

All logarithms are natural.  Switching to base 2 would inflate every RIP order
by roughly 1.44x, so do not mix these values with base-2 tables.

The corollary bounds carry unknown universal constants.  They are returned as
real-valued scaling laws with a caller-supplied leading constant, not as
certified measurement counts; round up with ``math.ceil`` if an integer is
needed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy.optimize import brentq

COROLLARIES = ("subgaussian", "fourier", "circulant", "random_conv", "dbd", "deterministic")

# success probability as stated alongside each bound; not normalised
FAILURE_PROBABILITY_FORM = {
    "subgaussian": "1 - C2*rho",
    "fourier": "1 - C2*rho",
    "circulant": "1 - C2*rho (N large enough)",
    "random_conv": "1 - C2*rho",
    "dbd": "1 - C2*rho (NJ large enough)",
    "deterministic": "1 - rho",
}

# 2 * 1764: covering regularity 2R/sqrt(pi) at chord resolution T
_RIP_ORDER_CONST = 3528.0


def _domain(cond, msg):
    if not cond:
        raise ValueError(msg)


@dataclass(frozen=True)
class ManifoldParams:
    """Geometry of a compact ``D``-dimensional submanifold of ``R^N``."""

    D: int
    N: int
    tau: float
    V: float
    R: float = 1.0

    def __post_init__(self):
        _domain(self.D >= 1, f"D must be >= 1, got {self.D}")
        _domain(self.N >= self.D, f"N must be >= D, got N={self.N}, D={self.D}")
        _domain(self.tau > 0, f"tau must be positive, got {self.tau}")
        _domain(self.V > 0, f"V must be positive, got {self.V}")
        _domain(self.R >= 1, f"R must be >= 1, got {self.R}")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EmbeddingBudget:
    delta_m: float
    rho: float
    delta_m_prime: float
    T: float
    eps_T: float
    eps_E: float
    log_A_bound: float
    log_E_bound: float
    S_required: float
    delta_required: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CorollaryBound:
    corollary: str
    constant_C: float
    m_required: float

    def to_dict(self):
        return asdict(self)


def _check_prob(delta_m, rho):
    _domain(0 < delta_m < 1, f"delta_m must lie in (0, 1), got {delta_m}")
    _domain(0 < rho < 1, f"rho must lie in (0, 1), got {rho}")


def rip_order_terms(params: ManifoldParams, delta_m: float, rho: float):
    """The three summands inside the RIP-order bound (before the factor 40)."""
    D, N, tau, V, R = params.D, params.N, params.tau, params.V, params.R
    covering = 2 * D * math.log(
        _RIP_ORDER_CONST * R * math.sqrt(D / 2 + 1) * (N + 1) ** 2 / (math.sqrt(math.pi) * delta_m**2 * tau)
    )
    tangent = (2 * D + 1) * math.log(1 + 21 * (N + 1) / delta_m)
    volume = math.log(8 * V**2 / rho)
    return covering, tangent, volume


def embedding_budget(params: ManifoldParams, delta_m: float, rho: float) -> EmbeddingBudget:
    """RIP order and conditioning that guarantee a stable manifold embedding.

    A matrix satisfying RIP-(S, delta) with ``S >= S_required`` and
    ``delta <= delta_required``, composed with a random sign diagonal and any
    unitary, stably embeds the manifold with conditioning ``delta_m`` with
    probability at least ``1 - rho``.  The intermediate covering quantities
    are returned so the chain can be audited.
    """
    _check_prob(delta_m, rho)
    D, N, tau, V, R = params.D, params.N, params.tau, params.V, params.R

    delta_m_prime = 2 * delta_m / 21
    T = delta_m**2 * tau / (1764 * (N + 1) ** 2)
    eps_T = chord_cover_resolution(T, tau)
    eps_E = delta_m_prime / (N + 1)
    log_A = D * math.log(
        _RIP_ORDER_CONST * R * math.sqrt(D / 2 + 1) * (N + 1) ** 2 / (math.sqrt(math.pi) * delta_m**2 * tau)
    ) + math.log(V)
    log_E = math.log(2) + 2 * log_A + (2 * D + 1) * math.log(1 + 2 / eps_E)

    covering, tangent, volume = rip_order_terms(params, delta_m, rho)
    S = 40 * (covering + tangent + volume)
    assert all(math.isfinite(v) for v in (log_A, log_E, S))
    return EmbeddingBudget(
        delta_m=delta_m,
        rho=rho,
        delta_m_prime=delta_m_prime,
        T=T,
        eps_T=eps_T,
        eps_E=eps_E,
        log_A_bound=log_A,
        log_E_bound=log_E,
        S_required=S,
        delta_required=delta_m / 42,
    )


def max_delta_for_order(params: ManifoldParams, S_available: float, rho: float, tol: float = 1e-12) -> float:
    """Smallest conditioning ``delta_m`` whose required RIP order fits ``S_available``.

    Simple bisection on the monotone map ``delta_m -> S_required``.  Raises
    ``ValueError`` if even ``delta_m -> 1`` needs more than ``S_available``.
    """
    _domain(0 < rho < 1, f"rho must lie in (0, 1), got {rho}")
    hi = 1 - 1e-12
    excess = lambda d: embedding_budget(params, d, rho).S_required - S_available
    if excess(hi) > 0:
        raise ValueError(f"RIP order {S_available} is too small for any delta_m < 1")
    lo = 1e-100
    if excess(lo) <= 0:
        return lo
    return brentq(excess, lo, hi, xtol=tol)


def jl_rip_order(point_count: int, rho: float) -> float:
    """RIP order ``40 log(4 |E| / rho)`` sufficient for a JL embedding of ``|E|`` points."""
    _domain(point_count >= 1, f"point_count must be >= 1, got {point_count}")
    _domain(0 < rho < 1, f"rho must lie in (0, 1), got {rho}")
    return 40 * math.log(4 * point_count / rho)


def corollary_core(params: ManifoldParams, delta_m: float, rho: float) -> float:
    """``D log(R N / (tau delta_m)) + log(V / rho)``, shared by every corollary."""
    return params.D * math.log(params.R * params.N / (params.tau * delta_m)) + math.log(params.V / rho)


def corollary_measurements(
    corollary: str,
    params: ManifoldParams,
    delta_m: float,
    rho: float,
    constant_C: float = 1.0,
) -> CorollaryBound:
    """Measurement-count scaling law for one structured operator family.

    Parameters
    ----------
    corollary : str
        One of ``COROLLARIES``.
    params : ManifoldParams
        For ``"dbd"`` the ambient dimension ``params.N`` is the full ``N J``
        and the returned count is the total row count ``M J``.
    delta_m, rho : float
        Target conditioning and failure probability, both in ``(0, 1)``.
    constant_C : float
        Leading universal constant; the true value is unknown.

    Raises
    ------
    ValueError
        If a logarithm would be taken of a nonpositive value, if ``N <= D``
        for the subgaussian ``log(N/D)`` factor, or if the bound is vacuous
        (nonpositive).
    """
    _check_prob(delta_m, rho)
    _domain(constant_C > 0, f"constant_C must be positive, got {constant_C}")
    if corollary not in COROLLARIES:
        raise ValueError(f"unknown corollary {corollary!r}; expected one of {COROLLARIES}")
    N = params.N
    core = corollary_core(params, delta_m, rho)
    _domain(core > 0, f"core term D log(RN/(tau delta)) + log(V/rho) = {core} is not positive")
    lead = constant_C / delta_m**2
    if corollary == "subgaussian":
        _domain(N > params.D, f"log(N/D) needs N > D, got N={N}, D={params.D}")
        value = lead * core * math.log(N / params.D)
    elif corollary in ("fourier", "random_conv"):
        value = lead * core * math.log(N) ** 4 * math.log(1 / rho)
    elif corollary == "circulant":
        value = lead * core * math.log(N) ** 4
    elif corollary == "dbd":
        value = lead * core * math.log(N) ** 6
    else:
        value = lead * core**2 * math.log(N) ** 2
    _domain(value > 0, f"{corollary} bound is not positive (N={N} too small for its log factors)")
    return CorollaryBound(corollary, float(constant_C), value)


def circulant_failure_ok(N: int, S: float, rho: float) -> bool:
    """Advisory: is ``N^(-(log N)(log^2 S)) <= rho``, i.e. is ``N`` large enough?"""
    _domain(N >= 1 and S >= 1, "need N >= 1 and S >= 1")
    log_fail = -math.log(N) * math.log(N) * math.log(S) ** 2
    return log_fail <= math.log(rho)


def geodesic_covering_count(D: int, V: float, R: float, eps: float) -> float:
    """``(2R/sqrt(pi))^D (sqrt(D/2+1))^D V / eps^D`` without manifold validation.

    Useful for other regularity conventions where ``R < 1``.
    """
    _domain(eps > 0, f"eps must be positive, got {eps}")
    _domain(D >= 1 and V > 0 and R > 0, "need D >= 1, V > 0, R > 0")
    return (2 * R / math.sqrt(math.pi)) ** D * math.sqrt(D / 2 + 1) ** D * V / eps**D


def geodesic_covering_bound(params: ManifoldParams, eps: float) -> float:
    """Upper bound on the number of geodesic ``eps``-balls covering the manifold."""
    return geodesic_covering_count(params.D, params.V, params.R, eps)


def covering_regularity(R: float) -> float:
    """Covering regularity in the ``2R/sqrt(pi)`` convention of earlier work."""
    return 2 * R / math.sqrt(math.pi)


def sphere_covering_bound(D: int, eps: float) -> float:
    """``(1 + 2/eps)^D`` points eps-cover the unit sphere of a D-dim subspace."""
    _domain(eps > 0, f"eps must be positive, got {eps}")
    return (1 + 2 / eps) ** D


def cover_pointset_bound(A_count: float, D: int, eps: float) -> float:
    """Size bound ``2 |A|^2 (1 + 2/eps)^(2D+1)`` of the finite chord proxy set."""
    _domain(A_count >= 1, f"A_count must be >= 1, got {A_count}")
    _domain(eps > 0, f"eps must be positive, got {eps}")
    return 2 * A_count**2 * (1 + 2 / eps) ** (2 * D + 1)


def chord_cover_resolution(T: float, tau: float) -> float:
    """Resolution ``4 sqrt(T / tau)`` at which tangent chords cover all chords.

    Only valid for ``0 < T <= 3 tau / 4``.
    """
    _domain(tau > 0, f"tau must be positive, got {tau}")
    _domain(T > 0, f"T must be positive, got {T}")
    if T > 0.75 * tau:
        raise ValueError(f"T={T} exceeds 3*tau/4={0.75 * tau}")
    return 4 * math.sqrt(T / tau)


def rip_operator_norm_bound(N: int, S: int, delta: float) -> float:
    """Spectral norm bound ``(N/S + 1)(1 + delta)`` for an RIP-(S, delta) matrix."""
    _domain(S >= 1, f"S must be >= 1, got {S}")
    _domain(N >= S, f"need N >= S, got N={N}, S={S}")
    _domain(0 <= delta < 1, f"delta must lie in [0, 1), got {delta}")
    return (N / S + 1) * (1 + delta)
