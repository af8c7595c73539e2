"""Empirical embedding quality of measurement operators.

Every distortion reported here is a *lower-bound estimate*: the worst case is
a supremum over infinitely many chords (or, for the RIP, an NP-hard
combinatorial maximum), and sampling can only approach it from below.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .linops import (
    DimensionError,
    LinearMap,
    compose,
    make_dbd,
    make_dense_subgaussian,
    make_devore_binary,
    make_partial_circulant,
    make_rademacher_diag,
    make_random_convolution,
    make_subsampled_dft,
    make_unitary_dft,
)
from .manifolds import sample_chords

log = logging.getLogger(__name__)

ESTIMATE_KIND = "lower-bound estimate"
COMPARE_FAMILIES = (
    "dense_gaussian",
    "dense_rademacher",
    "subsampled_dft",
    "partial_circulant",
    "random_convolution",
    "dbd",
    "devore_binary",
    "unitary_dft",
)
CSV_COLUMNS = (
    "family", "m", "n", "seed", "sample_count", "delta_sq_max", "delta_nonsq_max",
    "p50", "p90", "p99", "argmax_theta1", "argmax_theta2",
)
_CHUNK = 4096


def _descriptor_seed(desc):
    if desc is None:
        return None
    if desc.family == "composed":
        return [_descriptor_seed(c) for c in desc.children]
    return desc.seed


def worker_count(requested=None):
    """Worker threads, capped by the ``STABLE_EMBED_THREADS`` environment variable."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("STABLE_EMBED_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


@dataclass
class DistortionReport:
    """Distortion statistics of ``||A u||^2`` over a set of unit vectors."""

    op_descriptor: dict | None
    sample_count: int
    delta_hat_max: float
    delta_hat_nonsq_max: float
    quantiles: dict
    argmax_pair: list | None
    seeds: dict
    norms_sq: np.ndarray = field(default=None, repr=False, compare=False)
    skipped: int = field(default=0, compare=False)
    estimate_kind: str = field(default=ESTIMATE_KIND, init=False, compare=False)

    @classmethod
    def from_norms(cls, norms_sq, op, pairs=None, sample_seed=None, skipped=0):
        norms_sq = np.asarray(norms_sq, dtype=float)
        sq = np.abs(norms_sq - 1)
        nonsq = np.abs(np.sqrt(norms_sq) - 1)
        worst = int(np.argmax(sq))
        p50, p90, p99 = np.quantile(sq, [0.5, 0.9, 0.99])
        desc = getattr(op, "descriptor", None)
        return cls(
            op_descriptor=None if desc is None else desc.to_dict(),
            sample_count=len(norms_sq),
            delta_hat_max=float(sq[worst]),
            delta_hat_nonsq_max=float(nonsq.max()),
            quantiles={"p50": float(p50), "p90": float(p90), "p99": float(p99)},
            argmax_pair=None if pairs is None else pairs(worst),
            seeds={"operator_seed": _descriptor_seed(desc), "sample_seed": sample_seed},
            norms_sq=norms_sq,
            skipped=skipped,
        )

    def to_dict(self):
        return {
            "op_descriptor": self.op_descriptor,
            "sample_count": self.sample_count,
            "delta_hat_max": self.delta_hat_max,
            "delta_hat_nonsq_max": self.delta_hat_nonsq_max,
            "quantiles": dict(self.quantiles),
            "argmax_pair": self.argmax_pair,
            "seeds": dict(self.seeds),
        }


@dataclass
class RipReport:
    op_descriptor: dict | None
    sparsity_S: int
    trial_count: int
    delta_hat: float
    support_policy: str
    estimate_kind: str = field(default=ESTIMATE_KIND, init=False, compare=False)

    def to_dict(self):
        return {
            "op_descriptor": self.op_descriptor,
            "sparsity_S": self.sparsity_S,
            "trial_count": self.trial_count,
            "delta_hat": self.delta_hat,
            "support_policy": self.support_policy,
        }


def _squared_norms(op, vectors):
    """``||op v||^2`` for each row of ``vectors``, in column batches."""
    out = np.empty(len(vectors))
    for start in range(0, len(vectors), _CHUNK):
        block = op.apply(np.ascontiguousarray(vectors[start:start + _CHUNK].T))
        out[start:start + _CHUNK] = np.sum(block.real**2 + block.imag**2, axis=0)
    return out


def measure_embedding(op: LinearMap, chords) -> DistortionReport:
    """Distortion of ``op`` over a chord set."""
    if op.n != chords.dim:
        raise DimensionError(f"operator has {op.n} columns but chords live in dimension {chords.dim}")
    norms_sq = _squared_norms(op, chords.chords)

    def pair(i):
        return [chords.theta1[i].tolist(), chords.theta2[i].tolist()]

    return DistortionReport.from_norms(norms_sq, op, pair, chords.seed)


def rescale_report(report: DistortionReport, alpha: float) -> DistortionReport:
    """The report ``alpha * op`` would produce, derived from ``op``'s report."""
    scaled = DistortionReport.from_norms(report.norms_sq * abs(alpha) ** 2, None)
    scaled.op_descriptor = None
    scaled.seeds = dict(report.seeds)
    return scaled


def norm_inequality_violations(report: DistortionReport, atol: float = 4 * np.finfo(float).eps) -> int:
    """Count chords breaking the squared/non-squared distortion inequalities.

    Pointwise, ``|a - 1| <= |a^2 - 1|`` and, when ``|a - 1| <= 1``,
    ``|a^2 - 1| <= 3 |a - 1|`` for ``a = ||A u||``.
    """
    sq = np.abs(report.norms_sq - 1)
    nonsq = np.abs(np.sqrt(report.norms_sq) - 1)
    bad = nonsq > sq + atol
    valid = nonsq <= 1
    bad |= valid & (sq > 3 * nonsq + atol)
    return int(np.count_nonzero(bad))


def measure_rip(op: LinearMap, S: int, trials: int, seed: int = 0,
                support_policy: str = "uniform_support") -> RipReport:
    """Empirical RIP distortion over random unit-norm ``S``-sparse vectors.

    Supports are uniform ``S``-subsets and values i.i.d. gaussian, normalized.
    With ``support_policy="worst_of_batch"`` the worst support found is then
    examined exactly through the eigenvalues of its Gram matrix.
    """
    if not 1 <= S <= op.n:
        raise ValueError(f"need 1 <= S <= n={op.n}, got S={S}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if support_policy not in ("uniform_support", "worst_of_batch"):
        raise ValueError(f"unknown support_policy {support_policy!r}")
    rng = _rng.stream(seed, _rng.SAMPLES)
    worst, worst_support = -1.0, None
    batch = max(1, min(trials, _CHUNK, (1 << 22) // op.n))
    done = 0
    while done < trials:
        k = min(batch, trials - done)
        supports = np.argsort(rng.random((k, op.n)), axis=1)[:, :S]
        values = rng.standard_normal((k, S))
        values /= np.linalg.norm(values, axis=1, keepdims=True)
        x = np.zeros((op.n, k))
        x[supports.T, np.arange(k)[None, :]] = values.T
        y = op.apply(x)
        dist = np.abs(np.sum(y.real**2 + y.imag**2, axis=0) - 1)
        i = int(np.argmax(dist))
        if dist[i] > worst:
            worst, worst_support = float(dist[i]), np.sort(supports[i])
        done += k
    if support_policy == "worst_of_batch":
        cols = np.zeros((op.n, S))
        cols[worst_support, np.arange(S)] = 1.0
        sub = op.apply(cols)
        eig = np.linalg.eigvalsh(sub.conj().T @ sub)
        worst = max(worst, float(abs(eig[-1] - 1)), float(abs(1 - eig[0])))
    desc = op.descriptor
    return RipReport(None if desc is None else desc.to_dict(), S, trials, worst, support_policy)


def measure_jl_pointcloud(op: LinearMap, points) -> DistortionReport:
    """Distortion over all normalized pairwise differences of a point cloud.

    Duplicate points give zero differences; those pairs are skipped and
    counted in ``report.skipped``.
    """
    points = np.asarray(points, dtype=complex)
    if points.ndim != 2 or len(points) < 2:
        raise ValueError("need at least two points as rows of a 2-D array")
    if points.shape[1] != op.n:
        raise DimensionError(f"operator has {op.n} columns but points have dimension {points.shape[1]}")
    i, j = np.triu_indices(len(points), k=1)
    diffs = points[i] - points[j]
    norms = np.linalg.norm(diffs, axis=1)
    keep = norms > 0
    i, j = i[keep], j[keep]
    chords = diffs[keep] / norms[keep, None]
    if len(chords) == 0:
        raise ValueError("all points coincide")
    norms_sq = _squared_norms(op, chords)
    return DistortionReport.from_norms(
        norms_sq, op, lambda w: [int(i[w]), int(j[w])], None, skipped=int((~keep).sum())
    )


# --------------------------------------------------------------------------
# family comparison


def _devore_params(m, n):
    p = math.isqrt(m)
    if p * p != m or p < 2:
        raise DimensionError(f"devore_binary needs m = p^2, got m={m}")
    r = round(math.log(n, p)) - 1
    if r < 1 or p ** (r + 1) != n:
        raise DimensionError(f"devore_binary needs n = p^(r+1) with p={p}, got n={n}")
    return p, r


def build_family(family, m, n, seed, J=4):
    """Stable-embedding operator for one family at size ``m x n``.

    RIP matrices get a sign diagonal on the right (``Phi D_xi``); the random
    convolution is ``R_Omega C_xi`` as is; the DBD matrix is preceded by a
    full random circulant (``Phi C_xi``).  ``unitary_dft`` (``F D_xi``, square
    only) is an exact isometry used as a sanity check.
    """
    if family == "dense_gaussian":
        return compose(make_dense_subgaussian(m, n, "gaussian", seed), make_rademacher_diag(n, seed))
    if family == "dense_rademacher":
        return compose(make_dense_subgaussian(m, n, "rademacher", seed), make_rademacher_diag(n, seed))
    if family == "subsampled_dft":
        return compose(make_subsampled_dft(m, n, seed), make_rademacher_diag(n, seed))
    if family == "partial_circulant":
        return compose(make_partial_circulant(m, n, "gaussian", seed), make_rademacher_diag(n, seed))
    if family == "random_convolution":
        return make_random_convolution(m, n, seed)
    if family == "dbd":
        if m % J or n % J:
            raise DimensionError(f"dbd with J={J} needs J to divide m={m} and n={n}")
        return compose(make_dbd(m // J, n // J, J, "gaussian", seed), make_random_convolution(n, n, seed))
    if family == "devore_binary":
        p, r = _devore_params(m, n)
        return compose(make_devore_binary(p, r), make_rademacher_diag(n, seed))
    if family == "unitary_dft":
        if m != n:
            raise DimensionError(f"unitary_dft needs m == n, got m={m}, n={n}")
        return compose(make_unitary_dft(n), make_rademacher_diag(n, seed))
    raise ValueError(f"unknown family {family!r}; expected one of {COMPARE_FAMILIES}")


@dataclass
class ComparisonTable:
    rows: list
    failures: list

    def medians(self):
        """Median ``delta_sq_max`` over seeds, keyed by family then ``m``."""
        groups = {}
        for row in self.rows:
            groups.setdefault(row["family"], {}).setdefault(row["m"], []).append(row["delta_sq_max"])
        return {fam: {m: float(np.median(v)) for m, v in sorted(ms.items())} for fam, ms in groups.items()}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow([_csv_value(row[c]) for c in CSV_COLUMNS])


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    return v


def compare_families(manifold, families, m_grid, chords_per_trial=10_000, seeds_per_cell=10,
                     base_seed=0, J=4, min_separation=None, workers=None, realify=False):
    """Median embedding distortion for each family across a grid of ``m``.

    One chord set is drawn per seed index and shared by every family and
    ``m``; operator seeds are derived from ``base_seed`` and the seed index,
    so results do not depend on ``workers``.  Cells that cannot be built are
    recorded in ``failures`` and skipped.  With ``realify=True`` chords are
    laid out as ``2N`` reals and operators are built with ``n = 2N``.
    """
    n = manifold.ambient_n if realify else manifold.N
    chord_sets = [
        sample_chords(manifold, chords_per_trial, _rng.derive_seed(base_seed, 1, s), min_separation)
        for s in range(seeds_per_cell)
    ]
    if realify:
        chord_sets = [c.realified() for c in chord_sets]
    cells = [(fam, m, s) for fam in families for m in m_grid for s in range(seeds_per_cell)]

    def run(cell):
        fam, m, s = cell
        op_seed = _rng.derive_seed(base_seed, 2, s)
        started = time.perf_counter()
        try:
            op = build_family(fam, m, n, op_seed, J)
            rep = measure_embedding(op, chord_sets[s])
        except Exception as exc:  # any construction failure marks the cell, run continues
            return None, {"family": fam, "m": m, "seed": op_seed, "error": f"{type(exc).__name__}: {exc}"}
        log.debug("cell %s m=%d seed#%d: %.3fs", fam, m, s, time.perf_counter() - started)
        t1, t2 = rep.argmax_pair
        row = {
            "family": fam, "m": m, "n": n, "seed": op_seed,
            "sample_count": rep.sample_count,
            "delta_sq_max": rep.delta_hat_max,
            "delta_nonsq_max": rep.delta_hat_nonsq_max,
            "p50": rep.quantiles["p50"], "p90": rep.quantiles["p90"], "p99": rep.quantiles["p99"],
            "argmax_theta1": t1[0] if len(t1) == 1 else " ".join(map(repr, t1)),
            "argmax_theta2": t2[0] if len(t2) == 1 else " ".join(map(repr, t2)),
            "_report": rep,
        }
        return row, None

    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        results = list(pool.map(run, cells))
    rows = [r for r, _ in results if r is not None]
    failures = [f for _, f in results if f is not None]
    return ComparisonTable(rows, failures)
