"""Matrix-free structured measurement operators.

Every operator acts on complex vectors (real input is promoted) and is
normalized so that ``E ||A x||^2 = ||x||^2`` for a fixed ``x``.  Operators are
rebuilt bit-exactly from an :class:`OperatorDescriptor`, which serializes to a
small JSON document.

``apply`` and ``adjoint`` accept either a single vector of shape ``(n,)`` or a
batch of column vectors of shape ``(n, k)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.fft
import scipy.sparse

from . import _rng

FAMILIES = (
    "dense_subgaussian",
    "subsampled_dft",
    "partial_circulant",
    "random_convolution",
    "dbd",
    "devore_binary",
    "rademacher_diag",
    "unitary_dft",
    "composed",
)
DISTS = ("gaussian", "rademacher")
SELECTION_POLICIES = ("first_m", "random")
DENSE_CAP = 2**22

_DESCRIPTOR_FIELDS = (
    "family", "m", "n", "seed", "selection", "dist",
    "block_params", "devore_params", "children",
)


class DimensionError(ValueError):
    """Operator or vector dimensions are invalid or do not chain."""


def _is_prime(p):
    if p < 2:
        return False
    return all(p % d for d in range(2, int(p**0.5) + 1))


@dataclass(frozen=True)
class OperatorDescriptor:
    """Serializable recipe from which an operator is rebuilt deterministically."""

    family: str
    m: int
    n: int
    seed: int = 0
    selection: Optional[tuple] = None
    dist: Optional[str] = None
    block_params: Optional[tuple] = None
    devore_params: Optional[tuple] = None
    children: Optional[tuple] = None

    def __post_init__(self):
        # normalise list-valued fields to tuples so descriptors hash and compare
        for name in ("selection", "block_params", "devore_params", "children"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(value))
        if self.selection is not None:
            object.__setattr__(self, "selection", tuple(int(i) for i in self.selection))
        self._validate()

    def _validate(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown operator family {self.family!r}")
        if self.m < 1 or self.n < 1:
            raise DimensionError(f"m and n must be >= 1, got m={self.m}, n={self.n}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.dist is not None and self.dist not in DISTS:
            raise ValueError(f"unknown dist {self.dist!r}; expected one of {DISTS}")
        if self.selection is not None:
            sel = np.asarray(self.selection)
            if len(sel) != self.m:
                raise DimensionError(f"selection has {len(sel)} entries, expected m={self.m}")
            if np.any(np.diff(sel) <= 0) or sel.min() < 0 or sel.max() >= self.n:
                raise DimensionError("selection must be strictly increasing indices below n")
        fam = self.family
        if fam in ("rademacher_diag", "unitary_dft") and self.m != self.n:
            raise DimensionError(f"{fam} is square, got m={self.m}, n={self.n}")
        if fam in ("subsampled_dft", "partial_circulant", "random_convolution") and self.m > self.n:
            raise DimensionError(f"{fam} needs m <= n, got m={self.m}, n={self.n}")
        if fam == "dbd":
            if self.block_params is None or len(self.block_params) != 3:
                raise ValueError("dbd descriptor needs block_params [M, N, J]")
            M, N, J = self.block_params
            if (self.m, self.n) != (M * J, N * J):
                raise DimensionError(f"dbd needs m=M*J, n=N*J; got m={self.m}, n={self.n} for {self.block_params}")
        if fam == "devore_binary":
            if self.devore_params is None or len(self.devore_params) != 2:
                raise ValueError("devore_binary descriptor needs devore_params [p, r]")
            p, r = self.devore_params
            if (self.m, self.n) != (p**2, p ** (r + 1)):
                raise DimensionError(f"devore_binary needs m=p^2, n=p^(r+1); got m={self.m}, n={self.n}")
        if fam == "composed" and self.children is None:
            raise ValueError("composed descriptor needs a children list")

    def to_dict(self):
        return {
            "family": self.family,
            "m": int(self.m),
            "n": int(self.n),
            "seed": int(self.seed),
            "selection": None if self.selection is None else list(self.selection),
            "dist": self.dist,
            "block_params": None if self.block_params is None else [int(v) for v in self.block_params],
            "devore_params": None if self.devore_params is None else [int(v) for v in self.devore_params],
            "children": None if self.children is None else [c.to_dict() for c in self.children],
        }

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(_DESCRIPTOR_FIELDS)
        if unknown:
            raise ValueError(f"unknown descriptor fields: {sorted(unknown)}")
        kw = dict(d)
        if kw.get("children") is not None:
            kw["children"] = [cls.from_dict(c) for c in kw["children"]]
        for key in ("m", "n", "seed"):
            if key in kw and (isinstance(kw[key], bool) or not isinstance(kw[key], int)):
                raise ValueError(f"descriptor field {key!r} must be an integer")
        return cls(**kw)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _frozen(a):
    a = np.array(a)
    a.flags.writeable = False
    return a


class LinearMap:
    """Matrix-free linear operator ``C^n -> C^m``.

    Subclasses implement ``_matmat`` and ``_rmatmat`` on ``(n, k)`` and
    ``(m, k)`` complex arrays.  Instances are immutable.
    """

    def __init__(self, m, n, descriptor=None):
        self.m = int(m)
        self.n = int(n)
        self.descriptor = descriptor

    @property
    def shape(self):
        return (self.m, self.n)

    def _check(self, x, size, what):
        x = np.asarray(x, dtype=complex)
        if x.ndim not in (1, 2) or x.shape[0] != size:
            raise DimensionError(f"{what} expects leading dimension {size}, got shape {x.shape}")
        return x

    def apply(self, x):
        x = self._check(x, self.n, "apply")
        if x.ndim == 1:
            return self._matmat(x[:, None])[:, 0]
        return self._matmat(x)

    def adjoint(self, y):
        y = self._check(y, self.m, "adjoint")
        if y.ndim == 1:
            return self._rmatmat(y[:, None])[:, 0]
        return self._rmatmat(y)

    __call__ = apply

    def __matmul__(self, x):
        if isinstance(x, LinearMap):
            return compose(self, x)
        return self.apply(x)

    @property
    def H(self):
        return _Adjoint(self)

    def _matmat(self, x):
        raise NotImplementedError

    def _rmatmat(self, y):
        raise NotImplementedError

    def __repr__(self):
        fam = self.descriptor.family if self.descriptor is not None else type(self).__name__
        return f"<{type(self).__name__} {fam} {self.m}x{self.n}>"


class _Adjoint(LinearMap):
    def __init__(self, op):
        super().__init__(op.n, op.m)
        self.op = op

    def _matmat(self, x):
        return self.op._rmatmat(x)

    def _rmatmat(self, y):
        return self.op._matmat(y)

    @property
    def H(self):
        return self.op


class RademacherDiag(LinearMap):
    """Diagonal sign flip ``D_xi``."""

    def __init__(self, xi, descriptor=None):
        xi = np.asarray(xi, dtype=float)
        if not np.all(np.abs(xi) == 1.0):
            raise ValueError("Rademacher entries must be exactly +1 or -1")
        super().__init__(len(xi), len(xi), descriptor)
        self.xi = _frozen(xi)

    def _matmat(self, x):
        return self.xi[:, None] * x

    _rmatmat = _matmat


class UnitaryDFT(LinearMap):
    """Unitary DFT, entries ``exp(-2 pi i j k / n) / sqrt(n)``."""

    def _matmat(self, x):
        return scipy.fft.fft(x, axis=0, norm="ortho")

    def _rmatmat(self, y):
        return scipy.fft.ifft(y, axis=0, norm="ortho")


class DenseMap(LinearMap):
    """Explicit matrix."""

    def __init__(self, matrix, descriptor=None):
        matrix = np.asarray(matrix)
        if matrix.ndim != 2:
            raise DimensionError("matrix must be two-dimensional")
        super().__init__(*matrix.shape, descriptor)
        self.matrix = _frozen(matrix)

    def _matmat(self, x):
        return self.matrix @ x

    def _rmatmat(self, y):
        return self.matrix.conj().T @ y


class SubsampledDFT(LinearMap):
    """``sqrt(n/m) R_Omega F``: FFT followed by row selection."""

    def __init__(self, n, selection, descriptor=None):
        selection = np.asarray(selection, dtype=np.intp)
        super().__init__(len(selection), n, descriptor)
        self.selection = _frozen(selection)
        self.scale = np.sqrt(n / len(selection))

    def _matmat(self, x):
        return self.scale * scipy.fft.fft(x, axis=0, norm="ortho")[self.selection]

    def _rmatmat(self, y):
        z = np.zeros((self.n, y.shape[1]), dtype=complex)
        z[self.selection] = y
        return self.scale * scipy.fft.ifft(z, axis=0, norm="ortho")


class PartialCirculant(LinearMap):
    """Selected rows of the circular convolution ``x -> probe (*) x``.

    Row ``i`` of the full circulant is ``probe[(i - j) mod n]``, so the first
    column equals the probe.
    """

    def __init__(self, probe, selection, descriptor=None):
        probe = np.asarray(probe)
        selection = np.asarray(selection, dtype=np.intp)
        super().__init__(len(selection), len(probe), descriptor)
        self.probe = _frozen(probe)
        self.selection = _frozen(selection)
        self._probe_hat = _frozen(scipy.fft.fft(probe))

    def _matmat(self, x):
        full = scipy.fft.ifft(self._probe_hat[:, None] * scipy.fft.fft(x, axis=0), axis=0)
        return full[self.selection]

    def _rmatmat(self, y):
        z = np.zeros((self.n, y.shape[1]), dtype=complex)
        z[self.selection] = y
        return scipy.fft.ifft(self._probe_hat.conj()[:, None] * scipy.fft.fft(z, axis=0), axis=0)


class RandomConvolution(LinearMap):
    """``sqrt(n/m) R_Omega F D_xi F^H``.

    ``F D_xi F^H`` is a unitary circulant; it is applied with two FFTs.
    """

    def __init__(self, xi, selection, descriptor=None):
        xi = np.asarray(xi, dtype=float)
        selection = np.asarray(selection, dtype=np.intp)
        super().__init__(len(selection), len(xi), descriptor)
        self.xi = _frozen(xi)
        self.selection = _frozen(selection)
        self.scale = np.sqrt(self.n / self.m)

    def _circ(self, x):
        return scipy.fft.fft(self.xi[:, None] * scipy.fft.ifft(x, axis=0, norm="ortho"), axis=0, norm="ortho")

    def _matmat(self, x):
        return self.scale * self._circ(x)[self.selection]

    def _rmatmat(self, y):
        z = np.zeros((self.n, y.shape[1]), dtype=complex)
        z[self.selection] = y
        # F D F^H is Hermitian since D is real
        return self.scale * self._circ(z)


class BlockDiagonal(LinearMap):
    """Block-diagonal operator holding ``J`` independent ``M x N`` blocks."""

    def __init__(self, blocks, descriptor=None):
        blocks = np.asarray(blocks)
        J, M, N = blocks.shape
        super().__init__(M * J, N * J, descriptor)
        self.blocks = _frozen(blocks)

    def _matmat(self, x):
        J, M, N = self.blocks.shape
        out = np.einsum("jmn,jnk->jmk", self.blocks, x.reshape(J, N, -1))
        return out.reshape(M * J, -1)

    def _rmatmat(self, y):
        J, M, N = self.blocks.shape
        out = np.einsum("jmn,jmk->jnk", self.blocks.conj(), y.reshape(J, M, -1))
        return out.reshape(N * J, -1)


class SparseMap(LinearMap):
    """Operator backed by a scipy sparse matrix."""

    def __init__(self, matrix, descriptor=None):
        matrix = scipy.sparse.csr_matrix(matrix)
        super().__init__(*matrix.shape, descriptor)
        self.matrix = matrix
        self._matrix_h = matrix.conj().T.tocsr()

    def _matmat(self, x):
        return np.asarray(self.matrix @ x)

    def _rmatmat(self, y):
        return np.asarray(self._matrix_h @ y)


class Composed(LinearMap):
    """Product ``A_0 A_1 ... A_k``; the rightmost child is applied first.

    An empty product is the identity on ``C^n``.
    """

    def __init__(self, children, n=None, descriptor=None):
        children = tuple(children)
        if not children:
            if n is None:
                raise DimensionError("an empty composition needs an explicit dimension")
            super().__init__(n, n, descriptor)
        else:
            for i in range(len(children) - 1):
                left, right = children[i], children[i + 1]
                if left.n != right.m:
                    raise DimensionError(
                        f"cannot compose child {i} ({left.m}x{left.n}) with child {i + 1} "
                        f"({right.m}x{right.n}): {left.n} != {right.m}"
                    )
            super().__init__(children[0].m, children[-1].n, descriptor)
        self.children = children

    def _matmat(self, x):
        for op in reversed(self.children):
            x = op._matmat(x)
        return x

    def _rmatmat(self, y):
        for op in self.children:
            y = op._rmatmat(y)
        return y


class Scaled(LinearMap):
    """``alpha * op``.  Not serializable."""

    def __init__(self, op, alpha):
        super().__init__(op.m, op.n)
        self.op = op
        self.alpha = complex(alpha)

    def _matmat(self, x):
        return self.alpha * self.op._matmat(x)

    def _rmatmat(self, y):
        return np.conj(self.alpha) * self.op._rmatmat(y)


# --------------------------------------------------------------------------
# constructors


def _check_dims(*dims):
    for d in dims:
        if int(d) < 1:
            raise DimensionError(f"dimensions must be >= 1, got {dims}")


def _check_dist(dist):
    if dist not in DISTS:
        raise ValueError(f"unknown dist {dist!r}; expected one of {DISTS}")


def _subgaussian(shape, dist, rng, variance):
    if dist == "gaussian":
        return rng.standard_normal(shape) * np.sqrt(variance)
    return (1.0 - 2.0 * rng.integers(0, 2, size=shape)) * np.sqrt(variance)


def _resolve_selection(n, m, seed, selection):
    if selection is None:
        return _rng.partial_fisher_yates(n, m, _rng.stream(seed, _rng.SELECTION))
    return np.asarray(selection, dtype=np.intp)


def rademacher_sequence(n, seed):
    """The sign sequence ``xi`` used by every operator built from ``seed``."""
    _check_dims(n)
    return _rng.rademacher(n, seed)


def make_rademacher_diag(n, seed=0):
    """Diagonal Rademacher matrix ``D_xi`` of size ``n``."""
    _check_dims(n)
    desc = OperatorDescriptor("rademacher_diag", n, n, seed)
    return RademacherDiag(rademacher_sequence(n, seed), desc)


def make_unitary_dft(n):
    _check_dims(n)
    return UnitaryDFT(n, n, OperatorDescriptor("unitary_dft", n, n))


def identity(n):
    """Identity on ``C^n`` (an empty composition)."""
    _check_dims(n)
    return Composed((), n, OperatorDescriptor("composed", n, n, children=()))


def make_dense_subgaussian(m, n, dist="gaussian", seed=0):
    """I.i.d. subgaussian matrix with entry variance ``1/m``.

    Parameters
    ----------
    m, n : int
        Row and column counts.
    dist : {"gaussian", "rademacher"}
        Gaussian entries ``N(0, 1/m)`` or signs ``+-1/sqrt(m)``.
    seed : int
        64-bit seed.
    """
    _check_dims(m, n)
    _check_dist(dist)
    desc = OperatorDescriptor("dense_subgaussian", m, n, seed, dist=dist)
    entries = _subgaussian((m, n), dist, _rng.stream(seed, _rng.ENTRIES), 1.0 / m)
    return DenseMap(entries, desc)


def make_subsampled_dft(m, n, seed=0, selection=None):
    """``m`` distinct rows of the unitary DFT, scaled by ``sqrt(n/m)``.

    Rows are drawn uniformly without replacement unless ``selection`` is given.
    """
    _check_dims(m, n)
    if m > n:
        raise DimensionError(f"subsampled DFT needs m <= n, got m={m}, n={n}")
    sel = _resolve_selection(n, m, seed, selection)
    desc = OperatorDescriptor("subsampled_dft", m, n, seed, selection=sel.tolist())
    return SubsampledDFT(n, sel, desc)


def make_partial_circulant(m, n, dist="gaussian", seed=0, selection_policy="first_m", selection=None):
    """Partial circulant matrix built from an i.i.d. probe of variance ``1/m``.

    ``selection_policy`` picks the retained rows: the first ``m`` or a uniform
    random subset.  An explicit ``selection`` overrides the policy.
    """
    _check_dims(m, n)
    _check_dist(dist)
    if m > n:
        raise DimensionError(f"partial circulant needs m <= n, got m={m}, n={n}")
    if selection is None:
        if selection_policy == "first_m":
            selection = np.arange(m)
        elif selection_policy == "random":
            selection = _resolve_selection(n, m, seed, None)
        else:
            raise ValueError(f"unknown selection_policy {selection_policy!r}")
    sel = np.asarray(selection, dtype=np.intp)
    probe = _subgaussian(n, dist, _rng.stream(seed, _rng.PROBE), 1.0 / m)
    desc = OperatorDescriptor("partial_circulant", m, n, seed, selection=sel.tolist(), dist=dist)
    return PartialCirculant(probe, sel, desc)


def make_random_convolution(m, n, seed=0, selection=None):
    """Subsampled random convolution ``sqrt(n/m) R_Omega F D_xi F^H``."""
    _check_dims(m, n)
    if m > n:
        raise DimensionError(f"random convolution needs m <= n, got m={m}, n={n}")
    sel = _resolve_selection(n, m, seed, selection)
    desc = OperatorDescriptor("random_convolution", m, n, seed, selection=sel.tolist())
    return RandomConvolution(rademacher_sequence(n, seed), sel, desc)


def make_dbd(M, N, J, dist="gaussian", seed=0):
    """Distinct block diagonal matrix with ``J`` i.i.d. ``M x N`` blocks.

    Storage and apply cost are ``O(M N J)``.
    """
    _check_dims(M, N, J)
    _check_dist(dist)
    blocks = _subgaussian((J, M, N), dist, _rng.stream(seed, _rng.ENTRIES), 1.0 / M)
    desc = OperatorDescriptor("dbd", M * J, N * J, seed, dist=dist, block_params=(M, N, J))
    return BlockDiagonal(blocks, desc)


def devore_supports(p, r):
    """Row supports of the DeVore polynomial-graph columns.

    Column ``c`` corresponds to the polynomial with coefficients
    ``a_0 + a_1 x + ... + a_r x^r`` where ``c = sum a_i p^i``; its support is
    ``{p x + Q(x) mod p : x = 0..p-1}``.  Returns an ``(p^(r+1), p)`` array.
    """
    n = p ** (r + 1)
    coeffs = (np.arange(n)[:, None] // p ** np.arange(r + 1)[None, :]) % p
    xs = np.arange(p)
    powers = xs[None, :] ** np.arange(r + 1)[:, None]  # (r+1, p)
    values = (coeffs @ powers) % p  # (n, p)
    return p * xs[None, :] + values


def make_devore_binary(p, r):
    """Deterministic DeVore binary matrix scaled by ``1/sqrt(p)``.

    ``p`` must be prime and exceed ``r`` so two distinct polynomials of degree
    at most ``r`` share at most ``r`` points of their graphs.
    """
    if not _is_prime(int(p)):
        raise ValueError(f"p must be prime, got {p}")
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if p <= r:
        raise ValueError(f"need p > r for the coherence guarantee, got p={p}, r={r}")
    rows = devore_supports(p, r)
    n = rows.shape[0]
    cols = np.repeat(np.arange(n), p)
    data = np.full(n * p, 1.0 / np.sqrt(p))
    matrix = scipy.sparse.csr_matrix((data, (rows.ravel(), cols)), shape=(p * p, n))
    desc = OperatorDescriptor("devore_binary", p * p, n, devore_params=(p, r))
    return SparseMap(matrix, desc)


def compose(*children):
    """Compose operators; ``compose(A, B)`` applies ``B`` first.

    Accepts operators as separate arguments or as one sequence.
    """
    if len(children) == 1 and isinstance(children[0], (list, tuple)):
        children = tuple(children[0])
    if not children:
        raise DimensionError("compose needs at least one operator; use identity(n)")
    desc = None
    if all(c.descriptor is not None for c in children):
        desc = OperatorDescriptor(
            "composed", children[0].m, children[-1].n, children=[c.descriptor for c in children]
        )
    op = Composed(children, descriptor=desc)
    return op


def scaled(op, alpha):
    return Scaled(op, alpha)


def from_dense(matrix):
    """Wrap an explicit matrix (no descriptor, not serializable)."""
    return DenseMap(np.asarray(matrix, dtype=complex))


def from_descriptor(desc: OperatorDescriptor) -> LinearMap:
    """Rebuild the operator recorded in ``desc``."""
    fam = desc.family
    if fam == "dense_subgaussian":
        return make_dense_subgaussian(desc.m, desc.n, desc.dist or "gaussian", desc.seed)
    if fam == "subsampled_dft":
        return make_subsampled_dft(desc.m, desc.n, desc.seed, desc.selection)
    if fam == "partial_circulant":
        return make_partial_circulant(desc.m, desc.n, desc.dist or "gaussian", desc.seed, selection=desc.selection)
    if fam == "random_convolution":
        return make_random_convolution(desc.m, desc.n, desc.seed, desc.selection)
    if fam == "dbd":
        M, N, J = desc.block_params
        return make_dbd(M, N, J, desc.dist or "gaussian", desc.seed)
    if fam == "devore_binary":
        return make_devore_binary(*desc.devore_params)
    if fam == "rademacher_diag":
        return make_rademacher_diag(desc.n, desc.seed)
    if fam == "unitary_dft":
        return make_unitary_dft(desc.n)
    if fam == "composed":
        if not desc.children:
            if desc.m != desc.n:
                raise DimensionError("an empty composition must be square")
            return identity(desc.n)
        op = compose([from_descriptor(c) for c in desc.children])
        if op.shape != (desc.m, desc.n):
            raise DimensionError(f"composed descriptor says {desc.m}x{desc.n}, children give {op.m}x{op.n}")
        return op
    raise ValueError(f"unknown operator family {fam!r}")


def materialize_dense(op: LinearMap, cap: int = DENSE_CAP) -> np.ndarray:
    """Dense ``m x n`` matrix whose column ``j`` is ``op.apply(e_j)``."""
    if op.m * op.n > cap:
        raise MemoryError(f"refusing to materialize {op.m}x{op.n} operator (cap {cap} entries)")
    return op._matmat(np.eye(op.n, dtype=complex))


def estimate_norm(op: LinearMap, iters: int = 50, seed: int = 0) -> float:
    """Spectral norm estimate by power iteration on ``A^H A``."""
    rng = _rng.stream(seed, _rng.SAMPLES)
    x = rng.standard_normal(op.n) + 1j * rng.standard_normal(op.n)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        y = op.adjoint(op.apply(x))
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        sigma = np.sqrt(ny)
        x = y / ny
    return float(sigma)
