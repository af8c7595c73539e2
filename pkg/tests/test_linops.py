import itertools
import json

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from stable_embed import linops
from stable_embed.linops import (
    DimensionError,
    OperatorDescriptor,
    compose,
    from_descriptor,
    identity,
    make_dbd,
    make_dense_subgaussian,
    make_devore_binary,
    make_partial_circulant,
    make_rademacher_diag,
    make_random_convolution,
    make_subsampled_dft,
    make_unitary_dft,
    materialize_dense,
)

from conftest import random_complex


def naive_dft(n):
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(-2j * np.pi * j * k / n) / np.sqrt(n)


def naive_circulant(probe):
    n = len(probe)
    return np.array([[probe[(i - j) % n] for j in range(n)] for i in range(n)])


def all_family_ops():
    return {
        "rademacher_diag": make_rademacher_diag(16, 1),
        "unitary_dft": make_unitary_dft(16),
        "dense_gaussian": make_dense_subgaussian(7, 16, "gaussian", 2),
        "dense_rademacher": make_dense_subgaussian(7, 16, "rademacher", 2),
        "subsampled_dft": make_subsampled_dft(6, 16, 3),
        "partial_circulant": make_partial_circulant(5, 16, "gaussian", 4, "random"),
        "random_convolution": make_random_convolution(6, 16, 5),
        "dbd": make_dbd(2, 4, 4, "rademacher", 6),
        "devore_binary": make_devore_binary(3, 2),
        "composed": compose(make_subsampled_dft(8, 16, 7), make_rademacher_diag(16, 7), make_unitary_dft(16)),
        "identity": identity(5),
    }


# --------------------------------------------------------------------------
# rademacher / dft


def test_rademacher_preserves_norm():
    op = make_rademacher_diag(4, 99)
    assert np.linalg.norm(op.apply(np.ones(4))) == 2.0


def test_rademacher_scalar_is_involution():
    op = make_rademacher_diag(1, 17)
    assert op.xi[0] in (1.0, -1.0)
    x = np.array([3.0 - 2.0j])
    assert np.array_equal(op.apply(op.apply(x)), x)
    assert np.array_equal(op.adjoint(x), op.apply(x))


def test_rademacher_matches_documented_stream():
    # Philox keyed by SeedSequence([seed, purpose=2]) drawing integer bits
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([42, 2])))
    expected = np.array([1.0 - 2.0 * gen.integers(0, 2) for _ in range(8)])
    dense = materialize_dense(make_rademacher_diag(8, 42))
    assert np.array_equal(dense, np.diag(expected).astype(complex))


def test_rademacher_rejects_zero_dim():
    with pytest.raises(DimensionError):
        make_rademacher_diag(0, 1)


def test_unitary_dft_examples(rng):
    assert np.array_equal(materialize_dense(make_unitary_dft(1)), np.eye(1))
    np.testing.assert_allclose(make_unitary_dft(4).apply([1, 0, 0, 0]), 0.5 * np.ones(4), atol=1e-15)
    x = random_complex(rng, 16)
    y = make_unitary_dft(16).apply(x)
    assert abs(np.linalg.norm(y) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)
    np.testing.assert_allclose(materialize_dense(make_unitary_dft(16)), naive_dft(16), atol=1e-13)


# --------------------------------------------------------------------------
# dense subgaussian


def test_dense_scalar_rademacher():
    for seed in range(10):
        entry = materialize_dense(make_dense_subgaussian(1, 1, "rademacher", seed))[0, 0]
        assert entry in (1.0, -1.0)


def test_dense_expected_isometry():
    e1 = np.zeros(64)
    e1[0] = 1
    vals = [np.linalg.norm(make_dense_subgaussian(64, 64, "gaussian", s).apply(e1)) ** 2 for s in range(200)]
    assert abs(np.mean(vals) - 1) < 0.15


def test_dense_matches_matrix(rng):
    op = make_dense_subgaussian(2, 3, "gaussian", 7)
    x = random_complex(rng, 3)
    np.testing.assert_allclose(op.apply(x), op.matrix @ x, rtol=1e-14)


def test_dense_unknown_dist():
    with pytest.raises(ValueError):
        make_dense_subgaussian(2, 3, "cauchy", 0)


# --------------------------------------------------------------------------
# subsampled dft


def test_subsampled_dft_full_is_unitary(rng):
    op = make_subsampled_dft(16, 16, 2)
    x = random_complex(rng, 16)
    assert abs(np.linalg.norm(op.apply(x)) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)


def test_subsampled_dft_dc_row_hand_value():
    op = make_subsampled_dft(1, 2, selection=[0])
    y = op.apply([1.0, 1.0])
    assert abs(y[0] - 2.0) < 1e-15
    assert abs(np.linalg.norm(y) ** 2 - 4.0) < 1e-14


def test_subsampled_dft_matches_naive(rng):
    op = make_subsampled_dft(4, 8, 3)
    oracle = np.sqrt(8 / 4) * naive_dft(8)[list(op.selection)]
    for _ in range(5):
        x = random_complex(rng, 8)
        np.testing.assert_allclose(op.apply(x), oracle @ x, rtol=1e-10)


def test_subsampled_dft_selection_distinct_sorted():
    sel = make_subsampled_dft(20, 50, 11).selection
    assert len(set(sel.tolist())) == 20
    assert np.all(np.diff(sel) > 0)


def test_subsampled_dft_expected_isometry(rng):
    x = random_complex(rng, 32)
    x /= np.linalg.norm(x)
    vals = [np.linalg.norm(make_subsampled_dft(8, 32, s).apply(x)) ** 2 for s in range(200)]
    assert abs(np.mean(vals) - 1) < 0.15


def test_subsampled_dft_rejects_tall():
    with pytest.raises(DimensionError):
        make_subsampled_dft(5, 4, 0)


def test_materialize_subsampled_dft_rows():
    op = make_subsampled_dft(2, 4, 8)
    dense = materialize_dense(op)
    for r, row in enumerate(op.selection):
        expected = np.sqrt(2) * np.exp(-2j * np.pi * row * np.arange(4) / 4) / 2
        np.testing.assert_allclose(dense[r], expected, atol=1e-15)


# --------------------------------------------------------------------------
# circulants


def test_partial_circulant_scalar():
    op = make_partial_circulant(1, 1, "gaussian", 3)
    assert abs(op.apply([2.0])[0] - 2.0 * op.probe[0]) < 1e-15


def test_partial_circulant_impulse_response():
    op = linops.PartialCirculant(np.array([1.5, -2.0, 0.25, 4.0]), np.arange(4))
    y = op.apply([1, 0, 0, 0])
    np.testing.assert_allclose(y, [1.5, -2.0, 0.25, 4.0], atol=1e-14)
    assert abs(y[0] - 1.5) < 1e-14


def test_partial_circulant_matches_dense(rng):
    op = make_partial_circulant(3, 8, "gaussian", 11)
    oracle = naive_circulant(op.probe)[list(op.selection)]
    x = random_complex(rng, 8)
    np.testing.assert_allclose(op.apply(x), oracle @ x, rtol=1e-10)


def test_partial_circulant_random_policy_and_rademacher_probe():
    op = make_partial_circulant(4, 16, "rademacher", 1, "random")
    assert len(op.selection) == 4
    np.testing.assert_allclose(np.abs(op.probe), 0.5)
    with pytest.raises(ValueError):
        make_partial_circulant(4, 16, "gaussian", 1, "middle")


def test_random_convolution_full_is_unitary(rng):
    op = make_random_convolution(16, 16, 9)
    x = random_complex(rng, 16)
    assert abs(np.linalg.norm(op.apply(x)) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)


def test_random_convolution_plus_signs_is_identity(rng):
    op = linops.RandomConvolution(np.ones(2), np.arange(2))
    np.testing.assert_allclose(materialize_dense(op), np.eye(2), atol=1e-15)


def test_random_convolution_matches_dense_composition(rng):
    op = make_random_convolution(4, 8, 5)
    F = naive_dft(8)
    restrict = np.eye(8)[list(op.selection)]
    oracle = np.sqrt(8 / 4) * restrict @ F @ np.diag(op.xi) @ F.conj().T
    x = random_complex(rng, 8)
    np.testing.assert_allclose(op.apply(x), oracle @ x, rtol=1e-10)


def test_random_convolution_is_circulant():
    op = make_random_convolution(8, 8, 21)
    dense = materialize_dense(op)
    np.testing.assert_allclose(dense, naive_circulant(dense[:, 0]), atol=1e-13)


# --------------------------------------------------------------------------
# dbd / devore


def test_dbd_single_block_equals_dense():
    a = materialize_dense(make_dbd(3, 5, 1, "gaussian", 4))
    b = materialize_dense(make_dense_subgaussian(3, 5, "gaussian", 4))
    assert np.array_equal(a, b)


def test_dbd_scalar_blocks():
    op = linops.BlockDiagonal(np.array([[[2.0]], [[-3.0]]]))
    np.testing.assert_allclose(op.apply([1.0, 5.0]), [2.0, -15.0])


def test_dbd_matches_block_diag(rng):
    op = make_dbd(2, 3, 3, "gaussian", 9)
    oracle = scipy.linalg.block_diag(*op.blocks)
    x = random_complex(rng, 9)
    np.testing.assert_allclose(op.apply(x), oracle @ x, rtol=1e-10)
    assert op.blocks.size == 2 * 3 * 3


def test_dbd_rejects_zero():
    with pytest.raises(DimensionError):
        make_dbd(0, 3, 3)


def brute_devore(p, r):
    """Columns enumerated polynomial by polynomial with pure-python arithmetic."""
    cols = []
    for coeffs in itertools.product(range(p), repeat=r + 1):
        # product varies the last coefficient fastest; column index puts a_0 in the low digit
        a = coeffs[::-1]
        rows = {p * x + sum(a[i] * x**i for i in range(r + 1)) % p for x in range(p)}
        cols.append((sum(a[i] * p**i for i in range(r + 1)), rows))
    return dict(cols)


@pytest.mark.parametrize("p,r", [(2, 1), (3, 1), (3, 2), (5, 2)])
def test_devore_matches_enumeration(p, r):
    dense = materialize_dense(make_devore_binary(p, r)).real
    assert dense.shape == (p * p, p ** (r + 1))
    for col, rows in brute_devore(p, r).items():
        assert set(np.flatnonzero(dense[:, col])) == rows
        np.testing.assert_allclose(dense[list(rows), col], 1 / np.sqrt(p))


def test_devore_p2_r1():
    dense = materialize_dense(make_devore_binary(2, 1)).real
    assert dense.shape == (4, 4)
    assert all(np.count_nonzero(dense[:, j]) == 2 for j in range(4))
    np.testing.assert_allclose(dense[dense != 0], 1 / np.sqrt(2))


def test_devore_p3_overlap():
    dense = materialize_dense(make_devore_binary(3, 1)).real != 0
    for a, b in itertools.combinations(range(9), 2):
        assert np.count_nonzero(dense[:, a] & dense[:, b]) <= 1


def test_devore_errors():
    with pytest.raises(ValueError, match="prime"):
        make_devore_binary(4, 1)
    with pytest.raises(ValueError, match="p > r"):
        make_devore_binary(3, 3)


# --------------------------------------------------------------------------
# composition


def test_compose_with_identity(rng):
    a = make_dense_subgaussian(4, 6, "gaussian", 1)
    x = random_complex(rng, 6)
    assert np.array_equal(compose(identity(4), a).apply(x), a.apply(x))


def test_compose_triple_product(rng):
    phi = make_subsampled_dft(4, 8, 2)
    d = make_rademacher_diag(8, 3)
    f = make_unitary_dft(8)
    oracle = np.sqrt(2) * naive_dft(8)[list(phi.selection)] @ np.diag(d.xi) @ naive_dft(8)
    x = random_complex(rng, 8)
    np.testing.assert_allclose(compose(phi, d, f).apply(x), oracle @ x, rtol=1e-10)


def test_compose_adjoint_reversal(rng):
    a = make_dense_subgaussian(5, 6, "gaussian", 1)
    b = make_partial_circulant(6, 9, "gaussian", 2)
    y = random_complex(rng, 5)
    lhs = compose(a, b).adjoint(y)
    rhs = compose(b.H, a.H).apply(y)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10)


def test_compose_mismatch_names_pair():
    with pytest.raises(DimensionError, match="child 0 .* child 1"):
        compose(make_unitary_dft(4), make_unitary_dft(5))


def test_matmul_sugar(rng):
    a = make_unitary_dft(4)
    x = random_complex(rng, 4)
    np.testing.assert_allclose((a @ a.H) @ x, x, atol=1e-14)


# --------------------------------------------------------------------------
# materialize / descriptors


def test_materialize_identity_and_cap():
    assert np.array_equal(materialize_dense(identity(3)), np.eye(3))
    with pytest.raises(MemoryError):
        materialize_dense(make_unitary_dft(64), cap=100)


def test_apply_rejects_wrong_length():
    with pytest.raises(DimensionError):
        make_unitary_dft(4).apply(np.ones(5))


@pytest.mark.parametrize("name", sorted(all_family_ops()))
def test_descriptor_roundtrip_and_determinism(name):
    op = all_family_ops()[name]
    text = op.descriptor.to_json()
    desc = OperatorDescriptor.from_json(text)
    assert desc == op.descriptor
    assert desc.to_json() == text
    rebuilt1, rebuilt2 = from_descriptor(desc), from_descriptor(desc)
    assert np.array_equal(materialize_dense(rebuilt1), materialize_dense(op))
    assert np.array_equal(materialize_dense(rebuilt1), materialize_dense(rebuilt2))


def test_descriptor_json_fields_exact():
    d = json.loads(make_random_convolution(4, 8, 1).descriptor.to_json())
    assert list(d) == ["family", "m", "n", "seed", "selection", "dist", "block_params", "devore_params", "children"]


def test_descriptor_rejects_unknown_fields():
    d = make_unitary_dft(4).descriptor.to_dict()
    d["scale"] = 2
    with pytest.raises(ValueError, match="unknown descriptor fields"):
        OperatorDescriptor.from_dict(d)


@pytest.mark.parametrize("kwargs", [
    dict(family="warp", m=1, n=1),
    dict(family="unitary_dft", m=0, n=1),
    dict(family="subsampled_dft", m=2, n=4, selection=[1, 1]),
    dict(family="subsampled_dft", m=2, n=4, selection=[1, 4]),
    dict(family="devore_binary", m=9, n=9, devore_params=[3, 2]),
    dict(family="dbd", m=6, n=9, block_params=[2, 3, 2]),
    dict(family="rademacher_diag", m=3, n=4),
    dict(family="unitary_dft", m=4, n=4, seed=-1),
])
def test_descriptor_invariants(kwargs):
    with pytest.raises(ValueError):
        OperatorDescriptor(**kwargs)


def test_user_selection_in_descriptor():
    desc = OperatorDescriptor("subsampled_dft", 2, 8, seed=0, selection=[1, 6])
    assert from_descriptor(desc).selection.tolist() == [1, 6]


def test_large_seed_roundtrip():
    op = make_rademacher_diag(8, 2**64 - 1)
    assert from_descriptor(OperatorDescriptor.from_json(op.descriptor.to_json())).xi.tolist() == op.xi.tolist()


# --------------------------------------------------------------------------
# properties


@pytest.mark.parametrize("name", sorted(all_family_ops()))
def test_adjoint_identity_all_families(name, rng):
    op = all_family_ops()[name]
    norm = linops.estimate_norm(op)
    for _ in range(100):
        x, y = random_complex(rng, op.n), random_complex(rng, op.m)
        lhs = np.vdot(y, op.apply(x))
        rhs = np.vdot(op.adjoint(y), x)
        assert abs(lhs - rhs) <= 1e-9 * np.linalg.norm(x) * np.linalg.norm(y) * norm


@pytest.mark.parametrize("name", sorted(all_family_ops()))
def test_fast_apply_matches_dense(name, rng):
    op = all_family_ops()[name]
    dense = materialize_dense(op)
    x = random_complex(rng, op.n, 20)
    np.testing.assert_allclose(op.apply(x), dense @ x, rtol=1e-9, atol=1e-12)


def test_unitary_parts_isometric(rng):
    x = random_complex(rng, 32)
    nx = np.linalg.norm(x)
    for op in (make_rademacher_diag(32, 1), make_unitary_dft(32), make_random_convolution(32, 32, 1)):
        assert abs(np.linalg.norm(op.apply(x)) - nx) <= 1e-12 * nx


def test_estimate_norm_matches_svd():
    op = make_dense_subgaussian(6, 10, "gaussian", 3)
    sigma = np.linalg.svd(materialize_dense(op), compute_uv=False)[0]
    assert abs(linops.estimate_norm(op, iters=200) - sigma) < 1e-6 * sigma


@settings(max_examples=40, deadline=None)
@given(
    family=st.sampled_from(["dense", "dft", "circ", "conv", "dbd"]),
    n=st.integers(1, 24),
    frac=st.floats(0.05, 1.0),
    seed=st.integers(0, 2**64 - 1),
    alpha=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
    beta=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
)
def test_linearity_and_adjoint_property(family, n, frac, seed, alpha, beta):
    m = max(1, int(round(frac * n)))
    op = {
        "dense": lambda: make_dense_subgaussian(m, n, "gaussian", seed),
        "dft": lambda: make_subsampled_dft(m, n, seed),
        "circ": lambda: make_partial_circulant(m, n, "rademacher", seed, "random"),
        "conv": lambda: make_random_convolution(m, n, seed),
        "dbd": lambda: make_dbd(m, n, 2, "gaussian", seed),
    }[family]()
    gen = np.random.default_rng(seed % 2**32)
    x, z = random_complex(gen, op.n), random_complex(gen, op.n)
    y = random_complex(gen, op.m)
    lhs = op.apply(alpha * x + beta * z)
    rhs = alpha * op.apply(x) + beta * op.apply(z)
    scale = (abs(alpha) * np.linalg.norm(x) + abs(beta) * np.linalg.norm(z) + 1) * max(1.0, np.linalg.norm(materialize_dense(op), 2))
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * scale
    assert abs(np.vdot(y, op.apply(x)) - np.vdot(op.adjoint(y), x)) <= 1e-9 * np.linalg.norm(x) * np.linalg.norm(y) * scale
