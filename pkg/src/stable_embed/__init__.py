"""Structured compressive operators and stable manifold embedding checks."""

from .bounds import (
    CorollaryBound,
    EmbeddingBudget,
    ManifoldParams,
    corollary_measurements,
    jl_rip_order,
    embedding_budget,
)
from .harness import (
    DistortionReport,
    RipReport,
    compare_families,
    measure_embedding,
    measure_jl_pointcloud,
    measure_rip,
)
from .linops import (
    DimensionError,
    LinearMap,
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
from .manifolds import (
    ChordSet,
    ManifoldModel,
    sample_chords,
    sinusoid_geometry,
    sinusoid_manifold,
    sinusoid_point,
)

__version__ = "0.1.0"
