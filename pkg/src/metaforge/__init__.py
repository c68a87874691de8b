"""metaforge: handle-based mesh deformation with discovered meta-handles.

Precompute biharmonic deformation coordinates over farthest-point-sampled
control vertices, fit meshes to targets by direct optimization over control
offsets, and factor a collection of fits into a small set of disentangled,
range-bounded meta-handles.
"""

__version__ = "0.1.0"

from .bundle import (
    DeformationBundle,
    bundle_from_parts,
    read_bundle,
    write_bundle,
    write_bundle_text,
)
from .config import RunConfig, load_config
from .deform import (
    DeformationSubspace,
    MetaHandle,
    apply_control_offsets,
    apply_subspace,
    clamp_coefficients,
    combine_handles,
    sample_coefficients,
)
from .discover import (
    DiscoveryConfig,
    FactorizationResult,
    OffsetDataset,
    build_offset_dataset,
    discover_subspace,
    estimate_ranges,
    factorize,
    init_factorization,
)
from .errors import (
    BundleFormatError,
    DegenerateGeometryError,
    DivergenceError,
    EmptyMeshError,
    MeshFormatError,
    MetaforgeError,
    PreconditionError,
    QualityGateError,
    RankDeficiencyError,
)
from .fit import (
    FitConfig,
    FitResult,
    chamfer_quadratic_solve,
    fit_full_offsets,
    fit_subspace_coefficients,
)
from .handles import (
    ControlPointSet,
    DeformCoordinates,
    compute_biharmonic_coordinates,
    geodesic_fps,
    interpolate_coordinates,
)
from .losses import (
    LossWeights,
    chamfer,
    covariance_loss,
    geometric_loss,
    laplacian_loss,
    normal_loss,
    orthogonality_loss,
    sparsity_loss,
    svd_loss,
    symmetry_loss,
)
from .mesh import (
    CotanLaplacian,
    PointCloud,
    TriMesh,
    cotangent_laplacian,
    edge_graph,
    face_areas,
    face_normals,
    load_mesh,
    sample_surface,
    save_obj,
)
from .metrics import EvalReport, coverage, eval_chamfer_dense, eval_cotlap_distortion, eval_sets, mmd

__all__ = [name for name in dir() if not name.startswith("_")]
