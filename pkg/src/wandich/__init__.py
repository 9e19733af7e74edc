"""Bloch frames, Chern numbers and the Wannier localization dichotomy for
gapped 2D tight-binding models."""

from .errors import (
    BranchDegenerate,
    CertificateError,
    ConfigError,
    CovarianceMismatch,
    GapClosure,
    GapError,
    GramTooSmall,
    InsufficientSupport,
    NearDependent,
    NonCommutingGenerators,
    NonCoprimeFlux,
    OddMeshSize,
    PlaquetteTooCoarse,
    ProjectorsTooFar,
    ReprojectionSingular,
    SmoothingGramSingular,
    SupercellTooSmall,
    TruncationNotInjective,
    WandichError,
)
from .model import (
    BlochModel,
    CovariantFamily,
    GapReport,
    ProjectorFamily,
    build_haldane,
    build_hofstadter,
    check_gap,
    load_matrix_model,
    periodize,
    spectral_projector,
    spectral_projectors,
)
from .kmesh import KMesh, RayFan, boundary_loop, build_mesh, build_ray_fan
from .transport import HolonomyLog, TransportOp, holonomy_log, line_frame, transport
from .frames import (
    Frame,
    FrameBuildResult,
    GradientBoundReport,
    SkeletonResult,
    build_frame,
    frame_h1_distance,
    gradient_bound,
    gram_schmidt,
    kato_nagy,
    kato_nagy_frame,
    load_frame,
    local_smooth,
    mollify_reproject,
    radial_extension,
    save_frame,
    skeleton_frame,
)
from .topology import (
    ChernResult,
    CurvatureField,
    Region,
    abelian_connection,
    berry_curvature,
    chern_continuum,
    chern_fhs,
    chern_result,
    circulation,
    stokes_residual,
)
from .wannier import (
    DichotomyReport,
    HsReport,
    MomentReport,
    WannierSet,
    dichotomy_report,
    exp_fit,
    hs_norm,
    moments,
    synthesize,
)
from .galerkin import (
    TruncationReport,
    embed_family,
    frame_truncate,
    projector_h1_distance,
    truncate_family,
)

__version__ = "0.1.0"
