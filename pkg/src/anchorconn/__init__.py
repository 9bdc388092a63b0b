"""Chart-level toolkit for generalized connections over anchored bundles.

Builds prolonged bundles, horizontal/vertical splittings, connection maps,
affine connections and their extension to the enlarged linear bundle,
covariant derivatives, and parallel transport, behind a spec-file-driven
command line (see :mod:`anchorconn.cli`).
"""

from .exprlang import (
    DomainError,
    Env,
    EvalError,
    Expr,
    ExprError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownFunctionError,
    diff,
    evaluate,
    parse,
    subst,
    to_source,
    variables,
)
from .geometry import (
    BasePoint,
    BundleSpec,
    EPoint,
    ETangent,
    SectionE,
    SectionV,
    VVector,
    anchor_apply,
    anchor_derivation,
    tangent_section,
    validate_spec,
)
from .prolong import (
    BasePointMismatchError,
    NotInProlongationError,
    ProlongedSection,
    ProlongedVector,
    make_prolonged,
    project_j,
    rho1,
    vertical_lift,
)
from .connection import (
    AffineResult,
    KernelDiagnostic,
    LinearityResult,
    Splitting,
    check_affine,
    check_linear,
    connection_map_K,
    h_apply,
    horizontal_lift,
    kernel_diagnostic,
    projector_H,
    projector_V,
)
from .affine import (
    AffineCoeffs,
    BidualCoeffs,
    NotAffineError,
    SectionEbar,
    TildeEPoint,
    check_e0_parallel,
    commutation_check,
    cov_deriv,
    cov_deriv_bidual,
    cov_deriv_dual_basis,
    cov_deriv_intrinsic,
    cov_deriv_linear,
    extend_to_bidual,
    iota,
    iota_bar,
    reconstruct_h,
    restrict_to_linear,
)
from .transport import (
    BlowUpError,
    CurveSpecV,
    TransportResult,
    cov_deriv_along,
    integrate_base,
    parallel_transport,
    parallel_transport_linear,
    transport_affine_action,
)
from .sode import (
    SodeConnection,
    SodeSpec,
    quadratic_force_check,
    sode_connection,
    sode_to_bundle_spec,
)

__version__ = "0.1.0"
