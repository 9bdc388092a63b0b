"""The prolonged bundle over an anchored bundle.

A prolonged vector is a pair of a fibre vector of the anchored bundle and a
tangent vector of the total space whose base velocities agree through the
anchor.  Only the data (x, y, v, Z) is stored: the base part of the tangent
slot is reconstructed as rho(x)v on demand, so the defining constraint
cannot be violated after admission.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .exprlang import Expr, evaluate
from .geometry import (
    BundleSpec,
    EPoint,
    ETangent,
    VVector,
    anchor_apply,
    fiber_env,
    _floats,
)

__all__ = [
    "ProlongedVector",
    "ProlongedSection",
    "BasePointMismatchError",
    "NotInProlongationError",
    "DEFAULT_MEMBERSHIP_TOL",
    "make_prolonged",
    "project_j",
    "vertical_lift",
    "rho1",
    "prolonged_section_value",
]

#: Slack for the linear membership constraint; only absorbs float noise.
DEFAULT_MEMBERSHIP_TOL = 1e-9


class BasePointMismatchError(ValueError):
    """The fibre vector and the tangent vector sit over different points."""


class NotInProlongationError(ValueError):
    """The pair violates the membership constraint beyond tolerance."""

    def __init__(self, residual: float, tol: float):
        super().__init__(
            f"base velocities disagree with the anchor image: "
            f"residual {residual:.3e} exceeds tolerance {tol:.1e}"
        )
        self.residual = residual


@dataclass(frozen=True)
class ProlongedVector:
    """Coordinates (x, y, v, Z) of a prolonged vector.

    The implied tangent slot has base part rho(x)v and fibre part Z, so
    membership holds by construction.
    """

    x: tuple[float, ...]
    y: tuple[float, ...]
    v: tuple[float, ...]
    Z: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", _floats(self.x))
        object.__setattr__(self, "y", _floats(self.y))
        object.__setattr__(self, "v", _floats(self.v))
        object.__setattr__(self, "Z", _floats(self.Z))


@dataclass(frozen=True)
class ProlongedSection:
    """Local section of the prolonged bundle: v- and Z-components in (x, y)."""

    zeta: tuple[Expr, ...]
    Zcomp: tuple[Expr, ...]


def make_prolonged(
    spec: BundleSpec,
    w: VVector,
    X: ETangent,
    tol: float = DEFAULT_MEMBERSHIP_TOL,
) -> ProlongedVector:
    """Admit the pair (w, X) as a prolonged vector.

    Requires w and X over the same base point and |X.dx - rho(x)v| <= tol
    componentwise; the admitted object drops dx as redundant.
    """
    if w.x != X.at.x:
        raise BasePointMismatchError(
            f"fibre vector at x={w.x} but tangent vector at x={X.at.x}"
        )
    expected = anchor_apply(spec, w)
    residual = max(
        (abs(d - e) for d, e in zip(X.dx, expected, strict=True)), default=0.0
    )
    if residual > tol:
        raise NotInProlongationError(residual, tol)
    return ProlongedVector(w.x, X.at.y, w.v, X.dy)


def project_j(pv: ProlongedVector) -> tuple[EPoint, VVector]:
    """Projection onto the pullback bundle: (foot point, fibre vector).

    Surjective; its kernel is exactly the vertical vectors (v = 0).
    """
    return EPoint(pv.x, pv.y), VVector(pv.x, pv.v)


def vertical_lift(
    spec: BundleSpec, e: EPoint, w: Sequence[float]
) -> ProlongedVector:
    """Vertical lift of a model-fibre vector at e: (x, y, 0, w)."""
    if len(w) != spec.e_dim:
        raise ValueError(f"expected {spec.e_dim} fibre components, got {len(w)}")
    return ProlongedVector(e.x, e.y, (0.0,) * spec.v_rank, tuple(w))


def rho1(spec: BundleSpec, pv: ProlongedVector) -> ETangent:
    """Tangent-slot projection: reattaches the forced base part rho(x)v."""
    dx = anchor_apply(spec, VVector(pv.x, pv.v))
    return ETangent(EPoint(pv.x, pv.y), dx, pv.Z)


def prolonged_section_value(
    spec: BundleSpec, section: ProlongedSection, e: EPoint
) -> ProlongedVector:
    """Evaluate a prolonged section at a point of the total space."""
    env = fiber_env(e.x, e.y)
    v = tuple(evaluate(c, env) for c in section.zeta)
    Z = tuple(evaluate(c, env) for c in section.Zcomp)
    return ProlongedVector(e.x, e.y, v, Z)
