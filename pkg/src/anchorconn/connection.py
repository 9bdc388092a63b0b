"""Connections over an anchored bundle as horizontal lifts and splittings.

The connection is carried by the coefficient matrix of a
:class:`~anchorconn.geometry.BundleSpec`.  The horizontal lift into the
prolonged bundle, the complementary projectors, and the connection map are
all derived from it; the classifiers decide linearity/affineness of the
coefficients by seeded random sampling combined with exact symbolic
differentiation (never by expression-shape inspection, which would
misclassify inputs like ``y1 + 0*y1^2``).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .exprlang import Expr, diff, evaluate, subst, y_names
from .geometry import (
    BundleSpec,
    BasePoint,
    EPoint,
    ETangent,
    VVector,
    anchor_apply,
    anchor_matrix,
    fiber_env,
    gamma_apply,
)
from .prolong import ProlongedVector, project_j, vertical_lift
from .sampling import sample_point

if TYPE_CHECKING:
    from .affine import AffineCoeffs

__all__ = [
    "Splitting",
    "KernelDiagnostic",
    "Counterexample",
    "LinearityResult",
    "AffineResult",
    "h_apply",
    "horizontal_lift",
    "projector_H",
    "projector_V",
    "connection_map_K",
    "splitting_residual",
    "check_linear",
    "check_affine",
    "kernel_diagnostic",
]

LINEARITY_TOL = 1e-8
AFFINE_TOL = 1e-8
HHBAR_TOL = 1e-10
KERNEL_PIVOT_TOL = 1e-10
DEFAULT_SAMPLES = 64


def h_apply(spec: BundleSpec, e: EPoint, v: Sequence[float]) -> ETangent:
    """Horizontal tangent vector at e determined by the fibre vector v.

    Base part rho(x)v, fibre part -gamma(x, y)v; the base part always equals
    the anchor image by construction.
    """
    dx = anchor_apply(spec, VVector(e.x, v))
    dy = tuple(-g for g in gamma_apply(spec, e, v))
    return ETangent(e, dx, dy)


def horizontal_lift(
    spec: BundleSpec, e: EPoint, v: Sequence[float]
) -> ProlongedVector:
    """Horizontal lift of (e, v) into the prolonged bundle."""
    dy = tuple(-g for g in gamma_apply(spec, e, v))
    return ProlongedVector(e.x, e.y, tuple(v), dy)


def projector_H(spec: BundleSpec, pv: ProlongedVector) -> ProlongedVector:
    """Horizontal projector: the lift of the pullback projection of pv."""
    e, w = project_j(pv)
    return horizontal_lift(spec, e, w.v)


def projector_V(spec: BundleSpec, pv: ProlongedVector) -> ProlongedVector:
    """Vertical projector: complement of the horizontal one (v-part zero)."""
    horizontal = projector_H(spec, pv)
    return ProlongedVector(
        pv.x,
        pv.y,
        (0.0,) * len(pv.v),
        tuple(z - hz for z, hz in zip(pv.Z, horizontal.Z)),
    )


def connection_map_K(spec: BundleSpec, pv: ProlongedVector) -> tuple[float, ...]:
    """Connection map into the model fibre: Z + gamma(x, y)v.

    Co-splits the horizontal lift: composed with the vertical lift it is the
    identity, composed with the horizontal lift it vanishes.
    """
    g = gamma_apply(spec, EPoint(pv.x, pv.y), pv.v)
    return tuple(z + gz for z, gz in zip(pv.Z, g))


@dataclass(frozen=True)
class Splitting:
    """Bundle-level view of the connection: lift, projectors, co-splitting."""

    spec: BundleSpec

    def lift(self, e: EPoint, v: Sequence[float]) -> ProlongedVector:
        return horizontal_lift(self.spec, e, v)

    def horizontal(self, pv: ProlongedVector) -> ProlongedVector:
        return projector_H(self.spec, pv)

    def vertical(self, pv: ProlongedVector) -> ProlongedVector:
        return projector_V(self.spec, pv)

    def connection_map(self, pv: ProlongedVector) -> tuple[float, ...]:
        return connection_map_K(self.spec, pv)


def _pv_residual(a: ProlongedVector, b: ProlongedVector) -> float:
    return max(
        max((abs(p - q) for p, q in zip(a.v, b.v)), default=0.0),
        max((abs(p - q) for p, q in zip(a.Z, b.Z)), default=0.0),
    )


def splitting_residual(
    spec: BundleSpec, pv: ProlongedVector, w: Sequence[float] | None = None
) -> float:
    """Maximum residual of the splitting and co-splitting identities at pv.

    Covers idempotence and complementarity of both projectors, the section
    property of the lift, and the co-splitting identities of the connection
    map (the vertical-lift one uses ``w``, defaulting to pv's Z slot).
    """
    e, jv = project_j(pv)
    horizontal = projector_H(spec, pv)
    vertical = projector_V(spec, pv)
    residuals = [
        _pv_residual(projector_H(spec, horizontal), horizontal),
        _pv_residual(projector_V(spec, vertical), vertical),
    ]
    mixed = projector_H(spec, vertical)
    residuals.append(max(max(map(abs, mixed.v)), max(map(abs, mixed.Z))))
    residuals.append(
        max(
            max(abs(h + v - p) for h, v, p in zip(horizontal.v, vertical.v, pv.v)),
            max(abs(h + v - p) for h, v, p in zip(horizontal.Z, vertical.Z, pv.Z)),
        )
    )
    _, lifted_v = project_j(horizontal_lift(spec, e, jv.v))
    residuals.append(max(abs(a - b) for a, b in zip(lifted_v.v, jv.v)))
    w_vec = tuple(pv.Z) if w is None else tuple(w)
    recovered = connection_map_K(spec, vertical_lift(spec, e, w_vec))
    residuals.append(max(abs(a - b) for a, b in zip(recovered, w_vec)))
    # co-splitting: vertical lift of K plus lift of j reassembles pv
    k_value = connection_map_K(spec, pv)
    residuals.append(
        max(
            max(abs(h - p) for h, p in zip(horizontal.v, pv.v)),
            max(abs(h + kz - p) for h, kz, p in zip(horizontal.Z, k_value, pv.Z)),
        )
    )
    return max(residuals)


@dataclass(frozen=True)
class Counterexample:
    """Witness of a failed check: the sampled coordinates and the residual."""

    kind: str
    point: dict
    residual: float


@dataclass(frozen=True)
class LinearityResult:
    passed: bool
    samples: int
    seed: int
    tolerance: float
    counterexample: Counterexample | None


@dataclass(frozen=True)
class AffineResult:
    passed: bool
    samples: int
    seed: int
    tolerance: float
    coeffs: "AffineCoeffs | None"
    counterexample: Counterexample | None


def check_linear(
    spec: BundleSpec,
    sample_count: int = DEFAULT_SAMPLES,
    seed: int = 0,
    tol: float = LINEARITY_TOL,
) -> LinearityResult:
    """Decide linearity of the connection (frame origin y = 0).

    Samples (x, y1, y2, lambda, v) and tests additivity/homogeneity of the
    coefficient contraction in the fibre argument to relative tolerance.
    """
    rng = random.Random(seed)
    n, k, m = spec.base_dim, spec.v_rank, spec.e_dim
    for _ in range(sample_count):
        x = sample_point(rng, n)
        y1 = sample_point(rng, m)
        y2 = sample_point(rng, m)
        lam = rng.uniform(-2.0, 2.0)
        v = sample_point(rng, k)
        combined = tuple(a + lam * b for a, b in zip(y1, y2))
        lhs = gamma_apply(spec, EPoint(x, combined), v)
        g1 = gamma_apply(spec, EPoint(x, y1), v)
        g2 = gamma_apply(spec, EPoint(x, y2), v)
        rhs = tuple(a + lam * b for a, b in zip(g1, g2))
        scale = 1.0 + max(max(map(abs, lhs)), max(map(abs, rhs)))
        residual = max(abs(a - b) for a, b in zip(lhs, rhs)) / scale
        if residual > tol:
            witness = Counterexample(
                kind="linearity",
                point={"x": x, "y1": y1, "y2": y2, "lambda": lam, "v": v},
                residual=residual,
            )
            return LinearityResult(False, sample_count, seed, tol, witness)
    return LinearityResult(True, sample_count, seed, tol, None)


def check_affine(
    spec: BundleSpec,
    sample_count: int = DEFAULT_SAMPLES,
    seed: int = 0,
    tol: float = AFFINE_TOL,
    hhbar_tol: float = HHBAR_TOL,
) -> AffineResult:
    """Decide affineness of the coefficients in the fibre variables.

    Tests that second fibre-differences of every coefficient vanish and that
    the symbolic fibre-derivatives are fibre-independent at samples.  On a
    pass, extracts the constant and linear coefficient expressions (by
    substituting y = 0 into the coefficient and its exact derivative) and
    verifies the translation compatibility h(e+w, v) = h(e, v) (+) h_lin(w, v)
    at fresh samples.
    """
    from .affine import AffineCoeffs  # deferred: affine layers on this module

    rng = random.Random(seed)
    n, k, m = spec.base_dim, spec.v_rank, spec.e_dim
    ys = y_names(m)
    gamma1_sym = tuple(
        tuple(tuple(diff(entry, ys[beta]) for beta in range(m)) for entry in row)
        for row in spec.gamma
    )

    def fail(kind: str, point: dict, residual: float) -> AffineResult:
        witness = Counterexample(kind=kind, point=point, residual=residual)
        return AffineResult(False, sample_count, seed, tol, None, witness)

    for _ in range(sample_count):
        x = sample_point(rng, n)
        y = sample_point(rng, m)
        w = sample_point(rng, m)
        y_other = sample_point(rng, m)
        env0 = fiber_env(x, y)
        env1 = fiber_env(x, tuple(a + b for a, b in zip(y, w)))
        env2 = fiber_env(x, tuple(a + 2.0 * b for a, b in zip(y, w)))
        env_other = fiber_env(x, y_other)
        for alpha in range(m):
            for a in range(k):
                entry = spec.gamma[alpha][a]
                second_diff = (
                    evaluate(entry, env2)
                    - 2.0 * evaluate(entry, env1)
                    + evaluate(entry, env0)
                )
                if abs(second_diff) > tol:
                    return fail(
                        "second-difference",
                        {"x": x, "y": y, "w": w, "entry": [alpha, a]},
                        abs(second_diff),
                    )
                for beta in range(m):
                    d_here = evaluate(gamma1_sym[alpha][a][beta], env0)
                    d_other = evaluate(gamma1_sym[alpha][a][beta], env_other)
                    if abs(d_here - d_other) > tol:
                        return fail(
                            "fiber-dependent-derivative",
                            {"x": x, "y": y, "y_other": y_other, "entry": [alpha, a, beta]},
                            abs(d_here - d_other),
                        )

    zero_fiber = {name: 0.0 for name in ys}
    gamma0 = tuple(
        tuple(subst(entry, zero_fiber) for entry in row) for row in spec.gamma
    )
    gamma1 = tuple(
        tuple(
            tuple(subst(gamma1_sym[alpha][a][beta], zero_fiber) for beta in range(m))
            for a in range(k)
        )
        for alpha in range(m)
    )

    # translation compatibility at fresh samples
    for _ in range(sample_count):
        x = sample_point(rng, n)
        y = sample_point(rng, m)
        w = sample_point(rng, m)
        v = sample_point(rng, k)
        env = {f"x{i + 1}": x[i] for i in range(n)}
        lhs = gamma_apply(spec, EPoint(x, tuple(a + b for a, b in zip(y, w))), v)
        base = gamma_apply(spec, EPoint(x, y), v)
        linear_part = tuple(
            sum(
                evaluate(gamma1[alpha][a][beta], env) * w[beta] * v[a]
                for a in range(k)
                for beta in range(m)
            )
            for alpha in range(m)
        )
        residual = max(
            abs(l - (b + lp)) for l, b, lp in zip(lhs, base, linear_part)
        )
        if residual > hhbar_tol:
            return fail(
                "translation-compatibility", {"x": x, "y": y, "w": w, "v": v}, residual
            )

    coeffs = AffineCoeffs(base_dim=n, gamma0=gamma0, gamma1=gamma1)
    return AffineResult(True, sample_count, seed, tol, coeffs, None)


@dataclass(frozen=True)
class KernelDiagnostic:
    """Kernel of the anchor at a base point, plus the vertical-image flag.

    ``vertical_intersection`` is set when some kernel vector has a nonzero
    coefficient contraction at a sampled fibre point, i.e. the horizontal
    image meets the verticals nontrivially there.
    """

    x: BasePoint
    kernel_basis: tuple[tuple[float, ...], ...]
    vertical_intersection: bool


def _kernel_basis(
    matrix: Sequence[Sequence[float]], pivot_tol: float
) -> list[tuple[float, ...]]:
    """Basis of the null space by rank-revealing Gauss elimination (RREF)."""
    A = np.array(matrix, dtype=float)
    n, k = A.shape
    pivot_cols: list[int] = []
    row = 0
    for col in range(k):
        if row >= n:
            break
        pivot = row + int(np.argmax(np.abs(A[row:, col])))
        if abs(A[pivot, col]) <= pivot_tol:
            continue
        if pivot != row:
            A[[row, pivot]] = A[[pivot, row]]
        A[row] = A[row] / A[row, col]
        for r in range(n):
            if r != row and A[r, col] != 0.0:
                A[r] = A[r] - A[r, col] * A[row]
        pivot_cols.append(col)
        row += 1
    free_cols = [c for c in range(k) if c not in pivot_cols]
    basis = []
    for free in free_cols:
        vec = np.zeros(k)
        vec[free] = 1.0
        for r, col in enumerate(pivot_cols):
            vec[col] = -A[r, free]
        basis.append(tuple(float(c) + 0.0 for c in vec))  # +0.0 normalizes -0.0
    return basis


def kernel_diagnostic(
    spec: BundleSpec,
    x: BasePoint,
    pivot_tol: float = KERNEL_PIVOT_TOL,
    y_samples: int = 8,
    seed: int = 0,
    flag_tol: float = 1e-10,
) -> KernelDiagnostic:
    """Kernel basis of the anchor at x and the vertical-intersection flag."""
    rng = random.Random(seed)
    basis = _kernel_basis(anchor_matrix(spec, x.x), pivot_tol)
    flagged = False
    for vec in basis:
        for _ in range(y_samples):
            y = sample_point(rng, spec.e_dim)
            image = gamma_apply(spec, EPoint(x.x, y), vec)
            if max(map(abs, image), default=0.0) > flag_tol:
                flagged = True
                break
        if flagged:
            break
    return KernelDiagnostic(x, tuple(basis), flagged)
