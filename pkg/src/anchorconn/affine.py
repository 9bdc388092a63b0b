"""Affine connections, their extension to the enlarged linear bundle, and
covariant derivatives.

An affine connection has coefficients of the form
``gamma0(x) + gamma1(x) . y``.  Adjoining one extra fibre coordinate ``y0``
(value 1 on the embedded affine bundle, 0 on its model bundle) turns it into
a linear connection on the enlarged bundle whose coefficient block for the
extra coordinate vanishes identically.  The covariant derivative is offered
through two independent routes: the closed coordinate formula and the
intrinsic route through the connection map applied to the prolonged tangent
of a section; tests require them to agree.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .exprlang import (
    Expr,
    Num,
    Var,
    add,
    diff,
    evaluate,
    mul,
    variables,
    x_names,
    y_names,
)
from .geometry import (
    BasePoint,
    BundleSpec,
    EPoint,
    SectionE,
    SectionV,
    VVector,
    anchor_apply,
    anchor_matrix,
    base_env,
    section_value,
    tangent_section,
    _floats,
)
from .prolong import ProlongedVector, make_prolonged
from .connection import Counterexample, check_affine, connection_map_K
from .sampling import sample_point

__all__ = [
    "AffineCoeffs",
    "BidualCoeffs",
    "TildeEPoint",
    "TildeETangent",
    "SectionEbar",
    "NotAffineError",
    "E0Result",
    "iota",
    "iota_bar",
    "tangent_iota",
    "tangent_iota_bar",
    "extend_to_bidual",
    "restrict_to_linear",
    "htilde_apply",
    "connection_map_K_tilde",
    "connection_map_K_bar",
    "cov_deriv",
    "cov_deriv_intrinsic",
    "cov_deriv_linear",
    "cov_deriv_bidual",
    "cov_deriv_dual_basis",
    "check_e0_parallel",
    "commutation_check",
    "reconstruct_h",
    "bidual_restrict_to_e",
]


class NotAffineError(ValueError):
    """The connection is not affine; carries the classifier's witness."""

    def __init__(self, counterexample: Counterexample | None):
        detail = f": {counterexample}" if counterexample is not None else ""
        super().__init__(f"connection coefficients are not affine{detail}")
        self.counterexample = counterexample


@dataclass(frozen=True)
class AffineCoeffs:
    """Coefficient data of an affine connection.

    ``gamma0`` is e_dim x v_rank, ``gamma1`` is e_dim x v_rank x e_dim
    (indexed [alpha][a][beta]); entries depend on base variables only.
    """

    base_dim: int
    gamma0: tuple[tuple[Expr, ...], ...]
    gamma1: tuple[tuple[tuple[Expr, ...], ...], ...]

    @property
    def e_dim(self) -> int:
        return len(self.gamma0)

    @property
    def v_rank(self) -> int:
        return len(self.gamma0[0])


@dataclass(frozen=True)
class BidualCoeffs:
    """Coefficients of a linear connection on the enlarged bundle.

    ``gammaT`` is (e_dim+1) x v_rank x (e_dim+1), indexed [A][a][B] with the
    extra fibre coordinate first (A = 0).  When the coefficients come from an
    affine connection, the whole A = 0 block vanishes.
    """

    base_dim: int
    gammaT: tuple[tuple[tuple[Expr, ...], ...], ...]

    @property
    def e_dim(self) -> int:
        return len(self.gammaT) - 1

    @property
    def v_rank(self) -> int:
        return len(self.gammaT[0])


@dataclass(frozen=True)
class TildeEPoint:
    """Point of the enlarged bundle; embedded affine points have y0 = 1,
    model-bundle points have y0 = 0."""

    x: tuple[float, ...]
    y0: float
    y: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", _floats(self.x))
        object.__setattr__(self, "y0", float(self.y0))
        object.__setattr__(self, "y", _floats(self.y))


@dataclass(frozen=True)
class TildeETangent:
    at: TildeEPoint
    dx: tuple[float, ...]
    dy: tuple[float, ...]  # length e_dim + 1, extra coordinate first

    def __post_init__(self):
        object.__setattr__(self, "dx", _floats(self.dx))
        object.__setattr__(self, "dy", _floats(self.dy))


@dataclass(frozen=True)
class SectionEbar:
    """Section of the model vector bundle (components in x only)."""

    components: tuple[Expr, ...]


def iota(e: EPoint) -> TildeEPoint:
    """Canonical affine injection into the enlarged bundle (y0 = 1)."""
    return TildeEPoint(e.x, 1.0, e.y)


def iota_bar(x: BasePoint, w: Sequence[float]) -> TildeEPoint:
    """Canonical linear injection of the model bundle (y0 = 0)."""
    return TildeEPoint(x.x, 0.0, tuple(w))


def tangent_iota(pv: ProlongedVector) -> ProlongedVector:
    """Prolonged extension of the affine injection's tangent map."""
    return ProlongedVector(pv.x, (1.0,) + pv.y, pv.v, (0.0,) + pv.Z)


def tangent_iota_bar(pv: ProlongedVector) -> ProlongedVector:
    """Prolonged extension of the linear injection's tangent map."""
    return ProlongedVector(pv.x, (0.0,) + pv.y, pv.v, (0.0,) + pv.Z)


def _require_base_only(ac: AffineCoeffs) -> None:
    allowed = set(x_names(ac.base_dim))
    entries: list[Expr] = [e for row in ac.gamma0 for e in row]
    entries += [e for row in ac.gamma1 for col in row for e in col]
    for entry in entries:
        extra = variables(entry) - allowed
        if extra:
            raise NotAffineError(
                Counterexample(
                    kind="coefficient-variables",
                    point={"variables": sorted(extra)},
                    residual=float("nan"),
                )
            )


def extend_to_bidual(
    ac: AffineCoeffs, samples: int = 32, seed: int = 0, tol: float = 1e-10
) -> BidualCoeffs:
    """Extend affine coefficients to the enlarged linear connection.

    The extra-coordinate block is identically zero; the remaining blocks copy
    the affine data.  The defining compatibility (the extended lift agrees
    with the pushed-forward affine lift along the injection) is verified
    numerically at seeded samples.
    """
    _require_base_only(ac)
    m, k = ac.e_dim, ac.v_rank
    zero = Num(0.0)
    rows: list[tuple[tuple[Expr, ...], ...]] = []
    rows.append(tuple(tuple(zero for _ in range(m + 1)) for _ in range(k)))
    for alpha in range(m):
        rows.append(
            tuple(
                (ac.gamma0[alpha][a],) + tuple(ac.gamma1[alpha][a]) for a in range(k)
            )
        )
    bc = BidualCoeffs(base_dim=ac.base_dim, gammaT=tuple(rows))

    rng = random.Random(seed)
    for _ in range(samples):
        x = sample_point(rng, ac.base_dim)
        y = sample_point(rng, m)
        v = sample_point(rng, k)
        env = base_env(x)
        extended = _gammaT_contract(bc, env, (1.0,) + tuple(y), v)
        affine_fiber = tuple(
            sum(
                (
                    evaluate(ac.gamma0[alpha][a], env)
                    + sum(
                        evaluate(ac.gamma1[alpha][a][beta], env) * y[beta]
                        for beta in range(m)
                    )
                )
                * v[a]
                for a in range(k)
            )
            for alpha in range(m)
        )
        pushed = (0.0,) + affine_fiber
        residual = max(abs(e - p) for e, p in zip(extended, pushed))
        if residual > tol:
            raise ArithmeticError(
                f"bidual extension inconsistent with the affine lift: "
                f"residual {residual:.3e} > {tol:.1e}"
            )
    return bc


def _gammaT_contract(
    bc: BidualCoeffs, env: dict[str, float], yA: Sequence[float], v: Sequence[float]
) -> tuple[float, ...]:
    """Contraction gammaT[A][a][B] * yA[B] * v[a], for each A."""
    m1, k = bc.e_dim + 1, bc.v_rank
    return tuple(
        sum(
            evaluate(bc.gammaT[A][a][B], env) * yA[B] * v[a]
            for a in range(k)
            for B in range(m1)
        )
        for A in range(m1)
    )


def htilde_apply(
    spec: BundleSpec, bc: BidualCoeffs, te: TildeEPoint, v: Sequence[float]
) -> TildeETangent:
    """Linear horizontal lift on the enlarged bundle."""
    dx = anchor_apply(spec, VVector(te.x, v))
    env = base_env(te.x)
    dy = tuple(-g for g in _gammaT_contract(bc, env, (te.y0,) + te.y, v))
    return TildeETangent(te, dx, dy)


def connection_map_K_tilde(
    bc: BidualCoeffs, pv: ProlongedVector
) -> tuple[float, ...]:
    """Connection map on the enlarged bundle; pv carries e_dim+1 fibre slots."""
    env = base_env(pv.x)
    g = _gammaT_contract(bc, env, pv.y, pv.v)
    return tuple(z + gz for z, gz in zip(pv.Z, g, strict=True))


def connection_map_K_bar(ac: AffineCoeffs, pv: ProlongedVector) -> tuple[float, ...]:
    """Connection map of the linear part; pv.y plays the model-fibre point."""
    env = base_env(pv.x)
    m, k = ac.e_dim, ac.v_rank
    g = tuple(
        sum(
            evaluate(ac.gamma1[alpha][a][beta], env) * pv.y[beta] * pv.v[a]
            for a in range(k)
            for beta in range(m)
        )
        for alpha in range(m)
    )
    return tuple(z + gz for z, gz in zip(pv.Z, g, strict=True))


def restrict_to_linear(
    ac: AffineCoeffs,
) -> tuple[tuple[tuple[Expr, ...], ...], ...]:
    """Linear connection on the model bundle: the degree-one coefficient block."""
    return ac.gamma1


def cov_deriv(
    spec: BundleSpec,
    ac: AffineCoeffs,
    zeta: SectionV,
    sigma: SectionE,
    x: BasePoint,
) -> tuple[float, ...]:
    """Covariant derivative of an affine section, coordinate route.

    Component alpha is
    ``sum_a (d(sigma^alpha)/dx^i rho^i_a + gamma0 + gamma1 . sigma) zeta^a``.
    Must agree with :func:`cov_deriv_intrinsic` on the same data.
    """
    env = base_env(x.x)
    n, k, m = spec.base_dim, spec.v_rank, ac.e_dim
    xs = x_names(n)
    sigma_vals = section_value(sigma, x)
    zeta_vals = section_value(zeta, x)
    rho = anchor_matrix(spec, x.x)
    out = []
    for alpha in range(m):
        jac = [evaluate(diff(sigma.components[alpha], xs[i]), env) for i in range(n)]
        total = 0.0
        for a in range(k):
            transport_term = sum(jac[i] * rho[i][a] for i in range(n))
            coeff = evaluate(ac.gamma0[alpha][a], env) + sum(
                evaluate(ac.gamma1[alpha][a][beta], env) * sigma_vals[beta]
                for beta in range(m)
            )
            total += (transport_term + coeff) * zeta_vals[a]
        out.append(total)
    return tuple(out)


def cov_deriv_intrinsic(
    spec: BundleSpec, zeta: SectionV, sigma: SectionE, x: BasePoint
) -> tuple[float, ...]:
    """Covariant derivative through the connection map (independent route).

    Builds the prolonged vector of (zeta(x), T sigma(rho(zeta(x)))) and
    applies the connection map of the full coefficient matrix; works for
    non-affine connections too.
    """
    zeta_here = VVector(x.x, section_value(zeta, x))
    dx = anchor_apply(spec, zeta_here)
    X = tangent_section(sigma, x, dx)
    pv = make_prolonged(spec, zeta_here, X)
    return connection_map_K(spec, pv)


def cov_deriv_linear(
    spec: BundleSpec,
    gamma1: tuple[tuple[tuple[Expr, ...], ...], ...],
    zeta: SectionV,
    eta: SectionEbar,
    x: BasePoint,
) -> tuple[float, ...]:
    """Covariant derivative of a model-bundle section under the linear part."""
    env = base_env(x.x)
    n, k = spec.base_dim, spec.v_rank
    m = len(gamma1)
    xs = x_names(n)
    eta_vals = [evaluate(c, env) for c in eta.components]
    zeta_vals = section_value(zeta, x)
    rho = anchor_matrix(spec, x.x)
    out = []
    for alpha in range(m):
        jac = [evaluate(diff(eta.components[alpha], xs[i]), env) for i in range(n)]
        total = 0.0
        for a in range(k):
            transport_term = sum(jac[i] * rho[i][a] for i in range(n))
            coeff = sum(
                evaluate(gamma1[alpha][a][beta], env) * eta_vals[beta]
                for beta in range(m)
            )
            total += (transport_term + coeff) * zeta_vals[a]
        out.append(total)
    return tuple(out)


def cov_deriv_bidual(
    spec: BundleSpec,
    bc: BidualCoeffs,
    zeta: SectionV,
    sigma_tilde: Sequence[Expr],
    x: BasePoint,
) -> tuple[float, ...]:
    """Linear covariant derivative on the enlarged bundle.

    ``sigma_tilde`` lists the e_dim+1 component expressions (in x only),
    extra coordinate first.
    """
    env = base_env(x.x)
    n, k = spec.base_dim, spec.v_rank
    m1 = bc.e_dim + 1
    if len(sigma_tilde) != m1:
        raise ValueError(f"expected {m1} components, got {len(sigma_tilde)}")
    xs = x_names(n)
    vals = [evaluate(c, env) for c in sigma_tilde]
    zeta_vals = section_value(zeta, x)
    rho = anchor_matrix(spec, x.x)
    out = []
    for A in range(m1):
        jac = [evaluate(diff(sigma_tilde[A], xs[i]), env) for i in range(n)]
        total = 0.0
        for a in range(k):
            transport_term = sum(jac[i] * rho[i][a] for i in range(n))
            coeff = sum(
                evaluate(bc.gammaT[A][a][B], env) * vals[B] for B in range(m1)
            )
            total += (transport_term + coeff) * zeta_vals[a]
        out.append(total)
    return tuple(out)


def cov_deriv_dual_basis(
    spec: BundleSpec, bc: BidualCoeffs, zeta: SectionV, x: BasePoint
) -> tuple[tuple[float, ...], ...]:
    """Derivatives of the dual basis covectors on the enlarged bundle.

    Row A holds the expansion coefficients of the derivative of the A-th
    basis covector: entry [A][B] = -sum_a zeta^a gammaT[A][a][B] at x.
    """
    env = base_env(x.x)
    k, m1 = bc.v_rank, bc.e_dim + 1
    zeta_vals = section_value(zeta, x)
    return tuple(
        tuple(
            -sum(
                zeta_vals[a] * evaluate(bc.gammaT[A][a][B], env) for a in range(k)
            )
            for B in range(m1)
        )
        for A in range(m1)
    )


@dataclass(frozen=True)
class E0Result:
    passed: bool
    tolerance: float
    witness: dict | None


def check_e0_parallel(
    bc: BidualCoeffs, points: Iterable[BasePoint], tol: float = 1e-10
) -> E0Result:
    """True iff the extra-coordinate coefficient block vanishes at the points.

    Equivalent to the extra dual basis covector being parallel, which is the
    condition for the restriction to the embedded affine bundle to define an
    affine connection.
    """
    k, m1 = bc.v_rank, bc.e_dim + 1
    for point in points:
        env = base_env(point.x)
        for a in range(k):
            for B in range(m1):
                value = evaluate(bc.gammaT[0][a][B], env)
                if abs(value) > tol:
                    witness = {"x": point.x, "a": a, "B": B, "value": value}
                    return E0Result(False, tol, witness)
    return E0Result(True, tol, None)


def commutation_check(
    spec: BundleSpec,
    ac: AffineCoeffs,
    pv: ProlongedVector,
    verify: bool = True,
    verify_samples: int = 16,
    seed: int = 0,
) -> float:
    """Residual of the connection-map commutation along both injections.

    Compares the injected connection map of the affine bundle with the
    enlarged connection map of the injected prolonged vector, and the same
    for the model bundle.  Returns the maximum component difference; raises
    :class:`NotAffineError` when the spec's coefficients fail the affineness
    precondition.
    """
    if verify:
        result = check_affine(spec, sample_count=verify_samples, seed=seed)
        if not result.passed:
            raise NotAffineError(result.counterexample)
    bc = extend_to_bidual(ac, samples=0)

    lhs_affine = (0.0,) + connection_map_K(spec, pv)
    rhs_affine = connection_map_K_tilde(bc, tangent_iota(pv))
    residual = max(abs(a - b) for a, b in zip(lhs_affine, rhs_affine, strict=True))

    lhs_linear = (0.0,) + connection_map_K_bar(ac, pv)
    rhs_linear = connection_map_K_tilde(bc, tangent_iota_bar(pv))
    residual_linear = max(
        abs(a - b) for a, b in zip(lhs_linear, rhs_linear, strict=True)
    )
    return max(residual, residual_linear)


def reconstruct_h(ac: AffineCoeffs) -> tuple[tuple[Expr, ...], ...]:
    """Connection coefficients rebuilt from covariant-derivative data.

    Uses the chart-constant section through each point: its tangent term has
    zero fibre part, so the lift reduces to the (negated) vertical lift of
    the derivative and the coefficients come out as gamma0 + gamma1 . y.
    The round trip coefficients -> derivative data -> coefficients is the
    identity on evaluations.
    """
    m, k = ac.e_dim, ac.v_rank
    ys = y_names(m)
    out = []
    for alpha in range(m):
        row = []
        for a in range(k):
            expr: Expr = ac.gamma0[alpha][a]
            for beta in range(m):
                expr = add(expr, mul(ac.gamma1[alpha][a][beta], Var(ys[beta])))
            row.append(expr)
        out.append(tuple(row))
    return tuple(out)


def bidual_restrict_to_e(bc: BidualCoeffs) -> tuple[tuple[Expr, ...], ...]:
    """Coefficients induced on the embedded affine bundle (y0 = 1 slice)."""
    m, k = bc.e_dim, bc.v_rank
    ys = y_names(m)
    out = []
    for alpha in range(m):
        row = []
        for a in range(k):
            expr: Expr = bc.gammaT[alpha + 1][a][0]
            for beta in range(m):
                expr = add(expr, mul(bc.gammaT[alpha + 1][a][beta + 1], Var(ys[beta])))
            row.append(expr)
        out.append(tuple(row))
    return tuple(out)
