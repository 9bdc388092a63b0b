"""Chart-level bundle data: base, anchored vector bundle, affine fibre data.

Everything here is single-chart: points are raw coordinate tuples, there is
no atlas and no transition machinery.  A :class:`BundleSpec` stores the
chart dimensions together with the anchor matrix (entries in the base
variables only) and the connection coefficient matrix (entries in base and
fibre variables).  All types are immutable and all operations pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .exprlang import (
    Expr,
    diff,
    evaluate,
    parse,
    variables,
    x_names,
    y_names,
)

__all__ = [
    "BundleSpec",
    "BasePoint",
    "EPoint",
    "VVector",
    "ETangent",
    "SectionE",
    "SectionV",
    "validate_spec",
    "anchor_matrix",
    "anchor_apply",
    "gamma_matrix",
    "gamma_apply",
    "section_value",
    "tangent_section",
    "anchor_derivation",
    "base_env",
    "fiber_env",
]


def _floats(values: Iterable[float]) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    for v in out:
        if not math.isfinite(v):
            raise ValueError(f"non-finite coordinate {v!r}")
    return out


def _expr(entry: str | Expr) -> Expr:
    return parse(entry) if isinstance(entry, str) else entry


def _expr_matrix(rows: Iterable[Iterable[str | Expr]]) -> tuple[tuple[Expr, ...], ...]:
    return tuple(tuple(_expr(entry) for entry in row) for row in rows)


@dataclass(frozen=True)
class BundleSpec:
    """Chart description of an anchored bundle with a connection.

    ``anchor`` is base_dim x v_rank (rows indexed by the base coordinate,
    columns by the fibre of the anchored bundle) and may reference base
    variables only.  ``gamma`` is e_dim x v_rank and may reference base and
    fibre variables.  Shapes and variable usage are checked by
    :func:`validate_spec`, not at construction (malformed specs must be
    representable so the validator can report them).
    """

    base_dim: int
    v_rank: int
    e_dim: int
    anchor: tuple[tuple[Expr, ...], ...]
    gamma: tuple[tuple[Expr, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "anchor", tuple(tuple(row) for row in self.anchor))
        object.__setattr__(self, "gamma", tuple(tuple(row) for row in self.gamma))

    @classmethod
    def from_strings(
        cls,
        base_dim: int,
        v_rank: int,
        e_dim: int,
        anchor: Iterable[Iterable[str | Expr]],
        gamma: Iterable[Iterable[str | Expr]],
    ) -> "BundleSpec":
        return cls(base_dim, v_rank, e_dim, _expr_matrix(anchor), _expr_matrix(gamma))


@dataclass(frozen=True)
class BasePoint:
    x: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", _floats(self.x))


@dataclass(frozen=True)
class EPoint:
    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", _floats(self.x))
        object.__setattr__(self, "y", _floats(self.y))


@dataclass(frozen=True)
class VVector:
    x: tuple[float, ...]
    v: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", _floats(self.x))
        object.__setattr__(self, "v", _floats(self.v))


@dataclass(frozen=True)
class ETangent:
    """A tangent vector to the total space at ``at``."""

    at: EPoint
    dx: tuple[float, ...]
    dy: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "dx", _floats(self.dx))
        object.__setattr__(self, "dy", _floats(self.dy))


@dataclass(frozen=True)
class SectionE:
    """Affine section, given by its fibre components (expressions in x only)."""

    components: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "components", tuple(_expr(c) for c in self.components)
        )


@dataclass(frozen=True)
class SectionV:
    """Section of the anchored vector bundle (expressions in x only)."""

    components: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "components", tuple(_expr(c) for c in self.components)
        )


def base_env(x: Sequence[float]) -> dict[str, float]:
    return {f"x{i + 1}": float(value) for i, value in enumerate(x)}


def fiber_env(x: Sequence[float], y: Sequence[float]) -> dict[str, float]:
    env = base_env(x)
    for i, value in enumerate(y):
        env[f"y{i + 1}"] = float(value)
    return env


def validate_spec(spec: BundleSpec) -> list[str]:
    """Check dimensions, matrix shapes, and variable-usage rules.

    Returns the list of violations (empty means valid); never raises.
    """
    violations: list[str] = []
    n, k, m = spec.base_dim, spec.v_rank, spec.e_dim
    for name, value in (("base_dim", n), ("v_rank", k), ("e_dim", m)):
        if value < 1:
            violations.append(f"{name} must be >= 1, got {value}")
    if violations:
        return violations

    anchor_ok = len(spec.anchor) == n and all(len(row) == k for row in spec.anchor)
    if not anchor_ok:
        shape = [len(row) for row in spec.anchor]
        violations.append(
            f"anchor must be base_dim x v_rank ({n} x {k}); got rows of lengths {shape}"
        )
    gamma_ok = len(spec.gamma) == m and all(len(row) == k for row in spec.gamma)
    if not gamma_ok:
        shape = [len(row) for row in spec.gamma]
        violations.append(
            f"gamma must be e_dim x v_rank ({m} x {k}); got rows of lengths {shape}"
        )

    base_vars = set(x_names(n))
    fiber_vars = base_vars | set(y_names(m))
    if anchor_ok:
        for i, row in enumerate(spec.anchor):
            for a, entry in enumerate(row):
                extra = variables(entry) - base_vars
                if extra:
                    violations.append(
                        f"anchor[{i}][{a}] depends on fiber variable(s) "
                        f"{sorted(extra)}; anchor entries may use base variables only"
                    )
    if gamma_ok:
        for alpha, row in enumerate(spec.gamma):
            for a, entry in enumerate(row):
                extra = variables(entry) - fiber_vars
                if extra:
                    violations.append(
                        f"gamma[{alpha}][{a}] depends on variable(s) {sorted(extra)}; "
                        f"gamma entries may use base and fiber variables only"
                    )
    return violations


def anchor_matrix(spec: BundleSpec, x: Sequence[float]) -> tuple[tuple[float, ...], ...]:
    env = base_env(x)
    return tuple(
        tuple(evaluate(entry, env) for entry in row) for row in spec.anchor
    )


def anchor_apply(spec: BundleSpec, w: VVector) -> tuple[float, ...]:
    """Base velocity assigned to ``w`` by the anchor: row i is sum_a rho[i][a]*v[a]."""
    env = base_env(w.x)
    return tuple(
        sum(evaluate(entry, env) * w.v[a] for a, entry in enumerate(row))
        for row in spec.anchor
    )


def gamma_matrix(
    spec: BundleSpec, x: Sequence[float], y: Sequence[float]
) -> tuple[tuple[float, ...], ...]:
    env = fiber_env(x, y)
    return tuple(tuple(evaluate(entry, env) for entry in row) for row in spec.gamma)


def gamma_apply(spec: BundleSpec, e: EPoint, v: Sequence[float]) -> tuple[float, ...]:
    """Connection coefficients contracted with a fibre vector: sum_a gamma[alpha][a]*v[a]."""
    env = fiber_env(e.x, e.y)
    return tuple(
        sum(evaluate(entry, env) * float(v[a]) for a, entry in enumerate(row))
        for row in spec.gamma
    )


def section_value(section: SectionE | SectionV, x: BasePoint) -> tuple[float, ...]:
    env = base_env(x.x)
    return tuple(evaluate(c, env) for c in section.components)


def tangent_section(
    sigma: SectionE, x: BasePoint, dx: Sequence[float]
) -> ETangent:
    """Tangent map of the section applied to a base velocity.

    Returns the tangent at (x, sigma(x)) whose fibre part is the exact
    (symbolic) Jacobian of sigma contracted with dx.
    """
    env = base_env(x.x)
    y = tuple(evaluate(c, env) for c in sigma.components)
    names = x_names(len(x.x))
    dy = tuple(
        sum(evaluate(diff(c, names[i]), env) * float(dx[i]) for i in range(len(names)))
        for c in sigma.components
    )
    return ETangent(EPoint(x.x, y), tuple(float(d) for d in dx), dy)


def anchor_derivation(
    spec: BundleSpec, zeta: SectionV, f: Expr, x: BasePoint
) -> float:
    """Derivative of the base function f along the anchored section zeta."""
    env = base_env(x.x)
    zeta_vals = [evaluate(c, env) for c in zeta.components]
    rho = anchor_matrix(spec, x.x)
    names = x_names(spec.base_dim)
    total = 0.0
    for i in range(spec.base_dim):
        velocity = sum(rho[i][a] * zeta_vals[a] for a in range(spec.v_rank))
        total += velocity * evaluate(diff(f, names[i]), env)
    return total
