"""Connection induced by a second-order differential equation field.

Forces f^i(t, x, v) induce connection coefficients
``-(1/2) df^i/dv^j`` (velocity block) and ``-f^i + (1/2) (df^i/dv^j) v^j``
(time block).  Forces quadratic in the velocities produce coefficients that
are affine in the velocities; the check hands the induced coefficients to
the affine classifier after renaming v -> y and t -> x_{d+1}.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable

from .exprlang import (
    Expr,
    Num,
    Var,
    add,
    diff,
    evaluate,
    mul,
    neg,
    subst,
    v_names,
    variables,
    x_names,
)
from .geometry import BundleSpec, _expr
from .sampling import sample_point

__all__ = [
    "SodeSpec",
    "SodeConnection",
    "QuadraticForceResult",
    "sode_connection",
    "quadratic_force_check",
    "sode_to_bundle_spec",
]

THIRD_DERIVATIVE_TOL = 1e-8


@dataclass(frozen=True)
class SodeSpec:
    """Second-order field with d degrees of freedom and forces in (t, x, v)."""

    dof: int
    forces: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "forces", tuple(_expr(f) for f in self.forces))
        if self.dof < 1:
            raise ValueError(f"dof must be >= 1, got {self.dof}")
        if len(self.forces) != self.dof:
            raise ValueError(
                f"expected {self.dof} force components, got {len(self.forces)}"
            )
        allowed = {"t"} | set(x_names(self.dof)) | set(v_names(self.dof))
        for i, f in enumerate(self.forces):
            extra = variables(f) - allowed
            if extra:
                raise ValueError(
                    f"forces[{i}] depends on {sorted(extra)}; allowed variables "
                    f"are t, x1..x{self.dof}, v1..v{self.dof}"
                )


@dataclass(frozen=True)
class SodeConnection:
    """Induced coefficients: ``gamma[i][j]`` for the velocity directions and
    ``gamma0[i]`` for the time direction."""

    gamma: tuple[tuple[Expr, ...], ...]
    gamma0: tuple[Expr, ...]


def sode_connection(spec: SodeSpec) -> SodeConnection:
    """Induced connection coefficients, by exact symbolic differentiation."""
    d = spec.dof
    vs = v_names(d)
    gamma_rows = []
    gamma0 = []
    for i in range(d):
        f = spec.forces[i]
        dv = [diff(f, vs[j]) for j in range(d)]
        gamma_rows.append(tuple(mul(Num(-0.5), dv[j]) for j in range(d)))
        contraction: Expr = Num(0.0)
        for j in range(d):
            contraction = add(contraction, mul(dv[j], Var(vs[j])))
        gamma0.append(add(neg(f), mul(Num(0.5), contraction)))
    return SodeConnection(tuple(gamma_rows), tuple(gamma0))


@dataclass(frozen=True)
class QuadraticForceResult:
    """Outcome of the quadratic-force classification.

    On a pass, carries the extracted coefficients of
    f^i = f0^i + f1^i_j v^j + f2^i_{jk} v^j v^k (f2 symmetrized).
    """

    passed: bool
    samples: int
    seed: int
    tolerance: float
    f0: tuple[Expr, ...] | None
    f1: tuple[tuple[Expr, ...], ...] | None
    f2: tuple[tuple[tuple[Expr, ...], ...], ...] | None
    counterexample: dict | None


def quadratic_force_check(
    spec: SodeSpec,
    sample_count: int = 64,
    seed: int = 0,
    tol: float = THIRD_DERIVATIVE_TOL,
) -> QuadraticForceResult:
    """Decide whether the forces are quadratic in the velocities.

    Passes iff all third velocity-derivatives vanish at seeded samples and
    the induced connection coefficients are affine in the velocities
    (vanishing second velocity-differences) at the same samples.
    """
    d = spec.dof
    vs = v_names(d)
    rng = random.Random(seed)

    second = [
        [[diff(diff(spec.forces[i], vs[j]), vs[k]) for k in range(d)] for j in range(d)]
        for i in range(d)
    ]
    third = [
        [
            [[diff(second[i][j][k], vs[l]) for l in range(d)] for k in range(d)]
            for j in range(d)
        ]
        for i in range(d)
    ]
    conn = sode_connection(spec)
    conn_entries = [e for row in conn.gamma for e in row] + list(conn.gamma0)

    def env_at(t, x, v):
        env = {"t": t}
        env.update({f"x{i + 1}": x[i] for i in range(d)})
        env.update({f"v{i + 1}": v[i] for i in range(d)})
        return env

    for _ in range(sample_count):
        t = rng.uniform(-2.0, 2.0)
        x = sample_point(rng, d)
        v = sample_point(rng, d)
        dv = sample_point(rng, d)
        env = env_at(t, x, v)
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    for l in range(d):
                        value = evaluate(third[i][j][k][l], env)
                        if abs(value) > tol:
                            witness = {
                                "t": t,
                                "x": x,
                                "v": v,
                                "entry": [i, j, k, l],
                                "value": value,
                            }
                            return QuadraticForceResult(
                                False, sample_count, seed, tol, None, None, None, witness
                            )
        # induced coefficients must be affine in the velocities
        v_plus = tuple(a + b for a, b in zip(v, dv))
        v_plus2 = tuple(a + 2.0 * b for a, b in zip(v, dv))
        env1 = env_at(t, x, v_plus)
        env2 = env_at(t, x, v_plus2)
        for entry in conn_entries:
            second_diff = (
                evaluate(entry, env2) - 2.0 * evaluate(entry, env1) + evaluate(entry, env)
            )
            if abs(second_diff) > tol:
                witness = {"t": t, "x": x, "v": v, "dv": dv, "value": second_diff}
                return QuadraticForceResult(
                    False, sample_count, seed, tol, None, None, None, witness
                )

    at_zero = {name: 0.0 for name in vs}
    f0 = tuple(subst(f, at_zero) for f in spec.forces)
    f1 = tuple(
        tuple(subst(diff(spec.forces[i], vs[j]), at_zero) for j in range(d))
        for i in range(d)
    )
    f2 = tuple(
        tuple(
            tuple(
                subst(
                    mul(Num(0.25), add(second[i][j][k], second[i][k][j])), at_zero
                )
                for k in range(d)
            )
            for j in range(d)
        )
        for i in range(d)
    )
    return QuadraticForceResult(True, sample_count, seed, tol, f0, f1, f2, None)


def sode_to_bundle_spec(spec: SodeSpec) -> BundleSpec:
    """Embed the induced coefficients into a bundle description.

    Renaming convention: t -> x_{d+1} (extra base coordinate), v_j -> y_j;
    the fibre index runs over {0, 1..d} with the time column first.  The
    anchor is set to the identity (it plays no role in the affine check).
    """
    d = spec.dof
    conn = sode_connection(spec)
    renaming: dict[str, Expr] = {"t": Var(f"x{d + 1}")}
    renaming.update({f"v{j + 1}": Var(f"y{j + 1}") for j in range(d)})
    anchor = tuple(
        tuple(Num(1.0) if i == a else Num(0.0) for a in range(d + 1))
        for i in range(d + 1)
    )
    gamma = tuple(
        (subst(conn.gamma0[i], renaming),)
        + tuple(subst(conn.gamma[i][j], renaming) for j in range(d))
        for i in range(d)
    )
    return BundleSpec(
        base_dim=d + 1, v_rank=d + 1, e_dim=d, anchor=anchor, gamma=gamma
    )
