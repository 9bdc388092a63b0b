"""Deterministic sampling helpers for the randomized checks.

Every randomized check in the package draws its samples from an explicit
``random.Random`` generator seeded by the caller, so reports and test runs
are reproducible bit for bit.
"""

from __future__ import annotations

import random
from typing import Sequence

from .exprlang import Expr, Num, Var, add, mul

__all__ = ["sample_point", "random_polynomial"]

#: Coordinates for randomized checks are drawn uniformly from this interval.
SAMPLE_LOW = -2.0
SAMPLE_HIGH = 2.0


def sample_point(rng: random.Random, dim: int) -> tuple[float, ...]:
    return tuple(rng.uniform(SAMPLE_LOW, SAMPLE_HIGH) for _ in range(dim))


def random_polynomial(
    rng: random.Random, var_names: Sequence[str], degree: int = 2
) -> Expr:
    """Random polynomial with uniform coefficients in the sampling interval.

    Includes all monomials up to ``degree`` (degree <= 2 supported), built
    with the folding constructors so zero coefficients drop out.
    """
    if degree not in (0, 1, 2):
        raise ValueError("only degrees 0..2 are supported")
    expr: Expr = Num(round(rng.uniform(SAMPLE_LOW, SAMPLE_HIGH), 6))
    if degree >= 1:
        for name in var_names:
            coeff = round(rng.uniform(SAMPLE_LOW, SAMPLE_HIGH), 6)
            expr = add(expr, mul(Num(coeff), Var(name)))
    if degree >= 2:
        for i, name_i in enumerate(var_names):
            for name_j in var_names[i:]:
                coeff = round(rng.uniform(SAMPLE_LOW, SAMPLE_HIGH), 6)
                expr = add(expr, mul(Num(coeff), mul(Var(name_i), Var(name_j))))
    return expr
