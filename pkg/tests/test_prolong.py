import random

import pytest

from anchorconn.exprlang import parse
from anchorconn.geometry import EPoint, ETangent, VVector
from anchorconn.prolong import (
    BasePointMismatchError,
    NotInProlongationError,
    ProlongedSection,
    ProlongedVector,
    make_prolonged,
    project_j,
    prolonged_section_value,
    rho1,
    vertical_lift,
)


def _tangent(x, y, dx, dy):
    return ETangent(EPoint(x, y), dx, dy)


def test_make_prolonged_accepts_matching_pair(f1):
    pv = make_prolonged(
        f1, VVector((0.0,), (1.0,)), _tangent((0.0,), (1.0,), (1.0,), (7.0,))
    )
    assert pv == ProlongedVector((0.0,), (1.0,), (1.0,), (7.0,))


def test_make_prolonged_rejects_constraint_violation(f1):
    with pytest.raises(NotInProlongationError) as err:
        make_prolonged(
            f1, VVector((0.0,), (1.0,)), _tangent((0.0,), (1.0,), (2.0,), (0.0,))
        )
    assert err.value.residual == pytest.approx(1.0)


def test_make_prolonged_rejects_base_mismatch(f1):
    with pytest.raises(BasePointMismatchError):
        make_prolonged(
            f1, VVector((0.0,), (1.0,)), _tangent((1.0,), (1.0,), (1.0,), (0.0,))
        )


def test_make_prolonged_kernel_direction_gives_vertical_image(f4):
    # the anchor kills (0, 1), so dx = 0 is admissible and the tangent-slot
    # image is vertical even though the prolonged vector itself is not
    pv = make_prolonged(
        f4, VVector((0.0,), (0.0, 1.0)), _tangent((0.0,), (0.0,), (0.0,), (5.0,))
    )
    image = rho1(f4, pv)
    assert image.dx == (0.0,)
    assert image.dy == (5.0,)
    assert pv.v != (0.0, 0.0)


def test_membership_tolerance_is_configurable(f1):
    loose = make_prolonged(
        f1,
        VVector((0.0,), (1.0,)),
        _tangent((0.0,), (1.0,), (1.0 + 1e-6,), (0.0,)),
        tol=1e-3,
    )
    assert loose.v == (1.0,)


def test_project_j_examples():
    e, v = project_j(ProlongedVector((0.0,), (1.0,), (1.0,), (-5.0,)))
    assert e == EPoint((0.0,), (1.0,))
    assert v == VVector((0.0,), (1.0,))
    _, v = project_j(ProlongedVector((0.0,), (1.0,), (0.0,), (2.0,)))
    assert v.v == (0.0,)
    e, v = project_j(ProlongedVector((1.0,), (0.0,), (3.0,), (0.0,)))
    assert e == EPoint((1.0,), (0.0,))
    assert v.v == (3.0,)


def test_vertical_lift_examples(f1, f4):
    assert vertical_lift(f1, EPoint((0.0,), (1.0,)), (2.0,)) == ProlongedVector(
        (0.0,), (1.0,), (0.0,), (2.0,)
    )
    assert vertical_lift(f1, EPoint((0.0,), (1.0,)), (0.0,)).Z == (0.0,)
    assert vertical_lift(f4, EPoint((1.0,), (0.0,)), (-3.0,)) == ProlongedVector(
        (1.0,), (0.0,), (0.0, 0.0), (-3.0,)
    )


def test_rho1_examples(f1, f4):
    t = rho1(f1, ProlongedVector((0.0,), (1.0,), (1.0,), (-5.0,)))
    assert t.dx == (1.0,)
    assert t.dy == (-5.0,)
    vertical = rho1(f1, ProlongedVector((0.0,), (1.0,), (0.0,), (3.0,)))
    assert vertical.dx == (0.0,)
    kernel = rho1(f4, ProlongedVector((0.0,), (0.0,), (0.0, 1.0), (4.0,)))
    assert kernel.dx == (0.0,)
    assert kernel.dy == (4.0,)


def test_exactness_of_the_sequence(f1):
    # vertical lifts have zero pullback projection, and anything with zero
    # projection is the vertical lift of its own Z slot
    e = EPoint((0.3,), (-0.7,))
    lifted = vertical_lift(f1, e, (2.5,))
    _, v = project_j(lifted)
    assert v.v == (0.0,)
    pv = ProlongedVector((0.3,), (-0.7,), (0.0,), (1.25,))
    assert pv == vertical_lift(f1, EPoint(pv.x, pv.y), pv.Z)


def test_round_trip_through_tangent_slot(f1, f2, f4):
    rng = random.Random(11)
    for spec in (f1, f2, f4):
        for _ in range(50):
            pv = ProlongedVector(
                tuple(rng.uniform(-2, 2) for _ in range(spec.base_dim)),
                tuple(rng.uniform(-2, 2) for _ in range(spec.e_dim)),
                tuple(rng.uniform(-2, 2) for _ in range(spec.v_rank)),
                tuple(rng.uniform(-2, 2) for _ in range(spec.e_dim)),
            )
            image = rho1(spec, pv)
            back = make_prolonged(spec, VVector(pv.x, pv.v), image)
            assert back == pv


def test_projection_is_fiberwise_linear():
    rng = random.Random(13)
    for _ in range(100):
        x = (rng.uniform(-2, 2),)
        y = (rng.uniform(-2, 2),)
        lam = rng.uniform(-2, 2)
        a = ProlongedVector(x, y, (rng.uniform(-2, 2),), (rng.uniform(-2, 2),))
        b = ProlongedVector(x, y, (rng.uniform(-2, 2),), (rng.uniform(-2, 2),))
        combo = ProlongedVector(
            x,
            y,
            tuple(p + lam * q for p, q in zip(a.v, b.v)),
            tuple(p + lam * q for p, q in zip(a.Z, b.Z)),
        )
        _, v_combo = project_j(combo)
        _, v_a = project_j(a)
        _, v_b = project_j(b)
        assert v_combo.v == tuple(p + lam * q for p, q in zip(v_a.v, v_b.v))


def test_prolonged_section_evaluates_pointwise(f1):
    section = ProlongedSection(zeta=(parse("x1 + y1"),), Zcomp=(parse("2*y1"),))
    value = prolonged_section_value(f1, section, EPoint((1.0,), (2.0,)))
    assert value == ProlongedVector((1.0,), (2.0,), (3.0,), (4.0,))
