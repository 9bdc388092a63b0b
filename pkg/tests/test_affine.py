import math
import random

import pytest

from anchorconn.exprlang import Num, evaluate, parse, to_source
from anchorconn.geometry import (
    BasePoint,
    BundleSpec,
    EPoint,
    SectionE,
    SectionV,
    anchor_derivation,
    section_value,
)
from anchorconn.prolong import ProlongedVector, vertical_lift
from anchorconn.connection import check_affine, connection_map_K, horizontal_lift
from anchorconn.affine import (
    AffineCoeffs,
    BidualCoeffs,
    NotAffineError,
    SectionEbar,
    TildeEPoint,
    bidual_restrict_to_e,
    check_e0_parallel,
    commutation_check,
    cov_deriv,
    cov_deriv_bidual,
    cov_deriv_dual_basis,
    cov_deriv_intrinsic,
    cov_deriv_linear,
    extend_to_bidual,
    htilde_apply,
    iota,
    iota_bar,
    reconstruct_h,
    restrict_to_linear,
    tangent_iota,
)
from anchorconn.sampling import sample_point

from bundlegen import random_affine_spec


@pytest.fixture
def f1_coeffs(f1) -> AffineCoeffs:
    return check_affine(f1).coeffs


def test_injections():
    assert iota(EPoint((0.0,), (1.0,))) == TildeEPoint((0.0,), 1.0, (1.0,))
    assert iota_bar(BasePoint((0.0,)), (2.0,)) == TildeEPoint((0.0,), 0.0, (2.0,))
    # the affine injection has the linear one as its linear part
    e = EPoint((0.5,), (1.5,))
    shifted = iota(EPoint((0.5,), (1.5 + 0.25,)))
    assert shifted.y0 == iota(e).y0
    assert shifted.y[0] - iota(e).y[0] == 0.25


def test_extend_to_bidual_f1(f1_coeffs):
    bc = extend_to_bidual(f1_coeffs)
    env = {"x1": 0.33}
    # extra-coordinate block vanishes, the rest copies the affine data
    assert evaluate(bc.gammaT[0][0][0], env) == 0.0
    assert evaluate(bc.gammaT[0][0][1], env) == 0.0
    assert evaluate(bc.gammaT[1][0][0], env) == 2.0
    assert evaluate(bc.gammaT[1][0][1], env) == 3.0


def test_extend_to_bidual_zero_and_symbolic():
    zero = AffineCoeffs(1, ((Num(0.0),),), (((Num(0.0),),),))
    bc = extend_to_bidual(zero)
    assert all(
        evaluate(e, {"x1": 1.0}) == 0.0 for row in bc.gammaT for col in row for e in col
    )
    sym = AffineCoeffs(1, ((parse("sin(x1)"),),), (((parse("x1"),),),))
    bc = extend_to_bidual(sym)
    assert to_source(bc.gammaT[1][0][0]) == "sin(x1)"
    assert to_source(bc.gammaT[1][0][1]) == "x1"
    assert to_source(bc.gammaT[0][0][0]) == "0"


def test_extend_to_bidual_rejects_fiber_dependent_coeffs():
    bad = AffineCoeffs(1, ((parse("y1"),),), (((Num(0.0),),),))
    with pytest.raises(NotAffineError):
        extend_to_bidual(bad)


def test_extended_lift_agrees_with_pushed_affine_lift(f1, f1_coeffs):
    from anchorconn.connection import h_apply

    bc = extend_to_bidual(f1_coeffs)
    rng = random.Random(17)
    for _ in range(50):
        e = EPoint((rng.uniform(-2, 2),), (rng.uniform(-2, 2),))
        v = (rng.uniform(-2, 2),)
        extended = htilde_apply(f1, bc, iota(e), v)
        pushed = h_apply(f1, e, v)
        assert extended.dx == pushed.dx
        assert abs(extended.dy[0] - 0.0) <= 1e-15
        assert abs(extended.dy[1] - pushed.dy[0]) <= 1e-10


def test_restrict_to_linear(f1_coeffs):
    gamma1 = restrict_to_linear(f1_coeffs)
    assert evaluate(gamma1[0][0][0], {"x1": 0.0}) == 3.0


def test_cov_deriv_examples(f1, f1_coeffs):
    zeta = SectionV(("1",))
    sigma = SectionE(("x1",))
    assert cov_deriv(f1, f1_coeffs, zeta, sigma, BasePoint((0.0,))) == (3.0,)
    assert cov_deriv(f1, f1_coeffs, zeta, sigma, BasePoint((1.0,))) == (6.0,)
    flat = BundleSpec.from_strings(1, 1, 1, [["1"]], [["0"]])
    flat_coeffs = check_affine(flat).coeffs
    constant = SectionE(("4",))
    assert cov_deriv(flat, flat_coeffs, zeta, constant, BasePoint((0.5,))) == (0.0,)


def test_cov_deriv_agrees_with_intrinsic_route(f1, f1_coeffs):
    rng = random.Random(23)
    zeta = SectionV(("1 + x1",))
    sigma = SectionE(("sin(x1)",))
    for _ in range(100):
        x = BasePoint((rng.uniform(-2, 2),))
        coordinate = cov_deriv(f1, f1_coeffs, zeta, sigma, x)
        intrinsic = cov_deriv_intrinsic(f1, zeta, sigma, x)
        assert max(abs(a - b) for a, b in zip(coordinate, intrinsic)) <= 1e-10


def test_cov_deriv_routes_agree_on_random_affine_specs():
    rng = random.Random(29)
    for _ in range(10):
        spec = random_affine_spec(rng)
        coeffs = check_affine(spec).coeffs
        zeta = SectionV(tuple(f"{rng.uniform(-2, 2):.3f}" for _ in range(spec.v_rank)))
        sigma = SectionE(
            tuple(f"x1*{rng.uniform(-2, 2):.3f} + x2" for _ in range(spec.e_dim))
        )
        for _ in range(10):
            x = BasePoint(sample_point(rng, spec.base_dim))
            coordinate = cov_deriv(spec, coeffs, zeta, sigma, x)
            intrinsic = cov_deriv_intrinsic(spec, zeta, sigma, x)
            assert max(abs(a - b) for a, b in zip(coordinate, intrinsic)) <= 1e-10


def test_cov_deriv_linear_examples(f1, f1_coeffs):
    gamma1 = f1_coeffs.gamma1
    zeta = SectionV(("1",))
    assert cov_deriv_linear(f1, gamma1, zeta, SectionEbar((parse("x1"),)), BasePoint((1.0,))) == (4.0,)
    assert cov_deriv_linear(f1, gamma1, zeta, SectionEbar((parse("0"),)), BasePoint((0.7,))) == (0.0,)
    assert cov_deriv_linear(f1, gamma1, zeta, SectionEbar((parse("1"),)), BasePoint((0.0,))) == (3.0,)


def test_dual_basis_derivatives(f1, f1_coeffs):
    bc = extend_to_bidual(f1_coeffs)
    zeta = SectionV(("1",))
    rows = cov_deriv_dual_basis(f1, bc, zeta, BasePoint((0.9,)))
    assert rows[0] == (0.0, 0.0)  # the extra covector is parallel
    assert rows[1] == (-2.0, -3.0)

    perturbed = BidualCoeffs(
        1,
        (
            ((Num(0.0), parse("1")),),
            ((Num(2.0), Num(3.0)),),
        ),
    )
    rows = cov_deriv_dual_basis(f1, perturbed, zeta, BasePoint((0.9,)))
    assert rows[0] == (0.0, -1.0)


def test_bidual_derivative_of_injected_section(f1, f1_coeffs):
    # differentiating the injected section matches injecting the derivative
    bc = extend_to_bidual(f1_coeffs)
    zeta = SectionV(("1",))
    sigma = SectionE(("x1",))
    injected = (parse("1"), parse("x1"))
    value = cov_deriv_bidual(f1, bc, zeta, injected, BasePoint((0.0,)))
    assert value == (0.0, 3.0)
    plain = cov_deriv(f1, f1_coeffs, zeta, sigma, BasePoint((0.0,)))
    assert value[1:] == plain


def test_check_e0_parallel(f1_coeffs):
    bc = extend_to_bidual(f1_coeffs)
    points = [BasePoint((x,)) for x in (-1.0, 0.0, 1.0)]
    assert check_e0_parallel(bc, points).passed

    perturbed = BidualCoeffs(
        1,
        (
            ((Num(0.0), parse("x1")),),
            bc.gammaT[1],
        ),
    )
    result = check_e0_parallel(perturbed, points)
    assert not result.passed
    assert result.witness["value"] != 0.0

    zero = BidualCoeffs(1, (((Num(0.0), Num(0.0)),), ((Num(0.0), Num(0.0)),)))
    assert check_e0_parallel(zero, points).passed


def test_e0_parallel_restriction_is_affine(f1, f1_coeffs):
    # when the extra covector is parallel, the restriction to the embedded
    # bundle defines an affine connection again
    bc = extend_to_bidual(f1_coeffs)
    gamma = bidual_restrict_to_e(bc)
    restricted = BundleSpec(f1.base_dim, f1.v_rank, f1.e_dim, f1.anchor, gamma)
    result = check_affine(restricted)
    assert result.passed
    assert to_source(result.coeffs.gamma0[0][0]) == "2"


def test_commutation_examples(f1, f1_coeffs):
    pv = ProlongedVector((0.0,), (1.0,), (1.0,), (0.0,))
    assert commutation_check(f1, f1_coeffs, pv) <= 1e-12
    # both routes give (0, 5) on this input
    bc = extend_to_bidual(f1_coeffs)
    from anchorconn.affine import connection_map_K_tilde

    assert connection_map_K(f1, pv) == (5.0,)
    assert connection_map_K_tilde(bc, tangent_iota(pv)) == (0.0, 5.0)

    vertical = vertical_lift(f1, EPoint((0.0,), (1.0,)), (2.0,))
    assert commutation_check(f1, f1_coeffs, vertical) <= 1e-12
    horizontal = horizontal_lift(f1, EPoint((0.0,), (1.0,)), (1.0,))
    assert commutation_check(f1, f1_coeffs, horizontal) <= 1e-12


def test_commutation_requires_affine(f2, f1_coeffs):
    pv = ProlongedVector((0.0,), (1.0,), (1.0,), (0.0,))
    with pytest.raises(NotAffineError):
        commutation_check(f2, f1_coeffs, pv)


def test_commutation_randomized(f1, f1_coeffs):
    rng = random.Random(37)
    for _ in range(50):
        pv = ProlongedVector(
            (rng.uniform(-2, 2),),
            (rng.uniform(-2, 2),),
            (rng.uniform(-2, 2),),
            (rng.uniform(-2, 2),),
        )
        assert commutation_check(f1, f1_coeffs, pv, verify=False) <= 1e-10


def test_reconstruct_h_round_trip(f1, f1_coeffs):
    gamma = reconstruct_h(f1_coeffs)
    rng = random.Random(41)
    for _ in range(100):
        env = {"x1": rng.uniform(-2, 2), "y1": rng.uniform(-2, 2)}
        assert abs(evaluate(gamma[0][0], env) - evaluate(f1.gamma[0][0], env)) <= 1e-12

    zero = AffineCoeffs(1, ((Num(0.0),),), (((Num(0.0),),),))
    assert to_source(reconstruct_h(zero)[0][0]) == "0"

    shifted = AffineCoeffs(1, ((parse("x1"),),), (((Num(0.0),),),))
    assert to_source(reconstruct_h(shifted)[0][0]) == "x1"


def test_reconstruct_h_round_trip_random():
    rng = random.Random(43)
    for _ in range(5):
        spec = random_affine_spec(rng)
        coeffs = check_affine(spec).coeffs
        gamma = reconstruct_h(coeffs)
        for _ in range(20):
            x = sample_point(rng, spec.base_dim)
            y = sample_point(rng, spec.e_dim)
            env = {f"x{i+1}": x[i] for i in range(spec.base_dim)}
            env.update({f"y{i+1}": y[i] for i in range(spec.e_dim)})
            for alpha in range(spec.e_dim):
                for a in range(spec.v_rank):
                    rebuilt = evaluate(gamma[alpha][a], env)
                    original = evaluate(spec.gamma[alpha][a], env)
                    assert abs(rebuilt - original) <= 1e-12 * (1 + abs(original))


def test_first_argument_scaling(f1, f1_coeffs):
    rng = random.Random(47)
    sigma = SectionE(("sin(x1)",))
    for _ in range(100):
        x = BasePoint((rng.uniform(-2, 2),))
        f = parse(f"{rng.uniform(-2, 2):.4f} + {rng.uniform(-2, 2):.4f}*x1")
        zeta = SectionV((parse(f"{rng.uniform(-2, 2):.4f}*x1 + 1"),))
        from anchorconn.exprlang import mul

        scaled = SectionV(tuple(mul(f, c) for c in zeta.components))
        lhs = cov_deriv(f1, f1_coeffs, scaled, sigma, x)
        base = cov_deriv(f1, f1_coeffs, zeta, sigma, x)
        f_at = evaluate(f, {"x1": x.x[0]})
        assert max(abs(a - f_at * b) for a, b in zip(lhs, base)) <= 1e-9


def test_second_argument_derivation_rule(f1, f1_coeffs):
    # concrete instance: sigma = x1, f = x1, eta = 1, zeta = 1 at x = 0
    zeta = SectionV(("1",))
    sigma = SectionE(("x1",))
    eta = SectionEbar((parse("1"),))
    f = parse("x1")
    x = BasePoint((0.0,))
    shifted = SectionE(("x1 + x1*1",))
    lhs = cov_deriv(f1, f1_coeffs, zeta, shifted, x)
    base = cov_deriv(f1, f1_coeffs, zeta, sigma, x)
    linear = cov_deriv_linear(f1, f1_coeffs.gamma1, zeta, eta, x)
    derivation = anchor_derivation(f1, zeta, f, x)
    f_at = evaluate(f, {"x1": x.x[0]})
    eta_at = [evaluate(c, {"x1": x.x[0]}) for c in eta.components]
    rhs = tuple(b + f_at * l + derivation * e for b, l, e in zip(base, linear, eta_at))
    assert lhs == (4.0,)
    assert rhs == (4.0,)

    # randomized form
    rng = random.Random(53)
    from anchorconn.exprlang import add, mul

    for _ in range(100):
        x = BasePoint((rng.uniform(-2, 2),))
        f = parse(f"{rng.uniform(-2, 2):.4f}*x1 + {rng.uniform(-2, 2):.4f}")
        eta = SectionEbar((parse(f"{rng.uniform(-2, 2):.4f}*x1"),))
        shifted = SectionE(
            tuple(add(s, mul(f, e)) for s, e in zip(sigma.components, eta.components))
        )
        lhs = cov_deriv(f1, f1_coeffs, zeta, shifted, x)
        base = cov_deriv(f1, f1_coeffs, zeta, sigma, x)
        linear = cov_deriv_linear(f1, f1_coeffs.gamma1, zeta, eta, x)
        derivation = anchor_derivation(f1, zeta, f, x)
        f_at = evaluate(f, {"x1": x.x[0]})
        eta_at = [evaluate(c, {"x1": x.x[0]}) for c in eta.components]
        rhs = [b + f_at * l + derivation * e for b, l, e in zip(base, linear, eta_at)]
        assert max(abs(a - b) for a, b in zip(lhs, rhs)) <= 1e-9


def test_sum_with_model_section(f1, f1_coeffs):
    # special case f = 1 of the derivation rule
    zeta = SectionV(("1",))
    sigma = SectionE(("x1",))
    eta = SectionEbar((parse("sin(x1)"),))
    rng = random.Random(59)
    for _ in range(50):
        x = BasePoint((rng.uniform(-2, 2),))
        shifted = SectionE(("x1 + sin(x1)",))
        lhs = cov_deriv(f1, f1_coeffs, zeta, shifted, x)
        rhs = tuple(
            a + b
            for a, b in zip(
                cov_deriv(f1, f1_coeffs, zeta, sigma, x),
                cov_deriv_linear(f1, f1_coeffs.gamma1, zeta, eta, x),
            )
        )
        assert max(abs(a - b) for a, b in zip(lhs, rhs)) <= 1e-9


def test_linear_and_bidual_derivative_axioms(f1, f1_coeffs):
    bc = extend_to_bidual(f1_coeffs)
    rng = random.Random(61)
    from anchorconn.exprlang import add, mul

    for _ in range(50):
        x = BasePoint((rng.uniform(-2, 2),))
        f = parse(f"{rng.uniform(-2, 2):.4f}*x1 + 1")
        f_at = evaluate(f, {"x1": x.x[0]})
        zeta = SectionV((parse(f"{rng.uniform(-2, 2):.4f} + x1"),))
        eta = SectionEbar((parse(f"{rng.uniform(-2, 2):.4f}*x1"),))
        eta_at = evaluate(eta.components[0], {"x1": x.x[0]})
        derivation = anchor_derivation(f1, zeta, f, x)

        # function-linearity in the first argument
        scaled_zeta = SectionV(tuple(mul(f, c) for c in zeta.components))
        lhs = cov_deriv_linear(f1, f1_coeffs.gamma1, scaled_zeta, eta, x)
        base = cov_deriv_linear(f1, f1_coeffs.gamma1, zeta, eta, x)
        assert max(abs(a - f_at * b) for a, b in zip(lhs, base)) <= 1e-9

        # Leibniz rule in the section argument
        scaled_eta = SectionEbar(tuple(mul(f, c) for c in eta.components))
        lhs = cov_deriv_linear(f1, f1_coeffs.gamma1, zeta, scaled_eta, x)
        rhs = tuple(f_at * b + derivation * eta_at for b in base)
        assert max(abs(a - b) for a, b in zip(lhs, rhs)) <= 1e-9

        # same axioms on the enlarged bundle
        tilde = (parse("1"), parse(f"{rng.uniform(-2, 2):.4f}*x1"))
        tilde_at = [evaluate(c, {"x1": x.x[0]}) for c in tilde]
        scaled_tilde = tuple(mul(f, c) for c in tilde)
        lhs = cov_deriv_bidual(f1, bc, zeta, scaled_tilde, x)
        base_tilde = cov_deriv_bidual(f1, bc, zeta, tilde, x)
        rhs = [f_at * b + derivation * s for b, s in zip(base_tilde, tilde_at)]
        assert max(abs(a - b) for a, b in zip(lhs, rhs)) <= 1e-9


def test_cov_deriv_depends_on_zeta_pointwise(f1, f1_coeffs):
    sigma = SectionE(("sin(x1)",))
    x = BasePoint((0.5,))
    # two sections agreeing at x give identical derivatives there
    zeta1 = SectionV(("2",))
    zeta2 = SectionV(("2 + 3*(x1 - 0.5)",))
    assert section_value(zeta1, x) == section_value(zeta2, x)
    assert cov_deriv(f1, f1_coeffs, zeta1, sigma, x) == cov_deriv(
        f1, f1_coeffs, zeta2, sigma, x
    )
