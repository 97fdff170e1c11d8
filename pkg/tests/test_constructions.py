import numpy as np
import pytest

from sdrelax.constructions import (
    SD2Triple,
    approximating_sequence,
    elementary_jump,
    gradient_primitive,
    gradient_primitive_mass_bound,
    piecewise_constant_approx,
    staircase,
    staircase_mass_bound,
)
from sdrelax.fields import (
    BoxDomain,
    PiecewiseAffineField,
    PiecewiseConstantField,
    gauss_green_residual,
    jump_set,
    l1_distance,
    l1_norm,
    total_jump_mass,
    trace_boundary,
    weak_star_pairing,
)

UNIT_1D = BoxDomain([0.0], [1.0], [1])
UNIT_2D = BoxDomain([0, 0], [1, 1], [1, 1])


def linear_field(domain, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    centers = domain.cell_centers().reshape(-1, domain.ndim)
    const = (centers @ A.T).reshape(domain.cells_shape + (A.shape[0],))
    lin = np.broadcast_to(A, domain.cells_shape + A.shape).copy()
    return PiecewiseAffineField(domain, const, lin)


class TestStaircase:
    def test_zero_matrix(self):
        u = staircase(np.zeros((1, 1)), 4, UNIT_1D)
        assert total_jump_mass(u) == 0.0
        assert np.all(u.lin == 0.0)

    def test_1d_mass_equals_gradient_times_volume(self):
        u = staircase(np.array([[1.0]]), 4, UNIT_1D)
        assert np.all(u.lin == 1.0)
        assert total_jump_mass(u) == pytest.approx(1.0, abs=1e-15)
        interior = [f for f in jump_set(u) if not f.boundary]
        assert len(interior) == 3
        for f in interior:
            assert abs(f.jump[0]) == pytest.approx(0.25, abs=1e-15)

    def test_single_column_only_one_sawtooth_active(self):
        u = staircase(np.array([[1.0, 0.0]]), 6, UNIT_2D)
        assert total_jump_mass(u) == pytest.approx(1.0, abs=1e-12)
        # all jump mass sits on planes orthogonal to the active axis; the
        # lateral boundary facets carry only affine variation, no mass
        for f in jump_set(u):
            if f.axis != 0:
                assert f.magnitude == 0.0

    def test_effective_boundary_trace_zero(self):
        u = staircase(np.array([[1.0, 2.0], [0.0, 1.0]]), 4, UNIT_2D)
        for rec in trace_boundary(u):
            assert np.max(np.abs(rec["effective"])) <= 1e-12

    def test_mass_identity_and_bound_random(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            d, N = rng.integers(1, 4), rng.integers(1, 4)
            A = rng.uniform(-5, 5, size=(d, N))
            dom = BoxDomain(np.zeros(N), np.ones(N), np.ones(N, dtype=int))
            u = staircase(A, 4, dom)
            mass = total_jump_mass(u)
            expected = sum(np.linalg.norm(A[:, j]) for j in range(N))
            assert mass == pytest.approx(expected, abs=1e-10)
            assert mass <= staircase_mass_bound(A, dom) + 1e-12

    def test_equality_case_is_one_dimensional(self):
        A = np.array([[2.0]])
        u = staircase(A, 8, UNIT_1D)
        assert total_jump_mass(u) == pytest.approx(staircase_mass_bound(A, UNIT_1D), abs=1e-12)


class TestPiecewiseConstantApprox:
    def test_constant_field_fixed_point(self):
        u = PiecewiseConstantField(BoxDomain([0.0], [1.0], [2]), np.full((2, 1), 3.0))
        ap = piecewise_constant_approx(u, 8)
        assert np.all(ap.const == 3.0)
        assert ap.total_variation() == 0.0

    def test_linear_ramp_tv(self):
        u = linear_field(BoxDomain([0.0], [1.0], [1]), [[1.0]])
        ap = piecewise_constant_approx(u, 10)
        assert ap.total_variation() == pytest.approx(0.9, abs=1e-12)

    def test_tv_monotone_from_below(self):
        u = linear_field(BoxDomain([0.0], [1.0], [1]), [[1.0]])
        tvs = [piecewise_constant_approx(u, n).total_variation() for n in (2, 4, 8, 16, 32)]
        assert all(a <= b + 1e-15 for a, b in zip(tvs, tvs[1:]))
        assert all(tv <= 1.0 for tv in tvs)
        assert tvs == [pytest.approx((n - 1) / n, abs=1e-12) for n in (2, 4, 8, 16, 32)]


class TestGradientPrimitive:
    def test_zero_input(self):
        f = PiecewiseConstantField(BoxDomain([0.0], [1.0], [2]), np.zeros((2, 1, 1)))
        u = gradient_primitive(f)
        assert np.all(u.const == 0.0) and np.all(u.lin == 0.0)

    def test_unit_slope_two_cells(self):
        f = PiecewiseConstantField(BoxDomain([0.0], [1.0], [2]), np.ones((2, 1, 1)))
        u = gradient_primitive(f)
        facets = jump_set(u)
        assert len(facets) == 1
        assert facets[0].jump[0] == pytest.approx(-0.5, abs=1e-15)
        assert total_jump_mass(u) == pytest.approx(0.5, abs=1e-15)
        assert total_jump_mass(u) <= gradient_primitive_mass_bound(f)

    def test_step_input_localized_jumps(self):
        dom = BoxDomain([0, 0], [1, 1], [4, 4])
        values = np.zeros((4, 4, 1, 2))
        values[2:, :, 0, 0] = 3.0  # right half carries the gradient
        f = PiecewiseConstantField(dom, values)
        u = gradient_primitive(f)
        mass = total_jump_mass(u)
        assert mass <= 4 * 2 * l1_norm(f) + 1e-12
        for facet in jump_set(u):
            assert facet.index[0] >= 1  # no jumps in the untouched left strip

    def test_mass_and_l1_bounds_random(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            d, N = int(rng.integers(1, 3)), int(rng.integers(1, 3))
            res = rng.integers(2, 4, size=N)
            dom = BoxDomain(np.zeros(N), np.ones(N), res)
            values = rng.uniform(-3, 3, size=tuple(res) + (d, N))
            f = PiecewiseConstantField(dom, values)
            u = gradient_primitive(f)
            assert total_jump_mass(u) <= gradient_primitive_mass_bound(f) + 1e-12
            assert l1_norm(u) <= dom.diameter * l1_norm(f) + 1e-12

    def test_gauss_green_closure_against_own_traces(self):
        # without prescribed data the flux of the interior traces closes the identity
        f = PiecewiseConstantField(BoxDomain([0.0], [1.0], [2]), np.ones((2, 1, 1)))
        u = gradient_primitive(f)
        assert np.max(np.abs(gauss_green_residual(u))) <= 1e-12


class TestElementaryJump:
    def test_zero_payload(self):
        u = elementary_jump(np.zeros(2), ndim=2, resolution=4)
        assert jump_set(u) == []

    def test_vector_payload(self):
        u = elementary_jump(np.array([1.0, 0.0]), ndim=2, resolution=4)
        facets = jump_set(u)
        assert all(f.axis == 1 and not f.boundary for f in facets)
        assert sum(f.area for f in facets) == pytest.approx(1.0, abs=1e-15)
        for f in facets:
            assert f.jump == pytest.approx([1.0, 0.0])
        assert total_jump_mass(u) == pytest.approx(1.0, abs=1e-15)

    def test_matrix_payload(self):
        u = elementary_jump(np.eye(2), ndim=2, resolution=4)
        assert total_jump_mass(u) == pytest.approx(np.sqrt(2.0), abs=1e-15)

    def test_odd_resolution_rejected(self):
        with pytest.raises(ValueError):
            elementary_jump(np.ones(2), ndim=2, resolution=3)


def slip_case():
    dom = BoxDomain([0.0], [1.0], [4])
    g = linear_field(dom, [[1.0]])
    G = PiecewiseAffineField(dom, np.zeros((4, 1, 1)))
    return SD2Triple(g, G, np.zeros((4, 1, 1, 1)))


def affine_case():
    dom = BoxDomain([0.0], [1.0], [4])
    g = linear_field(dom, [[2.0]])
    G = PiecewiseAffineField(dom, np.full((4, 1, 1), 2.0))
    return SD2Triple(g, G, np.zeros((4, 1, 1, 1)))


def quadratic_case():
    # g = y^2/2 sampled cellwise, G = y, Gamma = 1
    dom = BoxDomain([0.0], [1.0], [4])
    centers = dom.cell_centers().reshape(4, 1)
    g = PiecewiseAffineField(dom, 0.5 * centers**2, centers.reshape(4, 1, 1))
    G = PiecewiseAffineField(dom, centers.reshape(4, 1, 1), np.ones((4, 1, 1, 1)))
    return SD2Triple(g, G, np.ones((4, 1, 1, 1)))


CORPUS = {"affine": affine_case, "slip": slip_case, "quadratic": quadratic_case}


class TestApproximatingSequence:
    def test_affine_case_is_exact(self):
        sd2 = affine_case()
        for n in (4, 8):
            pair, diag = approximating_sequence(sd2, n)
            assert diag["l1_u"] == pytest.approx(0.0, abs=1e-14)
            assert diag["l1_grad"] == pytest.approx(0.0, abs=1e-14)

    def test_slip_case_rates(self):
        sd2 = slip_case()
        for n in (4, 8, 16):
            pair, diag = approximating_sequence(sd2, n)
            assert diag["l1_u"] == pytest.approx(1.0 / (4 * n * n), abs=1e-14)
            assert diag["l1_grad"] == 0.0
            assert np.all(pair.grad.const == 0.0)

    def test_second_gradient_exact_everywhere(self):
        for make in CORPUS.values():
            sd2 = make()
            pair, diag = approximating_sequence(sd2, 4)
            assert diag["second_gradient_exact"]
            gamma_fine = np.repeat(sd2.Gamma, pair.domain.num_cells // sd2.domain.num_cells, axis=0)
            assert np.array_equal(pair.second_gradient(), gamma_fine)

    def test_error_decay_ratios(self):
        for name, make in CORPUS.items():
            sd2 = make()
            errors = []
            for n in (4, 8, 16, 32):
                _, diag = approximating_sequence(sd2, n)
                errors.append(diag["l1_u"] + diag["l1_grad"])
            for a, b in zip(errors, errors[1:]):
                assert b <= max(0.6 * a, 1e-14), f"{name}: {errors}"

    def test_weak_star_pairings_vanish(self):
        sd2 = quadratic_case()
        pair, _ = approximating_sequence(sd2, 4)
        gamma_fine = np.repeat(sd2.Gamma, pair.domain.num_cells // sd2.domain.num_cells, axis=0)
        diff = pair.second_gradient() - gamma_fine
        for alpha in [(0,), (1,), (2,)]:
            val = weak_star_pairing(diff, alpha, domain=pair.domain)
            assert np.all(val == 0.0)

    def test_incompatible_domains_rejected(self):
        dom_a = BoxDomain([0.0], [1.0], [4])
        dom_b = BoxDomain([0.0], [2.0], [4])
        g = linear_field(dom_a, [[1.0]])
        G = PiecewiseAffineField(dom_b, np.zeros((4, 1, 1)))
        with pytest.raises(ValueError):
            SD2Triple(g, G, np.zeros((4, 1, 1, 1)))
