import numpy as np
import pytest
from hypothesis import given, strategies as st

from altphillips.errors import DomainError, NonMonotoneColumnError, SingularJacobianError
from altphillips.fields import ScalarField
from altphillips.hodograph import (
    EllipticityError,
    FluxFunction,
    HodographField,
    NewtonConfig,
    derivative_dictionary,
    forward_hodograph,
    inverse_dictionary,
    quasilinear_residual,
    regularity_probe,
    solve_quasilinear,
    weighted_energy,
    weighted_ode_average,
)
from altphillips.hodograph import _Mesh, _bottom_and_dirichlet, _bottom_layer

BOX = ((-0.5, 0.0), (0.5, 1.0))


def box_field(fn, n, box=BOX):
    return ScalarField.on_box(fn, box[0], box[1], (n, n))


def tilt(x, z):
    return z + 0.05 * x


# ---------------------------------------------------------------------------
# flux function


def test_flux_identities_at_unit_normal_are_exact():
    for d in (2, 3):
        e = np.zeros(d)
        e[-1] = 1.0
        assert np.array_equal(FluxFunction.grad(e), np.zeros(d))
        assert np.array_equal(FluxFunction.hess(e), 2.0 * np.eye(d))
        assert FluxFunction.value(e) == 2.0


def test_flux_derivatives_match_finite_differences():
    rng = np.random.default_rng(3)
    p = np.array([0.1, -0.05, 1.1])
    g = FluxFunction.grad(p)
    H = FluxFunction.hess(p)
    for _ in range(3):
        v = rng.normal(size=3)
        eps = 1e-5
        fd = (FluxFunction.value(p + eps * v) - FluxFunction.value(p - eps * v)) / (2 * eps)
        assert fd == pytest.approx(g @ v, rel=1e-8)
        fd2 = (FluxFunction.grad(p + eps * v) - FluxFunction.grad(p - eps * v)) / (2 * eps)
        np.testing.assert_allclose(fd2, H @ v, rtol=1e-7, atol=1e-9)


def test_ellipticity_constants_positive_on_quarter_ball():
    for d in (2, 3):
        lam, Lam = FluxFunction().ellipticity_bounds(d)
        assert 0 < lam <= 2.0 <= Lam
        # crude analytic enclosure: p_d in [3/4, 5/4]
        assert lam > 0.5 and Lam < 6.0  # sampled: about 1.02 and 4.74


# ---------------------------------------------------------------------------
# forward transform and derivative dictionary


def test_forward_hodograph_identity_and_linear():
    w = box_field(lambda x, z: z, 17, ((0, 0), (1, 1)))
    h = forward_hodograph(w)
    y = h.field.axes()[-1]
    np.testing.assert_allclose(h.values, np.broadcast_to(y, h.values.shape), atol=1e-15)
    w2 = w.with_values(2 * w.values)
    h2 = forward_hodograph(w2)
    y2 = h2.field.axes()[-1]
    np.testing.assert_allclose(h2.values, np.broadcast_to(y2 / 2, h2.values.shape), atol=1e-12)


def test_forward_hodograph_square_root_second_order():
    errs = []
    for n in (21, 41, 81):
        w = ScalarField.on_box(lambda x, z: z * z, (0, 0.1), (1, 1), (3, n))
        h = forward_hodograph(w)
        y = h.field.axes()[-1]
        errs.append(np.abs(h.values - np.sqrt(y)).max() / w.spacing[-1] ** 2)
    # monotone cubic interpolation: at least second order, irregular beyond
    assert max(errs) < 0.02


def test_forward_hodograph_round_trip_through_free_boundary():
    # w = max(x_d - 0.3 - 0.1 x_1, 0): the level 0 sits inside the box
    w = box_field(lambda x, z: np.maximum(z - 0.3 - 0.1 * x, 0.0), 33)
    h = forward_hodograph(w)
    assert h.is_monotone()
    y = h.field.axes()[-1]
    x = h.field.axes()[0]
    # w(x', h(x', y)) = y for the linear profile
    back = np.maximum(h.values - 0.3 - 0.1 * x[:, None], 0.0)
    np.testing.assert_allclose(back, np.broadcast_to(y, back.shape), atol=1e-12)


def test_forward_hodograph_reports_non_monotone_column():
    v = box_field(lambda x, z: z + 0 * x, 9).values.copy()
    v[4, 5] = v[4, 3]
    with pytest.raises(NonMonotoneColumnError) as err:
        forward_hodograph(box_field(lambda x, z: z, 9).with_values(v))
    assert err.value.column == 4


def test_dictionary_hand_values():
    g, H = derivative_dictionary(np.array([0.0, 1.0]), np.zeros((2, 2)))
    np.testing.assert_array_equal(g, [0.0, 1.0])
    np.testing.assert_array_equal(H, np.zeros((2, 2)))
    H0 = np.zeros((2, 2))
    H0[1, 1] = 4.0
    g, H = derivative_dictionary(np.array([0.0, 2.0]), H0)
    assert g[1] == 0.5 and H[1, 1] == -0.5


def test_dictionary_zero_vertical_derivative_raises():
    with pytest.raises(SingularJacobianError):
        derivative_dictionary(np.array([0.3, 0.0]))


def test_dictionary_matches_hodograph_of_explicit_function():
    # w = z + a x z + b z^2 inverted numerically around one point
    a, b = 0.2, 0.1
    x0, z0 = 0.3, 0.4
    wx = a * z0
    wz = 1 + a * x0 + 2 * b * z0
    Hw = np.array([[0.0, a], [a, 2 * b]])
    gh, Hh = inverse_dictionary(np.array([wx, wz]), Hw)

    def hfun(x, y):  # root of w(x, z) = y
        A, B, C = b, 1 + a * x, -y
        return (-B + np.sqrt(B * B - 4 * A * C)) / (2 * A)

    y0 = z0 + a * x0 * z0 + b * z0 * z0
    e = 1e-4
    hx = (hfun(x0 + e, y0) - hfun(x0 - e, y0)) / (2 * e)
    hy = (hfun(x0, y0 + e) - hfun(x0, y0 - e)) / (2 * e)
    hxx = (hfun(x0 + e, y0) - 2 * hfun(x0, y0) + hfun(x0 - e, y0)) / e**2
    hyy = (hfun(x0, y0 + e) - 2 * hfun(x0, y0) + hfun(x0, y0 - e)) / e**2
    hxy = (hfun(x0 + e, y0 + e) - hfun(x0 + e, y0 - e) - hfun(x0 - e, y0 + e) + hfun(x0 - e, y0 - e)) / (4 * e * e)
    np.testing.assert_allclose(gh, [hx, hy], rtol=1e-7)
    np.testing.assert_allclose(Hh, [[hxx, hxy], [hxy, hyy]], rtol=1e-5, atol=1e-6)


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_dictionary_round_trip(seed, d):
    rng = np.random.default_rng(seed)
    g = rng.uniform(-0.3, 0.3, d)
    g[-1] = rng.uniform(0.5, 2.0)
    H = rng.normal(size=(d, d))
    H = H + H.T
    g1, H1 = derivative_dictionary(g, H)
    g2, H2 = inverse_dictionary(g1, H1)
    np.testing.assert_allclose(g2, g, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(H2, H, rtol=1e-12, atol=1e-11)


# ---------------------------------------------------------------------------
# residual, energy and solver


def test_simplex_weights_exact():
    for s in (-0.5, 0.0, 0.7):
        f = box_field(lambda x, z: z, 9)
        mesh = _Mesh.of(f)
        assert mesh.weights(s).sum() == pytest.approx(1.0 / (1 + s), rel=1e-12)
        assert mesh.area.sum() == pytest.approx(1.0, rel=1e-12)


def test_residual_vanishes_on_flat_hodograph():
    for s in (-0.5, 0.5):
        res, trace = quasilinear_residual(HodographField(box_field(lambda x, z: z + 0 * x, 17), s))
        assert np.nanmax(np.abs(res)) < 1e-13
        assert np.all(trace == 0.0)


def test_residual_of_tilt_is_second_order_in_tilt():
    s = 0.5
    out = []
    for eps in (0.05, 0.025):
        res, _ = quasilinear_residual(HodographField(box_field(lambda x, z: z + eps * x, 33), s))
        out.append(np.nanmax(np.abs(res)))
    assert out[0] / out[1] == pytest.approx(4.0, rel=0.05)
    assert out[0] < 0.05**2 * 10


@pytest.mark.parametrize("s", [-0.5, 0.5])
def test_manufactured_residual_second_order(s):
    flux = FluxFunction()
    errs = []
    for n in (17, 33, 65):
        f = box_field(lambda x, z: z + 0.05 * np.sin(np.pi * x) * z * z, n)
        X, Z = f.coords()
        p = np.stack([0.05 * np.pi * np.cos(np.pi * X) * Z * Z, 1 + 0.1 * np.sin(np.pi * X) * Z])
        hxx = -0.05 * np.pi**2 * np.sin(np.pi * X) * Z * Z
        hxz = 0.1 * np.pi * np.cos(np.pi * X) * Z
        hzz = 0.1 * np.sin(np.pi * X)
        D2, DF = flux.hess(p), flux.grad(p)
        inner = (Z >= 0.25 - 1e-12) & (Z <= 0.75 + 1e-12) & (np.abs(X) <= 0.25 + 1e-12)
        Zi = np.where(inner, Z, 1.0)
        source = s * Zi ** (s - 1) * DF[1] + Zi**s * (D2[0, 0] * hxx + 2 * D2[0, 1] * hxz + D2[1, 1] * hzz)
        res, _ = quasilinear_residual(HodographField(f, s))
        errs.append(np.abs(res - source)[inner].max())
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.9)


@given(st.integers(0, 10_000))
def test_summation_by_parts_exact(seed):
    rng = np.random.default_rng(seed)
    s = float(rng.uniform(-0.8, 1.0))
    f = box_field(tilt, 9)
    v = f.values + 0.01 * rng.uniform(-1, 1, f.shape) / 8
    h = HodographField(f.with_values(v), s)
    res, _ = quasilinear_residual(h)
    mesh = _Mesh.of(f)
    fixed = _bottom_and_dirichlet(f.shape) & ~_bottom_layer(f.shape)
    psi = np.where(fixed, 0.0, rng.normal(size=f.shape)).ravel()
    lhs = np.nansum(res.ravel() * mesh.area * psi)
    g = mesh.gradients(v.ravel())
    gpsi = mesh.gradients(psi)
    rhs = -np.sum(mesh.weights(s) * np.sum(FluxFunction.grad(g) * gpsi, axis=0))
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(rhs)))


def test_residual_rejects_inadmissible_gradients():
    f = box_field(lambda x, z: 2 * z, 9)
    with pytest.raises(EllipticityError):
        quasilinear_residual(HodographField(f, 0.0))


def test_solver_flat_data_is_fixed_point():
    f = box_field(lambda x, z: z + 0 * x, 17)
    r = solve_quasilinear(f, -0.5)
    assert r.converged
    assert np.abs(r.solution.values - f.values).max() < 1e-12


@pytest.mark.parametrize("s", [-0.5, 0.0, 0.5])
def test_solver_recovers_compatible_affine_solution(s):
    # grad h = (eps, sqrt(1 + eps^2)) has DF_d = 0, so the Neumann condition holds exactly
    eps = 0.05
    q = np.sqrt(1 + eps * eps)
    f = box_field(lambda x, z: q * z + eps * x, 33)
    X, Z = f.coords()
    guess = f.values + 0.01 * np.sin(np.pi * (X + 0.5)) * (1 - Z)
    r = solve_quasilinear(f.with_values(guess), s)
    assert r.converged
    assert np.abs(r.solution.values - f.values).max() < 1e-12


@pytest.mark.parametrize("s", [-0.5, 0.5])
def test_solver_tilt_data_converges_fast(s):
    r = solve_quasilinear(box_field(tilt, 33), s, NewtonConfig(max_iters=20, tolerance=1e-10))
    assert r.converged and r.iterations <= 20
    res, _ = quasilinear_residual(r.solution)
    assert np.nanmax(np.abs(res)) <= 1e-10
    assert all(b <= a + 1e-15 for a, b in zip(r.energy_history, r.energy_history[1:]))


def test_solver_three_dimensional():
    f = ScalarField.on_box(lambda x, y, z: z + 0.05 * x - 0.03 * y, (-0.5, -0.5, 0), (0.5, 0.5, 1), (9, 9, 9))
    r = solve_quasilinear(f, -0.3)
    assert r.converged and r.iterations <= 20


def test_solver_beats_perturbed_competitors():
    s = -0.5
    r = solve_quasilinear(box_field(tilt, 17), s)
    field = r.solution.field
    E0 = weighted_energy(r.solution)
    fixed = _bottom_and_dirichlet(field.shape) & ~_bottom_layer(field.shape)
    rng = np.random.default_rng(0)
    X, Z = field.coords()
    for k in range(5):
        bump = np.sin(np.pi * (k + 1) * (X + 0.5)) * np.cos(0.5 * np.pi * Z) * rng.uniform(0.5, 1.5)
        comp = np.where(fixed, field.values, field.values + 1e-3 * bump)
        assert weighted_energy(field.with_values(comp), s) - E0 >= -1e-12


@pytest.mark.parametrize("s", [-0.5, 0.5])
def test_solver_second_order_away_from_bottom_corners(s):
    sols = []
    ns = (17, 33, 65)
    for n in ns:
        sols.append(solve_quasilinear(box_field(tilt, n), s).solution.values)
    diffs = []
    for k in range(2):
        n = ns[k]
        D = np.abs(sols[k + 1][::2, ::2] - sols[k])
        diffs.append(D[n // 4: 3 * n // 4 + 1, : n // 2 + 1].max())
    assert diffs[0] / diffs[1] > 2 ** 1.6


def test_newton_config_validation():
    with pytest.raises(DomainError):
        NewtonConfig(max_iters=0)
    with pytest.raises(DomainError):
        solve_quasilinear(box_field(tilt, 9), -1.0)


# ---------------------------------------------------------------------------
# weighted ODE primitive


@pytest.mark.parametrize("s", [-0.7, 0.0, 1.5])
def test_ode_average_closed_forms(s):
    f1 = ScalarField.on_box(lambda x, z: 1 + 0 * z, (0, 0), (1, 1), (3, 11))
    f2 = f1.with_values(f1.coords()[1])
    z = f1.axes()[-1]
    np.testing.assert_allclose(weighted_ode_average(f1, s).values, np.broadcast_to(z / (1 + s), (3, 11)), atol=1e-14)
    np.testing.assert_allclose(weighted_ode_average(f2, s).values, np.broadcast_to(z**2 / (2 + s), (3, 11)), atol=1e-14)
    f3 = f1.with_values(2 + f1.coords()[1])
    phi = weighted_ode_average(f3, s)
    assert phi.values[1, 0] == 0.0
    # bottom slope f(x', 0) / (1 + s), up to the quadratic term of phi
    assert phi.values[1, 1] / z[1] == pytest.approx(2 / (1 + s), abs=z[1])


def test_ode_average_bottom_derivative_bounded():
    s = -0.5
    slopes = []
    for n in (17, 65, 257):
        f = ScalarField.on_box(lambda x, z: np.abs(z - 0.3) + np.cos(x), (0, 0), (1, 1), (3, n))
        phi = weighted_ode_average(f, s).values
        slopes.append(np.abs((phi[:, 1] - phi[:, 0]) / f.spacing[-1]).max())
    assert max(slopes) < 2.0 * slopes[0]


def test_ode_average_domain_checks():
    f = ScalarField.on_box(lambda x, z: z, (0, 0.1), (1, 1), (3, 5))
    with pytest.raises(DomainError):
        weighted_ode_average(f, 0.0)
    with pytest.raises(DomainError):
        weighted_ode_average(f.with_values(f.values), -1.0)


# ---------------------------------------------------------------------------
# regularity probe


def test_probe_flat_field_is_zero():
    t = regularity_probe(box_field(lambda x, z: z + 0 * x, 65))
    assert np.all(t.c1_alpha == 0) and np.all(t.second_difference == 0)
    assert not t.flagged
    assert len(t.rows()) == len(t.scales)


def test_probe_solver_output_bounded_and_non_increasing():
    r = solve_quasilinear(box_field(tilt, 65), -0.5)
    t = regularity_probe(r.solution.field, alpha=0.5)
    assert not t.flagged
    assert np.all(np.diff(t.c1_alpha) <= 1e-12)


def test_probe_flags_rough_field():
    f = box_field(lambda x, z: (x * x + z * z) ** 0.625, 129)
    t = regularity_probe(f, alpha=0.5)
    assert t.flagged
    assert np.all(np.diff(t.c1_alpha) > 0)


def test_probe_alpha_validation():
    with pytest.raises(DomainError):
        regularity_probe(box_field(tilt, 17), alpha=0.0)
