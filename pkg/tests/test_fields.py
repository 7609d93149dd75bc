import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from altphillips.errors import DomainError, ShapeError, SizeError
from altphillips.fields import (
    ScalarField,
    WeightedHalfGrid,
    cell_gradient,
    cell_mean,
    derivative,
    extract_free_boundary,
    field_from_text,
    field_to_text,
    gradient,
    hausdorff,
    hessian,
    integrate_w_weighted,
    integrate_weighted,
    power_mean,
    power_mean_derivatives,
    weight_masses,
)


def box(fn, lower, upper, shape):
    return ScalarField.on_box(fn, lower, upper, shape)


def test_field_invariants():
    f = box(lambda x, y: x - 0.5, [0, 0], [1, 1], [5, 4])
    assert f.flat_values.size == 20
    assert np.array_equal(f.positivity_mask, f.values > 0)
    assert f.extent == pytest.approx((1.0, 1.0))
    with pytest.raises(DomainError):
        ScalarField([0.0], [0.0], np.zeros(4))
    with pytest.raises(ShapeError):
        ScalarField([0.0, 0.0], [1.0], np.zeros((3, 3)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_affine_and_quadratic_exactness_everywhere():
    f = box(lambda x, y, z: 3 * x - 2 * y + 0.5 * z + 1, [0, 0, 0], [1, 2, 1], [5, 6, 7])
    g = gradient(f)
    assert np.max(np.abs(g[0] - 3)) < 1e-12
    assert np.max(np.abs(g[1] + 2)) < 1e-12
    assert np.max(np.abs(g[2] - 0.5)) < 1e-12
    assert np.max(np.abs(hessian(f))) < 1e-11
    q = box(lambda x, y: x**2 + x * y - 3 * y**2, [0, 0], [1, 1], [9, 11])
    H = hessian(q)
    assert np.max(np.abs(H[0, 0] - 2)) < 1e-10
    assert np.max(np.abs(H[0, 1] - 1)) < 1e-10
    assert np.max(np.abs(H[1, 1] + 6)) < 1e-10
    assert np.array_equal(H[0, 1], H[1, 0])


def test_hessian_xd_squared():
    f = box(lambda x, y: y**2, [0, 0], [1, 1], [11, 11])
    assert np.max(np.abs(hessian(f)[1, 1] - 2)) < 1e-10


def test_gradient_order_on_sine():
    errs = []
    for n in (21, 41, 81, 161):
        f = box(lambda x: np.sin(x), [0], [2], [n])
        errs.append(np.max(np.abs(gradient(f)[0] - np.cos(f.axes()[0]))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_size_error():
    with pytest.raises(SizeError):
        gradient(ScalarField([0.0], [0.1], np.zeros(2)))


def test_masked_derivative_does_not_cross_interface():
    # w = (x - 0.3)+ sampled with the kink between nodes
    f = box(lambda x: np.maximum(x - 0.305, 0), [0], [1], [101])
    d = derivative(f.values, 0, f.spacing[0], mask=f.positivity_mask)
    assert np.max(np.abs(d[f.positivity_mask] - 1)) < 1e-12
    assert np.all(d[~f.positivity_mask] == 0)


@pytest.mark.parametrize("s", [-0.9, -0.5, 0.0, 1.0])
def test_column_mass_identity(s):
    g = WeightedHalfGrid((0.0, 0.0), (0.1, 0.05), (4, 31), s)
    H = g.heights[-1]
    assert g.column_weights().sum() == pytest.approx(H ** (1 + s) / (1 + s), abs=1e-12)


def test_weighted_examples():
    g = WeightedHalfGrid((0.0, 0.0), (0.25, 0.125), (5, 9), -0.5)
    assert integrate_weighted(g, np.ones(g.shape)) == pytest.approx(2.0, abs=1e-12)
    f = box(lambda x, y: y, [0, 0], [1, 1], [5, 9])
    assert integrate_weighted(g, f) == pytest.approx(2 / 3, abs=1e-12)
    g1 = WeightedHalfGrid((0.0,), (0.1,), (11,), -0.5)
    assert integrate_weighted(g1, np.linspace(0, 1, 11)) == pytest.approx(2 / 3, abs=1e-12)


def test_weight_zero_reduces_to_trapezoid():
    f = box(lambda x, y: np.exp(x) * np.cos(y), [0, 0.2], [1, 1.3], [7, 12])
    g = WeightedHalfGrid.like(f, 0.0)
    ref = np.trapezoid(np.trapezoid(f.values, dx=f.spacing[1], axis=1), dx=f.spacing[0])
    assert integrate_weighted(g, f) == pytest.approx(ref, abs=1e-12)


def test_weighted_geometry_mismatch():
    g = WeightedHalfGrid((0.0,), (0.1,), (11,), -0.5)
    with pytest.raises(ShapeError):
        integrate_weighted(g, np.ones(10))
    with pytest.raises(DomainError):
        WeightedHalfGrid((0.0,), (0.1,), (11,), -1.0)


@settings(max_examples=60)
@given(
    st.floats(min_value=1e-3, max_value=10.0),
    st.floats(min_value=1e-3, max_value=10.0),
    st.floats(min_value=-0.95, max_value=2.0),
)
def test_power_mean_matches_quadrature(a, b, s):
    from scipy.integrate import quad

    lo, hi = min(a, b), max(a, b)
    if hi - lo < 1e-9:
        ref = lo**s
    else:
        ref = quad(lambda t: t**s, lo, hi, epsabs=0, epsrel=1e-13)[0] / (hi - lo)
    assert power_mean(a, b, s) == pytest.approx(ref, rel=1e-10)


def test_power_mean_derivatives_by_finite_differences():
    s = -0.6
    for a, b in [(1.0, 1.3), (0.4, 2.0), (3.0, 0.7), (1.0, 1.0 + 1e-9)]:
        I, Ia, Ib, Iaa, Iab, Ibb = power_mean_derivatives(np.array([a]), np.array([b]), s)
        e = 1e-6
        fd_a = (power_mean(a + e, b, s) - power_mean(a - e, b, s)) / (2 * e)
        fd_b = (power_mean(a, b + e, s) - power_mean(a, b - e, s)) / (2 * e)
        fd_ab = (power_mean_derivatives(a, b + e, s)[1] - power_mean_derivatives(a, b - e, s)[1]) / (2 * e)
        fd_aa = (power_mean_derivatives(a + e, b, s)[1] - power_mean_derivatives(a - e, b, s)[1]) / (2 * e)
        fd_bb = (power_mean_derivatives(a, b + e, s)[2] - power_mean_derivatives(a, b - e, s)[2]) / (2 * e)
        assert Ia[0] == pytest.approx(fd_a, rel=1e-6)
        assert Ib[0] == pytest.approx(fd_b, rel=1e-6)
        assert Iab[0] == pytest.approx(fd_ab, rel=1e-5)
        assert Iaa[0] == pytest.approx(fd_aa, rel=1e-5)
        assert Ibb[0] == pytest.approx(fd_bb, rel=1e-5)


def test_power_mean_with_zero_endpoint():
    assert power_mean(0.0, 2.0, -0.5) == pytest.approx(2.0**-0.5 / 0.5)
    assert power_mean(0.0, 0.0, -0.5) == 0.0


@pytest.mark.parametrize("s", [-0.9, -0.5, 0.5])
def test_weight_masses_cut_cells(s):
    # interface at 0.3052, between nodes; exact mass of (y - c)+**s over the box
    c = 0.3052
    f = box(lambda x, y: np.maximum(y - c, 0), [0, 0], [1, 1], [11, 101])
    exact = (1 - c) ** (1 + s) / (1 + s)
    assert weight_masses(f, s).sum() == pytest.approx(exact, rel=1e-12)
    nodal = weight_masses(f, s, cut="nodal").sum()
    assert abs(nodal - exact) > 1e-4 * exact  # the nodal rule misses the crossing


def test_integrate_w_weighted_constant():
    f = box(lambda x, y: y, [0, 0], [1, 1], [6, 21])
    assert integrate_w_weighted(f, -0.5, np.full((5, 20), 2.0)) == pytest.approx(4.0, abs=1e-12)


def test_cell_helpers():
    f = box(lambda x, y: 2 * x + 3 * y, [0, 0], [1, 1], [5, 5])
    g = cell_gradient(f.values, f.spacing)
    assert np.allclose(g[0], 2) and np.allclose(g[1], 3)
    m = cell_mean(f.values)
    assert m.shape == (4, 4) and m[0, 0] == pytest.approx(0.25 * (0 + 0.5 + 0.75 + 1.25))


def test_interface_planar():
    f = box(lambda x, y: np.maximum(y - 0.3, 0), [0, 0], [1, 1], [101, 101])
    geo = extract_free_boundary(f)
    assert geo.has_interface
    pts = geo.all_points()
    assert np.max(np.abs(pts[:, 1] - 0.3)) <= 0.01**2
    nu = np.vstack(geo.normals)
    assert np.allclose(np.linalg.norm(nu, axis=1), 1.0, atol=1e-12)
    assert np.allclose(nu, [0, -1])


def test_interface_circle_curvature():
    f = box(lambda x, y: np.maximum(0.5 - np.hypot(x, y), 0), [-1, -1], [1, 1], [201, 201])
    geo = extract_free_boundary(f)
    k = np.concatenate(geo.curvature)
    assert np.nanmax(np.abs(k - 2.0)) <= 0.05 * 2.0
    r = np.linalg.norm(geo.all_points(), axis=1)
    assert np.max(np.abs(r - 0.5)) < 1e-3


def test_no_interface():
    f = box(lambda x, y: np.ones_like(x), [0, 0], [1, 1], [5, 5])
    assert not extract_free_boundary(f).has_interface
    f = box(lambda x: 0 * x, [0], [1], [5])
    assert not extract_free_boundary(f).has_interface


def test_interface_1d():
    f = box(lambda x: np.maximum(x - 0.3052, 0), [0], [1], [101])
    geo = extract_free_boundary(f)
    assert geo.points == [pytest.approx(0.3052, abs=1e-12)]
    f = box(lambda x: np.maximum(0.61 - x, 0), [0], [1], [101])
    assert extract_free_boundary(f).points == [pytest.approx(0.61, abs=1e-12)]


def test_extraction_resolution_consistency():
    def fn(x, y):
        return np.maximum(y - 0.4 - 0.1 * np.sin(3 * x), 0)

    dists = []
    for n in (41, 81, 161):
        a = extract_free_boundary(box(fn, [0, 0], [1, 1], [n, n])).all_points()
        b = extract_free_boundary(box(fn, [0, 0], [1, 1], [2 * n - 1, 2 * n - 1])).all_points()
        dists.append(hausdorff(a, b))
    h = 1 / 40
    assert dists[0] <= h
    assert dists[-1] <= dists[0]


def test_serialization_round_trip_and_determinism():
    f = box(lambda x, y: np.sin(x) * y, [0, 0], [1, 2], [4, 5])
    t1 = field_to_text(f, s=-0.5)
    t2 = field_to_text(ScalarField(f.origin, f.spacing, f.values.copy()), s=-0.5)
    assert t1 == t2
    header = json.loads(t1.splitlines()[0])
    assert header["dims"] == [4, 5] and header["s"] == -0.5
    g, s = field_from_text(t1)
    assert s == -0.5 and np.array_equal(g.values, f.values)


# --- node-weight rule ------------------------------------------------------


@pytest.mark.parametrize("s", [-0.9, -0.5, 0.0, 1.0])
def test_node_weights_match_half_grid_on_linear_integrands(s):
    from altphillips.fields import weight_nodes

    f = box(lambda x, y: y, [0, 0], [1, 1], [5, 9])
    X, Y = f.coords()
    G = 2 + Y + X
    ref = np.sum(WeightedHalfGrid.like(f, s).weights() * G)
    assert np.sum(weight_nodes(f, s) * G) == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("s", [-0.9, -0.5, 0.5])
def test_node_weights_exact_on_cut_columns(s):
    from altphillips.fields import integrate_nodes

    c = 0.3052  # crossing strictly inside a cell
    f = box(lambda x, y: np.maximum(y - c, 0), [0, 0], [1, 1], [11, 101])
    X, Y = f.coords()
    exact = (1 - c) ** (2 + s) / (2 + s) + (1 + c) * (1 - c) ** (1 + s) / (1 + s)
    assert integrate_nodes(f, s, 1 + Y) == pytest.approx(exact, rel=1e-12)
    assert abs(integrate_nodes(f, s, 1 + Y, cut="nodal") - exact) > 1e-4


def test_power_moment_against_quad():
    from scipy.integrate import quad

    from altphillips.fields import power_moment

    for a, b, s in [(0.0, 1.0, -0.5), (0.2, 0.9, -0.9), (0.5, 0.5000001, 0.3), (1.0, 0.1, 1.0)]:
        ref = quad(lambda t: (a + (b - a) * t) ** s * t, 0, 1)[0]
        assert float(power_moment(a, b, s)) == pytest.approx(ref, rel=1e-9)


def test_node_weights_reject_bad_exponent():
    from altphillips.fields import weight_nodes

    with pytest.raises(DomainError):
        weight_nodes(box(lambda x: x, [0], [1], [5]), -1.0)
