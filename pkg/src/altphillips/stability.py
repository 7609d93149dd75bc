"""Second variation of the weighted energy and the arguments built on it.

Conventions
-----------
* Fields are `ScalarField`s with x_d the last axis; weighted integrals of
  w**s use `fields.weight_nodes` (exact along x_d for integrands linear on a
  segment).
* Test functions may be given as arrays on the grid, `ScalarField`s on the same
  grid, or callables of the coordinate arrays.
* The second variation is normalized as the coefficient of t**2 in E(t),
  so second_variation_fd = (E(dt) - 2 E(0) + E(-dt)) / (2 dt**2) is the
  quantity compared with quadratic_form_Q.
* Axisymmetric fields live on a meridian grid: axis 0 is tau (distance to the
  axis, only tau > 0 nodes are used), axis 1 is x_d.  Integrals over R^d are
  reported per unit area of S^(d-2), i.e. with measure tau**(d-2) dtau dx_d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special
from scipy.ndimage import map_coordinates

from .errors import DomainError, ShapeError, StepTooLargeError
from .exponents import ExponentPack, dimension_window
from .fields import ScalarField, _polyline_curvature, derivative, gradient, hessian, weight_nodes

GRADIENT_FLOOR = 10.0  # |grad w| floor for curvature, in units of the largest spacing
DEFAULT_DT = 1e-3


def _sample(f, w: ScalarField) -> np.ndarray:
    """Test function values on the grid of w."""
    if isinstance(f, ScalarField):
        w.require_same_geometry(f)
        vals = f.values
    elif callable(f):
        vals = np.asarray(f(*w.coords()), float)
    else:
        vals = np.asarray(f, float)
    vals = np.broadcast_to(vals, w.shape) if vals.ndim == 0 else vals
    if vals.shape != w.shape:
        raise ShapeError(f"test function {vals.shape} does not match grid {w.shape}")
    return np.asarray(vals, float)


def _positive_mask(w: ScalarField):
    pos = w.values > 0
    return None if np.all(pos) else pos


# ---------------------------------------------------------------------------
# curvature quantity


@dataclass(frozen=True)
class CurvatureField:
    """A**2 = |D2w|**2/|Dw|**2 - |D2w Dw|**2/|Dw|**4 per node.

    `valid` marks nodes with w > 0 and |grad w| above `floor`; invalid nodes
    hold NaN.  `masked_measure` is the grid volume of positive nodes that were
    masked for a small gradient.
    """

    values: np.ndarray
    valid: np.ndarray
    floor: float
    masked_measure: float

    def nan_to_zero(self) -> np.ndarray:
        return np.where(self.valid, self.values, 0.0)


def curvature_A2(w: ScalarField, floor: float | None = None) -> CurvatureField:
    """Hessian formula for A**2 with second-order differences inside {w > 0}."""
    mask = _positive_mask(w)
    if floor is None:
        floor = GRADIENT_FLOOR * max(w.spacing)
    g = gradient(w, mask=mask)
    H = hessian(w, mask=mask)
    g2 = np.sum(g * g, axis=0)
    Hg = np.einsum("ij...,j...->i...", H, g)
    H2 = np.sum(H * H, axis=(0, 1))
    pos = w.values > 0
    valid = pos & (np.sqrt(g2) > floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        a2 = H2 / g2 - np.sum(Hg * Hg, axis=0) / g2**2
    # Cauchy-Schwarz makes a2 >= 0 up to round-off
    a2 = np.where(valid, np.maximum(a2, 0.0), np.nan)
    masked = float(np.count_nonzero(pos & ~valid) * w.cell_volume)
    return CurvatureField(a2, valid, float(floor), masked)


def curvature_A2_axisymmetric(w: ScalarField, d: int, floor: float | None = None) -> CurvatureField:
    """A**2 of an axially symmetric field in R^d from its meridian samples (tau, x_d).

    The Hessian splits into the meridian block [[w_tautau, w_tauz], [w_tauz, w_zz]]
    and the azimuthal entry w_tau / tau with multiplicity d - 2 (w_tautau on the
    axis).  The gradient lies in the meridian plane, so the azimuthal block only
    enters |D2w|**2.
    """
    if w.dim != 2:
        raise DomainError("axisymmetric fields are sampled on a (tau, x_d) grid")
    mask = _positive_mask(w)
    if floor is None:
        floor = GRADIENT_FLOOR * max(w.spacing)
    g = gradient(w, mask=mask)
    H = hessian(w, mask=mask)
    tau = w.coords()[0]
    on_axis = np.abs(tau) < 0.5 * w.spacing[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        azim = np.where(on_axis, H[0, 0], g[0] / np.where(on_axis, 1.0, tau))
    g2 = np.sum(g * g, axis=0)
    Hg = np.einsum("ij...,j...->i...", H, g)
    H2 = np.sum(H * H, axis=(0, 1)) + (d - 2) * azim**2
    pos = w.values > 0
    valid = pos & (np.sqrt(g2) > floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        a2 = H2 / g2 - np.sum(Hg * Hg, axis=0) / g2**2
    a2 = np.where(valid, np.maximum(a2, 0.0), np.nan)
    masked = float(np.count_nonzero(pos & ~valid) * w.cell_volume)
    return CurvatureField(a2, valid, float(floor), masked)


# ---------------------------------------------------------------------------
# Sternberg-Zumbrun decomposition on 2D level sets


@dataclass(frozen=True)
class LevelComparison:
    level: float
    n_points: int
    max_abs: float
    scale: float

    @property
    def discrepancy(self) -> float:
        return self.max_abs / self.scale if self.scale > 1e-12 else self.max_abs


@dataclass(frozen=True)
class SZReport:
    """Per-level comparison of the Hessian formula with |A|**2 + |grad_T |grad w||**2/|grad w|**2.

    A level's discrepancy is max|difference| relative to the largest Hessian
    value on that level (absolute when that scale is below 1e-12).
    """

    levels: list
    max_discrepancy: float


def sternberg_zumbrun_check(w: ScalarField, levels=None, arc_gap: float | None = None,
                            floor: float | None = None) -> SZReport:
    """Compare A**2 from the Hessian with the level-set geometry on 2D fields.

    Level lines come from marching squares.  Their curvature is the
    circumcircle curvature over points arc_gap apart, and the tangential
    derivative of |grad w| is differentiated along arc length.  Vertices
    within arc_gap of an open end or next to masked nodes are skipped.

    Contour vertices carry an O(h**2) position error, so a chord of fixed
    multiple of h gives an O(1) curvature error.  The default chord is
    max(10 h, sqrt(h l)) with l half the shortest box side, which makes the
    curvature error O(h).
    """
    from skimage.measure import find_contours

    if w.dim != 2:
        raise DomainError("the level-set comparison needs a 2D field")
    hx, hy = w.spacing
    if arc_gap is None:
        h = max(hx, hy)
        ell = 0.5 * min((n - 1) * hk for n, hk in zip(w.shape, w.spacing))
        arc_gap = max(10.0 * h, math.sqrt(h * ell))
    A2 = curvature_A2(w, floor)
    mask = _positive_mask(w)
    gx, gy = gradient(w, mask=mask)
    gnorm = np.hypot(gx, gy)
    valid_f = A2.valid.astype(float)
    a2_vals = A2.nan_to_zero()
    if levels is None:
        live = w.values[A2.valid]
        if live.size == 0:
            return SZReport([], 0.0)
        lo, hi = float(live.min()), float(live.max())
        levels = lo + (hi - lo) * np.linspace(0.2, 0.8, 5)
    out = []
    for c in levels:
        diffs, scales = [], []
        for poly in find_contours(w.values, float(c)):
            idx = poly.T
            pts = np.column_stack([w.origin[0] + hx * poly[:, 0], w.origin[1] + hy * poly[:, 1]])
            if len(pts) < 3:
                continue
            nx = map_coordinates(gx, idx, order=1, mode="nearest")
            ny = map_coordinates(gy, idx, order=1, mode="nearest")
            nn = np.hypot(nx, ny)
            nn[nn == 0] = 1.0
            normals = -np.column_stack([nx, ny]) / nn[:, None]
            kappa = _polyline_curvature(pts, normals, arc_gap)
            gn = map_coordinates(gnorm, idx, order=1, mode="nearest")
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            arc = np.concatenate([[0.0], np.cumsum(seg)])
            keep_arc = np.concatenate([[True], seg > 1e-12 * max(hx, hy)])
            dgn = np.full(len(pts), np.nan)
            a, b = arc[keep_arc], gn[keep_arc]
            if len(a) >= 3:
                dgn[keep_arc] = np.gradient(b, a, edge_order=2)
            a2 = map_coordinates(a2_vals, idx, order=1, mode="nearest")
            ok = map_coordinates(valid_f, idx, order=1, mode="nearest") > 1 - 1e-12
            ok &= np.isfinite(kappa) & np.isfinite(dgn) & (gn > 0)
            geo = kappa**2 + dgn**2 / np.where(gn > 0, gn, 1.0) ** 2
            if np.any(ok):
                diffs.append(np.abs(a2[ok] - geo[ok]))
                scales.append(np.abs(a2[ok]))
        if diffs:
            d = np.concatenate(diffs)
            out.append(LevelComparison(float(c), d.size, float(d.max()), float(np.concatenate(scales).max())))
    worst = max((lv.discrepancy for lv in out), default=0.0)
    return SZReport(out, worst)


# ---------------------------------------------------------------------------
# quadratic form and the inner-variation oracle


def _support_check(Om, f, valid, what="test function"):
    bad = (Om != 0) & (np.abs(f) > 1e-12 * max(1.0, float(np.max(np.abs(f))))) & ~valid
    if np.any(bad):
        raise DomainError(f"{what} is non-zero at {int(np.count_nonzero(bad))} nodes where |grad w| is below the floor")


def quadratic_form_Q(w: ScalarField, pack: ExponentPack, f, floor: float | None = None) -> float:
    """int w**s |grad w|**2 (|grad f|**2 - A**2 f**2) over {w > 0}."""
    fv = _sample(f, w)
    Om = weight_nodes(w, pack.s)
    A2 = curvature_A2(w, floor)
    _support_check(Om, fv, A2.valid)
    g2 = np.sum(gradient(w, mask=_positive_mask(w)) ** 2, axis=0)
    gf2 = np.sum(gradient(w.with_values(fv)) ** 2, axis=0)
    integrand = g2 * (gf2 - A2.nan_to_zero() * fv**2)
    live = Om != 0
    return float(np.sum(Om[live] * integrand[live]))


def normal_field(w: ScalarField, f) -> np.ndarray:
    """xi = f grad w / |grad w| (zero where the gradient vanishes), shape (d, *grid)."""
    fv = _sample(f, w)
    g = gradient(w, mask=_positive_mask(w))
    gn = np.sqrt(np.sum(g * g, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        unit = np.where(gn > 0, g / gn, 0.0)
    return unit * fv


def pushforward_energy(w: ScalarField, pack: ExponentPack, xi: np.ndarray, t: float,
                       min_singular: float = 1e-6) -> float:
    """Energy of w composed with (Id + t xi)**-1, written on the reference domain.

    E(t) = int w**s (|J**-T grad w|**2 + 1) |det J| with J = Id + t D xi, so
    w itself is never re-sampled.  D xi uses the same masked differences as
    grad w, and E(0) equals minimize.energy_E(w) exactly.
    """
    xi = np.asarray(xi, float)
    d = w.dim
    if xi.shape != (d,) + w.shape:
        raise ShapeError(f"vector field must have shape {(d,) + w.shape}, got {xi.shape}")
    Om = weight_nodes(w, pack.s)
    live = Om != 0
    mask = _positive_mask(w)
    g = gradient(w, mask=mask)[:, live].T  # (N, d)
    if t == 0:
        return float(np.sum(Om[live] * (np.sum(g * g, axis=1) + 1.0)))
    D = np.empty((d, d) + w.shape)
    for i in range(d):
        for j in range(d):
            D[i, j] = derivative(xi[i], j, w.spacing[j], mask)
    J = np.eye(d)[None] + t * np.moveaxis(D[:, :, live], -1, 0)  # (N, d, d), J[i, j] = d_j Phi_i
    sv = np.linalg.svd(J, compute_uv=False)
    det = np.linalg.det(J)
    if np.min(sv[:, -1]) < min_singular or np.any(det <= 0):
        raise StepTooLargeError(f"Id + t xi degenerates at t = {t:g} (min singular value {np.min(sv[:, -1]):.3g})")
    v = np.linalg.solve(np.transpose(J, (0, 2, 1)), g[..., None])[..., 0]
    return float(np.sum(Om[live] * (np.sum(v * v, axis=1) + 1.0) * det))


def second_variation_fd(w: ScalarField, pack: ExponentPack, f, dt: float = DEFAULT_DT) -> float:
    """(E(dt) - 2 E(0) + E(-dt)) / (2 dt**2) along the normal field xi = f grad w/|grad w|."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    xi = normal_field(w, f)
    if not np.any(xi):
        return 0.0
    e0 = pushforward_energy(w, pack, xi, 0.0)
    ep = pushforward_energy(w, pack, xi, dt)
    em = pushforward_energy(w, pack, xi, -dt)
    return (ep - 2.0 * e0 + em) / (2.0 * dt * dt)


def first_variation_fd(w: ScalarField, pack: ExponentPack, f, dt: float = DEFAULT_DT) -> float:
    """(E(dt) - E(-dt)) / (2 dt) along the normal field."""
    xi = normal_field(w, f)
    return (pushforward_energy(w, pack, xi, dt) - pushforward_energy(w, pack, xi, -dt)) / (2.0 * dt)


@dataclass(frozen=True)
class VariationReport:
    """Second differences at dt and 2 dt and their Richardson combination."""

    dt: float
    value: float
    value_2dt: float
    richardson: float

    @property
    def spread(self) -> float:
        return abs(self.value - self.value_2dt) / max(abs(self.richardson), 1e-300)


def second_variation_report(w: ScalarField, pack: ExponentPack, f, dt: float = DEFAULT_DT) -> VariationReport:
    v1 = second_variation_fd(w, pack, f, dt)
    v2 = second_variation_fd(w, pack, f, 2 * dt)
    # the second difference is even in dt with an O(dt**2) leading error
    return VariationReport(dt, v1, v2, (4 * v1 - v2) / 3)


# ---------------------------------------------------------------------------
# axially symmetric fields


def smooth_step(x):
    """C2 quintic step: 0 for x <= 0, 1 for x >= 1; returns (value, derivative)."""
    x = np.clip(np.asarray(x, float), 0.0, 1.0)
    return x**3 * (10 - 15 * x + 6 * x * x), 30 * x * x * (1 - x) ** 2


def inner_cutoff(tau, eps: float):
    """zeta(tau/eps) with zeta = 0 below 1/2 and 1 above 1; returns (value, d/dtau)."""
    v, dv = smooth_step(2 * np.asarray(tau, float) / eps - 1)
    return v, dv * 2 / eps


def _meridian_parts(w: ScalarField):
    if w.dim != 2:
        raise DomainError("axisymmetric fields are sampled on a (tau, x_d) grid")
    tau = w.coords()[0]
    return tau


def _tau_weight(w: ScalarField, s: float, d: int):
    tau = _meridian_parts(w)
    Om = weight_nodes(w, s)
    ht = w.spacing[0]
    # trapezoid across tau restricted to tau >= 0: halve the weight on the axis column
    Om = np.where(tau > 0.5 * ht, Om, np.where(np.abs(tau) <= 0.5 * ht, 0.5 * Om, 0.0))
    return Om * np.abs(tau) ** (d - 2), tau


def axial_form(w: ScalarField, pack: ExponentPack, d: int, eta, eps: float | None = None) -> float:
    """int w**s w_tau**2 (|grad eta|**2 - (d-2) eta**2/tau**2) tau**(d-2) dtau dx_d.

    eta is multiplied by the inner cutoff zeta(tau/eps) when d >= 3 and eta
    does not vanish near the axis (default eps = 4 tau-spacings).  Gradients of
    eta are taken by second-order differences of the cut-off samples.
    """
    if d < 2:
        raise DomainError("need d >= 2")
    ev = _sample(eta, w)
    W, tau = _tau_weight(w, pack.s, d)
    ht = w.spacing[0]
    if d >= 3:
        if eps is None:
            eps = 4 * ht
        near = (np.abs(tau) < eps) & (W != 0)
        if np.any(np.abs(ev[near]) > 0):
            ev = ev * inner_cutoff(np.abs(tau), eps)[0]
    mask = _positive_mask(w)
    wt = derivative(w.values, 0, ht, mask)
    ge = gradient(w.with_values(ev))
    ge2 = np.sum(ge * ge, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        hardy = np.where(np.abs(tau) > 0, (d - 2) * ev**2 / tau**2, 0.0)
    integrand = wt**2 * (ge2 - hardy)
    live = W != 0
    return float(np.sum(W[live] * integrand[live]))


@dataclass(frozen=True)
class AxialChain:
    """Terms of the truncated-power argument for eta = tau**-theta zeta_R (frozen at tau = eps).

    inner:     int_{tau > eps} w**s w_tau**2 tau**(-2 theta - 2) zeta_R**2
    total:     int w**s w_tau**2 eta**2 / tau**2
    gradient:  int w**s w_tau**2 |grad eta|**2
    bound:     theta**2 inner + int_{tau > eps, R < |x| < 2R} w**s w_tau**2 tau**(-2 theta) |grad zeta_R|**2
               + int_{tau <= eps} w**s w_tau**2 eps**(-2 theta) |grad zeta_R|**2 + cross
    cross:     int_{tau > eps} w**s w_tau**2 (-2 theta) tau**(-2 theta - 1) zeta_R d_tau zeta_R, the
               mixed term of |grad eta|**2, which is non-negative for theta > 0 and radially
               decreasing zeta_R.
    """

    d: int
    theta: float
    eps: float
    R: float
    inner: float
    total: float
    gradient: float
    bound: float
    cross: float

    def holds(self, rtol: float = 1e-9) -> dict:
        """Each link of (d-2) inner <= (d-2) total <= gradient <= bound."""
        tol = rtol * max(abs(self.bound), abs(self.gradient), 1e-300)
        return {
            "inner<=total": (self.d - 2) * self.inner <= (self.d - 2) * self.total + tol,
            "total<=gradient": (self.d - 2) * self.total <= self.gradient + tol,
            "gradient<=bound": self.gradient <= self.bound + tol,
        }


def axial_chain(w: ScalarField, pack: ExponentPack, d: int, theta: float, eps: float, R: float) -> AxialChain:
    """Evaluate the terms of the truncated-power argument on a meridian field.

    zeta_R(x) = 1 - step((|x| - R)/R) with the quintic step, so it is 1 on B_R,
    0 outside B_2R and |grad zeta_R| <= 15/(8R).  Gradients of eta are exact.
    """
    W, tau = _tau_weight(w, pack.s, d)
    z = w.coords()[1]
    at = np.abs(tau)
    r = np.hypot(at, z)
    sv, dsv = smooth_step((r - R) / R)
    zeta = 1.0 - sv
    with np.errstate(divide="ignore", invalid="ignore"):
        dzeta_dr = -dsv / R
        zt = np.where(r > 0, dzeta_dr * at / r, 0.0)
        zz = np.where(r > 0, dzeta_dr * z / r, 0.0)
    gz2 = zt**2 + zz**2
    out = at > eps
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(out, at ** (-theta), eps ** (-theta))
        dp = np.where(out, -theta * at ** (-theta - 1), 0.0)
        eta = p * zeta
        eta_t = dp * zeta + p * zt
        eta_z = p * zz
        hardy = np.where(at > 0, eta**2 / at**2, 0.0)
    mask = _positive_mask(w)
    c2 = derivative(w.values, 0, w.spacing[0], mask) ** 2
    live = (W != 0) & (at > 0)

    def integ(g):
        return float(np.sum(W[live] * c2[live] * g[live]))

    with np.errstate(divide="ignore", invalid="ignore"):
        inner = integ(np.where(out, at ** (-2 * theta - 2) * zeta**2, 0.0))
        ring = integ(np.where(out & (r > R), at ** (-2 * theta) * gz2, 0.0))
        core = integ(np.where(~out, eps ** (-2 * theta) * gz2, 0.0))
        cross = integ(np.where(out, 2 * dp * p * zeta * zt, 0.0))
    total = integ(hardy)
    grad = integ(eta_t**2 + eta_z**2)
    return AxialChain(d, theta, eps, R, inner, total, grad, theta**2 * inner + ring + core + cross, cross)


def commutator_residual(w: ScalarField, pack: ExponentPack, d: int, floor: float | None = None) -> ScalarField:
    """Delta c + s grad w . grad c / w + (Delta w / w) c - (d-2) c / tau**2 with c = w_tau.

    Laplacians are the axisymmetric ones, Delta = d_tautau + (d-2)/tau d_tau + d_zz.
    Nodes with w <= floor or tau <= floor, and nodes whose stencils reach the
    zero set or the grid faces, are NaN.
    """
    tau = _meridian_parts(w)
    ht, hz = w.spacing
    if floor is None:
        floor = 4 * max(ht, hz)
    v = w.values
    mask = _positive_mask(w)
    wt = derivative(v, 0, ht, mask)
    wz = derivative(v, 1, hz, mask)
    wtt = derivative(wt, 0, ht, mask)
    wzz = derivative(wz, 1, hz, mask)
    c = wt
    ct, cz = wtt, derivative(c, 1, hz, mask)
    ctt = derivative(ct, 0, ht, mask)
    czz = derivative(cz, 1, hz, mask)
    s = pack.s
    with np.errstate(divide="ignore", invalid="ignore"):
        lap_w = wtt + (d - 2) * wt / tau + wzz
        lap_c = ctt + (d - 2) * ct / tau + czz
        res = lap_c + s * (wt * ct + wz * cz) / v + lap_w / v * c - (d - 2) * c / tau**2
    # three nested differences: stay three nodes away from faces and from the zero set
    ok = (v > floor) & (tau > floor)
    pos = v > 0
    for k in range(2):
        for step in (1, 2, 3):
            for sign in (1, -1):
                ok &= np.roll(pos, sign * step, axis=k)
    ok[:3, :] = ok[-3:, :] = False
    ok[:, :3] = ok[:, -3:] = False
    return w.with_values(np.where(ok, res, np.nan), kind="commutator-residual")


# ---------------------------------------------------------------------------
# d = 2 logarithmic cutoff, theta window, positive-exponent cross form


def log_cutoff(r, R: float):
    """1 on |x| <= 1, (log R - log|x|)/log R on 1 <= |x| <= R, 0 beyond."""
    r = np.asarray(r, float)
    if R <= 1:
        return np.where(r <= 1, 1.0, 0.0)
    with np.errstate(divide="ignore"):
        mid = (math.log(R) - np.log(np.maximum(r, 1e-300))) / math.log(R)
    return np.where(r <= 1, 1.0, np.where(r >= R, 0.0, mid))


def _angular_integrals(profile, s: float):
    """(int rho dphi, int rho a dphi) over the 2D section of a 1-homogeneous w = r g(phi).

    rho = g**s (g**2 + g'**2) and a = ((g'' + g) g)**2 / (g**2 + g'**2)**2, so that
    w**s |grad w|**2 = r**s rho and A**2 = a / r**2.  None means the half-plane.
    """
    if profile is None:
        # 2 int_0^(pi/2) cos(phi)**s dphi
        return float(special.beta(0.5, 0.5 * (1 + s))), 0.0
    if profile.d != 2:
        raise DomainError("the logarithmic cutoff argument is for d = 2 profiles")
    from .cones import profile_curvature_A2

    theta0 = profile.theta0

    def rho_reduced(t):
        # rho / (theta0 - t)**s; the edge factor is passed to quad as an algebraic weight
        g, dg = (float(v) for v in profile.evaluate(np.array([t])))
        ratio = g / (theta0 - t) if theta0 - t > 1e-12 else 1.0
        return ratio**s * (g * g + dg * dg)

    def rho_a_reduced(t):
        return rho_reduced(t) * float(profile_curvature_A2(profile, np.array([t]))[0])

    m0 = integrate.quad(rho_reduced, 0.0, theta0, weight="alg", wvar=(0.0, s), limit=200)[0]
    m1 = integrate.quad(rho_a_reduced, 0.0, theta0, weight="alg", wvar=(0.0, s), limit=200)[0]
    return 2 * m0, 2 * m1


def log_cutoff_test_2d(pack: ExponentPack, R: float, profile=None) -> float:
    """Stability form of a 1-homogeneous d = 2 solution tested with the log cutoff.

    For w = r g(phi) the form separates into
        (int rho) int_1^R r**(s-1) dr / log(R)**2 - (int rho a) int_0^R f**2 r**(s-1) dr.
    profile=None is the half-plane w = x_d, for which a = 0 and the value is
    the Dirichlet mass of the cutoff.  For R <= 1 the annulus is empty.  A
    curved profile with s <= 0 makes the second radial integral diverge at the
    vertex, and the value is -inf.
    """
    s = pack.s
    m0, m1 = _angular_integrals(profile, s)
    if R <= 1:
        grad = 0.0
    else:
        L = math.log(R)
        radial = L if s == 0 else math.expm1(s * L) / s
        grad = m0 * radial / L**2
    if m1 <= 1e-12 * m0:
        # round-off curvature of a flat profile
        return grad
    if s <= 0:
        return -math.inf
    inner = 1.0 / s
    if R > 1:
        L = math.log(R)
        inner += integrate.quad(lambda r: ((L - math.log(r)) / L) ** 2 * r ** (s - 1), 1.0, R, limit=200)[0]
    return grad - m1 * inner


@dataclass(frozen=True)
class ThetaWindow:
    feasible: bool
    low: float
    high: float


def theta_window(d: float, s: float, tol: float = 1e-12) -> ThetaWindow:
    """theta with d - 2 - theta**2 > 0 and d + s - 2 - 2 theta < 0.

    The open interval ((d+s-2)/2, sqrt(d-2)) intersected with (-sqrt(d-2), sqrt(d-2)).
    An interval narrower than tol (relative) counts as empty, so boundary cases
    do not depend on the last bit of s.
    """
    if d <= 2:
        return ThetaWindow(False, math.nan, math.nan)
    high = math.sqrt(d - 2)
    low = max((d + s - 2) / 2, -high)
    feasible = high - low > tol * max(1.0, high)
    return ThetaWindow(feasible, low, high) if feasible else ThetaWindow(False, math.nan, math.nan)


def theta_window_agrees(d: int, s: float) -> bool:
    """Cross-check of theta_window against exponents.dimension_window for integer d >= 3."""
    return theta_window(d, s).feasible == dimension_window(s).admits(d)


def positive_exponent_cross_form(w: ScalarField, pack: ExponentPack, phi) -> float:
    """int w**s |grad phi|**2 - int w**s (Delta w / w) phi**2 for s >= 0.

    Refused for s < 0: the weight w**s puts the singular factor on the zero set
    and the form is no longer the stability form there.
    """
    if pack.s < 0:
        raise DomainError("the cross form needs s >= 0; for s < 0 use quadratic_form_Q")
    pv = _sample(phi, w)
    Om = weight_nodes(w, pack.s)
    mask = _positive_mask(w)
    H = hessian(w, mask=mask)
    lap = np.trace(H, axis1=0, axis2=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pot = np.where(w.values > 0, lap / w.values, 0.0)
    gp2 = np.sum(gradient(w.with_values(pv)) ** 2, axis=0)
    live = Om != 0
    return float(np.sum(Om[live] * (gp2[live] - pot[live] * pv[live] ** 2)))
