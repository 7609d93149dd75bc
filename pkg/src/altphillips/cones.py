"""One-homogeneous axially symmetric profiles w = r g(theta).

theta is the angle to the positive x_d axis and the positivity set is the
cone {theta < theta0}.  For w = r g(theta) the equation
Delta w = (s/2)(1 - |grad w|**2)/w becomes

    g'' + (d-2) cot(theta) g' + (d-1) g = (s/2)(1 - g**2 - g'**2)/g.

Profiles are shot from the free-boundary edge, where g = 0 and g' = -1,
toward the axis.  Regularity at the axis means the angular flux
sin(theta)**(d-2) g' tends to 0; its limit is the axis defect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import DomainError
from .exponents import ExponentPack
from .fields import ScalarField

__all__ = [
    "ConeProfile",
    "cone_ode_rhs",
    "edge_expansion",
    "edge_series",
    "shoot_from_edge",
    "find_axisymmetric_cone",
    "axis_defects",
    "cone_to_field",
    "cone_meridian_field",
    "axisymmetric_residual",
    "profile_curvature_A2",
]

EDGE_OFFSET = 0.1  # series start offset from the edge, relative to min(theta0, pi - theta0)
AXIS_STOP = 0.01  # shooting stops at this fraction of min(theta0, 1) from the axis


def cone_ode_rhs(theta, g, dg, d: int, s: float):
    """g'' from the angular equation; at theta = 0 the axis limit with g'(0) = 0 is used."""
    g = np.asarray(g, float)
    if np.any(g <= 0):
        raise DomainError("g <= 0: the point lies past the free boundary")
    theta = np.asarray(theta, float)
    forcing = 0.5 * s * (1.0 - g * g - dg * dg) / g
    if np.all(theta == 0):
        # g'/tan(theta) -> g''(0), so (d-1) g''(0) = forcing - (d-1) g
        return (forcing - (d - 1) * g) / (d - 1)
    return forcing - (d - 1) * g - (d - 2) * dg / np.tan(theta)


def edge_expansion(tau, theta0: float, d: int, s: float):
    """Two-term start g(theta0 - tau) = tau + a tau**2 with a = (d-2) cot(theta0) / (2 (1+s)).

    The coefficient follows from the ODE itself (balance of the O(1) terms);
    returns (g, g') at theta = theta0 - tau.
    """
    a = (d - 2) / np.tan(theta0) / (2.0 * (1.0 + s))
    return tau + a * tau * tau, -(1.0 + 2.0 * a * tau)


def _series_mul(a, b, n):
    return np.convolve(a, b)[:n]


def _series_div(a, b, n):
    out = np.zeros(n)
    for k in range(n):
        out[k] = (a[k] - np.dot(out[:k], b[k:0:-1])) / b[0]
    return out


def edge_series(theta0: float, d: int, s: float, order: int = 12) -> np.ndarray:
    """Coefficients c_k of g(theta0 - tau) = sum c_k tau**k, the smooth solution with g = 0, g' = -1.

    Multiplying the ODE by g gives, in tau = theta0 - theta,
    g g_tt - (d-2) cot(theta0 - tau) g g_t + (d-1) g**2 = (s/2)(1 - g**2 - g_t**2),
    and the tau**n balance fixes c_{n+1} through the factor (n+1)(n+s).
    c_2 agrees with `edge_expansion`.
    """
    n = order + 2
    k = np.arange(n)
    fact = np.array([float(np.prod(np.arange(1, j + 1))) for j in range(n)])
    cos_t = np.where(k % 2 == 0, (-1.0) ** (k // 2) / fact, 0.0)
    sin_t = np.where(k % 2 == 1, (-1.0) ** (k // 2) / fact, 0.0)
    num = np.cos(theta0) * cos_t + np.sin(theta0) * sin_t
    den = np.sin(theta0) * cos_t - np.cos(theta0) * sin_t
    cot = _series_div(num, den, n)
    c = np.zeros(n)
    c[1] = 1.0

    def residual(c):
        dc = np.append(c[1:] * np.arange(1, n), 0.0)
        ddc = np.append(dc[1:] * np.arange(1, n), 0.0)
        lhs = _series_mul(c, ddc, n) - (d - 2) * _series_mul(cot, _series_mul(c, dc, n), n) + (d - 1) * _series_mul(c, c, n)
        rhs = -0.5 * s * (_series_mul(c, c, n) + _series_mul(dc, dc, n))
        rhs[0] += 0.5 * s
        return lhs - rhs

    for m in range(1, order):
        r = residual(c)
        c[m + 1] = -r[m] / ((m + 1) * (m + s))
    return c[: order + 1]


def _eval_series(c, tau):
    g = np.polyval(c[::-1], tau)
    dg = np.polyval((c[1:] * np.arange(1, c.size))[::-1], tau)
    return g, dg


@dataclass(frozen=True)
class ConeProfile:
    """Samples of g and g' on an increasing theta grid ending at theta0."""

    d: int
    pack: ExponentPack
    theta0: float
    theta: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    axis_defect: float
    collapsed: bool = False
    message: str = ""
    meta: dict = dc_field(default_factory=dict, compare=False)

    @property
    def s(self) -> float:
        return self.pack.s

    @property
    def is_half_space(self) -> bool:
        return abs(self.theta0 - 0.5 * np.pi) < 1e-9

    def ddg(self) -> np.ndarray:
        """g'' from the ODE (edge value from the expansion)."""
        out = np.empty_like(self.g)
        inner = self.g > 0
        out[inner] = cone_ode_rhs(self.theta[inner], self.g[inner], self.dg[inner], self.d, self.s)
        a = (self.d - 2) / np.tan(self.theta0) / (2.0 * (1.0 + self.s))
        out[~inner] = 2.0 * a
        return out

    def interpolant(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.theta, self.g, self.dg)

    def gradient_norm(self) -> np.ndarray:
        return np.sqrt(self.g**2 + self.dg**2)

    def edge_conditions(self) -> tuple:
        return float(self.g[-1]), float(self.dg[-1])

    def evaluate(self, theta):
        """(g, g') at arbitrary angles; the axis cap [0, theta_stop] uses the regular series g(0) + g''(0) t**2 / 2."""
        theta = np.asarray(theta, float)
        spl = self.interpolant()
        t_lo = self.theta[0]
        g = np.where(theta >= t_lo, spl(np.clip(theta, t_lo, self.theta0)), 0.0)
        dg = np.where(theta >= t_lo, spl(np.clip(theta, t_lo, self.theta0), 1), 0.0)
        cap = theta < t_lo
        if np.any(cap):
            c2 = self.dg[0] / t_lo
            g0 = self.g[0] - 0.5 * c2 * t_lo**2
            g = np.where(cap, g0 + 0.5 * c2 * theta**2, g)
            dg = np.where(cap, c2 * theta, dg)
        outside = theta > self.theta0
        return np.where(outside, 0.0, g), np.where(outside, 0.0, dg)


def _forcing_rhs(theta, g, dg, d, s):
    with np.errstate(divide="ignore", invalid="ignore"):
        return 0.5 * s * (1.0 - g * g - dg * dg) / g - (d - 1) * g - (d - 2) * dg / np.tan(theta)


def _rk4_batch(theta0: np.ndarray, d: int, s: float, n_steps: int, axis_stop: float = AXIS_STOP):
    """RK4 from every edge in theta0 toward its axis stop, uniform steps, vectorized over candidates.

    Returns theta (m, n+1), states (m, n+1, 2) and the index of the last valid
    sample plus a status code per candidate (0 ok, 1 collapsed, 2 blow-up).
    """
    theta0 = np.asarray(theta0, float)
    m = theta0.size
    tau1 = EDGE_OFFSET * np.minimum(theta0, np.pi - theta0)
    start = theta0 - tau1
    stop = axis_stop * np.minimum(theta0, 1.0)
    h = (stop - start) / n_steps
    ts = start[:, None] + h[:, None] * np.arange(n_steps + 1)[None, :]
    ys = np.full((m, n_steps + 1, 2), np.nan)
    g1 = np.empty(m)
    dg1 = np.empty(m)
    for j in range(m):
        g1[j], dtau = _eval_series(edge_series(theta0[j], d, s), tau1[j])
        dg1[j] = -dtau  # d/dtheta = -d/dtau
    ys[:, 0, 0], ys[:, 0, 1] = g1, dg1
    last = np.full(m, n_steps)
    status = np.zeros(m, int)
    live = np.ones(m, bool)

    def f(t, g, dg):
        return dg, _forcing_rhs(t, g, dg, d, s)

    if m == 1:
        _rk4_scalar(ts[0], ys[0], float(h[0]), d, s, last, status)
        return ts, ys, last, status
    g, dg = g1.copy(), dg1.copy()
    for k in range(n_steps):
        if not live.any():
            break
        t = ts[:, k]
        a1, b1 = f(t, g, dg)
        a2, b2 = f(t + h / 2, g + h / 2 * a1, dg + h / 2 * b1)
        a3, b3 = f(t + h / 2, g + h / 2 * a2, dg + h / 2 * b2)
        a4, b4 = f(t + h, g + h * a3, dg + h * b3)
        gn = g + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        dgn = dg + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        bad_g = live & ~(gn > 0)
        blow = live & ~bad_g & ~(np.isfinite(dgn) & (np.abs(dgn) < 1e8))
        for mask, code in ((bad_g, 1), (blow, 2)):
            last[mask] = k
            status[mask] = code
        live &= ~(bad_g | blow)
        g = np.where(live, gn, g)
        dg = np.where(live, dgn, dg)
        ys[live, k + 1, 0] = gn[live]
        ys[live, k + 1, 1] = dgn[live]
    return ts, ys, last, status


def _rk4_scalar(ts, ys, h, d, s, last, status):
    """Single-candidate version of the batch loop with plain floats (much less overhead)."""
    hs = 0.5 * s

    def f(t, g, dg):
        return dg, hs * (1.0 - g * g - dg * dg) / g - (d - 1) * g - (d - 2) * dg / math.tan(t)

    g, dg = float(ys[0, 0]), float(ys[0, 1])
    n = ys.shape[0] - 1
    for k in range(n):
        t = float(ts[k])
        try:
            a1, b1 = f(t, g, dg)
            a2, b2 = f(t + h / 2, g + h / 2 * a1, dg + h / 2 * b1)
            a3, b3 = f(t + h / 2, g + h / 2 * a2, dg + h / 2 * b2)
            a4, b4 = f(t + h, g + h * a3, dg + h * b3)
        except (ZeroDivisionError, OverflowError):
            last[0], status[0] = k, 1 if g <= 0 else 2
            return
        gn = g + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        dgn = dg + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        if not gn > 0:
            last[0], status[0] = k, 1
            return
        if not (math.isfinite(dgn) and abs(dgn) < 1e8):
            last[0], status[0] = k, 2
            return
        g, dg = gn, dgn
        ys[k + 1, 0], ys[k + 1, 1] = g, dg


def _axis_defect(t, g, dg, d, s):
    """P(0) = P(t) - t P'(t)/(d-1) for the angular flux P = sin**(d-2) g'."""
    w = np.sin(t) ** (d - 2)
    P = w * dg
    dP = w * (0.5 * s * (1 - g * g - dg * dg) / g - (d - 1) * g)
    return P - t * dP / (d - 1)


def _check_shoot_args(theta0, d, pack):
    if not np.all((0 < np.asarray(theta0)) & (np.asarray(theta0) < np.pi)):
        raise DomainError("theta0 must lie in (0, pi)")
    if d < 2:
        raise DomainError("d must be at least 2")
    if not pack.s > -1:
        raise DomainError("s must exceed -1")


def axis_defects(theta0, d: int, pack: ExponentPack, steps: int = 2000, signed: bool = False) -> np.ndarray:
    """Axis defect for many edge angles at once.

    Failed shots give NaN, or with signed=True an infinity carrying the sign of
    the defect: a collapse (g returns to 0 with g' > 0) counts as +inf, a
    blow-up counts with the sign of g' (the singular axis mode dominates).
    """
    theta0 = np.atleast_1d(np.asarray(theta0, float))
    _check_shoot_args(theta0, d, pack)
    ts, ys, last, status = _rk4_batch(theta0, d, pack.s, int(steps))
    out = np.full(theta0.size, np.nan)
    ok = status == 0
    out[ok] = _axis_defect(ts[ok, -1], ys[ok, -1, 0], ys[ok, -1, 1], d, pack.s)
    if signed:
        idx = np.arange(theta0.size)
        out[status == 1] = np.inf
        blow = status == 2
        out[blow] = np.sign(ys[idx[blow], last[blow], 1]) * np.inf
    return out


def shoot_from_edge(theta0: float, d: int, pack: ExponentPack, steps: int = 2000,
                    axis_stop: float = AXIS_STOP) -> ConeProfile:
    """Integrate the angular ODE from the edge theta0 toward the axis.

    The start sits at theta0 - EDGE_OFFSET min(theta0, pi - theta0), taken from
    the power series of the smooth edge solution (`edge_series`); RK4 runs with `steps` uniform steps down to
    theta_stop = axis_stop * min(theta0, 1).  The axis defect is the limit of
    P = sin(theta)**(d-2) g', extrapolated with P(0) = P(t) - t P'(t)/(d-1),
    which removes the regular part P ~ c t**(d-1).
    """
    _check_shoot_args(theta0, d, pack)
    s = pack.s
    ts, ys, last, status = _rk4_batch(np.array([float(theta0)]), d, s, int(steps), axis_stop)
    k = int(last[0])
    ts, ys = ts[0, : k + 1], ys[0, : k + 1]
    c = edge_series(float(theta0), d, s)
    tau1 = theta0 - ts[0]
    tau = np.linspace(tau1, 0.0, 65)[1:-1]
    gs, dgs = _eval_series(c, tau)
    theta = np.concatenate([ts[::-1], theta0 - tau, [theta0]])
    g = np.concatenate([ys[::-1, 0], gs, [0.0]])
    dg = np.concatenate([ys[::-1, 1], -dgs, [-1.0]])
    meta = {"steps": int(steps), "axis_stop": float(ts[-1])}
    if status[0]:
        msg = "profile reached g = 0 before the axis" if status[0] == 1 else "profile blew up"
        return ConeProfile(d, pack, float(theta0), theta, g, dg, np.nan, True, msg, meta)
    defect = float(_axis_defect(theta[0], g[0], dg[0], d, s))
    return ConeProfile(d, pack, float(theta0), theta, g, dg, defect, False, "", meta)


def find_axisymmetric_cone(d: int, pack: ExponentPack, scan: int = 90, steps: int = 2000,
                           tol: float = 1e-8, theta_range=(0.02 * np.pi, 0.98 * np.pi),
                           confirm_tol: float = 1e-4, return_rejected: bool = False):
    """All theta0 in theta_range where the axis defect changes sign, refined by bisection.

    The half-space angle pi/2 is always on the scan grid.  Each root is
    re-shot with the axis stop ten times closer; roots whose profile then
    collapses or keeps a defect above confirm_tol came from the nonlinear
    regime g -> 0 near the stop and are rejected.  Returns the accepted
    profiles sorted by theta0, plus the rejected ones if asked.
    """
    if d == 2:
        raise DomainError("use the logarithmic cutoff argument; no cone search in d = 2")
    if d < 2:
        raise DomainError("d must be at least 3")
    lo, hi = theta_range
    grid = np.unique(np.concatenate([np.linspace(lo, hi, scan), [0.5 * np.pi]]))

    def defect(t0):
        return float(axis_defects(t0, d, pack, steps, signed=True)[0])

    values = axis_defects(grid, d, pack, steps, signed=True)
    roots = []
    for t, v in zip(grid, values):
        if abs(v) < tol:
            roots.append(float(t))
    for a, b, va, vb in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if abs(va) < tol or abs(vb) < tol or not va * vb < 0:
            continue
        # bisect until both ends have finite defects, then Brent
        for _ in range(60):
            if np.isfinite(va) and np.isfinite(vb):
                break
            m = 0.5 * (a + b)
            vm = defect(m)
            if vm == 0 or abs(vm) < tol:
                a = b = m
                break
            if np.sign(vm) == np.sign(va):
                a, va = m, vm
            else:
                b, vb = m, vm
        if a == b:
            roots.append(float(a))
        elif np.isfinite(va) and np.isfinite(vb):
            roots.append(float(brentq(defect, a, b, xtol=1e-13, rtol=1e-15, maxiter=200)))
    roots = sorted(roots)
    merged = []
    for r in roots:
        if not merged or abs(r - merged[-1]) > 1e-6:
            merged.append(r)
    accepted, rejected = [], []
    for r in merged:
        if abs(r - 0.5 * np.pi) < 1e-6:
            r = 0.5 * np.pi
        p = shoot_from_edge(r, d, pack, steps)
        # a regular profile stays regular when shot ten times closer to the axis
        check = shoot_from_edge(r, d, pack, 2 * steps, AXIS_STOP / 10)
        ok = not p.collapsed and abs(p.axis_defect) < max(tol, 1e-6)
        ok = ok and not check.collapsed and abs(check.axis_defect) < confirm_tol
        (accepted if ok else rejected).append(p)
    if return_rejected:
        return accepted, rejected
    return accepted


# ---------------------------------------------------------------------------
# lifting to grids


def _lift(profile: ConeProfile, radius, theta):
    g, dg = profile.evaluate(theta)
    return radius * g, g, dg


def cone_meridian_field(profile: ConeProfile, n: int, half_width: float = 1.0, height=(0.0, 1.0)) -> ScalarField:
    """w on the meridian plane: axis 0 is the signed distance tau to the axis, axis 1 is x_d."""
    f = ScalarField.on_box(lambda tau, z: np.zeros_like(tau), (-half_width, height[0]), (half_width, height[1]), (n, n))
    tau, z = f.coords()
    r = np.hypot(tau, z)
    if np.any(r < 1e-12):
        raise DomainError("the grid touches the cone vertex")
    theta = np.arctan2(np.abs(tau), z)
    w, _, _ = _lift(profile, r, theta)
    return f.with_values(np.maximum(w, 0.0), s=profile.s, kind="cone-meridian", d=profile.d, theta0=profile.theta0)


def cone_to_field(profile: ConeProfile, lower, upper, shape) -> ScalarField:
    """w(x) = |x| g(theta(x)) sampled on a 2D (tau, x_d) or 3D (x_1, x_2, x_d) box avoiding the origin."""
    lower = tuple(float(v) for v in lower)
    upper = tuple(float(v) for v in upper)
    if len(shape) not in (2, 3):
        raise DomainError("cone_to_field supports grids in 2 or 3 dimensions")
    f = ScalarField.on_box(lambda *x: np.zeros_like(x[0]), lower, upper, shape)
    X = f.coords()
    tau = np.sqrt(sum(c * c for c in X[:-1]))
    z = X[-1]
    r = np.hypot(tau, z)
    if np.min(r) < 0.5 * max(f.spacing):
        raise DomainError("the grid touches the cone vertex")
    w, _, _ = _lift(profile, r, np.arctan2(tau, z))
    return f.with_values(np.maximum(w, 0.0), s=profile.s, kind="cone", d=profile.d, theta0=profile.theta0)


def axisymmetric_residual(field: ScalarField, d: int, s: float, floor: float = 0.0):
    """Delta_d w - (s/2)(1 - |grad w|**2)/w on a meridian field (tau, x_d), tau symmetric about 0.

    Delta_d w = w_tautau + (d-2) w_tau / tau + w_zz, with w_tau/tau -> w_tautau on the axis.
    Nodes whose 5-point stencil touches {w <= floor} are NaN.
    """
    v = field.values
    ht, hz = field.spacing
    tau = field.coords()[0]
    res = np.full(v.shape, np.nan)
    c = (slice(1, -1), slice(1, -1))
    wt = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * ht)
    wz = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * hz)
    wtt = (v[2:, 1:-1] - 2 * v[c] + v[:-2, 1:-1]) / ht**2
    wzz = (v[1:-1, 2:] - 2 * v[c] + v[1:-1, :-2]) / hz**2
    t = tau[c]
    on_axis = np.abs(t) < 0.5 * ht
    with np.errstate(divide="ignore", invalid="ignore"):
        radial = np.where(on_axis, wtt, wt / np.where(on_axis, 1.0, t))
        lap = wtt + (d - 2) * radial + wzz
        r = lap - 0.5 * s * (1 - wt**2 - wz**2) / v[c]
    live = (v[c] > floor) & (v[2:, 1:-1] > floor) & (v[:-2, 1:-1] > floor) & (v[1:-1, 2:] > floor) & (v[1:-1, :-2] > floor)
    res[c] = np.where(live, r, np.nan)
    return res


def profile_curvature_A2(profile: ConeProfile, theta=None):
    """A^2 of the lifted field on the unit sphere, from (g, g', g'').

    The Hessian of w = r g is diag(0, g'' + g, g + g' cot(theta) x (d-2)) in the
    frame (e_r, e_theta, azimuthal directions), so with q = g**2 + g'**2
    A^2 = (g'' + g)**2 g**2 / q**2 + (d-2) (g + g' cot(theta))**2 / q.
    On the axis the azimuthal entry equals g'' + g.
    """
    if theta is None:
        theta, g, dg, ddg = profile.theta, profile.g, profile.dg, profile.ddg()
    else:
        theta = np.asarray(theta, float)
        g, dg = profile.evaluate(theta)
        ddg = np.empty_like(g)
        inner = g > 0
        ddg[inner] = cone_ode_rhs(theta[inner], g[inner], dg[inner], profile.d, profile.s)
        ddg[~inner] = (profile.d - 2) / np.tan(profile.theta0) / (1.0 + profile.s)
    q = g * g + dg * dg
    a = ddg + g
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(theta > 0, g + dg / np.tan(np.where(theta > 0, theta, 1.0)), a)
    return a * a * g * g / q**2 + (profile.d - 2) * b * b / q
