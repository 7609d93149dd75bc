"""Hodograph transform, the weighted quasilinear Neumann problem and its probes.

Near a flat regular free-boundary point the hodograph h(x', y) inverts
y = w(x', x_d) in the last variable.  h solves div(x_d**s DF(grad h)) = 0 on
a half box with the weighted Neumann condition x_d**s DF(grad h) . e_d = 0 at
x_d = 0, where F(p) = (|p|**2 + 1) / p_d.

The discrete problem is P1 finite elements on the Kuhn triangulation of the
grid (each cell cut into d! simplices); simplex weights int_T x_d**s are
exact, so the bottom condition is natural.  The nodal residual is
-(dE/dphi_i) / (nodal area), which makes summation by parts exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import PchipInterpolator
from scipy.special import beta as beta_fn, roots_jacobi

from .errors import AltPhillipsError, DomainError, NonMonotoneColumnError, ShapeError, SingularJacobianError
from .fields import ScalarField, column_moments

__all__ = [
    "FluxFunction",
    "HodographField",
    "EllipticityError",
    "NewtonConfig",
    "NewtonResult",
    "ProbeTable",
    "forward_hodograph",
    "derivative_dictionary",
    "inverse_dictionary",
    "quasilinear_residual",
    "weighted_energy",
    "solve_quasilinear",
    "weighted_ode_average",
    "regularity_probe",
]


class EllipticityError(AltPhillipsError, ValueError):
    """A gradient left the ball B_eta(e_d) on which F is uniformly convex."""


# ---------------------------------------------------------------------------
# the flux function


@dataclass(frozen=True)
class FluxFunction:
    """F(p) = (|p|**2 + 1) / p_d with its derivatives; p has shape (d, ...)."""

    radius: float = 0.25  # ellipticity ball B_radius(e_d)

    @staticmethod
    def value(p):
        p = np.asarray(p, float)
        return (np.sum(p**2, axis=0) + 1.0) / p[-1]

    @staticmethod
    def grad(p):
        p = np.asarray(p, float)
        pd = p[-1]
        out = 2.0 * p / pd
        out[-1] -= (1.0 + np.sum(p**2, axis=0)) / pd**2
        return out

    @staticmethod
    def hess(p):
        p = np.asarray(p, float)
        d = p.shape[0]
        pd = p[-1]
        q = 1.0 + np.sum(p**2, axis=0)
        H = np.zeros((d, d) + p.shape[1:])
        for i in range(d):
            H[i, i] += 2.0 / pd
        for i in range(d):
            H[i, -1] -= 2.0 * p[i] / pd**2
            H[-1, i] -= 2.0 * p[i] / pd**2
        H[-1, -1] += 2.0 * q / pd**3
        return H

    def in_ball(self, p) -> np.ndarray:
        p = np.array(p, float)
        p[-1] -= 1.0
        return np.sqrt(np.sum(p**2, axis=0)) < self.radius

    def ellipticity_bounds(self, d: int = 2, samples: int = 4000, seed: int = 0) -> tuple:
        """(lambda, Lambda): extreme eigenvalues of D2F over the ball (sampled, boundary included)."""
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(d, samples))
        v /= np.linalg.norm(v, axis=0)
        r = self.radius * np.concatenate([np.ones(samples // 2), rng.uniform(0, 1, samples - samples // 2) ** (1 / d)])
        p = v * r
        p[-1] += 1.0
        H = np.moveaxis(self.hess(p), -1, 0)
        ev = np.linalg.eigvalsh(H)
        return float(ev.min()), float(ev.max())


# ---------------------------------------------------------------------------
# hodograph fields


@dataclass(frozen=True)
class HodographField:
    """Samples of h over a half box {x_d in [0, H]} with the weight exponent s."""

    field: ScalarField
    s: float
    meta: dict = dc_field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.s > -1:
            raise DomainError("the weight exponent s must exceed -1")

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def gradient_range(self) -> np.ndarray:
        """Bounding box of the simplex gradients, shape (d, 2)."""
        g = _Mesh.of(self.field).gradients(self.field.values.ravel())
        return np.stack([g.min(axis=1), g.max(axis=1)], axis=1)

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.field.values, axis=-1) > 0))

    def admissible(self, flux: FluxFunction | None = None) -> bool:
        flux = flux or FluxFunction()
        g = _Mesh.of(self.field).gradients(self.field.values.ravel())
        return bool(np.all(flux.in_ball(g)))


def forward_hodograph(w: ScalarField, levels: int | None = None) -> HodographField:
    """Invert y = w(x', x_d) column by column with monotone cubic interpolation.

    In a column that touches {w = 0} the root of level 0 is located by linear
    continuation from the positive side (as in extract_free_boundary); the
    part of the column below it is ignored.  The levels are uniform on
    [y_lo, y_hi], the largest range every column covers.
    """
    v = np.asarray(w.values, float)
    nd = v.shape[-1]
    z = w.axes()[-1]
    cols = v.reshape(-1, nd)
    inverses = []
    lows, highs = [], []
    for j, col in enumerate(cols):
        zero = np.flatnonzero(col <= 0)
        start = int(zero[-1]) + 1 if zero.size else 0
        if start >= nd - 1:
            raise NonMonotoneColumnError(j)
        ys = col[start:]
        xs = z[start:]
        if np.any(np.diff(ys) <= 0):
            raise NonMonotoneColumnError(j)
        if zero.size:
            # crossing by continuation of the first positive segment
            slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
            x0 = xs[0] - ys[0] / slope
            if ys[0] <= 1e-9 * (ys[1] - ys[0]):
                # a node already sits on the crossing (up to round-off)
                ys = np.concatenate([[0.0], ys[1:]])
                xs = np.concatenate([[x0], xs[1:]])
            else:
                ys = np.concatenate([[0.0], ys])
                xs = np.concatenate([[x0], xs])
        inverses.append(PchipInterpolator(ys, xs))
        lows.append(ys[0])
        highs.append(ys[-1])
    y_lo, y_hi = max(lows), min(highs)
    if not y_hi > y_lo:
        raise DomainError("the columns share no common range of levels")
    n = int(levels) if levels is not None else nd
    y = np.linspace(y_lo, y_hi, n)
    h = np.stack([inv(y) for inv in inverses]).reshape(v.shape[:-1] + (n,))
    origin = tuple(w.origin[:-1]) + (float(y_lo),)
    spacing = tuple(w.spacing[:-1]) + ((y_hi - y_lo) / (n - 1),)
    hf = ScalarField(origin, spacing, h, meta={"source": "forward_hodograph"})
    return HodographField(hf, s=float(w.meta.get("s", 0.0)))


def derivative_dictionary(grad, hess=None):
    """Map derivatives of h at y to derivatives of w at (y', h(y)).

    grad has shape (d, ...), hess (d, d, ...).  With i, j < d:
      w_d = 1/h_d,  w_i = -h_i/h_d,  w_dd = -h_dd/h_d**3,
      w_id = -h_id/h_d**2 + h_dd h_i/h_d**3,
      w_ij = -h_ij/h_d + (h_i h_dj + h_j h_di)/h_d**2 - h_dd h_i h_j/h_d**3.
    The relations are an involution, so the same map also sends w-derivatives
    to h-derivatives (see `inverse_dictionary`).
    """
    g = np.asarray(grad, float)
    gd = g[-1]
    if np.any(gd == 0):
        raise SingularJacobianError("h_d vanishes: the hodograph map is not invertible there")
    out_g = -g / gd
    out_g[-1] = 1.0 / gd
    if hess is None:
        return out_g
    H = np.asarray(hess, float)
    d = g.shape[0]
    out_H = np.empty_like(H)
    hdd = H[-1, -1]
    out_H[-1, -1] = -hdd / gd**3
    for i in range(d - 1):
        v = -H[i, -1] / gd**2 + hdd * g[i] / gd**3
        out_H[i, -1] = v
        out_H[-1, i] = v
        for j in range(d - 1):
            out_H[i, j] = (
                -H[i, j] / gd + (g[i] * H[-1, j] + g[j] * H[-1, i]) / gd**2 - hdd * g[i] * g[j] / gd**3
            )
    return out_g, out_H


def inverse_dictionary(grad, hess=None):
    """Derivatives of w at x mapped to derivatives of h at (x', w(x))."""
    return derivative_dictionary(grad, hess)


# ---------------------------------------------------------------------------
# P1 simplices on the Kuhn triangulation


def _simplex_weight_means(z0: np.ndarray, h: float, n_low: int, d: int, s: float) -> np.ndarray:
    """Mean of x_d**s over a Kuhn simplex with n_low vertices at height z0, the rest at z0 + h.

    The aggregated barycentric weight of the upper vertices is Beta(d+1-n_low, n_low)
    distributed, so the mean is E[(z0 + h B)**s]; closed form at z0 = 0, Gauss-Jacobi
    otherwise (the integrand is analytic there since z0 >= h).
    """
    a, b = d + 1 - n_low, n_low
    out = np.empty(z0.shape)
    zero = z0 <= 0
    out[zero] = h**s * beta_fn(a + s, b) / beta_fn(a, b)
    x, wts = roots_jacobi(24, b - 1, a - 1)  # weight (1-x)^(b-1) (1+x)^(a-1)
    B = 0.5 * (1 + x)
    wts = wts / wts.sum()
    zz = z0[~zero][:, None]
    out[~zero] = ((zz + h * B[None, :]) ** s) @ wts
    return out


class _Mesh:
    """Kuhn triangulation of a uniform grid with P1 gradient operators."""

    _cache: dict = {}

    def __init__(self, origin, spacing, shape):
        self.origin = tuple(float(o) for o in origin)
        self.spacing = tuple(float(h) for h in spacing)
        self.shape = tuple(int(n) for n in shape)
        d = len(shape)
        if d < 2:
            raise ShapeError("the hodograph problem needs d >= 2")
        self.d = d
        idx = np.arange(int(np.prod(shape))).reshape(shape)
        base = idx[tuple(slice(0, -1) for _ in range(d))]
        verts, grads, vols, lows = [], [], [], []
        for perm in itertools.permutations(range(d)):
            corner = np.zeros(d, int)
            path = [corner.copy()]
            for ax in perm:
                corner[ax] += 1
                path.append(corner.copy())
            path = np.array(path)  # (d+1, d) offsets
            nodes = np.stack(
                [idx[tuple(slice(o, n - 1 + o) for o, n in zip(off, shape))].ravel() for off in path], axis=1
            )
            X = path * np.array(self.spacing)
            E = (X[1:] - X[0]).T  # columns are edge vectors
            Einv = np.linalg.inv(E)
            G = np.zeros((d, d + 1))  # gradient of the P1 interpolant from vertex values
            G[:, 1:] = Einv.T
            G[:, 0] = -Einv.T.sum(axis=1)
            verts.append(nodes)
            grads.append(np.broadcast_to(G, (nodes.shape[0], d, d + 1)))
            vols.append(np.full(nodes.shape[0], abs(np.linalg.det(E)) / math.factorial(d)))
            lows.append(np.full(nodes.shape[0], int(np.sum(path[:, -1] == 0))))
        self.verts = np.concatenate(verts)  # (nT, d+1)
        self.G = np.concatenate(grads)  # (nT, d, d+1)
        self.vol = np.concatenate(vols)
        self.n_low = np.concatenate(lows)
        zbase = self.origin[-1] + self.spacing[-1] * np.unravel_index(base.ravel(), self.shape)[-1]
        self.z0 = np.tile(zbase, math.factorial(d))
        self.size = idx.size
        self._weights = {}
        # lumped nodal area (unweighted): fraction of each simplex volume per vertex
        area = np.zeros(self.size)
        np.add.at(area, self.verts.ravel(), np.repeat(self.vol / (d + 1), d + 1))
        self.area = area

    @classmethod
    def of(cls, field: ScalarField) -> "_Mesh":
        key = (field.origin, field.spacing, field.shape)
        m = cls._cache.get(key)
        if m is None:
            if len(cls._cache) > 16:
                cls._cache.clear()
            m = cls._cache[key] = cls(*key)
        return m

    def weights(self, s: float) -> np.ndarray:
        """int_T x_d**s for every simplex (exact)."""
        w = self._weights.get(s)
        if w is None:
            if self.origin[-1] < 0:
                raise DomainError("the half box must lie in {x_d >= 0}")
            w = np.empty(self.vol.shape)
            for k in np.unique(self.n_low):
                sel = self.n_low == k
                w[sel] = self.vol[sel] * _simplex_weight_means(self.z0[sel], self.spacing[-1], int(k), self.d, s)
            self._weights[s] = w
        return w

    def gradients(self, phi: np.ndarray) -> np.ndarray:
        """(d, nT) simplex gradients of the P1 interpolant of nodal values phi."""
        local = phi[self.verts]  # (nT, d+1)
        return np.einsum("tij,tj->it", self.G, local)


def _bottom_and_dirichlet(shape):
    """Dirichlet nodes: lateral faces and the top; the bottom (x_d = 0) stays free."""
    d = len(shape)
    m = np.zeros(shape, bool)
    for k in range(d - 1):
        sl = [slice(None)] * d
        sl[k] = 0
        m[tuple(sl)] = True
        sl[k] = -1
        m[tuple(sl)] = True
    m[..., -1] = True
    return m


def weighted_energy(h: HodographField | ScalarField, s: float | None = None, flux: FluxFunction | None = None) -> float:
    """Discrete int x_d**s F(grad phi) over the half box (P1, exact simplex weights)."""
    field, s = _unpack(h, s)
    mesh = _Mesh.of(field)
    g = mesh.gradients(field.values.ravel())
    return float(np.sum(mesh.weights(s) * FluxFunction.value(g)))


def _unpack(h, s):
    if isinstance(h, HodographField):
        return h.field, (h.s if s is None else float(s))
    if s is None:
        raise DomainError("the weight exponent s is required for a bare ScalarField")
    return h, float(s)


def _energy_gradient(mesh, W, phi):
    g = mesh.gradients(phi)
    DF = FluxFunction.grad(g)  # (d, nT)
    local = np.einsum("tij,it->tj", mesh.G, DF) * W[:, None]
    out = np.zeros(mesh.size)
    np.add.at(out, mesh.verts.ravel(), local.ravel())
    return out, g


def _energy_hessian(mesh, W, g, free):
    D2 = FluxFunction.hess(g)  # (d, d, nT)
    K = np.einsum("tia,ijt,tjb->tab", mesh.G, D2, mesh.G) * W[:, None, None]
    fidx = -np.ones(mesh.size, dtype=int)
    fidx[free] = np.arange(int(np.count_nonzero(free)))
    r = np.repeat(fidx[mesh.verts], mesh.d + 1, axis=1).ravel()
    c = np.tile(fidx[mesh.verts], (1, mesh.d + 1)).ravel()
    v = K.reshape(K.shape[0], -1).ravel()
    ok = (r >= 0) & (c >= 0)
    n = int(np.count_nonzero(free))
    return sp.csr_matrix((v[ok], (r[ok], c[ok])), shape=(n, n))


def quasilinear_residual(h: HodographField | ScalarField, s: float | None = None, flux: FluxFunction | None = None):
    """(interior residual field, bottom flux trace).

    The residual at node i is -(dE/dphi_i) / area_i, a conservative discrete
    div(x_d**s DF(grad h)); it is reported on nodes not fixed by Dirichlet data
    (interior and bottom) and NaN on the lateral and top faces.  The flux trace
    x_d**s DF(grad h) . e_d is taken from nodal gradients on the first two
    interior layers and extrapolated linearly to x_d = 0.
    """
    field, s = _unpack(h, s)
    flux = flux or FluxFunction()
    mesh = _Mesh.of(field)
    W = mesh.weights(s)
    grad_E, g = _energy_gradient(mesh, W, field.values.ravel())
    if not np.all(flux.in_ball(g)):
        raise EllipticityError(f"gradient range leaves B_{flux.radius}(e_d)")
    res = -grad_E / mesh.area
    res = res.reshape(field.shape)
    res[_bottom_and_dirichlet(field.shape) & ~_bottom_layer(field.shape)] = np.nan
    trace = _flux_trace(field, s)
    return res, trace


def _bottom_layer(shape):
    m = np.zeros(shape, bool)
    m[..., 0] = True
    d = len(shape)
    for k in range(d - 1):
        sl = [slice(None)] * d
        sl[k] = 0
        m[tuple(sl)] = False
        sl[k] = -1
        m[tuple(sl)] = False
    return m


def _flux_trace(field: ScalarField, s: float) -> np.ndarray:
    v = field.values
    d = field.dim
    hs = field.spacing
    z = field.axes()[-1]
    out = []
    for layer in (1, 2):
        g = []
        for k in range(d):
            g.append(np.gradient(v, hs[k], axis=k, edge_order=2)[..., layer])
        p = np.stack(g)
        out.append(z[layer] ** s * FluxFunction.grad(p)[-1])
    z1, z2 = z[1], z[2]
    z0 = z[0]
    return out[0] + (out[1] - out[0]) * (z0 - z1) / (z2 - z1)


# ---------------------------------------------------------------------------
# Newton solver


@dataclass(frozen=True)
class NewtonConfig:
    max_iters: int = 20
    tolerance: float = 1e-10  # residual max-norm
    armijo_factor: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40

    def __post_init__(self):
        if self.max_iters <= 0 or self.tolerance <= 0:
            raise DomainError("max_iters and tolerance must be positive")


@dataclass
class NewtonResult:
    solution: HodographField
    converged: bool
    iterations: int
    residual_history: list
    energy_history: list
    message: str


def solve_quasilinear(data: ScalarField, s: float, config: NewtonConfig | None = None,
                      flux: FluxFunction | None = None) -> NewtonResult:
    """Damped Newton for the discrete weighted Euler-Lagrange system of int x_d**s F(grad phi).

    `data` fixes the values on the lateral faces and the top; its remaining
    values are the initial guess.  Nothing is imposed at x_d = 0 (natural
    Neumann condition).  Steps are backtracked for the Armijo condition and
    so that every simplex gradient stays in the ellipticity ball.
    """
    cfg = config or NewtonConfig()
    flux = flux or FluxFunction()
    if not s > -1:
        raise DomainError("the weight exponent s must exceed -1")
    mesh = _Mesh.of(data)
    W = mesh.weights(float(s))
    fixed = _bottom_and_dirichlet(data.shape).ravel() & ~_bottom_layer(data.shape).ravel()
    free = ~fixed
    phi = data.values.astype(float).ravel().copy()
    g0 = mesh.gradients(phi)
    if not np.all(flux.in_ball(g0)):
        raise EllipticityError(f"initial gradients leave B_{flux.radius}(e_d)")

    def energy(x):
        return float(np.sum(W * flux.value(mesh.gradients(x))))

    E = energy(phi)
    res_hist, e_hist = [], [E]
    converged = False
    message = "max_iters reached"
    it = 0
    while True:
        gE, g = _energy_gradient(mesh, W, phi)
        r = float(np.max(np.abs(gE[free] / mesh.area[free])))
        res_hist.append(r)
        if r <= cfg.tolerance:
            converged, message = True, "residual below tolerance"
            break
        if it >= cfg.max_iters:
            break
        H = _energy_hessian(mesh, W, g, free)
        step = spla.spsolve(H.tocsc(), -gE[free])
        slope = float(gE[free] @ step)
        alpha = 1.0
        ok = False
        for _ in range(cfg.max_backtracks):
            trial = phi.copy()
            trial[free] += alpha * step
            gt = mesh.gradients(trial)
            if np.all(flux.in_ball(gt)):
                Et = float(np.sum(W * flux.value(gt)))
                # near the minimum the energy decrease drowns in round-off; accept full steps there
                if Et <= E + cfg.armijo_factor * alpha * slope or (alpha == 1.0 and abs(Et - E) <= 1e-14 * abs(E)):
                    ok = True
                    break
            alpha *= cfg.backtrack
        it += 1
        if not ok:
            message = "step could not be kept inside the ellipticity ball with energy decrease"
            break
        phi, E = trial, Et
        e_hist.append(E)
    sol = HodographField(data.with_values(phi.reshape(data.shape)), float(s),
                         meta={"newton_iterations": it})
    return NewtonResult(sol, converged, it, res_hist, e_hist, message)


# ---------------------------------------------------------------------------
# weighted ODE primitive


def weighted_ode_average(f: ScalarField, s: float) -> ScalarField:
    """phi(x', x_d) = x_d**(-s) int_0^{x_d} t**s f(x', t) dt, column-exact for f piecewise linear in x_d.

    phi vanishes at x_d = 0, where its x_d-derivative is f(x', 0) / (1 + s).
    """
    if not s > -1:
        raise DomainError("the weight exponent s must exceed -1")
    if abs(f.origin[-1]) > 1e-14 * max(1.0, f.spacing[-1]):
        raise DomainError("f must be sampled down to x_d = 0")
    v = np.asarray(f.values, float)
    z = f.axes()[-1]
    z[0] = 0.0
    a, b = z[:-1], z[1:]
    m0, m1 = column_moments(a, b, s)
    hseg = b - a
    fa, fb = v[..., :-1], v[..., 1:]
    # int_a^b t**s f with f linear from fa to fb
    seg = fa * (b * m0 - m1) / hseg + fb * (m1 - a * m0) / hseg
    cum = np.concatenate([np.zeros(v.shape[:-1] + (1,)), np.cumsum(seg, axis=-1)], axis=-1)
    phi = np.empty_like(v)
    phi[..., 1:] = cum[..., 1:] / z[1:] ** s
    phi[..., 0] = 0.0
    return f.with_values(phi)


# ---------------------------------------------------------------------------
# regularity probe


@dataclass(frozen=True)
class ProbeTable:
    alpha: float
    scales: np.ndarray
    c1_alpha: np.ndarray  # gradient Hoelder quotients at each scale
    second_difference: np.ndarray  # |f(x+e)-2f(x)+f(x-e)| / |e|**(1+alpha)
    flagged: bool

    def rows(self):
        return [
            {"scale": float(r), "c1_alpha": float(a), "second_difference": float(b)}
            for r, a, b in zip(self.scales, self.c1_alpha, self.second_difference)
        ]


def _offsets(r, spacing, budget: int = 24):
    """Integer offsets with length in [r/2, r] (one of each +-pair), thinned to about budget per axis."""
    m = [int(np.floor(r / h + 1e-9)) for h in spacing]
    step = max(1, max(m) // budget)
    rng = [np.arange(-mk, mk + 1, step) for mk in m]
    out = []
    for off in itertools.product(*rng):
        if off <= tuple(0 for _ in off):
            continue
        L = float(np.linalg.norm(np.asarray(off) * np.asarray(spacing)))
        if 0.5 * r <= L <= r:
            out.append(off)
    return out


def _shift_slices(off, shape):
    a, b = [], []
    for o, n in zip(off, shape):
        if abs(o) >= n:
            return None, None
        a.append(slice(max(0, -o), n - max(0, o)))
        b.append(slice(max(0, o), n - max(0, -o)))
    return tuple(a), tuple(b)


def regularity_probe(field: ScalarField, alpha: float = 0.5, center=None, levels: int | None = None,
                     growth: float = 1.5, radius: float | None = None) -> ProbeTable:
    """Dyadic table of C^{1,alpha} quotients around a bottom-boundary point.

    At scale r_k = R 2**(-k) (R defaults to a quarter of the shortest box side) the quotients are taken over node pairs in the
    window |x - center| <= 2 r_k whose distance lies in [r_k/2, r_k].  A table
    whose last entry exceeds `growth` times its smallest entry is flagged.
    """
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    v = np.asarray(field.values, float)
    d = field.dim
    X = np.stack([c.ravel() for c in field.coords()], axis=1)
    if center is None:
        center = [0.5 * (lo + hi) for lo, hi in zip(field.origin, field.extent)]
        center[-1] = field.origin[-1]
    center = np.asarray(center, float)
    grad_grids = [np.gradient(v, field.spacing[k], axis=k, edge_order=2) for k in range(d)]
    grads = np.stack([g.ravel() for g in grad_grids], axis=1)
    h = max(field.spacing)
    R = 0.25 * min(hi - lo for lo, hi in zip(field.origin, field.extent)) if radius is None else float(radius)
    nmax = int(np.floor(np.log2(R / (4 * h)) + 1e-9)) + 1
    n = nmax if levels is None else min(int(levels), nmax)
    if n < 2:
        raise DomainError("grid too coarse for a dyadic table")
    scales, c1, c2 = [], [], []
    dist_c = np.linalg.norm(X - center, axis=1)
    for k in range(n):
        r = R * 2.0**-k
        inside = (dist_c <= 2 * r).reshape(v.shape)
        c1_k = 0.0
        for off in _offsets(r, field.spacing):
            a_sl, b_sl = _shift_slices(off, v.shape)
            if a_sl is None:
                continue
            both = inside[a_sl] & inside[b_sl]
            if not np.any(both):
                continue
            dist = float(np.linalg.norm(np.asarray(off) * np.asarray(field.spacing)))
            dg = np.sqrt(sum((gk[a_sl] - gk[b_sl]) ** 2 for gk in grad_grids))
            c1_k = max(c1_k, float(dg[both].max()) / dist**alpha)
        c1.append(c1_k)
        # second differences along the axes with step ~ r/2 (rounded to the grid)
        best = 0.0
        for ax in range(d):
            m = max(1, int(round(0.5 * r / field.spacing[ax])))
            e = m * field.spacing[ax]
            sl_c = [slice(None)] * d
            sl_p = [slice(None)] * d
            sl_m = [slice(None)] * d
            sl_c[ax] = slice(m, -m)
            sl_p[ax] = slice(2 * m, None)
            sl_m[ax] = slice(0, -2 * m)
            if v.shape[ax] <= 2 * m:
                continue
            dd = np.abs(v[tuple(sl_p)] - 2 * v[tuple(sl_c)] + v[tuple(sl_m)]) / e ** (1 + alpha)
            cc = np.stack([c[tuple(sl_c)] for c in field.coords()], axis=-1)
            near = np.linalg.norm(cc - center, axis=-1) <= 2 * r
            if np.any(near):
                best = max(best, float(dd[near].max()))
        c2.append(best)
        scales.append(r)
    c1a = np.asarray(c1)
    floor = max(float(np.min(c1a)), 1e-12 * max(1.0, float(np.max(np.abs(grads)))))
    flagged = bool(c1a[-1] > growth * floor) and float(np.max(c1a)) > 1e-10
    return ProbeTable(float(alpha), np.asarray(scales), c1a, np.asarray(c2), flagged)
