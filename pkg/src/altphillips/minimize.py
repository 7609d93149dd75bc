"""Discrete Alt-Phillips energies and a projected Newton-type minimizer.

The minimizer works with w = beta * u**(1/beta), for which the energy density
w**s (|grad w|**2 + 1) 1_{w>0} is integrable for every s > -1.  The discrete
objective is a sum over the vertical grid segments (see `_SegmentEnergy`):
the weight w**s is integrated exactly along x_d on the linear reconstruction,
with the crossing in a cut segment placed by linear continuation.  In 1D E_h
is the exact energy of a continuous piecewise-linear reconstruction, so a
translated one-dimensional profile is reproduced to solver accuracy.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError
from .exponents import ExponentPack, u_to_w
from .fields import (
    ScalarField,
    cell_gradient,
    cell_mean,
    gradient,
    power_mean,
    power_mean_derivatives,
    signed_extension,
    weight_masses,
    weight_nodes,
)

__all__ = [
    "EnergyBreakdown",
    "DescentConfig",
    "DescentResult",
    "energy_J",
    "energy_E",
    "discrete_energy",
    "minimize_projected",
    "stationarity_residual",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    potential: float
    total: float

    @classmethod
    def of(cls, dirichlet: float, potential: float) -> "EnergyBreakdown":
        return cls(float(dirichlet), float(potential), float(dirichlet) + float(potential))


@dataclass(frozen=True)
class DescentConfig:
    max_iters: int = 4000
    step: float = 1.0
    armijo_factor: float = 1e-4
    snap_tolerance: float | None = None  # None: 1.5 times the largest spacing
    stop_tolerance: float = 1e-13
    backtrack: float = 0.5
    max_sweeps: int = 5000

    def __post_init__(self):
        if self.max_iters <= 0 or self.step <= 0:
            raise DomainError("max_iters and step must be positive")
        if not 0 < self.armijo_factor < 1 or not 0 < self.backtrack < 1:
            raise DomainError("armijo_factor and backtrack must lie in (0, 1)")
        if self.snap_tolerance is not None and self.snap_tolerance < 0:
            raise DomainError("snap_tolerance must be non-negative")


@dataclass
class DescentResult:
    field: ScalarField
    energy_trace: list
    converged: bool
    iterations: int
    message: str
    snapped: int = 0
    reactivated: int = 0
    residual: float = float("nan")
    meta: dict = dc_field(default_factory=dict)

    @property
    def energy(self) -> float:
        return self.energy_trace[-1]


# ---------------------------------------------------------------------------
# reporting energies


def _require_nonneg(field: ScalarField, name: str):
    if np.any(field.values < 0):
        raise DomainError(f"{name} must be non-negative")


def energy_E(w: ScalarField, pack: ExponentPack) -> EnergyBreakdown:
    """int w**s (|grad w|**2 + 1) over {w > 0}.

    Uses the node-weight rule `fields.weight_nodes` (exact along x_d for w and
    the integrand linear there, crossing placed by linear continuation) with
    nodal gradients taken inside {w > 0}.
    """
    _require_nonneg(w, "w")
    if not np.any(w.values > 0):
        return EnergyBreakdown.of(0.0, 0.0)
    Om = weight_nodes(w, pack.s)
    g2 = np.sum(gradient(w, mask=w.values > 0) ** 2, axis=0)
    live = Om != 0
    return EnergyBreakdown.of(np.sum(Om[live] * g2[live]), np.sum(Om[live]))


def energy_J(u: ScalarField, pack: ExponentPack) -> EnergyBreakdown:
    """int |grad u|**2 + u**gamma 1_{u>0} with midpoint cells.

    Cells with every corner positive use the cell gradient and (cell mean u)**gamma.
    For gamma < 0, cells touching {u = 0} are evaluated in the w variable, using
    |grad u|**2 + u**gamma = beta**(-s) w**s (|grad w|**2 + 1).
    """
    _require_nonneg(u, "u")
    vals = u.values
    if not np.any(vals > 0):
        return EnergyBreakdown.of(0.0, 0.0)
    V = u.cell_volume
    corners = [vals[sl] for _, sl in _corners(u.dim)]
    all_pos = np.logical_and.reduce([c > 0 for c in corners])
    any_pos = np.logical_or.reduce([c > 0 for c in corners])
    cut = any_pos & ~all_pos
    grad_u = cell_gradient(vals, u.spacing)
    g2u = np.sum(grad_u**2, axis=0)
    mean_u = cell_mean(vals)
    with np.errstate(divide="ignore", invalid="ignore"):
        pot_full = np.where(all_pos, V * mean_u**pack.gamma, 0.0)
    dirichlet = np.sum(V * g2u[all_pos])
    potential = np.sum(pot_full[all_pos])
    if np.any(cut):
        if pack.gamma < 0:
            w = u.with_values(u_to_w(vals, pack))
            masses = weight_masses(w, pack.s)
            g2w = np.sum(cell_gradient(signed_extension(w), w.spacing) ** 2, axis=0)
            scale = pack.beta ** (-pack.s)
            dirichlet += scale * np.sum((masses * g2w)[cut])
            potential += scale * np.sum(masses[cut])
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                pw = [np.where(c > 0, c**pack.gamma, 0.0) for c in corners]
            dirichlet += np.sum(V * g2u[cut])
            potential += np.sum((V * sum(pw) / len(pw))[cut])
    return EnergyBreakdown.of(dirichlet, potential)


# ---------------------------------------------------------------------------
# the discrete objective with analytic derivatives


def _corners(d):
    for corner in itertools.product((0, 1), repeat=d):
        yield corner, tuple(slice(c, None if c else -1) for c in corner)


def _transverse_trapezoid(shape, spacing):
    w = np.ones(shape)
    for k in range(len(shape) - 1):
        t = np.full(shape[k], spacing[k])
        t[0] = t[-1] = 0.5 * spacing[k]
        sh = [1] * len(shape)
        sh[k] = shape[k]
        w = w * t.reshape(sh)
    return w


_REACH = 2.0


class _SegmentEnergy:
    """Assembly helper for E_h on a fixed grid geometry.

    E_h = sum over vertical segments (lo, hi) of  omega * M * (1 + D**2 + T)

    omega is the trapezoid weight across, M the exact integral of w**s along the
    segment, D the vertical slope and T the mean of squared transverse one-sided
    differences at both ends.  A segment from a zero node to a positive node
    places the crossing by continuing w linearly from the next segment; M and D
    then use that continued slope, so E_h equals the energy of a continuous
    piecewise-linear reconstruction whose front may sit anywhere inside a cell.
    """

    def __init__(self, shape, spacing, s):
        self.shape = tuple(shape)
        self.spacing = tuple(float(h) for h in spacing)
        self.s = float(s)
        d = len(shape)
        self.d = d
        self.size = int(np.prod(shape))
        idx = np.arange(self.size).reshape(shape)
        self.lo = idx[..., :-1].ravel()
        self.hi = idx[..., 1:].ravel()
        above = np.full(idx.shape, -1)
        above[..., :-1] = idx[..., 1:]
        below = np.full(idx.shape, -1)
        below[..., 1:] = idx[..., :-1]
        self.above_hi = above[..., 1:].ravel()
        self.below_lo = below[..., :-1].ravel()
        self.omega = _transverse_trapezoid(shape, spacing)[..., :-1].ravel()
        # transverse difference pairs (node, neighbour, coefficient)
        pn, pq, pa = [], [], []
        for k in range(d - 1):
            count = np.full(shape, 2.0)
            sl = [slice(None)] * d
            sl[k] = 0
            count[tuple(sl)] = 1.0
            sl[k] = -1
            count[tuple(sl)] = 1.0
            for step in (-1, 1):
                nb = np.roll(idx, -step, axis=k)
                ok = np.ones(shape, bool)
                sl = [slice(None)] * d
                sl[k] = -1 if step == 1 else 0
                ok[tuple(sl)] = False
                nb = np.where(ok, nb, idx)
                coef = np.where(ok, 0.5 / (count * self.spacing[k] ** 2), 0.0)
                for end in (slice(None, -1), slice(1, None)):
                    pn.append(idx[..., end].ravel())
                    pq.append(nb[..., end].ravel())
                    pa.append(coef[..., end].ravel())
        nseg = self.lo.size
        self.pn = np.array(pn, dtype=int).reshape(len(pn), nseg)
        self.pq = np.array(pq, dtype=int).reshape(len(pq), nseg)
        self.pa = np.array(pa, dtype=float).reshape(len(pa), nseg)

    # -- segment classification -------------------------------------------
    def _segments(self, v):
        h = self.spacing[-1]
        a = np.maximum(v[self.lo], 0.0)
        b = np.maximum(v[self.hi], 0.0)
        c = np.where(self.above_hi >= 0, np.maximum(v[np.maximum(self.above_hi, 0)], 0.0), 0.0)
        p = np.where(self.below_lo >= 0, np.maximum(v[np.maximum(self.below_lo, 0)], 0.0), 0.0)
        # continuation is used while the crossing lies within _REACH cells of the
        # positive node; reaching past the zero node keeps E_h smooth where the
        # crossing passes through that node
        up = (a <= 0) & (b > 0) & (self.above_hi >= 0) & (_REACH * (c - b) >= b)
        dn = (b <= 0) & (a > 0) & (self.below_lo >= 0) & (_REACH * (p - a) >= a)
        return h, a, b, c, p, up, dn

    def _T(self, v):
        if self.pn.size == 0:
            return np.zeros(self.lo.size)
        diff = v[self.pq] - v[self.pn]
        return np.sum(self.pa * diff**2, axis=0)

    def _MD(self, v):
        h, a, b, c, p, up, dn = self._segments(v)
        M = h * power_mean(a, b, self.s)
        D = (b - a) / h
        k = 1.0 / (1.0 + self.s)
        with np.errstate(divide="ignore", invalid="ignore"):
            sig_up = (c - b) / h
            sig_dn = (p - a) / h
            M = np.where(up, k * b ** (1 + self.s) / sig_up, M)
            M = np.where(dn, k * a ** (1 + self.s) / sig_dn, M)
        D = np.where(up, sig_up, D)
        D = np.where(dn, -sig_dn, D)
        return M, D

    def energy(self, w):
        v = np.asarray(w, float).ravel()
        M, D = self._MD(v)
        live = M > 0
        T = self._T(v)
        return float(np.sum((self.omega * M * (1 + D**2 + T))[live]))

    def parts(self, w):
        v = np.asarray(w, float).ravel()
        M, D = self._MD(v)
        live = M > 0
        T = self._T(v)
        return (float(np.sum((self.omega * M * (D**2 + T))[live])), float(np.sum((self.omega * M)[live])))

    def derivatives(self, w, free):
        """Gradient (full length) and sparse Hessian restricted to free nodes."""
        v = np.asarray(w, float).ravel()
        s = self.s
        h, a, b, c, p, up, dn = self._segments(v)
        nseg = a.size
        # core slots: lo, hi, ext (ext is above hi for upward cuts, below lo for downward cuts)
        ext = np.where(up, self.above_hi, np.where(dn, self.below_lo, self.lo))
        core = np.stack([self.lo, self.hi, np.maximum(ext, 0)])
        Mg = np.zeros((3, nseg))
        Mh = np.zeros((3, 3, nseg))
        Dg = np.zeros((3, nseg))
        I, Ia, Ib, Iaa, Iab, Ibb = (
            np.nan_to_num(x, nan=0.0, posinf=0.0, neginf=0.0) for x in power_mean_derivatives(a, b, s)
        )
        M = h * I
        Mg[0], Mg[1] = h * Ia, h * Ib
        Mh[0, 0], Mh[0, 1], Mh[1, 0], Mh[1, 1] = h * Iaa, h * Iab, h * Iab, h * Ibb
        D = (b - a) / h
        Dg[0], Dg[1] = -1.0 / h, 1.0 / h
        k = 1.0 / (1.0 + s)
        for mask, x, y, slot_x, sign in ((up, b, c, 1, 1.0), (dn, a, p, 0, -1.0)):
            if not np.any(mask):
                continue
            xm, ym = x[mask], y[mask]
            sig = (ym - xm) / h
            Mx = xm**s / sig + k * xm ** (1 + s) / (sig**2 * h)
            My = -k * xm ** (1 + s) / (sig**2 * h)
            Mxx = s * xm ** (s - 1) / sig + 2 * xm**s / (sig**2 * h) + 2 * k * xm ** (1 + s) / (sig**3 * h**2)
            Mxy = -(xm**s) / (sig**2 * h) - 2 * k * xm ** (1 + s) / (sig**3 * h**2)
            Myy = 2 * k * xm ** (1 + s) / (sig**3 * h**2)
            M[mask] = k * xm ** (1 + s) / sig
            D[mask] = sign * sig
            for arr in (Mg, Dg):
                arr[:, mask] = 0.0
            Mh[:, :, mask] = 0.0
            Mg[slot_x, mask], Mg[2, mask] = Mx, My
            Mh[slot_x, slot_x, mask] = Mxx
            Mh[slot_x, 2, mask] = Mxy
            Mh[2, slot_x, mask] = Mxy
            Mh[2, 2, mask] = Myy
            Dg[slot_x, mask] = -sign / h
            Dg[2, mask] = sign / h
        T = self._T(v)
        live = M > 0
        om = self.omega
        F = 1 + D**2 + T
        grad = np.zeros(self.size)
        for i in range(3):
            gi = np.where(live, om * (Mg[i] * F + M * 2 * D * Dg[i]), 0.0)
            np.add.at(grad, core[i], gi)
        if self.pn.size:
            diff = v[self.pq] - v[self.pn]
            tg = 2 * self.pa * diff * np.where(live, om * M, 0.0)
            np.add.at(grad, self.pq.ravel(), tg.ravel())
            np.add.at(grad, self.pn.ravel(), -tg.ravel())
        fidx = -np.ones(self.size, dtype=int)
        fidx[free] = np.arange(np.count_nonzero(free))
        rows, cols, vals = [], [], []

        def put(ri_nodes, cj_nodes, hv):
            ri, cj = fidx[ri_nodes], fidx[cj_nodes]
            ok = live & (ri >= 0) & (cj >= 0) & (hv != 0)
            rows.append(ri[ok])
            cols.append(cj[ok])
            vals.append(hv[ok])

        for i in range(3):
            for j in range(3):
                hij = om * (Mh[i, j] * F + 2 * D * (Mg[i] * Dg[j] + Mg[j] * Dg[i]) + 2 * M * Dg[i] * Dg[j])
                put(core[i], core[j], hij)
        if self.pn.size:
            for jp in range(self.pn.shape[0]):
                tq = 2 * self.pa[jp] * diff[jp]
                for i in range(3):
                    hv = om * Mg[i] * tq
                    put(core[i], self.pq[jp], hv)
                    put(self.pq[jp], core[i], hv)
                    put(core[i], self.pn[jp], -hv)
                    put(self.pn[jp], core[i], -hv)
                hv = om * M * 2 * self.pa[jp]
                put(self.pq[jp], self.pq[jp], hv)
                put(self.pn[jp], self.pn[jp], hv)
                put(self.pq[jp], self.pn[jp], -hv)
                put(self.pn[jp], self.pq[jp], -hv)
        nf = int(np.count_nonzero(free))
        H = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nf, nf)
        )
        return grad, H


def discrete_energy(w: ScalarField, pack: ExponentPack) -> EnergyBreakdown:
    """The minimizer's objective E_h split into weighted Dirichlet and potential parts."""
    _require_nonneg(w, "w")
    dirichlet, potential = _SegmentEnergy(w.shape, w.spacing, pack.s).parts(w.values)
    return EnergyBreakdown.of(dirichlet, potential)


def stationarity_residual(w: ScalarField, pack: ExponentPack, floor: float) -> np.ndarray:
    """|Delta w - (s/2)(1 - |grad w|**2)/w| at nodes whose full stencil sits in {w > floor}."""
    v = w.values
    d = w.dim
    inside = v > floor
    core = inside.copy()
    lap = np.zeros_like(v)
    g2 = np.zeros_like(v)
    for k in range(d):
        h = w.spacing[k]
        up = np.roll(v, -1, axis=k)
        dn = np.roll(v, 1, axis=k)
        lap += (up - 2 * v + dn) / h**2
        g2 += ((up - dn) / (2 * h)) ** 2
        edge = np.zeros_like(inside)
        sl_lo = [slice(None)] * d
        sl_hi = [slice(None)] * d
        sl_lo[k], sl_hi[k] = 0, -1
        edge[tuple(sl_lo)] = True
        edge[tuple(sl_hi)] = True
        core &= ~edge & (np.roll(inside, -1, axis=k)) & (np.roll(inside, 1, axis=k))
    with np.errstate(divide="ignore", invalid="ignore"):
        res = lap - 0.5 * pack.s * (1 - g2) / v
    return np.where(core, np.abs(res), np.nan)


# ---------------------------------------------------------------------------
# projected minimizer


def _boundary_mask(shape):
    m = np.zeros(shape, bool)
    for k in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[k] = 0
        m[tuple(sl)] = True
        sl[k] = -1
        m[tuple(sl)] = True
    return m


def _neighbour_any(mask):
    out = np.zeros_like(mask)
    for k in range(mask.ndim):
        out |= np.roll(mask, 1, axis=k) & _not_wrapped(mask.shape, k, 1)
        out |= np.roll(mask, -1, axis=k) & _not_wrapped(mask.shape, k, -1)
    return out


def _not_wrapped(shape, k, step):
    ok = np.ones(shape, bool)
    sl = [slice(None)] * len(shape)
    sl[k] = 0 if step == 1 else -1
    ok[tuple(sl)] = False
    return ok


def _newton_direction(grad_f, H, mu0=0.0):
    """Solve (H + mu D) p = -g with the smallest tried mu that yields a descent direction.

    The search starts one decade below the shift accepted last time (`mu0`);
    returns (p, slope, mu).
    """
    diag = np.abs(H.diagonal())
    diag[diag == 0] = 1.0
    D = sp.diags(diag)
    gnorm = np.linalg.norm(grad_f)
    mu = 0.0 if mu0 < 1e-6 else mu0 / 10
    for _ in range(14):
        A = (H + mu * D).tocsc() if mu else H.tocsc()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", spla.MatrixRankWarning)
                p = spla.spsolve(A, -grad_f, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError:
            p = None
        if p is not None and np.all(np.isfinite(p)):
            slope = float(grad_f @ p)
            if slope < -1e-12 * gnorm * np.linalg.norm(p):
                return p, slope, mu
        mu = 1e-6 if mu == 0 else mu * 10
    p = -grad_f / diag
    return p, float(grad_f @ p), mu


def minimize_projected(
    initial: ScalarField,
    pack: ExponentPack,
    config: DescentConfig | None = None,
    boundary: ScalarField | np.ndarray | None = None,
) -> DescentResult:
    """Minimize E_h over w >= 0 with the values on the box faces held fixed.

    `boundary` supplies the face data (defaults to the faces of `initial`).
    Each sweep runs damped Newton steps on the currently positive interior
    nodes: a projected step (components driven below zero land on zero) is
    tried first, then steps kept inside {w > 0}, all with Armijo backtracking.
    Then the front moves: the layer of small values next to the zero set is
    snapped to zero, or the layer of zero nodes next to the positive set is
    re-activated, and the move is kept only if the energy after re-relaxation
    is lower.  Single-node snaps without relaxation are tried last.  Finally
    zero nodes lying under a continued cut segment receive the continued value
    when that leaves E_h unchanged.  Accepted energies never increase.
    """
    cfg = config or DescentConfig()
    _require_nonneg(initial, "initial")
    w0 = initial.values.astype(float).copy()
    fixed = _boundary_mask(w0.shape)
    if boundary is not None:
        bvals = boundary.values if isinstance(boundary, ScalarField) else np.asarray(boundary, float)
        if np.any(bvals[fixed] < 0):
            raise DomainError("boundary data must be non-negative")
        w0[fixed] = bvals[fixed]
    snap = cfg.snap_tolerance if cfg.snap_tolerance is not None else 1.5 * max(initial.spacing)
    model = _SegmentEnergy(w0.shape, initial.spacing, pack.s)
    fixed_flat = fixed.reshape(-1)
    state = {"iters": 0, "mu": 0.0}

    def energy(flat):
        return model.energy(flat.reshape(w0.shape))

    def relax(flat, E, budget):
        """Damped Newton on the positive interior nodes; returns (flat, E, trace)."""
        flat = flat.copy()
        trace = []
        used = 0
        while used < budget and state["iters"] < cfg.max_iters:
            free = (~fixed_flat) & (flat > 0)
            if not np.any(free):
                break
            g_full, H = model.derivatives(flat.reshape(w0.shape), free)
            gf = g_full[free]
            if not np.all(np.isfinite(gf)):
                break
            p, slope, state["mu"] = _newton_direction(gf, H, state["mu"])
            cur = flat[free]
            accepted = False
            # projected steps first: components driven below zero land on zero
            alpha = cfg.step
            if np.any(cur + alpha * p < 0):
                for _ in range(3):
                    trial = flat.copy()
                    trial[free] = np.maximum(cur + alpha * p, 0.0)
                    Et = energy(trial)
                    if np.isfinite(Et) and Et <= E + cfg.armijo_factor * float(gf @ (trial[free] - cur)):
                        accepted = True
                        break
                    alpha *= cfg.backtrack
            if not accepted:
                neg = p < 0
                alpha = cfg.step
                if np.any(neg):
                    alpha = min(alpha, 0.95 * float(np.min(-cur[neg] / p[neg])))
                for _ in range(60):
                    trial = flat.copy()
                    trial[free] = cur + alpha * p
                    Et = energy(trial)
                    if np.isfinite(Et) and Et <= E + cfg.armijo_factor * alpha * slope:
                        accepted = True
                        break
                    alpha *= cfg.backtrack
            used += 1
            state["iters"] += 1
            if not accepted:
                break
            dE = E - Et
            flat, E = trial, Et
            trace.append(E)
            if dE <= cfg.stop_tolerance * max(abs(E), 1.0):
                break
        return flat, E, trace

    flat = w0.reshape(-1).copy()
    E = energy(flat)
    trace = [E]
    snapped = reactivated = 0
    if not np.any((~fixed_flat) & (flat > 0)) and not np.any(flat[fixed_flat] > 0):
        return DescentResult(initial.with_values(w0), trace, True, 1, "zero data and zero initial state",
                             residual=0.0, meta={"snap_tolerance": snap})
    converged = False
    message = "max_iters reached"
    relax_budget = 200
    for _ in range(cfg.max_sweeps):
        flat, E, seg = relax(flat, E, relax_budget)
        trace.extend(seg)
        if state["iters"] >= cfg.max_iters:
            break
        w = flat.reshape(w0.shape)
        pos = w > 0
        zero_interior = (~pos) & (~fixed)
        moved = False
        # move 1: snap the front layer of small values, then re-relax
        front = pos & (~fixed) & _neighbour_any(~pos) & (w < snap)
        if np.any(front):
            trial = flat.copy()
            trial[front.reshape(-1)] = 0.0
            Et0 = energy(trial)
            trial, Et, seg = relax(trial, Et0, relax_budget)
            if Et < E:
                flat, E = trial, Et
                _extend_monotone(trace, [Et0] + seg)
                snapped += int(np.count_nonzero(front))
                moved = True
        # move 2: re-activate the layer of zero nodes bordering the positive set
        if not moved:
            border = zero_interior & _neighbour_any(pos)
            if np.any(border):
                trial = flat.copy()
                for i in np.flatnonzero(border.reshape(-1)):
                    nb = _neighbour_values(w, i)
                    trial[i] = 0.5 * float(np.mean(nb)) if nb.size else 0.0
                Et0 = energy(trial)
                trial, Et, seg = relax(trial, Et0, relax_budget)
                if Et < E:
                    flat, E = trial, Et
                    _extend_monotone(trace, [Et0] + seg)
                    reactivated += int(np.count_nonzero(border))
                    moved = True
        # move 3: plain single-node snaps (no relaxation), smallest first
        if not moved:
            cand = np.flatnonzero((~fixed_flat) & (flat > 0) & (flat < snap))
            for i in cand[np.argsort(flat[cand])]:
                old = flat[i]
                flat[i] = 0.0
                Et = energy(flat)
                if Et < E:
                    E = Et
                    trace.append(E)
                    snapped += 1
                    moved = True
                else:
                    flat[i] = old
        if not moved:
            converged = True
            message = "stationary on the active set; no admissible snap or re-activation"
            break
    flat, E, filled = _fill_reached_nodes(model, flat, E, fixed_flat)
    if filled:
        trace.append(E)
    result = initial.with_values(flat.reshape(w0.shape).copy())
    res = stationarity_residual(result, pack, 2 * snap)
    resid = float(np.nanmax(res)) if np.any(np.isfinite(res)) else 0.0
    return DescentResult(
        result, trace, converged, state["iters"], message, snapped, reactivated, resid,
        {"snap_tolerance": snap},
    )


def _extend_monotone(trace, seg):
    """Append the energies of an accepted move that lie below the current record."""
    for e in seg:
        if e <= trace[-1]:
            trace.append(e)


def _fill_reached_nodes(model, flat, E, fixed_flat):
    """Give zero nodes lying under a continued segment their continued value.

    With a crossing placed below the zero node (reach beyond one cell) the
    node carries no information; writing the continued value there describes
    the same profile with the crossing inside the segment below.  Fills are
    kept only when they do not raise E_h beyond round-off.
    """
    filled = 0
    for _ in range(4):
        v = flat
        h, a, b, c, p, up, dn = model._segments(v)
        reach_up = up & (2 * b - c > 0) & ~fixed_flat[model.lo]
        reach_dn = dn & (2 * a - p > 0) & ~fixed_flat[model.hi]
        if not np.any(reach_up | reach_dn):
            break
        trial = flat.copy()
        trial[model.lo[reach_up]] = (2 * b - c)[reach_up]
        trial[model.hi[reach_dn]] = (2 * a - p)[reach_dn]
        Et = model.energy(trial)
        if not Et <= E + 1e-12 * max(abs(E), 1.0):
            break
        filled += int(np.count_nonzero(reach_up) + np.count_nonzero(reach_dn))
        flat, E = trial, min(E, Et)
    return flat, E, filled


def _neighbour_values(w, flat_index):
    idx = np.unravel_index(flat_index, w.shape)
    vals = []
    for k in range(w.ndim):
        for step in (-1, 1):
            j = list(idx)
            j[k] += step
            if 0 <= j[k] < w.shape[k] and w[tuple(j)] > 0:
                vals.append(w[tuple(j)])
    return np.asarray(vals)
