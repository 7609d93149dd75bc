"""Weighted spherical eigenvalues for axisymmetric cones.

For a cone w = r g(theta) with section Sigma = {theta < theta0} on the unit
sphere, the stability of w reduces to the bottom of

    int rho (phi'**2 - A2 phi**2) sin(theta)**(d-2) dtheta / int rho phi**2 sin(theta)**(d-2) dtheta

with rho = g**s (g**2 + g'**2), compared with the threshold -((d+s-2)/2)**2,
the negative of the sharp constant of the weighted radial Hardy inequality.
The quotient is discretized with P1 elements in theta; no boundary value is
imposed at either end (the weight vanishes at the axis for d >= 3 and like
(theta0 - theta)**s at the edge).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, sparse, special
from scipy.ndimage import map_coordinates
from scipy.sparse.linalg import eigsh

from .cones import ConeProfile, profile_curvature_A2
from .errors import DomainError
from .exponents import make_exponents
from .fields import ScalarField
from .stability import curvature_A2_axisymmetric

QUAD_POINTS = 6


@dataclass(frozen=True)
class SpectrumReport:
    """Bottom eigenvalue against its threshold; `theta`/`eigenfunction` sample the minimizer."""

    lam: float
    threshold: float
    stable: bool
    theta: np.ndarray
    eigenfunction: np.ndarray
    meta: dict = dc_field(default_factory=dict, compare=False)


def stability_threshold(d: float, s: float) -> float:
    """-((d + s - 2)/2)**2."""
    return 0.0 - ((d + s - 2) / 2) ** 2  # 0.0 - x keeps the zero threshold unsigned


def jacobi_threshold(d: float) -> float:
    """-((d - 3)/2)**2, the minimal-cone threshold."""
    return 0.0 - ((d - 3) / 2) ** 2


# ---------------------------------------------------------------------------
# weighted Sturm-Liouville problem on [0, theta0]


def _element_rules(n_el, edge_power):
    """Gauss rules on [0, 1]: Legendre for every element, Jacobi for the last one."""
    x, wq = special.roots_legendre(QUAD_POINTS)
    leg = (0.5 * (x + 1), 0.5 * wq)
    if edge_power == 0:
        return leg, leg
    # weight (1 - t)**edge_power on [0, 1]
    xj, wj = special.roots_jacobi(QUAD_POINTS, edge_power, 0.0)
    return leg, (0.5 * (xj + 1), wj * 0.5 ** (1 + edge_power))


def assemble_quotient(theta0: float, d: int, weight: Callable, potential: Callable, n: int = 400,
                      edge_power: float = 0.0):
    """Stiffness and mass matrices (K, M) of the weighted quotient on [0, theta0], with the nodes.

    For nodal values phi, phi K phi / phi M phi is the quotient of the P1 interpolant.
    weight(theta) must return rho(theta) / (theta0 - theta)**edge_power; the
    factor (theta0 - theta)**edge_power is integrated exactly on the last
    element by Gauss-Jacobi and evaluated directly elsewhere.  The measure is
    sin(theta)**(d-2).
    """
    if not 0 < theta0 <= math.pi:
        raise DomainError("theta0 must lie in (0, pi]")
    if not edge_power > -1:
        raise DomainError("edge exponent must exceed -1")
    nodes = np.linspace(0.0, theta0, n + 1)
    h = theta0 / n
    (xl, wl), (xj, wj) = _element_rules(n, edge_power)
    K = np.zeros((n + 1, n + 1))
    M = np.zeros((n + 1, n + 1))
    for last, (xq, wq) in ((False, (xl, wl)), (True, (xj, wj))):
        if last and edge_power == 0:
            continue
        el = np.array([n - 1]) if last else np.arange(n - 1 if edge_power != 0 else n)
        th = nodes[el][:, None] + h * xq[None, :]
        base = weight(th) * np.sin(th) ** (d - 2) * h * wq[None, :]
        if last:
            # Gauss-Jacobi weights carry (1 - t)**p; theta0 - theta = h (1 - t)
            base = base * h**edge_power
        else:
            base = base * (theta0 - th) ** edge_power
        pot = potential(th)
        if not np.all(np.isfinite(pot)):
            raise DomainError("potential is not finite on the quadrature nodes")
        pot = base * pot
        hats = (1 - xq, xq)
        k_el = np.sum(base, axis=1) / h**2
        for i in range(2):
            for j in range(2):
                m_ij = base @ (hats[i] * hats[j])
                p_ij = pot @ (hats[i] * hats[j])
                sign = 1.0 if i == j else -1.0
                np.add.at(K, (el + i, el + j), sign * k_el - p_ij)
                np.add.at(M, (el + i, el + j), m_ij)
    assert np.allclose(K, K.T, rtol=0, atol=1e-12 * np.max(np.abs(K))), "stiffness matrix is not symmetric"
    assert np.allclose(M, M.T, rtol=0, atol=1e-12 * np.max(np.abs(M))), "mass matrix is not symmetric"
    return K, M, nodes


def sturm_liouville(theta0: float, d: int, weight: Callable, potential: Callable, n: int = 400,
                    edge_power: float = 0.0, k: int = 1):
    """Lowest k eigenpairs of the quotient built by assemble_quotient: (values, vectors, nodes)."""
    K, M, nodes = assemble_quotient(theta0, d, weight, potential, n, edge_power)
    vals, vecs = linalg.eigh(K, M, subset_by_index=[0, k - 1])
    return vals, vecs, nodes


@dataclass(frozen=True)
class SphericalSection:
    """Rayleigh-quotient data of an axisymmetric cone on the unit sphere."""

    profile: ConeProfile
    d: int
    s: float
    theta0: float
    curvature: str = "analytic"

    def weight_reduced(self, theta):
        """rho / (theta0 - theta)**s with rho = g**s (g**2 + g'**2)."""
        theta = np.asarray(theta, float)
        g, dg = self.profile.evaluate(theta)
        gap = self.theta0 - theta
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(gap > 1e-12, g / gap, -dg)
        return ratio**self.s * (g * g + dg * dg)

    def weight(self, theta):
        theta = np.asarray(theta, float)
        return self.weight_reduced(theta) * np.maximum(self.theta0 - theta, 0.0) ** self.s

    def A2(self, theta):
        theta = np.asarray(theta, float)
        if self.curvature == "analytic":
            return profile_curvature_A2(self.profile, theta.ravel()).reshape(theta.shape)
        return grid_section_A2(self.profile, theta.ravel()).reshape(theta.shape)


def spherical_section(profile: ConeProfile, curvature: str = "analytic") -> SphericalSection:
    """Section data; curvature="analytic" uses (g, g', g''), "grid" the meridian-grid Hessian."""
    if curvature not in ("analytic", "grid"):
        raise ValueError("curvature must be 'analytic' or 'grid'")
    if profile.collapsed:
        raise DomainError(f"profile is not a cone: {profile.message}")
    return SphericalSection(profile, profile.d, profile.s, profile.theta0, curvature)


def grid_section_A2(profile: ConeProfile, theta, n: int = 401, band: float = 0.1) -> np.ndarray:
    """A**2 at r = 1 from the Hessian of the lifted field on a meridian grid.

    The field is sampled on the box [0, 1 + band] x [-(1 + band), 1 + band] and
    curvature_A2_axisymmetric is interpolated (bilinear) at (sin theta, cos theta).
    Angles where the grid quantity is masked are filled by interpolation in theta.
    """
    from .cones import _lift

    theta = np.asarray(theta, float)
    R = 1.0 + band
    # an even node count keeps the vertex off the grid
    n_z = 2 * (n // 2)
    f = ScalarField.on_box(lambda t, z: np.zeros_like(t), (0.0, -R), (R, R), (n, n_z))
    tau, z = f.coords()
    w, _, _ = _lift(profile, np.hypot(tau, z), np.arctan2(tau, z))
    field = f.with_values(np.maximum(w, 0.0))
    A2 = curvature_A2_axisymmetric(field, profile.d, floor=1e-3)
    idx = np.vstack([np.sin(theta) / f.spacing[0], (np.cos(theta) + R) / f.spacing[1]])
    vals = map_coordinates(np.where(A2.valid, A2.values, np.nan), idx, order=1, mode="nearest")
    ok = np.isfinite(vals)
    if not np.any(ok):
        raise DomainError("no valid grid curvature along the section")
    # masked angles (edge band, grid faces) take the nearest valid values in theta
    order = np.argsort(theta[ok])
    return np.where(ok, vals, np.interp(theta, theta[ok][order], vals[ok][order]))


def lambda_s(section: SphericalSection, n: int = 400) -> SpectrumReport:
    """Bottom of the weighted quotient on the section, with the stability verdict."""
    vals, vecs, nodes = sturm_liouville(section.theta0, section.d, section.weight_reduced, section.A2,
                                        n=n, edge_power=section.s)
    phi = vecs[:, 0]
    phi = phi / phi[np.argmax(np.abs(phi))]
    lam = float(vals[0])
    thr = stability_threshold(section.d, section.s)
    return SpectrumReport(lam, thr, lam >= thr, nodes, phi,
                          {"d": section.d, "s": section.s, "theta0": section.theta0, "n": n,
                           "curvature": section.curvature})


# ---------------------------------------------------------------------------
# Hardy constant


def hardy_constant_numeric(d: float, s: float, r_min: float | None = None, r_max: float | None = None,
                           n: int = 4000, ratio: float = 0.01, return_factor: bool = False):
    """min of int r**(s+d-1) g'**2 / int r**(s+d-3) g**2 over g vanishing at r_min and r_max.

    P1 elements on a grid uniform in log r, with the exponential weights
    integrated exactly on each element.  On a finite log-interval of length L
    the minimum exceeds ((d+s-2)/2)**2 by about (pi/L)**2; with r_min and
    r_max omitted L is chosen so that (pi/L)**2 <= ratio ((d+s-2)/2)**2.
    With return_factor the minimizing radial factor is returned as well, as
    (value, r, g) with g sampled at the nodes r (zero at both ends, max 1).
    """
    kappa = abs(d + s - 2) / 2
    if r_min is None or r_max is None:
        if kappa == 0:
            raise DomainError("the Hardy constant vanishes for d + s = 2; give the radial range explicitly")
        L = math.pi / (math.sqrt(ratio) * kappa)
        r_min, r_max = math.exp(-L / 2), math.exp(L / 2)
    if not 0 < r_min < r_max:
        raise DomainError("need 0 < r_min < r_max")
    rho = np.linspace(math.log(r_min), math.log(r_max), n + 1)
    h = rho[1] - rho[0]
    a = d + s - 2  # both integrands become e**(a rho) in log variables
    # exact element integrals of e**(a rho) times products of hat functions
    lo = rho[:-1]
    x, wq = special.roots_legendre(8)
    t = 0.5 * (x + 1)
    wt = 0.5 * wq
    # shift the exponent for range: only ratios matter
    e = np.exp(a * (lo[:, None] + h * t[None, :] - rho.mean())) * h * wt[None, :]
    k_el = e.sum(axis=1) / h**2
    mLL = e @ ((1 - t) ** 2)
    mLR = e @ ((1 - t) * t)
    mRR = e @ (t * t)
    main_k = np.zeros(n + 1)
    main_m = np.zeros(n + 1)
    main_k[:-1] += k_el
    main_k[1:] += k_el
    main_m[:-1] += mLL
    main_m[1:] += mRR
    # Dirichlet ends
    # symmetric diagonal scaling: the weight spans e**(|a| L), far beyond what shift-invert tolerates unscaled
    scale = 1.0 / np.sqrt(main_m[1:-1])
    off = scale[:-1] * scale[1:]
    K = sparse.diags([main_k[1:-1] * scale**2, -k_el[1:-1] * off, -k_el[1:-1] * off], [0, 1, -1], format="csc")
    M = sparse.diags([np.ones(n - 1), mLR[1:-1] * off, mLR[1:-1] * off], [0, 1, -1], format="csc")
    # a fixed start vector keeps ARPACK (random start by default) reproducible to the last bit
    start = np.sin(np.pi * np.arange(1, n) / n)
    if not return_factor:
        val = eigsh(K, k=1, M=M, sigma=0.0, which="LM", v0=start, return_eigenvectors=False)
        return float(val[0])
    val, vec = eigsh(K, k=1, M=M, sigma=0.0, which="LM", v0=start)
    g = np.concatenate([[0.0], vec[:, 0] * scale, [0.0]])
    g = g / g[np.argmax(np.abs(g))]
    return float(val[0]), np.exp(rho), g


# ---------------------------------------------------------------------------
# minimal-cone side


def jacobi_lambda_latitude(d: int, theta0: float, n: int = 200, grid_n: int = 401) -> SpectrumReport:
    """Bottom of -Delta_M - |A_M|**2 on the latitude sphere M = {theta = theta0} of S^(d-1).

    |A_M|**2 is measured, not assumed: it is the Hessian curvature quantity of
    v = x_d - cot(theta0) tau on a meridian grid (its level set through the
    origin is the cone over M and |grad v| is constant, so the tangential term
    vanishes), read at (sin theta0, cos theta0).  -Delta_M is discretized on
    axisymmetric functions of M, a sphere S^(d-2) of radius sin(theta0), with
    the same P1 elements as lambda_s.  Closed form: -(d-2) cot(theta0)**2.
    """
    if d < 3:
        raise DomainError("need d >= 3")
    if not 0 < theta0 < math.pi:
        raise DomainError("theta0 must lie in (0, pi)")
    cot = 1.0 / math.tan(theta0)
    st, ct = math.sin(theta0), math.cos(theta0)
    half = 0.25
    f = ScalarField.on_box(lambda t, z: z - cot * t + 10.0, (st - half, ct - half), (st + half, ct + half),
                           (grid_n, grid_n))
    A2 = curvature_A2_axisymmetric(f, d, floor=1e-6)
    idx = np.array([[half / f.spacing[0]], [half / f.spacing[1]]])
    a2 = float(map_coordinates(A2.values, idx, order=1)[0])
    radius = st
    # axisymmetric modes on S^(d-2) of radius sin(theta0): solve on the unit sphere, then rescale
    vals, vecs, nodes = sturm_liouville(math.pi, d - 1, np.ones_like, lambda p: np.full_like(p, a2 * radius**2), n=n)
    lam = float(vals[0]) / radius**2
    thr = jacobi_threshold(d)
    phi = vecs[:, 0] / vecs[np.argmax(np.abs(vecs[:, 0])), 0]
    return SpectrumReport(lam, thr, lam >= thr, nodes, phi,
                          {"d": d, "theta0": theta0, "closed_form": -(d - 2) * cot * cot, "A2": a2})


# ---------------------------------------------------------------------------
# gamma -> -2


def measure_concentration_1d(s: float, delta: float) -> float:
    """(1+s) int_0^delta t**s dt = delta**(1+s) for the profile w = t+."""
    if not s > -1:
        raise DomainError("need s > -1")
    if not delta > 0:
        raise DomainError("need delta > 0")
    return float(delta ** (1 + s))


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    s: float
    lam: float
    threshold: float
    concentration: float
    jacobi_target: float
    note: str = ""


def asymptotic_sweep(gammas: Sequence[float], d: int, family: Callable | None = None,
                     delta: float = 0.5, n: int = 400) -> list:
    """lambda_s, threshold and concentration along gamma_k -> -2.

    family(pack) must return a ConeProfile; None means the half-space, whose
    limiting Jacobi target is the equator (Lambda = 0).  Profiles that
    collapse or keep an axis defect above 1e-6 are skipped with a note.
    """
    from .cones import shoot_from_edge

    rows = []
    for gamma in gammas:
        pack = make_exponents(float(gamma))
        if not -2 < gamma < 0:
            raise DomainError("sweep values must lie in (-2, 0)")
        prof = shoot_from_edge(math.pi / 2, d, pack) if family is None else family(pack)
        target = jacobi_lambda_latitude(d, prof.theta0).lam if prof.theta0 < math.pi else math.nan
        conc = measure_concentration_1d(pack.s, delta)
        thr = stability_threshold(d, pack.s)
        if prof.collapsed or not abs(prof.axis_defect) < 1e-6:
            rows.append(SweepRow(float(gamma), pack.s, math.nan, thr, conc, target, "profile failed certification"))
            continue
        rep = lambda_s(spherical_section(prof), n=n)
        rows.append(SweepRow(float(gamma), pack.s, rep.lam, thr, conc, target))
    return rows
