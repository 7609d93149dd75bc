"""Sampled fields on uniform boxes, finite differences and weighted quadrature.

Conventions
-----------
* A field of dimension d stores an ndarray of shape (n_1, ..., n_d); axis k is the
  coordinate x_{k+1}.  The last axis plays the role of x_d (the "vertical" axis).
* The discrete positivity set is {value > 0} with an exact zero threshold.
* Cells are the boxes spanned by neighbouring nodes.  Weighted integrals of the
  form  int w**s G  are computed cell by cell: the weight is integrated exactly
  along x_d on the linear reconstruction of w, and G is a cell value.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ShapeError, SizeError

__all__ = [
    "ScalarField",
    "WeightedHalfGrid",
    "LevelSetGeometry",
    "gradient",
    "hessian",
    "derivative",
    "integrate_weighted",
    "power_mean",
    "power_mean_derivatives",
    "cell_mean",
    "cell_gradient",
    "weight_masses",
    "weight_nodes",
    "integrate_nodes",
    "integrate_w_weighted",
    "power_moment",
    "signed_extension",
    "extract_free_boundary",
    "field_to_text",
    "field_from_text",
]


@dataclass(frozen=True)
class ScalarField:
    """Immutable samples of a function on a uniform box grid."""

    origin: tuple
    spacing: tuple
    values: np.ndarray
    meta: dict = dc_field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim not in (1, 2, 3):
            raise ShapeError(f"fields must have dimension 1, 2 or 3, got {vals.ndim}")
        origin = tuple(float(o) for o in np.atleast_1d(self.origin))
        spacing = tuple(float(h) for h in np.atleast_1d(self.spacing))
        if len(origin) != vals.ndim or len(spacing) != vals.ndim:
            raise ShapeError("origin and spacing must have one entry per axis")
        if any(not h > 0 for h in spacing):
            raise DomainError("spacing must be positive on every axis")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def from_function(cls, fn: Callable, origin, spacing, shape, **meta) -> "ScalarField":
        """Sample fn(x_1, ..., x_d) (ij-indexed coordinate arrays) on the grid."""
        geom = cls(origin, spacing, np.zeros(tuple(shape)))
        vals = np.broadcast_to(np.asarray(fn(*geom.coords()), dtype=float), geom.shape)
        return cls(origin, spacing, vals.copy(), meta)

    @classmethod
    def on_box(cls, fn: Callable, lower, upper, shape, **meta) -> "ScalarField":
        lower = np.atleast_1d(np.asarray(lower, float))
        upper = np.atleast_1d(np.asarray(upper, float))
        shape = tuple(int(n) for n in np.atleast_1d(shape))
        spacing = (upper - lower) / (np.asarray(shape) - 1)
        return cls.from_function(fn, lower, spacing, shape, **meta)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def extent(self) -> tuple:
        return tuple(o + h * (n - 1) for o, h, n in zip(self.origin, self.spacing, self.shape))

    @property
    def flat_values(self) -> np.ndarray:
        return self.values.reshape(-1)

    @property
    def positivity_mask(self) -> np.ndarray:
        return self.values > 0

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list:
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]

    def coords(self) -> list:
        return np.meshgrid(*self.axes(), indexing="ij")

    def with_values(self, values, **meta) -> "ScalarField":
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ShapeError(f"shape {values.shape} does not match grid {self.shape}")
        return ScalarField(self.origin, self.spacing, values, {**self.meta, **meta})

    def same_geometry(self, other: "ScalarField", rtol: float = 1e-12) -> bool:
        return (
            self.shape == other.shape
            and np.allclose(self.origin, other.origin, rtol=rtol, atol=rtol)
            and np.allclose(self.spacing, other.spacing, rtol=rtol, atol=0)
        )

    def require_same_geometry(self, other: "ScalarField"):
        if not self.same_geometry(other):
            raise ShapeError("fields live on different grids")


# ---------------------------------------------------------------------------
# finite differences


def _check_size(shape):
    if min(shape) < 3:
        raise SizeError(f"need at least 3 nodes per axis for second-order stencils, got {shape}")


def _shift(arr, k, axis, fill):
    """arr shifted so that out[i] = arr[i + k] along axis, padded with fill."""
    out = np.full_like(arr, fill)
    n = arr.shape[axis]
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if k >= 0:
        src[axis], dst[axis] = slice(k, n), slice(0, n - k)
    else:
        src[axis], dst[axis] = slice(0, n + k), slice(-k, n)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def derivative(values: np.ndarray, axis: int, h: float, mask: np.ndarray | None = None) -> np.ndarray:
    """Second-order first derivative along one axis.

    Without a mask this is central in the interior and one-sided (three point)
    at the faces.  With a mask, stencils only read nodes inside the mask, so a
    derivative taken on {w > 0} never looks across the free boundary.  Nodes
    outside the mask, and mask nodes with no usable neighbour, get 0.
    """
    values = np.asarray(values, dtype=float)
    _check_size(values.shape)
    if mask is None:
        return np.gradient(values, h, axis=axis, edge_order=2)
    mask = np.asarray(mask, dtype=bool)
    v = np.where(mask, values, 0.0)
    m = {k: _shift(mask, k, axis, False) for k in (-2, -1, 1, 2)}
    s = {k: _shift(v, k, axis, 0.0) for k in (-2, -1, 1, 2)}
    central = mask & m[-1] & m[1]
    fwd3 = mask & ~central & m[1] & m[2]
    bwd3 = mask & ~central & ~fwd3 & m[-1] & m[-2]
    fwd2 = mask & ~central & ~fwd3 & ~bwd3 & m[1]
    bwd2 = mask & ~central & ~fwd3 & ~bwd3 & ~fwd2 & m[-1]
    out = np.zeros_like(v)
    out = np.where(central, (s[1] - s[-1]) / (2 * h), out)
    out = np.where(fwd3, (-3 * v + 4 * s[1] - s[2]) / (2 * h), out)
    out = np.where(bwd3, (3 * v - 4 * s[-1] + s[-2]) / (2 * h), out)
    out = np.where(fwd2, (s[1] - v) / h, out)
    out = np.where(bwd2, (v - s[-1]) / h, out)
    return out


def _values_and_spacing(field):
    if isinstance(field, ScalarField):
        return field.values, field.spacing
    raise TypeError("expected a ScalarField")


def gradient(field: ScalarField, mask: np.ndarray | None = None) -> np.ndarray:
    """Array of shape (d, *grid) with the second-order gradient."""
    v, hs = _values_and_spacing(field)
    return np.stack([derivative(v, k, hs[k], mask) for k in range(v.ndim)])


def hessian(field: ScalarField, mask: np.ndarray | None = None) -> np.ndarray:
    """Array of shape (d, d, *grid); symmetric by construction (averaged mixed terms)."""
    v, hs = _values_and_spacing(field)
    d = v.ndim
    g = [derivative(v, k, hs[k], mask) for k in range(d)]
    H = np.empty((d, d) + v.shape)
    for i in range(d):
        for j in range(i, d):
            hij = derivative(g[i], j, hs[j], mask)
            if i != j:
                hij = 0.5 * (hij + derivative(g[j], i, hs[i], mask))
            H[i, j] = hij
            H[j, i] = hij
    return H


# ---------------------------------------------------------------------------
# weighted quadrature for x_d**s on half grids


@dataclass(frozen=True)
class WeightedHalfGrid:
    """Grid geometry in {x_d >= 0} with node weights integrating x_d**s exactly.

    The weights integrate x_d**s times any function that is piecewise linear in
    x_d between nodes; the transverse directions use the trapezoid rule.
    """

    origin: tuple
    spacing: tuple
    shape: tuple
    s: float

    def __post_init__(self):
        if not self.s > -1:
            raise DomainError(f"weight exponent s={self.s} must exceed -1 for integrability")
        if self.origin[-1] < 0:
            raise DomainError("a half grid needs x_d >= 0 on every node")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))

    @classmethod
    def like(cls, field: ScalarField, s: float) -> "WeightedHalfGrid":
        return cls(field.origin, field.spacing, field.shape, s)

    @property
    def heights(self) -> np.ndarray:
        return self.origin[-1] + self.spacing[-1] * np.arange(self.shape[-1])

    def column_weights(self) -> np.ndarray:
        """Weights c_k with sum_k c_k f(z_k) = int z**s f for piecewise-linear f."""
        z = self.heights
        a, b = z[:-1], z[1:]
        m0, m1 = column_moments(a, b, self.s)
        h = b - a
        c = np.zeros_like(z)
        c[:-1] += (b * m0 - m1) / h
        c[1:] += (m1 - a * m0) / h
        return c

    def weights(self) -> np.ndarray:
        """Full tensor of node weights (trapezoid across, exact along x_d)."""
        w = self.column_weights()
        for k in range(len(self.shape) - 2, -1, -1):
            t = np.full(self.shape[k], self.spacing[k])
            t[0] = t[-1] = 0.5 * self.spacing[k]
            w = np.multiply.outer(t, w)
        return w


def column_moments(a, b, s):
    """Exact int_a^b t**s dt and int_a^b t**(s+1) dt for 0 <= a < b."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    m0 = (b ** (1 + s) - a ** (1 + s)) / (1 + s)
    m1 = (b ** (2 + s) - a ** (2 + s)) / (2 + s)
    return m0, m1


def integrate_weighted(grid: WeightedHalfGrid, integrand: ScalarField | np.ndarray) -> float:
    """int x_d**s * integrand dx, exact for integrands piecewise linear in x_d."""
    vals = integrand.values if isinstance(integrand, ScalarField) else np.asarray(integrand, float)
    if isinstance(integrand, ScalarField):
        same = (
            integrand.shape == grid.shape
            and np.allclose(integrand.origin, grid.origin)
            and np.allclose(integrand.spacing, grid.spacing)
        )
        if not same:
            raise ShapeError("integrand is sampled on a different geometry")
    if vals.shape != grid.shape:
        raise ShapeError(f"integrand shape {vals.shape} does not match grid {grid.shape}")
    return float(np.sum(grid.weights() * vals))


# ---------------------------------------------------------------------------
# the power mean I(a, b) = mean of x**s over the segment [a, b]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _closed_ok(a, b):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    # closed forms lose no accuracy once the endpoints differ by a factor 2
    return hi >= 2.0 * lo


def power_mean(a, b, s: float) -> np.ndarray:
    """Mean of x**s over the segment between a >= 0 and b >= 0 (0 when both are 0).

    Equals (b**(1+s) - a**(1+s)) / ((1+s)(b-a)); evaluated by 16-point
    Gauss-Legendre when a and b are within a factor 2 of each other, which
    avoids cancellation without losing accuracy (the singularity at 0 is far).
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.zeros(a.shape)
    pos = (a > 0) | (b > 0)
    closed = pos & _closed_ok(a, b)
    quad = pos & ~closed
    with np.errstate(divide="ignore", invalid="ignore"):
        if np.any(closed):
            ac, bc = a[closed], b[closed]
            out[closed] = (bc ** (1 + s) - ac ** (1 + s)) / ((1 + s) * (bc - ac))
    if np.any(quad):
        aq, bq = a[quad][:, None], b[quad][:, None]
        x = aq + _GL_X[None, :] * (bq - aq)
        out[quad] = (x**s) @ _GL_W
    return out


def power_mean_derivatives(a, b, s: float):
    """I, I_a, I_b, I_aa, I_ab, I_bb for I = power_mean(a, b, s).

    Derivatives with respect to an endpoint that sits at 0 are returned as nan
    when s < 1 (they are infinite there); callers never differentiate with
    respect to nodes on the zero set.
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    shape = a.shape
    res = [np.zeros(shape) for _ in range(6)]
    pos = (a > 0) | (b > 0)
    closed = pos & _closed_ok(a, b)
    quad = pos & ~closed

    def g(x):
        return x**s

    def g1(x):
        return s * x ** (s - 1)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if np.any(closed):
            ac, bc = a[closed], b[closed]
            d = bc - ac
            I = (bc ** (1 + s) - ac ** (1 + s)) / ((1 + s) * d)
            Ia = (I - g(ac)) / d
            Ib = (g(bc) - I) / d
            Iaa = (2 * Ia - g1(ac)) / d
            Ibb = (g1(bc) - 2 * Ib) / d
            Iab = (Ib - Ia) / d
            for r, v in zip(res, (I, Ia, Ib, Iaa, Iab, Ibb)):
                r[closed] = v
        if np.any(quad):
            aq, bq = a[quad][:, None], b[quad][:, None]
            t = _GL_X[None, :]
            x = aq + t * (bq - aq)
            gx, g1x = x**s, s * x ** (s - 1)
            g2x = s * (s - 1) * x ** (s - 2)
            vals = (
                gx @ _GL_W,
                (g1x * (1 - t)) @ _GL_W,
                (g1x * t) @ _GL_W,
                (g2x * (1 - t) ** 2) @ _GL_W,
                (g2x * t * (1 - t)) @ _GL_W,
                (g2x * t**2) @ _GL_W,
            )
            for r, v in zip(res, vals):
                r[quad] = v
    return tuple(res)


# ---------------------------------------------------------------------------
# cell-based weighted integrals  int_{w>0} w**s G


def _corner_slices(d):
    for corner in itertools.product((0, 1), repeat=d):
        yield corner, tuple(slice(c, None if c else -1) for c in corner)


def cell_mean(values: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Average of the 2**d corner values of every cell (over masked corners if given)."""
    values = np.asarray(values, float)
    d = values.ndim
    total, count = 0.0, 0.0
    for _, sl in _corner_slices(d):
        if mask is None:
            total = total + values[sl]
            count = count + 1.0
        else:
            m = mask[sl]
            total = total + np.where(m, values[sl], 0.0)
            count = count + m
    if mask is None:
        return total / count
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def cell_gradient(values: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Cell-centred gradient from averaged edge differences, shape (d, *cells)."""
    values = np.asarray(values, float)
    d = values.ndim
    out = []
    for k in range(d):
        hi = [slice(None)] * d
        lo = [slice(None)] * d
        hi[k], lo[k] = slice(1, None), slice(None, -1)
        diff = (values[tuple(hi)] - values[tuple(lo)]) / spacing[k]
        # average over the 2**(d-1) edges parallel to axis k
        for j in range(d):
            if j != k:
                diff = 0.5 * (np.take(diff, range(0, diff.shape[j] - 1), axis=j)
                              + np.take(diff, range(1, diff.shape[j]), axis=j))
        out.append(diff)
    return np.stack(out)


def _edge_masses(w: np.ndarray, h: float, s: float, cut: str) -> np.ndarray:
    """int over each x_d-edge of w**s 1_{w>0} on the linear reconstruction.

    cut="nodal": the reconstruction is the plain linear interpolant.
    cut="extrapolate": on an edge from a zero node to a positive node, the zero
    crossing is placed where the linear continuation of the next positive edge
    vanishes (exact for profiles that are linear near the interface).
    """
    a = w[..., :-1]
    b = w[..., 1:]
    mass = h * power_mean(np.maximum(a, 0), np.maximum(b, 0), s)
    if cut == "nodal":
        return mass
    if cut != "extrapolate":
        raise ValueError(f"unknown cut rule {cut!r}")
    n = w.shape[-1]
    if n < 3:
        return mass
    # upward cut: a == 0 < b with the node above b also positive
    up = np.zeros(a.shape, bool)
    ext_up = np.zeros(a.shape)
    up[..., :-1] = (a[..., :-1] <= 0) & (b[..., :-1] > 0) & (w[..., 2:] > 0)
    ext_up[..., :-1] = 2 * b[..., :-1] - w[..., 2:]
    up &= ext_up < 0
    # downward cut: b == 0 < a with the node below a also positive
    dn = np.zeros(a.shape, bool)
    ext_dn = np.zeros(a.shape)
    dn[..., 1:] = (b[..., 1:] <= 0) & (a[..., 1:] > 0) & (w[..., :-2] > 0)
    ext_dn[..., 1:] = 2 * a[..., 1:] - w[..., :-2]
    dn &= ext_dn < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        frac_up = b / (b - ext_up)
        frac_dn = a / (a - ext_dn)
        mass = np.where(up, h * frac_up * b**s / (1 + s), mass)
        mass = np.where(dn, h * frac_dn * a**s / (1 + s), mass)
    return mass


def power_moment(a, b, s: float) -> np.ndarray:
    """int_0^1 (a + (b - a) t)**s t dt for a, b >= 0 (0 when both vanish)."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.zeros(a.shape)
    pos = (a > 0) | (b > 0)
    closed = pos & _closed_ok(a, b)
    quad = pos & ~closed
    with np.errstate(divide="ignore", invalid="ignore"):
        if np.any(closed):
            ac, bc = a[closed], b[closed]
            d = bc - ac
            out[closed] = (
                (bc ** (2 + s) - ac ** (2 + s)) / (2 + s) - ac * (bc ** (1 + s) - ac ** (1 + s)) / (1 + s)
            ) / d**2
    if np.any(quad):
        aq, bq = a[quad][:, None], b[quad][:, None]
        x = aq + _GL_X[None, :] * (bq - aq)
        out[quad] = (x**s * _GL_X[None, :]) @ _GL_W
    return out


def _transverse_weights(shape, spacing):
    """Trapezoid weights over the transverse axes, broadcast to the grid shape."""
    w = np.ones(shape[-1:])
    for k in range(len(shape) - 2, -1, -1):
        t = np.full(shape[k], spacing[k])
        t[0] = t[-1] = 0.5 * spacing[k]
        w = np.multiply.outer(t, w)
    return np.broadcast_to(w, shape) if len(shape) > 1 else np.ones(shape)


def weight_nodes(w: ScalarField, s: float, cut: str = "extrapolate") -> np.ndarray:
    """Node weights Omega with sum(Omega * G) ~ int_{w>0} w**s G dx.

    Along x_d every segment is integrated exactly for w and G linear on it
    (first moments of w**s); across the other axes the rule is the trapezoid
    rule.  On a segment joining a zero node to a positive node the crossing is
    placed by the linear continuation of w from the next segment (cut mode
    "extrapolate"), and G is continued linearly from the same two nodes, so
    no weight ever lands on a node of the zero set.  For w = x_d the rule
    integrates the same linear-in-x_d integrands exactly as WeightedHalfGrid.
    """
    if not s > -1:
        raise DomainError("weight exponent must exceed -1")
    if cut not in ("extrapolate", "nodal"):
        raise ValueError(f"unknown cut rule {cut!r}")
    v = np.maximum(np.asarray(w.values, float), 0.0)
    h = w.spacing[-1]
    n = v.shape[-1]
    a, b = v[..., :-1], v[..., 1:]
    mu0 = power_mean(a, b, s)
    mu1 = power_moment(a, b, s)
    lo_w = h * (mu0 - mu1)
    hi_w = h * mu1
    # a zero endpoint carries no integrand value: its share moves to the live end
    hi_w = np.where(a <= 0, h * mu0, hi_w)
    lo_w = np.where(a <= 0, 0.0, lo_w)
    lo_w = np.where(b <= 0, h * mu0, lo_w)
    hi_w = np.where(b <= 0, 0.0, hi_w)
    extra_up = np.zeros_like(a)  # weight on the node above hi (upward cuts)
    extra_dn = np.zeros_like(a)  # weight on the node below lo (downward cuts)
    if cut == "extrapolate" and n >= 3:
        k1 = 1.0 / (1.0 + s)
        k2 = 1.0 / (2.0 + s)
        c_up = np.zeros_like(a)
        c_up[..., :-1] = v[..., 2:]
        # inclusive: an exactly linear column puts the crossing on the zero node
        up = (a <= 0) & (b > 0) & (c_up - 2 * b >= -1e-9 * b)
        up[..., -1] = False
        c_dn = np.zeros_like(a)
        c_dn[..., 1:] = v[..., :-2]
        dn = (b <= 0) & (a > 0) & (c_dn - 2 * a >= -1e-9 * a)
        dn[..., 0] = False
        with np.errstate(divide="ignore", invalid="ignore"):
            lam_up = b / (c_up - b)
            ell_up = h * lam_up
            base_up = ell_up * b**s
            lam_dn = a / (c_dn - a)
            ell_dn = h * lam_dn
            base_dn = ell_dn * a**s
        hi_w = np.where(up, base_up * (k1 - lam_up * (k2 - k1)), hi_w)
        extra_up = np.where(up, base_up * lam_up * (k2 - k1), 0.0)
        lo_w = np.where(dn, base_dn * (k1 - lam_dn * (k2 - k1)), lo_w)
        extra_dn = np.where(dn, base_dn * lam_dn * (k2 - k1), 0.0)
    col = np.zeros_like(v)
    col[..., :-1] += lo_w
    col[..., 1:] += hi_w
    col[..., 2:] += extra_up[..., :-1]
    col[..., :-2] += extra_dn[..., 1:]
    return col * _transverse_weights(v.shape, w.spacing)


def integrate_nodes(w: ScalarField, s: float, G: np.ndarray, cut: str = "extrapolate") -> float:
    """int_{w>0} w**s G dx for a nodal integrand G (only values on {w > 0} are read)."""
    G = np.asarray(G, float)
    if G.shape != w.shape:
        raise ShapeError(f"integrand {G.shape} does not match grid {w.shape}")
    Om = weight_nodes(w, s, cut)
    live = Om != 0
    return float(np.sum(Om[live] * G[live]))


def weight_masses(w: ScalarField, s: float, cut: str = "extrapolate") -> np.ndarray:
    """Per-cell approximations of int_cell w**s 1_{w>0} dx, shape = cells.

    Exact along x_d on the linear reconstruction of w; the 2**(d-1) vertical
    edges of a cell are averaged (trapezoid across).
    """
    if not s > -1:
        raise DomainError("weight exponent must exceed -1")
    vals = np.maximum(w.values, 0.0)
    edges = _edge_masses(vals, w.spacing[-1], s, cut)
    d = vals.ndim
    for j in range(d - 1):
        edges = 0.5 * (np.take(edges, range(0, edges.shape[j] - 1), axis=j)
                       + np.take(edges, range(1, edges.shape[j]), axis=j))
    cross = float(np.prod(w.spacing[:-1])) if d > 1 else 1.0
    return edges * cross


def integrate_w_weighted(w: ScalarField, s: float, cell_values: np.ndarray, cut: str = "extrapolate") -> float:
    """Sum over cells of weight_masses * cell_values (cell_values sampled per cell)."""
    m = weight_masses(w, s, cut)
    cell_values = np.asarray(cell_values, float)
    if cell_values.shape != m.shape:
        raise ShapeError(f"cell values {cell_values.shape} do not match cells {m.shape}")
    return float(np.sum(np.where(m > 0, m * cell_values, 0.0)))


# ---------------------------------------------------------------------------
# free boundary extraction


@dataclass(frozen=True)
class LevelSetGeometry:
    """Extracted interface of {value > 0}.

    1D: `points` holds root abscissas; normals are +-1; curvature is 0.
    2D: `points` is a list of (m, 2) polylines; `normals` and `curvature` are
    per-vertex lists aligned with the polylines.  Normals point out of the
    positivity set; curvature is positive where the positivity set is convex.
    """

    dim: int
    points: list
    normals: list
    curvature: list
    has_interface: bool

    def all_points(self) -> np.ndarray:
        if self.dim == 1:
            return np.asarray(self.points, float).reshape(-1, 1)
        if not self.points:
            return np.zeros((0, 2))
        return np.vstack(self.points)


def signed_extension(field: ScalarField, layers: int = 2) -> np.ndarray:
    """Values on {w > 0}; zero nodes near the interface get the linear continuation.

    Each pass assigns to unknown nodes the average of the linear extrapolations
    from known neighbours along the axes.  Nodes still unknown afterwards get
    -max(spacing), which only marks them as outside.
    """
    v = field.values.astype(float).copy()
    known = v > 0
    d = v.ndim
    for _ in range(layers):
        acc = np.zeros_like(v)
        cnt = np.zeros_like(v)
        for k in range(d):
            for step in (1, -1):
                k1 = _shift(known, step, k, False)
                k2 = _shift(known, 2 * step, k, False)
                v1 = _shift(v, step, k, 0.0)
                v2 = _shift(v, 2 * step, k, 0.0)
                ok = ~known & k1 & k2
                ext = 2 * v1 - v2
                acc += np.where(ok, ext, 0.0)
                cnt += ok
        new = cnt > 0
        if not np.any(new):
            break
        est = acc / np.maximum(cnt, 1)
        # a non-negative continuation means the crossing sits at the node itself
        tiny = 1e-12 * np.max(np.abs(v[known])) if np.any(known) else 1e-300
        v = np.where(new, np.minimum(est, -tiny), v)
        known = known | new
    v = np.where(known, v, -max(field.spacing))
    return v


def _polyline_curvature(pts, normals, arc_gap):
    """Signed three-point circumcircle curvature with neighbours about arc_gap away."""
    m = len(pts)
    kappa = np.full(m, np.nan)
    if m < 3:
        return kappa
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    closed = np.allclose(pts[0], pts[-1])
    total = arc[-1]
    for i in range(m):
        if closed:
            ta, tb = arc[i] - arc_gap, arc[i] + arc_gap
            pa = _point_at_arc(pts, arc, ta % total)
            pb = _point_at_arc(pts, arc, tb % total)
        else:
            if arc[i] - arc_gap < 0 or arc[i] + arc_gap > total:
                continue
            pa = _point_at_arc(pts, arc, arc[i] - arc_gap)
            pb = _point_at_arc(pts, arc, arc[i] + arc_gap)
        p = pts[i]
        u, v = pa - p, pb - p
        cross = u[0] * v[1] - u[1] * v[0]
        la, lb, lc = np.linalg.norm(u), np.linalg.norm(v), np.linalg.norm(pb - pa)
        if la * lb * lc == 0:
            continue
        k = 2.0 * abs(cross) / (la * lb * lc)
        # the chord midpoint lies toward the centre; inward is -normal
        toward = 0.5 * (pa + pb) - p
        sign = 1.0 if np.dot(toward, -normals[i]) >= 0 else -1.0
        kappa[i] = sign * k
    return kappa


def _point_at_arc(pts, arc, t):
    j = int(np.clip(np.searchsorted(arc, t) - 1, 0, len(pts) - 2))
    span = arc[j + 1] - arc[j]
    lam = 0.0 if span == 0 else (t - arc[j]) / span
    return (1 - lam) * pts[j] + lam * pts[j + 1]


def extract_free_boundary(field: ScalarField, arc_gap: float | None = None) -> LevelSetGeometry:
    """Locate the boundary of {value > 0} (1D roots or 2D polylines)."""
    pos = field.positivity_mask
    if not np.any(pos) or np.all(pos):
        return LevelSetGeometry(field.dim, [], [], [], False)
    if field.dim == 1:
        x = field.axes()[0]
        v = field.values
        h = field.spacing[0]
        roots, normals = [], []
        for i in range(len(v) - 1):
            a, b = v[i], v[i + 1]
            if (a > 0) == (b > 0):
                continue
            if b > 0:  # zero at i, positive from i+1 upward
                nxt = v[i + 2] if i + 2 < len(v) else np.nan
                slope = (nxt - b) / h if nxt > 0 else np.nan
                r = x[i + 1] - b / slope if slope > 0 else x[i]
                roots.append(float(np.clip(r, x[i], x[i + 1])))
                normals.append(-1.0)
            else:
                prv = v[i - 1] if i >= 1 else np.nan
                slope = (a - prv) / h if prv > 0 else np.nan
                r = x[i] + a / (-slope) if slope < 0 else x[i + 1]
                roots.append(float(np.clip(r, x[i], x[i + 1])))
                normals.append(1.0)
        return LevelSetGeometry(1, roots, normals, [0.0] * len(roots), True)
    if field.dim != 2:
        raise DomainError("interface extraction is implemented for 1D and 2D fields")
    from scipy.ndimage import map_coordinates
    from skimage.measure import find_contours

    phi = signed_extension(field)
    hx, hy = field.spacing
    gx = np.gradient(phi, hx, axis=0, edge_order=2)
    gy = np.gradient(phi, hy, axis=1, edge_order=2)
    if arc_gap is None:
        arc_gap = 10.0 * max(hx, hy)
    polylines, normals, curvatures = [], [], []
    for c in find_contours(phi, 0.0):
        idx = c.T
        pts = np.column_stack([field.origin[0] + hx * c[:, 0], field.origin[1] + hy * c[:, 1]])
        nx = map_coordinates(gx, idx, order=1, mode="nearest")
        ny = map_coordinates(gy, idx, order=1, mode="nearest")
        nrm = np.hypot(nx, ny)
        nrm[nrm == 0] = 1.0
        nu = -np.column_stack([nx, ny]) / nrm[:, None]
        nu /= np.linalg.norm(nu, axis=1)[:, None]
        polylines.append(pts)
        normals.append(nu)
        curvatures.append(_polyline_curvature(pts, nu, arc_gap))
    return LevelSetGeometry(2, polylines, normals, curvatures, bool(polylines))


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point clouds."""
    from scipy.spatial.distance import directed_hausdorff

    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


# ---------------------------------------------------------------------------
# serialization: one JSON header line followed by CSV rows along the last axis


def _fmt(x: float) -> str:
    return repr(float(x))


def field_to_text(field: ScalarField, s: float | None = None) -> str:
    header = {
        "dims": list(field.shape),
        "origin": list(field.origin),
        "spacing": list(field.spacing),
        "s": s,
    }
    lines = [json.dumps(header, sort_keys=True)]
    rows = field.values.reshape(-1, field.shape[-1])
    lines.extend(",".join(_fmt(x) for x in row) for row in rows)
    return "\n".join(lines) + "\n"


def field_from_text(text: str) -> tuple:
    """Inverse of field_to_text; returns (field, s)."""
    first, _, rest = text.partition("\n")
    header = json.loads(first)
    rows = [list(map(float, line.split(","))) for line in rest.strip().splitlines()]
    vals = np.asarray(rows, float).reshape(header["dims"])
    return ScalarField(header["origin"], header["spacing"], vals), header.get("s")
