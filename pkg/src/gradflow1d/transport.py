"""Probability densities on an interval and exact 1D optimal transport.

Densities live on a uniform midpoint grid; transport maps are monotone node
positions at uniform mass levels (the quantile parametrization, in which the
quadratic Wasserstein distance is a plain weighted L2 distance).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .report import CertificateReport

MASS_TOL = 1e-12
GAP_REL = 1e-9          # minimum node spacing, relative to domain length
W2_LEVELS = 4097        # mass-grid resolution for quantile-based distances
TOL_FD = 1e-5           # relative tolerance of finite-difference identity checks


class ConfigurationError(ValueError):
    """Inconsistent domains, parameters or input shapes."""


class MonotonicityError(ValueError):
    """Map positions not strictly increasing above the minimum gap."""


class DegenerateQuantileError(ValueError):
    """Density vanishes on a plateau wider than the grid resolution."""


class StepTooLargeError(ValueError):
    """A perturbation flow step destroyed monotonicity."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigurationError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def gap(self) -> float:
        return GAP_REL * self.length


@dataclass
class GridDensity:
    """Nonnegative unit-mass density sampled at M uniform cell midpoints."""

    domain: Interval
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 8:
            raise ConfigurationError("need at least 8 density samples")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("non-finite density sample")
        if np.any(v < -1e-14):
            raise ConfigurationError("negative density sample")
        v = np.maximum(v, 0.0)
        if abs(v.sum() * (self.domain.length / v.size) - 1.0) > MASS_TOL:
            raise ConfigurationError("density mass differs from 1")
        self.values = v

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return self.domain.length / self.m

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.domain.lo, self.domain.hi, self.m + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.domain.lo + (np.arange(self.m) + 0.5) * self.h

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.h)

    def cdf_at_edges(self) -> np.ndarray:
        c = np.concatenate([[0.0], np.cumsum(self.values) * self.h])
        # snap rounding-level shortfall to 1 so a trailing vacuum stays a
        # genuinely flat run for the quantile's left-edge convention
        c[c >= 1.0 - 1e-12] = 1.0
        c[-1] = 1.0
        return c

    # --- constructors -----------------------------------------------------

    @classmethod
    def from_samples(cls, domain: Interval, values) -> "GridDensity":
        """Normalize nonnegative samples to unit mass."""
        v = np.maximum(np.asarray(values, dtype=float), 0.0)
        mass = v.sum() * domain.length / v.size
        if mass <= 0:
            raise ConfigurationError("cannot normalize zero-mass samples")
        return cls(domain, v / mass)

    @classmethod
    def uniform(cls, domain: Interval, m: int = 256) -> "GridDensity":
        return cls(domain, np.full(m, 1.0 / domain.length))

    @classmethod
    def cosine(cls, domain: Interval, m: int = 256, eps: float = 0.5,
               k: int = 2) -> "GridDensity":
        """1/L + (eps/L) cos(k pi (x-lo)/L): a Neumann eigenmode perturbation."""
        if not -1.0 < eps < 1.0:
            raise ConfigurationError("cosine amplitude must be in (-1, 1)")
        x = domain.lo + (np.arange(m) + 0.5) * domain.length / m
        v = (1.0 + eps * np.cos(k * np.pi * (x - domain.lo) / domain.length))
        return cls.from_samples(domain, v / domain.length)

    @classmethod
    def bump(cls, domain: Interval, m: int = 256, center: float | None = None,
             width: float | None = None) -> "GridDensity":
        """Smooth compactly supported bump plus a small uniform background."""
        center = 0.5 * (domain.lo + domain.hi) if center is None else center
        width = 0.5 * domain.length if width is None else width
        x = domain.lo + (np.arange(m) + 0.5) * domain.length / m
        y = (x - center) / (0.5 * width)
        v = np.where(np.abs(y) < 1, np.exp(-1.0 / np.maximum(1 - y * y, 1e-300)), 0.0)
        return cls.from_samples(domain, v + 1e-3 / domain.length)


@dataclass
class TransportMap:
    """Monotone node positions X(s_i) at uniform mass levels s_i = i/K."""

    domain: Interval
    positions: np.ndarray
    masses: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        if x.ndim != 1 or x.size < 9:
            raise ConfigurationError("need at least 9 map nodes (K >= 8)")
        if self.masses is None:
            self.masses = np.linspace(0.0, 1.0, x.size)
        if np.any(np.diff(x) <= self.domain.gap):
            raise MonotonicityError("map positions not increasing above gap")
        if x[0] < self.domain.lo - 1e-12 or x[-1] > self.domain.hi + 1e-12:
            raise ConfigurationError("map positions leave the domain")
        self.positions = np.clip(x, self.domain.lo, self.domain.hi)

    @property
    def k(self) -> int:
        return self.positions.size - 1

    @property
    def dm(self) -> float:
        return 1.0 / self.k


# --- quantiles and distances ---------------------------------------------

def quantile(u: GridDensity, levels) -> np.ndarray:
    """Generalized inverse CDF at the given mass levels.

    The CDF is piecewise linear on the grid; quantiles of zero-density
    plateaus resolve to the plateau's left edge.
    """
    s = np.asarray(levels, dtype=float)
    if np.any(s < 0) or np.any(s > 1):
        raise ConfigurationError("quantile level outside [0, 1]")
    cdf = u.cdf_at_edges()
    # keep only the first edge of every flat CDF run (left-edge convention);
    # for a leading vacuum the level-0 anchor is the support infimum instead
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    nz = int(np.argmax(cdf > 0))
    if nz > 1:
        keep[:nz - 1] = False
        keep[nz - 1] = True
    return np.interp(s, cdf[keep], u.edges[keep])


def wasserstein2(u: GridDensity, v: GridDensity,
                 n_levels: int = W2_LEVELS) -> float:
    """W2 as the L2 distance of quantile functions (trapezoid in mass).

    Using one shared level grid for every pair makes symmetry and the
    triangle inequality exact at the discrete level.
    """
    if u.domain != v.domain:
        raise ConfigurationError("densities live on different domains")
    s = np.linspace(0.0, 1.0, n_levels)
    d = quantile(u, s) - quantile(v, s)
    w = np.full(n_levels, 1.0 / (n_levels - 1))
    w[0] = w[-1] = 0.5 / (n_levels - 1)
    return float(np.sqrt(np.sum(w * d * d)))


def wasserstein2_maps(a: TransportMap, b: TransportMap) -> float:
    """Exact W2 between the pushforwards of two maps at matched levels."""
    return float(np.sqrt(w2sq_between_maps(a.positions, b.positions)))


def w2sq_between_maps(xa: np.ndarray, xb: np.ndarray) -> float:
    # exact integral of the piecewise-linear quantile difference squared
    d = xa - xb
    dm = 1.0 / (len(xa) - 1)
    return float((dm / 3.0) * np.sum(d[:-1] ** 2 + d[:-1] * d[1:] + d[1:] ** 2))


def boltzmann_entropy(u: GridDensity) -> float:
    """int u log u with the 0 log 0 = 0 convention."""
    v = u.values
    return float(u.h * np.sum(np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)))


# --- map <-> density conversions ------------------------------------------

def map_from_density(u: GridDensity, k: int = 256) -> TransportMap:
    """Quantile map of u at K+1 uniform mass levels.

    The CDF is interpolated by a clamped cubic spline (end slopes equal to
    the boundary density values) and inverted by a safeguarded Newton
    iteration; this keeps second derivatives of the represented density
    meaningful, which the piecewise-linear inverse would destroy.
    """
    if k < 8:
        raise ConfigurationError("need K >= 8 map cells")
    v = u.values
    interior = v[1:-1] if v.size > 2 else v
    dead = (interior <= 0)
    if np.any(dead[:-1] & dead[1:]):
        raise DegenerateQuantileError(
            "zero-density plateau wider than one grid cell")
    cdf = u.cdf_at_edges()
    spline = CubicSpline(u.edges, cdf, bc_type=((1, v[0]), (1, v[-1])))
    levels = np.linspace(0.0, 1.0, k + 1)
    linear = np.interp(levels, cdf, u.edges)
    x = linear.copy()
    lo, hi = u.domain.lo, u.domain.hi
    for _ in range(50):
        x = np.clip(x - (spline(x) - levels) / np.maximum(spline(x, 1), 1e-13), lo, hi)
    bad = np.abs(spline(x) - levels) > np.abs(spline(linear) - levels) + 1e-15
    x = np.where(bad, linear, x)
    # pin the ends to the support edges of the sampled density
    x[0], x[-1] = u.edges[np.argmax(v > 0)], u.edges[v.size - np.argmax(v[::-1] > 0)]
    x = np.maximum.accumulate(np.clip(x, lo, hi))
    gap = u.domain.gap
    if np.any(np.diff(x) <= gap):  # repair with strict minimum spacing
        for i in range(1, x.size):
            x[i] = max(x[i], x[i - 1] + 2 * gap)
        x = np.minimum(x, hi)
        for i in range(x.size - 2, -1, -1):
            x[i] = min(x[i], x[i + 1] - 2 * gap)
    return TransportMap(u.domain, x)


def density_from_map(x: TransportMap, m: int | None = None) -> GridDensity:
    """Pushforward density of the map on a uniform M-cell grid.

    The quantile function is interpolated by a cubic spline in the mass
    variable; cell values are exact mass differences over the cells, so the
    output has unit mass by construction.
    """
    m = x.k if m is None else m
    pos = x.positions
    levels = x.masses
    if np.any(np.diff(pos) <= 0):
        raise MonotonicityError("map positions must be strictly increasing")
    spline = CubicSpline(levels, pos)
    dom = x.domain
    edges = np.linspace(dom.lo, dom.hi, m + 1)
    target = np.clip(edges, pos[0], pos[-1])
    linear = np.interp(edges, pos, levels)
    s = linear.copy()
    for _ in range(30):
        s = np.clip(s - (spline(s) - target) / np.maximum(spline(s, 1), 1e-14), 0.0, 1.0)
    # where the spline is non-monotone (rough maps) Newton can run away;
    # keep the piecewise-linear inverse wherever it has a smaller residual
    bad = np.abs(spline(s) - target) > np.abs(spline(linear) - target) + 1e-15
    s = np.where(bad, linear, s)
    # pin levels outside the map's range: a non-monotone spline can offer a
    # wrong-branch preimage with a smaller residual at the walls
    s = np.where(edges <= pos[0], 0.0, s)
    s = np.where(edges >= pos[-1], 1.0, s)
    s = np.maximum.accumulate(np.clip(s, 0.0, 1.0))
    vals = np.diff(s) / (dom.length / m)
    return GridDensity(dom, np.maximum(vals, 0.0))


# --- perturbation flow ----------------------------------------------------

def perturbation_flow(x: TransportMap, phi, s: float) -> TransportMap:
    """Advance every node by one RK4 step of dy/ds = phi'(y) over time s."""
    d1 = phi.d1
    y = x.positions
    k1 = d1(y)
    k2 = d1(y + 0.5 * s * k1)
    k3 = d1(y + 0.5 * s * k2)
    k4 = d1(y + s * k3)
    ynew = y + (s / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    ynew = np.clip(ynew, x.domain.lo, x.domain.hi)
    if np.any(np.diff(ynew) <= x.domain.gap):
        raise StepTooLargeError("flow step destroyed monotonicity")
    return TransportMap(x.domain, ynew)


def volume_distortion_check(x: TransportMap, phi, s: float = 2e-5,
                            tol: float = TOL_FD) -> CertificateReport:
    """Finite-difference check of the volume-distortion identities.

    At s = 0 the derivative of the cell volume ratio equals phi'' and the
    derivative of the transported density gradient equals
    -u' phi'' - u phi''' - phi'' u', all evaluated with the same staggered
    map-cell stencils on both sides.
    """
    xp = perturbation_flow(x, phi, s).positions
    xm = perturbation_flow(x, phi, -s).positions
    x0 = x.positions
    dm = x.dm
    dx0 = np.diff(x0)

    # phi'' in the cell-divided-difference form the map arithmetic sees;
    # evaluating phi.d2 at midpoints instead would add an O(dX^2) quadrature
    # error far above tol_fd
    a = np.diff(phi.d1(x0)) / dx0

    # identity 1: d/ds det(grad X_s)|_0 = phi'' (per map cell)
    fd_v = (np.diff(xp) - np.diff(xm)) / (2 * s * dx0)
    scale_v = max(np.max(np.abs(a)), 1e-30)
    err_v = float(np.max(np.abs(fd_v - a)) / scale_v)

    def transported_gradient(xs):
        us = dm / np.diff(xs)
        dxb = 0.5 * (np.diff(xs)[:-1] + np.diff(xs)[1:])
        return (us[1:] - us[:-1]) / dxb

    # identity 2 at interior nodes: d/ds grad(u o X_s^{-1})|_0
    # = -(u' phi'' + u phi''' + phi'' u'), with the u phi''' + u' phi'' part
    # grouped as the staggered difference of u phi'' over the node volume
    fd_g = (transported_gradient(xp) - transported_gradient(xm)) / (2 * s)
    u0 = dm / dx0
    dxb0 = 0.5 * (dx0[:-1] + dx0[1:])
    p0 = (u0[1:] - u0[:-1]) / dxb0
    rhs_g = -((u0[1:] * a[1:] - u0[:-1] * a[:-1]) / dxb0
              + p0 * (dx0[:-1] * a[:-1] + dx0[1:] * a[1:]) / (2 * dxb0))
    scale_g = max(np.max(np.abs(rhs_g)), 1e-30)
    err_g = float(np.max(np.abs(fd_g - rhs_g)) / scale_g)

    err = max(err_v, err_g)
    return CertificateReport(
        name="volume_distortion", lhs=err, rhs=tol, tolerance=0.0,
        context={"err_volume": err_v, "err_gradient": err_g, "s": s})
