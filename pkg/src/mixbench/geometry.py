"""Planar curves and the stream-function constructions: tube charts, fields
compatible with prescribed normal velocities, homothetic fields, area-preserving
tube coordinates, truncated potentials of area-preserving flows, canonical tube
solutions, and the locality check for curves sharing a sub-arc."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, make_interp_spline
from scipy.spatial import cKDTree

from .errors import FluxNotZero, NotAreaPreserving, PreconditionFailed, TubeTooWide

__all__ = [
    "quintic_smoothstep",
    "cinf_step",
    "cutoff_bump",
    "cutoff_bump_deriv",
    "Curve",
    "flux",
    "StreamField",
    "stream_from_normal_velocity",
    "HomotheticField",
    "homothetic_field",
    "TubeChart",
    "area_preserving_chart",
    "Profile",
    "canonical_solution",
    "TimeCurve",
    "CanonicalTubeField",
    "locality_check",
    "write_curve_file",
    "read_curve_file",
]


# ---------------------------------------------------------------------------
# smooth steps and the fixed cut-off bump

def quintic_smoothstep(x):
    """0 -> 1 on [0, 1] with vanishing first and second derivatives at the ends."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 + x * (-15.0 + 6.0 * x))


def quintic_smoothstep_deriv(x):
    x = np.asarray(x, dtype=np.float64)
    inside = (x > 0.0) & (x < 1.0)
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = 30.0 * xi**2 * (1.0 - xi) ** 2
    return out


def cinf_step(x):
    """C-infinity step 0 -> 1 on [0, 1] (exp-based, flat to all orders at ends)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    out[x >= 1.0] = 1.0
    mid = (x > 0.0) & (x < 1.0)
    xm = x[mid]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    out[mid] = a / (a + b)
    return out


def cinf_step_deriv(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    mid = (x > 0.0) & (x < 1.0)
    xm = x[mid]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    out[mid] = a * b * (1.0 / xm**2 + 1.0 / (1.0 - xm) ** 2) / (a + b) ** 2
    return out


def cinf_bump(x):
    """C-infinity bump on (-1, 1), value 1 at 0, vanishing to all orders at +-1."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    mid = np.abs(x) < 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - x[mid] ** 2))
    return out


_G_FLAT = 0.55   # cut-off is identically 1 on [-_G_FLAT, _G_FLAT]
_G_SUPP = 0.95   # and vanishes outside (-_G_SUPP, _G_SUPP)


def cutoff_bump(z):
    """The fixed even cut-off: 1 on [-0.55, 0.55], support (-0.95, 0.95).

    Exp-based and C-infinity; a merely C^2 step here would put third-derivative
    jumps into every stream field and cap finite-difference divergence checks
    three orders of magnitude above their tolerance.
    """
    z = np.abs(np.asarray(z, dtype=np.float64))
    return 1.0 - cinf_step((z - _G_FLAT) / (_G_SUPP - _G_FLAT))


def cutoff_bump_deriv(z):
    z = np.asarray(z, dtype=np.float64)
    s = np.sign(z)
    return -s * cinf_step_deriv((np.abs(z) - _G_FLAT) / (_G_SUPP - _G_FLAT)) \
        / (_G_SUPP - _G_FLAT)


# ---------------------------------------------------------------------------
# curves

class Curve:
    """Constant-speed parametrized planar curve (one time slice).

    Closed curves are parametrized over [0, 1) periodically; proper curves over
    [0, 1] with exact linear extension beyond the ends (all proper curves in
    this package end in straight segments).  ``speed`` is |dgamma/ds|, constant
    by construction.
    """

    def __init__(self, points: np.ndarray, kind: str, time: float = 0.0,
                 n_samples: int | None = None):
        if kind not in ("closed", "proper"):
            raise ValueError("kind must be 'closed' or 'proper'")
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 8:
            raise ValueError("need at least 8 sample points of shape (M, 2)")
        self.kind = kind
        self.time = time
        n = n_samples or max(pts.shape[0], 512)
        self.points, self.speed = _resample_constant_speed(pts, kind, n)
        self._build_splines()
        self._equalize_speed()
        self._tree = None
        self._tubular = None

    def _build_splines(self):
        pts = self.points
        if self.kind == "closed":
            s = np.linspace(0.0, 1.0, pts.shape[0] + 1)
            wrapped = np.vstack([pts, pts[:1]])
            self._sx = make_interp_spline(s, wrapped[:, 0], k=5, bc_type="periodic")
            self._sy = make_interp_spline(s, wrapped[:, 1], k=5, bc_type="periodic")
        else:
            s = np.linspace(0.0, 1.0, pts.shape[0])
            self._sx = make_interp_spline(s, pts[:, 0], k=5)
            self._sy = make_interp_spline(s, pts[:, 1], k=5)
        self._smin, self._smax = 0.0, 1.0
        self._dsx = self._sx.derivative()
        self._dsy = self._sy.derivative()
        self._d2sx = self._dsx.derivative()
        self._d2sy = self._dsy.derivative()

    def _equalize_speed(self, passes: int = 2):
        """Redistribute the samples along the spline so |dgamma/ds| is constant
        to near machine precision (the field formulas assume it exactly)."""
        n = self.points.shape[0]
        for _ in range(passes):
            fine = np.linspace(0.0, 1.0, 16 * n + 1)
            w = np.linalg.norm(
                np.stack([self._dsx(fine), self._dsy(fine)], axis=-1), axis=-1)
            from scipy.integrate import cumulative_simpson

            arc = np.concatenate([[0.0], cumulative_simpson(w, x=fine)])
            total = arc[-1]
            if self.kind == "closed":
                targets = np.linspace(0.0, total, n, endpoint=False)
            else:
                targets = np.linspace(0.0, total, n)
            s_new = np.interp(targets, arc, fine)
            self.points = np.stack([self._sx(s_new), self._sy(s_new)], axis=-1)
            self.speed = total
            self._build_splines()

    def _wrap(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == "closed":
            return np.mod(s, 1.0)
        return s

    def eval(self, s):
        s = self._wrap(s)
        if self.kind == "proper":
            s_in = np.clip(s, 0.0, 1.0)
            base = np.stack([self._sx(s_in), self._sy(s_in)], axis=-1)
            d = np.stack([self._dsx(s_in), self._dsy(s_in)], axis=-1)
            over = (s - s_in)[..., None]
            return base + over * d
        return np.stack([self._sx(s), self._sy(s)], axis=-1)

    def derivative(self, s):
        s = self._wrap(s)
        if self.kind == "proper":
            s = np.clip(s, 0.0, 1.0)
        return np.stack([self._dsx(s), self._dsy(s)], axis=-1)

    def second_derivative(self, s):
        s = self._wrap(s)
        if self.kind == "proper":
            s_in = np.clip(s, 0.0, 1.0)
            out = np.stack([self._d2sx(s_in), self._d2sy(s_in)], axis=-1)
            return np.where(np.asarray(s != s_in)[..., None], 0.0, out)
        return np.stack([self._d2sx(s), self._d2sy(s)], axis=-1)

    def tangent(self, s):
        d = self.derivative(s)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def normal(self, s):
        """eta = -tangent^perp, i.e. (tau2, -tau1)."""
        t = self.tangent(s)
        out = np.empty_like(t)
        out[..., 0] = t[..., 1]
        out[..., 1] = -t[..., 0]
        return out

    def curvature(self, s):
        d = self.derivative(s)
        dd = self.second_derivative(s)
        eta = self.normal(s)
        return np.sum(dd * eta, axis=-1) / np.sum(d * d, axis=-1)

    @property
    def length(self) -> float:
        """Arc length of the parametrized window (total length for closed curves)."""
        return self.speed

    def tubular_radius(self) -> float:
        """Numerical estimate, halved for safety: min of the curvature radius
        and the closest approach between points whose along-curve separation
        exceeds what a curvature-bounded arc can fold back."""
        if self._tubular is not None:
            return self._tubular
        sgrid = np.linspace(0.0, 1.0, 2048, endpoint=(self.kind == "proper"))
        kap = np.abs(self.curvature(sgrid))
        r_curv = 1.0 / max(kap.max(), 1e-12)
        pts = self.eval(sgrid)
        tree = cKDTree(pts)
        pairs = tree.query_pairs(min(r_curv, 0.45 * self.speed), output_type="ndarray")
        self_d = math.inf
        if len(pairs):
            dpar = np.abs(sgrid[pairs[:, 0]] - sgrid[pairs[:, 1]])
            if self.kind == "closed":
                dpar = np.minimum(dpar, 1.0 - dpar)
            arc_sep = dpar * self.speed
            folds = arc_sep > 0.5 * math.pi * min(r_curv, 0.45 * self.speed)
            if folds.any():
                d = np.linalg.norm(pts[pairs[folds, 0]] - pts[pairs[folds, 1]], axis=1)
                self_d = float(d.min())
        r = min(r_curv, self_d) if math.isfinite(self_d) else r_curv
        self._tubular = 0.5 * r
        return self._tubular

    def _kdtree(self):
        if self._tree is None:
            lo = -0.25 if self.kind == "proper" else 0.0
            hi = 1.25 if self.kind == "proper" else 1.0
            self._proj_s = np.linspace(lo, hi, 4096, endpoint=(self.kind == "proper"))
            self._tree = cKDTree(self.eval(self._proj_s))
        return self._tree

    def project(self, points: np.ndarray):
        """Nearest-point projection: returns (s, signed_distance)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        tree = self._kdtree()
        _, idx = tree.query(pts)
        s = self._proj_s[idx]
        ell2 = self.speed**2
        for _ in range(4):
            g = self.eval(s)
            dg = self.derivative(s)
            d2g = self.second_derivative(s)
            diff = pts - g
            num = np.sum(diff * dg, axis=-1)
            den = ell2 - np.sum(diff * d2g, axis=-1)
            den = np.where(np.abs(den) < 1e-9 * ell2, np.sign(den + 1e-300) * 1e-9 * ell2, den)
            s = s + np.clip(num / den, -0.1, 0.1)
            if self.kind == "closed":
                s = np.mod(s, 1.0)
        g = self.eval(s)
        eta = self.normal(s)
        d = np.sum((pts - g) * eta, axis=-1)
        return s, d


def _resample_constant_speed(pts: np.ndarray, kind: str, n: int):
    # drop consecutive duplicates (assembled polylines share piece endpoints)
    keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-13])
    pts = pts[keep]
    if kind == "closed":
        closed_pts = np.vstack([pts, pts[:1]])
    else:
        closed_pts = pts
    seg = np.linalg.norm(np.diff(closed_pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    if total <= 0:
        raise ValueError("degenerate curve")
    # parametrize the input by arc length, then sample uniformly
    sx = make_interp_spline(arc, closed_pts[:, 0], k=3)
    sy = make_interp_spline(arc, closed_pts[:, 1], k=3)
    if kind == "closed":
        a = np.linspace(0.0, total, n, endpoint=False)
    else:
        a = np.linspace(0.0, total, n)
    out = np.stack([sx(a), sy(a)], axis=-1)
    return out, total


def flux(curve: Curve, v, s_a: float, s_b: float) -> float:
    """Integral of v(gamma(s)) |gamma'(s)| ds over [s_a, s_b] by composite Simpson."""
    n = 4097
    s = np.linspace(s_a, s_b, n)
    w = np.linalg.norm(curve.derivative(s), axis=-1)
    vals = np.asarray(v(s), dtype=np.float64) * w
    from scipy.integrate import simpson

    return float(simpson(vals, x=s))


# ---------------------------------------------------------------------------
# stream field from prescribed normal velocity (plain tube chart)

class StreamField:
    """Divergence-free field u = rot-grad of phi with phi = -g(y/r) V(s) on the
    plain tube chart; u . eta = v on the curve."""

    def __init__(self, curve: Curve, v, r: float, sub_arc=None, s0: float | None = None,
                 flux_tol: float = 1e-8):
        self.curve = curve
        self.r = r
        rbar = curve.tubular_radius()
        if r >= rbar:
            raise TubeTooWide(f"r={r} >= tubular radius {rbar:.4g}")
        n = 8193
        if curve.kind == "closed":
            sgrid = np.linspace(0.0, 1.0, n)
        else:
            lo, hi = (sub_arc if sub_arc else (0.0, 1.0))
            pad = 0.25 * (hi - lo)
            sgrid = np.linspace(lo - pad, hi + pad, n)
        vvals = np.asarray(v(sgrid), dtype=np.float64)
        wvals = np.linalg.norm(curve.derivative(sgrid), axis=-1)
        cum = _cumulative(sgrid, vvals * wvals)
        total = cum[-1]
        vmax = float(np.max(np.abs(vvals)))
        arclen = curve.speed * (sgrid[-1] - sgrid[0])
        if abs(total) > flux_tol * max(arclen * vmax, 1e-300):
            raise FluxNotZero(f"net flux {total:.3e} exceeds gate {flux_tol:.1e} * L * max|v|")
        if s0 is None:
            # base point at the window edge, away from the sub-arc
            s0 = float(sgrid[0])
        self.s0 = s0
        self.sub_arc = sub_arc
        v0 = np.interp(s0, sgrid, cum)
        self._sgrid = sgrid
        self._V = cum - v0
        self._v = v
        self._V_spline = make_interp_spline(sgrid, self._V, k=5)

    def _V_at(self, s):
        s = np.clip(s, self._sgrid[0], self._sgrid[-1])
        return self._V_spline(s)

    def _v_at(self, s):
        inside = (s >= self._sgrid[0]) & (s <= self._sgrid[-1])
        out = np.zeros_like(np.asarray(s, dtype=np.float64))
        if np.any(inside):
            out[inside] = self._v(s[inside])
        return out

    def chart_coords(self, points):
        return self.curve.project(points)

    def potential(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        s, y = self.curve.project(pts)
        phi = -cutoff_bump(y / self.r) * self._V_at(s)
        phi[np.abs(y) >= self.r] = 0.0
        return phi

    def velocity(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.zeros_like(pts)
        s, y = self.curve.project(pts)
        near = np.abs(y) < self.r * _G_SUPP
        if not near.any():
            return out
        s, y = s[near], y[near]
        g = cutoff_bump(y / self.r)
        gp = cutoff_bump_deriv(y / self.r)
        kap = self.curve.curvature(s)
        vv = self._v_at(s)
        vbig = self._V_at(s)
        eta = self.curve.normal(s)
        tau = self.curve.tangent(s)
        coef_eta = g * vv / (1.0 - kap * y)
        coef_tau = -(gp / self.r) * vbig
        out[near] = coef_eta[:, None] * eta + coef_tau[:, None] * tau
        return out

    def divergence_fd(self, points, h: float | None = None) -> np.ndarray:
        """Fourth-order central finite-difference divergence (independent check).

        The default step balances truncation against evaluation noise for
        fields varying at the cut-off transition scale."""
        h = h or max(self.r * 1.5e-4, 1e-7)
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))

        def u(q):
            return self.velocity(q)

        e1 = np.array([h, 0.0])
        e2 = np.array([0.0, h])
        d1 = (-u(pts + 2 * e1)[:, 0] + 8 * u(pts + e1)[:, 0]
              - 8 * u(pts - e1)[:, 0] + u(pts - 2 * e1)[:, 0]) / (12 * h)
        d2 = (-u(pts + 2 * e2)[:, 1] + 8 * u(pts + e2)[:, 1]
              - 8 * u(pts - e2)[:, 1] + u(pts - 2 * e2)[:, 1]) / (12 * h)
        return d1 + d2


def _cumulative(x, y):
    from scipy.integrate import cumulative_simpson

    return np.concatenate([[0.0], cumulative_simpson(y, x=x)])


def stream_from_normal_velocity(curve: Curve, v, r: float, sub_arc=None,
                                s0: float | None = None) -> StreamField:
    return StreamField(curve, v, r, sub_arc=sub_arc, s0=s0)


# ---------------------------------------------------------------------------
# homothetic fields

class HomotheticField:
    """u(t, x) = lambda'(t) ubar(x / lambda(t)) for a static base field ubar."""

    def __init__(self, base: StreamField, lam, dlam):
        self.base = base
        self.lam = lam
        self.dlam = dlam

    def velocity(self, t: float, points) -> np.ndarray:
        lam = self.lam(t)
        dl = self.dlam(t)
        if dl == 0.0:
            return np.zeros_like(np.atleast_2d(points))
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return dl * self.base.velocity(pts / lam)


def homothetic_field(bar_curve: Curve, lam, dlam, r: float, sub_arc=None) -> HomotheticField:
    """Compatible field for Gamma(t) = lambda(t) * bar_curve.

    The base normal velocity is vbar(x) = x . eta(x); closed curves are always
    rejected because their vbar flux equals +-2 |enclosed area| != 0.
    """

    def vbar(s):
        x = bar_curve.eval(s)
        eta = bar_curve.normal(s)
        return np.sum(x * eta, axis=-1)

    base = stream_from_normal_velocity(bar_curve, vbar, r, sub_arc=sub_arc)
    return HomotheticField(base, lam, dlam)


# ---------------------------------------------------------------------------
# area-preserving tube chart (and the plain one)

@dataclass
class TubeChart:
    curve: Curve
    r: float
    mode: str = "area_preserving"   # or "plain"

    def __post_init__(self):
        ell = self.curve.speed
        rbar = self.curve.tubular_radius()
        if self.mode == "area_preserving" and 2.0 * self.r / ell > rbar:
            raise TubeTooWide(f"2r/ell = {2 * self.r / ell:.4g} exceeds tubular radius {rbar:.4g}")
        if self.mode == "plain" and self.r > rbar:
            raise TubeTooWide(f"r = {self.r:.4g} exceeds tubular radius {rbar:.4g}")

    def alpha(self, s, yprime):
        if self.mode == "plain":
            return np.asarray(yprime, dtype=np.float64) * self.curve.speed
        kap = self.curve.curvature(s)
        disc = np.sqrt(np.maximum(1.0 - 2.0 * np.asarray(yprime) * kap, 1e-14))
        return 2.0 * np.asarray(yprime) / (1.0 + disc)

    def map(self, s, y):
        """Phi(s, y) = gamma(s) + alpha(s, y/ell) eta(s)."""
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        ell = self.curve.speed
        a = self.alpha(s, y / ell)
        return self.curve.eval(s) + a[..., None] * self.curve.normal(s)

    def inverse(self, points):
        """(s, y) chart coordinates from the nearest-point projection."""
        s, d = self.curve.project(points)
        if self.mode == "plain":
            return s, d
        kap = self.curve.curvature(s)
        yprime = d - 0.5 * kap * d * d
        return s, yprime * self.curve.speed

    def jacobian_fd(self, s, y, h: float = 1e-6):
        """det(grad Phi) by central differences, in the (tau, eta) frame.

        The frame (tau, eta) with eta = -tau^perp is negatively oriented, so the
        xy determinant is the negative of this; area preservation is the frame
        determinant being 1."""
        ds = (self.map(s + h, y) - self.map(s - h, y)) / (2.0 * h)
        dy = (self.map(s, y + h) - self.map(s, y - h)) / (2.0 * h)
        tau = self.curve.tangent(s)
        eta = self.curve.normal(s)
        a11 = np.sum(ds * tau, axis=-1)
        a21 = np.sum(ds * eta, axis=-1)
        a12 = np.sum(dy * tau, axis=-1)
        a22 = np.sum(dy * eta, axis=-1)
        return a11 * a22 - a12 * a21


def area_preserving_chart(curve: Curve, r: float) -> TubeChart:
    return TubeChart(curve, r, mode="area_preserving")


# ---------------------------------------------------------------------------
# canonical solution

@dataclass
class Profile:
    """Even, bounded, zero-average strip profile on [-1/2, 1/2]."""

    fn: callable

    def __post_init__(self):
        z = np.linspace(-0.5, 0.5, 4097)
        vals = np.asarray(self.fn(z), dtype=np.float64)
        if np.max(np.abs(vals - self.fn(-z))) > 1e-10 * max(np.max(np.abs(vals)), 1e-300):
            raise ValueError("profile must be even")
        from scipy.integrate import simpson

        if abs(simpson(vals, x=z)) > 1e-10 * max(np.max(np.abs(vals)), 1e-300):
            raise ValueError("profile must have zero average")

    def __call__(self, z):
        return self.fn(z)


def default_profile() -> Profile:
    """cos(2 pi y) on [-1/2, 1/2]: even with zero average."""
    return Profile(lambda z: np.cos(2.0 * np.pi * np.asarray(z)))


def canonical_solution(chart: TubeChart, profile: Profile):
    """rho(x) = profile(y / r) on |y| <= r/2 in area-preserving tube coordinates."""

    r = chart.r

    def rho(points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        s, y = chart.inverse(pts)
        out = np.zeros(pts.shape[0])
        inside = np.abs(y) <= 0.5 * r
        # restrict to the genuine tube (distance below the chart's reach)
        ell = chart.curve.speed
        dist = np.abs(np.sum((pts - chart.curve.eval(s)) * chart.curve.normal(s), axis=-1))
        inside &= dist <= 2.0 * r / ell
        if chart.curve.kind == "proper":
            inside &= (s > -0.5) & (s < 1.5)
        out[inside] = profile(y[inside] / r)
        return out

    return rho


# ---------------------------------------------------------------------------
# canonical velocity field of a time-dependent curve (truncated potential)

class TimeCurve:
    """Family t -> Curve with constant-speed parametrizations; builder returns a
    Curve for each requested time (cached)."""

    def __init__(self, builder, t_span):
        self.builder = builder
        self.t_span = t_span
        self._cache = {}

    def at(self, t: float) -> Curve:
        key = round(float(t), 12)
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = self.builder(float(t))
        return self._cache[key]

    def speed(self, t: float) -> float:
        return self.at(t).speed


class CanonicalTubeField:
    """Canonical divergence-free field of a time-dependent curve: the velocity
    of the area-preserving tube chart, truncated by the fixed cut-off.

    phi is assembled on the chart grid from grad_z psi = -J V with
    V = (grad_z Phi)^(-1) d_t Phi; u = g w - (psi g'/r) d_s Phi.
    """

    def __init__(self, curves: TimeCurve, r: float, dt: float = 1e-5,
                 s_window=(-0.2, 1.2), n_s: int = 1537, n_y: int = 129):
        self.curves = curves
        self.r = r
        self.dt = dt
        self.s_window = s_window
        self.n_s = n_s
        self.n_y = n_y
        self._psi_cache = {}

    def _chart(self, t: float) -> TubeChart:
        return TubeChart(self.curves.at(t), self.r)

    def chart_velocity(self, t: float, s, y):
        """w(t, Phi(t, s, y)) = d_t Phi at fixed chart coordinates."""
        h = self.dt
        cp = self._chart(t + h)
        cm = self._chart(t - h)
        return (cp.map(s, y) - cm.map(s, y)) / (2.0 * h)

    def _psi_grid(self, t: float):
        key = round(float(t), 12)
        if key in self._psi_cache:
            return self._psi_cache[key]
        chart = self._chart(t)
        lo, hi = self.s_window
        if chart.curve.kind == "closed":
            lo, hi = 0.0, 1.0
        sg = np.linspace(lo, hi, self.n_s)
        yg = np.linspace(-self.r * _G_SUPP, self.r * _G_SUPP, self.n_y)
        S, Y = np.meshgrid(sg, yg, indexing="ij")
        w = self.chart_velocity(t, S, Y)
        hs = 1e-6
        dPs = (chart.map(S + hs, Y) - chart.map(S - hs, Y)) / (2 * hs)
        dPy = (chart.map(S, Y + hs) - chart.map(S, Y - hs)) / (2 * hs)
        det = dPs[..., 0] * dPy[..., 1] - dPs[..., 1] * dPy[..., 0]
        vs = (dPy[..., 1] * w[..., 0] - dPy[..., 0] * w[..., 1]) / det
        vy = (-dPs[..., 1] * w[..., 0] + dPs[..., 0] * w[..., 1]) / det
        # grad_z psi = (V_y, -V_s)
        from scipy.integrate import cumulative_trapezoid

        i0 = int(np.argmin(np.abs(yg)))
        psi_on_curve = np.concatenate([[0.0], cumulative_trapezoid(vy[:, i0], sg)])
        up = -np.concatenate([np.zeros((self.n_s, 1)),
                              cumulative_trapezoid(vs, yg, axis=1)], axis=1)
        psi = psi_on_curve[:, None] + up - up[:, i0][:, None]
        # renormalize at z0 = (0, 0)
        s0_idx = int(np.argmin(np.abs(sg - 0.0)))
        psi = psi - psi[s0_idx, i0]
        out = (sg, yg, psi, chart)
        if len(self._psi_cache) > 16:
            self._psi_cache.clear()
        self._psi_cache[key] = out
        return out

    def potential(self, t: float, points):
        sg, yg, psi, chart = self._psi_grid(t)
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        s, y = chart.inverse(pts)
        g = cutoff_bump(y / self.r)
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator((sg, yg), psi, bounds_error=False, fill_value=0.0)
        vals = interp(np.stack([s, y], axis=-1))
        return np.asarray(vals) * g

    def velocity(self, t: float, points):
        sg, yg, psi, chart = self._psi_grid(t)
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.zeros_like(pts)
        s, y = chart.inverse(pts)
        dist = np.abs(np.sum((pts - chart.curve.eval(s)) * chart.curve.normal(s), axis=-1))
        near = (np.abs(y) < self.r * _G_SUPP) & (dist < 2.2 * self.r / chart.curve.speed)
        near &= (s > sg[0]) & (s < sg[-1])
        if not near.any():
            return out
        sn, yn = s[near], y[near]
        w = self.chart_velocity(t, sn, yn)
        g = cutoff_bump(yn / self.r)
        gp = cutoff_bump_deriv(yn / self.r)
        hs = 1e-6
        dPs = (chart.map(sn + hs, yn) - chart.map(sn - hs, yn)) / (2 * hs)
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator((sg, yg), psi, bounds_error=False, fill_value=0.0)
        psin = np.asarray(interp(np.stack([sn, yn], axis=-1)))
        out[near] = g[:, None] * w - (psin * gp / self.r)[:, None] * dPs
        return out

    def solution(self, profile: Profile):
        def rho(t, points):
            chart = self._chart(t)
            return canonical_solution(chart, profile)(points)

        return rho


# ---------------------------------------------------------------------------
# truncated potential of a generic area-preserving chart flow (Prop-7.1 style)

class TruncatedPotentialField:
    """Wrap a flow given as charts z -> Phi(t, z) on a rectangle with a cutoff
    g(z) that is 1 on the inner region D'; the field equals the flow velocity on
    the image of D' and is globally divergence-free.

    The flow object must provide map(t, Z) and inverse(t, X) for arrays of
    shape (..., 2), plus z_domain = ((z1min, z1max), (z2min, z2max)).
    """

    def __init__(self, flow, g, grad_g, z0, dt: float = 1e-5, n_grid: int = 257,
                 jacobian_tol: float = 1e-6):
        from .errors import NotSimplyConnected

        if not getattr(flow, "simply_connected", True):
            raise NotSimplyConnected("flow domain declared not simply connected")
        self.flow = flow
        self.g = g
        self.grad_g = grad_g
        self.z0 = np.asarray(z0, dtype=np.float64)
        self.dt = dt
        self.n_grid = n_grid
        (a1, b1), (a2, b2) = flow.z_domain
        z1 = np.linspace(a1, b1, n_grid)
        z2 = np.linspace(a2, b2, n_grid)
        self._z1, self._z2 = z1, z2
        self._check_area(jacobian_tol)

    def _check_area(self, tol):
        rng = np.random.default_rng(7)
        (a1, b1), (a2, b2) = self.flow.z_domain
        z = np.stack([rng.uniform(a1 + 1e-3, b1 - 1e-3, 256),
                      rng.uniform(a2 + 1e-3, b2 - 1e-3, 256)], axis=-1)
        h = 1e-6
        for t in (self.flow.t_span[0] + 1e-4, 0.5 * sum(self.flow.t_span)):
            dz1 = (self.flow.map(t, z + [h, 0]) - self.flow.map(t, z - [h, 0])) / (2 * h)
            dz2 = (self.flow.map(t, z + [0, h]) - self.flow.map(t, z - [0, h])) / (2 * h)
            det = dz1[..., 0] * dz2[..., 1] - dz1[..., 1] * dz2[..., 0]
            if np.max(np.abs(det - 1.0)) > tol:
                raise NotAreaPreserving(
                    f"|J Phi - 1| up to {np.max(np.abs(det - 1.0)):.2e} at t={t}"
                )

    def _psi(self, t):
        Z1, Z2 = np.meshgrid(self._z1, self._z2, indexing="ij")
        Z = np.stack([Z1, Z2], axis=-1)
        h = self.dt
        w = (self.flow.map(t + h, Z) - self.flow.map(t - h, Z)) / (2 * h)
        hz = 1e-6
        d1 = (self.flow.map(t, Z + [hz, 0]) - self.flow.map(t, Z - [hz, 0])) / (2 * hz)
        d2 = (self.flow.map(t, Z + [0, hz]) - self.flow.map(t, Z - [0, hz])) / (2 * hz)
        det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        v1 = (d2[..., 1] * w[..., 0] - d2[..., 0] * w[..., 1]) / det
        v2 = (-d1[..., 1] * w[..., 0] + d1[..., 0] * w[..., 1]) / det
        from scipy.integrate import cumulative_trapezoid

        i0 = int(np.argmin(np.abs(self._z2 - self.z0[1])))
        j0 = int(np.argmin(np.abs(self._z1 - self.z0[0])))
        line = np.concatenate([[0.0], cumulative_trapezoid(v2[:, i0], self._z1)])
        up = -np.concatenate([np.zeros((len(self._z1), 1)),
                              cumulative_trapezoid(v1, self._z2, axis=1)], axis=1)
        psi = line[:, None] + up - up[:, i0][:, None]
        psi = psi - psi[j0, i0]
        return psi, w, d1

    def velocity(self, t: float, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        z = self.flow.inverse(t, pts)
        (a1, b1), (a2, b2) = self.flow.z_domain
        inside = (z[..., 0] > a1) & (z[..., 0] < b1) & (z[..., 1] > a2) & (z[..., 1] < b2)
        out = np.zeros_like(pts)
        if not inside.any():
            return out
        psi, w_grid, _ = self._psi(t)
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator((self._z1, self._z2), psi,
                                         bounds_error=False, fill_value=0.0)
        zi = z[inside]
        phi_vals = interp(zi)
        h = self.dt
        w = (self.flow.map(t + h, zi) - self.flow.map(t - h, zi)) / (2 * h)
        gv = self.g(zi)
        gg = self.grad_g(zi)  # gradient in z coordinates
        # grad_x g = (grad_z Phi)^(-T) grad_z g;  u = g w + phi (grad_x g)^perp
        hz = 1e-6
        d1 = (self.flow.map(t, zi + [hz, 0]) - self.flow.map(t, zi - [hz, 0])) / (2 * hz)
        d2 = (self.flow.map(t, zi + [0, hz]) - self.flow.map(t, zi - [0, hz])) / (2 * hz)
        det = (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])[..., None]
        # inverse-transpose action on gg
        gx1 = (d2[..., 1] * gg[..., 0] - d1[..., 1] * gg[..., 1]) / det[..., 0]
        gx2 = (-d2[..., 0] * gg[..., 0] + d1[..., 0] * gg[..., 1]) / det[..., 0]
        perp = np.stack([-gx2, gx1], axis=-1)
        out[inside] = gv[..., None] * w + phi_vals[..., None] * perp
        return out


# ---------------------------------------------------------------------------
# locality check

@dataclass
class LocalityReport:
    fields_agree: bool
    solutions_agree: bool
    max_field_diff: float
    max_solution_diff: float
    rectangle: tuple


def locality_check(curves_a: TimeCurve, curves_b: TimeCurve, x0_fn, s0: float,
                   delta: float, r: float, times, profile: Profile | None = None,
                   tol: float = 1e-6) -> LocalityReport:
    """Compare canonical fields and solutions of two curve families on the
    curved rectangle around a shared sub-arc.

    Preconditions: (a) gamma_a(t, s0) = gamma_b(t, 0) = x0(t); (b) the centered
    sub-arcs of geodesic half-width delta coincide with equal orientation;
    (c) the flux of the normal velocity of curve A over [0, s0] vanishes.
    """
    profile = profile or default_profile()
    times = np.asarray(times, dtype=np.float64)
    for t in times:
        ca, cb = curves_a.at(t), curves_b.at(t)
        if abs(ca.speed - cb.speed) > 1e-8 * ca.speed:
            raise PreconditionFailed("speed", f"ell mismatch at t={t}")
        x0 = np.asarray(x0_fn(t), dtype=np.float64)
        if np.linalg.norm(ca.eval(s0) - x0) > 1e-7 or np.linalg.norm(cb.eval(0.0) - x0) > 1e-7:
            raise PreconditionFailed("a", f"common point mismatch at t={t}")
        ell = ca.speed
        ss = np.linspace(-delta / ell, delta / ell, 65)
        pa = ca.eval(s0 + ss)
        pb = cb.eval(ss)
        if np.max(np.linalg.norm(pa - pb, axis=-1)) > 1e-7:
            raise PreconditionFailed("b", f"sub-arcs differ at t={t}")
        # (c): flux of the normal velocity of A from parameter 0 to s0
        h = 1e-5
        cap = curves_a.at(t + h)
        cam = curves_a.at(t - h)
        sgrid = np.linspace(0.0, s0, 513)
        vel = (cap.eval(sgrid) - cam.eval(sgrid)) / (2 * h)
        vn = np.sum(vel * ca.normal(sgrid), axis=-1)
        from scipy.integrate import simpson

        fl = float(simpson(vn * ell, x=sgrid))
        vmax = max(float(np.max(np.abs(vn))), 1e-300)
        if abs(fl) > max(1e-6 * ell * s0 * vmax, 1e-9):
            raise PreconditionFailed("c", f"flux over [0, s0] = {fl:.3e} at t={t}")

    fa = CanonicalTubeField(curves_a, r)
    fb = CanonicalTubeField(curves_b, r)
    max_f = 0.0
    max_r = 0.0
    rect = None
    for t in times:
        ca = curves_a.at(t)
        ell = ca.speed
        x0 = np.asarray(x0_fn(t), dtype=np.float64)
        ss = np.linspace(s0 - delta / ell, s0 + delta / ell, 33)
        yy = np.linspace(-2.0 * r / ell * 0.95, 2.0 * r / ell * 0.95, 17)
        S, Y = np.meshgrid(ss, yy, indexing="ij")
        pts = ca.eval(S) + Y[..., None] * ca.normal(S)
        pts = pts.reshape(-1, 2)
        rect = (float(ss[0]), float(ss[-1]), float(yy[0]), float(yy[-1]))
        ua = fa.velocity(t, pts)
        ub = fb.velocity(t, pts)
        scale = max(np.max(np.abs(ua)), np.max(np.abs(ub)), 1e-300)
        max_f = max(max_f, float(np.max(np.abs(ua - ub))) / scale)
        ra = fa.solution(profile)(t, pts)
        rb = fb.solution(profile)(t, pts)
        rscale = max(np.max(np.abs(ra)), np.max(np.abs(rb)), 1e-300)
        max_r = max(max_r, float(np.max(np.abs(ra - rb))) / rscale)
    return LocalityReport(max_f <= tol, max_r <= tol, max_f, max_r, rect)


# ---------------------------------------------------------------------------
# curve file I/O

def write_curve_file(curve: Curve, path: str):
    with open(path, "w") as fh:
        fh.write(f"kind {curve.kind}\n")
        fh.write(f"samples {curve.points.shape[0]}\n")
        fh.write(f"speed {curve.speed!r}\n")
        fh.write(f"time {curve.time!r}\n")
        n = curve.points.shape[0]
        svals = np.arange(n) / (n if curve.kind == "closed" else n - 1)
        for s, (x1, x2) in zip(svals, curve.points):
            fh.write(f"{s!r} {x1!r} {x2!r}\n")


def read_curve_file(path: str) -> Curve:
    meta = {}
    pts = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] in ("kind", "samples", "speed", "time"):
                meta[parts[0]] = parts[1]
            else:
                pts.append((float(parts[1]), float(parts[2])))
    return Curve(np.asarray(pts), meta["kind"], time=float(meta.get("time", 0.0)),
                 n_samples=len(pts))
