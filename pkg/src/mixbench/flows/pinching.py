"""The pinching flow: a disk is squeezed through a cone-corner neck into two
lobes, then each lobe repeats the move at half scale, ending in four disks.

The construction runs on [0, 1] in eight sub-steps.  Within each half:
  * a smooth boundary morph (disk -> pinch-ready shape),
  * a homothetic collapse u(t,x) = lam'(t) ubar(x/lam(t)) along the dip curve,
  * the mirrored homothetic expansion that separates the lobes,
  * a smooth morph of each lobe into a disk.
The second half applies two rotated, scaled copies of the first to the lobes.

All shapes are parametrized by the canonical scale (initial disk radius 1/4);
conjugated copies rescale positions, times are shifted only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.optimize import brentq

from .._accel import bicubic_periodic
from ..errors import OutOfTimeRange
from ..field import GridSpec, ScalarField
from ..geometry import (Curve, cinf_bump, cinf_step, stream_from_normal_velocity)

__all__ = ["PinchingFlow", "pinch_lambda", "pinch_dlambda"]


# ---------------------------------------------------------------------------
# the homothety clock

def pinch_lambda(t):
    """exp(2 - 1/(1-4t)) on [1/8, 1/4): 1 at t=1/8, -> 0 as t -> 1/4."""
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore", over="ignore"):
        z = np.where(t < 0.25, 1.0 / (1.0 - 4.0 * np.minimum(t, 0.2499999999)), np.inf)
        out = np.where(t < 0.25, np.exp(2.0 - z), 0.0)
    return out


def pinch_dlambda(t):
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore", over="ignore"):
        z = np.where(t < 0.25, 1.0 / (1.0 - 4.0 * np.minimum(t, 0.2499999999)), np.inf)
        out = np.where(t < 0.25, -4.0 * z * z * np.exp(2.0 - z), 0.0)
    return out


# ---------------------------------------------------------------------------
# canonical geometry (initial disk radius 1/4)

_Y0 = 0.05        # neck height of the dip curve
_RNECK = 0.025    # neck curvature radius (must stay below _Y0 so the axis
                  # segment is attracted to the neck trajectory)
_A1, _A2 = 0.025, 0.168   # blend window: neck profile -> cone ray
_CAP_TURN = 0.35  # fraction of the cap spent turning


def _dip_cbar(a, h_u):
    """Upper dip curve as an even graph over a = |x1|; equals the cone ray
    |x1| beyond the blend window.  The neck profile saturates so the blend
    stays gentle enough for a usable tubular radius."""
    a = np.abs(np.asarray(a, dtype=np.float64))
    xi = a / _RNECK
    neck = _Y0 + _RNECK * xi * xi / (2.0 + 0.5 * xi * xi)
    s1 = cinf_step((a - _A1) / (_A2 - _A1))
    bump = cinf_bump((a - 0.5 * (_A1 + _A2)) / (0.5 * (_A2 - _A1)))
    return (1.0 - s1) * neck + s1 * a - h_u * bump


@lru_cache(maxsize=1)
def _solve_dip():
    """Undershoot amplitude making the dip area-neutral against the cone."""

    def signed_area(h_u):
        a = np.linspace(0.0, _A2 + 0.02, 20001)
        return simpson(_dip_cbar(a, h_u) - a, x=a)

    h_u = brentq(signed_area, 0.0, 0.2, xtol=1e-14)
    return float(h_u)


def _cap_polyline(rho1, n=600):
    """Right cap: leaves the upper cone ray at radius rho1, turns smoothly and
    lands perpendicular on the x1 axis.  Returns the upper half polyline."""
    u = np.linspace(0.0, 1.0, n)
    psi = np.pi / 4.0 - 0.75 * np.pi * cinf_step(u / _CAP_TURN)
    c, s = np.cos(psi), np.sin(psi)
    int_s = np.concatenate([[0.0], cumulative_simpson(s, x=u)])
    p1y = rho1 / math.sqrt(2.0)
    length = p1y / (-int_s[-1])
    int_c = np.concatenate([[0.0], cumulative_simpson(c, x=u)])
    x = rho1 / math.sqrt(2.0) + length * int_c
    y = p1y + length * int_s
    y[-1] = 0.0
    return np.stack([x, y], axis=-1)


@lru_cache(maxsize=1)
def _solve_cap():
    """Cap start radius rho1 making each outer cap region's area pi/64."""

    def cap_area(rho1):
        return _outer_region_area(rho1) - math.pi / 64.0

    rho1 = brentq(cap_area, 0.27, 0.48, xtol=1e-13)
    return float(rho1)


def _outer_region_area(rho1):
    """Area of the right outer region: between the cone rays, outside the 1/4
    disk, inside the cap."""
    cap = _cap_polyline(rho1)
    # closed polygon: inner arc (radius 1/4, from -pi/4 to pi/4), upper ray,
    # upper cap, mirrored lower cap, lower ray
    th = np.linspace(-np.pi / 4.0, np.pi / 4.0, 400)
    arc = 0.25 * np.stack([np.cos(th), np.sin(th)], axis=-1)
    ray_up = np.stack([np.linspace(0.25 / math.sqrt(2), rho1 / math.sqrt(2), 200),
                       np.linspace(0.25 / math.sqrt(2), rho1 / math.sqrt(2), 200)], axis=-1)
    lower = cap[::-1].copy()
    lower[:, 1] *= -1.0
    ray_dn = ray_up[::-1].copy()
    ray_dn[:, 1] *= -1.0
    poly = np.vstack([arc, ray_up[1:], cap[1:], lower[1:], ray_dn[1:]])
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def rasterize_polygon_mask(poly: np.ndarray, n: int) -> np.ndarray:
    """Even-odd scanline fill of a closed polygon on the centered plane grid."""
    xs = (np.arange(n) + 0.5) / n - 0.5
    out = np.zeros((n, n), dtype=bool)
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for j, yy in enumerate(xs):
        crosses = (y0 <= yy) != (y1 <= yy)
        if not crosses.any():
            continue
        xc = x0[crosses] + (yy - y0[crosses]) / (y1[crosses] - y0[crosses]) \
            * (x1[crosses] - x0[crosses])
        xc.sort()
        for k in range(0, len(xc) - 1, 2):
            out[(xs > xc[k]) & (xs < xc[k + 1]), j] = True
    return out


# ---------------------------------------------------------------------------
# boundary keyframes (canonical coordinates)

def _bowtie_boundary(n_half=1400):
    """Closed boundary of the pinch-ready shape: dip, cone rays, outer caps.
    Counter-clockwise from the right cap's axis point."""
    h_u = _solve_dip()
    rho1 = _solve_cap()
    cap = _cap_polyline(rho1)                      # P1 .. axis point
    a_ray = np.linspace(rho1 / math.sqrt(2.0), _A2, 300, endpoint=False)
    ray = np.stack([a_ray, a_ray], axis=-1)        # upper-right ray inward
    a_dip = np.linspace(_A2, 0.0, 500)
    dip = np.stack([a_dip, _dip_cbar(a_dip, h_u)], axis=-1)
    quarter = np.vstack([cap[::-1], ray, dip])     # axis point .. neck (0, y0)
    left = quarter[::-1].copy()
    left[:, 0] *= -1.0                             # neck .. left axis point
    upper = np.vstack([quarter, left[1:]])
    lower = upper[::-1].copy()
    lower[:, 1] *= -1.0
    return np.vstack([upper, lower[1:-1]])


def _circle_boundary(radius, center=(0.0, 0.0), n=2048):
    th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack([center[0] + radius * np.cos(th),
                     center[1] + radius * np.sin(th)], axis=-1)


def _lobe_boundary():
    """Closed boundary of the right lobe at the end of the spreading step:
    right-opening dip, rays, cap."""
    h_u = _solve_dip()
    rho1 = _solve_cap()
    cap = _cap_polyline(rho1)
    a_ray = np.linspace(rho1 / math.sqrt(2.0), _A2, 300, endpoint=False)
    ray = np.stack([a_ray, a_ray], axis=-1)
    b_dip = np.linspace(_A2, 0.0, 500)
    dip = np.stack([_dip_cbar(b_dip, h_u), b_dip], axis=-1)   # x1 = cbar(|x2|)
    upper = np.vstack([cap[::-1], ray, dip])       # axis pt .. lobe tip (y0, 0)
    lower = upper[::-1].copy()
    lower[:, 1] *= -1.0
    return np.vstack([upper, lower[1:-1]])


def _align_boundary(poly, n_samples=2048):
    """Constant-speed closed resample starting at the rightmost axis crossing,
    counter-clockwise."""
    c = Curve(poly, "closed", n_samples=n_samples)
    pts = c.points
    # roll so the first sample is the one with largest x1 among |x2| minimal
    start = np.argmax(pts[:, 0] - 10.0 * np.abs(pts[:, 1]))
    pts = np.roll(pts, -start, axis=0)
    if _polygon_area(pts) < 0:
        pts = pts[::-1]
        pts = np.roll(pts, 1, axis=0)
    return pts


class _MorphFamily:
    """Smooth interpolation between two matched closed boundaries with exact
    area renormalization; provides curves, normal velocities and rasters."""

    def __init__(self, start_poly, end_poly, t_a, t_b, area, n_samples=2048):
        self.a = _align_boundary(start_poly, n_samples)
        self.b = _align_boundary(end_poly, n_samples)
        self.t_a, self.t_b = t_a, t_b
        self.area = area

    def _sigma(self, t):
        u = (t - self.t_a) / (self.t_b - self.t_a)
        return float(cinf_step(np.asarray(u)))

    def boundary(self, t):
        sig = self._sigma(t)
        pts = (1.0 - sig) * self.a + sig * self.b
        scale = math.sqrt(self.area / _polygon_area(pts))
        return pts * scale

    def curve(self, t, n_samples=1024) -> Curve:
        return Curve(self.boundary(t), "closed", time=t, n_samples=n_samples)

    def normal_velocity(self, t, h=1e-5):
        """Returns (curve, v_n as a callable of the curve parameter)."""
        c0 = self.curve(t)
        bp = self.boundary(t + h)
        bm = self.boundary(t - h)
        vel_pts = (bp - bm) / (2.0 * h)
        # boundary points are matched by construction; project them onto the
        # resampled curve parameter to build v_n(s)
        mid = self.boundary(t)
        s_mid, _ = c0.project(mid)
        eta = c0.normal(s_mid)
        vn = np.sum(vel_pts * eta, axis=-1)
        order = np.argsort(s_mid)
        s_sorted = s_mid[order]
        vn_sorted = vn[order]

        def v(s):
            return np.interp(np.mod(s, 1.0), s_sorted, vn_sorted,
                             period=1.0)

        return c0, v


# ---------------------------------------------------------------------------
# the canonical half-process

class _CanonicalPinch:
    """Pinching process at canonical scale on the clock [0, 1/2]; the final
    lobe-disk offset c_off is a free parameter."""

    def __init__(self, c_off: float):
        self.c_off = c_off
        self.h_u = _solve_dip()
        self.rho1 = _solve_cap()
        bowtie = _bowtie_boundary()
        self.morph1 = _MorphFamily(_circle_boundary(0.25), bowtie,
                                   0.0, 0.125, math.pi / 16.0)
        lobe = _lobe_boundary()
        r2 = 0.25 / math.sqrt(2.0)
        self.morph4 = _MorphFamily(lobe, _circle_boundary(r2, (c_off, 0.0)),
                                   0.375, 0.5, math.pi / 32.0)
        self._build_dip_field()

    # -- homothetic machinery ------------------------------------------------

    def _build_dip_field(self):
        a = np.linspace(-0.30, 0.30, 4096)
        pts = np.stack([a, _dip_cbar(a, self.h_u)], axis=-1)
        self.dip_curve = Curve(pts, "proper", n_samples=4096)
        tub = self.dip_curve.tubular_radius()
        min_height = float(_dip_cbar(np.linspace(0, _A2, 2001), self.h_u).min())
        self.r_tube = min(0.8 * tub, 0.45 * min_height)
        # the parameter window covering |x1| <= A2 (the deviation zone)
        s_all = np.linspace(0.0, 1.0, 4001)
        xs = self.dip_curve.eval(s_all)[:, 0]
        s_lo = float(s_all[np.argmin(np.abs(xs + _A2))])
        s_hi = float(s_all[np.argmin(np.abs(xs - _A2))])

        def vbar(s):
            x = self.dip_curve.eval(s)
            eta = self.dip_curve.normal(s)
            return np.sum(x * eta, axis=-1)

        self.ubar = stream_from_normal_velocity(self.dip_curve, vbar, self.r_tube,
                                                sub_arc=(s_lo, s_hi))
        # grid-sampled ubar for fast advection queries (upper tube bounding box)
        self._ubar_grid = None

    def _ubar_gridded(self):
        if self._ubar_grid is None:
            pad = 1.3 * self.r_tube
            x_lo, x_hi = -_A2 - pad, _A2 + pad
            heights = _dip_cbar(np.linspace(0, _A2, 512), self.h_u)
            y_lo, y_hi = float(heights.min()) - pad, float(heights.max()) + pad
            nx, ny = 2048, 1024
            gx = np.linspace(x_lo, x_hi, nx)
            gy = np.linspace(y_lo, y_hi, ny)
            X, Y = np.meshgrid(gx, gy, indexing="ij")
            U = self.ubar.velocity(np.stack([X.ravel(), Y.ravel()], axis=-1))
            self._ubar_grid = (gx, gy, U[:, 0].reshape(nx, ny), U[:, 1].reshape(nx, ny))
        return self._ubar_grid

    def ubar_at(self, pts, exact=False):
        """ubar on the upper half-plane, symmetrized exactly in x1 (odd u1)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        sign1 = np.sign(pts[:, 0])
        q = np.stack([np.abs(pts[:, 0]), pts[:, 1]], axis=-1)
        if exact:
            u = self.ubar.velocity(q)
        else:
            gx, gy, U1, U2 = self._ubar_gridded()
            inside = (q[:, 0] > gx[0]) & (q[:, 0] < gx[-1]) \
                & (q[:, 1] > gy[0]) & (q[:, 1] < gy[-1])
            u = np.zeros_like(q)
            if inside.any():
                dxg = gx[1] - gx[0]
                dyg = gy[1] - gy[0]
                fx = (q[inside, 0] - gx[0] + 0.5 * dxg) / (len(gx) * dxg)
                fy = (q[inside, 1] - gy[0] + 0.5 * dyg) / (len(gy) * dyg)
                u[inside, 0] = bicubic_periodic(U1, fx, fy)
                u[inside, 1] = bicubic_periodic(U2, fx, fy)
        u[:, 0] *= sign1
        # u1 is odd, u2 even across the x2 axis mirror handled by caller
        return u

    def _homothetic_velocity(self, t, pts, exact=False):
        """Steps 2 (collapse) and 3 (spread) with exact mirror symmetries."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if t < 0.25:
            lam = float(pinch_lambda(t))
            dl = float(pinch_dlambda(t))
            sign2 = np.sign(pts[:, 1])
            q = np.stack([pts[:, 0], np.abs(pts[:, 1])], axis=-1)
            u = self.ubar_at(q / lam, exact=exact) * dl
            u[:, 1] *= sign2
            return u
        tm = 0.5 - t
        lam = float(pinch_lambda(tm))
        dl = -float(pinch_dlambda(tm))
        # right-opening curve = ccw rotation of the dip by -90 deg; conjugate
        sign1 = np.sign(pts[:, 0])
        q = np.stack([np.abs(pts[:, 0]), pts[:, 1]], axis=-1)
        # rot(+90): (a,b)->(-b,a) maps right-opening geometry to the dip frame
        qd = np.stack([-q[:, 1], q[:, 0]], axis=-1)
        sign2d = np.sign(qd[:, 1])  # = sign of q[:,0] = +1
        ud = self.ubar_at(qd / lam, exact=exact) * dl
        # map the field back: rot(-90): (a,b)->(b,-a)
        u = np.stack([ud[:, 1], -ud[:, 0]], axis=-1)
        u[:, 0] *= sign1
        # mirror in x2 was handled inside ubar_at via oddness in the rotated x1
        return u

    def velocity(self, t, pts, exact=False):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if t < 0.0 or t > 0.5 + 1e-12:
            raise OutOfTimeRange(f"canonical pinch defined on [0, 1/2], got {t}")
        if t <= 0.125:
            return self._morph_velocity(self.morph1, t, pts)
        if t < 0.375:
            return self._homothetic_velocity(t, pts, exact=exact)
        return self._morph_velocity(self.morph4, t, pts, mirror=True)

    @lru_cache(maxsize=48)
    def _morph_stream(self, key):
        family, t = key
        fam = self.morph1 if family == 1 else self.morph4
        c0, v = fam.normal_velocity(t)
        r = min(0.6 * c0.tubular_radius(), 0.04)
        return stream_from_normal_velocity(c0, v, r)

    def _morph_velocity(self, fam, t, pts, mirror=False):
        # clamp slightly inside the window so one-sided limits apply at joints
        t = min(max(t, fam.t_a + 1e-9), fam.t_b - 1e-9)
        sf = self._morph_stream((1 if fam is self.morph1 else 4, round(t, 12)))
        if not mirror:
            return sf.velocity(pts)
        # step 4 handles the right lobe; the left is its mirror image
        pts = np.atleast_2d(pts)
        right = pts[:, 0] >= 0.0
        out = np.zeros_like(pts)
        if right.any():
            out[right] = sf.velocity(pts[right])
        if (~right).any():
            q = pts[~right].copy()
            q[:, 0] *= -1.0
            uq = sf.velocity(q)
            uq[:, 0] *= -1.0
            out[~right] = uq
        return out

    # -- region membership ----------------------------------------------------

    @lru_cache(maxsize=8)
    def _mask_cache(self, key):
        which, t, n = key
        if which == "morph1":
            poly = self.morph1.boundary(t)
            return rasterize_polygon_mask(poly, n)
        if which == "morph4":
            poly = self.morph4.boundary(t)
            m = rasterize_polygon_mask(poly, n)
            return m | m[::-1, :]
        if which == "outer":
            # fixed outer caps (right and left), outside the 1/4 disk
            cap = _cap_polyline(self.rho1)
            a_ray = np.linspace(self.rho1 / math.sqrt(2.0), 0.25 / math.sqrt(2.0), 200)
            ray = np.stack([a_ray, a_ray], axis=-1)
            th = np.linspace(np.pi / 4.0, -np.pi / 4.0, 300)
            arc = 0.25 * np.stack([np.cos(th), np.sin(th)], axis=-1)
            lower_ray = ray[::-1].copy()
            lower_ray[:, 1] *= -1.0
            lower_cap = cap.copy()
            lower_cap[:, 1] *= -1.0
            poly = np.vstack([cap[::-1], ray, arc, lower_ray, lower_cap])
            m = rasterize_polygon_mask(poly, n)
            return m | m[::-1, :]
        raise KeyError(which)

    def inside(self, t, n: int) -> np.ndarray:
        """Boolean raster of E(t) on the centered n x n grid."""
        if t <= 0.125:
            return self._mask_cache(("morph1", round(float(t), 12), n))
        if t >= 0.375:
            return self._mask_cache(("morph4", round(float(t), 12), n))
        xs = (np.arange(n) + 0.5) / n - 0.5
        X1, X2 = np.meshgrid(xs, xs, indexing="ij")
        pts = np.stack([X1.ravel(), X2.ravel()], axis=-1)
        outer = self._mask_cache(("outer", 0.0, n))
        return outer | self._inside_cone_phase(t, pts).reshape(n, n)

    def _inside_cone_phase(self, t, pts) -> np.ndarray:
        """Membership in E(t) inside the 1/4 disk during the homothetic phases."""
        x1 = np.abs(pts[:, 0])
        x2 = np.abs(pts[:, 1])
        in_b = pts[:, 0] ** 2 + pts[:, 1] ** 2 < 0.0625
        if t < 0.25:
            lam = float(pinch_lambda(t))
            if lam <= 0.0:
                return in_b & (x2 < x1)
            return in_b & (x2 < lam * _dip_cbar(x1 / lam, self.h_u))
        lam = float(pinch_lambda(0.5 - t))
        if lam <= 0.0:
            return in_b & (x1 > x2)
        return in_b & (x1 > lam * _dip_cbar(x2 / lam, self.h_u))

    def inside_points(self, t, pts) -> np.ndarray:
        """Point-predicate membership in E(t) (exact polygon tests for the
        morph phases)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if t <= 0.125:
            return _poly_contains(self.morph1.boundary(t), pts)
        if t >= 0.375:
            right = _poly_contains(self.morph4.boundary(t), pts)
            mirr = pts.copy()
            mirr[:, 0] *= -1.0
            return right | _poly_contains(self.morph4.boundary(t), mirr)
        return self._outer_contains(pts) | self._inside_cone_phase(t, pts)

    def _outer_contains(self, pts) -> np.ndarray:
        if not hasattr(self, "_outer_poly"):
            cap = _cap_polyline(self.rho1)
            a_ray = np.linspace(self.rho1 / math.sqrt(2.0), 0.25 / math.sqrt(2.0), 200)
            ray = np.stack([a_ray, a_ray], axis=-1)
            th = np.linspace(np.pi / 4.0, -np.pi / 4.0, 300)
            arc = 0.25 * np.stack([np.cos(th), np.sin(th)], axis=-1)
            lower_ray = ray[::-1].copy()
            lower_ray[:, 1] *= -1.0
            lower_cap = cap.copy()
            lower_cap[:, 1] *= -1.0
            self._outer_poly = np.vstack([cap[::-1], ray, arc, lower_ray, lower_cap])
        right = _poly_contains(self._outer_poly, pts)
        mirr = pts.copy()
        mirr[:, 0] *= -1.0
        return right | _poly_contains(self._outer_poly, mirr)


# ---------------------------------------------------------------------------
# assembled flow on [0, 1]

_SQ2 = math.sqrt(2.0)


class PinchingFlow:
    """The full [0, 1] pinching evolution: one canonical half at scale one,
    then two rotated copies at scale 1/sqrt(2) acting on the lobes."""

    def __init__(self):
        self.first = _CanonicalPinch(c_off=0.25)
        self.second = _CanonicalPinch(c_off=0.25 * _SQ2)
        self.centers = (np.array([0.25, 0.0]), np.array([-0.25, 0.0]))
        self.scale2 = 1.0 / _SQ2

    # conjugation for the second half: x = c + s R z, R = rot(+90)
    def _to_sub(self, pts, center):
        rel = (np.atleast_2d(pts) - center) / self.scale2
        return np.stack([rel[:, 1], -rel[:, 0]], axis=-1)   # R^-1 = rot(-90)

    def _from_sub_vec(self, v):
        return self.scale2 * np.stack([-v[:, 1], v[:, 0]], axis=-1)   # s R v

    def velocity(self, t, pts, exact=False):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if t < -1e-12 or t > 1.0 + 1e-12:
            raise OutOfTimeRange(f"pinching flow defined on [0, 1], got {t}")
        t = min(max(t, 0.0), 1.0)
        if t <= 0.5:
            return self.first.velocity(min(t, 0.5 - 1e-12), pts, exact=exact)
        out = np.zeros_like(pts)
        for c in self.centers:
            z = self._to_sub(pts, c)
            uz = self.second.velocity(t - 0.5, z, exact=exact)
            out += self._from_sub_vec(uz)
        return out

    def inside(self, t, n: int) -> np.ndarray:
        if t <= 0.5:
            return self.first.inside(t, n)
        xs = (np.arange(n) + 0.5) / n - 0.5
        X1, X2 = np.meshgrid(xs, xs, indexing="ij")
        pts = np.stack([X1.ravel(), X2.ravel()], axis=-1)
        total = np.zeros(n * n, dtype=bool)
        for c in self.centers:
            z = self._to_sub(pts, c)
            # evaluate membership of the sub-process by nearest-cell lookup on
            # its own raster at matched resolution
            sub_mask = self.second.inside(t - 0.5, n)
            idx = np.floor((z + 0.5) * n).astype(int)
            ok = (idx[:, 0] >= 0) & (idx[:, 0] < n) & (idx[:, 1] >= 0) & (idx[:, 1] < n)
            sel = np.zeros(n * n, dtype=bool)
            sel[ok] = sub_mask[idx[ok, 0], idx[ok, 1]]
            total |= sel
        return total.reshape(n, n)

    def indicator(self, t, n: int) -> ScalarField:
        """Raster of 1_E(t) - pi/16 on the torus grid (zero mean by area)."""
        mask = self.inside(t, n)
        vals = mask.astype(np.float64) - math.pi / 16.0
        f = ScalarField(GridSpec(n), vals)
        f.mean_removed = abs(vals.mean()) <= 1e-12 * max(1.0, np.abs(vals).max())
        return f

    def area(self, t, n: int = 1024) -> float:
        return float(self.inside(t, n).mean())

    def probe_segment(self, count: int = 9) -> np.ndarray:
        """Seeds on the collapsing vertical segment {0} x (0, y0)."""
        q = np.linspace(0.1, 0.9, count)
        return np.stack([np.zeros(count), q * _Y0], axis=-1)

    def max_speed(self) -> float:
        """Supremum estimate of |u| over [0, 1] for CFL checks."""
        best = 0.0
        rng = np.random.default_rng(3)
        pts = rng.uniform(-0.48, 0.48, (600, 2))
        for t in np.concatenate([np.linspace(0.01, 0.49, 25),
                                 np.linspace(0.51, 0.99, 25)]):
            u = self.velocity(float(t), pts)
            best = max(best, float(np.max(np.abs(u))))
        return 1.3 * best

    # analytic norm bookkeeping for the homothetic step -----------------------

    def ubar_w_norm(self, s: float = 1.0, p: float = 2.0, n_grid: int = 2048) -> float:
        """Grid W^(s,p) norm of the full (mirrored) static dip field on the
        plane; only (s, p) = (1, 2) and (0, p) are supported."""
        cp = self.first
        gx, gy, U1, U2 = cp._ubar_gridded()
        dx = gx[1] - gx[0]
        dy = gy[1] - gy[0]
        if s == 0:
            dens = (np.abs(U1) ** p + np.abs(U2) ** p)
            return float((dens.sum() * dx * dy * 2.0) ** (1.0 / p))
        if s == 1 and p == 2:
            g11 = np.gradient(U1, dx, axis=0)
            g12 = np.gradient(U1, dy, axis=1)
            g21 = np.gradient(U2, dx, axis=0)
            g22 = np.gradient(U2, dy, axis=1)
            dens = g11**2 + g12**2 + g21**2 + g22**2
            return float(math.sqrt(dens.sum() * dx * dy * 2.0))
        raise ValueError("only (1,2) and (0,p) norms are implemented")

    def homothetic_norm_formula(self, t, s: float = 1.0, p: float = 2.0) -> float:
        """|lam'(t)| lam(t)^(2/p - s) ||ubar||, the plane-scaling prediction."""
        base = self.ubar_w_norm(s, p)
        lam = float(pinch_lambda(t))
        dl = abs(float(pinch_dlambda(t)))
        return dl * lam ** (2.0 / p - s) * base

    def measured_homothetic_norm(self, t, s: float = 1.0, p: float = 2.0,
                                 n_grid: int = 512) -> float:
        """Direct grid measurement of ||u(t)||_(W^(s,p)) on a support-adapted
        window (upper half doubled), exercising the time-dependent code path."""
        lam = float(pinch_lambda(t))
        cp = self.first
        gx, gy, _, _ = cp._ubar_gridded()
        x = np.linspace(gx[0], gx[-1], n_grid) * lam
        y = np.linspace(gy[0], gy[-1], n_grid // 2) * lam
        X, Y = np.meshgrid(x, y, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
        u = cp._homothetic_velocity(float(t), pts, exact=False)
        U1 = u[:, 0].reshape(X.shape)
        U2 = u[:, 1].reshape(X.shape)
        dx = x[1] - x[0]
        dy = y[1] - y[0]
        if s == 0:
            dens = np.abs(U1) ** p + np.abs(U2) ** p
            return float((dens.sum() * dx * dy * 2.0) ** (1.0 / p))
        g11 = np.gradient(U1, dx, axis=0)
        g12 = np.gradient(U1, dy, axis=1)
        g21 = np.gradient(U2, dx, axis=0)
        g22 = np.gradient(U2, dy, axis=1)
        dens = g11**2 + g12**2 + g21**2 + g22**2
        return float(math.sqrt(dens.sum() * dx * dy * 2.0))
