"""The Peano-snake system: keyframe channel curves satisfying the equal-length
and equal-area constraints, canonical strip rasters, deformation-pulse base
velocity fields, and the substitution-driven mixing evolution.

The two base shapes are a straight channel (vertical segment with a detour
whose amplitude h1 tunes the length) and a bent channel (corner-polar graph
whose bulge amplitude h2 tunes the equal-area split).  h2 is solved first so
the bent channel halves the square, then h1 matches the straight channel's
length to the bent one.  Intermediate-time channel motion is out of scope; the
scalar evolves by exact tile substitution at integer times, and the base
velocity fields are static zero-flux deformation pulses supported away from the
tile edges.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from .._accel import bicubic_periodic
from ..field import GridSpec, ScalarField
from ..geometry import (Curve, area_preserving_chart, canonical_solution, cinf_bump,
                        cinf_step, default_profile, stream_from_normal_velocity)
from ..mixscale import (MixingReport, classify_decay, decay_constants, fg_bound,
                        functional_scale, geometric_scale, GeometricScaleParams)
from ..field import plane_h_norm
from ..tiling import (D4, TileLabel, TiledState, Tiling, check_edge_consistency,
                      load_snake_rule, rasterize, schedule_times, substitute,
                      tile_averages)

__all__ = ["SnakeSystem", "straight_channel_points", "bent_channel_points"]

_STUB_THETA = 0.22      # polar width of the exact straight stubs of the bend
_DETOUR_SUPPORT = 0.40  # half-支持 of the straight channel's detour


def straight_channel_points(h1: float, n: int = 3000) -> np.ndarray:
    """Vertical channel (0,-1/2) -> (0,1/2) with an odd detour of amplitude h1:
    the detour keeps both components of the square split exactly in half for
    every h1 (zero-mean odd displacement)."""
    v = np.linspace(-0.5, 0.5, n)
    w = cinf_bump(v / _DETOUR_SUPPORT) * np.sin(np.pi * v / _DETOUR_SUPPORT)
    return np.stack([h1 * w, v], axis=-1)


def bent_channel_r(theta, h2: float):
    """Polar radius about the SE corner (1/2,-1/2), theta in [pi/2, pi]."""
    theta = np.asarray(theta, dtype=np.float64)
    g_e = 1.0 / (2.0 * np.sin(theta))
    g_s = -1.0 / (2.0 * np.cos(theta))
    lo = np.pi / 2.0 + _STUB_THETA
    hi = np.pi - _STUB_THETA
    w = cinf_step((theta - lo) / (hi - lo))
    bump = cinf_bump((theta - 0.75 * np.pi) / (0.5 * (hi - lo)))
    # avoid evaluating the singular stub formulas deep in the opposite zone
    g_e = np.where(theta > hi, 0.0, g_e)
    g_s = np.where(theta < lo, 0.0, g_s)
    return (1.0 - w) * g_e + w * g_s + h2 * bump


def bent_channel_points(h2: float, n: int = 3000) -> np.ndarray:
    # theta decreasing: the channel is parametrized from the S midpoint to the E
    # midpoint, matching the rule data's base orientation
    theta = np.linspace(np.pi, np.pi / 2.0, n)
    r = bent_channel_r(theta, h2)
    return np.stack([0.5 + r * np.cos(theta), -0.5 + r * np.sin(theta)], axis=-1)


def _bent_corner_area(h2: float) -> float:
    theta = np.linspace(np.pi / 2.0, np.pi, 20001)
    r = bent_channel_r(theta, h2)
    return 0.5 * float(simpson(r * r, x=theta))


def _polyline_length(pts: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


@lru_cache(maxsize=1)
def solve_channel_parameters():
    """(h1, h2): h2 halves the square along the bent channel, h1 matches the
    straight channel's in-square length to the bent one."""
    h2 = brentq(lambda h: _bent_corner_area(h) - 0.5, 0.0, 0.9, xtol=1e-13)
    target = _polyline_length(bent_channel_points(h2, 12000))

    def length_gap(h1):
        return _polyline_length(straight_channel_points(h1, 12000)) - target

    h1 = brentq(length_gap, 0.0, 1.2, xtol=1e-13)
    return float(h1), float(h2)


def _with_stubs(pts: np.ndarray, extend: float = 0.35) -> np.ndarray:
    """Extend a channel polyline straight beyond both endpoints (proper curve)."""
    d0 = pts[0] - pts[1]
    d0 /= np.linalg.norm(d0)
    d1 = pts[-1] - pts[-2]
    d1 /= np.linalg.norm(d1)
    pre = pts[0] + np.outer(np.linspace(extend, 0.0, 220, endpoint=False), d0)
    post = pts[-1] + np.outer(np.linspace(0.0, extend, 221)[1:], d1)
    return np.vstack([pre, pts, post])


@dataclass
class _BaseMove:
    name: str
    curve: Curve            # proper curve, in-square window [s_in0, s_in1]
    s_window: tuple         # parameters of the square's entry and exit points
    raster: ScalarField
    pulse_grid: tuple       # (gx, gy, U1, U2) sampled pulse field


class SnakeSystem:
    """Owner of the rule, keyframe curves, strip rasters, pulse fields and the
    substitution evolution."""

    def __init__(self, base_raster_n: int = 512, strip_r: float | None = None,
                 field_grid_n: int = 1024):
        self.rule = load_snake_rule()
        self.h1, self.h2 = solve_channel_parameters()
        self.schedule = schedule_times(1.0, 5, 12)
        self.base_inv = 2
        self.profile = default_profile()
        pts_s = straight_channel_points(self.h1, 6000)
        pts_b = bent_channel_points(self.h2, 6000)
        self._curves = {}
        self._windows = {}
        for name, pts in (("straight", pts_s), ("bent", pts_b)):
            ext = _with_stubs(pts)
            curve = Curve(ext, "proper", n_samples=4096)
            self._curves[name] = curve
            self._windows[name] = self._square_window(curve)
        if strip_r is None:
            strip_r = 0.8 * min(
                self._curves[n].tubular_radius() * self._curves[n].speed / 2.0
                for n in self._curves)
        self.strip_r = strip_r
        self.moves = {}
        for name in ("straight", "bent"):
            self.moves[name] = self._build_move(name, base_raster_n, field_grid_n)
        self.initial_state = self._initial_state()

    # -- geometry ------------------------------------------------------------

    def _square_window(self, curve: Curve):
        """Parameters of the square's entry/exit: the curve crosses the boundary
        exactly at edge midpoints, so snap by projecting those onto the curve."""
        mids = np.array([[0.0, -0.5], [0.5, 0.0], [0.0, 0.5], [-0.5, 0.0]])
        s, d = curve.project(mids)
        hit = np.abs(d) < 1e-7
        ss = np.sort(s[hit])
        if len(ss) != 2:
            raise ValueError("channel does not cross exactly two edge midpoints")
        return float(ss[0]), float(ss[1])

    def keyframe_curve(self, name: str) -> Curve:
        return self._curves[name]

    def in_square_length(self, name: str) -> float:
        a, b = self._windows[name]
        return (b - a) * self._curves[name].speed

    def component_areas(self, name: str, n: int = 2000) -> tuple:
        """Areas of the two components of Q minus the channel (polygon quadrature)."""
        a, b = self._windows[name]
        s = np.linspace(a, b, n)
        pts = self._curves[name].eval(s)
        if name == "straight":
            # left component: close the polygon along the west edge
            left = np.vstack([pts, [[-0.5, 0.5], [-0.5, -0.5]]])
        else:
            # corner component: close along the south-east corner
            left = np.vstack([pts, [[0.5, -0.5]]])
        x, y = left[:, 0], left[:, 1]
        area = 0.5 * abs(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        return area, 1.0 - area

    # -- base moves ------------------------------------------------------------

    def _build_move(self, name: str, raster_n: int, grid_n: int) -> _BaseMove:
        curve = self._curves[name]
        chart = area_preserving_chart(curve, self.strip_r)
        rho = canonical_solution(chart, self.profile)
        xs = (np.arange(raster_n) + 0.5) / raster_n - 0.5
        X1, X2 = np.meshgrid(xs, xs, indexing="ij")
        vals = rho(np.stack([X1.ravel(), X2.ravel()], axis=-1)).reshape(raster_n, raster_n)
        vals -= vals.mean()     # rasterization residual of the exact zero average
        raster = ScalarField(GridSpec(raster_n), vals)
        raster.mean_removed = True
        # zero-flux deformation pulse supported mid-channel
        a, b = self._windows[name]
        sa = a + 0.32 * (b - a)
        sb = a + 0.68 * (b - a)
        wb = 0.10 * (b - a)

        def v_pulse(s):
            s = np.asarray(s)
            return cinf_bump((s - sa) / wb) - cinf_bump((s - sb) / wb)

        r_pulse = 0.8 * curve.tubular_radius()
        field = stream_from_normal_velocity(curve, v_pulse, r_pulse,
                                            sub_arc=(sa - 2 * wb, sb + 2 * wb))
        gx = np.linspace(-0.5, 0.5, grid_n)
        gy = np.linspace(-0.5, 0.5, grid_n)
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        U = field.velocity(np.stack([X.ravel(), Y.ravel()], axis=-1))
        grid = (gx, gy, U[:, 0].reshape(grid_n, grid_n), U[:, 1].reshape(grid_n, grid_n))
        move = _BaseMove(name, curve, (a, b), raster, grid)
        move.stream = field
        return move

    def base_rasters(self) -> dict:
        return {name: m.raster for name, m in self.moves.items()}

    def base_velocity(self, name: str, pts: np.ndarray) -> np.ndarray:
        """Gridded pulse field of a base move, in canonical square coordinates."""
        gx, gy, U1, U2 = self.moves[name].pulse_grid
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        out = np.zeros_like(pts)
        inside = (np.abs(pts[:, 0]) < 0.5) & (np.abs(pts[:, 1]) < 0.5)
        if inside.any():
            dxg = gx[1] - gx[0]
            fx = (pts[inside, 0] - gx[0] + 0.5 * dxg) / (len(gx) * dxg)
            fy = (pts[inside, 1] - gy[0] + 0.5 * dxg) / (len(gy) * dxg)
            out[inside, 0] = bicubic_periodic(U1, fx, fy)
            out[inside, 1] = bicubic_periodic(U2, fx, fy)
        return out

    # -- states ----------------------------------------------------------------

    def _initial_state(self) -> TiledState:
        labels = [[TileLabel("bent", D4(1)), TileLabel("bent", D4(0))],
                  [TileLabel("bent", D4(2)), TileLabel("bent", D4(3))]]
        state = TiledState.from_labels(Tiling(5, 0, 2), labels, self.rule)
        check_edge_consistency(state)
        return state

    def state_at_level(self, n: int) -> TiledState:
        state = self.initial_state
        for _ in range(n):
            state = substitute(state, self.rule)
        return state

    def raster_at_level(self, n: int, max_resolution: int = 4096) -> ScalarField:
        return rasterize(self.state_at_level(n), self.base_rasters(),
                         max_resolution=max_resolution)

    # -- level-1 keyframe curves -----------------------------------------------

    def level1_curve(self, name: str, n_samples: int = 4096) -> Curve:
        """The time-1 channel: 25 rescaled keyframe copies chained along the
        Hamiltonian traversal of the 5 x 5 block."""
        base = self.rule.bases[name]
        segs = []
        for (a, b, d) in base.path:
            cell_lab = self.rule.children(TileLabel(name, D4(0)))[a, b]
            lab = self.rule.canonical(cell_lab)
            src = self._curves[lab.base]
            lo, hi = self._windows[lab.base]
            s = np.linspace(lo, hi, 400)
            pts = src.eval(s)
            pts = lab.sym.on_vector(pts)
            if d == "-":
                pts = pts[::-1]
            center = np.array([(a + 0.5) / 5.0 - 0.5, (b + 0.5) / 5.0 - 0.5])
            segs.append(center + pts / 5.0)
        chained = [segs[0]]
        for seg in segs[1:]:
            chained.append(seg[1:])
        pts = np.vstack(chained)
        return Curve(_with_stubs(pts, extend=0.3), "proper", time=1.0,
                     n_samples=n_samples)

    # -- evolution and measurement ----------------------------------------------

    def level_resolution(self, n: int, cap: int = 4096) -> int:
        tiles = 2 * 5**n
        target = {0: 512, 1: 128, 2: 32, 3: 8, 4: 2}.get(n, 1)
        m_eff = max(1, min(target, cap // tiles))
        return tiles * m_eff

    def evolution(self, n_max: int, kappa: float = 1.0 / 3.0, sigma: float = 1.0,
                  gamma: float = 1.5, with_geometric: bool = True,
                  geo_max_level: int = 2, cap: int = 4096) -> MixingReport:
        """Run the substitution dynamics, measure both scales, assemble the report."""
        report = MixingReport()
        profiles = list(self.base_rasters().values())
        for name in self.moves:
            single = TiledState.from_labels(
                Tiling(5, 0, 1), [[TileLabel(name, D4(0))]], self.rule)
            profiles.append(rasterize(substitute(single, self.rule),
                                      self.base_rasters(), max_resolution=1280))
        consts = decay_constants(profiles, sigma, gamma, self.base_inv)
        report.constants = consts
        state = self.initial_state
        lam = self.schedule.lam
        for n in range(n_max + 1):
            t_start = _time.perf_counter()
            check_edge_consistency(state)
            raster = rasterize(state, self.base_rasters(),
                               max_resolution=min(cap, self.level_resolution(n, cap)))
            h1 = functional_scale(raster)
            pad = 2 if raster.grid.n > 1500 else 4
            hs = plane_h_norm(raster, -sigma, pad=pad)
            if with_geometric and n <= geo_max_level:
                geo = geometric_scale(raster, GeometricScaleParams(kappa=kappa))
            else:
                geo = math.nan
            bound = fg_bound(5, n, kappa) * (1.0 / self.base_inv)
            wall = (_time.perf_counter() - t_start) * 1e3
            report.add(float(self.schedule.times[n]), n, h1, hs, geo, bound, wall)
            if n < n_max:
                state = substitute(state, self.rule)
        report.decay = classify_decay(np.asarray(report.times),
                                      np.asarray(report.h_minus_sigma),
                                      self.schedule)
        report.meta.update({"h1": self.h1, "h2": self.h2, "strip_r": self.strip_r,
                            "kappa": kappa, "sigma": sigma, "gamma": gamma})
        return report

    def tile_average_residual(self, n: int) -> float:
        raster = self.raster_at_level(n)
        tiling = Tiling(5, n, self.base_inv)
        av = tile_averages(raster, tiling)
        return float(np.max(np.abs(av))) / max(raster.linf(), 1e-300)
