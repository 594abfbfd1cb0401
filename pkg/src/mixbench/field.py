"""Periodic scalar fields on the unit torus: transforms, homogeneous Sobolev
norms, rescaling, interpolation checks, and snapshot I/O.

Conventions (fixed for the whole package):

* samples are cell-centered, ``values[i, j] = f((i+1/2)/n, (j+1/2)/n)``;
* Fourier coefficients ``c(k) = (1/n^2) sum_j f(x_j) exp(-2 pi i k . x_j)`` on
  the signed frequency lattice ``k in {-n/2 .. n/2-1}^2``;
* norm multipliers use the plain Euclidean lattice norm ``|k|`` with no 2 pi
  factor, so absolute values are internally consistent rather than matching any
  particular textbook normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NegativeOrderNonzeroMean, ResolutionMismatch

__all__ = [
    "GridSpec",
    "ScalarField",
    "Spectrum",
    "transform",
    "inverse",
    "homogeneous_h_norm",
    "homogeneous_w_norm",
    "rescale_torus",
    "resample",
    "check_interpolation",
    "plane_h_norm",
    "holder_seminorm_grid",
    "write_pgm",
    "read_pgm",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform N x N cell-centered grid on the unit torus; N a power of two >= 8."""

    n: int

    def __post_init__(self):
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"grid resolution must be a power of two >= 8, got {self.n}")

    def coords(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) / self.n

    def mesh(self):
        x = self.coords()
        return np.meshgrid(x, x, indexing="ij")


@dataclass
class ScalarField:
    grid: GridSpec
    values: np.ndarray
    mean_removed: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValueError("values shape does not match grid")
        if self.mean_removed:
            scale = np.max(np.abs(self.values))
            if scale > 0 and abs(self.values.mean()) > 1e-12 * scale:
                raise ValueError("mean_removed set but field mean is not ~0")

    @classmethod
    def from_function(cls, fn, n: int, mean_removed: bool = False) -> "ScalarField":
        g = GridSpec(n)
        x1, x2 = g.mesh()
        return cls(g, np.asarray(fn(x1, x2), dtype=np.float64), mean_removed)

    @classmethod
    def zeros(cls, n: int) -> "ScalarField":
        return cls(GridSpec(n), np.zeros((n, n)), mean_removed=True)

    def remove_mean(self) -> "ScalarField":
        return ScalarField(self.grid, self.values - self.values.mean(), mean_removed=True)

    def mean(self) -> float:
        return float(self.values.mean())

    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass
class Spectrum:
    """Cell-centered Fourier coefficients in fft layout (axis order matches values)."""

    coefficients: np.ndarray

    @property
    def n(self) -> int:
        return self.coefficients.shape[0]


def freq_lattice(n: int) -> np.ndarray:
    """Signed integer frequencies in fft order."""
    return np.fft.fftfreq(n, d=1.0 / n)


def _half_cell_phase(n: int) -> np.ndarray:
    k = freq_lattice(n)
    ph = np.exp(-1j * np.pi * k / n)
    return np.outer(ph, ph)


def transform(f: ScalarField) -> Spectrum:
    """Fourier coefficients of the cell-centered samples; c(0) is the mean."""
    n = f.grid.n
    c = np.fft.fft2(f.values) / (n * n)
    return Spectrum(c * _half_cell_phase(n))


def inverse(spec: Spectrum) -> ScalarField:
    n = spec.n
    c = spec.coefficients / _half_cell_phase(n)
    vals = np.fft.ifft2(c * (n * n)).real
    return ScalarField(GridSpec(n), vals)


def _abs_k(n: int) -> np.ndarray:
    k = freq_lattice(n)
    return np.sqrt(k[:, None] ** 2 + k[None, :] ** 2)


def _require_zero_mean(f: ScalarField):
    scale = f.linf()
    if scale == 0.0:
        return
    if not f.mean_removed and abs(f.mean()) > 1e-12 * scale:
        raise NegativeOrderNonzeroMean(
            "negative-order norm needs a zero-average field (subtract the mean first)"
        )


def homogeneous_h_norm(f: ScalarField, s: float) -> float:
    """Homogeneous H^s seminorm: (sum_{k != 0} |k|^{2s} |c(k)|^2)^{1/2}."""
    if s < 0:
        _require_zero_mean(f)
    c = transform(f).coefficients
    absk = _abs_k(f.grid.n)
    mask = absk > 0
    return float(np.sqrt(np.sum(absk[mask] ** (2.0 * s) * np.abs(c[mask]) ** 2)))


def homogeneous_w_norm(f: ScalarField, s: float, p) -> float:
    """Homogeneous W^{s,p} norm: L^p norm of |k|^s-multiplied field (s >= 0).

    For s = 0 this is the plain L^p norm (the zero mode is kept); for s > 0 the
    zero mode is annihilated by the multiplier.  ``p = math.inf`` gives the grid
    max, a lower bound for the continuum sup that is adequate for smooth
    band-limited fields.
    """
    if s < 0:
        raise ValueError("homogeneous_w_norm requires s >= 0 (use homogeneous_h_norm)")
    n = f.grid.n
    c = transform(f).coefficients
    absk = _abs_k(n)
    mult = np.zeros_like(absk)
    nz = absk > 0
    mult[nz] = absk[nz] ** s
    mult[0, 0] = 1.0 if s == 0 else 0.0
    g = inverse(Spectrum(c * mult)).values
    if p == math.inf or p == "inf":
        return float(np.max(np.abs(g)))
    p = float(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.mean(np.abs(g) ** p) ** (1.0 / p))


def _fold_modes(c: np.ndarray, m: int) -> np.ndarray:
    """Coefficients of x -> f(m x) on the same grid (trig-interpolant sampling)."""
    n = c.shape[0]
    k = freq_lattice(n).astype(np.int64)
    mk = m * k
    # fold m*k into the signed lattice; q counts wraps, each contributing (-1)^q
    # through the half-cell centering of the samples
    folded = (mk + n // 2) % n - n // 2
    q = (mk - folded) // n
    sign = np.where(q % 2 == 0, 1.0, -1.0)
    out = np.zeros_like(c)
    # target indices in fft layout
    tgt = np.mod(folded, n)
    np.add.at(out, (tgt[:, None].repeat(n, 1), tgt[None, :].repeat(n, 0)),
              c * (sign[:, None] * sign[None, :]))
    return out


def rescale_torus(f: ScalarField, inv_lambda: int) -> ScalarField:
    """Torus rescale f_lambda(x) = f(x / lambda) with 1/lambda = inv_lambda.

    Sampled through the trigonometric interpolant, which is exact whenever f is
    band-limited below n/(2 inv_lambda); produces inv_lambda^2 periodic copies.
    """
    if inv_lambda < 1 or int(inv_lambda) != inv_lambda:
        raise ValueError("inv_lambda must be a positive integer")
    inv_lambda = int(inv_lambda)
    if f.grid.n % inv_lambda != 0:
        raise ResolutionMismatch(
            f"inv_lambda={inv_lambda} does not divide resolution {f.grid.n}"
        )
    if inv_lambda == 1:
        return ScalarField(f.grid, f.values.copy(), f.mean_removed)
    c = transform(f).coefficients
    out = inverse(Spectrum(_fold_modes(c, inv_lambda)))
    return ScalarField(f.grid, out.values, f.mean_removed)


def resample(f: ScalarField, n_new: int) -> ScalarField:
    """Spectral resampling to a new resolution (band-limit cut when shrinking)."""
    n = f.grid.n
    if n_new == n:
        return ScalarField(f.grid, f.values.copy(), f.mean_removed)
    c = transform(f).coefficients
    c_shift = np.fft.fftshift(c)
    half_new = n_new // 2
    half = n // 2
    out = np.zeros((n_new, n_new), dtype=complex)
    if n_new < n:
        lo, hi = half - half_new, half + half_new
        out[:, :] = c_shift[lo:hi, lo:hi]
        # drop the unpaired Nyquist row/col to keep the field real and symmetric
        out[0, :] = 0.0
        out[:, 0] = 0.0
    else:
        lo, hi = half_new - half, half_new + half
        out[lo:hi, lo:hi] = c_shift
        out[lo, :] = 0.0
        out[:, lo] = 0.0
    vals = inverse(Spectrum(np.fft.ifftshift(out)))
    g = ScalarField(GridSpec(n_new), vals.values)
    g.mean_removed = f.mean_removed
    if f.mean_removed:
        g.values -= g.values.mean()
    return g


@dataclass
class InterpolationReport:
    lhs: float
    rhs: float
    holds: bool


def check_interpolation(f: ScalarField, s1: float, s2: float, theta: float) -> InterpolationReport:
    """Check ||f||_{H^s} <= ||f||_{H^s1}^theta ||f||_{H^s2}^(1-theta), s = theta s1 + (1-theta) s2."""
    if not (s1 < s2):
        raise ValueError("need s1 < s2")
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie in (0, 1)")
    s = theta * s1 + (1.0 - theta) * s2
    lhs = homogeneous_h_norm(f, s)
    rhs = homogeneous_h_norm(f, s1) ** theta * homogeneous_h_norm(f, s2) ** (1.0 - theta)
    return InterpolationReport(lhs, rhs, lhs <= rhs * (1.0 + 1e-10))


def plane_h_norm(f: ScalarField, s: float, pad: int = 4) -> float:
    """Homogeneous H^s norm of f seen as a compactly supported field on the plane.

    The unit cell is zero-embedded into a pad x pad torus and the frequency
    integral is approximated by the resulting lattice sum (spacing 1/pad); the
    k = 0 node is dropped.  Intended for s in (-2, 0] and zero-average fields.
    """
    if s < 0:
        _require_zero_mean(f)
    n = f.grid.n
    np_pad = pad * n
    big = np.zeros((np_pad, np_pad), dtype=np.float64)
    big[:n, :n] = f.values
    c = np.fft.rfft2(big) / (np_pad * np_pad)
    k1 = freq_lattice(np_pad) / pad
    k2 = np.fft.rfftfreq(np_pad, d=1.0 / np_pad) / pad
    absk = np.sqrt(k1[:, None] ** 2 + k2[None, :] ** 2)
    w = np.zeros_like(absk)
    nz = absk > 0
    w[nz] = absk[nz] ** (2.0 * s)
    # rfft2 stores half the lattice; double the interior columns
    mult = np.full(c.shape, 2.0)
    mult[:, 0] = 1.0
    if np_pad % 2 == 0:
        mult[:, -1] = 1.0
    total = np.sum(w * mult * np.abs(c) ** 2)
    return float(pad * math.sqrt(total))


def _derivative_magnitude(vals: np.ndarray, spacing: float, order: int) -> np.ndarray:
    """Central-difference estimate of |grad^order f| on a periodic grid (order <= 2)."""
    if order == 0:
        return np.abs(vals)
    if order == 1:
        d1 = (np.roll(vals, -1, axis=0) - np.roll(vals, 1, axis=0)) / (2 * spacing)
        d2 = (np.roll(vals, -1, axis=1) - np.roll(vals, 1, axis=1)) / (2 * spacing)
        return np.sqrt(d1 * d1 + d2 * d2)
    if order == 2:
        h2 = spacing * spacing
        fxx = (np.roll(vals, -1, axis=0) - 2 * vals + np.roll(vals, 1, axis=0)) / h2
        fyy = (np.roll(vals, -1, axis=1) - 2 * vals + np.roll(vals, 1, axis=1)) / h2
        fxy = (
            np.roll(np.roll(vals, -1, axis=0), -1, axis=1)
            - np.roll(np.roll(vals, -1, axis=0), 1, axis=1)
            - np.roll(np.roll(vals, 1, axis=0), -1, axis=1)
            + np.roll(np.roll(vals, 1, axis=0), 1, axis=1)
        ) / (4 * h2)
        return np.sqrt(fxx * fxx + 2 * fxy * fxy + fyy * fyy)
    raise ValueError("derivative order > 2 not supported")


def holder_seminorm_grid(values: np.ndarray, s: float, spacing: float) -> float:
    """Lipschitz-Holder seminorm estimate by direct pair/difference sampling.

    Integer s: grid max of the s-th central-difference tensor magnitude.
    Fractional s: max over dyadic offsets of |g(x) - g(y)| / |x - y|^(s - floor s)
    with g the floor(s)-th derivative magnitude grid.  Diagnostic accuracy;
    the spectral definition does not apply at p = infinity.
    """
    vals = np.asarray(values, dtype=np.float64)
    m = int(math.floor(s))
    frac = s - m
    if frac == 0.0:
        return float(np.max(_derivative_magnitude(vals, spacing, m)))
    g = _derivative_magnitude(vals, spacing, m) if m > 0 else vals
    best = 0.0
    n = g.shape[0]
    d = 1
    while d <= n // 2:
        h = d * spacing
        for axis in (0, 1):
            diff = np.abs(np.roll(g, -d, axis=axis) - g)
            best = max(best, float(np.max(diff)) / h**frac)
        d *= 2
    return best


def write_pgm(f: ScalarField, path: str):
    """16-bit binary PGM snapshot plus a text sidecar with the value mapping."""
    vals = f.values
    vmin, vmax = float(vals.min()), float(vals.max())
    span = vmax - vmin if vmax > vmin else 1.0
    pix = np.round((vals - vmin) / span * 65535.0).astype(">u2")
    n = f.grid.n
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n65535\n".encode("ascii"))
        fh.write(pix.tobytes())
    with open(path + ".txt", "w") as fh:
        fh.write(f"min={vmin!r}\nmax={vmax!r}\nN={n}\nmean_removed={f.mean_removed}\n")


def read_pgm(path: str) -> ScalarField:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError("not a binary PGM file")
        dims = fh.readline().split()
        n1, n2 = int(dims[0]), int(dims[1])
        maxval = int(fh.readline())
        if maxval != 65535:
            raise ValueError("expected 16-bit PGM")
        pix = np.frombuffer(fh.read(n1 * n2 * 2), dtype=">u2").reshape(n1, n2)
    meta = {}
    with open(path + ".txt") as fh:
        for line in fh:
            key, _, val = line.strip().partition("=")
            meta[key] = val
    vmin, vmax = float(meta["min"]), float(meta["max"])
    span = vmax - vmin if vmax > vmin else 1.0
    vals = pix.astype(np.float64) / 65535.0 * span + vmin
    out = ScalarField(GridSpec(n1), vals)
    out.mean_removed = meta.get("mean_removed") == "True"
    return out
