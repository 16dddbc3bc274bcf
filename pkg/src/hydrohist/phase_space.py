"""Single-particle phase-space representations.

Wigner quasi-distributions on rectangular (q, p) lattices, position-basis
density matrices rho(x, y), the Fourier map between the two (hbar = 1), and
the marginals / moments used everywhere else in the package.

Conventions: values[i, j] samples W at (q_i, p_j); all integrals are
trapezoidal; the density matrix is related to the Wigner function by

    rho(x, y) = int dp  exp(i p (x - y)) W(p, (x + y) / 2)

so that the diagonal rho(x, x) is the position marginal.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import DegenerateStateError, ResolutionError

__all__ = [
    "WignerGrid",
    "DensityMatrix",
    "Marginal",
    "gaussian_wigner",
    "normalize",
    "position_marginal",
    "momentum_marginal",
    "moments",
    "wigner_to_density",
    "density_to_wigner",
    "conjugate_momentum_axis",
    "l1_distance",
    "save_wigner_csv",
    "load_wigner_csv",
    "save_wigner_descriptor",
]

#: default tolerance for normalization / hermiticity checks
DEFAULT_TOL = 1e-6


def _trapz2(values, dq, dp):
    return float(np.trapezoid(np.trapezoid(values, dx=dp, axis=1), dx=dq))


@dataclass(frozen=True)
class WignerGrid:
    """Sampled real phase-space quasi-distribution on a rectangular lattice."""

    q_min: float
    q_max: float
    n_q: int
    p_min: float
    p_max: float
    n_p: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_q < 8 or self.n_p < 8:
            raise ValueError("grid must have at least 8 points per axis")
        if not (self.q_min < self.q_max and self.p_min < self.p_max):
            raise ValueError("grid extents must be strictly ordered")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.n_q, self.n_p):
            raise ValueError(
                f"values shape {vals.shape} does not match ({self.n_q}, {self.n_p})"
            )
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def q(self):
        return np.linspace(self.q_min, self.q_max, self.n_q)

    @property
    def p(self):
        return np.linspace(self.p_min, self.p_max, self.n_p)

    @property
    def dq(self):
        return (self.q_max - self.q_min) / (self.n_q - 1)

    @property
    def dp(self):
        return (self.p_max - self.p_min) / (self.n_p - 1)

    def integral(self):
        return _trapz2(self.values, self.dq, self.dp)

    def with_values(self, values):
        return replace(self, values=values)


@dataclass(frozen=True)
class DensityMatrix:
    """Complex position-basis kernel rho(x, y) on a uniform 1D lattice."""

    x_min: float
    x_max: float
    n_x: int
    kernel: np.ndarray = field(repr=False)
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("x extents must be strictly ordered")
        ker = np.asarray(self.kernel, dtype=complex)
        if ker.shape != (self.n_x, self.n_x):
            raise ValueError("kernel must be square of shape (n_x, n_x)")
        herm = np.max(np.abs(ker - ker.conj().T))
        scale = max(np.max(np.abs(ker)), 1e-300)
        if herm > 100 * self.tol * scale:
            raise ValueError(f"kernel is not Hermitian (deviation {herm:.3e})")
        tr = float(np.real(np.sum(np.diag(ker))) * self.dx)
        if abs(tr - 1.0) > 1e-3:
            raise ValueError(f"kernel trace {tr:.6f} is not 1")
        ker = ker.copy()
        ker.flags.writeable = False
        object.__setattr__(self, "kernel", ker)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.n_x - 1)

    def trace(self):
        return float(np.real(np.sum(np.diag(self.kernel))) * self.dx)

    def with_kernel(self, kernel):
        return replace(self, kernel=kernel)


@dataclass(frozen=True)
class Marginal:
    """One-dimensional probability density sampled on a uniform axis."""

    axis: str  # "position" or "momentum"
    samples: np.ndarray = field(repr=False)
    spacing: float
    origin: float = 0.0
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.axis not in ("position", "momentum"):
            raise ValueError("axis must be 'position' or 'momentum'")
        s = np.asarray(self.samples, dtype=float)
        if np.min(s) < -100 * self.tol * max(np.max(np.abs(s)), 1e-300):
            raise ValueError("marginal has significantly negative samples")
        total = float(np.trapezoid(s, dx=self.spacing))
        if abs(total - 1.0) > 1e-3:
            raise ValueError(f"marginal integrates to {total:.6f}, expected 1")
        s = s.copy()
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def grid(self):
        return self.origin + self.spacing * np.arange(len(self.samples))

    def mean(self):
        return float(np.trapezoid(self.grid * self.samples, dx=self.spacing))

    def variance(self):
        m = self.mean()
        return float(
            np.trapezoid((self.grid - m) ** 2 * self.samples, dx=self.spacing)
        )


def gaussian_wigner(q_min, q_max, n_q, p_min, p_max, n_p,
                    mean_q=0.0, mean_p=0.0, var_q=1.0, var_p=1.0, cov_qp=0.0):
    """Normalized correlated-Gaussian Wigner grid (test fixture and initial data)."""
    det = var_q * var_p - cov_qp ** 2
    if det <= 0:
        raise ValueError("covariance matrix must be positive definite")
    q = np.linspace(q_min, q_max, n_q)[:, None]
    p = np.linspace(p_min, p_max, n_p)[None, :]
    dq_ = q - mean_q
    dp_ = p - mean_p
    quad = (var_p * dq_ ** 2 - 2 * cov_qp * dq_ * dp_ + var_q * dp_ ** 2) / det
    vals = np.exp(-0.5 * quad) / (2 * np.pi * np.sqrt(det))
    return normalize(WignerGrid(q_min, q_max, n_q, p_min, p_max, n_p, vals))


def normalize(w: WignerGrid) -> WignerGrid:
    """Rescale a grid so its trapezoidal integral is exactly 1."""
    abs_total = _trapz2(np.abs(w.values), w.dq, w.dp)
    total = w.integral()
    if abs_total == 0.0 or abs(total) < 1e-12 * abs_total or abs(total) < 1e-300:
        raise DegenerateStateError("grid has no usable mass to normalize")
    return w.with_values(w.values / total)


def _check_normalized(w, tol=1e-3):
    if abs(w.integral() - 1.0) > tol:
        raise ValueError("operation requires a normalized WignerGrid")


def position_marginal(w: WignerGrid) -> Marginal:
    """f(q) = int dp W(q, p)."""
    _check_normalized(w)
    f = np.trapezoid(w.values, dx=w.dp, axis=1)
    return Marginal("position", np.clip(f, 0.0, None), w.dq, origin=w.q_min)


def momentum_marginal(w: WignerGrid) -> Marginal:
    """g(p) = int dq W(q, p)."""
    _check_normalized(w)
    g = np.trapezoid(w.values, dx=w.dq, axis=0)
    return Marginal("momentum", np.clip(g, 0.0, None), w.dp, origin=w.p_min)


def moments(w: WignerGrid):
    """First and second quadrature moments (mean_q, mean_p, var_q, var_p, cov_qp)."""
    _check_normalized(w)
    q = w.q[:, None]
    p = w.p[None, :]
    v = w.values
    mean_q = _trapz2(q * v, w.dq, w.dp)
    mean_p = _trapz2(p * v, w.dq, w.dp)
    var_q = _trapz2((q - mean_q) ** 2 * v, w.dq, w.dp)
    var_p = _trapz2((p - mean_p) ** 2 * v, w.dq, w.dp)
    cov_qp = _trapz2((q - mean_q) * (p - mean_p) * v, w.dq, w.dp)
    return mean_q, mean_p, var_q, var_p, cov_qp


def conjugate_momentum_axis(x_min, x_max, n_x):
    """Momentum lattice conjugate to a spatial lattice (exact DFT pairing).

    Returns (p_min, p_max, n_p) with spacing 2*pi / (n_x * dx).
    """
    dx = (x_max - x_min) / (n_x - 1)
    dp = 2 * np.pi / (n_x * dx)
    k = np.fft.fftshift(np.fft.fftfreq(n_x, d=dx)) * 2 * np.pi
    return float(k[0]), float(k[-1]), n_x


def wigner_to_density(w: WignerGrid) -> DensityMatrix:
    """rho(x, y) = int dp exp(i p (x - y)) W(p, (x + y)/2) on the q lattice.

    W is evaluated at midpoint coordinates with a cubic spline; the p integral
    is trapezoidal.  Raises ResolutionError when the momentum lattice is too
    coarse to resolve the oscillatory kernel across the spatial domain.
    """
    _check_normalized(w)
    n = w.n_q
    dq, dp = w.dq, w.dp
    length = w.q_max - w.q_min
    # dp * L = 2*pi is the exact conjugate (DFT) pairing; anything coarser
    # aliases the kernel exp(i p (x - y)) across the spatial domain.
    if dp * length > 2 * np.pi * (1 + 1e-9):
        raise ResolutionError(
            "momentum lattice too coarse/narrow for the spatial extent "
            f"(dp * L = {dp * length:.3f} > 2*pi); refine or widen the p lattice"
        )
    # W sampled on the half-spacing lattice of midpoints (x_a + x_b)/2
    spline = RectBivariateSpline(w.q, w.p, w.values, kx=3, ky=3)
    q_half = w.q_min + 0.5 * dq * np.arange(2 * n - 1)
    w_half = spline(q_half, w.p)  # (2n-1, n_p)

    tw = np.full(w.n_p, dp)
    tw[0] *= 0.5
    tw[-1] *= 0.5
    rho = np.empty((n, n), dtype=complex)
    for d in range(0, n):
        phase = np.exp(1j * w.p * d * dq) * tw
        a = np.arange(d, n)
        block = w_half[2 * a - d, :] @ phase
        rho[a, a - d] = block
        if d > 0:
            rho[a - d, a] = block.conj()
    return DensityMatrix(w.q_min, w.q_max, n, rho)


def density_to_wigner(rho: DensityMatrix) -> WignerGrid:
    """Inverse Fourier map onto the momentum lattice conjugate to the x lattice."""
    n = rho.n_x
    dx = rho.dx
    x = rho.x
    re = RectBivariateSpline(x, x, rho.kernel.real, kx=3, ky=3)
    im = RectBivariateSpline(x, x, rho.kernel.imag, kx=3, ky=3)

    m = np.arange(n) - n // 2
    r = m * dx
    qg = x[:, None] + 0.5 * r[None, :]
    pg = x[:, None] - 0.5 * r[None, :]
    inside = (qg >= rho.x_min) & (qg <= rho.x_max) & \
             (pg >= rho.x_min) & (pg <= rho.x_max)
    qc = np.clip(qg, rho.x_min, rho.x_max)
    pc = np.clip(pg, rho.x_min, rho.x_max)
    c = re.ev(qc, pc) + 1j * im.ev(qc, pc)
    c[~inside] = 0.0

    p_min, p_max, n_p = conjugate_momentum_axis(rho.x_min, rho.x_max, n)
    p = np.linspace(p_min, p_max, n_p)
    kernel = np.exp(-1j * np.outer(r, p))  # (n_r, n_p)
    vals = (c @ kernel).real * dx / (2 * np.pi)
    w = WignerGrid(rho.x_min, rho.x_max, n, p_min, p_max, n_p, vals)
    return normalize(w)


def l1_distance(a: WignerGrid, b: WignerGrid) -> float:
    """L1 distance between two grids; b is spline-resampled onto a's lattice."""
    if (a.q_min, a.q_max, a.n_q, a.p_min, a.p_max, a.n_p) == \
       (b.q_min, b.q_max, b.n_q, b.p_min, b.p_max, b.n_p):
        bv = b.values
    else:
        spline = RectBivariateSpline(b.q, b.p, b.values, kx=3, ky=3)
        qc = np.clip(a.q, b.q_min, b.q_max)
        pc = np.clip(a.p, b.p_min, b.p_max)
        bv = spline(qc, pc)
        outside_q = (a.q < b.q_min) | (a.q > b.q_max)
        outside_p = (a.p < b.p_min) | (a.p > b.p_max)
        bv[outside_q, :] = 0.0
        bv[:, outside_p] = 0.0
    return _trapz2(np.abs(a.values - bv), a.dq, a.dp)


def check_domain_coverage(w: WignerGrid, threshold=1e-3):
    """Warn when a non-negligible fraction of mass sits near the grid boundary."""
    edge = (
        np.trapezoid(np.abs(w.values[0, :]) + np.abs(w.values[-1, :]), dx=w.dp)
        * (w.q_max - w.q_min)
        + np.trapezoid(np.abs(w.values[:, 0]) + np.abs(w.values[:, -1]), dx=w.dq)
        * (w.p_max - w.p_min)
    )
    if edge > threshold:
        warnings.warn(
            f"grid boundary carries non-negligible mass ({edge:.2e}); "
            "consider enlarging the domain",
            stacklevel=2,
        )
    return edge


# --- serialization ---------------------------------------------------------


def save_wigner_csv(w: WignerGrid, path):
    """CSV with one metadata header row followed by row-major values."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["q_min", "q_max", "n_q", "p_min", "p_max", "n_p"]
        )
        writer.writerow(
            [repr(w.q_min), repr(w.q_max), w.n_q, repr(w.p_min), repr(w.p_max), w.n_p]
        )
        for row in w.values:
            writer.writerow([repr(float(v)) for v in row])


def load_wigner_csv(path) -> WignerGrid:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:6] != ["q_min", "q_max", "n_q", "p_min", "p_max", "n_p"]:
            raise ValueError(f"{path}: unrecognized header {header}")
        meta = next(reader)
        q_min, q_max = float(meta[0]), float(meta[1])
        n_q = int(meta[2])
        p_min, p_max = float(meta[3]), float(meta[4])
        n_p = int(meta[5])
        vals = np.array([[float(v) for v in row] for row in reader])
    return WignerGrid(q_min, q_max, n_q, p_min, p_max, n_p, vals)


def save_wigner_descriptor(w: WignerGrid, json_path, data_file):
    """JSON descriptor pointing at a CSV data file."""
    desc = {
        "extents": {
            "q_min": w.q_min,
            "q_max": w.q_max,
            "p_min": w.p_min,
            "p_max": w.p_max,
        },
        "shape": [w.n_q, w.n_p],
        "data-file": str(data_file),
    }
    with open(json_path, "w") as fh:
        json.dump(desc, fh, indent=2)
    return desc
