"""Statistics of non-interacting N-particle product ensembles.

The N-particle phase-space distribution is a product of identical
one-particle Wigner functions, so every coarse-grained density is a sum of
independent one-particle contributions.  Binned number densities follow a
multinomial law: with p_b the one-particle mass in bin b,

    <n_b> = N p_b,      Var n_b = N (<w_b^2> - <w_b>^2),

which for a top-hat window (w^2 = w) is the binomial N p_b (1 - p_b), and
the relative fluctuation (1/N)(1 - p_b)/p_b decays as 1/N.  The momentum
density carries the constitutive relation of the diffusive regime,

    <g(x)> = -N (kT / 2 gamma) d<f>/dx,

checked here per bin against the discrete gradient of the number density.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import RectBivariateSpline
from scipy.stats import multinomial

from .errors import DimensionCapError, UndefinedFluctuationError
from .phase_space import Marginal, WignerGrid, position_marginal
from .propagator import QbmParams

__all__ = [
    "ProductEnsemble",
    "SmearingWindow",
    "DensityField",
    "OccupationDistribution",
    "bin_probabilities",
    "mean_number_density",
    "number_density_variance",
    "relative_fluctuation",
    "occupation_distribution",
    "mean_momentum_density",
    "constitutive_residual",
    "mean_phase_space_density",
    "save_density_field_csv",
]

#: exact multinomial enumeration is limited to this many particles / bins
ENUMERATION_N_CAP = 12
ENUMERATION_BIN_CAP = 6


@dataclass(frozen=True)
class ProductEnsemble:
    """N independent particles, each in the same one-particle state.

    The state may be a WignerGrid or, for position-only work, a Marginal.
    """

    N: int
    one_particle_state: object

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise ValueError("N must be a positive integer")
        st = self.one_particle_state
        if isinstance(st, WignerGrid):
            total = st.integral()
        elif isinstance(st, Marginal):
            total = np.trapezoid(st.samples, dx=st.spacing)
        else:
            raise TypeError("one_particle_state must be WignerGrid or Marginal")
        if abs(total - 1.0) > 1e-3:
            raise ValueError(f"one-particle state integrates to {total:.6f}")

    def position_density(self) -> Marginal:
        st = self.one_particle_state
        if isinstance(st, Marginal):
            if st.axis != "position":
                raise ValueError("marginal ensemble state must be a position density")
            return st
        return position_marginal(st)

    def wigner(self) -> WignerGrid:
        if not isinstance(self.one_particle_state, WignerGrid):
            raise TypeError("this operation needs a full phase-space state")
        return self.one_particle_state


@dataclass(frozen=True)
class SmearingWindow:
    """Disjoint ordered position bins; top-hat by default.

    shape="gaussian" replaces each indicator with a normalized-height
    Gaussian of std = width/2 centered on the bin (for smoothness studies).
    """

    edges: np.ndarray
    shape: str = "tophat"

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or len(e) < 2:
            raise ValueError("need at least two bin edges")
        if np.any(np.diff(e) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        if self.shape not in ("tophat", "gaussian"):
            raise ValueError("shape must be 'tophat' or 'gaussian'")
        e = e.copy()
        e.flags.writeable = False
        object.__setattr__(self, "edges", e)

    @property
    def n_bins(self):
        return len(self.edges) - 1

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self):
        return np.diff(self.edges)


@dataclass(frozen=True)
class DensityField:
    """Per-bin values of a coarse-grained density (counts or count-weighted)."""

    centers: np.ndarray
    widths: np.ndarray
    values: np.ndarray
    variances: np.ndarray = None

    def __post_init__(self):
        for name in ("centers", "widths", "values", "variances"):
            a = getattr(self, name)
            if a is not None:
                a = np.asarray(a, dtype=float)
                a.flags.writeable = False
                object.__setattr__(self, name, a)


@dataclass(frozen=True)
class OccupationDistribution:
    """Distribution over occupation vectors (rows of ``vectors``).

    ``exact`` marks full multinomial enumeration; sampled distributions carry
    per-vector standard errors of the empirical probabilities.
    """

    vectors: np.ndarray
    probabilities: np.ndarray
    bin_probabilities: np.ndarray
    N: int
    exact: bool
    std_errors: np.ndarray = None

    def mean(self):
        return self.probabilities @ self.vectors

    def variance(self):
        m = self.mean()
        return self.probabilities @ (self.vectors - m) ** 2


def _window_moments(density: Marginal, window: SmearingWindow):
    """Per-bin (<w_b>, <w_b^2>) against the one-particle position density."""
    q = density.grid
    f = density.samples
    if window.shape == "tophat":
        cum = np.concatenate([[0.0], cumulative_trapezoid(f, q)])
        at = np.interp(window.edges, q, cum)
        p = np.diff(at)
        return p, p.copy()
    # gaussian windows: <w> and <w^2> by direct quadrature
    p1 = np.empty(window.n_bins)
    p2 = np.empty(window.n_bins)
    for b in range(window.n_bins):
        s = window.widths[b] / 2.0
        w = np.exp(-((q - window.centers[b]) ** 2) / (2 * s * s))
        p1[b] = np.trapezoid(f * w, q)
        p2[b] = np.trapezoid(f * w * w, q)
    return p1, p2


def bin_probabilities(ens: ProductEnsemble, window: SmearingWindow):
    """One-particle mass per bin (top-hat) or smeared weight (gaussian)."""
    p, _ = _window_moments(ens.position_density(), window)
    return p


def mean_number_density(ens: ProductEnsemble, window: SmearingWindow) -> DensityField:
    """<n_b> = N p_b per bin."""
    p = bin_probabilities(ens, window)
    return DensityField(window.centers, window.widths, ens.N * p)


def number_density_variance(ens: ProductEnsemble,
                            window: SmearingWindow) -> DensityField:
    """Var n_b = N (<w^2> - <w>^2); binomial N p (1-p) for top-hat bins."""
    p1, p2 = _window_moments(ens.position_density(), window)
    var = ens.N * (p2 - p1 ** 2)
    return DensityField(window.centers, window.widths, ens.N * p1, variances=var)


def relative_fluctuation(ens: ProductEnsemble,
                         window: SmearingWindow) -> DensityField:
    """Var n_b / <n_b>^2 = (1/N)(<w^2> - <w>^2)/<w>^2; 1/N scaling."""
    p1, p2 = _window_moments(ens.position_density(), window)
    if np.any(p1 <= 0):
        bad = np.flatnonzero(p1 <= 0)
        raise UndefinedFluctuationError(
            f"bins {bad.tolist()} carry no one-particle mass"
        )
    rel = (p2 - p1 ** 2) / (ens.N * p1 ** 2)
    return DensityField(window.centers, window.widths, rel)


def _compositions(n, k):
    """All length-k nonnegative integer vectors summing to n."""
    if k == 1:
        yield (n,)
        return
    for head in range(n + 1):
        for tail in _compositions(n - head, k - 1):
            yield (head,) + tail


def occupation_distribution(ens: ProductEnsemble, window: SmearingWindow,
                            rng=None, n_samples: int = 20000,
                            mass_tol: float = 1e-9) -> OccupationDistribution:
    """Multinomial law over per-bin occupation vectors.

    Bins not covering the full one-particle mass are padded with an
    "elsewhere" bin.  Small instances (N <= 12, <= 6 bins including the pad)
    are enumerated exactly; larger ones need a generator for seeded
    multinomial sampling, with standard errors on the empirical frequencies.
    """
    p = bin_probabilities(ens, window)
    if window.shape != "tophat":
        raise ValueError("occupation counting needs top-hat (indicator) bins")
    rest = 1.0 - p.sum()
    if rest > mass_tol:
        p = np.append(p, rest)
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    k = len(p)
    exact_ok = ens.N <= ENUMERATION_N_CAP and k <= ENUMERATION_BIN_CAP
    if exact_ok:
        vectors = np.array(list(_compositions(ens.N, k)), dtype=int)
        probs = multinomial.pmf(vectors, n=ens.N, p=p)
        return OccupationDistribution(vectors, probs, p, ens.N, exact=True)
    if rng is None:
        raise DimensionCapError(
            f"exact enumeration capped at N <= {ENUMERATION_N_CAP}, "
            f"{ENUMERATION_BIN_CAP} bins; pass a seeded generator for sampling"
        )
    draws = rng.multinomial(ens.N, p, size=n_samples)
    vectors, counts = np.unique(draws, axis=0, return_counts=True)
    probs = counts / n_samples
    se = np.sqrt(probs * (1.0 - probs) / n_samples)
    return OccupationDistribution(vectors, probs, p, ens.N, exact=False,
                                  std_errors=se)


def mean_momentum_density(ens: ProductEnsemble,
                          window: SmearingWindow) -> DensityField:
    """<g_b> = N * (bin integral of int dp p W(p,q))."""
    w = ens.wigner()
    current = np.trapezoid(w.values * w.p[None, :], dx=w.dp, axis=1)
    cum = np.concatenate([[0.0], cumulative_trapezoid(current, w.q)])
    at = np.interp(window.edges, w.q, cum)
    return DensityField(window.centers, window.widths, ens.N * np.diff(at))


def constitutive_residual(ens: ProductEnsemble, window: SmearingWindow,
                          params: QbmParams) -> DensityField:
    """Per-bin residual of <g> = -(kT / 2 gamma) d<n>/dx for per-length densities."""
    g = mean_momentum_density(ens, window).values / window.widths
    n = mean_number_density(ens, window).values / window.widths
    grad = np.gradient(n, window.centers)
    expected = -params.kT / (2.0 * params.gamma) * grad
    return DensityField(window.centers, window.widths, g - expected)


def mean_phase_space_density(ens: ProductEnsemble, q_lo, q_hi, p_lo, p_hi):
    """Expected particle count in the phase-space cell [q_lo,q_hi]x[p_lo,p_hi]."""
    w = ens.wigner()
    if not (w.q_min <= q_lo < q_hi <= w.q_max
            and w.p_min <= p_lo < p_hi <= w.p_max):
        raise ValueError("cell must lie within the grid extents")
    sp = RectBivariateSpline(w.q, w.p, w.values, kx=3, ky=3)
    return ens.N * float(sp.integral(q_lo, q_hi, p_lo, p_hi))


def save_density_field_csv(fieldv: DensityField, path):
    """CSV columns: bin_center, bin_width, value[, variance]."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        has_var = fieldv.variances is not None
        header = ["bin_center", "bin_width", "value"]
        if has_var:
            header.append("variance")
        writer.writerow(header)
        for i in range(len(fieldv.centers)):
            row = [repr(float(fieldv.centers[i])),
                   repr(float(fieldv.widths[i])),
                   repr(float(fieldv.values[i]))]
            if has_var:
                row.append(repr(float(fieldv.variances[i])))
            writer.writerow(row)
