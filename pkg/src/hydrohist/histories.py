"""Exact decoherent-histories computations on finite toy Hilbert spaces.

One particle lives on B position bins; N distinguishable particles span the
B^N tensor-product space (dense linear algebra, so B^N is capped).  The
module builds

- collective observables: number, momentum and energy density per bin, with
  symmetrized ordering for the non-diagonal ones;
- projectors: exact occupation / spectral-window projectors and Gaussian
  quasi-projectors (2 pi sigma^2)^(-1/2) exp(-(A - a)^2 / 2 sigma^2);
- the decoherence functional of a multi-time history,

      D(a, a') = Tr[ P_{a_n}(t_n) ... P_{a_1}(t_1) rho P_{a'_1}(t_1) ... P_{a'_n}(t_n) ],

  with Heisenberg projectors generated by a Hamiltonian and, optionally, a
  per-particle position dephasing map interleaved with the unitary steps;
- consistency diagnostics: the off-diagonal ratio epsilon and the bound
  |D(a,a')|^2 <= p(a) p(a'), which any decoherence functional satisfies;
- Gaussian-history probabilities and their peak structure: the exact
  single-time probability, its large-sigma asymptotic form
  (2 pi (sigma^2 + dA^2))^(-1/2) exp(-(<A> - a)^2 / 2(sigma^2 + dA^2)),
  multi-time chains, argmax scans, and tube/complement pairs that make the
  "probabilities concentrate on the mean trajectory" statement quantitative.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import ConfigurationError, DimensionCapError

__all__ = [
    "ToyHilbert",
    "StateVector",
    "DensityOperator",
    "ProjectorFamily",
    "HistorySpec",
    "DecoherenceMatrix",
    "BoundReport",
    "product_state",
    "superposition_state",
    "to_density",
    "one_particle_momentum",
    "lift_one_body",
    "number_density_operator",
    "momentum_density_operator",
    "energy_density_operator",
    "gaussian_quasi_projector",
    "window_projector",
    "occupation_projector",
    "occupation_family",
    "gaussian_occupation_family",
    "decoherence_functional",
    "consistency_epsilon",
    "check_dh_bound",
    "single_time_prob_exact",
    "single_time_prob_asymptotic",
    "multi_time_prob",
    "argmax_scan",
    "complement_pair_consistency",
    "apply_dephasing",
    "save_decoherence_json",
    "save_probability_scan_csv",
]

DEFAULT_DIM_CAP = 2 ** 16
COMMUTATION_TOL = 1e-6


@dataclass(frozen=True)
class ToyHilbert:
    """N distinguishable particles on B position bins (lattice spacing dx)."""

    B: int
    N: int
    dx: float = 1.0
    cap: int = DEFAULT_DIM_CAP

    def __post_init__(self):
        if self.B < 2 or self.N < 1:
            raise ValueError("need B >= 2 bins and N >= 1 particles")
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        if self.B ** self.N > self.cap:
            raise DimensionCapError(
                f"B^N = {self.B ** self.N} exceeds the cap {self.cap}"
            )

    @property
    def dim(self):
        return self.B ** self.N

    def digits(self):
        """(dim, N) array: bin index of each particle per basis state."""
        idx = np.arange(self.dim)
        out = np.empty((self.dim, self.N), dtype=int)
        for k in range(self.N - 1, -1, -1):
            out[:, k] = idx % self.B
            idx //= self.B
        return out

    def occupation_table(self):
        """(dim, B) array: per-basis-state occupation count of each bin."""
        d = self.digits()
        out = np.zeros((self.dim, self.B), dtype=int)
        for b in range(self.B):
            out[:, b] = np.sum(d == b, axis=1)
        return out


@dataclass(frozen=True)
class StateVector:
    space: ToyHilbert
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (self.space.dim,):
            raise ValueError("amplitude vector has the wrong length")
        norm = np.linalg.norm(a)
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"state norm is {norm:.2e}, expected 1")
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)


@dataclass(frozen=True)
class DensityOperator:
    space: ToyHilbert
    matrix: np.ndarray = field(repr=False)
    tol: float = 1e-8

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError("density matrix has the wrong shape")
        if np.max(np.abs(m - m.conj().T)) > 100 * self.tol:
            raise ValueError("density matrix is not Hermitian")
        tr = np.real(np.trace(m))
        if abs(tr - 1.0) > 1e-6:
            raise ValueError(f"trace is {tr:.6f}, expected 1")
        lo = np.min(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))
        if lo < -1e-8:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.2e}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def product_state(space: ToyHilbert, psi) -> StateVector:
    """Tensor power of a normalized one-particle amplitude vector."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (space.B,):
        raise ValueError("one-particle amplitudes must have length B")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
        raise ValueError("one-particle state must be normalized")
    amp = psi
    for _ in range(space.N - 1):
        amp = np.kron(amp, psi)
    return StateVector(space, amp)


def superposition_state(space: ToyHilbert, psi, chi, weights=(1.0, 1.0)) -> StateVector:
    """Normalized w1 |psi>^N + w2 |chi>^N."""
    a = product_state(space, psi).amplitudes
    b = product_state(space, chi).amplitudes
    amp = weights[0] * a + weights[1] * b
    norm = np.linalg.norm(amp)
    if norm < 1e-12:
        raise ValueError("superposition weights cancel the state")
    return StateVector(space, amp / norm)


def to_density(state: StateVector) -> DensityOperator:
    return DensityOperator(state.space, np.outer(state.amplitudes,
                                                 state.amplitudes.conj()))


# --- collective observables -------------------------------------------------


def one_particle_momentum(space: ToyHilbert) -> np.ndarray:
    """Discrete momentum p = F^dag diag(2 pi k / (B dx)) F on one particle."""
    b = space.B
    j = np.arange(b)
    f = np.exp(-2j * np.pi * np.outer(j, j) / b) / math.sqrt(b)
    diag = 2.0 * np.pi * np.fft.fftfreq(b, d=space.dx)
    p = f.conj().T @ np.diag(diag) @ f
    return 0.5 * (p + p.conj().T)


def lift_one_body(space: ToyHilbert, op1) -> np.ndarray:
    """Sum over particles of a one-particle operator: sum_k 1 x op1 x 1."""
    op1 = np.asarray(op1, dtype=complex)
    if op1.shape != (space.B, space.B):
        raise ValueError("one-particle operator must be B x B")
    out = np.zeros((space.dim, space.dim), dtype=complex)
    for k in range(space.N):
        left = np.eye(space.B ** k)
        right = np.eye(space.B ** (space.N - k - 1))
        out += np.kron(np.kron(left, op1), right)
    return out


def number_density_operator(space: ToyHilbert, b: int) -> np.ndarray:
    """n(b) = sum_k |b><b|_k; diagonal with occupation-count spectrum."""
    if not 0 <= b < space.B:
        raise ValueError("bin index out of range")
    return np.diag(space.occupation_table()[:, b].astype(complex))


def momentum_density_operator(space: ToyHilbert, b: int) -> np.ndarray:
    """g(b): symmetrized per-particle (|b><b| p + p |b><b|)/2, summed."""
    if not 0 <= b < space.B:
        raise ValueError("bin index out of range")
    p = one_particle_momentum(space)
    pi = np.zeros((space.B, space.B), dtype=complex)
    pi[b, b] = 1.0
    return lift_one_body(space, 0.5 * (pi @ p + p @ pi))


def energy_density_operator(space: ToyHilbert, b: int, mass: float = 1.0) -> np.ndarray:
    """h(b): symmetrized per-particle (|b><b| h + h |b><b|)/2 with h = p^2/2m."""
    if not 0 <= b < space.B:
        raise ValueError("bin index out of range")
    p = one_particle_momentum(space)
    h1 = p @ p / (2.0 * mass)
    pi = np.zeros((space.B, space.B), dtype=complex)
    pi[b, b] = 1.0
    return lift_one_body(space, 0.5 * (pi @ h1 + h1 @ pi))


# --- projectors -------------------------------------------------------------


def gaussian_quasi_projector(a_op, center, sigma) -> np.ndarray:
    """(2 pi sigma^2)^(-1/2) exp(-(A - center)^2 / 2 sigma^2), spectrally."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    a_op = np.asarray(a_op, dtype=complex)
    vals, vecs = np.linalg.eigh(a_op)
    g = np.exp(-((vals - center) ** 2) / (2.0 * sigma ** 2))
    g /= math.sqrt(2.0 * np.pi) * sigma
    return (vecs * g) @ vecs.conj().T


def window_projector(a_op, interval) -> np.ndarray:
    """Spectral projector onto eigenvalues of A inside [lo, hi]."""
    lo, hi = interval
    if not lo < hi:
        raise ValueError("interval must be nondegenerate")
    a_op = np.asarray(a_op, dtype=complex)
    vals, vecs = np.linalg.eigh(a_op)
    sel = (vals >= lo) & (vals <= hi)
    if not np.any(sel):
        warnings.warn("spectral window is empty; returning the zero projector",
                      stacklevel=2)
        return np.zeros_like(a_op)
    v = vecs[:, sel]
    return v @ v.conj().T


def occupation_projector(space: ToyHilbert, nbar) -> np.ndarray:
    """Projector onto the simultaneous eigenspace n(b) = nbar_b for all bins."""
    nbar = np.asarray(nbar, dtype=int)
    if nbar.shape != (space.B,) or nbar.sum() != space.N:
        raise ValueError("occupation vector must have B entries summing to N")
    hit = np.all(space.occupation_table() == nbar[None, :], axis=1)
    return np.diag(hit.astype(complex))


def occupation_family(space: ToyHilbert):
    """Exhaustive exact projector family over all occupation vectors."""
    table = space.occupation_table()
    vectors = np.unique(table, axis=0)
    fam = []
    for nbar in vectors:
        hit = np.all(table == nbar[None, :], axis=1)
        fam.append((tuple(int(v) for v in nbar), np.diag(hit.astype(complex))))
    return fam


def gaussian_occupation_family(space: ToyHilbert, b: int, centers, sigma):
    """Gaussian quasi-projectors of the bin-b number operator at given centers."""
    n_op = number_density_operator(space, b)
    return [(float(c), gaussian_quasi_projector(n_op, c, sigma)) for c in centers]


# --- histories --------------------------------------------------------------


@dataclass(frozen=True)
class ProjectorFamily:
    """Labeled alternatives at one time: a list of (label, operator) pairs."""

    members: tuple

    def __post_init__(self):
        if len(self.members) == 0:
            raise ValueError("a projector family needs at least one member")
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def labels(self):
        return tuple(m[0] for m in self.members)

    @property
    def operators(self):
        return tuple(m[1] for m in self.members)


@dataclass(frozen=True)
class HistorySpec:
    """Times, per-time projector families, Hamiltonian, optional dephasing.

    ``slots[k]`` is the list of families at time ``times[k]``; when several
    families share a time their projectors must commute pairwise (checked to
    a relative sup-norm tolerance of 1e-6) and the effective alternative is
    their product.
    """

    space: ToyHilbert
    times: tuple
    slots: tuple
    hamiltonian: np.ndarray = field(repr=False)
    dephasing_rate: float = 0.0
    dephasing_substeps: int = 8

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        if len(t) == 0 or any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("times must be nonempty and strictly increasing")
        if t[0] < 0:
            raise ValueError("times must be nonnegative")
        if len(self.slots) != len(t):
            raise ValueError("need one projector slot per time")
        slots = tuple(
            tuple(f if isinstance(f, ProjectorFamily) else ProjectorFamily(tuple(f))
                  for f in slot)
            for slot in self.slots
        )
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.shape != (self.space.dim, self.space.dim):
            raise ValueError("Hamiltonian has the wrong shape")
        if np.max(np.abs(h - h.conj().T)) > 1e-10 * max(np.max(np.abs(h)), 1e-300):
            raise ValueError("Hamiltonian must be Hermitian")
        if self.dephasing_rate < 0:
            raise ValueError("dephasing rate must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "slots", slots)
        object.__setattr__(self, "hamiltonian", h)


@dataclass(frozen=True)
class DecoherenceMatrix:
    """Decoherence functional over a catalog of history labels."""

    labels: tuple
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (len(self.labels), len(self.labels)):
            raise ValueError("matrix shape must match the label catalog")
        if np.max(np.abs(m - m.conj().T)) > 1e-8 * max(np.max(np.abs(m)), 1e-300):
            raise ValueError("decoherence matrix must be Hermitian")
        if np.min(np.real(np.diag(m))) < -1e-10:
            raise ValueError("diagonal entries must be nonnegative")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", tuple(self.labels))

    def probabilities(self):
        return np.clip(np.real(np.diag(self.matrix)), 0.0, None)


@dataclass(frozen=True)
class BoundReport:
    ok: bool
    worst_excess: float
    worst_pair: tuple


def _check_slot_commutation(slot, time):
    """All projectors of distinct families at one time must commute."""
    for i, j in itertools.combinations(range(len(slot)), 2):
        for (la, a), (lb, b) in itertools.product(slot[i].members, slot[j].members):
            comm = a @ b - b @ a
            scale = max(np.max(np.abs(a)) * np.max(np.abs(b)), 1e-300)
            if np.max(np.abs(comm)) > COMMUTATION_TOL * scale:
                raise ConfigurationError(
                    f"projectors {la!r} and {lb!r} at t = {time} do not "
                    f"commute (relative sup-norm "
                    f"{np.max(np.abs(comm)) / scale:.2e})"
                )


def _effective_alternatives(slot, time):
    """Cartesian product across families; labels are flattened tuples."""
    _check_slot_commutation(slot, time)
    alts = []
    for combo in itertools.product(*(f.members for f in slot)):
        label = tuple(m[0] for m in combo)
        if len(slot) == 1:
            label = label[0]
        op = combo[0][1]
        for _, other in combo[1:]:
            op = op @ other
        alts.append((label, op))
    return alts


def _dephasing_mask(space: ToyHilbert, rate, dt):
    """Elementwise damping exp(-rate dt sum_k (x_ak - x_bk)^2) in bin units."""
    d = space.digits().astype(float) * space.dx
    dist2 = np.sum((d[:, None, :] - d[None, :, :]) ** 2, axis=2)
    return np.exp(-rate * dt * dist2)


def _unitary(h, dt):
    return expm(-1j * h * dt)


def _evolve_density(mat, h, t0, t1, space, rate, substeps):
    """rho(t0) -> rho(t1): unitary steps interleaved with dephasing damps."""
    dt = t1 - t0
    if dt == 0:
        return mat
    if rate == 0:
        u = _unitary(h, dt)
        return u @ mat @ u.conj().T
    sub = dt / substeps
    u = _unitary(h, sub)
    mask = _dephasing_mask(space, rate, sub)
    for _ in range(substeps):
        mat = u @ (mat * mask) @ u.conj().T
    return mat


def decoherence_functional(rho, history: HistorySpec) -> DecoherenceMatrix:
    """Evaluate D(a, a') for every pair of history labels.

    ``rho`` may be a StateVector (fast pure-state chains when there is no
    dephasing) or a DensityOperator (branch-pair evolution).
    """
    alts = [_effective_alternatives(slot, t)
            for slot, t in zip(history.slots, history.times)]
    labels = [tuple(lab for lab, _ in level) for level in alts]
    catalog = list(itertools.product(*labels))
    n_times = len(history.times)

    pure = isinstance(rho, StateVector) and history.dephasing_rate == 0.0
    if pure:
        h = history.hamiltonian
        vecs = {(): rho.amplitudes}
        t_prev = 0.0
        for k in range(n_times):
            u = _unitary(h, history.times[k] - t_prev)
            t_prev = history.times[k]
            nxt = {}
            for prefix, v in vecs.items():
                uv = u @ v
                for lab, op in alts[k]:
                    nxt[prefix + (lab,)] = op @ uv
            vecs = nxt
        chain = [vecs[lab] for lab in catalog]
        mat = np.array([[np.vdot(cj, ci) for cj in chain] for ci in chain])
        return DecoherenceMatrix(tuple(catalog), mat)

    if isinstance(rho, StateVector):
        rho = to_density(rho)

    if n_times == 2:
        if history.dephasing_rate == 0.0:
            if _diagonal_disjoint(alts[1]):
                return _two_time_mixed_fast(rho, history, alts, catalog)
            return _two_time_mixed_dense(rho, history, alts, catalog)
        if (history.dephasing_substeps == 1 and _diagonal_disjoint(alts[0])
                and _diagonal_disjoint(alts[1])):
            return _two_time_diagonal_dephased(rho, history, alts, catalog)

    mats = {((), ()): rho.matrix}
    t_prev = 0.0
    for k in range(n_times):
        evolved = {}
        for key, m in mats.items():
            evolved[key] = _evolve_density(
                m, history.hamiltonian, t_prev, history.times[k],
                history.space, history.dephasing_rate,
                history.dephasing_substeps,
            )
        t_prev = history.times[k]
        nxt = {}
        for (pl, pr), m in evolved.items():
            for (ll, opl), (lr, opr) in itertools.product(alts[k], alts[k]):
                nxt[(pl + (ll,), pr + (lr,))] = opl @ m @ opr.conj().T
        mats = nxt
    size = len(catalog)
    out = np.empty((size, size), dtype=complex)
    for i, li in enumerate(catalog):
        for j, lj in enumerate(catalog):
            out[i, j] = np.trace(mats[(li, lj)])
    out = 0.5 * (out + out.conj().T)
    return DecoherenceMatrix(tuple(catalog), out)


def _diagonal_disjoint(level):
    """True when the alternatives are disjoint diagonal 0/1 projectors."""
    masks = []
    for _, op in level:
        d = np.diag(op)
        if np.max(np.abs(op - np.diag(d))) > 1e-14:
            return False
        r = np.real(d)
        if np.max(np.abs(d - r)) > 1e-14 or not np.all(
                (np.abs(r) < 1e-14) | (np.abs(r - 1.0) < 1e-14)):
            return False
        masks.append(r > 0.5)
    total = np.sum(masks, axis=0)
    return bool(np.all(total <= 1))


def _two_time_mixed_fast(rho, history, alts, catalog):
    """Two-time mixed-state functional when the final projectors are exact
    diagonal bins.

    Cross-final entries vanish exactly (the trace restricts to the
    intersection of the two final supports); same-final entries reduce to
    masked row sums of Y_a Y_a'^dag with Y_a = U2 P_a U1 L, rho = L L^dag.
    This avoids materializing every branch-pair matrix.
    """
    w, v = np.linalg.eigh(rho.matrix)
    keep = w > 1e-14
    l_fac = v[:, keep] * np.sqrt(w[keep])
    t1, t2 = history.times
    u1 = _unitary(history.hamiltonian, t1)
    u12 = _unitary(history.hamiltonian, t2 - t1)
    w1 = u1 @ l_fac
    ys = [u12 @ (op @ w1) for _, op in alts[0]]
    masks = [np.real(np.diag(op)) > 0.5 for _, op in alts[1]]
    n1, n2 = len(alts[0]), len(alts[1])
    out = np.zeros((len(catalog), len(catalog)), dtype=complex)
    index = {lab: i for i, lab in enumerate(catalog)}
    for a in range(n1):
        for b in range(a, n1):
            s = np.sum(ys[a] * ys[b].conj(), axis=1)  # diag(Y_a Y_b^dag)
            for c in range(n2):
                val = np.sum(s[masks[c]])
                la = (alts[0][a][0], alts[1][c][0])
                lb = (alts[0][b][0], alts[1][c][0])
                out[index[la], index[lb]] = val
                out[index[lb], index[la]] = np.conj(val)
    return DecoherenceMatrix(tuple(catalog), out)


def _two_time_diagonal_dephased(rho, history, alts, catalog):
    """Two-time functional with dephasing when both levels are diagonal bins.

    With a single damp-then-rotate substep over [t1, t2], the branch matrix
    P_a rho' P_b is a row/column block of the damped matrix, so every entry
    reduces to block products with the interval unitary; cross-final entries
    vanish exactly as in the undamped diagonal case.
    """
    t1, t2 = history.times
    rate = history.dephasing_rate
    rho1 = _evolve_density(rho.matrix, history.hamiltonian, 0.0, t1,
                           history.space, rate, history.dephasing_substeps)
    zm = rho1 * _dephasing_mask(history.space, rate, t2 - t1)
    u12 = _unitary(history.hamiltonian, t2 - t1)
    idx0 = [np.flatnonzero(np.real(np.diag(op)) > 0.5) for _, op in alts[0]]
    masks1 = [np.real(np.diag(op)) > 0.5 for _, op in alts[1]]
    n1 = len(alts[0])
    out = np.zeros((len(catalog), len(catalog)), dtype=complex)
    index = {lab: i for i, lab in enumerate(catalog)}
    for a in range(n1):
        ua = u12[:, idx0[a]]
        for b in range(a, n1):
            block = zm[np.ix_(idx0[a], idx0[b])]
            diag = np.sum((ua @ block) * u12[:, idx0[b]].conj(), axis=1)
            for c, mask in enumerate(masks1):
                val = np.sum(diag[mask])
                la = (alts[0][a][0], alts[1][c][0])
                lb = (alts[0][b][0], alts[1][c][0])
                out[index[la], index[lb]] = val
                out[index[lb], index[la]] = np.conj(val)
    return DecoherenceMatrix(tuple(catalog), out)


def _two_time_mixed_dense(rho, history, alts, catalog):
    """Two-time mixed-state functional for arbitrary (e.g. smeared) operators.

    Entries are formed one branch pair at a time from
    T_ab = (U12 P_a U1) rho (U12 P_b U1)^dag, so memory stays at a handful
    of dim x dim matrices instead of one per pair of label chains.
    """
    t1, t2 = history.times
    u1 = _unitary(history.hamiltonian, t1)
    u12 = _unitary(history.hamiltonian, t2 - t1)
    chains = [u12 @ (op @ u1) for _, op in alts[0]]
    rows = [c @ rho.matrix for c in chains]
    # trace(P_c T P_d^dag) = sum over elements of (P_d^dag P_c) * T^T
    finals = [op for _, op in alts[1]]
    cross = [[d.conj().T @ c for c in finals] for d in finals]
    n1, n2 = len(alts[0]), len(alts[1])
    out = np.empty((len(catalog), len(catalog)), dtype=complex)
    index = {lab: i for i, lab in enumerate(catalog)}
    for a in range(n1):
        for b in range(a, n1):
            t_ab = rows[a] @ chains[b].conj().T
            tt = t_ab.T
            for c in range(n2):
                for d in range(n2):
                    val = np.sum(cross[d][c] * tt)
                    la = (alts[0][a][0], alts[1][c][0])
                    lb = (alts[0][b][0], alts[1][d][0])
                    out[index[la], index[lb]] = val
                    out[index[lb], index[la]] = np.conj(val)
    out = 0.5 * (out + out.conj().T)
    return DecoherenceMatrix(tuple(catalog), out)


def consistency_epsilon(dmat: DecoherenceMatrix) -> float:
    """max over a != a' of |D(a,a')| / sqrt(p(a) p(a')), skipping empty rows."""
    p = dmat.probabilities()
    live = p > 1e-300
    if np.count_nonzero(live) < np.size(p):
        warnings.warn(
            f"{np.size(p) - np.count_nonzero(live)} zero-probability histories "
            "excluded from epsilon", stacklevel=2)
    idx = np.flatnonzero(live)
    eps = 0.0
    for i, j in itertools.combinations(idx, 2):
        eps = max(eps, abs(dmat.matrix[i, j]) / math.sqrt(p[i] * p[j]))
    return eps


def check_dh_bound(dmat: DecoherenceMatrix, slack: float = 1e-10) -> BoundReport:
    """Verify |D(a,a')|^2 <= p(a) p(a') + slack for every pair."""
    p = dmat.probabilities()
    worst = -np.inf
    pair = None
    n = len(p)
    for i in range(n):
        for j in range(i + 1, n):
            excess = abs(dmat.matrix[i, j]) ** 2 - p[i] * p[j]
            if excess > worst:
                worst = excess
                pair = (dmat.labels[i], dmat.labels[j])
    return BoundReport(ok=bool(worst <= slack), worst_excess=float(worst),
                       worst_pair=pair)


# --- Gaussian history probabilities ----------------------------------------


def _as_density_matrix(rho):
    if isinstance(rho, StateVector):
        return np.outer(rho.amplitudes, rho.amplitudes.conj())
    if isinstance(rho, DensityOperator):
        return rho.matrix
    return np.asarray(rho, dtype=complex)


def _mean_and_spread(rho_m, a_op):
    mean = float(np.real(np.trace(rho_m @ a_op)))
    second = float(np.real(np.trace(rho_m @ a_op @ a_op)))
    return mean, math.sqrt(max(second - mean ** 2, 0.0))


def single_time_prob_exact(rho, a_op, center, sigma) -> float:
    """Tr(P_a rho) with the Gaussian quasi-projector of A."""
    rho_m = _as_density_matrix(rho)
    p = gaussian_quasi_projector(a_op, center, sigma)
    return float(np.real(np.trace(p @ rho_m)))


def single_time_prob_asymptotic(rho, a_op, center, sigma) -> float:
    """Large-sigma form: Gaussian of width sqrt(sigma^2 + dA^2) about <A>."""
    rho_m = _as_density_matrix(rho)
    mean, spread = _mean_and_spread(rho_m, a_op)
    s2 = sigma ** 2 + spread ** 2
    return math.exp(-((mean - center) ** 2) / (2.0 * s2)) / math.sqrt(
        2.0 * np.pi * s2)


def _heisenberg_ops(a_op, h, times):
    """A(t) = U^dag A U at each requested time."""
    out = []
    for t in times:
        u = _unitary(h, t)
        out.append(u.conj().T @ a_op @ u)
    return out


def multi_time_prob(rho, a_op, times, centers, sigma, h) -> float:
    """Probability of the Gaussian-projector chain at the given centers.

    Standard chain form with the final projector appearing once,
    p = Re Tr(P_n ... P_1 rho P_1 ... P_{n-1}), so a single-time history
    reduces exactly to Tr(P rho).
    """
    times = tuple(float(t) for t in times)
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    centers = tuple(centers)
    if len(centers) != len(times):
        raise ValueError("need one center per time")
    rho_m = _as_density_matrix(rho)
    a_t = _heisenberg_ops(a_op, h, times)
    spreads = [_mean_and_spread(rho_m, at)[1] for at in a_t]
    if sigma < 3.0 * max(spreads):
        warnings.warn(
            "sigma is not large against the spread of A(t); the peak "
            "structure may deviate from the mean trajectory", stacklevel=2)
    c_op = np.eye(rho_m.shape[0], dtype=complex)
    for at, c in zip(a_t[:-1], centers[:-1]):
        c_op = gaussian_quasi_projector(at, c, sigma) @ c_op
    inner = c_op @ rho_m @ c_op.conj().T
    p_final = gaussian_quasi_projector(a_t[-1], centers[-1], sigma)
    return float(np.real(np.trace(p_final @ inner)))


def _center_grids(rho_m, a_t, sigma, spacing_factor=0.1, half_width_sigmas=4.0):
    grids = []
    for at in a_t:
        mean, _ = _mean_and_spread(rho_m, at)
        half = half_width_sigmas * sigma
        grids.append(np.arange(mean - half, mean + half + 1e-12,
                               spacing_factor * sigma))
    return grids


def argmax_scan(rho, a_op, times, sigma, h):
    """Peak of the multi-time Gaussian-history probability over a center grid.

    Grids are uniform with spacing sigma/10 over <A(t)> +/- 4 sigma.  The
    scan expands chains level by level in the eigenbasis of each A(t), so the
    cost is (grid size)^n vector operations, not matrix products.
    """
    times = tuple(float(t) for t in times)
    rho_m = _as_density_matrix(rho)
    a_t = _heisenberg_ops(a_op, h, times)
    grids = _center_grids(rho_m, a_t, sigma)

    # decompose rho into pure components; probability is linear in rho
    w, v = np.linalg.eigh(rho_m)
    keep = w > 1e-12
    weights = w[keep]
    components = v[:, keep]

    shape = tuple(len(g) for g in grids)
    total = np.zeros(shape)
    norm = 1.0 / (math.sqrt(2.0 * np.pi) * sigma)
    for wj, psi in zip(weights, components.T):
        batch = psi[None, :]  # (n_chains, dim)
        for k, (at, grid) in enumerate(zip(a_t[:-1], grids[:-1])):
            vals, vecs = np.linalg.eigh(at)
            eig = batch @ vecs.conj()  # components in the A(t_k) eigenbasis
            gauss = norm * np.exp(
                -((vals[None, :] - grid[:, None]) ** 2) / (2 * sigma ** 2))
            # new batch: one chain per (old chain, center)
            eig = eig[:, None, :] * gauss[None, :, :]
            batch = (eig.reshape(-1, len(vals))) @ vecs.T
        # final time: the projector enters once, p = Re <v|P_n(c)|v>
        vals, vecs = np.linalg.eigh(a_t[-1])
        eig2 = np.abs(batch @ vecs.conj()) ** 2
        gauss = norm * np.exp(
            -((vals[None, :] - grids[-1][:, None]) ** 2) / (2 * sigma ** 2))
        total += wj * (eig2 @ gauss.T).reshape(shape)
    best = np.unravel_index(np.argmax(total), shape)
    peak = tuple(float(grids[k][best[k]]) for k in range(len(grids)))
    return peak, grids, total


def complement_pair_consistency(rho, a_op, times, tube_width, h):
    """Tube-vs-complement two-history set around the mean trajectory of A.

    The tube class operator chains window projectors of half-width
    tube_width/2 about <A(t_k)>; the complement is C_comp = 1 - C_tube.
    Returns the tube probability p, complement probability p_bar, and the
    off-diagonal entry, which satisfy p + p_bar + 2 Re D = 1 exactly.
    """
    times = tuple(float(t) for t in times)
    rho_m = _as_density_matrix(rho)
    a_t = _heisenberg_ops(a_op, h, times)
    c_tube = np.eye(rho_m.shape[0], dtype=complex)
    for at in a_t:
        mean, _ = _mean_and_spread(rho_m, at)
        proj = window_projector(at, (mean - tube_width / 2.0,
                                     mean + tube_width / 2.0))
        c_tube = proj @ c_tube
    c_comp = np.eye(rho_m.shape[0], dtype=complex) - c_tube
    p = float(np.real(np.trace(c_tube @ rho_m @ c_tube.conj().T)))
    p_bar = float(np.real(np.trace(c_comp @ rho_m @ c_comp.conj().T)))
    off = complex(np.trace(c_tube @ rho_m @ c_comp.conj().T))
    return p, p_bar, off


def apply_dephasing(rho: DensityOperator, rate, dt) -> DensityOperator:
    """Damp position off-diagonals by exp(-rate d^2 dt); trace preserved."""
    if rate < 0 or dt < 0:
        raise ValueError("rate and dt must be nonnegative")
    mask = _dephasing_mask(rho.space, rate, dt)
    return DensityOperator(rho.space, rho.matrix * mask)


# --- serialization ----------------------------------------------------------


def save_decoherence_json(dmat: DecoherenceMatrix, path):
    """JSON payload: labels, real/imag parts, probabilities, epsilon."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        eps = consistency_epsilon(dmat)
    payload = {
        "labels": [list(lab) if isinstance(lab, tuple) else lab
                   for lab in dmat.labels],
        "real": np.real(dmat.matrix).tolist(),
        "imag": np.imag(dmat.matrix).tolist(),
        "probabilities": dmat.probabilities().tolist(),
        "epsilon": eps,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    return payload


def save_probability_scan_csv(grids, values, path):
    """CSV rows: one center per time column, then the probability."""
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"center_{k}" for k in range(len(grids))]
                        + ["probability"])
        for idx in itertools.product(*(range(len(g)) for g in grids)):
            row = [repr(float(grids[k][i])) for k, i in enumerate(idx)]
            row.append(repr(float(values[idx])))
            writer.writerow(row)
