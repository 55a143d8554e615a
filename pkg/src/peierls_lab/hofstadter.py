"""Harper/Hofstadter spectra from the Peierls-substituted cosine band.

At rational flux alpha = p/q the magnetic Bloch reduction of the band
E(k) = cos k_1 + cos k_2 is the q x q family

    H(theta)[n, n] = cos(2 pi alpha n + theta_2),
    H(theta)[n, n+1] = e^{-i theta_1} / 2   (cyclic),

whose spectrum is contained in [-2, 2].  Eigenvalue branches are periodic
with 2 pi / q in both angles, and their extrema sit at the four Chambers
points (q theta_i in {0, pi}), so per-branch min/max over an even reduced
grid yields exact subband edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np

from .geometry import chern_from_vectors

__all__ = [
    "FluxRational",
    "ButterflyData",
    "harper_bloch_matrix",
    "spectrum_at_flux",
    "butterfly",
    "subband_chern",
    "transfer_trace_edges",
    "diophantine_chern_labels",
]


class HofstadterError(ValueError):
    pass


@dataclass(frozen=True)
class FluxRational:
    p: int
    q: int

    def __post_init__(self):
        if self.q < 1:
            raise HofstadterError("q must be >= 1")

    @classmethod
    def of(cls, p: int, q: int, warn=None) -> "FluxRational":
        g = gcd(p, q)
        if g > 1 and warn is not None:
            warn(f"flux {p}/{q} reduced to {p // g}/{q // g}")
        return cls(p=p // g if g else p, q=q // g if g else q)

    @property
    def alpha(self) -> float:
        return self.p / self.q


@dataclass(frozen=True)
class ButterflyData:
    """Subband intervals per flux: entries (alpha: Fraction, band_index,
    e_min, e_max, chern) with chern None when labels were not requested."""

    entries: list

    def fluxes(self):
        return sorted({e[0] for e in self.entries})

    def intervals(self, alpha):
        key = alpha if isinstance(alpha, Fraction) else Fraction(alpha).limit_denominator(10 ** 6)
        return [(e[2], e[3]) for e in self.entries if e[0] == key]


def harper_bloch_matrix(flux: FluxRational, theta1: float, theta2: float) -> np.ndarray:
    """q x q Hermitian Bloch matrix at magnetic Bloch phases (theta1, theta2)."""
    q = flux.q
    n = np.arange(q)
    H = np.zeros((q, q), dtype=complex)
    H[n, n] = np.cos(2 * np.pi * flux.alpha * n + theta2)
    if q == 1:
        H[0, 0] += np.cos(theta1)
        return H
    hop = 0.5 * np.exp(-1j * theta1)
    H[n[:-1], n[:-1] + 1] = hop
    H[n[:-1] + 1, n[:-1]] = np.conj(hop)
    H[q - 1, 0] += hop
    H[0, q - 1] += np.conj(hop)
    return H


def _bloch_family(flux: FluxRational, n_theta: int, reduced: bool = True):
    """Stacked H(theta) over an n_theta x n_theta grid.

    reduced=True spans [0, 2 pi / q) per angle (even n_theta hits the
    Chambers points exactly); otherwise the full [0, 2 pi) torus.
    """
    q = flux.q
    period = 2 * np.pi / q if reduced else 2 * np.pi
    th = period * np.arange(n_theta) / n_theta
    T1, T2 = np.meshgrid(th, th, indexing="ij")
    n = np.arange(q)
    H = np.zeros(T1.shape + (q, q), dtype=complex)
    diag = np.cos(2 * np.pi * flux.alpha * n[None, None, :] + T2[..., None])
    H[..., n, n] = diag
    if q == 1:
        H[..., 0, 0] += np.cos(T1)
        return th, H
    hop = 0.5 * np.exp(-1j * T1)
    for i in range(q - 1):
        H[..., i, i + 1] = hop
        H[..., i + 1, i] = np.conj(hop)
    H[..., q - 1, 0] += hop
    H[..., 0, q - 1] += np.conj(hop)
    return th, H


def spectrum_at_flux(flux: FluxRational, n_theta: int = 64) -> np.ndarray:
    """Subband intervals [(e_min, e_max)] * q from per-branch extrema over the
    reduced theta grid (exact edges for even n_theta)."""
    if n_theta % 2 == 1:
        n_theta += 1
    _, H = _bloch_family(flux, n_theta, reduced=True)
    evals = np.linalg.eigvalsh(H)  # (n, n, q) ascending
    lo = evals.min(axis=(0, 1))
    hi = evals.max(axis=(0, 1))
    return np.stack([lo, hi], axis=-1)


def transfer_trace_edges(flux: FluxRational) -> np.ndarray:
    """Independent band edges from the transfer-matrix trace condition.

    The one-cycle transfer trace splits as tr M(E, theta2) = G(E) + a cos(q theta2);
    the spectrum is {E : |G(E)| <= 2 + |a|}, so edges are roots of
    G(E) = +-(2 + |a|).  G is reconstructed as a degree-q polynomial from
    sampled traces.
    """
    q = flux.q

    def trace(E, th2):
        M = np.eye(2)
        for nn in range(q):
            v = np.cos(2 * np.pi * flux.alpha * nn + th2)
            T = np.array([[2.0 * (E - v), -1.0], [1.0, 0.0]])
            M = T @ M
        return np.trace(M)

    Es = np.cos(np.pi * (2 * np.arange(q + 1) + 1) / (2 * (q + 1))) * 2.5
    G = np.array([0.5 * (trace(E, 0.0) + trace(E, np.pi / q)) for E in Es])
    a = 0.5 * (trace(Es[0], 0.0) - trace(Es[0], np.pi / q))
    coeffs = np.polyfit(Es, G, q)
    edges = []
    for s in (+1.0, -1.0):
        c = coeffs.copy()
        c[-1] -= s * (2.0 + abs(a))
        roots = np.roots(c)
        edges.extend(np.sort(roots[np.abs(roots.imag) < 1e-9].real))
    edges = np.sort(np.asarray(edges))
    if len(edges) != 2 * q:
        raise HofstadterError("edge extraction failed (unexpected root count)")
    return edges.reshape(q, 2)


def butterfly(q_max: int, n_theta: int = 64, chern_labels: bool = False,
              chern_q_max: int = 10, n_workers: int = 1) -> ButterflyData:
    """Subband intervals for all reduced fluxes p/q with q <= q_max,
    deterministic ordering by (alpha, band index)."""
    fluxes = sorted({Fraction(p, q) for q in range(1, q_max + 1)
                     for p in range(0, q + 1)})
    entries = []

    def work(fr):
        fl = FluxRational(fr.numerator, fr.denominator)
        ivals = spectrum_at_flux(fl, n_theta)
        cherns = [None] * fl.q
        if chern_labels and fl.q <= chern_q_max:
            try:
                cherns = [subband_chern(fl, j) for j in range(fl.q)]
            except HofstadterError:
                cherns = [None] * fl.q
        return [(fr, j, float(ivals[j, 0]), float(ivals[j, 1]), cherns[j])
                for j in range(fl.q)]

    if n_workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for rows in pool.map(work, fluxes):
                entries.extend(rows)
    else:
        for fr in fluxes:
            entries.extend(work(fr))
    return ButterflyData(entries=entries)


def subband_chern(flux: FluxRational, band: int, n_theta: int | None = None,
                  gap_tol: float = 1e-9) -> int:
    """Chern number of one magnetic subband.

    The plaquette sum runs over the full theta torus, which is a q-fold cover
    of the magnetic Brillouin zone along theta_1; the subband invariant is the
    covered value divided by q, with the orientation fixed so that the
    standard gap-labeling convention (p t = r mod q) is reproduced.  Raises
    when the band touches a neighbor anywhere on the grid.
    """
    q = flux.q
    if n_theta is None:
        n_theta = max(24, 6 * q)
    _, H = _bloch_family(flux, n_theta, reduced=False)
    evals, evecs = np.linalg.eigh(H)
    if band < 0 or band >= q:
        raise HofstadterError("band index out of range")
    if band > 0 and np.min(evals[..., band] - evals[..., band - 1]) < gap_tol:
        raise HofstadterError(f"subband {band} touches band {band - 1}")
    if band + 1 < q and np.min(evals[..., band + 1] - evals[..., band]) < gap_tol:
        raise HofstadterError(f"subband {band} touches band {band + 1}")
    vecs = evecs[..., band]
    c = -chern_from_vectors(vecs) / q
    ci = int(np.round(c))
    if abs(c - ci) > 1e-6:
        raise HofstadterError(f"Chern number not integral: {c}")
    return ci


def diophantine_chern_labels(flux: FluxRational) -> list:
    """Brute-force gap labels: t_r solves p t = r (mod q) with |t| <= q/2;
    subband Chern numbers are first differences."""
    p, q = flux.p, flux.q
    ts = [0]
    for r in range(1, q):
        sols = [t for t in range(-(q // 2), q // 2 + 1) if (p * t - r) % q == 0]
        if len(sols) != 1:
            raise HofstadterError(f"gap label ambiguous at r={r} for {p}/{q}")
        ts.append(sols[0])
    ts.append(0)
    return [ts[r + 1] - ts[r] for r in range(q)]
