"""Periodic interpolation helpers for grid-sampled band quantities.

Band data lives on uniform grids over the Brillouin-zone coefficient box
(period 1 per axis, cell-centered sampling).  Two evaluators are provided:
an exact trigonometric one (slow, small batches, used by tests and flows
with few trajectories) and a cubic-spline one on an FFT-upsampled fine grid
(fast vectorized gathers for phase-space-sized batches, error well under the
expansion budgets).
"""

from __future__ import annotations

import numpy as np

__all__ = ["fourier_coeffs_centered", "PeriodicFourier", "PeriodicSpline"]


def _sym_freqs(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n).astype(int)


def fourier_coeffs_centered(samples: np.ndarray) -> np.ndarray:
    """Fourier coefficients c_P of data sampled at alpha_m = (m + 1/2)/n - 1/2.

    f(alpha) = sum_P c_P exp(2 pi i P . alpha); coefficients in FFT layout.
    """
    c = np.fft.fftn(samples) / np.prod(samples.shape)
    for ax, n in enumerate(samples.shape):
        P = _sym_freqs(n)
        phase = np.exp(-2j * np.pi * P * (0.5 / n - 0.5))
        sh = [1] * samples.ndim
        sh[ax] = n
        c = c * phase.reshape(sh)
    return c


class PeriodicFourier:
    """Exact trigonometric interpolation of real periodic grid data.

    Data is sampled cell-centered on [-1/2, 1/2)^d; evaluation accepts
    arbitrary alpha (period-1 wrap is automatic).
    """

    def __init__(self, samples: np.ndarray):
        samples = np.asarray(samples, dtype=float)
        self.shape = samples.shape
        self.coeffs = fourier_coeffs_centered(samples)
        self.freqs = [_sym_freqs(n) for n in samples.shape]

    def __call__(self, alpha: np.ndarray, deriv=None) -> np.ndarray:
        """Evaluate at alpha (..., d); deriv is an optional tuple of per-axis
        derivative orders (w.r.t. alpha).  Real output (real data)."""
        d = len(self.shape)
        alpha = np.asarray(alpha, dtype=float)
        if d == 1 and (alpha.ndim == 0 or alpha.shape[-1] != 1):
            alpha = alpha[..., None]
        lead = alpha.shape[:-1]
        flat = alpha.reshape(-1, d)
        r = None
        for ax in range(d):
            P = self.freqs[ax]
            ph = np.exp(2j * np.pi * np.outer(flat[:, ax], P))
            if deriv is not None and deriv[ax] > 0:
                ph = ph * (2j * np.pi * P[None, :]) ** deriv[ax]
            if ax == 0:
                r = np.tensordot(ph, self.coeffs, axes=([1], [0]))
            else:
                r = np.einsum("pa,pa...->p...", ph, r)
        return r.real.reshape(lead)


class PeriodicSpline:
    """Cubic B-spline on a uniform periodic grid with exact prefilter.

    Fast vectorized evaluation for large batches; build from fine-grid values
    (typically FFT-upsampled from coarse data).
    """

    def __init__(self, values: np.ndarray, origin, spacing):
        values = np.asarray(values, dtype=float)
        self.shape = values.shape
        self.ndim = values.ndim
        self.origin = np.broadcast_to(np.asarray(origin, dtype=float), (self.ndim,)).copy()
        self.spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (self.ndim,)).copy()
        F = np.fft.fftn(values)
        for ax, n in enumerate(values.shape):
            w = 2 * np.pi * np.arange(n) / n
            bhat = (4.0 + 2.0 * np.cos(w)) / 6.0
            sh = [1] * self.ndim
            sh[ax] = n
            F = F / bhat.reshape(sh)
        self.c = np.fft.ifftn(F).real

    @staticmethod
    def _weights(t: np.ndarray, deriv: int):
        """Cubic B-spline tap weights for fractional offsets t in [0,1)."""
        if deriv == 0:
            w0 = (1 - t) ** 3 / 6.0
            w1 = (3 * t ** 3 - 6 * t ** 2 + 4) / 6.0
            w2 = (-3 * t ** 3 + 3 * t ** 2 + 3 * t + 1) / 6.0
            w3 = t ** 3 / 6.0
        elif deriv == 1:
            w0 = -((1 - t) ** 2) / 2.0
            w1 = (9 * t ** 2 - 12 * t) / 6.0
            w2 = (-9 * t ** 2 + 6 * t + 3) / 6.0
            w3 = t ** 2 / 2.0
        else:
            raise ValueError("only derivative orders 0 and 1 supported")
        return np.stack([w0, w1, w2, w3], axis=-1)

    def prep(self, pts: np.ndarray) -> "SplinePrep":
        """Precompute tap indices and weights for a point batch so several
        fields (and derivative orders) can be evaluated at shared cost."""
        pts = np.asarray(pts, dtype=float)
        if self.ndim == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        lead = pts.shape[:-1]
        flat = pts.reshape(-1, self.ndim)
        u = (flat - self.origin) / self.spacing
        base = np.floor(u).astype(int)
        t = u - base
        idx = [np.stack([(base[:, ax] - 1 + o) % self.shape[ax] for o in range(4)],
                        axis=-1) for ax in range(self.ndim)]
        W0 = [self._weights(t[:, ax], 0) for ax in range(self.ndim)]
        W1 = [self._weights(t[:, ax], 1) / self.spacing[ax] for ax in range(self.ndim)]
        return SplinePrep(lead=lead, idx=idx, W0=W0, W1=W1)

    def eval_prepped(self, prep: "SplinePrep", deriv=None) -> np.ndarray:
        dv = deriv if deriv is not None else (0,) * self.ndim
        W = [(prep.W1[ax] if dv[ax] == 1 else prep.W0[ax]) for ax in range(self.ndim)]
        idx = prep.idx
        if self.ndim == 1:
            out = np.sum(self.c[idx[0]] * W[0], axis=-1)
        elif self.ndim == 2:
            vals = self.c[idx[0][:, :, None], idx[1][:, None, :]]
            out = np.einsum("pij,pi,pj->p", vals, W[0], W[1])
        else:
            raise ValueError("spline evaluation implemented for d <= 2")
        return out.reshape(prep.lead)

    def __call__(self, pts: np.ndarray, deriv=None) -> np.ndarray:
        return self.eval_prepped(self.prep(pts), deriv)


class SplinePrep:
    __slots__ = ("lead", "idx", "W0", "W1")

    def __init__(self, lead, idx, W0, W1):
        self.lead = lead
        self.idx = idx
        self.W0 = W0
        self.W1 = W1
