"""External electromagnetic field configuration.

The magnetic field enters everything downstream only through the
antisymmetric matrix B(r); vector potentials are needed solely for kernel
phases and may be supplied in any gauge with dA = B, where
B_lj = d_l A_j - d_j A_l.  For constant B the symmetric gauge
A(r) = -B r / 2 and the Landau gauge are built in; the transversal gauge
construction covers smooth position-dependent fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

__all__ = ["EMFieldConfig", "FieldError"]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_S = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


class FieldError(ValueError):
    pass


def _zero_phi(r):
    r = np.asarray(r, dtype=float)
    return np.zeros(r.shape[:-1])


def _zero_grad(r):
    r = np.asarray(r, dtype=float)
    return np.zeros(r.shape)


def _zero_hess(r):
    r = np.asarray(r, dtype=float)
    d = r.shape[-1]
    return np.zeros(r.shape[:-1] + (d, d))


@dataclass(frozen=True)
class EMFieldConfig:
    """Scales and field data for one experiment.

    eps : scale-separation parameter in (0, 1].
    lam : magnetic amplitude ratio in [0, 1].
    dim : spatial dimension.
    bfield : (d, d) constant antisymmetric matrix, or callable r -> (..., d, d).
    vector_potential : callable r -> (..., d); gauge tag records the choice.
    phi, grad_phi, hess_phi : scalar potential and its derivatives (analytic).
    dbfield : callable r -> (..., d, d, d) with entry [l, j, m] = d_m B_lj,
        required only for position-dependent B in corrected flows.
    """

    eps: float
    lam: float
    dim: int
    bfield: object
    vector_potential: object
    gauge: str
    phi: object = dc_field(default=_zero_phi)
    grad_phi: object = dc_field(default=_zero_grad)
    hess_phi: object = dc_field(default=_zero_hess)
    dbfield: object = None

    def __post_init__(self):
        if not (0 <= self.eps):
            raise FieldError("eps must be nonnegative")
        if not (0 <= self.lam <= 1):
            raise FieldError("lam must lie in [0, 1]")
        B0 = self.B(np.zeros(self.dim))
        if B0.shape != (self.dim, self.dim):
            raise FieldError("B must produce (d, d) matrices")
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(8, self.dim))
        Bs = self.B(pts)
        if np.abs(Bs + np.swapaxes(Bs, -1, -2)).max() > 1e-12:
            raise FieldError("magnetic field matrix must be antisymmetric")
        if self.gauge in ("symmetric", "landau", "linear"):
            self._check_linear_gauge(pts)

    # -- constructors --------------------------------------------------

    @classmethod
    def zero(cls, dim: int, eps: float, phi=None, grad_phi=None, hess_phi=None) -> "EMFieldConfig":
        """No magnetic field; optional electric potential."""
        B = np.zeros((dim, dim))
        return cls(eps=eps, lam=0.0, dim=dim,
                   bfield=B, vector_potential=lambda r: np.zeros(np.shape(r)),
                   gauge="zero",
                   phi=phi or _zero_phi, grad_phi=grad_phi or _zero_grad,
                   hess_phi=hess_phi or _zero_hess)

    @classmethod
    def constant(cls, dim: int, b: float, eps: float, lam: float = 1.0,
                 gauge: str = "symmetric", phi=None, grad_phi=None,
                 hess_phi=None) -> "EMFieldConfig":
        """Constant magnetic field; in 2D, B_12 = b."""
        if dim == 1:
            if b != 0.0:
                raise FieldError("no magnetic field in one dimension")
            return cls.zero(dim, eps, phi, grad_phi, hess_phi)
        B = np.zeros((dim, dim))
        B[0, 1], B[1, 0] = b, -b
        if gauge == "symmetric":
            A = lambda r: -0.5 * np.asarray(r, dtype=float) @ B.T
        elif gauge == "landau":
            def A(r):
                r = np.asarray(r, dtype=float)
                out = np.zeros(r.shape)
                out[..., 0] = -b * r[..., 1]
                return out
        else:
            raise FieldError(f"unknown constant-field gauge {gauge!r}")
        return cls(eps=eps, lam=lam, dim=dim, bfield=B, vector_potential=A,
                   gauge=gauge if gauge == "landau" else "symmetric",
                   phi=phi or _zero_phi, grad_phi=grad_phi or _zero_grad,
                   hess_phi=hess_phi or _zero_hess)

    @classmethod
    def transversal(cls, dim: int, bfield, dbfield, eps: float, lam: float = 1.0,
                    phi=None, grad_phi=None, hess_phi=None) -> "EMFieldConfig":
        """Position-dependent field with the transversal gauge
        A_k(r) = -int_0^1 ds B_kj(s r) s r_j."""
        def A(r):
            r = np.asarray(r, dtype=float)
            out = np.zeros(r.shape)
            for s, w in zip(_GL_S, _GL_W):
                Bs = np.asarray(bfield(s * r))
                out += w * s * np.einsum("...kj,...j->...k", Bs, r)
            return -out
        return cls(eps=eps, lam=lam, dim=dim, bfield=bfield,
                   vector_potential=A, gauge="transversal",
                   phi=phi or _zero_phi, grad_phi=grad_phi or _zero_grad,
                   hess_phi=hess_phi or _zero_hess, dbfield=dbfield)

    # -- evaluation ----------------------------------------------------

    def B(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if callable(self.bfield):
            return np.asarray(self.bfield(r))
        return np.broadcast_to(self.bfield, r.shape[:-1] + (self.dim, self.dim))

    def dB(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.dbfield is None:
            if callable(self.bfield):
                raise FieldError("position-dependent B needs dbfield")
            return np.zeros(r.shape[:-1] + (self.dim,) * 3)
        return np.asarray(self.dbfield(r))

    def A(self, r) -> np.ndarray:
        return np.asarray(self.vector_potential(np.asarray(r, dtype=float)))

    def line_integral(self, start: np.ndarray, stop: np.ndarray) -> np.ndarray:
        """Integral of A(eps z) . dz along straight micro segments start -> stop.

        start/stop shape (..., d).  Exact (midpoint rule) for linear gauges,
        8-point Gauss-Legendre otherwise.
        """
        start, stop = np.broadcast_arrays(np.asarray(start, dtype=float),
                                          np.asarray(stop, dtype=float))
        delta = stop - start
        if self.gauge in ("zero",):
            return np.zeros(start.shape[:-1])
        if self.gauge in ("symmetric", "landau", "linear"):
            mid = 0.5 * self.eps * (start + stop)
            return np.einsum("...j,...j->...", self.A(mid), delta)
        out = np.zeros(start.shape[:-1])
        for s, w in zip(_GL_S, _GL_W):
            z = self.eps * (start + s * delta)
            out += w * np.einsum("...j,...j->...", self.A(z), delta)
        return out

    def _check_linear_gauge(self, pts):
        """Verify dA = B by finite differences at sample points."""
        h = 1e-5
        d = self.dim
        for p in pts:
            J = np.zeros((d, d))
            for m in range(d):
                e = np.zeros(d)
                e[m] = h
                J[m] = (self.A(p + e) - self.A(p - e)) / (2 * h)
            curl = J - J.T  # curl[l, j] = d_l A_j - d_j A_l
            if np.abs(curl - self.B(p)).max() > 1e-6:
                raise FieldError("vector potential inconsistent with B (dA != B)")
