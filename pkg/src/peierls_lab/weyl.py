"""Grid-level magnetic Weyl quantization and its small-parameter expansion.

Operators live on a truncated uniform position grid with odd point counts per
axis; momenta are the symmetric FFT-dual frequencies.  The quantizer composes
an exactly invertible discrete Weyl correspondence with the gauge phase
factors e^{-i lam Gamma} built from line integrals of the vector potential,
so quantize / dequantize form an exact inverse pair and the symbol product
realized as dequantize(quantize(f) @ quantize(g)) is the operator product by
construction.  Comparisons against continuum formulas are meaningful on
interior windows and on band-limited states; the box seam carries the usual
truncation artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import EMFieldConfig

__all__ = [
    "PhaseSpaceGrid",
    "GridSymbol",
    "QuantizedOperator",
    "sample_symbol",
    "quantize",
    "dequantize",
    "exact_product",
    "magnetic_poisson",
    "expanded_product",
    "gauge_covariance_check",
    "position_operator",
    "momentum_operator",
    "coherent_state",
    "commutation_check",
    "operator_norm",
    "resample_periodic",
]


class WeylError(ValueError):
    pass


def _sym_freqs(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0 / n).astype(int)


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Tensor phase-space grid: micro positions x, macro positions X = eps x,
    and the dual momentum grid.

    ns : odd point count per axis.
    h : micro spacing per axis (momenta then live on [-pi/h, pi/h)).
    eps : scale factor relating micro and macro position.
    """

    ns: tuple
    h: tuple
    eps: float

    def __post_init__(self):
        if any(n % 2 == 0 for n in self.ns):
            raise WeylError("grid sizes must be odd")

    @classmethod
    def build(cls, ns, h, eps: float) -> "PhaseSpaceGrid":
        if np.isscalar(ns):
            ns = (int(ns),)
        ns = tuple(int(n) for n in ns)
        if np.isscalar(h):
            h = (float(h),) * len(ns)
        return cls(ns=ns, h=tuple(float(v) for v in h), eps=float(eps))

    @property
    def dim(self) -> int:
        return len(self.ns)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.ns))

    def x_axis(self, l: int) -> np.ndarray:
        n = self.ns[l]
        return (np.arange(n) - (n - 1) // 2) * self.h[l]

    def xi_axis(self, l: int) -> np.ndarray:
        n = self.ns[l]
        return 2 * np.pi * (np.arange(n) - (n - 1) // 2) / (n * self.h[l])

    def X_axis(self, l: int) -> np.ndarray:
        return self.eps * self.x_axis(l)

    def points_micro(self) -> np.ndarray:
        """(N, d) micro position grid points, C-ordered."""
        mesh = np.meshgrid(*[self.x_axis(l) for l in range(self.dim)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def phase_mesh(self):
        """Meshgrid (X_1..X_d, xi_1..xi_d) over the full phase-space grid."""
        axes = [self.X_axis(l) for l in range(self.dim)] + \
               [self.xi_axis(l) for l in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    def interior_mask_1d(self, l: int, fraction: float = 0.5) -> np.ndarray:
        n = self.ns[l]
        lo = int(round(n * (1 - fraction) / 2))
        m = np.zeros(n, dtype=bool)
        m[lo:n - lo] = True
        return m

    def interior_indices(self, fraction: float = 0.5) -> np.ndarray:
        """Flat indices of position-grid points in the central window."""
        masks = [self.interior_mask_1d(l, fraction) for l in range(self.dim)]
        mesh = np.meshgrid(*masks, indexing="ij")
        keep = np.ones(self.ns, dtype=bool)
        for m in mesh:
            keep &= m
        return np.nonzero(keep.ravel())[0]


@dataclass(frozen=True)
class GridSymbol:
    """Phase-space samples f(X_i, xi_j) on a tensor grid.

    samples has shape ns + ns (position axes first, then momentum axes).
    """

    grid: PhaseSpaceGrid
    samples: np.ndarray

    def __post_init__(self):
        if self.samples.shape != self.grid.ns + self.grid.ns:
            raise WeylError(
                f"sample shape {self.samples.shape} does not match grid {self.grid.ns}")

    def spectral_tail_fraction(self) -> float:
        """Energy fraction of the top 10% frequency shell (aliasing guard)."""
        F = np.fft.fftn(self.samples)
        p = np.abs(F) ** 2
        total = p.sum()
        if total == 0:
            return 0.0
        mask = np.zeros(self.samples.shape, dtype=bool)
        for ax, n in enumerate(self.samples.shape):
            f = np.abs(_sym_freqs(n))
            sel = f >= 0.9 * (n // 2)
            sh = [1] * self.samples.ndim
            sh[ax] = n
            mask |= sel.reshape(sh)
        return float(p[mask].sum() / total)

    def interior_max(self, other=None, fraction: float = 0.5) -> float:
        """Max |self - other| over the interior phase-space window."""
        diff = self.samples if other is None else self.samples - (
            other.samples if isinstance(other, GridSymbol) else other)
        sl = []
        for n in self.samples.shape:
            lo = int(round(n * (1 - fraction) / 2))
            sl.append(slice(lo, n - lo))
        return float(np.abs(diff[tuple(sl)]).max())


def sample_symbol(func, grid: PhaseSpaceGrid) -> GridSymbol:
    """Sample func(X_1.., X_d, xi_1.., xi_d) on the phase-space grid."""
    mesh = grid.phase_mesh()
    return GridSymbol(grid=grid, samples=np.asarray(func(*mesh), dtype=complex))


@dataclass(frozen=True)
class QuantizedOperator:
    grid: PhaseSpaceGrid
    matrix: np.ndarray
    provenance: dict

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())


# -- core discrete correspondence ---------------------------------------


def _chirp(samples: np.ndarray, d: int) -> np.ndarray:
    """Half-shift correction on symbol harmonics: multiply the (P_l, Q_l)
    spectrum by (-1)^{P_l Q_l} per axis pair.  Self-inverse."""
    F = np.fft.fftn(samples)
    for l in range(d):
        n = samples.shape[l]
        P = _sym_freqs(n).reshape([-1 if ax == l else 1 for ax in range(2 * d)])
        Q = _sym_freqs(n).reshape([-1 if ax == d + l else 1 for ax in range(2 * d)])
        F = F * (-1.0) ** (P * Q)
    return np.fft.ifftn(F)


def _offset_table(samples: np.ndarray, d: int) -> np.ndarray:
    """T[mu.., delta..] = sum_j f[mu.., j..] prod_l e^{2 pi i (j_l - c_l) delta_l / n_l}."""
    T = samples
    for l in range(d):
        ax = d + l
        n = samples.shape[ax]
        c = (n - 1) // 2
        T = n * np.fft.ifft(T, axis=ax)
        sh = [1] * samples.ndim
        sh[ax] = n
        T = T * np.exp(-2j * np.pi * c * np.arange(n) / n).reshape(sh)
    return T


def _gather_indices(grid: PhaseSpaceGrid):
    """(N, N) flat indices (mu_flat, delta_flat) for kernel assembly."""
    ns = grid.ns
    d = grid.dim
    axes_idx = np.indices(ns).reshape(d, -1)
    MU = []
    DD = []
    for l in range(d):
        n = ns[l]
        inv2 = (n + 1) // 2
        a = axes_idx[l][:, None]
        b = axes_idx[l][None, :]
        MU.append(((a + b) * inv2) % n)
        DD.append((a - b) % n)
    mu_flat = np.ravel_multi_index(MU, ns)
    dd_flat = np.ravel_multi_index(DD, ns)
    return mu_flat, dd_flat


def _magnetic_phase(grid: PhaseSpaceGrid, field: EMFieldConfig) -> np.ndarray | None:
    """Phase matrix exp(-i lam Gamma[a, b]) or None when it is trivial."""
    if field.lam == 0.0 or field.gauge == "zero":
        return None
    pts = grid.points_micro()
    gam = field.line_integral(pts[:, None, :], pts[None, :, :])
    return np.exp(-1j * field.lam * gam)


def quantize(symbol: GridSymbol, field: EMFieldConfig,
             assume_bandlimited: bool = False,
             aliasing_tol: float = 1e-6) -> QuantizedOperator:
    """Dense matrix of the magnetic Weyl operator of a grid symbol.

    The field's eps must match the symbol grid.  Raises on strong spectral
    tails unless assume_bandlimited is set (polynomial symbols such as the
    coordinate functions are exact by construction and may opt out).
    """
    grid = symbol.grid
    if abs(field.eps - grid.eps) > 1e-12 * max(1.0, field.eps):
        raise WeylError("field.eps does not match the symbol grid")
    if field.dim != grid.dim:
        raise WeylError("field dimension does not match the symbol grid")
    if not assume_bandlimited:
        tail = symbol.spectral_tail_fraction()
        if tail > aliasing_tol:
            raise WeylError(
                f"symbol spectral tail fraction {tail:.2e} exceeds {aliasing_tol:.0e}; "
                "refine the grid or pass assume_bandlimited=True")
    d = grid.dim
    N = grid.n_points
    Fp = _chirp(symbol.samples, d)
    T = _offset_table(Fp, d).reshape(N, N)
    mu_flat, dd_flat = _gather_indices(grid)
    M = T[mu_flat, dd_flat] / N
    phase = _magnetic_phase(grid, field)
    if phase is not None:
        M = M * phase
    return QuantizedOperator(grid=grid, matrix=M,
                             provenance={"eps": field.eps, "lam": field.lam,
                                         "gauge": field.gauge})


def dequantize(op: QuantizedOperator, field: EMFieldConfig) -> GridSymbol:
    """Exact inverse of quantize on the same grid."""
    grid = op.grid
    d = grid.dim
    ns = grid.ns
    N = grid.n_points
    if op.matrix.shape != (N, N):
        raise WeylError("operator matrix does not match its grid")
    G = op.matrix * N
    phase = _magnetic_phase(grid, field)
    if phase is not None:
        G = G / phase
    # reorder kernel entries into the (mu, delta) table
    mu_idx = np.indices(ns).reshape(d, -1)
    dd_idx = np.indices(ns).reshape(d, -1)
    ROW = []
    COL = []
    for l in range(d):
        n = ns[l]
        inv2 = (n + 1) // 2
        mu = mu_idx[l][:, None]
        dd = dd_idx[l][None, :]
        V = (-dd) % n
        s = (V * inv2) % n
        row = (mu - s) % n
        COL.append((row + V) % n)
        ROW.append(row)
    row_flat = np.ravel_multi_index(ROW, ns)
    col_flat = np.ravel_multi_index(COL, ns)
    T = G[row_flat, col_flat].reshape(ns + ns)
    # invert the per-axis offset transforms
    Fp = T
    for l in range(d):
        ax = d + l
        n = ns[l]
        c = (n - 1) // 2
        sh = [1] * (2 * d)
        sh[ax] = n
        Fp = Fp * np.exp(+2j * np.pi * c * np.arange(n) / n).reshape(sh)
        Fp = np.fft.fft(Fp, axis=ax) / n
    samples = _chirp(Fp, d)
    return GridSymbol(grid=grid, samples=samples)


def exact_product(f: GridSymbol, g: GridSymbol, field: EMFieldConfig,
                  assume_bandlimited: bool = False) -> GridSymbol:
    """Symbol of the operator product: dequantize(quantize(f) quantize(g))."""
    if f.grid is not g.grid and f.grid != g.grid:
        raise WeylError("operands live on different grids")
    Mf = quantize(f, field, assume_bandlimited=assume_bandlimited)
    Mg = quantize(g, field, assume_bandlimited=assume_bandlimited)
    prod = QuantizedOperator(grid=f.grid, matrix=Mf.matrix @ Mg.matrix,
                             provenance=Mf.provenance)
    return dequantize(prod, field)


def _centered_derivative(samples: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    """Fourth-order centered difference with periodic wrap (exact on linear
    data away from the seam)."""
    p1 = np.roll(samples, -1, axis=axis)
    m1 = np.roll(samples, +1, axis=axis)
    p2 = np.roll(samples, -2, axis=axis)
    m2 = np.roll(samples, +2, axis=axis)
    return (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * spacing)


def magnetic_poisson(f: GridSymbol, g: GridSymbol, field: EMFieldConfig) -> GridSymbol:
    """Magnetic Poisson bracket
    {f, g} = sum_l (d_xi_l f d_X_l g - d_X_l f d_xi_l g)
             - lam sum_lj B_lj(X) d_xi_l f d_xi_j g.

    Centered differences (fourth order) with periodic wrap; rows within two
    points of the box seam are only trustworthy for seam-periodic symbols, so
    comparisons belong on interior windows.
    """
    grid = f.grid
    d = grid.dim
    hX = [grid.eps * grid.h[l] for l in range(d)]
    hXi = [grid.xi_axis(l)[1] - grid.xi_axis(l)[0] for l in range(d)]
    dXf = [_centered_derivative(f.samples, l, hX[l]) for l in range(d)]
    dXg = [_centered_derivative(g.samples, l, hX[l]) for l in range(d)]
    dKf = [_centered_derivative(f.samples, d + l, hXi[l]) for l in range(d)]
    dKg = [_centered_derivative(g.samples, d + l, hXi[l]) for l in range(d)]
    out = np.zeros_like(f.samples)
    for l in range(d):
        out = out + dKf[l] * dXg[l] - dXf[l] * dKg[l]
    if field.lam != 0.0:
        mesh = grid.phase_mesh()
        X = np.stack([np.broadcast_to(mesh[l], f.samples.shape) for l in range(d)], axis=-1)
        B = field.B(X)
        for l in range(d):
            for j in range(d):
                if l == j:
                    continue
                out = out - field.lam * B[..., l, j] * dKf[l] * dKg[j]
    return GridSymbol(grid=grid, samples=out)


def expanded_product(f: GridSymbol, g: GridSymbol, field: EMFieldConfig,
                     order: int) -> GridSymbol:
    """Asymptotic product: order 0 is the pointwise product, order 1 adds
    -(i eps / 2) {f, g}."""
    if order not in (0, 1):
        raise WeylError("order must be 0 or 1")
    samples = f.samples * g.samples
    if order == 1:
        br = magnetic_poisson(f, g, field)
        samples = samples - 0.5j * field.eps * br.samples
    return GridSymbol(grid=f.grid, samples=samples)


def gauge_covariance_check(symbol: GridSymbol, field: EMFieldConfig,
                           field_prime: EMFieldConfig, chi) -> float:
    """Deviation of Op_{A'}(f) from the chi-conjugation of Op_A(f).

    A' and A must differ by the gradient of chi (a function of the macro
    position).  The conjugating unitary is exp(+i (lam/eps) chi(eps x)).
    Returns the largest entry of the difference matrix.
    """
    Ma = quantize(symbol, field, assume_bandlimited=True)
    Mb = quantize(symbol, field_prime, assume_bandlimited=True)
    Xpts = field.eps * symbol.grid.points_micro()
    u = np.exp(1j * (field.lam / field.eps) * np.asarray(chi(Xpts)))
    conj = u[:, None] * Ma.matrix * np.conj(u)[None, :]
    return float(np.abs(Mb.matrix - conj).max())


# -- dedicated operators and probes --------------------------------------


def position_operator(grid: PhaseSpaceGrid, axis: int) -> QuantizedOperator:
    """Quantization of the macro coordinate X_axis: the diagonal matrix."""
    pts = grid.eps * grid.points_micro()
    return QuantizedOperator(grid=grid, matrix=np.diag(pts[:, axis]).astype(complex),
                             provenance={"symbol": f"X_{axis}"})


def momentum_operator(grid: PhaseSpaceGrid, field: EMFieldConfig,
                      axis: int) -> QuantizedOperator:
    """Quantization of xi_axis (kinetic momentum when lam > 0)."""
    mesh = grid.phase_mesh()
    samples = np.asarray(mesh[grid.dim + axis], dtype=complex)
    sym = GridSymbol(grid=grid, samples=np.broadcast_to(samples, grid.ns + grid.ns).copy())
    return quantize(sym, field, assume_bandlimited=True)


def coherent_state(grid: PhaseSpaceGrid, x0, k0, sigma) -> np.ndarray:
    """Normalized Gaussian wave packet on the micro grid (flat vector)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    k0 = np.atleast_1d(np.asarray(k0, dtype=float))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (grid.dim,))
    parts = []
    for l in range(grid.dim):
        x = grid.x_axis(l)
        parts.append(np.exp(-((x - x0[l]) ** 2) / (4 * sigma[l] ** 2) + 1j * k0[l] * x))
    v = parts[0]
    for p in parts[1:]:
        v = np.multiply.outer(v, p)
    v = v.ravel()
    return v / np.linalg.norm(v)


def commutation_check(grid: PhaseSpaceGrid, field: EMFieldConfig,
                      n_states: int = 12, seed: int = 0) -> dict:
    """Residuals of the canonical commutation relations on interior
    band-limited probe states.

    Measures max over a batch of coherent states of
      |([Q_l, Q_j]) psi|, |([Q_l, P_j] - i eps delta_lj) psi|,
      |([P_l, P_j] - i eps lam B_lj(Q)) psi|.
    """
    d = grid.dim
    rng = np.random.default_rng(seed)
    Q = [position_operator(grid, l).matrix for l in range(d)]
    P = [momentum_operator(grid, field, l).matrix for l in range(d)]
    pts = grid.eps * grid.points_micro()
    box = min(grid.x_axis(l)[-1] for l in range(d))
    nyq = min(np.pi / grid.h[l] for l in range(d))
    sigma = np.sqrt(box / (2 * nyq)) * np.ones(d)
    res = {"qq": 0.0, "qp": 0.0, "pp": 0.0}
    for _ in range(n_states):
        x0 = rng.uniform(-0.15 * box, 0.15 * box, d)
        k0 = rng.uniform(-0.15 * nyq, 0.15 * nyq, d)
        psi = coherent_state(grid, x0, k0, sigma)
        for l in range(d):
            for j in range(d):
                r_qq = (Q[l] @ (Q[j] @ psi)) - (Q[j] @ (Q[l] @ psi))
                res["qq"] = max(res["qq"], float(np.abs(r_qq).max()))
                r_qp = (Q[l] @ (P[j] @ psi)) - (P[j] @ (Q[l] @ psi))
                target = 1j * field.eps * psi if l == j else 0.0
                res["qp"] = max(res["qp"], float(np.abs(r_qp - target).max()))
                if j > l:
                    r_pp = (P[l] @ (P[j] @ psi)) - (P[j] @ (P[l] @ psi))
                    Bq = field.B(pts)[:, l, j]
                    t_pp = 1j * field.eps * field.lam * Bq * psi
                    res["pp"] = max(res["pp"], float(np.abs(r_pp - t_pp).max()))
    return res


def operator_norm(M: np.ndarray, iters: int = 60, seed: int = 0) -> float:
    """Largest singular value by power iteration on M*M (deterministic)."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=M.shape[1]) + 1j * rng.normal(size=M.shape[1])
    v /= np.linalg.norm(v)
    Mh = M.conj().T
    s = 0.0
    for _ in range(iters):
        w = Mh @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        s = nw
    return float(np.sqrt(s))


def resample_periodic(samples: np.ndarray, new_shape) -> np.ndarray:
    """Trigonometric resampling of a periodic array onto a new grid shape."""
    old = samples.shape
    F = np.fft.fftn(samples)
    out = np.zeros(tuple(new_shape), dtype=complex)
    slices_src = []
    slices_dst = []
    for n_old, n_new in zip(old, new_shape):
        k_keep = min(n_old, n_new)
        half = (k_keep - 1) // 2 if k_keep % 2 == 1 else k_keep // 2
        src = np.r_[0:half + 1, n_old - half:n_old] if half > 0 else np.r_[0:1]
        dst = np.r_[0:half + 1, n_new - half:n_new] if half > 0 else np.r_[0:1]
        slices_src.append(src)
        slices_dst.append(dst)
    out[np.ix_(*slices_dst)] = F[np.ix_(*slices_src)]
    scale = np.prod(new_shape) / np.prod(old)
    return np.fft.ifftn(out) * scale
