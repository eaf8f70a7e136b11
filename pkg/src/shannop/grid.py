"""Periodic grids, sampled fields and their discrete Fourier representations.

The domain is fixed to [0, 2*pi)^d with power-of-two point counts, so the
wavevectors are the integers k_i in [-N_i/2, N_i/2) and a continuous
frequency maps to a grid mode with no scale factor.  Transforms use the
unitary convention (forward and inverse each carry (prod N)^(-1/2)), which
makes Parseval exact: the l2 norm of the samples equals the l2 norm of the
modes.

The Nyquist plane k_i = -N_i/2 is its own reflection, so applying a symbol
there uses the average of the symbol over the +-Nyquist sign choices.  For
even symbols this changes nothing; for odd ones (i*xi_i) it zeroes the
plane, which is the standard convention that keeps real fields real.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

from .errors import ArityError, RealityViolationError, StructuralError
from .symbols import SingularModePolicy, SymbolExpr, eval_many


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """A periodic grid on [0, 2*pi)^d; every size a power of two >= 4."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not 1 <= len(sizes) <= 3:
            raise StructuralError(f"dimension must be 1 to 3, got {len(sizes)}")
        for n in sizes:
            if not _is_pow2(n) or n < 4:
                raise StructuralError(f"size {n} is not a power of two >= 4")

    @property
    def dim(self) -> int:
        return len(self.sizes)

    @property
    def npoints(self) -> int:
        return int(np.prod(self.sizes))

    def axis_wavevectors(self, axis: int) -> np.ndarray:
        """Integer wavevectors along ``axis`` in FFT layout (0-based axis)."""
        n = self.sizes[axis]
        return (np.fft.fftfreq(n) * n).astype(np.int64)

    def nyquist(self, axis: int) -> int:
        return -self.sizes[axis] // 2


@lru_cache(maxsize=32)
def wavevector_table(grid: GridSpec) -> np.ndarray:
    """All grid modes as an (npoints, d) integer array in row-major order."""
    axes = [grid.axis_wavevectors(i) for i in range(grid.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@lru_cache(maxsize=32)
def ksq_table(grid: GridSpec) -> np.ndarray:
    K = wavevector_table(grid)
    return np.sum(K.astype(float) ** 2, axis=1)


@dataclass
class RealField:
    """Real samples of an m-component field, component-major then row-major."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape == self.grid.sizes:
            v = v[None]
        if v.ndim != self.grid.dim + 1 or v.shape[1:] != self.grid.sizes:
            raise StructuralError(
                f"values of shape {v.shape} do not match grid {self.grid.sizes}"
            )
        if not np.all(np.isfinite(v)):
            raise StructuralError("field values must be finite")
        self.values = v

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def __add__(self, other: "RealField") -> "RealField":
        return RealField(self.grid, self.values + other.values)

    def __sub__(self, other: "RealField") -> "RealField":
        return RealField(self.grid, self.values - other.values)


@dataclass
class SpectralField:
    """Complex Fourier modes of a field, unitary normalization, FFT layout."""

    grid: GridSpec
    modes: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.modes, dtype=complex)
        if m.shape == self.grid.sizes:
            m = m[None]
        if m.ndim != self.grid.dim + 1 or m.shape[1:] != self.grid.sizes:
            raise StructuralError(
                f"modes of shape {m.shape} do not match grid {self.grid.sizes}"
            )
        self.modes = m

    @property
    def components(self) -> int:
        return self.modes.shape[0]

    def flat(self) -> np.ndarray:
        """(components, npoints) view aligned with wavevector_table order."""
        return self.modes.reshape(self.components, -1)

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.modes))

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.modes.copy())


def forward_transform(field: RealField) -> SpectralField:
    """Unitary DFT of each component."""
    axes = tuple(range(1, field.grid.dim + 1))
    modes = np.fft.fftn(field.values, axes=axes, norm="ortho")
    return SpectralField(field.grid, modes)


def inverse_transform(
    spec: SpectralField, reality_tol: float = 1e-10, check: bool = True
) -> RealField:
    """Unitary inverse DFT; raises if the spectrum is not Hermitian.

    The imaginary residue of the inverse transform is compared against
    ``reality_tol`` times the field magnitude.  Internal callers whose
    spectra are Hermitian by construction pass ``check=False``; a field
    that is zero up to cancellation noise would otherwise trip the
    self-relative test.
    """
    axes = tuple(range(1, spec.grid.dim + 1))
    values = np.fft.ifftn(spec.modes, axes=axes, norm="ortho")
    if check:
        scale = max(float(np.max(np.abs(values))), 1e-300)
        residue = float(np.max(np.abs(values.imag)))
        if residue > reality_tol * scale:
            raise RealityViolationError(
                f"imaginary residue {residue:.3e} exceeds {reality_tol:.1e} of "
                f"the field magnitude; spectrum does not represent a real field"
            )
    return RealField(spec.grid, values.real)


def is_hermitian(spec: SpectralField, tol: float = 1e-12) -> bool:
    """Check modes(-k) == conj(modes(k)) exactly on the discrete torus."""
    m = spec.modes
    reflected = m
    for ax in range(1, spec.grid.dim + 1):
        reflected = np.roll(np.flip(reflected, axis=ax), 1, axis=ax)
    scale = max(float(np.max(np.abs(m))), 1e-300)
    return bool(np.max(np.abs(reflected - np.conj(m))) <= tol * scale)


def sobolev_norm(spec: SpectralField, t: float = 0.0) -> float:
    """Weighted norm (sum over modes of (1+|k|^2)^t |coef|^2)^(1/2)."""
    if t == 0.0:
        return spec.l2_norm()
    weights = (1.0 + ksq_table(spec.grid)) ** t
    flat = spec.flat()
    return float(np.sqrt(np.sum(weights * np.abs(flat) ** 2).real))


# ---------------------------------------------------------------------------
# Symbol evaluation on a grid
# ---------------------------------------------------------------------------


def evaluate_on_grid(
    expr: SymbolExpr,
    grid: GridSpec,
    policy: str = SingularModePolicy.ZERO,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a symbol at every grid mode with the Nyquist convention.

    Modes with one or more components on the Nyquist plane get the average
    of the symbol over the sign choices of those components, which is what
    keeps the output spectrum Hermitian.  Returns (values, skipped) like
    ``eval_many``: values has shape (npoints, n, m).
    """
    K = wavevector_table(grid).astype(float)
    values, skipped = eval_many(expr, K, policy)
    nyq = np.array([grid.nyquist(i) for i in range(grid.dim)], dtype=float)
    on_nyq = K == nyq
    rows = np.flatnonzero(on_nyq.any(axis=1))
    if rows.size:
        # Group rows by which axes sit on the Nyquist plane (at most 2^d-1
        # patterns), then average the symbol over sign flips of those axes.
        patterns = on_nyq[rows]
        for pat in np.unique(patterns, axis=0):
            sel = rows[np.all(patterns == pat, axis=1)]
            flip_axes = np.flatnonzero(pat)
            acc = np.zeros_like(values[sel])
            for signs in product((1.0, -1.0), repeat=len(flip_axes)):
                Ks = K[sel].copy()
                for ax, s in zip(flip_axes, signs):
                    Ks[:, ax] = s * np.abs(Ks[:, ax])
                v, _ = eval_many(expr, Ks, policy)
                acc += v
            values[sel] = acc / 2 ** len(flip_axes)
    return values, skipped


def apply_modewise(
    spec: SpectralField,
    expr: SymbolExpr,
    policy: str = SingularModePolicy.ZERO,
) -> SpectralField:
    """Multiply each mode's component vector by the symbol matrix.

    A scalar symbol broadcasts over the components.  Under the SKIP policy
    singular modes pass through unchanged (square symbols only).
    """
    n, m = expr.shape
    if not expr.is_scalar and m != spec.components:
        raise ArityError(
            f"symbol takes {m} components but field has {spec.components}"
        )
    values, skipped = evaluate_on_grid(expr, spec.grid, policy)
    flat = spec.flat()
    if expr.is_scalar:
        out = values[:, 0, 0][None, :] * flat
        ncomp = spec.components
    else:
        out = np.einsum("kij,jk->ik", values, flat)
        ncomp = n
    if skipped.any():
        if ncomp != spec.components:
            raise ArityError(
                "SKIP policy needs a square symbol to leave modes untouched"
            )
        out[:, skipped] = flat[:, skipped]
    return SpectralField(spec.grid, out.reshape((ncomp,) + spec.grid.sizes))
