"""Band-preconditioned Richardson iteration, the iterative Helmholtz/Leray
split, and the exact modewise oracles they are checked against.

Everything runs in spectral space: a field is transformed once on entry and
once on exit.  Bands of a partition are spectrally disjoint, so per-band
updates within one sweep are independent; the sweep order is fixed (sorted
band ids) and all reductions are deterministic, which makes reports
bit-reproducible for identical inputs.

The dc set (zero mode, axis-zero planes, Nyquist planes) is excluded from
every contraction theorem, so both solvers treat it by one exact modewise
solve instead of iterating.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bands import Partition
from .errors import (
    ArityError,
    BoundViolationError,
    DivergenceError,
    InsufficientDataError,
    UnsupportedSchemeError,
)
from .grid import (
    GridSpec,
    RealField,
    SpectralField,
    evaluate_on_grid,
    forward_transform,
    inverse_transform,
    ksq_table,
    wavevector_table,
)
from .precond import (
    BandPreconditioner,
    RateBound,
    band_omega,
    leray_rate_bounds,
    pseudo_inverse,
)
from .symbols import SingularModePolicy, SymbolExpr


@dataclass
class SolveConfig:
    """Iteration limits and the norm used for residual measurement.

    ``norm`` is the Sobolev order of the residual norm (0 = plain L2).
    With ``strict`` set, a theoretical contraction bound >= 1 refuses to
    run instead of iterating blindly.
    """

    max_iter: int = 200
    tol: float = 1e-10
    norm: float = 0.0
    record_history: bool = True
    strict: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ArityError("tol must be positive")
        if self.max_iter < 1:
            raise ArityError("max_iter must be at least 1")


@dataclass
class SolveReport:
    """Residual history with fitted and theoretical contraction rates."""

    iterations: int
    residual_history: list
    fitted_rate: float
    theoretical_rate: float
    converged: bool
    per_band_rates: list | None = None
    divergence_history: list | None = None

    def ratios(self) -> list:
        h = self.residual_history
        return [
            h[i + 1] / h[i] for i in range(len(h) - 1) if h[i] > 0
        ]

    def to_json(self) -> str:
        payload = {
            "iterations": self.iterations,
            "converged": self.converged,
            "fitted_rate": self.fitted_rate,
            "theoretical_rate": self.theoretical_rate,
            "residuals": list(self.residual_history),
        }
        if self.divergence_history is not None:
            payload["divergence_residuals"] = list(self.divergence_history)
        if self.per_band_rates is not None:
            payload["per_band"] = [
                {
                    "band": repr(rb.band_id).replace(" ", ""),
                    "a": rb.a,
                    "b": rb.b,
                    "rho": rb.rho,
                    "formula": rb.formula,
                }
                for rb in self.per_band_rates
            ]
        return json.dumps(payload, indent=2)

    def to_csv(self) -> str:
        lines = ["iter,residual,ratio"]
        h = self.residual_history
        for i, r in enumerate(h):
            ratio = "" if i == 0 or h[i - 1] == 0 else repr(r / h[i - 1])
            lines.append(f"{i},{r!r},{ratio}")
        return "\n".join(lines) + "\n"


def estimate_rate(history, window: int | None = None) -> float:
    """Geometric mean of the trailing residual ratios.

    The window defaults to max(5, half the available ratios).  Requires at
    least three positive history entries.
    """
    h = [float(x) for x in history]
    if len(h) < 3:
        raise InsufficientDataError("need at least 3 residuals to fit a rate")
    if any(x <= 0 for x in h):
        h = h[: next(i for i, x in enumerate(h) if x <= 0)]
        if len(h) < 3:
            return 0.0
    ratios = np.array([h[i + 1] / h[i] for i in range(len(h) - 1)])
    if window is None:
        window = max(5, len(ratios) // 2)
    tail = ratios[-min(window, len(ratios)) :]
    return float(np.exp(np.mean(np.log(tail))))


@lru_cache(maxsize=32)
def kappa_table(grid: GridSpec) -> np.ndarray:
    """Effective wavevectors (npoints, d): Nyquist components mapped to 0,
    matching the convention that odd symbols vanish on the Nyquist plane."""
    K = wavevector_table(grid).astype(float)
    for i in range(grid.dim):
        K[:, i] = np.where(K[:, i] == grid.nyquist(i), 0.0, K[:, i])
    return K


def spectral_divergence(spec: SpectralField) -> np.ndarray:
    """Flat spectrum of div(u) using the effective wavevectors."""
    if spec.components != spec.grid.dim:
        raise ArityError("divergence needs one component per axis")
    kappa = kappa_table(spec.grid)
    return np.sum(1j * kappa.T * spec.flat(), axis=0)


def _residual_weights(grid: GridSpec, t: float) -> np.ndarray | None:
    if t == 0.0:
        return None
    return (1.0 + ksq_table(grid)) ** t


def _weighted_norm(flat: np.ndarray, weights) -> float:
    if weights is None:
        return float(np.linalg.norm(flat))
    return float(np.sqrt(np.sum(weights * np.abs(flat) ** 2)))


# ---------------------------------------------------------------------------
# Exact oracles
# ---------------------------------------------------------------------------


def exact_solve(
    A: SymbolExpr,
    v: RealField,
    policy: str = SingularModePolicy.ZERO,
) -> RealField:
    """Modewise pseudo-inverse solution of A u = v (the solver oracle)."""
    spec = forward_transform(v)
    vals, _ = evaluate_on_grid(A, v.grid, policy)
    flat = spec.flat()
    if A.is_scalar:
        s = vals[:, 0, 0]
        inv = np.where(s == 0, 0.0, 1.0 / np.where(s == 0, 1.0, s))
        out = inv[None, :] * flat
        ncomp = v.components
    else:
        if A.shape[0] != v.components:
            raise ArityError(
                f"symbol produces {A.shape[0]} components, field has "
                f"{v.components}"
            )
        pinv = pseudo_inverse(vals)
        out = np.einsum("kij,jk->ik", pinv, flat)
        ncomp = A.shape[1]
    return inverse_transform(
        SpectralField(v.grid, out.reshape((ncomp,) + v.grid.sizes)), check=False
    )


def exact_leray(u: RealField) -> tuple[RealField, RealField]:
    """Exact modewise Helmholtz split u = u_div + u_curl.

    Uses the effective wavevectors, so it is exactly compatible with the
    spectral divergence and gradient: div(u_div) = 0 to roundoff and u_curl
    is modewise parallel to the wavevector.  Modes with zero effective
    wavevector (the mean and pure-Nyquist corners) go entirely to u_div;
    constants are divergence-free.
    """
    if u.components != u.grid.dim:
        raise ArityError("Helmholtz split needs one component per axis")
    spec = forward_transform(u)
    flat = spec.flat()
    kappa = kappa_table(u.grid).T  # (d, npoints)
    ksq = np.sum(kappa**2, axis=0)
    safe = np.where(ksq == 0, 1.0, ksq)
    coef = np.sum(kappa * flat, axis=0) / safe
    curl = kappa * coef[None, :]
    curl[:, ksq == 0] = 0.0
    div = flat - curl
    shape = (u.components,) + u.grid.sizes
    return (
        inverse_transform(SpectralField(u.grid, div.reshape(shape)), check=False),
        inverse_transform(SpectralField(u.grid, curl.reshape(shape)), check=False),
    )


# ---------------------------------------------------------------------------
# Richardson iteration
# ---------------------------------------------------------------------------


def _check_bounds(bounds: list[RateBound], strict: bool) -> float:
    worst = max(bounds, key=lambda rb: rb.rho, default=None)
    if worst is None:
        return 0.0
    if strict and worst.rho >= 1.0:
        raise BoundViolationError(worst.band_id, worst.rho)
    return worst.rho


def richardson_solve(
    A: SymbolExpr,
    pc: BandPreconditioner,
    v: RealField,
    cfg: SolveConfig | None = None,
) -> tuple[RealField, SolveReport]:
    """Solve A u = v by the band-preconditioned residual iteration.

    Starting from u = 0 and residual v, each sweep adds the band entries'
    pseudo-inverses applied to the residual and subtracts A applied to the
    update; dc modes are solved exactly on the first sweep.  Stops when the
    relative residual (in the configured norm) reaches ``tol``.
    """
    cfg = cfg or SolveConfig()
    part = pc.partition
    if v.grid != part.grid:
        raise ArityError("preconditioner partition grid differs from field grid")
    if not A.is_scalar and A.shape[1] != v.components:
        raise ArityError(
            f"symbol takes {A.shape[1]} components, field has {v.components}"
        )
    ncols = v.components if A.is_scalar else A.shape[1]
    nrows = v.components

    bounds = pc.rate_bounds()
    theoretical = _check_bounds(bounds, cfg.strict)

    grid_vals, _ = evaluate_on_grid(A, v.grid, SingularModePolicy.ZERO)
    scalar_sym = A.is_scalar

    spec = forward_transform(v)
    v_flat = spec.flat().copy()
    u_flat = np.zeros((ncols, v.grid.npoints), dtype=complex)

    # Per-band operator data, precomputed once.  Bands whose target symbol
    # and entry are both scalar fuse into one concatenated modewise update
    # (band order is fixed, so this changes nothing but speed).
    band_data = []
    fused_idx, fused_avals, fused_pinv = [], [], []
    for band in part.bands:
        idx = band.flat_indices()
        entry = pc.entries[band.id]
        avals = grid_vals[idx]
        if scalar_sym and entry.is_constant and entry.matrix.shape == (1, 1):
            fused_idx.append(idx)
            fused_avals.append(avals[:, 0, 0])
            fused_pinv.append(np.full(len(idx), 1.0 / entry.matrix[0, 0]))
        else:
            if entry.is_constant:
                pinv = pseudo_inverse(entry.matrix)
                band_data.append(("const", idx, avals, pinv))
            else:
                evals = entry.values_at(band.mode_wavevectors().astype(float))
                band_data.append(("mode", idx, avals, pseudo_inverse(evals)))
    if fused_idx:
        band_data.insert(
            0,
            (
                "scalar",
                np.concatenate(fused_idx),
                np.concatenate(fused_avals),
                np.concatenate(fused_pinv),
            ),
        )
    dc_idx = part.dc_indices
    dc_pinv = pseudo_inverse(grid_vals[dc_idx]) if len(dc_idx) else None

    weights = _residual_weights(v.grid, cfg.norm)
    ref = _weighted_norm(v_flat, weights)
    history = [ref]
    converged = False
    growth = 0
    iterations = 0

    def make_report():
        fitted = (
            estimate_rate(history) if len(history) >= 3 else float("nan")
        )
        return SolveReport(
            iterations=iterations,
            residual_history=list(history) if cfg.record_history else [],
            fitted_rate=fitted,
            theoretical_rate=theoretical,
            converged=converged,
            per_band_rates=bounds,
        )

    if ref == 0.0:
        converged = True
        return inverse_transform(
            SpectralField(v.grid, u_flat.reshape((ncols,) + v.grid.sizes)),
            check=False,
        ), make_report()

    for iterations in range(1, cfg.max_iter + 1):
        for kind, idx, avals, pinv in band_data:
            vb = v_flat[:, idx]
            if kind == "scalar":
                du = pinv * vb
                adu = avals[None, :] * du
            elif kind == "const":
                du = np.einsum("ij,jk->ik", pinv, vb)
                adu = _apply_vals(avals, du, scalar_sym)
            else:
                du = np.einsum("kij,jk->ik", pinv, vb)
                adu = _apply_vals(avals, du, scalar_sym)
            u_flat[:, idx] += du
            v_flat[:, idx] = vb - adu
        if dc_pinv is not None:
            vb = v_flat[:, dc_idx]
            if scalar_sym:
                du = dc_pinv[:, 0, 0][None, :] * vb
                adu = grid_vals[dc_idx, 0, 0][None, :] * du
            else:
                du = np.einsum("kij,jk->ik", dc_pinv, vb)
                adu = np.einsum("kij,jk->ik", grid_vals[dc_idx], du)
            u_flat[:, dc_idx] += du
            v_flat[:, dc_idx] = vb - adu

        res = _weighted_norm(v_flat, weights)
        history.append(res)
        if res <= cfg.tol * ref:
            converged = True
            break
        growth = growth + 1 if res > history[-2] else 0
        if growth >= 5:
            raise DivergenceError(make_report())

    u = inverse_transform(
        SpectralField(v.grid, u_flat.reshape((ncols,) + v.grid.sizes)),
        check=False,
    )
    return u, make_report()


def _apply_vals(avals, du, scalar_sym):
    if scalar_sym:
        return avals[:, 0, 0][None, :] * du
    return np.einsum("kij,jk->ik", avals, du)


# ---------------------------------------------------------------------------
# Iterative Helmholtz split (Leray projector)
# ---------------------------------------------------------------------------


def helmholtz_decompose(
    u: RealField,
    part: Partition,
    cfg: SolveConfig | None = None,
) -> tuple[RealField, RealField, SolveReport]:
    """Split u into divergence-free and gradient parts by band iteration.

    Each sweep applies the band's divergence-free and gradient-part
    operators to the remainder and accumulates the two outputs; the
    remainder contracts per mode by the single nonzero eigenvalue of the
    residual operator.  The accumulated divergence-free part has zero
    spectral divergence after every sweep, not just at convergence.  The
    dc set is assigned exactly up front (mean to the divergence-free part).
    """
    cfg = cfg or SolveConfig()
    d = u.grid.dim
    if d not in (2, 3):
        raise UnsupportedSchemeError("Helmholtz split needs a 2D or 3D grid")
    if u.components != d:
        raise ArityError("Helmholtz split needs one component per axis")
    if part.base_scheme != "tensorial":
        raise UnsupportedSchemeError("Helmholtz split needs a tensorial partition")
    if u.grid != part.grid:
        raise ArityError("partition grid differs from field grid")

    bounds = leray_rate_bounds(part, mode_exact=False)
    theoretical = _check_bounds(bounds, cfg.strict)

    spec = forward_transform(u)
    flat = spec.flat()
    kappa = kappa_table(u.grid).T
    ksq = np.sum(kappa**2, axis=0)

    # Exact dc assignment: gradient content along the effective wavevector,
    # everything at zero effective frequency to the divergence-free part.
    dc_idx = part.dc_indices
    udiv = np.zeros_like(flat)
    ucurl = np.zeros_like(flat)
    kdc = kappa[:, dc_idx]
    ksq_dc = ksq[dc_idx]
    safe = np.where(ksq_dc == 0, 1.0, ksq_dc)
    coef = np.sum(kdc * flat[:, dc_idx], axis=0) / safe
    curl_dc = kdc * coef[None, :]
    curl_dc[:, ksq_dc == 0] = 0.0
    udiv[:, dc_idx] = flat[:, dc_idx] - curl_dc
    ucurl[:, dc_idx] = curl_dc

    # Remainder lives on the proper bands only.
    v_flat = flat.copy()
    v_flat[:, dc_idx] = 0.0

    # The sweep is modewise with per-band scales, so all bands fuse into
    # one concatenated update (fixed band order).
    parts_idx, parts_xi, parts_c, parts_wsq = [], [], [], []
    for band in part.bands:
        band_idx = band.flat_indices()
        xi = wavevector_table(u.grid)[band_idx].T.astype(float)  # (d, nb)
        omega = band_omega(band)
        wsq = float(np.sum(omega**2))
        parts_idx.append(band_idx)
        parts_xi.append(xi)
        parts_c.append((omega**2)[:, None] / xi)
        parts_wsq.append(np.full(len(band_idx), wsq))
    idx = np.concatenate(parts_idx) if parts_idx else np.array([], dtype=int)
    xi = np.concatenate(parts_xi, axis=1) if parts_idx else np.zeros((d, 0))
    c = np.concatenate(parts_c, axis=1) if parts_idx else np.zeros((d, 0))
    wsq = np.concatenate(parts_wsq) if parts_idx else np.zeros(0)

    weights = _residual_weights(u.grid, cfg.norm)
    ref = _weighted_norm(flat, weights)
    history = [_weighted_norm(v_flat, weights)]
    div_history = []
    converged = ref == 0.0 or history[0] <= cfg.tol * ref
    growth = 0
    iterations = 0

    while not converged and iterations < cfg.max_iter:
        iterations += 1
        vb = v_flat[:, idx]
        lv = xi * (np.sum(c * vb, axis=0) / wsq)[None, :]
        y = vb - lv
        mv = y - c * (np.sum(xi * y, axis=0) / wsq)[None, :]
        udiv[:, idx] += mv
        ucurl[:, idx] += lv
        v_flat[:, idx] = vb - mv - lv
        res = _weighted_norm(v_flat, weights)
        history.append(res)
        div_history.append(
            float(np.linalg.norm(np.sum(1j * kappa * udiv, axis=0)))
        )
        if res <= cfg.tol * ref:
            converged = True
            break
        growth = growth + 1 if res > history[-2] else 0
        if growth >= 5:
            raise DivergenceError(
                SolveReport(
                    iterations,
                    list(history),
                    float("nan"),
                    theoretical,
                    False,
                    bounds,
                    div_history,
                )
            )

    fitted = estimate_rate(history) if len(history) >= 3 else float("nan")
    report = SolveReport(
        iterations=iterations,
        residual_history=list(history) if cfg.record_history else [],
        fitted_rate=fitted,
        theoretical_rate=theoretical,
        converged=converged,
        per_band_rates=bounds,
        divergence_history=div_history,
    )
    shape = (d,) + u.grid.sizes
    return (
        inverse_transform(
            SpectralField(u.grid, udiv.reshape(shape)), check=False
        ),
        inverse_transform(
            SpectralField(u.grid, ucurl.reshape(shape)), check=False
        ),
        report,
    )
