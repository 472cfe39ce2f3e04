"""Dense complex tensor primitives with deterministic conventions.

Tensors are plain ``numpy.ndarray`` values of dtype complex128 in row-major
layout.  This module pins down the conventions every higher layer relies on:

* ``contract`` puts the unpaired axes of the first operand before those of
  the second, in their original order.
* All decompositions return spectra in descending order and apply a fixed
  phase gauge: in each singular/eigen-vector the entry of largest magnitude
  is made real and positive (ties broken by lowest index).  Equal
  singular/eigen-values are never reordered.
* Two calls on identical input produce bitwise-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ContractViolationError, ConvergenceError, NumericError, TensorShapeError

HERMITICITY_TOL = 1e-10
PINV_CUTOFF = 1e-12


def as_tensor(data) -> np.ndarray:
    """Coerce to a C-contiguous complex128 array."""
    return np.ascontiguousarray(np.asarray(data, dtype=np.complex128))


def check_finite(t: np.ndarray, where: str = "tensor") -> np.ndarray:
    """Raise :class:`NumericError` if ``t`` contains NaN or Inf."""
    if not np.all(np.isfinite(t.view(np.float64) if t.dtype == np.complex128 else t)):
        raise NumericError(f"non-finite values in {where}")
    return t


def contract(a: np.ndarray, b: np.ndarray, axis_pairs) -> np.ndarray:
    """Contract ``a`` with ``b`` over the given ``(axis_of_a, axis_of_b)`` pairs.

    The result carries the unpaired axes of ``a`` (in order) followed by the
    unpaired axes of ``b``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    pairs = list(axis_pairs)
    ax_a = [p[0] for p in pairs]
    ax_b = [p[1] for p in pairs]
    if len(set(ax_a)) != len(ax_a) or len(set(ax_b)) != len(ax_b):
        raise TensorShapeError(f"contraction axes repeat: {pairs}")
    for ia, ib in pairs:
        if not (-a.ndim <= ia < a.ndim) or not (-b.ndim <= ib < b.ndim):
            raise TensorShapeError(
                f"axis pair ({ia},{ib}) out of range for shapes {a.shape}, {b.shape}"
            )
        if a.shape[ia] != b.shape[ib]:
            raise TensorShapeError(
                f"axis {ia} of shape {a.shape} does not match axis {ib} of "
                f"shape {b.shape}: {a.shape[ia]} != {b.shape[ib]}"
            )
    return np.tensordot(a, b, axes=(ax_a, ax_b))


def _fix_phase_columns(u: np.ndarray, vdag: np.ndarray | None = None):
    """Make the largest-magnitude entry of each column of ``u`` real positive.

    If ``vdag`` is given, the compensating phase is applied to its rows so
    that ``u @ vdag`` is unchanged.
    """
    u = np.array(u, copy=True)
    if vdag is not None:
        vdag = np.array(vdag, copy=True)
    for j in range(u.shape[1]):
        col = u[:, j]
        i = int(np.argmax(np.abs(col)))
        mag = abs(col[i])
        if mag < 1e-300:
            continue
        phase = col[i] / mag
        u[:, j] *= np.conj(phase)
        if vdag is not None:
            vdag[j, :] *= phase
    return u if vdag is None else (u, vdag)


@dataclass(frozen=True)
class SvdResult:
    """Truncated singular value decomposition ``m ~= u @ diag(s) @ vdag``.

    ``truncation_weight`` is the discarded squared weight divided by the
    total squared weight (0 when nothing was discarded).
    """

    u: np.ndarray
    s: np.ndarray
    vdag: np.ndarray
    truncation_weight: float


def svd(m: np.ndarray, max_keep: int | None = None, cutoff: float = 0.0) -> SvdResult:
    """Deterministic truncated SVD of a rank-2 tensor.

    Singular values below ``cutoff * s[0]`` are discarded, and at most
    ``max_keep`` values are retained (at least one is always kept).
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise TensorShapeError(f"svd expects a rank-2 tensor, got shape {m.shape}")
    try:
        u, s, vdag = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vdag = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover - LAPACK breakdown is rare
            raise NumericError(
                "SVD did not converge: shape=%s, fro-norm=%.3e, max=%.3e"
                % (m.shape, np.linalg.norm(m), np.max(np.abs(m)) if m.size else 0.0)
            ) from exc
    total = float(np.sum(s**2))
    keep = len(s)
    if cutoff > 0.0 and len(s) and s[0] > 0.0:
        keep = int(np.searchsorted(-s, -cutoff * s[0], side="right"))
    if max_keep is not None:
        keep = min(keep, int(max_keep))
    keep = max(keep, 1)
    kept = float(np.sum(s[:keep] ** 2))
    weight = 0.0 if total == 0.0 else max(0.0, 1.0 - kept / total)
    u, vdag = _fix_phase_columns(u[:, :keep], vdag[:keep, :])
    return SvdResult(u=u, s=s[:keep].copy(), vdag=vdag, truncation_weight=weight)


def eigh(m: np.ndarray, tol: float = HERMITICITY_TOL):
    """Eigendecomposition of a Hermitian rank-2 tensor.

    Returns ``(values, vectors)`` with values descending and phase-fixed
    eigenvector columns.  Raises :class:`ContractViolationError` when the
    input deviates from Hermiticity by more than ``tol`` (relative).
    """
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise TensorShapeError(f"eigh expects a square rank-2 tensor, got shape {m.shape}")
    scale = max(float(np.max(np.abs(m))), 1.0) if m.size else 1.0
    dev = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if dev > tol * scale:
        raise ContractViolationError(
            f"matrix is not Hermitian: max deviation {dev:.3e} (tol {tol:.0e} relative)"
        )
    herm = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(herm)
    w = w[::-1].copy()
    v = v[:, ::-1]
    return w, _fix_phase_columns(v)


def dominant_eigenpair(apply_map, v0: np.ndarray, tol: float = 1e-10, max_iter: int = 2000):
    """Dominant eigenpair of a linear map by power iteration.

    ``apply_map`` must be dimension preserving.  The returned vector is
    normalized with its largest-magnitude entry made real positive, and
    satisfies ``|apply_map(v) - value * v| <= tol * |value|``.
    """
    v = np.asarray(v0, dtype=np.complex128)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise TensorShapeError("power iteration requires a nonzero starting vector")
    v = v / nrm
    residual = np.inf
    value = 0.0 + 0.0j
    for _ in range(max_iter):
        w = np.asarray(apply_map(v))
        value = np.vdot(v, w.reshape(v.shape))
        residual = float(np.linalg.norm(w.reshape(v.shape) - value * v))
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            raise NumericError("power iteration collapsed to the zero vector")
        v = w / nrm
        if residual <= tol * max(abs(value), 1e-300):
            flat = v.reshape(-1)
            i = int(np.argmax(np.abs(flat)))
            phase = flat[i] / abs(flat[i])
            return value, v * np.conj(phase)
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} steps", residual=residual
    )


def pinv(m: np.ndarray, cutoff: float = PINV_CUTOFF) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with a relative singular-value cutoff."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise TensorShapeError(f"pinv expects a rank-2 tensor, got shape {m.shape}")
    return np.linalg.pinv(m, rcond=cutoff)
