"""Infinite MPS: canonical form, gauge fixing and local observables.

State convention: a one-site translationally invariant iMPS is the pair
``{gamma, lam}`` where ``gamma`` has axes ``(left, right, phys)`` and the
positive vector ``lam`` lives on every link.  The canonical form satisfies

    sum_s gamma^s+ lam^2 gamma^s = 1,     sum_s gamma^s lam^2 gamma^s+ = 1.

Canonicalization is a local re-gauging iteration: build the one-step
environment proxies

    V_L = sum_s (lam gamma^s)+ (lam gamma^s),
    V_R = sum_s (gamma^s lam) (gamma^s lam)+,

factor V_L = Z+Z and V_R = X X+ from their eigendecompositions, replace the
link weight by the SVD  Z lam X = U1 lam' V1  and dress gamma with
``V1 X^-1`` / ``Z^-1 U1``.  Iterating drives V_L and V_R to the identity;
optionally the exact environments (dominant transfer eigenvectors, found by
power iteration) are used for the first re-gauge, after which the local
iteration terminates in a step or two.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import (
    ContractViolationError,
    ConvergenceError,
    DegenerateEigenvalueError,
    LocalMaximumWarning,
    RankDeficiencyWarning,
    StatesNotEquivalentError,
    TensorShapeError,
)
from .models import SX, SZ
from .tensor import as_tensor, check_finite, dominant_eigenpair, svd

LAMBDA_CUTOFF = 1e-12
CANONICAL_TOL = 1e-8


@dataclass(frozen=True)
class IMps:
    """One-site iMPS ``{gamma, lam}``; ``lam`` is normalized on construction."""

    gamma: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        gamma = as_tensor(self.gamma)
        lam = np.asarray(self.lam, dtype=np.float64)
        if gamma.ndim != 3 or gamma.shape[0] != gamma.shape[1]:
            raise TensorShapeError(f"gamma must have axes (left, right, phys), got {gamma.shape}")
        if lam.ndim != 1 or lam.shape[0] != gamma.shape[0]:
            raise TensorShapeError(
                f"lam length {lam.shape} does not match bond dimension {gamma.shape[0]}"
            )
        if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
            raise TensorShapeError("lam entries must be positive and finite")
        check_finite(gamma, "gamma")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "lam", lam / np.linalg.norm(lam))

    @property
    def chi(self) -> int:
        return self.gamma.shape[0]

    @property
    def d(self) -> int:
        return self.gamma.shape[2]


@dataclass(frozen=True)
class GaugeFixResult:
    """Unitary relating two canonical representations, ``u a u+ ~= b``."""

    u: np.ndarray
    fidelity: float
    iterations: int


def site_tensor(state: IMps) -> np.ndarray:
    """Symmetric site form ``A = sqrt(lam) gamma sqrt(lam)``."""
    root = np.sqrt(state.lam)
    return root[:, None, None] * state.gamma * root[None, :, None]


def tilted_product_imps(tilt: float = 1e-3) -> IMps:
    """chi=1 product state polarized along +z with a small x tilt."""
    vec = np.array([np.cos(tilt), np.sin(tilt)], dtype=np.complex128)
    return IMps(gamma=vec.reshape(1, 1, 2), lam=np.array([1.0]))


def _site_stack(gamma: np.ndarray, lam: np.ndarray, side: str) -> np.ndarray:
    """(s, chi, chi) stack of lam-dressed site matrices."""
    if side == "left":
        dressed = lam[:, None, None] * gamma
    else:
        dressed = gamma * lam[None, :, None]
    return np.moveaxis(dressed, 2, 0)


def _apply_left(stack: np.ndarray, x: np.ndarray) -> np.ndarray:
    # sum_s g_s+ x g_s
    tmp = np.matmul(x[None, :, :], stack)
    return np.matmul(stack.conj().transpose(0, 2, 1), tmp).sum(axis=0)


def _apply_right(stack: np.ndarray, x: np.ndarray) -> np.ndarray:
    # sum_s g_s x g_s+
    tmp = np.matmul(stack, x[None, :, :])
    return np.matmul(tmp, stack.conj().transpose(0, 2, 1)).sum(axis=0)


def _transfer_fixed_point(gamma, lam, side, v0=None, tol=1e-13, max_iter=20000):
    """Dominant environment of the lam-dressed transfer map.

    Uses an Arnoldi solve (fast for small transfer gaps) with a plain power
    iteration as fallback, returning the hermitized fixed point.  Falls back
    to the last iterate when the tolerance is not reached (the local loop
    then finishes the job).
    """
    chi = gamma.shape[0]
    stack = _site_stack(gamma, lam, "left" if side == "left" else "right")
    apply_fn = _apply_left if side == "left" else _apply_right
    x = np.eye(chi, dtype=np.complex128) if v0 is None else np.asarray(v0, dtype=np.complex128)
    x = 0.5 * (x + x.conj().T)
    x /= np.linalg.norm(x)
    if chi >= 4:
        op = scipy.sparse.linalg.LinearOperator(
            (chi * chi, chi * chi),
            matvec=lambda v: apply_fn(stack, v.reshape(chi, chi)).reshape(-1),
            dtype=np.complex128,
        )
        try:
            _, vecs = scipy.sparse.linalg.eigs(
                op, k=1, which="LM", v0=x.reshape(-1), tol=max(tol, 1e-14), maxiter=max_iter
            )
            y = vecs[:, 0].reshape(chi, chi)
            tr = np.trace(y)
            if abs(tr) > 1e-12:
                y = y * (np.conj(tr) / abs(tr))
            y = 0.5 * (y + y.conj().T)
            nrm = np.linalg.norm(y)
            if nrm > 0 and np.isfinite(nrm):
                return y / nrm
        except (scipy.sparse.linalg.ArpackError, scipy.sparse.linalg.ArpackNoConvergence):
            pass
    for _ in range(max_iter):
        y = apply_fn(stack, x)
        y = 0.5 * (y + y.conj().T)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            break
        y /= nrm
        if np.linalg.norm(y - x) < tol:
            return y
        x = y
    return x


def _psd_root(v: np.ndarray, rank_cutoff: float):
    """Descending eigen-roots of a Hermitian PSD matrix, numerical rank only."""
    w, u = np.linalg.eigh(0.5 * (v + v.conj().T))
    w = w[::-1].copy()
    u = u[:, ::-1]
    top = max(float(w[0]), 0.0)
    floor = top * max(rank_cutoff**2, 1e-14)
    keep = int(np.sum(w > floor))
    keep = max(keep, 1)
    return np.sqrt(np.maximum(w[:keep], floor if floor > 0 else 1e-300)), u[:, :keep]


def _regauge(gamma, lam, v_l, v_r, max_keep=None, rank_cutoff=LAMBDA_CUTOFF,
             warn_rank=False):
    """One canonicalization step given environment estimates V_L, V_R.

    Returns ``(gamma', lam', lmap, rmap, weight)`` with
    ``gamma' = lmap . gamma . rmap`` (maps act on the bond axes).
    """
    chi = gamma.shape[0]
    roots_l, w_l = _psd_root(v_l, rank_cutoff)
    roots_r, w_r = _psd_root(v_r, rank_cutoff)
    if warn_rank and (len(roots_l) < chi or len(roots_r) < chi):
        warnings.warn(
            f"bond reduced to numerical rank ({len(roots_l)}, {len(roots_r)}) from {chi}",
            RankDeficiencyWarning,
            stacklevel=3,
        )
    z = roots_l[:, None] * w_l.conj().T            # Z+Z = V_L
    z_inv = w_l * (1.0 / roots_l)[None, :]
    x = w_r * roots_r[None, :]                     # X X+ = V_R
    x_inv = (1.0 / roots_r)[:, None] * w_r.conj().T
    res = svd(z * lam[None, :] @ x, max_keep=max_keep, cutoff=LAMBDA_CUTOFF)
    lam_new = res.s / np.linalg.norm(res.s)
    lmap = res.vdag @ x_inv
    rmap = z_inv @ res.u
    gamma_new = np.tensordot(lmap, gamma, axes=(1, 0))
    gamma_new = np.moveaxis(np.tensordot(gamma_new, rmap, axes=(1, 0)), 2, 1)
    # fix the overall scale so the left constraint has unit trace
    stack = _site_stack(gamma_new, lam_new, "left")
    scale = np.sqrt(np.einsum("sab,sab->", stack.conj(), stack).real / gamma_new.shape[1])
    gamma_new /= scale
    lmap /= scale
    return gamma_new, lam_new, lmap, rmap, res.truncation_weight


def _canonicalize_with_maps(gamma, lam, tol=1e-12, max_iter=500, chi_max=None,
                            accelerate=True, env_guess=None, warn_rank=False):
    """Canonicalize ``{gamma, lam}`` tracking the accumulated bond maps.

    Returns ``(gamma_c, lam_c, m_left, m_right, weight, raw_envs)`` with
    ``gamma_c = m_left . gamma . m_right`` and ``weight`` the squared Schmidt
    weight discarded by the ``chi_max`` truncation.  ``raw_envs`` are the
    converged transfer environments of the *input* state, reusable as a
    warm start when canonicalizing a nearby state of the same bond space.
    """
    gamma = as_tensor(gamma)
    lam = np.asarray(lam, dtype=np.float64)
    chi0 = gamma.shape[0]
    m_left = np.eye(chi0, dtype=np.complex128)
    m_right = np.eye(chi0, dtype=np.complex128)
    weight = 0.0
    guess = (None, None)
    if env_guess is not None:
        gl, gr = env_guess
        if gl is not None and gl.shape == (chi0, chi0):
            guess = (gl, gr)

    def run(gamma, lam, m_left, m_right, guess, tol):
        raw_envs = (None, None)
        if accelerate:
            v_l = _transfer_fixed_point(gamma, lam, "left", v0=guess[0], tol=0.1 * tol)
            v_r = _transfer_fixed_point(gamma, lam, "right", v0=guess[1], tol=0.1 * tol)
            raw_envs = (v_l, v_r)
            gamma, lam, lmap, rmap, _ = _regauge(gamma, lam, v_l, v_r, warn_rank=warn_rank)
            m_left = lmap @ m_left
            m_right = m_right @ rmap
        last = np.inf
        for _ in range(max_iter):
            stack_l = _site_stack(gamma, lam, "left")
            stack_r = _site_stack(gamma, lam, "right")
            v_l = np.matmul(stack_l.conj().transpose(0, 2, 1), stack_l).sum(axis=0)
            v_r = np.matmul(stack_r, stack_r.conj().transpose(0, 2, 1)).sum(axis=0)
            gamma2, lam2, lmap, rmap, _ = _regauge(gamma, lam, v_l, v_r, warn_rank=warn_rank)
            n = max(len(lam2), len(lam))
            pad_new = np.zeros(n)
            pad_new[: len(lam2)] = lam2
            pad_old = np.zeros(n)
            pad_old[: len(lam)] = lam
            last = float(np.linalg.norm(pad_new - pad_old))
            gamma, lam = gamma2, lam2
            m_left = lmap @ m_left
            m_right = m_right @ rmap
            if last < tol:
                break
        else:
            raise ConvergenceError(
                f"canonical form not reached in {max_iter} iterations "
                f"(last lambda change {last:.3e})",
                residual=last,
            )
        return gamma, lam, m_left, m_right, raw_envs

    gamma, lam, m_left, m_right, raw_envs = run(gamma, lam, m_left, m_right, guess, tol)
    if chi_max is not None and len(lam) > chi_max:
        weight = float(np.sum(lam[chi_max:] ** 2))
        gamma = gamma[:chi_max, :chi_max, :]
        m_left = m_left[:chi_max, :]
        m_right = m_right[:, :chi_max]
        lam = lam[:chi_max] / np.linalg.norm(lam[:chi_max])
        gamma, lam, m_left, m_right, _ = run(gamma, lam, m_left, m_right, (None, None), tol)
    return gamma, lam, m_left, m_right, weight, raw_envs


def canonicalize_imps(state: IMps, tol: float = 1e-12, max_iter: int = 500,
                      accelerate: bool = True) -> IMps:
    """Bring an iMPS to canonical form (same physical state, new gauge)."""
    gamma, lam, _, _, _, _ = _canonicalize_with_maps(
        state.gamma, state.lam, tol=tol, max_iter=max_iter, accelerate=accelerate,
        warn_rank=True,
    )
    return IMps(gamma=gamma, lam=lam)


def imps_from_site_tensor(a: np.ndarray, tol: float = 1e-12, max_iter: int = 500) -> IMps:
    """Canonical ``{gamma, lam}`` of the state whose every site tensor is ``a``."""
    a = as_tensor(a)
    chi = a.shape[0]
    lam0 = np.full(chi, 1.0 / np.sqrt(chi))
    gamma, lam, _, _, _, _ = _canonicalize_with_maps(a, lam0, tol=tol, max_iter=max_iter)
    return IMps(gamma=gamma, lam=lam)


def check_canonical(state: IMps) -> float:
    """Max-norm violation of the two orthonormality constraints."""
    lam2 = state.lam**2
    eye = np.eye(state.chi)
    left = np.einsum("abs,a,acs->bc", state.gamma.conj(), lam2, state.gamma)
    right = np.einsum("abs,b,cbs->ac", state.gamma, lam2, state.gamma.conj())
    return float(max(np.max(np.abs(left - eye)), np.max(np.abs(right - eye))))


def _fix_global_phase(u: np.ndarray) -> np.ndarray:
    tr = np.trace(u)
    if abs(tr) < 1e-8:
        diag = np.diagonal(u)
        i = int(np.argmax(np.abs(diag)))
        tr = diag[i]
        if abs(tr) < 1e-300:
            return u
    return u * (np.conj(tr) / abs(tr))


def _mixed_fidelity(a: np.ndarray, b: np.ndarray, u: np.ndarray) -> float:
    num = np.einsum("ij,jks,kl,mls->im", u, a, u.conj().T, b.conj())
    val = abs(np.trace(num))
    return float(val / (np.linalg.norm(a) * np.linalg.norm(b)))


def gauge_fix_direct(a: np.ndarray, b: np.ndarray, tol: float = 1e-10,
                     max_iter: int = 5000, check_degenerate: bool = True) -> GaugeFixResult:
    """Gauge unitary between two canonical site tensors via the mixed transfer.

    The dominant left eigenvector of ``x -> sum_s b^s+ x a^s`` equals
    ``lam u`` for gauge-equivalent states; its unitary polar factor is the
    sought ``u`` with ``u a u+ ~= b``.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise TensorShapeError(f"site tensors differ in shape: {a.shape} vs {b.shape}")
    a_st = np.moveaxis(a, 2, 0)
    b_st = np.moveaxis(b, 2, 0)
    count = [0]

    def mixed(x):
        count[0] += 1
        return np.matmul(b_st.conj().transpose(0, 2, 1), np.matmul(x[None], a_st)).sum(axis=0)

    chi = a.shape[0]
    value, vec = dominant_eigenpair(mixed, np.eye(chi, dtype=np.complex128),
                                    tol=tol, max_iter=max_iter)
    if abs(value - 1.0) > 1e-3:
        raise StatesNotEquivalentError(
            f"mixed transfer eigenvalue {value:.6f} is not 1; states are not gauge-equivalent",
            eigenvalue=value,
        )
    if check_degenerate:
        sub = _subdominant_estimate(mixed, vec, chi)
        if sub >= abs(value) * (1.0 - 1e-4):
            raise DegenerateEigenvalueError(
                f"dominant mixed-transfer eigenvalue is degenerate (|mu2/mu1| ~ {sub/abs(value):.6f})"
            )
    u, _ = scipy.linalg.polar(vec)
    u = _fix_global_phase(u)
    return GaugeFixResult(u=u, fidelity=_mixed_fidelity(a, b, u), iterations=count[0])


def _subdominant_estimate(apply_fn, top_vec, chi, iters=60):
    """Rough |mu_2| estimate by power iteration on the deflated map."""
    rng = np.random.default_rng(7)
    v = rng.standard_normal((chi, chi)) + 1j * rng.standard_normal((chi, chi))
    top = top_vec / np.linalg.norm(top_vec)
    val = 0.0
    for _ in range(iters):
        v = v - np.vdot(top, v) * top
        nrm = np.linalg.norm(v)
        if nrm < 1e-300:
            return 0.0
        v /= nrm
        w = apply_fn(v)
        w = w - np.vdot(top, w) * top
        val = abs(np.vdot(v, w))
        nrm = np.linalg.norm(w)
        if nrm < 1e-300:
            return 0.0
        v = w / nrm
    return val


def gauge_fix_iterative(a: np.ndarray, b: np.ndarray, tol: float = 1e-10,
                        max_iter: int = 200, u0: np.ndarray | None = None) -> GaugeFixResult:
    """Procrustes iteration for the gauge unitary maximizing Tr(u a u+ b+).

    Each step SVDs ``m = sum_s a^s u+ b^s+`` and updates ``u = v w+``; the
    reported fidelity is Tr(s) of the last decomposition.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise TensorShapeError(f"site tensors differ in shape: {a.shape} vs {b.shape}")
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    a_st = np.moveaxis(a, 2, 0)
    b_st = np.moveaxis(b, 2, 0)
    chi = a.shape[0]
    u = np.eye(chi, dtype=np.complex128) if u0 is None else np.asarray(u0, dtype=np.complex128)
    fid = 0.0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        m = np.matmul(np.matmul(a_st, u.conj().T[None]), b_st.conj().transpose(0, 2, 1)).sum(axis=0)
        res = svd(m)
        u = res.vdag.conj().T @ res.u.conj().T
        fid = float(np.sum(res.s))
        if 1.0 - fid < tol:
            break
    if 1.0 - fid >= 1e-3:
        warnings.warn(
            f"gauge fidelity plateaued at {fid:.6f}; possible local maximum",
            LocalMaximumWarning,
            stacklevel=2,
        )
    return GaugeFixResult(u=u, fidelity=min(fid, 1.0), iterations=iterations)


def observables_1d(state: IMps, h: float):
    """(energy per link, mz, mx) from lam-weighted canonical environments."""
    viol = check_canonical(state)
    if viol > 1e-6:
        raise ContractViolationError(
            f"state is not canonical (violation {viol:.3e} > 1e-6); canonicalize first"
        )
    lam = state.lam
    one = lam[:, None, None] * state.gamma * lam[None, :, None]
    norm1 = np.einsum("abs,abs->", one.conj(), one).real

    def one_site(op):
        val = np.einsum("abs,st,abt->", one.conj(), op, one)
        return (val / norm1).real

    mz = one_site(SZ)
    mx = one_site(SX)
    two = np.einsum("abs,b,bct->acst", lam[:, None, None] * state.gamma,
                    lam, state.gamma * lam[None, :, None])
    norm2 = np.einsum("acst,acst->", two.conj(), two).real
    zz = (np.einsum("acst,su,tv,acuv->", two.conj(), SZ, SZ, two) / norm2).real
    energy = -zz - h * mx
    return float(energy), float(mz), float(mx)
