"""1D imaginary-time evolution with environment recycling.

One evolution step applies the one-site MPO form of the second-order
Trotter gate, enlarging the bond to kappa*chi, then truncates back to chi
through the canonical form.  The composed truncation maps P (kappa*chi x
chi) and Q (chi x kappa*chi) satisfy  A~ = Q Theta P  exactly and are the
recycled environment: together with the gauge unitary relating consecutive
canonical states they form a renormalized gate G = U+ Q g P U that evolves
the site tensor at fixed bond dimension without recomputing anything.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from ._threads import single_threaded_blas
from .errors import (
    InstabilityError,
    NumericError,
    RecycleUnsafeError,
    TensorShapeError,
    TruncationAccuracyWarning,
)
from .evlog import CSV_COLUMNS_1D, EvolutionLog
from .imps import (
    GaugeFixResult,
    IMps,
    _canonicalize_with_maps,
    gauge_fix_direct,
    gauge_fix_iterative,
    imps_from_site_tensor,
    observables_1d,
    site_tensor,
    tilted_product_imps,
)
from .models import IsingParams, field_half_gate, interaction_gate, operator_schmidt_factors
from .tensor import as_tensor, check_finite

TRUNCATION_CEILING = 1e-2
GATE_FIDELITY_BAR = 1e-4


@dataclass(frozen=True)
class GateMpo:
    """One-site MPO tensor ``g`` with axes (left, right, s_out, s_in)."""

    g: np.ndarray
    kappa: int


@dataclass(frozen=True)
class RenormGate1D:
    """Renormalized gate: ``A -> glue_left . (g A) . glue_right`` in a fixed gauge.

    ``glue_left`` is ``U+ Q`` (chi x kappa*chi) and ``glue_right`` is ``P U``
    (kappa*chi x chi); ``provenance`` records (step, gauge fidelity,
    truncation weight) at construction.
    """

    glue_left: np.ndarray
    glue_right: np.ndarray
    g: np.ndarray
    kappa: int
    provenance: tuple

    @property
    def chi(self) -> int:
        return self.glue_left.shape[0]

    def apply(self, a: np.ndarray) -> np.ndarray:
        theta = _apply_mpo_tensor(self.g, a)
        out = np.tensordot(self.glue_left, theta, axes=(1, 0))
        out = np.tensordot(out, self.glue_right, axes=(1, 0))
        return np.ascontiguousarray(np.moveaxis(out, 1, 2))

    def dense_tensor(self) -> np.ndarray:
        """Materialized six-leg map (a, alpha, b, beta, s_out, s_in)."""
        chi = self.chi
        kappa = self.kappa
        gl = self.glue_left.reshape(chi, kappa, chi)
        gr = self.glue_right.reshape(kappa, chi, chi)
        return np.einsum("ila,lrst,rbj->iajbst", gl, self.g, gr)


def build_mpo(params: IsingParams) -> GateMpo:
    """One-site MPO of the second-order Trotter step.

    The two-site interaction gate is operator-Schmidt split with the root of
    the singular weights absorbed into both factors; each site then carries
    the factor arriving from its left link, the factor leaving over its
    right link, and a half field gate on both physical sides.
    """
    left, right = operator_schmidt_factors(interaction_gate(params).tensor)
    gf = field_half_gate(params)
    kappa = left.shape[0]
    # g[l, r] = gf . right_l . left_r . gf  (operator product on the site)
    g = np.einsum("ab,lbc,rcd,de->lrae", gf, right, left, gf)
    return GateMpo(g=np.ascontiguousarray(g), kappa=kappa)


def _apply_mpo_tensor(g: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Theta[(l,alpha),(r,beta),s] = sum_s' g[l,r,s,s'] a[alpha,beta,s']."""
    kappa = g.shape[0]
    chi = a.shape[0]
    theta = np.einsum("lrst,abt->larbs", g, a)
    return theta.reshape(kappa * chi, kappa * chi, a.shape[2])


def full_step(state: IMps, gate: GateMpo, chi_max: int, tol: float = 1e-12,
              max_iter: int = 500, warm=None, trunc_ceiling: float = TRUNCATION_CEILING):
    """One full evolution step: apply the MPO, canonicalize, truncate.

    Returns ``(new_state, p, q, truncation_weight)`` with
    ``site_tensor(new_state) = q . theta . p`` exactly, where ``theta`` is
    the MPO-enlarged site tensor.  ``warm`` may carry converged transfer
    environments from the previous step to seed the power iterations.
    """
    theta = _apply_mpo_tensor(gate.g, site_tensor(state))
    big = theta.shape[0]
    lam0 = np.full(big, 1.0 / np.sqrt(big))
    env_guess = warm.get("theta_envs") if isinstance(warm, dict) else None
    gamma_c, lam_c, m_left, m_right, weight, raw_envs = _canonicalize_with_maps(
        theta, lam0, tol=tol, max_iter=max_iter, chi_max=min(chi_max, big),
        env_guess=env_guess,
    )
    if isinstance(warm, dict):
        warm["theta_envs"] = raw_envs
    if weight > trunc_ceiling:
        warnings.warn(
            f"truncation weight {weight:.3e} exceeds ceiling {trunc_ceiling:.0e}",
            TruncationAccuracyWarning,
            stacklevel=2,
        )
    root = np.sqrt(lam_c)
    q = root[:, None] * m_left
    p = m_right * root[None, :]
    new_state = IMps(gamma=gamma_c, lam=lam_c)
    return new_state, p, q, weight


def build_renorm_gate(a0: IMps, gate: GateMpo, chi_max: int, tol: float = 1e-12,
                      u0: np.ndarray | None = None, step: int = 0, warm=None):
    """Construct the renormalized gate from one full step off ``a0``.

    Returns ``(renorm_gate, stepped_state, gauge)``; raises
    :class:`RecycleUnsafeError` when the gauge fidelity is below the bar.
    """
    new_state, p, q, weight = full_step(a0, gate, chi_max, tol=tol, warm=warm)
    a_old = site_tensor(a0)
    a_new = site_tensor(new_state)
    fix = gauge_fix_iterative(a_new, a_old, tol=1e-12, max_iter=400, u0=u0)
    if 1.0 - fix.fidelity >= 1e-3:
        direct = None
        try:
            direct = gauge_fix_direct(a_new, a_old)
        except Exception:
            pass
        if direct is not None and direct.fidelity > fix.fidelity:
            fix = direct
    if fix.fidelity < 1.0 - GATE_FIDELITY_BAR:
        raise RecycleUnsafeError(
            f"gauge fidelity {fix.fidelity:.8f} below bar; state changing too fast to recycle",
            fidelity=fix.fidelity,
        )
    # fix.u maps a_new into a0's gauge: u a_new u+ ~= a_old is NOT the relation
    # we need; we want a1_tilde ~= U a0 U+, i.e. U from (a_old -> a_new).
    u = fix.u.conj().T
    glue_left = u.conj().T @ q
    glue_right = p @ u
    rg = RenormGate1D(
        glue_left=glue_left,
        glue_right=glue_right,
        g=gate.g,
        kappa=gate.kappa,
        provenance=(step, fix.fidelity, weight),
    )
    return rg, new_state, fix


def _normalize_site(a: np.ndarray, v_guess=None):
    """Divide by the root of the dominant transfer eigenvalue."""
    stack = np.moveaxis(a, 2, 0)
    chi = a.shape[0]
    v = np.eye(chi, dtype=np.complex128) if v_guess is None else v_guess
    v = v / np.linalg.norm(v)
    eta = 1.0
    for _ in range(200):
        w = np.matmul(stack.conj().transpose(0, 2, 1), np.matmul(v[None], stack)).sum(axis=0)
        w = 0.5 * (w + w.conj().T)
        eta_new = np.linalg.norm(w)
        if eta_new < 1e-300:
            raise NumericError("state norm collapsed during recycling")
        w /= eta_new
        if np.linalg.norm(w - v) < 1e-12:
            v = w
            eta = eta_new
            break
        v = w
        eta = eta_new
    if eta <= 0.0 or not np.isfinite(eta):
        raise NumericError(f"invalid transfer eigenvalue {eta} during normalization")
    return a / np.sqrt(eta), v


def recycle_evolve(a0: IMps, gate: RenormGate1D, n_re: int) -> IMps:
    """Apply the renormalized gate ``n_re`` times and recanonicalize."""
    if n_re < 1:
        raise TensorShapeError(f"n_re must be >= 1, got {n_re}")
    a = site_tensor(a0)
    v = np.diag(a0.lam.astype(np.complex128))
    for _ in range(n_re):
        a, v = _normalize_site(gate.apply(a), v)
        check_finite(a, "recycled site tensor")
    return imps_from_site_tensor(a)


def recycle_fixed_point(a0: IMps, gate: RenormGate1D, tol: float = 1e-10,
                        max_iter: int = 20000) -> IMps:
    """Power-iterate the renormalized gate to its dominant state (N_re -> inf)."""
    a = site_tensor(a0)
    v = np.diag(a0.lam.astype(np.complex128))
    history = []
    for _ in range(max_iter):
        a_new, v = _normalize_site(gate.apply(a), v)
        overlap = np.vdot(a, a_new)
        phase = overlap / abs(overlap) if abs(overlap) > 1e-300 else 1.0
        diff = float(np.linalg.norm(a_new - phase * a) / np.linalg.norm(a_new))
        history.append(diff)
        a = a_new
        if diff < tol:
            return imps_from_site_tensor(a)
        if len(history) > 60 and diff > 2.0 * min(history[:-30]):
            break
    raise InstabilityError(
        f"renormalized-gate power iteration did not settle (last change {history[-1]:.3e}); "
        "the state may be falling into a local minimum"
    )


def evolve_1d(params: IsingParams, chi: int, n_re: int, total_steps: int,
              schedule=None, warmup_tol: float = 1e-6, initial_state: IMps | None = None,
              measure_every: int = 1, canon_tol: float = 1e-12,
              log: EvolutionLog | None = None) -> EvolutionLog:
    """Driver: warm-up full updates, then rounds of one environment
    computation followed by ``n_re - 1`` recycled applications.

    ``schedule`` optionally lists ``(delta, steps)`` phases overriding the
    fixed time step; observables are measured every ``measure_every`` steps
    on a scratch canonical copy (measurement never feeds back into the
    evolution).  Returns the per-step :class:`EvolutionLog`.
    """
    with single_threaded_blas():
        return _evolve_1d(params, chi, n_re, total_steps, schedule, warmup_tol,
                          initial_state, measure_every, canon_tol, log)


def _evolve_1d(params, chi, n_re, total_steps, schedule, warmup_tol,
               initial_state, measure_every, canon_tol, log):
    if n_re < 1:
        raise TensorShapeError(f"n_re must be >= 1, got {n_re}")
    log = log if log is not None else EvolutionLog(columns=CSV_COLUMNS_1D)
    state = initial_state if initial_state is not None else tilted_product_imps()
    phases = list(schedule) if schedule else [(params.delta, total_steps)]
    step = 0
    i_re = 0
    warm: dict = {}
    prev_energy = None
    warmed_up = False
    n_re_now = n_re
    gauge_guess = None

    def measure(st: IMps):
        return observables_1d(st, params.h)

    for delta, phase_steps in phases:
        gate = build_mpo(IsingParams(h=params.h, delta=delta, dimensionality=1))
        done = 0
        while done < phase_steps:
            if not warmed_up or n_re_now == 1:
                t0 = time.perf_counter()
                state, _, _, weight = full_step(state, gate, chi, tol=canon_tol, warm=warm)
                elapsed = time.perf_counter() - t0
                step += 1
                done += 1
                i_re += 1
                energy = mz = None
                if step % measure_every == 0 or done == phase_steps:
                    energy, mz, _ = measure(state)
                log.append(step=step, i_re=i_re, n_re=1, energy=energy, mz=mz,
                           truncation_weight=weight, wall_seconds=elapsed)
                if energy is not None:
                    if (
                        not warmed_up
                        and prev_energy is not None
                        and abs(energy - prev_energy) < warmup_tol
                    ):
                        warmed_up = True
                        log.event(f"warm-up complete at step {step}")
                    prev_energy = energy
                continue
            # recycling round: one environment computation + n_re-1 recycles
            burst = min(n_re_now, phase_steps - done)
            t0 = time.perf_counter()
            try:
                rg, stepped, fix = build_renorm_gate(
                    state, gate, chi, tol=canon_tol, u0=gauge_guess, step=step, warm=warm
                )
            except RecycleUnsafeError as exc:
                log.event(f"recycle unsafe at step {step + 1} "
                          f"(fidelity {exc.fidelity}); full update fallback")
                warmed_up = False
                continue
            gauge_guess = fix.u
            elapsed = time.perf_counter() - t0
            i_re += 1
            step += 1
            done += 1
            energy, mz, _ = measure(stepped)
            log.append(step=step, i_re=i_re, n_re=n_re_now, energy=energy, mz=mz,
                       truncation_weight=rg.provenance[2], wall_seconds=elapsed)
            prev_energy = energy
            a = site_tensor(stepped)
            # express the stepped state in a0's gauge before further recycles
            u = fix.u.conj().T
            a = np.einsum("ij,jks,kl->ils", u.conj().T, a, u)
            v_norm = None
            try:
                for _ in range(burst - 1):
                    t0 = time.perf_counter()
                    a, v_norm = _normalize_site(rg.apply(a), v_norm)
                    check_finite(a, "recycled site tensor")
                    elapsed = time.perf_counter() - t0
                    step += 1
                    done += 1
                    energy = mz = weight = None
                    if step % measure_every == 0 or done == phase_steps:
                        scratch = imps_from_site_tensor(a, tol=max(canon_tol, 1e-12))
                        energy, mz, _ = measure(scratch)
                        prev_energy = energy
                    log.append(step=step, i_re=i_re, n_re=n_re_now, energy=energy, mz=mz,
                               truncation_weight=None, wall_seconds=elapsed)
            except (InstabilityError, NumericError) as exc:
                n_re_now = max(1, n_re_now // 2)
                log.event(f"instability at step {step}: {exc}; halving N_re to {n_re_now}")
            state = imps_from_site_tensor(a, tol=canon_tol)
    return log
