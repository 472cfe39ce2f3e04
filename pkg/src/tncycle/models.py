"""Transverse-field Ising model: gates and exact reference energies.

Hamiltonian conventions (1D chain / 2D square lattice):

    H = - sum_<ij> sz_i sz_j - h * sum_i sx_i

Imaginary-time gates for a step ``delta`` therefore carry *positive*
exponents: ``exp(-delta * H_int) = exp(+delta * sz sz)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.sparse
import scipy.sparse.linalg

from .errors import NumericError, ResourceLimitError, TensorShapeError
from .tensor import svd

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)
ID2 = np.eye(2, dtype=np.complex128)

OPERATOR_SCHMIDT_CUTOFF = 1e-12


@dataclass(frozen=True)
class IsingParams:
    """Field amplitude, imaginary-time step and lattice dimensionality."""

    h: float
    delta: float
    dimensionality: int = 1

    def __post_init__(self):
        if not np.isfinite(self.h) or self.h < 0.0:
            raise TensorShapeError(f"transverse field must be finite and >= 0, got {self.h}")
        if not np.isfinite(self.delta) or self.delta < 0.0:
            raise TensorShapeError(f"time step must be finite and >= 0, got {self.delta}")
        if self.dimensionality not in (1, 2):
            raise TensorShapeError(f"dimensionality must be 1 or 2, got {self.dimensionality}")


@dataclass(frozen=True)
class TwoSiteGate:
    """Two-site imaginary-time gate.

    ``tensor`` has axes ``(s1_out, s1_in, s2_out, s2_in)``; ``kappa`` is its
    operator-Schmidt rank in the site-pair grouping.
    """

    tensor: np.ndarray
    kappa: int


def interaction_gate(params: IsingParams) -> TwoSiteGate:
    """exp(+delta * sz x sz) = cosh(delta) I + sinh(delta) sz x sz."""
    d = params.delta
    g = np.cosh(d) * np.einsum("ab,cd->abcd", ID2, ID2) + np.sinh(d) * np.einsum(
        "ab,cd->abcd", SZ, SZ
    )
    return TwoSiteGate(tensor=g, kappa=operator_schmidt_factors(g)[0].shape[0])


def field_half_gate(params: IsingParams) -> np.ndarray:
    """exp(+h*delta/2 * sx) acting on a single site."""
    x = 0.5 * params.h * params.delta
    return np.cosh(x) * ID2 + np.sinh(x) * SX


def operator_schmidt_factors(gate_tensor: np.ndarray):
    """Split a two-site gate into per-site operator factors.

    The gate (axes ``s1_out, s1_in, s2_out, s2_in``) is reshaped into a
    ``d^2 x d^2`` matrix with site-pair grouping and SVD'd; the square roots
    of the singular values are absorbed symmetrically.  Returns
    ``(left, right)`` stacks of shape ``(kappa, d, d)`` such that

        gate[a,b,c,e] = sum_k left[k,a,b] * right[k,c,e]
    """
    g = np.asarray(gate_tensor)
    d = g.shape[0]
    mat = g.reshape(d * d, d * d)
    res = svd(mat, cutoff=OPERATOR_SCHMIDT_CUTOFF)
    root = np.sqrt(res.s)
    left = np.einsum("ik,k->ki", res.u, root).reshape(-1, d, d)
    right = np.einsum("k,ki->ki", root, res.vdag).reshape(-1, d, d)
    return left, right


def exact_energy_1d(h: float) -> float:
    """Ground-state energy per link of the infinite transverse-field chain.

    Quadrature of the free-fermion dispersion:
        e(h) = -(1/pi) * int_0^pi sqrt(1 + h^2 - 2 h cos k) dk
    """
    if h < 0.0:
        raise TensorShapeError(f"transverse field must be >= 0, got {h}")

    def dispersion(k):
        return np.sqrt(1.0 + h * h - 2.0 * h * np.cos(k))

    val, err = scipy.integrate.quad(dispersion, 0.0, np.pi, epsabs=1e-12, epsrel=1e-12)
    if err > 1e-9:
        raise NumericError(f"quadrature error {err:.3e} exceeds 1e-9 for h={h}")
    return -val / np.pi


def exact_diag_small(h: float, n_sites: int, dimensionality: int = 1) -> float:
    """Ground energy per link of a small periodic chain by exact diagonalization."""
    if dimensionality != 1:
        raise ResourceLimitError("exact diagonalization is only provided for chains")
    if n_sites < 2 or n_sites > 14:
        raise ResourceLimitError(f"n_sites must be in [2, 14], got {n_sites}")
    dim = 2**n_sites

    def one_site(op, i):
        mats = [scipy.sparse.identity(2, format="csr", dtype=np.complex128)] * n_sites
        mats[i] = scipy.sparse.csr_matrix(op)
        out = mats[0]
        for m in mats[1:]:
            out = scipy.sparse.kron(out, m, format="csr")
        return out

    ham = scipy.sparse.csr_matrix((dim, dim), dtype=np.complex128)
    for i in range(n_sites):
        j = (i + 1) % n_sites
        ham = ham - one_site(SZ, i) @ one_site(SZ, j)
        ham = ham - h * one_site(SX, i)
    if dim <= 64:
        energy = float(np.linalg.eigvalsh(ham.toarray())[0])
    else:
        energy = float(
            scipy.sparse.linalg.eigsh(ham, k=1, which="SA", return_eigenvectors=False)[0]
        )
    return energy / n_sites
