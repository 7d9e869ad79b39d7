"""Liouville-space algebra for small open systems.

Density matrices are vectorised row-major, so element ``rho[i, j]`` sits at
index ``i * d + j``.  With this convention a left multiplication ``A @ rho``
is the superoperator ``kron(A, I)`` and a right multiplication ``rho @ A`` is
``kron(I, A.T)``.  Superoperators are plain ``(d**2, d**2)`` complex arrays
and vectorised states are ``(d**2,)`` arrays.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-12

Side = Literal["left", "right"]

# Spin-1/2 operators on the basis {|0>, |1>}: s_z = (|1><1| - |0><0|) / 2.
S_Z = np.array([[-0.5, 0.0], [0.0, 0.5]], dtype=complex)
S_X = np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex)
S_Y = np.array([[0.0, 0.5j], [-0.5j, 0.0]], dtype=complex)


def _square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def dim_of(vec_or_super) -> int:
    """Hilbert-space dimension behind a Liouville vector or superoperator."""
    n = np.shape(vec_or_super)[0]
    d = int(round(np.sqrt(n)))
    if d * d != n:
        raise ValueError(f"length {n} is not a perfect square")
    return d


def vectorize(rho) -> np.ndarray:
    """Row-major vectorisation of a square matrix."""
    rho = _square(rho, "rho")
    return rho.reshape(-1).copy()


def devectorize(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d Liouville vector, got shape {v.shape}")
    d = dim_of(v)
    return v.reshape(d, d).copy()


def trace_cap(d: int) -> np.ndarray:
    """Dual vector ``<<T|`` with ``trace_cap(d) @ vectorize(rho) == trace(rho)``."""
    return np.eye(d, dtype=complex).reshape(-1)


def identity_superoperator(d: int) -> np.ndarray:
    return np.eye(d * d, dtype=complex)


def action_superoperator(a, side: Side = "left") -> np.ndarray:
    """Superoperator of ``rho -> a @ rho`` (left) or ``rho -> rho @ a`` (right)."""
    a = _square(a, "operator")
    eye = np.eye(a.shape[0], dtype=complex)
    if side == "left":
        return np.kron(a, eye)
    if side == "right":
        return np.kron(eye, a.T)
    raise ValueError(f"side must be 'left' or 'right', not {side!r}")


def left(a) -> np.ndarray:
    return action_superoperator(a, "left")


def right(a) -> np.ndarray:
    return action_superoperator(a, "right")


def check_hermitian(h, name: str = "operator", tol: float = HERMITIAN_TOL) -> np.ndarray:
    h = _square(h, name)
    if np.max(np.abs(h - h.conj().T), initial=0.0) > tol:
        raise ValueError(f"{name} is not Hermitian within {tol:g}")
    return h


def hamiltonian_liouvillian(h) -> np.ndarray:
    """Generator of ``d rho/dt = -i [H, rho]``."""
    h = check_hermitian(h, "Hamiltonian")
    return -1j * (left(h) - right(h))


def propagator(h, t: float) -> np.ndarray:
    """``exp(L t)`` for the commutator Liouvillian of a Hermitian ``h``.

    Computed from the eigendecomposition of ``h`` so the result is unitary
    conjugation to machine precision.
    """
    h = check_hermitian(h, "Hamiltonian")
    evals, vecs = np.linalg.eigh(h)
    u = (vecs * np.exp(-1j * evals * t)) @ vecs.conj().T
    return np.kron(u, u.conj())


def superoperator_exp(generator, t: float = 1.0) -> np.ndarray:
    """Matrix exponential of a general (non-Hermitian) generator."""
    return scipy.linalg.expm(np.asarray(generator, dtype=complex) * t)


def conjugation_superoperator(u) -> np.ndarray:
    """Superoperator of ``rho -> u @ rho @ u^dagger``."""
    u = _square(u, "unitary")
    return np.kron(u, u.conj())


def trace_expectation(v, a) -> complex:
    """``Tr[a @ rho]`` for the vectorised state ``v``."""
    v = np.asarray(v, dtype=complex)
    a = _square(a, "operator")
    if v.shape != (a.shape[0] ** 2,):
        raise ValueError(
            f"state of length {v.shape[0]} does not match operator of dim {a.shape[0]}"
        )
    # Tr[A rho] = sum_ij A_ji rho_ij
    return complex(a.T.reshape(-1) @ v)
