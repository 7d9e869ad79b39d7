"""Exact dense simulation of a spin coupled to a few truncated bosonic modes.

The Hilbert space is ``spin (x) mode_0 (x) mode_1 (x) ...`` with each mode
cut to ``n_levels`` Fock states.  Propagation uses the eigendecomposition of
the full Hamiltonian, so the only approximation is the Fock truncation; that
is monitored through the population of the top retained level.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .liouville import S_X, S_Z, check_hermitian

LEAKAGE_TOL = 1e-4


class TruncationLeakageError(RuntimeError):
    """The top Fock level of a mode became populated; raise ``n_levels``."""


@dataclass(frozen=True)
class TruncatedFockSpace:
    """Spin-1/2 plus bosonic modes truncated to ``n_levels`` each."""

    frequencies: tuple = (0.9, 1.1)
    couplings: tuple = (0.1, 0.2)
    n_levels: int = 4

    def __post_init__(self):
        object.__setattr__(self, "frequencies", tuple(float(w) for w in self.frequencies))
        object.__setattr__(self, "couplings", tuple(float(g) for g in self.couplings))
        if len(self.frequencies) != len(self.couplings):
            raise ValueError("need one coupling per mode")
        if any(w <= 0 for w in self.frequencies):
            raise ValueError("mode frequencies must be positive")
        if self.n_levels < 2:
            raise ValueError("n_levels must be at least 2")

    @property
    def n_modes(self) -> int:
        return len(self.frequencies)

    @property
    def dim(self) -> int:
        return 2 * self.n_levels**self.n_modes

    def _embed(self, op, slot: int) -> np.ndarray:
        """Place ``op`` on factor ``slot`` (0 = spin, q + 1 = mode q)."""
        eyes = [np.eye(2)] + [np.eye(self.n_levels)] * self.n_modes
        eyes[slot] = op
        return reduce(np.kron, eyes).astype(complex)

    def annihilation(self, q: int) -> np.ndarray:
        a = np.diag(np.sqrt(np.arange(1, self.n_levels)), 1)
        return self._embed(a, q + 1)

    def number(self, q: int) -> np.ndarray:
        return self._embed(np.diag(np.arange(self.n_levels, dtype=float)), q + 1)

    def top_level_projector(self, q: int) -> np.ndarray:
        p = np.zeros((self.n_levels, self.n_levels))
        p[-1, -1] = 1.0
        return self._embed(p, q + 1)

    def spin(self, op) -> np.ndarray:
        return self._embed(np.asarray(op), 0)


def build_two_mode_rabi(epsilon: float, omega: float, space: TruncatedFockSpace) -> np.ndarray:
    """``eps s_z + Omega s_x + sum_q [g_q s_z (a_q + a_q^dag) + w_q a_q^dag a_q]``."""
    sz = space.spin(S_Z)
    h = epsilon * sz + omega * space.spin(S_X)
    for q, (w, g) in enumerate(zip(space.frequencies, space.couplings)):
        a = space.annihilation(q)
        h = h + g * sz @ (a + a.conj().T) + w * space.number(q)
    return check_hermitian(h, "oracle Hamiltonian")


def thermal_fock_state(omega: float, temperature: float, n_levels: int) -> np.ndarray:
    """Truncated Gibbs state of one mode, renormalised over the kept levels."""
    if omega <= 0:
        raise ValueError("mode frequency must be positive")
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    p = np.zeros(n_levels)
    if temperature == 0:
        p[0] = 1.0
    else:
        p = np.exp(-omega * np.arange(n_levels) / temperature)
        p /= p.sum()
    return np.diag(p).astype(complex)


def initial_state(space: TruncatedFockSpace, rho_spin, temperature: float) -> np.ndarray:
    """Product of a spin state with thermal states of every mode."""
    modes = [thermal_fock_state(w, temperature, space.n_levels) for w in space.frequencies]
    return reduce(np.kron, [np.asarray(rho_spin, dtype=complex)] + modes)


@dataclass
class ExactResult:
    """Exact observables on the grid ``t_j = j dt``."""

    times: np.ndarray
    occupations: np.ndarray  # (n_modes, n + 1)
    sz: np.ndarray
    grid: np.ndarray  # Tr[s_z(t_j) s_z(t_k) rho]
    energy: np.ndarray
    top_population: np.ndarray  # (n_modes, n + 1)
    trace_error: float

    def to_csv(self, path, reconstructed=None) -> None:
        """Exact ``n_q(t)`` and, if given, reconstructed values side by side."""
        n_modes = self.occupations.shape[0]
        header = ["t", "sz"] + [f"n{q}_exact" for q in range(n_modes)]
        cols = [self.times, self.sz] + list(self.occupations)
        if reconstructed is not None:
            header += [f"n{q}_reconstructed" for q in range(n_modes)]
            cols += [np.real(r) for r in reconstructed]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])


def exact_evolution(h, rho0, dt: float, n_steps: int, space: TruncatedFockSpace,
                    leakage_tol: float = LEAKAGE_TOL) -> ExactResult:
    """Propagate ``rho0`` under ``h`` exactly and collect observables.

    The two-time grid uses Heisenberg operators in the eigenbasis,
    ``s(t)_ab = s_ab exp(i (E_a - E_b) t)``, so every entry is exact.
    """
    h = check_hermitian(h, "Hamiltonian")
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != h.shape:
        raise ValueError("rho0 and Hamiltonian dimensions differ")
    energies, v = np.linalg.eigh(h)
    times = dt * np.arange(n_steps + 1)
    phase = np.exp(1j * np.multiply.outer(times, energies))  # (t, a)
    rho_e = v.conj().T @ rho0 @ v

    def heisenberg(op):
        op_e = v.conj().T @ op @ v
        return phase[:, :, None] * op_e[None] * phase.conj()[:, None, :]

    def expect(op):
        # Tr[op(t) rho0]
        return np.einsum("tab,ba->t", heisenberg(op), rho_e)

    n_modes = space.n_modes
    occ = np.array([expect(space.number(q)).real for q in range(n_modes)])
    top = np.array([expect(space.top_level_projector(q)).real for q in range(n_modes)])
    worst = float(top.max(initial=0.0))
    if worst > leakage_tol:
        raise TruncationLeakageError(
            f"top Fock level population {worst:.2e} exceeds {leakage_tol:g}; raise n_levels"
        )
    sz_t = heisenberg(space.spin(S_Z))
    sz = np.einsum("tab,ba->t", sz_t, rho_e).real
    m = len(times)
    right = np.einsum("kbc,ca->kab", sz_t, rho_e)
    grid = sz_t.reshape(m, -1) @ right.reshape(m, -1).T
    energy = expect(h).real
    trace = np.trace(rho0)
    return ExactResult(times, occ, sz, grid, energy, top, float(abs(trace - 1.0)))
