"""System dynamics and two-time correlation functions from a process tensor.

Time grid: ``t_j = j dt`` for ``j = 0..n``.  Each step ``n`` is propagated as
``U_second(n) . influence(n) . U_first(n)`` where the two half-step system
propagators are built at the midpoints of their half steps, so a
time-dependent ``H_S(t)`` keeps second-order accuracy.  Operator insertions
at ``t_j`` sit between ``U_second(j - 1)`` and ``U_first(j)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .liouville import (
    S_X,
    S_Z,
    check_hermitian,
    left,
    propagator,
    right,
    trace_cap,
    vectorize,
)
from .process_tensor import ProcessTensor

Hamiltonian = np.ndarray | Callable[[float], np.ndarray]


@dataclass(frozen=True)
class PropagatorSchedule:
    """Half-step system propagators for every step of a run."""

    dt: float
    first: list
    second: list
    hamiltonian: Callable[[float], np.ndarray]

    def __len__(self) -> int:
        return len(self.first)


def propagator_schedule(hamiltonian: Hamiltonian, dt: float, n_steps: int) -> PropagatorSchedule:
    """Build ``exp(L_S dt/2)`` for the two halves of each step.

    ``hamiltonian`` is either a constant matrix or a callable ``t -> H_S(t)``.
    """
    if callable(hamiltonian):
        h_of_t = hamiltonian
    else:
        h_const = check_hermitian(hamiltonian, "system Hamiltonian")
        h_of_t = lambda t: h_const  # noqa: E731
    first, second = [], []
    cache: dict[bytes, np.ndarray] = {}

    def half(t):
        h = check_hermitian(h_of_t(t), "system Hamiltonian")
        key = h.tobytes()
        if key not in cache:
            cache[key] = propagator(h, 0.5 * dt)
        return cache[key]

    for n in range(n_steps):
        t = n * dt
        first.append(half(t + 0.25 * dt))
        second.append(half(t + 0.75 * dt))
    return PropagatorSchedule(dt, first, second, h_of_t)


@dataclass
class Trajectory:
    """Reduced system states on the time grid and derived expectation values."""

    times: np.ndarray
    states: np.ndarray  # (n + 1, d, d)
    hamiltonian: Callable[[float], np.ndarray] | None = None

    def expectation(self, op) -> np.ndarray:
        op = np.asarray(op)
        return np.einsum("ij,tji->t", op, self.states)

    @property
    def sz(self) -> np.ndarray:
        return self.expectation(S_Z).real

    @property
    def sx(self) -> np.ndarray:
        return self.expectation(S_X).real

    @property
    def energy(self) -> np.ndarray:
        """``Tr[H_S(t_j) rho_S(t_j)]`` with the instantaneous Hamiltonian."""
        if self.hamiltonian is None:
            raise ValueError("trajectory has no Hamiltonian attached")
        return np.array(
            [np.trace(self.hamiltonian(t) @ r).real for t, r in zip(self.times, self.states)]
        )

    @property
    def trace_error(self) -> float:
        tr = np.einsum("tii->t", self.states)
        return float(np.max(np.abs(tr - 1.0)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            header = ["t", "sz", "sx"]
            rows = [self.times, self.sz, self.sx]
            if self.hamiltonian is not None:
                header.append("energy")
                rows.append(self.energy)
            w.writerow(header)
            for vals in zip(*rows):
                w.writerow([repr(float(v)) for v in vals])


@dataclass
class CorrelationGrid:
    """``values[j, k] = Tr[s(t_j) s(t_k) rho]`` on the grid ``t_j = j dt``."""

    values: np.ndarray
    dt: float
    s_label: str = "s"
    rho0_label: str = "rho0"
    asymmetry: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_points)

    def truncated(self, n_points: int) -> "CorrelationGrid":
        """The grid restricted to the first ``n_points`` times."""
        return CorrelationGrid(self.values[:n_points, :n_points], self.dt, self.s_label,
                               self.rho0_label, self.asymmetry, dict(self.metadata))

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.values - self.values.conj().T)))

    def to_csv(self, path) -> None:
        """Long format: ``j, k, t_j, t_k, re, im``."""
        n = self.n_points
        t = self.times
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["j", "k", "t_j", "t_k", "re", "im"])
            for j in range(n):
                for k in range(n):
                    v = self.values[j, k]
                    w.writerow([j, k, repr(float(t[j])), repr(float(t[k])),
                                repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path, dt: float | None = None) -> "CorrelationGrid":
        data = np.genfromtxt(path, delimiter=",", names=True)
        n = int(data["j"].max()) + 1
        vals = np.zeros((n, n), dtype=complex)
        vals[data["j"].astype(int), data["k"].astype(int)] = data["re"] + 1j * data["im"]
        if dt is None:
            dt = float(data["t_j"][n]) if n > 1 else 1.0
        return cls(vals, dt)


def _check_inputs(pt: ProcessTensor, schedule: PropagatorSchedule, n_steps: int | None) -> int:
    n = len(pt) if n_steps is None else n_steps
    if n > len(pt):
        raise ValueError(f"process tensor covers {len(pt)} steps, asked for {n}")
    if len(schedule) < n:
        raise ValueError(f"schedule has {len(schedule)} steps, need {n}")
    if not np.isclose(schedule.dt, pt.dt, rtol=1e-12, atol=0):
        raise ValueError("schedule dt differs from the process tensor dt")
    return n


def _internal_schedule(pt: ProcessTensor, schedule: PropagatorSchedule, n: int):
    first = [pt.to_internal(u).T for u in schedule.first[:n]]
    second = [pt.to_internal(u).T for u in schedule.second[:n]]
    return first, second


def _as_state(rho0) -> np.ndarray:
    rho0 = np.asarray(rho0, dtype=complex)
    return vectorize(rho0) if rho0.ndim == 2 else rho0


def system_dynamics(pt: ProcessTensor, rho0, schedule: PropagatorSchedule,
                    n_steps: int | None = None) -> Trajectory:
    """Reduced density matrix at every grid point ``t_0 .. t_n``."""
    n = _check_inputs(pt, schedule, n_steps)
    d = pt.dim
    first, second = _internal_schedule(pt, schedule, n)
    caps = pt.caps
    e = pt.state_to_internal(_as_state(rho0))[None, :]
    states = np.empty((n + 1, d, d), dtype=complex)
    for j in range(n + 1):
        v = pt.state_from_internal(caps[j] @ e)
        states[j] = v.reshape(d, d)
        if j == n:
            break
        e = np.einsum("bm,bmc->cm", e @ first[j], pt.sites[j]) @ second[j]
    return Trajectory(pt.dt * np.arange(n + 1), states, schedule.hamiltonian)


def _readout(pt: ProcessTensor, op) -> np.ndarray:
    """Functional ``v -> Tr[op rho]`` acting on internal-basis Liouville vectors."""
    f = trace_cap(pt.dim) @ left(op)
    return f if pt._identity_basis else f @ pt._from_eig


def two_time_grid(pt: ProcessTensor, s, rho0, schedule: PropagatorSchedule,
                  n_steps: int | None = None, check_symmetry: bool = False) -> CorrelationGrid:
    """``Tr[s(t_j) s(t_k) rho]`` for all ``j, k`` in ``0..n``.

    The upper triangle (``j < k``) is computed by inserting ``rho -> rho s``
    at ``t_j`` and reading out ``Tr[s .]`` at ``t_k``; the lower triangle is
    its Hermitian conjugate.  All rows advance together in one sweep over the
    process tensor.  With ``check_symmetry`` the lower triangle is also
    computed directly (``s rho`` at ``t_k``) and the largest deviation from
    Hermitian symmetry is stored in ``asymmetry``.
    """
    s = check_hermitian(s, "correlation operator")
    n = _check_inputs(pt, schedule, n_steps)
    dd = pt.dim**2
    first, second = _internal_schedule(pt, schedule, n)
    caps = pt.caps
    read_s = _readout(pt, s)
    read_ss = _readout(pt, s @ s)
    inserts = [pt.to_internal(right(s)).T]
    if check_symmetry:
        inserts.append(pt.to_internal(left(s)).T)

    upper = np.zeros((n + 1, n + 1), dtype=complex)
    lower = np.zeros((n + 1, n + 1), dtype=complex)
    e = pt.state_to_internal(_as_state(rho0))[None, :]
    # rows[i] holds the carried network for insertion time i // len(inserts)
    rows = np.zeros((0, 1, dd), dtype=complex)
    n_ins = len(inserts)
    for j in range(n + 1):
        cap = caps[j]
        if rows.shape[0]:
            vals = np.einsum("rbm,b,m->r", rows, cap, read_s)
            upper[: j, j] = vals[0::n_ins]
            if check_symmetry:
                lower[j, : j] = vals[1::n_ins]
        upper[j, j] = (cap @ e) @ read_ss
        new = np.stack([e @ x for x in inserts])
        rows = np.concatenate([rows, new], axis=0)
        if j == n:
            break
        e = np.einsum("bm,bmc->cm", e @ first[j], pt.sites[j]) @ second[j]
        rows = np.einsum("rbm,bmc->rcm", rows @ first[j], pt.sites[j]) @ second[j]

    values = upper + np.triu(upper, 1).conj().T
    asym = None
    if check_symmetry:
        low = np.tril(lower, -1)
        asym = float(np.max(np.abs(low - np.tril(values, -1)), initial=0.0))
    return CorrelationGrid(values, pt.dt, asymmetry=asym)
