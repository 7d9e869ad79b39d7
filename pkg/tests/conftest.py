"""Shared oracles and fixtures."""

import itertools

import numpy as np
import pytest

from spinbath.bath_kernels import BathKernel, OhmicSpectralDensity
from spinbath.liouville import left, propagator, right, trace_cap, vectorize


def path_sum(eta, eigvals, controls, rho_vec, final=None):
    """Brute-force sum over every Liouville path of the discretised influence functional.

    ``controls[n]`` acts before step ``n``'s influence, ``final`` after the
    last one, then the trace is taken.  Only valid for a coupling that is
    diagonal in the working basis.
    """
    n_steps = len(controls)
    d = len(eigvals)
    dd = d * d
    sp = np.repeat(eigvals, d)  # bra-ket pair (a, b) -> s_a
    sm = np.tile(eigvals, d)  # -> s_b
    cap = trace_cap(d) if final is None else trace_cap(d) @ final
    total = 0j
    for mu in itertools.product(range(dd), repeat=n_steps):
        amp = (controls[0] @ rho_vec)[mu[0]]
        for n in range(1, n_steps):
            amp *= controls[n][mu[n], mu[n - 1]]
        if amp == 0:
            continue
        w = 1.0 + 0j
        for n in range(n_steps):
            a, b = sp[mu[n]], sm[mu[n]]
            for j in range(n + 1):
                e = eta[n - j]
                if j == n:
                    w *= np.exp(-(a - b) * (e * a - np.conj(e) * b))
                else:
                    w *= np.exp(-(a - b) * (e * sp[mu[j]] - np.conj(e) * sm[mu[j]]))
        total += cap[mu[-1]] * w * amp
    return total


def path_sum_grid(eta, eigvals, h, dt, n_steps, s, rho0):
    """``Tr[s(t_j) s(t_k) rho]`` for ``0 <= j, k <= n_steps`` by path sums."""
    u = propagator(h, 0.5 * dt)
    plain = [u] + [u @ u] * (n_steps - 1)
    rho_vec = vectorize(rho0)
    out = np.zeros((n_steps + 1, n_steps + 1), dtype=complex)

    def run(ins):
        # ins maps slot index (0..n_steps) to a superoperator inserted at t_slot
        ctr = []
        for n in range(n_steps):
            first = u if n == 0 else u @ u
            x = ins.get(n)
            if x is None:
                ctr.append(first if n == 0 else plain[n])
            elif n == 0:
                ctr.append(u @ x)
            else:
                ctr.append(u @ x @ u)
        fin = ins[n_steps] @ u if n_steps in ins else u
        return path_sum(eta, eigvals, ctr, rho_vec, fin)

    for j in range(n_steps + 1):
        for k in range(n_steps + 1):
            if j == k:
                out[j, k] = run({j: left(s @ s)})
            elif j < k:
                out[j, k] = run({j: right(s), k: left(s)})
            else:
                out[j, k] = run({k: left(s), j: left(s)})
    return out


@pytest.fixture(scope="session")
def fig_kernel():
    """Ohmic bath of the steady-state figures: alpha 0.05, omega_c 10, T 1."""
    return BathKernel(OhmicSpectralDensity(0.05, 10.0), 1.0)


@pytest.fixture(scope="session")
def strong_kernel():
    """A stronger, slower bath so short path sums see sizeable memory effects."""
    return BathKernel(OhmicSpectralDensity(0.3, 5.0), 0.5)


# -- acceptance reporting --------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def report(criterion: int, passed: bool, detail: str) -> str:
    """Record and print one pass/fail line for an acceptance criterion."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
