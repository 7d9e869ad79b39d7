"""Bath observables from a system correlation grid.

Every quantity here is a time integral of the grid
``G[j, k] = Tr[s(t_j) s(t_k) rho]`` against a kernel of the time difference
that is a superposition of plane waves,

    K(tau) = sum_i a_i exp(-i w_i tau) + b_i exp(+i w_i tau),

with the frequency nodes and weights of the spectral measure folded into
``a`` and ``b``.  The bath kernels vary on the scale ``1 / omega_c``, which
at desk numerics is no longer than the time step, so a trapezoid rule on
the grid is badly wrong.  Instead ``G`` is interpolated linearly between
grid points (hat functions ``phi_j``) and the kernel is integrated exactly
against every pair of hats:

    X(t_m) = sum_{j,k <= m} G[j, k] W_m[j, k],
    W_m[j, k] = int int phi_j(t') phi_k(t'') K(t' - t'') dt' dt''.

The weights depend on ``j - k`` and on whether ``j, k`` are an end point of
``[0, t_m]`` (half hats) or interior, so a few Toeplitz tables and prefix
sums give ``X`` at every ``m`` in ``O(N**2)``.

Kernels per unit spectral weight, with ``c = coth(w / 2T)``:

* occupation ``cos(w tau) - i c sin(w tau)``;
* heat ``i dC/dtau = w [cos(w tau) - i c sin(w tau)]``;
* correlation ``C = c cos(w tau) - i sin(w tau)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bath_kernels import BathKernel, OhmicSpectralDensity, coth_factor, gauss_legendre_panels
from .correlations import CorrelationGrid, Trajectory

BAND_GL_ORDER = 16
# Largest phase (rad) a band panel may accumulate at the latest grid time.
_BAND_PANEL_PHASE = 8.0
# Rows of the phase matrix handled at once when tabulating weights.
_CHUNK = 64

# hat types: left end point, interior, right end point
_L, _S, _R = 0, 1, 2


# -- quadrature core ----------------------------------------------------------

def hat_transforms(w, dt: float) -> np.ndarray:
    """Fourier transforms ``int phi(t) exp(-i w t) dt`` of the three hat shapes.

    Rows are the left half hat on ``[0, dt]``, the full hat on
    ``[-dt, dt]`` and the right half hat on ``[-dt, 0]``.
    """
    w = np.asarray(w, dtype=float)
    x = w * dt
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    h = np.where(
        small,
        dt * (0.5 - 1j * x / 6 - x**2 / 24 + 1j * x**3 / 120 + x**4 / 720),
        dt * (1.0 - 1j * xs - np.exp(-1j * xs)) / xs**2,
    )
    return np.array([h, 2.0 * h.real, np.conj(h)])


@dataclass(frozen=True)
class PlaneWaveKernel:
    """``K(tau) = sum_i a_i exp(-i w_i tau) + b_i exp(i w_i tau)``."""

    w: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __call__(self, tau) -> np.ndarray:
        ph = np.exp(-1j * np.multiply.outer(np.asarray(tau, dtype=float), self.w))
        return ph @ self.a + np.conj(ph) @ self.b

    def pair_tables(self, dt: float, n: int) -> np.ndarray:
        """``T[p, q, d + n]``: hat-pair weights at index lag ``d = j - k``, ``|d| <= n``."""
        c = hat_transforms(self.w, dt)
        ca = (self.a * c[:, None, :] * np.conj(c)[None, :, :]).reshape(9, -1).T
        cb = (self.b * np.conj(c)[:, None, :] * c[None, :, :]).reshape(9, -1).T
        pos = np.empty((n + 1, 9), dtype=complex)
        neg = np.empty((n + 1, 9), dtype=complex)
        for s in range(0, n + 1, _CHUNK):
            d = np.arange(s, min(n + 1, s + _CHUNK))
            e = np.exp(-1j * dt * np.multiply.outer(d, self.w))
            pos[d] = e @ ca + np.conj(e) @ cb
            neg[d] = np.conj(e) @ ca + e @ cb
        full = np.concatenate([neg[:0:-1], pos])  # lags -n .. n
        return full.T.reshape(3, 3, 2 * n + 1)

    def single_tables(self, dt: float, n: int) -> np.ndarray:
        """``V[q, d]`` = ``int phi_k(t') K(t_m - t') dt'`` for hat type ``q`` at lag ``d = m - k >= 0``."""
        c = hat_transforms(self.w, dt)
        out = np.empty((3, n + 1), dtype=complex)
        for s in range(0, n + 1, _CHUNK):
            d = np.arange(s, min(n + 1, s + _CHUNK))
            e = np.exp(-1j * dt * np.multiply.outer(d, self.w))
            out[:, d] = (e @ (self.a * np.conj(c)).T + np.conj(e) @ (self.b * c).T).T
        return out


def _lags(n: int) -> np.ndarray:
    return np.arange(n)[:, None] - np.arange(n)[None, :] + (n - 1)


def hat_double_series(g: np.ndarray, tables: np.ndarray) -> np.ndarray:
    """``X(t_m) = int int_{[0, t_m]^2} G K`` for every ``m`` from pair tables.

    ``tables[p, q, d + n - 1]`` with ``n = g.shape[0]`` as returned by
    ``PlaneWaveKernel.pair_tables(dt, n - 1)``.
    """
    n = g.shape[0]
    out = np.zeros(n, dtype=complex)
    if n == 1:
        return out
    lag = _lags(n)

    def tab(p, q):
        return tables[p, q][lag]  # [j, k] -> weight at lag j - k

    # interior weights everywhere; end rows and columns corrected below
    wss = tab(_S, _S)
    h = g * wss
    row = np.diagonal(np.cumsum(h, axis=1))  # sum_{k<=m} h[m, k]
    col = np.diagonal(np.cumsum(h, axis=0))  # sum_{j<=m} h[j, m]
    base = np.cumsum(row + col - np.diagonal(h))

    # corrections for row/column 0 (left half hat), excluding corners
    r0 = np.cumsum(np.concatenate([[0], g[0, 1:] * (tab(_L, _S) - wss)[0, 1:]]))
    c0 = np.cumsum(np.concatenate([[0], g[1:, 0] * (tab(_S, _L) - wss)[1:, 0]]))
    # corrections for row/column m (right half hat), 1 <= other index <= m - 1
    strict = np.tril(np.ones((n, n), dtype=bool), -1)
    strict[:, 0] = False
    rm = np.sum(np.where(strict, g * (tab(_R, _S) - wss), 0), axis=1)
    cm = np.sum(np.where(strict.T, g * (tab(_S, _R) - wss), 0), axis=0)

    m = np.arange(1, n)
    z = n - 1  # index of lag 0
    corners = (
        g[0, 0] * (tables[_L, _L, z] - tables[_S, _S, z])
        + g[m, m] * (tables[_R, _R, z] - tables[_S, _S, z])
        + g[0, m] * (tables[_L, _R, z - m] - tables[_S, _S, z - m])
        + g[m, 0] * (tables[_R, _L, z + m] - tables[_S, _S, z + m])
    )
    out[1:] = base[1:] + r0[m - 1] + c0[m - 1] + rm[1:] + cm[1:] + corners
    return out


def hat_single_series(g_row_major: np.ndarray, tables: np.ndarray) -> np.ndarray:
    """``Y(t_m) = int_0^{t_m} G(t_m, t') K(t_m - t') dt'`` for every ``m``."""
    n = g_row_major.shape[0]
    out = np.zeros(n, dtype=complex)
    lag = _lags(n) - (n - 1)  # m - k
    for m in range(1, n):
        k = np.arange(m + 1)
        types = np.full(m + 1, _S)
        types[0], types[m] = _L, _R
        out[m] = np.sum(g_row_major[m, : m + 1] * tables[types, lag[m, k]])
    return out


def _grid_index(grid: CorrelationGrid, t: float) -> int:
    m = int(round(t / grid.dt))
    if m < 0 or m >= grid.n_points:
        raise ValueError(f"time {t} lies outside the correlation grid [0, {grid.times[-1]}]")
    if abs(m * grid.dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not a grid point (dt = {grid.dt})")
    return m


def _realness(values) -> float:
    values = np.asarray(values)
    scale = np.max(np.abs(values.real), initial=0.0)
    imag = np.max(np.abs(values.imag), initial=0.0)
    if imag == 0:
        return 0.0
    return float(imag / scale) if scale > 0 else math.inf


def occupation_kernel(w, weight, c) -> PlaneWaveKernel:
    """``sum weight [cos(w tau) - i c sin(w tau)]``."""
    w, weight, c = (np.atleast_1d(np.asarray(x, dtype=float)) for x in (w, weight, c))
    return PlaneWaveKernel(w, 0.5 * (1 + c) * weight + 0j, 0.5 * (1 - c) * weight + 0j)


def correlation_kernel(w, weight, c) -> PlaneWaveKernel:
    """``sum weight [c cos(w tau) - i sin(w tau)]``."""
    w, weight, c = (np.atleast_1d(np.asarray(x, dtype=float)) for x in (w, weight, c))
    return PlaneWaveKernel(w, 0.5 * (c + 1) * weight + 0j, 0.5 * (c - 1) * weight + 0j)


def _series(grid: CorrelationGrid, kernel: PlaneWaveKernel) -> np.ndarray:
    n = grid.n_points
    if n == 1:
        return np.zeros(1, dtype=complex)
    return hat_double_series(grid.values, kernel.pair_tables(grid.dt, n - 1))


# -- mode occupation ------------------------------------------------------------

def mode_occupation(grid: CorrelationGrid, omega: float, g2: float, n0: float,
                    temperature: float | None = None, return_imag: bool = False):
    """Occupation ``n(t_m)`` of one bath mode for every grid time.

    ``coth(w / 2T)`` is taken from ``temperature`` when given and otherwise
    from the thermal initial occupation, ``2 n0 + 1``.  With ``return_imag``
    the complex series is returned so its imaginary residual can be checked.
    """
    if omega <= 0:
        raise ValueError("mode frequency must be positive")
    c = 2.0 * n0 + 1.0 if temperature is None else float(coth_factor(omega, temperature))
    n = n0 + _series(grid, occupation_kernel(omega, g2, c))
    return n if return_imag else n.real


# -- band heat ------------------------------------------------------------------

def _require_continuous(kernel: BathKernel) -> OhmicSpectralDensity:
    if kernel.is_discrete:
        raise TypeError("band heat needs a continuous spectral density")
    return kernel.spectral_density


def band_nodes(omega: float, delta: float, t_max: float):
    """Gauss-Legendre nodes on ``[omega - delta/2, omega + delta/2]``.

    One 16-point panel, split further if ``delta * t_max`` is large enough
    for the kernel to oscillate across the band.
    """
    if delta <= 0:
        raise ValueError("band width must be positive")
    lo, hi = omega - 0.5 * delta, omega + 0.5 * delta
    if lo < 0:
        raise ValueError(f"band [{lo}, {hi}] crosses omega = 0")
    panels = max(1, math.ceil(delta * t_max / _BAND_PANEL_PHASE))
    return gauss_legendre_panels(lo, hi, panels, BAND_GL_ORDER)


def band_heat_kernel(kernel: BathKernel, omega: float, delta: float,
                     t_max: float) -> PlaneWaveKernel:
    """``int_band i dC(w', tau)/dtau dw'`` as a plane-wave kernel."""
    jw = _require_continuous(kernel)
    w, dw = band_nodes(omega, delta, t_max)
    return occupation_kernel(w, w * jw(w) * dw, coth_factor(w, kernel.temperature))


def heat_band(grid: CorrelationGrid, kernel: BathKernel, omega: float, delta: float,
              return_imag: bool = False) -> np.ndarray:
    """``dQ(omega, t_m)``: heat absorbed by modes in the band, for every grid time."""
    kb = band_heat_kernel(kernel, omega, delta, float(grid.times[-1]))
    q = _series(grid, kb)
    return q if return_imag else q.real


def heat_map(grid: CorrelationGrid, kernel: BathKernel, omegas, delta: float,
             return_imag: bool = False) -> np.ndarray:
    """``dQ(omega_i, t_m)`` with shape ``(len(omegas), n_points)``."""
    return np.array([heat_band(grid, kernel, w, delta, return_imag) for w in np.atleast_1d(omegas)])


def _window_average(times, values, start: float, length: float) -> complex:
    """Mean of the piecewise-linear interpolant of ``values`` over ``[start, start + length]``."""
    stop = start + length
    if start < times[0] or stop > times[-1] + 1e-12:
        raise ValueError(
            f"averaging window [{start}, {stop}] exceeds the grid [{times[0]}, {times[-1]}]"
        )
    stop = min(stop, times[-1])
    inner = times[(times > start) & (times < stop)]
    t = np.concatenate([[start], inner, [stop]])
    v = np.interp(t, times, values.real) + 1j * np.interp(t, times, values.imag)
    return complex(np.trapezoid(v, t) / length)


def period_averaged_heat(grid: CorrelationGrid, kernel: BathKernel, omega: float, delta: float,
                         t_ss: float, return_imag: bool = False):
    """``dQ(omega)``: band heat averaged over one period ``2 pi / omega`` from ``t_ss``."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    period = 2.0 * math.pi / omega
    q = heat_band(grid, kernel, omega, delta, return_imag=True)
    avg = _window_average(grid.times, q, t_ss, period)
    return avg if return_imag else avg.real


# -- totals ---------------------------------------------------------------------

def _full_tables(grid: CorrelationGrid, kernel: BathKernel, heat: bool, pair: bool):
    """Hat tables for the whole spectral density, checked against a refined rule."""
    n = grid.n_points - 1
    t_max = float(grid.times[-1]) + 2.0 * grid.dt

    def fn(w, jw):
        c = coth_factor(w, kernel.temperature)
        k = occupation_kernel(w, w * jw, c) if heat else correlation_kernel(w, jw, c)
        return k.pair_tables(grid.dt, n) if pair else k.single_tables(grid.dt, n)

    return kernel._checked(fn, t_max)


def bath_heat_series(grid: CorrelationGrid, kernel: BathKernel, return_imag: bool = False):
    """``dQ_B(t_m) = i int int G(t', t'') dC(t' - t'')/dt'`` for every grid time."""
    if kernel.is_trivial or grid.n_points == 1:
        z = np.zeros(grid.n_points, dtype=complex)
        return z if return_imag else z.real
    q = hat_double_series(grid.values, _full_tables(grid, kernel, heat=True, pair=True))
    return q if return_imag else q.real


def total_bath_heat(grid: CorrelationGrid, kernel: BathKernel, t_ss: float,
                    return_imag: bool = False):
    """Total heat absorbed by the bath up to ``t_ss``."""
    m = _grid_index(grid, t_ss)
    q = bath_heat_series(grid.truncated(m + 1), kernel, return_imag=True)[m]
    return complex(q) if return_imag else float(q.real)


def interaction_energy_series(grid: CorrelationGrid, kernel: BathKernel) -> np.ndarray:
    """``<H_I(t_m)> = 2 Im int_0^{t_m} G(t_m, t') C(t_m - t') dt'`` for every ``m``."""
    n = grid.n_points
    if kernel.is_trivial or n == 1:
        return np.zeros(n)
    y = hat_single_series(grid.values, _full_tables(grid, kernel, heat=False, pair=False))
    return 2.0 * y.imag


def interaction_energy(grid: CorrelationGrid, kernel: BathKernel, t_ss: float) -> float:
    """Interaction energy at ``t_ss`` (zero initially for a product state)."""
    m = _grid_index(grid, t_ss)
    return float(interaction_energy_series(grid.truncated(m + 1), kernel)[m])


def system_heat(traj: Trajectory, t_ss: float | None = None) -> float:
    """``Tr[H_S rho_S(t_ss)] - Tr[H_S rho_S(0)]`` with instantaneous ``H_S``."""
    e = traj.energy
    if t_ss is None:
        return float(e[-1] - e[0])
    dt = traj.times[1] - traj.times[0]
    m = int(round(t_ss / dt))
    if not 0 <= m < len(e):
        raise ValueError(f"t_ss = {t_ss} outside the trajectory")
    return float(e[m] - e[0])


def detect_steady_state(traj: Trajectory, window: float = 5.0, tol: float = 1e-5) -> float | None:
    """First grid time after which ``rho_S`` moves by less than ``tol`` (max-norm) for ``window``.

    Returns ``None`` if the trajectory never settles within its length.
    """
    times, states = traj.times, traj.states
    dt = times[1] - times[0]
    w = max(1, int(math.ceil(window / dt - 1e-9)))
    flat = states.reshape(len(times), -1)
    for j in range(len(times) - w):
        if np.max(np.abs(flat[j : j + w + 1] - flat[j])) < tol:
            return float(times[j])
    return None


# -- weak-coupling analytics ------------------------------------------------------

@dataclass(frozen=True)
class WeakCouplingPrediction:
    """Closed-form weak-coupling estimates.

    ``p`` is the weight of ``|0><0|`` in the initial spin state
    ``p |0><0| + (1 - p) |1><1|``.  ``T_star`` is ``nan`` when undefined, with
    the reason in ``T_star_flag``.  ``dQ_B_approx`` is the half-reorganisation
    form ``E_r / 2 - dQ_S_G``; ``dQ_B_full_Er`` keeps the whole reorganisation
    energy, ``E_r - dQ_S_G``, which is what the numerics approach at weak
    coupling (the bath relaxes to the displaced equilibrium around the spin).
    """

    E_r: float
    omega_tilde: float
    dQ_S_G: float
    dQ_B_approx: float
    T_star: float
    T_star_flag: str
    p: float
    dQ_B_full_Er: float = math.nan


def weak_coupling_predictions(alpha: float, omega_c: float, epsilon: float, omega: float,
                              temperature: float, p: float = 1.0) -> WeakCouplingPrediction:
    """Reorganisation energy, Gibbs-state system heat, bath heat and crossover temperature."""
    omega_t = math.hypot(omega, epsilon)
    if omega_t <= 0:
        raise ValueError("generalised Rabi frequency must be positive")
    if not 0 <= p <= 1:
        raise ValueError("mixture parameter p must lie in [0, 1]")
    e_r = alpha * omega_c
    polar = 2.0 * p - 1.0
    gibbs = -0.5 * omega_t * (math.tanh(omega_t / (2.0 * temperature)) if temperature > 0 else 1.0)
    dq_s = gibbs + 0.5 * epsilon * polar
    dq_b = 0.5 * e_r - dq_s
    arg = epsilon * polar / omega_t
    if arg == 0:
        t_star, flag = math.nan, "no crossover: tanh^-1 argument is 0"
    elif abs(arg) >= 1:
        t_star, flag = math.nan, f"no crossover: tanh^-1 argument {arg:.6g} outside (-1, 1)"
    elif arg < 0:
        t_star, flag = math.nan, "no crossover: negative tanh^-1 argument"
    else:
        t_star, flag = omega_t / (2.0 * math.atanh(arg)), "ok"
    return WeakCouplingPrediction(e_r, omega_t, dq_s, dq_b, t_star, flag, p, e_r - dq_s)


# -- records and emitters -------------------------------------------------------------

@dataclass
class HeatRecord:
    """All heat observables of one run."""

    omegas: np.ndarray
    delta: float
    times: np.ndarray
    dQ_of_omega_t: np.ndarray
    dQ_avg: np.ndarray
    dQ_B: float
    dQ_I: float
    dQ_S: float
    t_ss: float
    metadata: dict = field(default_factory=dict)

    @property
    def conservation_residual(self) -> float:
        return self.dQ_B + self.dQ_I + self.dQ_S

    @property
    def relative_conservation_residual(self) -> float:
        scale = max(abs(self.dQ_B), abs(self.dQ_S))
        return abs(self.conservation_residual) / scale if scale > 0 else 0.0

    def summary(self) -> dict:
        return {
            "dQ_B": self.dQ_B,
            "dQ_I": self.dQ_I,
            "dQ_S": self.dQ_S,
            "conservation_residual": self.conservation_residual,
            "relative_conservation_residual": self.relative_conservation_residual,
            "t_ss": self.t_ss,
            "delta": self.delta,
            **self.metadata,
        }


def heat_record(grid: CorrelationGrid, traj: Trajectory, kernel: BathKernel, omegas,
                delta: float, t_ss: float, averaged: bool = True) -> HeatRecord:
    """Evaluate band heats, their period averages and the three totals at ``t_ss``.

    A band whose period does not fit between ``t_ss`` and the end of the grid
    is averaged over the last full period instead (counted in the metadata);
    bands with a period longer than the whole grid get ``nan``.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    m = _grid_index(grid, t_ss)
    qmap = heat_map(grid, kernel, omegas, delta, return_imag=True)
    avg = np.full(omegas.size, np.nan, dtype=complex)
    shifted = 0
    if averaged:
        t_end = grid.times[-1]
        for i, w in enumerate(omegas):
            period = 2.0 * math.pi / w
            start = t_ss
            if start + period > t_end + 1e-12:
                # stationary already, so the last full period serves as well
                start = t_end - period
                shifted += 1
            if start >= 0:
                avg[i] = _window_average(grid.times, qmap[i], start, period)
    qb = total_bath_heat(grid, kernel, t_ss, return_imag=True)
    qi = interaction_energy(grid, kernel, t_ss)
    qs = system_heat(traj, t_ss)
    finite = avg[np.isfinite(avg)]
    meta = {
        "imag_residual_band": _realness(qmap),
        "imag_residual_avg": _realness(finite) if finite.size else 0.0,
        "imag_residual_dQ_B": abs(qb.imag) / abs(qb.real) if qb.real else 0.0,
        "grid_hermitian_residual": grid.hermitian_residual(),
        "t_ss_index": m,
        "averaging_windows_shifted": shifted,
    }
    return HeatRecord(omegas, delta, grid.times, qmap.real, avg.real, qb.real, qi, qs, t_ss, meta)


def write_heat_table(path, omegas, dq, delta: float) -> None:
    """``omega, dQ, dQ_per_delta`` rows."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["omega", "dQ", "dQ_per_delta"])
        for om, q in zip(omegas, dq):
            w.writerow([repr(float(om)), repr(float(q)), repr(float(q / delta))])


def write_heat_map(path, times, omegas, dq_map, delta: float, stride: int = 1) -> None:
    """Long format ``t, omega, dQ, dQ_per_delta``; ``stride`` thins the time axis."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "omega", "dQ", "dQ_per_delta"])
        for m in range(0, len(times), stride):
            for i, om in enumerate(omegas):
                q = dq_map[i, m]
                w.writerow([repr(float(times[m])), repr(float(om)), repr(float(q)),
                            repr(float(q / delta))])


def write_summary(path, record: HeatRecord, extra: dict | None = None) -> None:
    data = record.summary()
    if extra:
        data.update(extra)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=float)
        f.write("\n")
