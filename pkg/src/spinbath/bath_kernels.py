"""Bosonic bath: spectral densities, correlation kernels and influence coefficients.

All frequency integrals are reduced to weighted sums over a discrete
"measure" ``(omega, weight)`` where ``weight ~ J(omega) d omega``.  For a
continuous spectral density the measure is a composite Gauss-Legendre rule on
``[0, omega_max]``; for a set of discrete modes it is simply
``(omega_q, g_q**2)``, which makes every kernel below exact for few-mode
baths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_GL_PANEL_ORDER = 20
# Oscillation phase (omega * t) allowed across one panel before refining.
_PANEL_PHASE = 8.0


class QuadratureError(RuntimeError):
    """A frequency quadrature failed its refinement check."""


@dataclass(frozen=True)
class OhmicSpectralDensity:
    """``J(w) = 2 alpha w exp(-w / omega_c)``."""

    alpha: float
    omega_c: float
    form: str = field(default="ohmic-exponential", init=False)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.omega_c <= 0:
            raise ValueError("omega_c must be positive")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        if np.any(omega < 0):
            raise ValueError("spectral density is defined for omega >= 0 only")
        return 2.0 * self.alpha * omega * np.exp(-omega / self.omega_c)

    @property
    def default_omega_max(self) -> float:
        return 50.0 * self.omega_c

    def reorganisation_integral(self) -> float:
        """``int_0^inf J(w) / w dw``."""
        return 2.0 * self.alpha * self.omega_c


@dataclass(frozen=True)
class DiscreteModes:
    """A finite set of modes, ``J(w) = sum_q g_q**2 delta(w - w_q)``."""

    frequencies: tuple
    couplings: tuple
    form: str = field(default="discrete", init=False)

    def __post_init__(self):
        object.__setattr__(self, "frequencies", tuple(float(w) for w in self.frequencies))
        object.__setattr__(self, "couplings", tuple(float(g) for g in self.couplings))
        if len(self.frequencies) != len(self.couplings):
            raise ValueError("need one coupling per mode frequency")
        if any(w <= 0 for w in self.frequencies):
            raise ValueError("mode frequencies must be positive")

    @property
    def alpha(self) -> float:
        # Zero-coupling detection only.
        return float(sum(g * g for g in self.couplings))

    def reorganisation_integral(self) -> float:
        return float(sum(g * g / w for w, g in zip(self.frequencies, self.couplings)))


def spectral_density(omega, alpha: float, omega_c: float):
    """Ohmic spectral density with exponential cutoff."""
    return OhmicSpectralDensity(alpha, omega_c)(omega)


def coth_factor(omega, temperature: float):
    """``coth(omega / 2T)``, equal to ``2 n(omega, T) + 1``; 1 at ``T = 0``."""
    omega = np.asarray(omega, dtype=float)
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        return np.ones_like(omega)
    return 1.0 / np.tanh(omega / (2.0 * temperature))


def thermal_occupation(omega, temperature: float):
    """Bose-Einstein occupation ``1 / (exp(omega / T) - 1)``."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("thermal occupation needs omega > 0")
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        return np.zeros_like(omega)
    return 1.0 / np.expm1(omega / temperature)


def gauss_legendre_panels(a: float, b: float, n_panels: int, order: int = _GL_PANEL_ORDER):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class InfluenceCoefficients:
    """Discretised influence coefficients ``eta[dk]`` for ``dk = 0..K``.

    ``eta[dk]`` is the bath autocorrelation integrated over a pair of time
    steps ``dk`` apart (the ``dk = 0`` entry over the time-ordered half of one
    step).  Separations beyond ``K`` are treated as zero.
    """

    eta: np.ndarray
    dt: float
    memory: int

    def __getitem__(self, dk: int) -> complex:
        if dk < 0:
            raise IndexError("separation must be non-negative")
        return complex(self.eta[dk]) if dk <= self.memory else 0j


@dataclass(frozen=True)
class BathKernel:
    """Spectral density plus temperature; evaluates correlation kernels.

    ``omega_max`` and ``n_nodes`` set the base frequency quadrature; it is
    refined automatically when oscillatory kernels at long times need more
    panels.
    """

    spectral_density: OhmicSpectralDensity | DiscreteModes
    temperature: float
    omega_max: float | None = None
    n_nodes: int = 2000
    rtol: float = 1e-8

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")

    @property
    def is_discrete(self) -> bool:
        return isinstance(self.spectral_density, DiscreteModes)

    @property
    def is_trivial(self) -> bool:
        return self.spectral_density.alpha == 0

    # -- pointwise kernels -------------------------------------------------

    def _jw(self, omega):
        if self.is_discrete:
            raise TypeError("pointwise J(w) is undefined for discrete modes")
        return self.spectral_density(omega)

    def correlation_kernel(self, omega, t):
        """``C(w, t) = J(w) [cos(w t) coth(w / 2T) - i sin(w t)]``."""
        omega, t = np.broadcast_arrays(np.asarray(omega, float), np.asarray(t, float))
        if np.any(omega <= 0):
            raise ValueError("kernel needs omega > 0")
        jw = self._jw(omega)
        return jw * (np.cos(omega * t) * coth_factor(omega, self.temperature) - 1j * np.sin(omega * t))

    def kernel_time_derivative(self, omega, t):
        """``d/dt C(w, t) = J(w) [-w sin(w t) coth(w / 2T) - i w cos(w t)]``."""
        omega, t = np.broadcast_arrays(np.asarray(omega, float), np.asarray(t, float))
        if np.any(omega <= 0):
            raise ValueError("kernel needs omega > 0")
        jw = self._jw(omega)
        return jw * omega * (
            -np.sin(omega * t) * coth_factor(omega, self.temperature) - 1j * np.cos(omega * t)
        )

    # -- frequency measure -------------------------------------------------

    def measure(self, t_max: float = 0.0, refine: int = 1):
        """Nodes ``w`` and weights ``J(w) dw`` good for kernels up to ``|t| = t_max``."""
        sd = self.spectral_density
        if self.is_discrete:
            w = np.array(sd.frequencies)
            return w, np.array(sd.couplings) ** 2
        omega_max = self.omega_max or sd.default_omega_max
        base = max(1, self.n_nodes // _GL_PANEL_ORDER)
        needed = math.ceil(omega_max * abs(t_max) / _PANEL_PHASE)
        n_panels = max(base, needed) * refine
        w, dw = gauss_legendre_panels(0.0, omega_max, n_panels)
        return w, sd(w) * dw

    def _checked(self, fn, t_max: float):
        """Evaluate ``fn(nodes, weights)`` and confirm it against a 2x refined rule."""
        w, jw = self.measure(t_max)
        value = fn(w, jw)
        if self.is_discrete:
            return value
        w2, jw2 = self.measure(t_max, refine=2)
        check = fn(w2, jw2)
        scale = max(np.max(np.abs(check)), np.finfo(float).tiny)
        err = np.max(np.abs(value - check)) / scale
        if err > self.rtol:
            raise QuadratureError(
                f"frequency quadrature not converged: relative change {err:.2e} on refinement"
            )
        return check

    # -- integrated kernels ------------------------------------------------

    def autocorrelation(self, t):
        """``C(t) = <B(t) B(0)> = int_0^inf C(w, t) dw``."""
        t = np.asarray(t, dtype=float)
        if self.is_trivial:
            return np.zeros(t.shape, dtype=complex)

        def fn(w, jw):
            c = coth_factor(w, self.temperature)
            phase = np.multiply.outer(t, w)
            return (np.cos(phase) * c - 1j * np.sin(phase)) @ jw

        t_max = float(np.max(np.abs(t))) if t.size else 0.0
        return self._checked(fn, t_max)

    def autocorrelation_derivative(self, t):
        """``d/dt C(t) = int_0^inf C_t(w, t) dw``."""
        t = np.asarray(t, dtype=float)
        if self.is_trivial:
            return np.zeros(t.shape, dtype=complex)

        def fn(w, jw):
            c = coth_factor(w, self.temperature)
            phase = np.multiply.outer(t, w)
            return (-np.sin(phase) * c - 1j * np.cos(phase)) @ (w * jw)

        t_max = float(np.max(np.abs(t))) if t.size else 0.0
        return self._checked(fn, t_max)

    def influence_eta(self, dt: float, memory: int) -> InfluenceCoefficients:
        """Step-integrated autocorrelation for separations ``0..memory``.

        For separation ``k >= 1`` the double time integral over two steps is
        done analytically per frequency::

            int int C(w, t'-t'') = J(w) (2 sin(w dt/2) / w)**2
                                   [coth cos(w k dt) - i sin(w k dt)]

        and the same-step term keeps only ``t'' < t'``.
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        if memory < 1:
            raise ValueError("memory cutoff K must be >= 1")
        if self.is_trivial:
            return InfluenceCoefficients(np.zeros(memory + 1, dtype=complex), dt, memory)
        k = np.arange(1, memory + 1)

        def fn(w, jw):
            c = coth_factor(w, self.temperature)
            wdt = w * dt
            eta0 = (c * (1.0 - np.cos(wdt)) - 1j * (wdt - np.sin(wdt))) / w**2
            window = (2.0 * np.sin(0.5 * wdt) / w) ** 2
            phase = np.multiply.outer(k, wdt)
            rest = (np.cos(phase) * c - 1j * np.sin(phase)) * window
            return np.concatenate([[eta0 @ jw], rest @ jw])

        eta = self._checked(fn, (memory + 1) * dt)
        return InfluenceCoefficients(np.asarray(eta, dtype=complex), dt, memory)

    def reorganisation_energy(self) -> float:
        """``int J(w) / w dw`` evaluated in closed form for the built-in densities."""
        return self.spectral_density.reorganisation_integral()
