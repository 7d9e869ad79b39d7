import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import path_sum_grid
from spinbath.bath_kernels import BathKernel, OhmicSpectralDensity
from spinbath.correlations import CorrelationGrid, propagator_schedule, system_dynamics, two_time_grid
from spinbath.liouville import S_X, S_Z
from spinbath.process_tensor import PTConfig, contract_process_tensor

UP = np.diag([1.0, 0.0]).astype(complex)


@pytest.fixture(scope="module")
def closed_pt():
    k = BathKernel(OhmicSpectralDensity(0.0, 10.0), 1.0)
    return contract_process_tensor(k, PTConfig(0.1, 200, 5))


def test_closed_rabi(closed_pt):
    traj = system_dynamics(closed_pt, UP, propagator_schedule(S_X, 0.1, 200))
    assert np.max(np.abs(traj.sz + np.cos(traj.times) / 2)) < 1e-8
    assert np.allclose(traj.energy, 0.0, atol=1e-12)


def test_closed_grid_is_cosine(closed_pt):
    """With ``H = s_x`` and ``s = s_z``: ``Tr[s(t_j) s(t_k) rho]`` is ``cos(t_j - t_k)/4`` for rho=I/2."""
    g = two_time_grid(closed_pt, S_Z, np.eye(2) / 2, propagator_schedule(S_X, 0.1, 200), n_steps=60,
                      check_symmetry=True)
    t = g.times
    assert np.max(np.abs(g.values - np.cos(t[:, None] - t[None, :]) / 4)) < 1e-10
    assert g.asymmetry < 1e-12 and g.hermitian_residual() < 1e-14


def test_pure_dephasing_grid_is_constant(strong_kernel):
    pt = contract_process_tensor(strong_kernel, PTConfig(0.2, 15, 15, svd_rel_cutoff=1e-12))
    g = two_time_grid(pt, S_Z, np.array([[0.6, 0.2], [0.2, 0.4]]), propagator_schedule(np.zeros((2, 2)), 0.2, 15),
                      check_symmetry=True)
    assert np.max(np.abs(g.values - 0.25)) < 1e-10
    assert g.asymmetry < 1e-10


@pytest.mark.parametrize("n_steps", [2, 3])
def test_grid_matches_path_sums(strong_kernel, n_steps):
    dt = 0.2
    h = 0.8 * S_Z + S_X
    pt = contract_process_tensor(strong_kernel, PTConfig(dt, n_steps, n_steps))
    rho0 = np.array([[0.7, 0.1 - 0.2j], [0.1 + 0.2j, 0.3]])
    for s in (S_X, S_Z + 0.3 * S_X):
        g = two_time_grid(pt, s, rho0, propagator_schedule(h, dt, n_steps), check_symmetry=True)
        eta = strong_kernel.influence_eta(dt, n_steps)
        ref = path_sum_grid(eta, np.array([-0.5, 0.5]), h, dt, n_steps, s, rho0)
        assert np.max(np.abs(g.values - ref)) < 1e-8
        assert g.asymmetry < 1e-8


def test_grid_symmetry_with_bath(fig_kernel):
    n = 120
    pt = contract_process_tensor(fig_kernel, PTConfig(0.1, n, 10))
    g = two_time_grid(pt, S_X, UP, propagator_schedule(2 * S_Z + S_X, 0.1, n), check_symmetry=True)
    assert g.asymmetry <= 1e-6
    # diagonal is Tr[s^2 rho] = 1/4 for a spin-1/2
    assert np.allclose(np.diag(g.values), 0.25, atol=1e-6)


def test_csv_round_trip(tmp_path, closed_pt):
    g = two_time_grid(closed_pt, S_Z, UP, propagator_schedule(S_X, 0.1, 200), n_steps=6)
    g.to_csv(tmp_path / "g.csv")
    back = CorrelationGrid.from_csv(tmp_path / "g.csv")
    assert np.array_equal(back.values, g.values)
    assert back.dt == pytest.approx(0.1)
    small = g.truncated(3)
    assert small.values.shape == (3, 3) and np.array_equal(small.values, g.values[:3, :3])


def test_input_checks(closed_pt):
    with pytest.raises(ValueError):
        system_dynamics(closed_pt, UP, propagator_schedule(S_X, 0.1, 10))
    with pytest.raises(ValueError):
        system_dynamics(closed_pt, UP, propagator_schedule(S_X, 0.2, 200))
    with pytest.raises(ValueError):
        system_dynamics(closed_pt, UP, propagator_schedule(S_X, 0.1, 300), n_steps=300)
    with pytest.raises(ValueError):
        two_time_grid(closed_pt, np.array([[0, 1], [0, 0]]), UP, propagator_schedule(S_X, 0.1, 200))
    with pytest.raises(ValueError):
        propagator_schedule(np.array([[0, 1j], [1j, 0]]), 0.1, 3)


def test_time_dependent_schedule_is_second_order(closed_pt):
    """A driven closed spin converges at O(dt^2) to a tight ODE solution."""
    eps = lambda t: 2.0 * np.sin(0.7 * t)  # noqa: E731
    h = lambda t: eps(t) * S_Z + S_X  # noqa: E731
    t_end = 4.0

    def rhs(t, y):
        r = y.reshape(2, 2)
        return (-1j * (h(t) @ r - r @ h(t))).ravel()

    ref = solve_ivp(rhs, (0, t_end), UP.ravel(), rtol=1e-12, atol=1e-13).y[:, -1].reshape(2, 2)
    errs = []
    for dt in (0.1, 0.05):
        n = int(round(t_end / dt))
        k = BathKernel(OhmicSpectralDensity(0.0, 10.0), 1.0)
        pt = contract_process_tensor(k, PTConfig(dt, n, 2))
        traj = system_dynamics(pt, UP, propagator_schedule(h, dt, n))
        errs.append(np.max(np.abs(traj.states[-1] - ref)))
        assert traj.energy[0] == pytest.approx(-0.0 * 0.5 + 0.0)
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_trajectory_csv(tmp_path, closed_pt):
    traj = system_dynamics(closed_pt, UP, propagator_schedule(S_X, 0.1, 200), n_steps=5)
    traj.to_csv(tmp_path / "t.csv")
    data = np.genfromtxt(tmp_path / "t.csv", delimiter=",", names=True)
    assert list(data.dtype.names) == ["t", "sz", "sx", "energy"]
    assert np.allclose(data["sz"], traj.sz, rtol=0, atol=0)
