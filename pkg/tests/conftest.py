"""Shared scenario factories and random-design helpers for the test suite."""

import numpy as np

from netisac import model

KAPPA = 10.0**-4.5
NOISE = 1e-10


def make_scenario(**overrides) -> model.Scenario:
    """Two stations, two UAVs, four antennas; small enough to solve fast."""
    fields = dict(
        gbs_positions=[[0.0, 0.0], [400.0, 0.0]],
        uav_initial=[[50.0, 200.0], [350.0, 260.0]],
        uav_final=[[350.0, 200.0], [50.0, 260.0]],
        uav_altitudes=[80.0, 100.0],
        sensing_points=[[180.0, 40.0], [220.0, 40.0]],
        sensing_altitude=10.0,
        num_antennas=4,
        num_slots=4,
        slot_duration=12.0,
        p_max=1.0,
        gamma=1e-6,
        v_max=30.0,
        d_min=20.0,
        kappa=KAPPA,
        noise_power=NOISE,
    )
    fields.update(overrides)
    return model.Scenario(**fields)


def hover_scenario(**overrides) -> model.Scenario:
    """Single station, single UAV pinned at its start position."""
    fields = dict(
        gbs_positions=[[0.0, 0.0]],
        uav_initial=[[60.0, 0.0]],
        uav_final=[[60.0, 0.0]],
        uav_altitudes=[80.0],
        sensing_points=[[150.0, 0.0]],
        sensing_altitude=10.0,
        num_antennas=4,
        num_slots=3,
        slot_duration=5.0,
        p_max=3.0,
        gamma=0.0,
        v_max=20.0,
        d_min=0.0,
        kappa=KAPPA,
        noise_power=NOISE,
    )
    fields.update(overrides)
    return model.Scenario(**fields)


def random_psd(rng: np.random.Generator, n: int, trace: float = 1.0) -> np.ndarray:
    """Random complex Hermitian PSD matrix with the requested trace."""
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    x = g @ g.conj().T
    return x * (trace / float(np.real(np.trace(x))))


def nearest_association(scenario: model.Scenario, trajectories: np.ndarray) -> np.ndarray:
    """One-hot association of every UAV to its horizontally closest station."""
    assoc = np.zeros((scenario.num_gbs, scenario.num_uavs, scenario.num_slots), dtype=np.int8)
    for k in range(scenario.num_uavs):
        for n in range(scenario.num_slots):
            dists = np.linalg.norm(scenario.gbs_positions - trajectories[k, n], axis=1)
            assoc[int(np.argmin(dists)), k, n] = 1
    return assoc


def random_design(
    scenario: model.Scenario,
    rng: np.random.Generator,
    power_fraction: float = 0.9,
) -> model.Design:
    """Random PSD covariances within the power budget on straight-line paths."""
    m, k, n, na = scenario.num_gbs, scenario.num_uavs, scenario.num_slots, scenario.num_antennas
    w = np.zeros((m, k, n, na, na), dtype=complex)
    r = np.zeros((m, n, na, na), dtype=complex)
    for station in range(m):
        for slot in range(n):
            shares = rng.dirichlet(np.ones(k + 1)) * power_fraction * scenario.p_max
            for uav in range(k):
                w[station, uav, slot] = random_psd(rng, na, shares[uav])
            r[station, slot] = random_psd(rng, na, shares[k])
    traj = model.straight_line_trajectories(scenario)
    return model.Design(
        w_cov=w,
        r_cov=r,
        trajectories=traj,
        association=nearest_association(scenario, traj),
    )
