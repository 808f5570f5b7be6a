"""Alternating optimization, baselines, feasibility programs and sweeps."""

import numpy as np
import pytest

from conftest import make_scenario, random_design
from netisac import model, orchestrator
from netisac.beamforming import BeamformingOptions, SensingInfeasibleError
from netisac.orchestrator import (
    METHODS,
    SolveOptions,
    baseline_isotropic,
    baseline_straight_flight,
    gamma_sweep,
    initial_design,
    isotropic_feasibility_limit,
    max_min_illumination,
    solve,
)
from netisac.trajectory import TrajectoryOptions


def fast_options(max_outer=3):
    return SolveOptions(
        max_outer=max_outer,
        beamforming=BeamformingOptions(max_iterations=4),
        trajectory=TrajectoryOptions(max_iterations=6),
    )


# -- feasibility programs -------------------------------------------------------


def test_max_min_single_point_closed_form():
    scn = make_scenario(
        gbs_positions=[[0.0, 0.0]],
        uav_initial=[[50.0, 200.0]],
        uav_final=[[350.0, 200.0]],
        uav_altitudes=[80.0],
        sensing_points=[[120.0, 50.0]],
        p_max=2.0,
    )
    d2 = 120.0**2 + 50.0**2 + scn.sensing_altitude**2
    expected = scn.num_antennas * scn.p_max / d2
    assert max_min_illumination(scn) == pytest.approx(expected, rel=1e-5)


def test_max_min_homogeneous_in_power():
    scn = make_scenario()
    base = max_min_illumination(scn)
    double = max_min_illumination(scn.with_updates(p_max=2.0 * scn.p_max))
    assert double == pytest.approx(2.0 * base, rel=1e-4)
    assert max_min_illumination(scn.with_updates(p_max=1e-6)) == pytest.approx(1e-6 * base, rel=1e-4)


def test_max_min_covariances_achieve_the_value():
    scn = make_scenario()
    value, covs = max_min_illumination(scn, return_covariances=True)
    assert value > 0.0
    design = model.Design.zeros(scn)
    for n in range(scn.num_slots):
        design.r_cov[:, n] = covs
    zeta = model.illumination_matrix(design, scn)
    assert float(zeta.min()) >= value * (1.0 - 1e-5)
    powers = np.einsum("mnaa->mn", design.transmit_covariances()).real
    assert float(powers.max()) <= scn.p_max * (1.0 + 1e-6)


def test_isotropic_limit_closed_form():
    scn = make_scenario()
    points = np.column_stack([scn.sensing_points, np.full(scn.num_sensing, scn.sensing_altitude)])
    stations = np.column_stack([scn.gbs_positions, np.zeros(scn.num_gbs)])
    d2 = ((points[None, :, :] - stations[:, None, :]) ** 2).sum(axis=2)
    expected = float((scn.p_max / d2).sum(axis=0).min())
    assert isotropic_feasibility_limit(scn) == pytest.approx(expected, rel=1e-12)


def test_isotropic_limit_below_max_min():
    scn = make_scenario()
    assert isotropic_feasibility_limit(scn) < max_min_illumination(scn)


# -- initial design ----------------------------------------------------------------


def test_initial_design_feasible_and_straight():
    scn = make_scenario(gamma=3e-5)
    design = initial_design(scn)
    np.testing.assert_allclose(design.trajectories, model.straight_line_trajectories(scn), atol=1e-12)
    report = model.check_constraints(design, scn)
    assert report.feasible, report.describe()
    np.testing.assert_array_equal(design.association.sum(axis=0), 1)


def test_initial_design_collision_on_straight_paths_rejected():
    scn = make_scenario(
        gbs_positions=[[0.0, 0.0]],
        uav_initial=[[0.0, 0.0], [50.0, -50.0]],
        uav_final=[[100.0, 0.0], [50.0, 50.0]],
        uav_altitudes=[80.0, 80.0],
        num_slots=6,
        slot_duration=4.0,
        v_max=10.0,
        d_min=30.0,
        gamma=0.0,
    )
    with pytest.raises(ValueError, match="collision"):
        initial_design(scn)


# -- alternating optimization ---------------------------------------------------------


def test_solve_monotone_stages_and_feasible_output():
    scn = make_scenario(gamma=2e-5)
    result = solve(scn, fast_options())
    trace = result.trace
    values = [trace.initial_objective] + [
        stage.objective for outer in trace.outer for stage in outer.stages
    ]
    diffs = np.diff(np.asarray(values))
    assert np.all(diffs >= -1e-5), values
    assert trace.final_objective == pytest.approx(values[-1], rel=1e-12)
    assert result.average_sum_rate == pytest.approx(trace.final_objective / scn.num_slots, rel=1e-12)
    report = model.check_constraints(result.design, scn)
    assert report.feasible, report.describe()
    assert trace.wall_seconds > 0.0
    names = {stage.name for outer in trace.outer for stage in outer.stages}
    assert names == {"association", "beamforming", "trajectory"}


def test_solve_final_objective_matches_design():
    scn = make_scenario(gamma=2e-5)
    result = solve(scn, fast_options(max_outer=2))
    assert model.total_rate(result.design, scn) == pytest.approx(
        result.trace.final_objective, rel=1e-9
    )


def test_solve_rejects_unknown_method():
    scn = make_scenario()
    with pytest.raises(ValueError, match="method"):
        solve(scn, method="zigzag")


def test_straight_baseline_keeps_paths():
    scn = make_scenario(gamma=2e-5)
    result = baseline_straight_flight(scn, fast_options())
    np.testing.assert_allclose(
        result.design.trajectories, model.straight_line_trajectories(scn), atol=1e-12
    )
    names = {stage.name for outer in result.trace.outer for stage in outer.stages}
    assert "trajectory" not in names
    assert result.trace.method == "straight"


def test_isotropic_baseline_scalar_covariances():
    scn = make_scenario(gamma=2e-5)
    result = baseline_isotropic(scn, fast_options())
    x = result.design.transmit_covariances()
    na = scn.num_antennas
    for l in range(scn.num_gbs):
        for n in range(scn.num_slots):
            block = x[l, n]
            scaled = float(np.real(np.trace(block))) / na * np.eye(na)
            np.testing.assert_allclose(block, scaled, atol=1e-9)
    report = model.check_constraints(result.design, scn)
    assert report.feasible, report.describe()


def test_method_ordering_on_converged_solves():
    scn = make_scenario(gamma=2e-5)
    options = SolveOptions(
        max_outer=8,
        beamforming=BeamformingOptions(max_iterations=8),
        trajectory=TrajectoryOptions(max_iterations=10),
    )
    proposed = solve(scn, options).average_sum_rate
    straight = baseline_straight_flight(scn, options).average_sum_rate
    isotropic = baseline_isotropic(scn, options).average_sum_rate
    assert proposed >= straight - 1e-5
    assert straight >= isotropic - 1e-5


def test_solve_infeasible_gamma_raises():
    scn = make_scenario(gamma=1.0)
    with pytest.raises(SensingInfeasibleError):
        solve(scn, fast_options())


def test_trace_jsonable_shape():
    scn = make_scenario(gamma=2e-5)
    result = solve(scn, fast_options(max_outer=1))
    payload = result.trace.to_jsonable()
    assert payload["method"] == "proposed"
    assert payload["gamma"] == scn.gamma
    assert isinstance(payload["outer"], list) and payload["outer"]
    first = payload["outer"][0]["stages"][0]
    assert {"name", "objective", "seconds"} <= set(first)


def test_warm_start_resumes_from_given_design():
    scn = make_scenario(gamma=2e-5)
    first = solve(scn, fast_options())
    resumed = solve(scn, fast_options(max_outer=1), initial=first.design)
    assert resumed.trace.initial_objective == pytest.approx(
        first.trace.final_objective, rel=1e-9
    )
    assert resumed.trace.final_objective >= first.trace.final_objective - 1e-6


# -- threshold sweep ---------------------------------------------------------------------


def test_gamma_sweep_orders_and_marks_feasibility():
    scn = make_scenario()
    limit = max_min_illumination(scn)
    iso_limit = isotropic_feasibility_limit(scn)
    gammas = [0.2 * iso_limit, 2.0 * limit]
    sweep = gamma_sweep(scn, gammas, options=fast_options(max_outer=1))
    assert [e.gamma for e in sweep.entries] == sorted(e.gamma for e in sweep.entries)
    below = [e for e in sweep.entries if e.gamma == pytest.approx(gammas[0])]
    above = [e for e in sweep.entries if e.gamma == pytest.approx(gammas[1])]
    assert len(below) == len(METHODS) and len(above) == len(METHODS)
    assert all(e.feasible for e in below)
    assert all(not e.feasible and e.note for e in above)
    assert all(e.average_sum_rate is None for e in above)


def test_gamma_sweep_monotone_per_method():
    scn = make_scenario()
    iso_limit = isotropic_feasibility_limit(scn)
    gammas = [0.1 * iso_limit, 0.8 * iso_limit]
    sweep = gamma_sweep(scn, gammas, options=fast_options(max_outer=2))
    for method in METHODS:
        rates = [e.average_sum_rate for e in sweep.for_method(method) if e.feasible]
        assert len(rates) == 2
        assert rates[0] >= rates[1] - 1e-3


def test_gamma_sweep_rejects_unknown_method():
    scn = make_scenario()
    with pytest.raises(ValueError, match="method"):
        gamma_sweep(scn, [1e-6], methods=("proposed", "other"))


def test_sweep_entry_gamma_dbw():
    entry = orchestrator.SweepEntry(0.01, "proposed", True, 1.0)
    assert entry.gamma_dbw == pytest.approx(-20.0, abs=1e-12)
    payload = entry.to_jsonable()
    assert payload["gamma"] == 0.01 and payload["method"] == "proposed"
