"""End-to-end acceptance checks.

Each test covers one numbered criterion at its stated tolerance and
prints a single PASS line (visible with pytest -s) once the assertions
hold. Budgets are asserted with wall-clock time.
"""

import itertools
import time

import numpy as np
import pytest

from conftest import make_scenario, nearest_association, random_design, random_psd
from netisac import association, cli, model, orchestrator
from netisac.beamforming import CovarianceSet, rank_one_reconstruct, surrogate_coefficients, surrogate_rate
from netisac.conic import ConicProblem, embed_hermitian, extract_hermitian
from netisac.trajectory import power_series_slope, received_power_series, taylor_coefficients


def _report(number: int, detail: str, elapsed: float, budget: float):
    assert elapsed <= budget, f"criterion {number} took {elapsed:.1f} s (budget {budget:.0f} s)"
    print(f"PASS criterion {number}: {detail} ({elapsed:.1f} s)")


def _desk_scenario() -> model.Scenario:
    # bundled deployment reduced to ten slots; slot length stretched so the
    # crossing stays reachable
    scn = cli.load_scenario(cli.bundled_scenario_path())
    return scn.with_updates(num_slots=10, slot_duration=4.0)


def test_criterion_1_surrogate_bound():
    start = time.perf_counter()
    scn = make_scenario()  # two stations, two UAVs, four antennas
    rng = np.random.default_rng(2024)
    traj = model.straight_line_trajectories(scn)
    assoc = nearest_association(scn, traj)
    serving = np.argmax(assoc, axis=0)
    expansion_design = random_design(scn, rng)
    expansion = CovarianceSet(w=expansion_design.w_cov, r=expansion_design.r_cov)

    coeff_table = {}
    for k in range(scn.num_uavs):
        for n in range(scn.num_slots):
            m = int(serving[k, n])
            cf = surrogate_coefficients(scn, traj, expansion, m, k, n)
            coeff_table[k, n] = (m, cf)
            exact = model.rate(expansion_design, scn, m, k, n)
            tight = surrogate_rate(expansion, expansion, cf, scn, m, k, n)
            assert abs(tight - exact) <= 1e-9

    worst_gap = -np.inf
    pairs = list(coeff_table)
    for trial in range(1000):
        frac = float(rng.uniform(0.05, 1.0))
        cand_design = random_design(scn, rng, power_fraction=frac)
        candidate = CovarianceSet(w=cand_design.w_cov, r=cand_design.r_cov)
        k, n = pairs[trial % len(pairs)]
        m, cf = coeff_table[k, n]
        bound = surrogate_rate(candidate, expansion, cf, scn, m, k, n)
        exact = model.rate(cand_design, scn, m, k, n)
        worst_gap = max(worst_gap, bound - exact)
        assert bound <= exact + 1e-8
    _report(1, f"surrogate bound held on 1000 candidates, worst gap {worst_gap:.2e}", time.perf_counter() - start, 10.0)


def test_criterion_2_gradient_fidelity():
    start = time.perf_counter()
    scn = make_scenario()
    rng = np.random.default_rng(777)
    step = 1e-3
    checked = 0
    worst_rel = 0.0
    while checked < 200:
        design = random_design(scn, rng, power_fraction=float(rng.uniform(0.3, 1.0)))
        k = int(rng.integers(scn.num_uavs))
        n = int(rng.integers(scn.num_slots))
        m = int(design.associated_gbs()[k, n])
        q = rng.uniform([-100.0, -100.0], [500.0, 400.0])
        expansion = taylor_coefficients(scn, design.w_cov[:, :, n], design.r_cov[:, n], q, m, k)

        def exact(point):
            probe = design.copy()
            probe.trajectories[k, n] = point
            return model.rate(probe, scn, m, k, n)

        for axis in range(2):
            dq = np.zeros(2)
            dq[axis] = step
            fd = (exact(q + dq) - exact(q - dq)) / (2.0 * step)
            err = abs(expansion.gradient[axis] - fd)
            assert err <= max(1e-4 * abs(fd), 1e-6), (err, fd)
            if abs(fd) > 1e-6:
                worst_rel = max(worst_rel, err / abs(fd))
        checked += 1
    _report(2, f"gradients matched {checked} configurations, worst relative error {worst_rel:.2e}", time.perf_counter() - start, 30.0)


def test_criterion_3_cosine_series_identity():
    start = time.perf_counter()
    rng = np.random.default_rng(31415)
    two_pi = 2.0 * np.pi
    for _ in range(1000):
        na = int(rng.integers(2, 7))
        ratio = float(rng.uniform(0.25, 1.0))
        u = rng.uniform(-200.0, 200.0, size=2)
        q = u + rng.uniform(5.0, 250.0) * np.array(
            [np.cos(t := rng.uniform(0.0, two_pi)), np.sin(t)]
        )
        h_alt = float(rng.uniform(30.0, 150.0))
        cov = random_psd(rng, na, float(rng.uniform(0.1, 5.0)))

        dist = float(np.hypot(np.linalg.norm(q - u), h_alt))
        a = model.steering_vector(h_alt / dist, na, ratio)
        direct = float(np.real(a.conj() @ cov @ a))
        series = received_power_series(cov, q, u, h_alt, ratio)
        assert series == pytest.approx(direct, rel=1e-9)

        # slope series against the chain rule through the steering vector
        d_eta_db = 2.0 * float(np.real(a.conj() @ cov @ (1j * np.arange(na) * a)))
        db_dq = -two_pi * ratio * h_alt / dist**3
        grad_direct = d_eta_db * db_dq * (q - u)
        grad_series = power_series_slope(cov, q, u, h_alt, ratio) * (q - u)
        np.testing.assert_allclose(grad_series, grad_direct, rtol=1e-9, atol=1e-18)
    _report(3, "series and direct quadratic forms agreed on 1000 draws", time.perf_counter() - start, 60.0)


def test_criterion_4_reconstruction_conservation():
    start = time.perf_counter()
    scn = make_scenario(
        num_slots=1,
        uav_final=[[50.0, 200.0], [350.0, 260.0]],
        v_max=0.0,
        gamma=0.0,
    )
    rng = np.random.default_rng(828)
    p_max = scn.p_max
    for _ in range(200):
        design = random_design(scn, rng, power_fraction=float(rng.uniform(0.4, 1.0)))
        design.trajectories[:, 0, :] = rng.uniform([-100.0, -100.0], [500.0, 400.0], size=(2, 2))
        serving = design.associated_gbs()
        channels = np.stack(
            [
                model.channel_vector(scn, int(serving[k, 0]), design.trajectories[k, 0], float(scn.uav_altitudes[k]))
                for k in range(scn.num_uavs)
            ]
        )
        w_bar, r_bar = rank_one_reconstruct(design.w_cov[:, :, 0], design.r_cov[:, 0], channels, p_max)

        for l in range(scn.num_gbs):
            before = design.w_cov[l, :, 0].sum(axis=0) + design.r_cov[l, 0]
            after = w_bar[l].sum(axis=0) + r_bar[l]
            assert float(np.linalg.norm(after - before)) <= 1e-10 * p_max
            assert float(np.linalg.eigvalsh(r_bar[l])[0]) >= -1e-8 * p_max
            for i in range(scn.num_uavs):
                eigs = np.linalg.eigvalsh(w_bar[l, i])
                assert eigs[-2] <= 1e-9 * max(eigs[-1], 1e-30)

        rebuilt = design.copy()
        rebuilt.w_cov[:, :, 0] = w_bar
        rebuilt.r_cov[:, 0] = r_bar
        for k in range(scn.num_uavs):
            m = int(serving[k, 0])
            before = model.rate(design, scn, m, k, 0)
            after = model.rate(rebuilt, scn, m, k, 0)
            assert after == pytest.approx(before, rel=1e-7)
        np.testing.assert_allclose(
            model.illumination_matrix(rebuilt, scn),
            model.illumination_matrix(design, scn),
            rtol=1e-7,
        )
    _report(4, "conservation held on 200 random covariance draws", time.perf_counter() - start, 60.0)


def test_criterion_5_association_optimality():
    start = time.perf_counter()
    scn = make_scenario(
        gbs_positions=[[0.0, 0.0], [400.0, 0.0], [200.0, 350.0]],
        num_slots=3,
        slot_duration=16.0,
    )
    rng = np.random.default_rng(99)
    combos = list(itertools.product(range(scn.num_gbs), repeat=scn.num_uavs))
    for _ in range(100):
        design = random_design(scn, rng, power_fraction=float(rng.uniform(0.3, 1.0)))
        design.trajectories[:] = rng.uniform([-50.0, -50.0], [450.0, 400.0], size=design.trajectories.shape)
        rates = model.rate_matrix(design, scn)
        assoc = association.optimize_association(design, scn)
        chosen = np.argmax(assoc, axis=0)
        for n in range(scn.num_slots):
            mine = sum(rates[chosen[k, n], k, n] for k in range(scn.num_uavs))
            best = max(sum(rates[m, k, n] for k, m in enumerate(combo)) for combo in combos)
            assert mine == best  # bitwise: same summands in the same order
    _report(5, "matched exhaustive enumeration on 100 instances", time.perf_counter() - start, 60.0)


def test_criterion_6_ao_monotonicity_desk_scale():
    start = time.perf_counter()
    scn = _desk_scenario()
    result = orchestrator.solve(scn)
    trace = result.trace
    values = [trace.initial_objective] + [
        stage.objective for outer in trace.outer for stage in outer.stages
    ]
    drops = np.diff(np.asarray(values))
    assert np.all(drops >= -1e-5), f"objective fell by {-drops.min():.3e}"
    report = model.check_constraints(result.design, scn)
    assert report.feasible, report.describe()
    _report(
        6,
        f"trace of {len(values)} stage objectives non-decreasing, final {trace.final_objective:.4f} feasible",
        time.perf_counter() - start,
        300.0,
    )


def test_criterion_7_threshold_sweep_desk_scale():
    start = time.perf_counter()
    scn = _desk_scenario()
    gammas_dbw = [-25.0, -20.0, -15.0, -10.0]
    gammas = [model.dbw_to_watts(g) for g in gammas_dbw]
    sweep = orchestrator.gamma_sweep(scn, gammas)

    iso_limit = orchestrator.isotropic_feasibility_limit(scn)
    max_min = orchestrator.max_min_illumination(scn)
    assert iso_limit < max_min

    by_method = {method: sweep.for_method(method) for method in orchestrator.METHODS}
    for method, entries in by_method.items():
        assert [e.gamma for e in entries] == sorted(gammas)
        feasible = [e for e in entries if e.feasible]
        for low, high in zip(feasible, feasible[1:]):
            assert high.average_sum_rate <= low.average_sum_rate + 1e-3, method
        # thresholds beyond a method's limit are reported, not silently dropped
        for e in entries:
            if e.gamma > max_min * (1.0 + 1e-9):
                assert not e.feasible
    for gamma in gammas:
        rates = {
            method: next(e for e in by_method[method] if e.gamma == gamma)
            for method in orchestrator.METHODS
        }
        if rates["proposed"].feasible and rates["straight"].feasible:
            assert rates["proposed"].average_sum_rate >= rates["straight"].average_sum_rate - 1e-5
        if rates["straight"].feasible and rates["isotropic"].feasible:
            assert rates["straight"].average_sum_rate >= rates["isotropic"].average_sum_rate - 1e-5

    summary = ", ".join(
        f"{method}: {sum(e.feasible for e in entries)}/4 feasible" for method, entries in by_method.items()
    )
    _report(7, f"threshold sweep ordered correctly ({summary})", time.perf_counter() - start, 1200.0)


def test_criterion_8_single_link_closed_form():
    start = time.perf_counter()
    scn = make_scenario(
        gbs_positions=[[0.0, 0.0]],
        uav_initial=[[60.0, 0.0]],
        uav_final=[[60.0, 0.0]],
        uav_altitudes=[80.0],
        num_slots=2,
        p_max=3.0,
        gamma=0.0,
        d_min=0.0,
    )
    result = orchestrator.solve(scn)
    beta = scn.kappa / (60.0**2 + 80.0**2)
    closed_form = float(np.log2(1.0 + scn.p_max * scn.num_antennas * beta / scn.noise_power))
    assert result.average_sum_rate == pytest.approx(closed_form, abs=1e-3)
    _report(
        8,
        f"hover rate {result.average_sum_rate:.6f} vs closed form {closed_form:.6f}",
        time.perf_counter() - start,
        60.0,
    )


def test_criterion_9_conic_layer():
    start = time.perf_counter()
    rng = np.random.default_rng(4242)
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        x = 0.5 * (g + g.conj().T)
        assert float(np.abs(extract_hermitian(embed_hermitian(x)) - x).max()) <= 1e-14

    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    c = 0.5 * (g + g.conj().T)
    prob = ConicProblem(maximize=True)
    prob.hermitian_psd("x", 4)
    prob.add_eq(prob.trace("x"), 1.0)
    prob.set_objective(prob.term("x", c))
    sol = prob.solve()
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(float(np.linalg.eigvalsh(c)[-1]), abs=1e-6)

    prob = ConicProblem(maximize=True)
    prob.free("t", 1)
    prob.free("u", 1)
    prob.add_log_hypograph(prob.entry("t", 0), prob.entry("u", 0))
    prob.add_le(prob.entry("u", 0), float(np.e))
    prob.set_objective(prob.entry("t", 0))
    sol = prob.solve()
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-6)
    _report(9, "embedding round-trip, SDP eigenvalue and log hypograph exact", time.perf_counter() - start, 60.0)


def test_criterion_10_sweep_determinism(tmp_path):
    start = time.perf_counter()
    scenario_text = """\
gbs_positions: [[0.0, 0.0], [200.0, 0.0]]
uav_initial: [[40.0, 60.0]]
uav_final: [[160.0, 60.0]]
uav_altitudes: [80.0]
sensing_points: [[100.0, -40.0]]
sensing_altitude: 10.0
num_antennas: 3
num_slots: 3
slot_duration: 8.0
p_max: 3.0
gamma_dbw: -38.0
v_max: 10.0
d_min: 5.0
kappa_db: -45.0
noise_dbw: -100.0
"""
    scenario_path = tmp_path / "repeat.scenario"
    scenario_path.write_text(scenario_text)
    exports = []
    for tag in ("first", "second"):
        out = tmp_path / tag
        code = cli.main(
            [
                "sweep",
                str(scenario_path),
                "--gamma-dbw",
                "-44,-40",
                "--seed",
                "7",
                "--max-outer",
                "2",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        exports.append((tmp_path / f"{tag}_sweep.csv").read_bytes())
    assert exports[0] == exports[1]
    _report(10, f"two sweep runs produced identical {len(exports[0])}-byte exports", time.perf_counter() - start, 120.0)
