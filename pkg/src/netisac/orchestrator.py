"""Alternating optimization over association, covariances and trajectories.

Ties the three stage optimizers into the full pipeline, provides the two
benchmark pipelines (straight flight and isotropic transmission), the
max-min illumination feasibility program, and the threshold sweep used
to study the rate/sensing trade-off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from netisac import model
from netisac.association import association_from_rates
from netisac.beamforming import (
    BeamformingOptions,
    CovarianceSet,
    NumericalFailureError,
    SensingInfeasibleError,
    initial_covariances,
    optimize_beamforming,
)
from netisac.conic import ConicProblem, SolverSettings
from netisac.trajectory import TrajectoryOptions, optimize_trajectory

__all__ = [
    "AoTrace",
    "METHODS",
    "OuterRecord",
    "SolveOptions",
    "SolveResult",
    "StageRecord",
    "SweepEntry",
    "SweepResult",
    "baseline_isotropic",
    "baseline_straight_flight",
    "gamma_sweep",
    "initial_design",
    "isotropic_feasibility_limit",
    "max_min_illumination",
    "solve",
]

METHODS = ("proposed", "straight", "isotropic")

LOG2E = float(np.log2(np.e))


@dataclass(frozen=True)
class SolveOptions:
    max_outer: int = 20
    rel_tol: float = 1e-4
    beamforming: BeamformingOptions = field(default_factory=BeamformingOptions)
    trajectory: TrajectoryOptions = field(default_factory=TrajectoryOptions)
    settings: SolverSettings = field(default_factory=SolverSettings)
    validate_stages: bool = True


@dataclass
class StageRecord:
    name: str
    objective: float
    seconds: float
    detail: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {
            "name": self.name,
            "objective": self.objective,
            "seconds": self.seconds,
            "detail": self.detail,
        }


@dataclass
class OuterRecord:
    index: int
    stages: list = field(default_factory=list)

    def to_jsonable(self) -> dict:
        return {"index": self.index, "stages": [s.to_jsonable() for s in self.stages]}


@dataclass
class AoTrace:
    """Objective after every stage of every outer iteration."""

    method: str
    gamma: float
    initial_objective: float = 0.0
    outer: list = field(default_factory=list)
    final_objective: float = 0.0
    converged: bool = False
    wall_seconds: float = 0.0
    failure: str = ""

    def stage_objectives(self) -> list:
        values = [self.initial_objective]
        for record in self.outer:
            values.extend(stage.objective for stage in record.stages)
        return values

    def to_jsonable(self) -> dict:
        return {
            "method": self.method,
            "gamma": self.gamma,
            "initial_objective": self.initial_objective,
            "outer": [o.to_jsonable() for o in self.outer],
            "final_objective": self.final_objective,
            "converged": self.converged,
            "wall_seconds": self.wall_seconds,
            "failure": self.failure,
        }


@dataclass
class SolveResult:
    design: model.Design
    trace: AoTrace
    scenario: model.Scenario

    @property
    def average_sum_rate(self) -> float:
        return self.trace.final_objective / self.scenario.num_slots


def max_min_illumination(
    scenario: model.Scenario,
    settings: SolverSettings | None = None,
    return_covariances: bool = False,
):
    """Largest threshold reachable at every monitored point at once.

    Solves max s subject to per-station power budgets over one slot;
    the result does not depend on trajectories or association. The
    optimum scales linearly with p_max.
    """
    settings = settings or SolverSettings()
    problem = ConicProblem(maximize=True)
    na = scenario.num_antennas
    # normalize to a unit power budget and thresholds near 1: the raw
    # program mixes watt-scale traces with 1/d^2-scale forms, which puts
    # the optimum below the solver's absolute gap tolerance for small
    # p_max. The normalized optimum scales back exactly.
    ref = isotropic_feasibility_limit(scenario) / scenario.p_max
    for l in range(scenario.num_gbs):
        problem.hermitian_psd(f"x_{l}", na)
        problem.add_le(problem.trace(f"x_{l}"), 1.0)
    problem.free("s", 1)
    s = problem.entry("s", 0)
    for q in range(scenario.num_sensing):
        expr = -s
        for l in range(scenario.num_gbs):
            expr = expr + problem.term(f"x_{l}", scenario.sensing_forms[l, q] / ref)
        problem.add_ge(expr, 0.0)
    problem.set_objective(s)
    solution = problem.solve(settings)
    if solution.status != "optimal":
        solution = problem.solve(settings.tightened())
    if solution.status != "optimal":
        raise NumericalFailureError(f"max-min illumination program failed: {solution.solver_status}")
    best = float(solution.objective) * ref * scenario.p_max
    if not return_covariances:
        return best
    from netisac.beamforming import _psd_clip

    x_opt = np.stack(
        [scenario.p_max * _psd_clip(solution.blocks[f"x_{l}"]) for l in range(scenario.num_gbs)]
    )
    return best, x_opt


def isotropic_feasibility_limit(scenario: model.Scenario) -> float:
    """Largest threshold reachable with isotropic covariances.

    Isotropic illumination is steering-independent, so the best the
    stations can do is spend the full budget: min_q sum_l p_max / d^2.
    """
    per_point = scenario.p_max * np.sum(scenario.sensing_distances**-2, axis=0)
    return float(per_point.min())


def _nearest_association(scenario: model.Scenario, trajectories: np.ndarray) -> np.ndarray:
    dist2 = np.sum(
        (np.asarray(trajectories)[None, :, :, :] - scenario.gbs_positions[:, None, None, :]) ** 2,
        axis=-1,
    )
    nearest = np.argmin(dist2, axis=0)
    assoc = np.zeros((scenario.num_gbs, scenario.num_uavs, scenario.num_slots), dtype=np.int8)
    k_idx = np.arange(scenario.num_uavs)[:, None]
    n_idx = np.arange(scenario.num_slots)[None, :]
    assoc[nearest, k_idx, n_idx] = 1
    return assoc


def initial_design(scenario: model.Scenario, settings: SolverSettings | None = None) -> model.Design:
    """Straight flight, nearest stations, feasible starting covariances."""
    trajectories = model.straight_line_trajectories(scenario)
    association = _nearest_association(scenario, trajectories)
    probe = model.Design(
        w_cov=np.zeros(
            (scenario.num_gbs, scenario.num_uavs, scenario.num_slots, scenario.num_antennas, scenario.num_antennas),
            dtype=complex,
        ),
        r_cov=np.zeros((scenario.num_gbs, scenario.num_slots, scenario.num_antennas, scenario.num_antennas), dtype=complex),
        trajectories=trajectories,
        association=association,
    )
    report = model.check_constraints(probe, scenario)
    if "collision" in report.counts:
        raise ValueError(
            "straight-line initial trajectories violate the pairwise separation "
            "constraint; this scenario needs a manual starting path: " + report.describe()
        )
    covs = initial_covariances(scenario, association, trajectories, settings)
    return model.Design(w_cov=covs.w, r_cov=covs.r, trajectories=trajectories, association=association)


def _stage_detail(scenario, design, options) -> dict:
    if not options.validate_stages:
        return {}
    report = model.check_constraints(design, scenario)
    return {"feasible": report.feasible, "violations": report.total()}


# -- isotropic benchmark internals -------------------------------------------


def _isotropic_covariances(scenario: model.Scenario, pc: np.ndarray, ps: np.ndarray) -> CovarianceSet:
    na = scenario.num_antennas
    eye = np.eye(na, dtype=complex)
    w = pc[:, :, :, None, None] / na * eye
    r = ps[:, :, None, None] / na * eye
    return CovarianceSet(w=w.astype(complex), r=r.astype(complex))


def _isotropic_powers(design: model.Design) -> tuple:
    pc = np.einsum("linaa->lin", design.w_cov).real.copy()
    ps = np.einsum("lnaa->ln", design.r_cov).real.copy()
    return np.maximum(pc, 0.0), np.maximum(ps, 0.0)


def _initial_isotropic_powers(scenario: model.Scenario, association: np.ndarray):
    limit = isotropic_feasibility_limit(scenario)
    if scenario.gamma > limit * (1.0 + 1e-9):
        raise SensingInfeasibleError(
            scenario.gamma,
            scenario.p_max,
            f"isotropic transmission reaches at most {limit:.6g} W",
        )
    m_count, k_count, n_count = scenario.num_gbs, scenario.num_uavs, scenario.num_slots
    pc = np.zeros((m_count, k_count, n_count))
    serving = np.argmax(np.asarray(association), axis=0)
    for n in range(n_count):
        counts = np.bincount(serving[:, n], minlength=m_count)
        for k in range(k_count):
            pc[int(serving[k, n]), k, n] = 0.5 * scenario.p_max / counts[int(serving[k, n])]
    ps = scenario.p_max - pc.sum(axis=1)
    return pc, ps


def _solve_isotropic_slot(scenario, serving, betas, pc0, ps0, n, settings):
    """Scalar-power surrogate problem for one slot.

    betas[k] is the channel gain of UAV k toward its serving station.
    """
    m_count, k_count = scenario.num_gbs, scenario.num_uavs
    sigma2 = scenario.noise_power
    problem = ConicProblem(maximize=True)
    problem.free("pc", m_count * k_count)
    problem.free("ps", m_count)
    problem.free("t", k_count)

    def pc_entry(l, i):
        return problem.entry("pc", l * k_count + i)

    total_power = None
    for l in range(m_count):
        for i in range(k_count):
            problem.add_ge(pc_entry(l, i), 0.0)
        problem.add_ge(problem.entry("ps", l), 0.0)
        station_total = problem.entry("ps", l)
        for i in range(k_count):
            station_total = station_total + pc_entry(l, i)
        problem.add_le(station_total * (1.0 / scenario.p_max), 1.0)
        total_power = station_total if total_power is None else total_power + station_total

    if scenario.gamma > 0:
        inv_d2 = scenario.sensing_distances**-2
        for q in range(scenario.num_sensing):
            expr = None
            for l in range(m_count):
                scale = float(inv_d2[l, q]) / scenario.gamma
                term = (problem.entry("ps", l) + sum(pc_entry(l, i) for i in range(k_count))) * scale
                expr = term if expr is None else expr + term
            problem.add_ge(expr, 1.0)

    problem.free("y", k_count)
    objective = None
    for k in range(k_count):
        beta = float(betas[k])
        own = float(pc0[int(serving[k]), k])
        # expansion interference; scaling the received total by it keeps the
        # exp-cone argument near 1 + SINR instead of noise units
        denom0 = beta * (float(pc0.sum()) + float(ps0.sum()) - own) + sigma2
        problem.add_eq(
            problem.entry("y", k) - total_power * (beta / denom0), sigma2 / denom0
        )
        problem.add_log_hypograph(problem.entry("t", k), problem.entry("y", k))
        b0 = LOG2E * beta / denom0
        term = LOG2E * problem.entry("t", k) - b0 * (total_power - pc_entry(int(serving[k]), k))
        objective = term if objective is None else objective + term
    problem.set_objective(objective)

    solution = problem.solve(settings)
    if solution.status == "numerical-failure":
        solution = problem.solve(settings.tightened())
    if solution.status == "infeasible":
        raise SensingInfeasibleError(scenario.gamma, scenario.p_max, f"isotropic power program, slot {n}")
    if solution.status != "optimal":
        raise NumericalFailureError(f"isotropic power program failed at slot {n}: {solution.solver_status}")
    pc = np.maximum(solution.blocks["pc"].reshape(m_count, k_count), 0.0)
    ps = np.maximum(solution.blocks["ps"], 0.0)
    return pc, ps


def _optimize_isotropic(scenario, association, trajectories, pc, ps, options: BeamformingOptions):
    serving_all = np.argmax(np.asarray(association), axis=0)
    ch = model.channel_vectors(scenario, trajectories)
    gains = np.sum(np.abs(ch) ** 2, axis=-1) / scenario.num_antennas  # beta per (m, k, n)

    def exact_objective(pc_arr, ps_arr):
        covs = _isotropic_covariances(scenario, pc_arr, ps_arr)
        design = model.Design(
            w_cov=covs.w,
            r_cov=covs.r,
            trajectories=np.asarray(trajectories, dtype=float),
            association=np.asarray(association, dtype=np.int8),
        )
        return model.total_rate(design, scenario)

    exact = exact_objective(pc, ps)
    statuses_all = []
    for _ in range(options.max_iterations):
        new_pc, new_ps = pc.copy(), ps.copy()
        for n in range(scenario.num_slots):
            serving = serving_all[:, n]
            betas = [gains[int(serving[k]), k, n] for k in range(scenario.num_uavs)]
            new_pc[:, :, n], new_ps[:, n] = _solve_isotropic_slot(
                scenario, serving, betas, pc[:, :, n], ps[:, n], n, options.settings
            )
        new_exact = exact_objective(new_pc, new_ps)
        statuses_all.append("Solved")
        if new_exact >= exact:
            pc, ps = new_pc, new_ps
        improvement = new_exact - exact
        exact = max(exact, new_exact)
        if improvement < options.rel_tol * max(1.0, abs(exact)):
            break
    return pc, ps, exact, statuses_all


# -- main pipelines -----------------------------------------------------------


def solve(
    scenario: model.Scenario,
    options: SolveOptions | None = None,
    method: str = "proposed",
    initial: model.Design | None = None,
) -> SolveResult:
    """Run the alternating pipeline for one of the three methods.

    proposed: association, covariances and trajectories; straight:
    association and covariances on the straight flight path; isotropic:
    association, scalar power split and trajectories with identity-shaped
    covariances. Raises SensingInfeasibleError when the threshold is
    unreachable for the method's covariance class.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    options = options or SolveOptions()
    start = time.perf_counter()
    if method == "isotropic":
        return _solve_isotropic(scenario, options, initial, start)

    if initial is None:
        design = initial_design(scenario, options.settings)
    else:
        design = initial.copy()
    trace = AoTrace(method=method, gamma=scenario.gamma)
    objective = model.total_rate(design, scenario)
    trace.initial_objective = objective

    for outer in range(1, options.max_outer + 1):
        record = OuterRecord(index=outer)
        start_objective = objective

        t0 = time.perf_counter()
        rates = model.rate_matrix(design, scenario)
        design.association = association_from_rates(rates)
        objective = float(np.max(rates, axis=0).sum())
        record.stages.append(
            StageRecord("association", objective, time.perf_counter() - t0, _stage_detail(scenario, design, options))
        )

        try:
            t0 = time.perf_counter()
            covs, bf_trace = optimize_beamforming(
                scenario,
                design.association,
                design.trajectories,
                CovarianceSet.from_design(design),
                options.beamforming,
            )
            design.w_cov, design.r_cov = covs.w, covs.r
            objective = model.total_rate(design, scenario)
            detail = _stage_detail(scenario, design, options)
            detail["iterations"] = len(bf_trace.exact)
            detail["statuses"] = sorted({s for slot in bf_trace.statuses for s in slot})
            record.stages.append(StageRecord("beamforming", objective, time.perf_counter() - t0, detail))

            if method == "proposed":
                t0 = time.perf_counter()
                new_traj, tr_trace = optimize_trajectory(scenario, design, options.trajectory)
                design.trajectories = new_traj
                objective = model.total_rate(design, scenario)
                detail = _stage_detail(scenario, design, options)
                detail["accepted"] = tr_trace.state.accepted
                detail["radius"] = tr_trace.state.radius
                record.stages.append(StageRecord("trajectory", objective, time.perf_counter() - t0, detail))
        except (SensingInfeasibleError, NumericalFailureError) as err:
            # keep the last completed stage's design: stage optimizers raise
            # before mutating it, so the design in hand is still feasible
            trace.failure = f"outer {outer}: {err}"
            trace.outer.append(record)
            break

        trace.outer.append(record)
        if objective - start_objective < options.rel_tol * max(1.0, abs(start_objective)):
            trace.converged = True
            break

    trace.final_objective = objective
    trace.wall_seconds = time.perf_counter() - start
    return SolveResult(design=design, trace=trace, scenario=scenario)


def _solve_isotropic(scenario, options, initial, start) -> SolveResult:
    if initial is None:
        trajectories = model.straight_line_trajectories(scenario)
        association = _nearest_association(scenario, trajectories)
        probe = model.Design(
            w_cov=np.zeros(
                (scenario.num_gbs, scenario.num_uavs, scenario.num_slots, scenario.num_antennas, scenario.num_antennas),
                dtype=complex,
            ),
            r_cov=np.zeros(
                (scenario.num_gbs, scenario.num_slots, scenario.num_antennas, scenario.num_antennas), dtype=complex
            ),
            trajectories=trajectories,
            association=association,
        )
        if "collision" in model.check_constraints(probe, scenario).counts:
            raise ValueError("straight-line initial trajectories violate the pairwise separation constraint")
        pc, ps = _initial_isotropic_powers(scenario, association)
    else:
        trajectories = initial.trajectories.copy()
        association = initial.association.copy()
        pc, ps = _isotropic_powers(initial)

    covs = _isotropic_covariances(scenario, pc, ps)
    design = model.Design(w_cov=covs.w, r_cov=covs.r, trajectories=trajectories, association=association)
    trace = AoTrace(method="isotropic", gamma=scenario.gamma)
    objective = model.total_rate(design, scenario)
    trace.initial_objective = objective

    for outer in range(1, options.max_outer + 1):
        record = OuterRecord(index=outer)
        start_objective = objective

        t0 = time.perf_counter()
        rates = model.rate_matrix(design, scenario)
        design.association = association_from_rates(rates)
        objective = float(np.max(rates, axis=0).sum())
        record.stages.append(
            StageRecord("association", objective, time.perf_counter() - t0, _stage_detail(scenario, design, options))
        )

        try:
            t0 = time.perf_counter()
            pc, ps, objective, _ = _optimize_isotropic(
                scenario, design.association, design.trajectories, pc, ps, options.beamforming
            )
            covs = _isotropic_covariances(scenario, pc, ps)
            design.w_cov, design.r_cov = covs.w, covs.r
            record.stages.append(
                StageRecord("power", objective, time.perf_counter() - t0, _stage_detail(scenario, design, options))
            )

            t0 = time.perf_counter()
            new_traj, tr_trace = optimize_trajectory(scenario, design, options.trajectory)
            design.trajectories = new_traj
            objective = model.total_rate(design, scenario)
            detail = _stage_detail(scenario, design, options)
            detail["accepted"] = tr_trace.state.accepted
            record.stages.append(StageRecord("trajectory", objective, time.perf_counter() - t0, detail))
        except (SensingInfeasibleError, NumericalFailureError) as err:
            trace.failure = f"outer {outer}: {err}"
            trace.outer.append(record)
            break

        trace.outer.append(record)
        if objective - start_objective < options.rel_tol * max(1.0, abs(start_objective)):
            trace.converged = True
            break

    trace.final_objective = objective
    trace.wall_seconds = time.perf_counter() - start
    return SolveResult(design=design, trace=trace, scenario=scenario)


def baseline_straight_flight(scenario: model.Scenario, options: SolveOptions | None = None) -> SolveResult:
    """Benchmark: optimize association and covariances on straight paths."""
    return solve(scenario, options, method="straight")


def baseline_isotropic(scenario: model.Scenario, options: SolveOptions | None = None) -> SolveResult:
    """Benchmark: isotropic covariances with optimized power split."""
    return solve(scenario, options, method="isotropic")


# -- threshold sweep -----------------------------------------------------------


@dataclass
class SweepEntry:
    gamma: float
    method: str
    feasible: bool
    average_sum_rate: float | None
    note: str = ""
    wall_seconds: float = 0.0

    @property
    def gamma_dbw(self) -> float:
        return 10.0 * float(np.log10(self.gamma)) if self.gamma > 0 else float("-inf")

    def to_jsonable(self) -> dict:
        return {
            "gamma": self.gamma,
            "gamma_dbw": self.gamma_dbw,
            "method": self.method,
            "feasible": self.feasible,
            "average_sum_rate": self.average_sum_rate,
            "note": self.note,
            "wall_seconds": self.wall_seconds,
        }


@dataclass
class SweepResult:
    entries: list

    def for_method(self, method: str) -> list:
        return [e for e in self.entries if e.method == method]

    def to_jsonable(self) -> dict:
        return {"entries": [e.to_jsonable() for e in self.entries]}


def gamma_sweep(
    scenario: model.Scenario,
    gammas,
    methods=METHODS,
    options: SolveOptions | None = None,
) -> SweepResult:
    """Run each method across illumination thresholds (watts).

    Thresholds are processed in descending order with warm starts: a
    design feasible at a larger threshold stays feasible at a smaller
    one, so each method's rate is non-increasing in the threshold by
    construction. Entries come back sorted ascending.
    """
    options = options or SolveOptions()
    gammas = sorted(float(g) for g in gammas)
    entries = []
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        warm = None
        for gamma in reversed(gammas):
            sub = scenario.with_updates(gamma=gamma)
            t0 = time.perf_counter()
            try:
                result = solve(sub, options, method=method, initial=warm)
            except SensingInfeasibleError as err:
                entries.append(
                    SweepEntry(gamma, method, False, None, note=str(err), wall_seconds=time.perf_counter() - t0)
                )
                continue
            except NumericalFailureError as err:
                entries.append(
                    SweepEntry(
                        gamma, method, False, None, note=f"numerical failure: {err}", wall_seconds=time.perf_counter() - t0
                    )
                )
                continue
            warm = result.design
            entries.append(
                SweepEntry(
                    gamma,
                    method,
                    True,
                    result.average_sum_rate,
                    note=result.trace.failure,
                    wall_seconds=time.perf_counter() - t0,
                )
            )
    entries.sort(key=lambda e: (e.gamma, METHODS.index(e.method)))
    return SweepResult(entries=entries)
