"""UAV trajectory design by linearization inside a trust region.

With covariances and association fixed, a UAV's rate at a slot depends on
its position only through the steering geometry toward its serving
station: every quadratic form h^H C h equals kappa / D^2 times a cosine
series in the inter-antenna phase, whose argument varies smoothly with
the horizontal position. The rate is expanded to first order around the
current trajectory, the linearized objective is maximized over a trust
region intersected with speed, endpoint and (linearized) separation
constraints, and the step is kept only if the exact rate improves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from netisac import model
from netisac.conic import ConicProblem, SolverSettings

__all__ = [
    "CollisionLinearization",
    "CollisionLinearizationError",
    "RateExpansion",
    "TrajectoryOptions",
    "TrajectoryTrace",
    "TrustRegionState",
    "linearize_collision",
    "optimize_trajectory",
    "rate_expansions",
    "received_power_series",
    "power_series_slope",
    "solve_trajectory_subproblem",
    "taylor_coefficients",
]

LOG2E = float(np.log2(np.e))


class CollisionLinearizationError(RuntimeError):
    """Coincident expansion positions make the separation cut empty."""

    def __init__(self, pair: tuple, slot: int):
        self.pair = pair
        self.slot = slot
        super().__init__(
            f"UAVs {pair[0]} and {pair[1]} share the expansion position at slot {slot}; "
            "the linearized separation constraint is unsatisfiable"
        )


def _geometry(q: np.ndarray, u: np.ndarray, h_alt: float):
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    d2 = float(np.sum((q - u) ** 2) + h_alt * h_alt)
    return d2, np.sqrt(d2)


def received_power_series(
    cov: np.ndarray,
    q: np.ndarray,
    u: np.ndarray,
    h_alt: float,
    spacing_ratio: float = 0.5,
) -> float:
    """a(q)^H cov a(q) written as its cosine series in the position.

    a(q) is the unit-modulus steering vector of the station at u toward
    altitude h_alt above q. Equals the direct quadratic form exactly.
    """
    cov = np.asarray(cov)
    _, dist = _geometry(q, u, h_alt)
    na = cov.shape[0]
    total = float(np.real(np.trace(cov)))
    base = 2.0 * np.pi * spacing_ratio * h_alt / dist
    for p in range(na):
        for r in range(p + 1, na):
            entry = cov[p, r]
            mag = abs(entry)
            if mag == 0.0:
                continue
            total += 2.0 * mag * np.cos(np.angle(entry) + base * (r - p))
    return total


def power_series_slope(
    cov: np.ndarray,
    q: np.ndarray,
    u: np.ndarray,
    h_alt: float,
    spacing_ratio: float = 0.5,
) -> float:
    """Scalar s with d/dq [series] = s * (q - u)."""
    cov = np.asarray(cov)
    _, dist = _geometry(q, u, h_alt)
    na = cov.shape[0]
    base = 2.0 * np.pi * spacing_ratio * h_alt / dist
    slope = 0.0
    for p in range(na):
        for r in range(p + 1, na):
            entry = cov[p, r]
            mag = abs(entry)
            if mag == 0.0:
                continue
            slope += (
                4.0
                * np.pi
                * mag
                * np.sin(np.angle(entry) + base * (r - p))
                * spacing_ratio
                * h_alt
                * (r - p)
                / dist**3
            )
    return float(slope)


@dataclass(frozen=True)
class RateExpansion:
    """First-order model of one pair rate in the UAV position.

    rate(q) ~ value + gradient . (q - expansion point). signal_arg and
    interference_arg are the two log arguments at the expansion point
    (in units of kappa / D^2); the slopes are their radial derivatives
    divided by (q - u).
    """

    value: float
    gradient: np.ndarray
    signal_arg: float
    interference_arg: float
    signal_slope: float
    interference_slope: float


def taylor_coefficients(
    scenario: model.Scenario,
    covs_w: np.ndarray,
    covs_r: np.ndarray,
    q: np.ndarray,
    m: int,
    k: int,
) -> RateExpansion:
    """Expand the (m, k) pair rate around horizontal position q.

    covs_w, covs_r are the slot's covariances with shapes (M, K, Na, Na)
    and (M, Na, Na).
    """
    h_alt = float(scenario.uav_altitudes[k])
    u = scenario.gbs_positions[m]
    spacing = scenario.antenna_spacing_over_wavelength
    d2, _ = _geometry(q, u, h_alt)

    total_cov = covs_w.sum(axis=(0, 1)) + covs_r.sum(axis=0)
    interf_cov = total_cov - covs_w[m, k]
    noise_term = scenario.noise_power * d2 / scenario.kappa
    noise_slope = 2.0 * scenario.noise_power / scenario.kappa

    signal_arg = received_power_series(total_cov, q, u, h_alt, spacing) + noise_term
    interference_arg = received_power_series(interf_cov, q, u, h_alt, spacing) + noise_term
    signal_slope = power_series_slope(total_cov, q, u, h_alt, spacing) + noise_slope
    interference_slope = power_series_slope(interf_cov, q, u, h_alt, spacing) + noise_slope

    value = float(np.log2(signal_arg) - np.log2(interference_arg))
    radial = LOG2E * (signal_slope / signal_arg - interference_slope / interference_arg)
    gradient = radial * (np.asarray(q, dtype=float) - u)
    return RateExpansion(
        value=value,
        gradient=gradient,
        signal_arg=float(signal_arg),
        interference_arg=float(interference_arg),
        signal_slope=float(signal_slope),
        interference_slope=float(interference_slope),
    )


def rate_expansions(scenario: model.Scenario, design: model.Design):
    """(K, N) nested list of RateExpansion at the design's trajectory."""
    serving = design.associated_gbs()
    out = []
    for k in range(scenario.num_uavs):
        row = []
        for n in range(scenario.num_slots):
            row.append(
                taylor_coefficients(
                    scenario,
                    design.w_cov[:, :, n],
                    design.r_cov[:, n],
                    design.trajectories[k, n],
                    int(serving[k, n]),
                    k,
                )
            )
        out.append(row)
    return out


@dataclass(frozen=True)
class CollisionLinearization:
    """Halfspace normal . (q_k - q_i) >= offset implying the separation."""

    normal: np.ndarray
    offset: float
    trivial: bool = False


def linearize_collision(
    qk0: np.ndarray,
    qi0: np.ndarray,
    alt_k: float,
    alt_i: float,
    d_min: float,
    pair: tuple = (0, 1),
    slot: int = -1,
) -> CollisionLinearization:
    """Conservative linear cut for the pairwise separation constraint.

    2 (qk0-qi0).(qk-qi) - ||qk0-qi0||^2 >= d_min^2 - (alt gap)^2 implies
    the true separation since ||qk-qi||^2 >= 2 delta0.(qk-qi) - ||delta0||^2.
    """
    qk0 = np.asarray(qk0, dtype=float)
    qi0 = np.asarray(qi0, dtype=float)
    delta = qk0 - qi0
    need = d_min**2 - (float(alt_k) - float(alt_i)) ** 2
    norm2 = float(delta @ delta)
    if norm2 == 0.0:
        if need > 0.0:
            raise CollisionLinearizationError(pair, slot)
        return CollisionLinearization(normal=np.zeros(2), offset=need, trivial=True)
    return CollisionLinearization(normal=2.0 * delta, offset=need + norm2)


@dataclass
class TrustRegionState:
    """Trust-region bookkeeping carried across iterations."""

    radius: float
    minimum: float = 1e-3
    shrink: float = 0.5
    accepted: int = 0


@dataclass(frozen=True)
class TrajectoryOptions:
    max_iterations: int = 50
    min_radius: float = 1e-3
    shrink: float = 0.5
    accept_tol: float = 1e-7
    initial_radius: float | None = None
    settings: SolverSettings = field(default_factory=SolverSettings)


@dataclass
class TrajectoryTrace:
    """Per-iteration trust-region log."""

    rows: list = field(default_factory=list)
    state: TrustRegionState | None = None
    seconds: float = 0.0

    def record(self, radius: float, objective: float, accepted: bool, status: str):
        self.rows.append(
            {"radius": float(radius), "objective": float(objective), "accepted": bool(accepted), "status": status}
        )


def solve_trajectory_subproblem(
    scenario: model.Scenario,
    expansions,
    expansion_traj: np.ndarray,
    radius: float,
    settings: SolverSettings | None = None,
):
    """Maximize the linearized sum rate over the trust region.

    Returns (trajectories, surrogate_objective, status). Status is the
    conic solver outcome: trajectories are None unless it is optimal.
    """
    settings = settings or SolverSettings()
    k_count, n_count = scenario.num_uavs, scenario.num_slots
    expansion_traj = np.asarray(expansion_traj, dtype=float)
    if n_count <= 2:
        value = sum(expansions[k][n].value for k in range(k_count) for n in range(n_count))
        return expansion_traj.copy(), float(value), "optimal"

    problem = ConicProblem(maximize=True)
    problem.free("q", k_count * n_count * 2)

    def entry(k: int, n: int, c: int):
        return problem.entry("q", (k * n_count + n) * 2 + c)

    objective = None
    for k in range(k_count):
        for n in range(1, n_count - 1):
            grad = expansions[k][n].gradient
            for c in range(2):
                if grad[c] == 0.0:
                    continue
                term = float(grad[c]) * entry(k, n, c)
                objective = term if objective is None else objective + term
    if objective is None:
        objective = problem.entry("q", 0) * 0.0
    problem.set_objective(objective)

    for k in range(k_count):
        for c in range(2):
            problem.add_eq(entry(k, 0, c), float(scenario.uav_initial[k, c]))
            problem.add_eq(entry(k, n_count - 1, c), float(scenario.uav_final[k, c]))

    step = scenario.v_max * scenario.slot_duration
    for k in range(k_count):
        for n in range(n_count - 1):
            problem.add_soc(step, [entry(k, n + 1, c) - entry(k, n, c) for c in range(2)])

    for k in range(k_count):
        for n in range(1, n_count - 1):
            center = expansion_traj[k, n]
            problem.add_soc(float(radius), [entry(k, n, c) - float(center[c]) for c in range(2)])

    if scenario.d_min > 0:
        for a in range(k_count):
            for b in range(a + 1, k_count):
                for n in range(1, n_count - 1):
                    cut = linearize_collision(
                        expansion_traj[a, n],
                        expansion_traj[b, n],
                        float(scenario.uav_altitudes[a]),
                        float(scenario.uav_altitudes[b]),
                        scenario.d_min,
                        pair=(a, b),
                        slot=n,
                    )
                    if cut.trivial:
                        continue
                    expr = None
                    for c in range(2):
                        term = float(cut.normal[c]) * (entry(a, n, c) - entry(b, n, c))
                        expr = term if expr is None else expr + term
                    problem.add_ge(expr, cut.offset)

    solution = problem.solve(settings)
    if solution.status != "optimal":
        return None, None, solution.status

    traj = solution.blocks["q"].reshape(k_count, n_count, 2).copy()
    traj[:, 0, :] = scenario.uav_initial
    traj[:, -1, :] = scenario.uav_final
    surrogate = 0.0
    for k in range(k_count):
        for n in range(n_count):
            exp = expansions[k][n]
            surrogate += exp.value + float(exp.gradient @ (traj[k, n] - expansion_traj[k, n]))
    return traj, float(surrogate), "optimal"


def optimize_trajectory(
    scenario: model.Scenario,
    design: model.Design,
    options: TrajectoryOptions | None = None,
):
    """Trust-region ascent on the exact sum rate over trajectories.

    Accepts a candidate only when the exact objective improves by more
    than accept_tol; otherwise halves the radius, stopping below
    min_radius or after max_iterations. Returns (trajectories, trace).
    """
    options = options or TrajectoryOptions()
    start = time.perf_counter()
    report = model.check_constraints(design, scenario)
    for family in ("endpoint", "speed", "collision", "association"):
        if family in report.counts:
            raise ValueError(f"optimize_trajectory needs a feasible start: {report.describe()}")

    current = design.copy()
    exact = model.total_rate(current, scenario)
    radius = options.initial_radius
    if radius is None:
        radius = scenario.v_max * scenario.slot_duration
    state = TrustRegionState(radius=radius, minimum=options.min_radius, shrink=options.shrink)
    trace = TrajectoryTrace(state=state)
    reseeded: set = set()

    for _ in range(options.max_iterations):
        if state.radius < state.minimum:
            break
        try:
            expansions = rate_expansions(scenario, current)
            candidate, _, status = solve_trajectory_subproblem(
                scenario, expansions, current.trajectories, state.radius, options.settings
            )
        except CollisionLinearizationError as err:
            # restart the offending pair from straight lines, once per pair
            if err.pair in reseeded:
                raise
            reseeded.add(err.pair)
            straight = model.straight_line_trajectories(scenario)
            trial = current.copy()
            for k in err.pair:
                trial.trajectories[k] = straight[k]
            if model.check_constraints(trial, scenario).counts.get("collision"):
                raise
            current = trial
            exact = model.total_rate(current, scenario)
            trace.record(state.radius, exact, False, "reseeded")
            continue
        if status != "optimal":
            state.radius *= state.shrink
            trace.record(state.radius, exact, False, status)
            continue
        trial = current.copy()
        trial.trajectories = candidate
        cand_exact = model.total_rate(trial, scenario)
        if cand_exact > exact + options.accept_tol:
            current = trial
            exact = cand_exact
            state.accepted += 1
            trace.record(state.radius, exact, True, status)
        else:
            state.radius *= state.shrink
            trace.record(state.radius, exact, False, status)

    trace.seconds = time.perf_counter() - start
    return current.trajectories, trace
