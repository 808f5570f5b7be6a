"""Cooperative transmit covariance design by successive convex approximation.

For fixed trajectories and association, each UAV rate is a difference of
concave terms in the covariance matrices. The non-concave part (the log
of interference plus noise) is replaced by its first-order expansion at
the current iterate, giving a concave surrogate that lower-bounds the
true rate and touches it at the expansion point. The surrogate problem
is a semidefinite program per slot (the rank constraint on the per-UAV
covariances is dropped); a closed-form reconstruction afterwards restores
rank-one covariances without changing any rate, power or illumination
value.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from netisac import model
from netisac.conic import ConicProblem, SolverSettings

__all__ = [
    "CovarianceSet",
    "BeamformingOptions",
    "BeamformingTrace",
    "NumericalFailureError",
    "ReconstructionError",
    "SensingInfeasibleError",
    "SurrogateCoefficients",
    "initial_covariances",
    "optimize_beamforming",
    "rank_one_reconstruct",
    "solve_sdr_subproblem",
    "surrogate_coefficients",
    "surrogate_rate",
]

LOG2E = float(np.log2(np.e))


class SensingInfeasibleError(RuntimeError):
    """The illumination threshold cannot be met within the power budget."""

    def __init__(self, gamma: float, p_max: float, detail: str = ""):
        self.gamma = gamma
        self.p_max = p_max
        msg = f"illumination threshold {gamma:.6g} W unreachable with per-station budget {p_max:.6g} W"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NumericalFailureError(RuntimeError):
    """The conic solver failed even after a tightened retry."""


class ReconstructionError(RuntimeError):
    """Rank-one reconstruction broke a conservation property."""


@dataclass
class CovarianceSet:
    """Communication and sensing covariances for every station and slot.

    w: (M, K, N, Na, Na) complex, r: (M, N, Na, Na) complex.
    """

    w: np.ndarray
    r: np.ndarray

    @classmethod
    def from_design(cls, design: model.Design) -> "CovarianceSet":
        return cls(w=design.w_cov.copy(), r=design.r_cov.copy())

    def copy(self) -> "CovarianceSet":
        return CovarianceSet(w=self.w.copy(), r=self.r.copy())

    def apply_to(self, design: model.Design) -> model.Design:
        out = design.copy()
        out.w_cov = self.w.copy()
        out.r_cov = self.r.copy()
        return out


@dataclass(frozen=True)
class SurrogateCoefficients:
    """First-order expansion data of one pair's rate at slot n.

    grad is the Hermitian matrix weighting covariance deviations in the
    linearized interference term; log_interference is log2 of the
    interference-plus-noise value at the expansion point.
    """

    channel_outer: np.ndarray
    interference: float
    grad: np.ndarray
    log_interference: float


def _pair_channel(scenario: model.Scenario, trajectories: np.ndarray, m: int, k: int, n: int) -> np.ndarray:
    return model.channel_vector(scenario, m, trajectories[k, n], float(scenario.uav_altitudes[k]))


def _psd_clip(mat: np.ndarray) -> np.ndarray:
    """Project a nearly-PSD Hermitian matrix onto the PSD cone.

    Interior-point output can carry eigenvalues around -1e-9; downstream
    algebra (rank-one reconstruction in particular) assumes exact PSD.
    """
    sym = 0.5 * (mat + mat.conj().T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals[0] >= 0.0:
        return sym
    clipped = (eigvecs * np.maximum(eigvals, 0.0)) @ eigvecs.conj().T
    return 0.5 * (clipped + clipped.conj().T)


def surrogate_coefficients(
    scenario: model.Scenario,
    trajectories: np.ndarray,
    expansion: CovarianceSet,
    m: int,
    k: int,
    n: int,
) -> SurrogateCoefficients:
    """Expansion data for pair (m, k) at slot n around the given covariances."""
    h = _pair_channel(scenario, trajectories, m, k, n)
    outer = np.outer(h, h.conj())
    interference = scenario.noise_power
    for l in range(scenario.num_gbs):
        for i in range(scenario.num_uavs):
            if l == m and i == k:
                continue
            interference += max(float(np.real(h.conj() @ expansion.w[l, i, n] @ h)), 0.0)
        interference += max(float(np.real(h.conj() @ expansion.r[l, n] @ h)), 0.0)
    grad = (LOG2E / interference) * outer
    return SurrogateCoefficients(
        channel_outer=outer,
        interference=float(interference),
        grad=grad,
        log_interference=float(np.log2(interference)),
    )


def surrogate_rate(
    candidate: CovarianceSet,
    expansion: CovarianceSet,
    coeffs: SurrogateCoefficients,
    scenario: model.Scenario,
    m: int,
    k: int,
    n: int,
) -> float:
    """Concave lower bound on the pair rate at the candidate covariances."""
    outer = coeffs.channel_outer
    total = scenario.noise_power
    linear = 0.0
    for l in range(scenario.num_gbs):
        for i in range(scenario.num_uavs):
            total += float(np.real(np.trace(outer @ candidate.w[l, i, n])))
            if l == m and i == k:
                continue
            linear += float(
                np.real(np.trace(coeffs.grad @ (candidate.w[l, i, n] - expansion.w[l, i, n])))
            )
        total += float(np.real(np.trace(outer @ candidate.r[l, n])))
        linear += float(np.real(np.trace(coeffs.grad @ (candidate.r[l, n] - expansion.r[l, n]))))
    return float(np.log2(total)) - coeffs.log_interference - linear


@dataclass
class _SlotProblem:
    coeffs: dict
    serving: np.ndarray


def _solve_slot(
    scenario: model.Scenario,
    serving: np.ndarray,
    trajectories: np.ndarray,
    expansion: CovarianceSet,
    n: int,
    settings: SolverSettings,
):
    """One per-slot surrogate SDP. Returns (w, r, coeffs, solution)."""
    m_count, k_count, na = scenario.num_gbs, scenario.num_uavs, scenario.num_antennas
    sigma2 = scenario.noise_power

    coeffs = {}
    for k in range(k_count):
        m = int(serving[k])
        coeffs[k] = surrogate_coefficients(scenario, trajectories, expansion, m, k, n)

    problem = ConicProblem(maximize=True)
    for l in range(m_count):
        for i in range(k_count):
            problem.hermitian_psd(f"w_{l}_{i}", na)
        problem.hermitian_psd(f"r_{l}", na)
    problem.free("t", k_count)
    # Received totals and interference enter through pinned scalars scaled by
    # the expansion interference D0: y_k = u_k / D0_k, z_k = I_k / D0_k. The
    # objective then carries only O(1) coefficients (the large 1/D0 entries
    # stay inside constraint rows, where equilibration can absorb them), and
    # the exp-cone argument y_k sits near its SINR-sized optimum instead of
    # being measured in noise units.
    problem.free("y", k_count)
    problem.free("z", k_count)

    objective = None
    for k in range(k_count):
        cf = coeffs[k]
        m = int(serving[k])
        d0 = cf.interference
        total = None
        interf = None
        for l in range(m_count):
            for i in range(k_count):
                term = problem.term(f"w_{l}_{i}", cf.channel_outer / d0)
                total = term if total is None else total + term
                if not (l == m and i == k):
                    interf = term if interf is None else interf + term
            term = problem.term(f"r_{l}", cf.channel_outer / d0)
            total = total + term
            interf = term if interf is None else interf + term
        problem.add_eq(problem.entry("y", k) - total, sigma2 / d0)
        problem.add_eq(problem.entry("z", k) - interf, sigma2 / d0)
        problem.add_log_hypograph(problem.entry("t", k), problem.entry("y", k))
        # per pair: log2(u_k) - log2(D0_k) - log2e * (I_k - D0_k) / D0_k,
        # dropping the constants, is log2e * (t_k - z_k)
        term = LOG2E * problem.entry("t", k) - LOG2E * problem.entry("z", k)
        objective = term if objective is None else objective + term

    problem.set_objective(objective)

    # per-station power budget, scaled to O(1)
    for l in range(m_count):
        total = problem.trace(f"r_{l}")
        for i in range(k_count):
            total = total + problem.trace(f"w_{l}_{i}")
        problem.add_le(total * (1.0 / scenario.p_max), 1.0)

    # illumination threshold at every monitored point, scaled to O(1)
    if scenario.gamma > 0:
        for q in range(scenario.num_sensing):
            expr = None
            for l in range(m_count):
                form = scenario.sensing_forms[l, q] / scenario.gamma
                for i in range(k_count):
                    term = problem.term(f"w_{l}_{i}", form)
                    expr = term if expr is None else expr + term
                expr = expr + problem.term(f"r_{l}", form)
            problem.add_ge(expr, 1.0)

    solution = problem.solve(settings)
    if solution.status != "optimal":
        return None, None, coeffs, solution
    w = np.zeros((m_count, k_count, na, na), dtype=complex)
    r = np.zeros((m_count, na, na), dtype=complex)
    for l in range(m_count):
        for i in range(k_count):
            w[l, i] = _psd_clip(solution.blocks[f"w_{l}_{i}"])
        r[l] = _psd_clip(solution.blocks[f"r_{l}"])
    return w, r, coeffs, solution


def solve_sdr_subproblem(
    scenario: model.Scenario,
    association: np.ndarray,
    trajectories: np.ndarray,
    expansion: CovarianceSet,
    settings: SolverSettings | None = None,
    slots=None,
):
    """Solve the per-slot surrogate SDPs around the expansion covariances.

    Returns (covariances, surrogate_objective, statuses). Raises
    SensingInfeasibleError when a slot is infeasible and
    NumericalFailureError when the solver fails twice.
    """
    settings = settings or SolverSettings()
    serving_all = np.argmax(np.asarray(association), axis=0)  # (K, N)
    if not np.all(np.asarray(association).sum(axis=0) == 1):
        raise ValueError("association invariant: exactly one station per UAV and slot")
    n_count = scenario.num_slots
    slot_list = list(range(n_count)) if slots is None else list(slots)

    out = expansion.copy()
    statuses = []
    objective = 0.0
    for n in slot_list:
        serving = serving_all[:, n]
        w, r, coeffs, solution = _solve_slot(scenario, serving, trajectories, expansion, n, settings)
        if solution.status == "numerical-failure":
            w, r, coeffs, solution = _solve_slot(
                scenario, serving, trajectories, expansion, n, settings.tightened()
            )
        if solution.status == "infeasible":
            raise SensingInfeasibleError(scenario.gamma, scenario.p_max, f"surrogate SDP infeasible at slot {n}")
        if solution.status != "optimal":
            raise NumericalFailureError(
                f"surrogate SDP at slot {n} failed with solver status {solution.solver_status}"
            )
        out.w[:, :, n] = w
        out.r[:, n] = r
        statuses.append(solution.solver_status)
        candidate = out
        for k in range(scenario.num_uavs):
            objective += surrogate_rate(candidate, expansion, coeffs[k], scenario, int(serving[k]), k, n)
    return out, float(objective), statuses


def rank_one_reconstruct(
    w_star: np.ndarray,
    r_star: np.ndarray,
    channels: np.ndarray,
    p_max: float | None = None,
):
    """Closed-form rank-one covariances preserving all design values.

    Args:
        w_star: (M, K, Na, Na) SDR communication covariances at one slot.
        r_star: (M, Na, Na) sensing covariances at the same slot.
        channels: (K, Na) channel of each UAV from its serving station.
        p_max: optional power scale for the conservation check.

    Returns (w_bar, r_bar) where each w_bar[l, i] is rank one (or zero)
    and per-station totals sum_i w + r are preserved exactly, so every
    rate, power and illumination value of the slot is unchanged.
    """
    w_star = np.asarray(w_star, dtype=complex)
    r_star = np.asarray(r_star, dtype=complex)
    channels = np.asarray(channels, dtype=complex)
    m_count, k_count, na = w_star.shape[0], w_star.shape[1], w_star.shape[2]
    scale = float(p_max) if p_max is not None else max(1.0, float(np.abs(w_star).max() + np.abs(r_star).max()))

    w_bar = np.zeros_like(w_star)
    for l in range(m_count):
        for i in range(k_count):
            h = channels[i]
            w = w_star[l, i]
            gain = float(np.real(h.conj() @ w @ h))
            floor = 1e-14 * float(np.real(np.trace(w))) * float(np.real(h.conj() @ h))
            if gain <= floor:
                continue  # nothing received through h: fold the block into r_bar
            vec = (w @ h) / np.sqrt(gain)
            w_bar[l, i] = np.outer(vec, vec.conj())

    r_bar = np.zeros_like(r_star)
    for l in range(m_count):
        r_bar[l] = w_star[l].sum(axis=0) + r_star[l] - w_bar[l].sum(axis=0)
        r_bar[l] = 0.5 * (r_bar[l] + r_bar[l].conj().T)
        mineig = float(np.linalg.eigvalsh(r_bar[l])[0])
        if mineig < -1e-8 * scale:
            raise ReconstructionError(f"reconstructed sensing covariance lost PSD: min eig {mineig:.3e}")
        total_before = w_star[l].sum(axis=0) + r_star[l]
        total_after = w_bar[l].sum(axis=0) + r_bar[l]
        err = float(np.linalg.norm(total_after - total_before))
        if err > 1e-10 * scale:
            raise ReconstructionError(f"per-station covariance total changed by {err:.3e}")

    return w_bar, r_bar


def _reconstruct_all(
    scenario: model.Scenario,
    association: np.ndarray,
    trajectories: np.ndarray,
    covs: CovarianceSet,
) -> CovarianceSet:
    serving_all = np.argmax(np.asarray(association), axis=0)
    out = covs.copy()
    for n in range(scenario.num_slots):
        channels = np.stack(
            [
                _pair_channel(scenario, trajectories, int(serving_all[k, n]), k, n)
                for k in range(scenario.num_uavs)
            ]
        )
        w_bar, r_bar = rank_one_reconstruct(covs.w[:, :, n], covs.r[:, n], channels, scenario.p_max)
        out.w[:, :, n] = w_bar
        out.r[:, n] = r_bar
    return out


@dataclass(frozen=True)
class BeamformingOptions:
    max_iterations: int = 30
    rel_tol: float = 1e-4
    reconstruct: bool = True
    settings: SolverSettings = field(default_factory=SolverSettings)


@dataclass
class BeamformingTrace:
    """Per-iteration surrogate and exact objectives plus solver statuses."""

    surrogate: list = field(default_factory=list)
    exact: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    seconds: float = 0.0
    converged: bool = False


def _exact_objective(
    scenario: model.Scenario,
    association: np.ndarray,
    trajectories: np.ndarray,
    covs: CovarianceSet,
) -> float:
    design = model.Design(
        w_cov=covs.w,
        r_cov=covs.r,
        trajectories=np.asarray(trajectories, dtype=float),
        association=np.asarray(association, dtype=np.int8),
    )
    return model.total_rate(design, scenario)


def optimize_beamforming(
    scenario: model.Scenario,
    association: np.ndarray,
    trajectories: np.ndarray,
    initial: CovarianceSet,
    options: BeamformingOptions | None = None,
):
    """SCA loop over the per-slot surrogate SDPs.

    The initial covariances must satisfy power and illumination
    constraints; every iterate then stays feasible and the exact sum
    rate never decreases. Returns (covariances, trace).
    """
    options = options or BeamformingOptions()
    start = time.perf_counter()
    current = initial.copy()
    exact = _exact_objective(scenario, association, trajectories, current)
    best, best_exact = current, exact
    trace = BeamformingTrace()
    for _ in range(options.max_iterations):
        current, surrogate, statuses = solve_sdr_subproblem(
            scenario, association, trajectories, current, options.settings
        )
        new_exact = _exact_objective(scenario, association, trajectories, current)
        trace.surrogate.append(float(surrogate))
        trace.exact.append(float(new_exact))
        trace.statuses.append(statuses)
        improvement = new_exact - exact
        exact = new_exact
        if new_exact >= best_exact:
            best, best_exact = current, new_exact
        if improvement < options.rel_tol * max(1.0, abs(exact)):
            trace.converged = True
            break
    current, exact = best, best_exact
    if options.reconstruct:
        reconstructed = _reconstruct_all(scenario, association, trajectories, current)
        after = _exact_objective(scenario, association, trajectories, reconstructed)
        if abs(after - exact) > 1e-7 * max(1.0, abs(exact)):
            raise ReconstructionError(
                f"rank-one reconstruction moved the objective from {exact!r} to {after!r}"
            )
        current = reconstructed
    trace.seconds = time.perf_counter() - start
    return current, trace


def _mrt_covariances(
    scenario: model.Scenario,
    association: np.ndarray,
    trajectories: np.ndarray,
    rho: float,
) -> CovarianceSet:
    """MRT toward served UAVs at fraction rho plus isotropic remainder."""
    m_count, k_count, n_count, na = (
        scenario.num_gbs,
        scenario.num_uavs,
        scenario.num_slots,
        scenario.num_antennas,
    )
    w = np.zeros((m_count, k_count, n_count, na, na), dtype=complex)
    r = np.zeros((m_count, n_count, na, na), dtype=complex)
    serving_all = np.argmax(np.asarray(association), axis=0)
    eye = np.eye(na, dtype=complex)
    for n in range(n_count):
        served = [[] for _ in range(m_count)]
        for k in range(k_count):
            served[int(serving_all[k, n])].append(k)
        for l in range(m_count):
            r[l, n] = (1.0 - rho) * scenario.p_max / na * eye
            if not served[l]:
                continue
            share = rho * scenario.p_max / len(served[l])
            for k in served[l]:
                h = _pair_channel(scenario, trajectories, l, k, n)
                w[l, k, n] = share * np.outer(h, h.conj()) / float(np.real(h.conj() @ h))
    return CovarianceSet(w=w, r=r)


def initial_covariances(
    scenario: model.Scenario,
    association: np.ndarray,
    trajectories: np.ndarray,
    settings: SolverSettings | None = None,
) -> CovarianceSet:
    """Feasible starting covariances for the SCA loop.

    Bisects the MRT power fraction rho down from 1 until every
    illumination constraint holds. If even rho = 0 (all power isotropic)
    falls short, falls back to the sensing-first covariances from the
    max-min illumination program, which exist exactly when the threshold
    is reachable at all; otherwise raises SensingInfeasibleError.
    """
    if scenario.gamma <= 0:
        return _mrt_covariances(scenario, association, trajectories, 1.0)

    def min_illumination(rho: float) -> float:
        covs = _mrt_covariances(scenario, association, trajectories, rho)
        design = model.Design(
            w_cov=covs.w,
            r_cov=covs.r,
            trajectories=np.asarray(trajectories, dtype=float),
            association=np.asarray(association, dtype=np.int8),
        )
        return float(model.illumination_matrix(design, scenario, clamp=True).min())

    margin = scenario.gamma * (1.0 + 1e-9)
    if min_illumination(1.0) >= margin:
        return _mrt_covariances(scenario, association, trajectories, 1.0)
    if min_illumination(0.0) < scenario.gamma:
        # steered sensing can still reach thresholds isotropic power cannot
        from netisac import orchestrator

        best, x_opt = orchestrator.max_min_illumination(scenario, settings, return_covariances=True)
        if best < margin:
            raise SensingInfeasibleError(
                scenario.gamma,
                scenario.p_max,
                f"max-min illumination {best:.6g} W below threshold",
            )
        covs = CovarianceSet(
            w=np.zeros(
                (scenario.num_gbs, scenario.num_uavs, scenario.num_slots, scenario.num_antennas, scenario.num_antennas),
                dtype=complex,
            ),
            r=np.repeat(x_opt[:, None], scenario.num_slots, axis=1),
        )
        return covs
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if min_illumination(mid) >= margin:
            lo = mid
        else:
            hi = mid
    return _mrt_covariances(scenario, association, trajectories, lo)
