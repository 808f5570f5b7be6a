"""Deployment model and exact physical quantities.

Everything downstream (beamforming, trajectory design, orchestration)
treats this module as ground truth: channels and steering vectors of the
uniform linear arrays, per-UAV SINR and rates under cooperative
transmission, illumination power delivered to the monitored airspace
points, and constraint checking for complete designs.

Conventions: distances in meters, powers in watts, rates in bit/s/Hz.
Slots are indexed 0..N-1; slot 0 holds the initial UAV positions and
slot N-1 the final ones. Angles are never stored; steering phases are
built directly from cos(theta) = altitude / distance.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "ConstraintReport",
    "ConstraintTolerances",
    "Design",
    "PsdViolationError",
    "Scenario",
    "ScenarioError",
    "Violation",
    "aod",
    "average_sum_rate",
    "channel_vector",
    "channel_vectors",
    "check_constraints",
    "db_to_linear",
    "dbw_to_watts",
    "illumination_matrix",
    "illumination_power",
    "rate",
    "rate_matrix",
    "sinr",
    "steering_vector",
    "straight_line_trajectories",
    "sum_rate",
    "total_rate",
]

# Negative quadratic forms beyond this relative tolerance mean a matrix
# that should have been PSD was not.
QUAD_FORM_RTOL = 1e-9


class ScenarioError(ValueError):
    """A scenario field or invariant is invalid."""


class PsdViolationError(RuntimeError):
    """A quadratic form of a supposedly PSD matrix came out negative
    beyond tolerance, indicating a bad covariance upstream."""


def dbw_to_watts(value_dbw: float) -> float:
    """Convert a dBW level to watts."""
    return float(10.0 ** (np.asarray(value_dbw, dtype=float) / 10.0))


def db_to_linear(value_db: float) -> float:
    """Convert a dB gain to linear scale."""
    return float(10.0 ** (np.asarray(value_db, dtype=float) / 10.0))


def _as_float_array(value, shape_hint: str, name: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"field {name}: expected numeric array {shape_hint}") from exc
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"field {name}: all entries must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class Scenario:
    """Immutable deployment description.

    Attributes:
        gbs_positions: (M, 2) ground-station coordinates in meters.
        uav_initial: (K, 2) initial horizontal UAV positions.
        uav_final: (K, 2) final horizontal UAV positions.
        uav_altitudes: (K,) flight altitudes, constant per UAV.
        sensing_points: (Q, 2) horizontal coordinates of the monitored
            airspace points.
        sensing_altitude: altitude of the monitored points.
        num_antennas: antennas per station (uniform linear array).
        num_slots: number of time slots N (positions at both endpoints
            are pinned, so the flight takes (N - 1) slot durations).
        slot_duration: slot length in seconds.
        p_max: per-station transmit power budget in watts.
        gamma: illumination power threshold in watts (0 disables).
        v_max: maximum UAV speed in m/s.
        d_min: minimum pairwise UAV separation in meters (0 disables).
        kappa: channel power gain at 1 m reference distance (linear).
        noise_power: receiver noise power in watts.
        antenna_spacing_over_wavelength: array spacing d / lambda.
    """

    gbs_positions: np.ndarray
    uav_initial: np.ndarray
    uav_final: np.ndarray
    uav_altitudes: np.ndarray
    sensing_points: np.ndarray
    sensing_altitude: float
    num_antennas: int
    num_slots: int
    slot_duration: float
    p_max: float
    gamma: float
    v_max: float
    d_min: float
    kappa: float
    noise_power: float
    antenna_spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        set_attr = object.__setattr__
        gbs = _as_float_array(self.gbs_positions, "(M, 2)", "gbs_positions")
        if gbs.ndim != 2 or gbs.shape[1] != 2 or gbs.shape[0] < 1:
            raise ScenarioError("field gbs_positions: expected shape (M, 2) with M >= 1")
        uav_i = _as_float_array(self.uav_initial, "(K, 2)", "uav_initial")
        uav_f = _as_float_array(self.uav_final, "(K, 2)", "uav_final")
        alts = _as_float_array(self.uav_altitudes, "(K,)", "uav_altitudes")
        if uav_i.ndim != 2 or uav_i.shape[1] != 2 or uav_i.shape[0] < 1:
            raise ScenarioError("field uav_initial: expected shape (K, 2) with K >= 1")
        if uav_f.shape != uav_i.shape:
            raise ScenarioError("field uav_final: shape must match uav_initial")
        if alts.shape != (uav_i.shape[0],):
            raise ScenarioError("field uav_altitudes: expected shape (K,)")
        sense = _as_float_array(self.sensing_points, "(Q, 2)", "sensing_points")
        if sense.ndim != 2 or sense.shape[1] != 2 or sense.shape[0] < 1:
            raise ScenarioError("field sensing_points: expected shape (Q, 2) with Q >= 1")

        scalars = {
            "sensing_altitude": self.sensing_altitude,
            "slot_duration": self.slot_duration,
            "p_max": self.p_max,
            "gamma": self.gamma,
            "v_max": self.v_max,
            "d_min": self.d_min,
            "kappa": self.kappa,
            "noise_power": self.noise_power,
            "antenna_spacing_over_wavelength": self.antenna_spacing_over_wavelength,
        }
        for name, value in scalars.items():
            try:
                val = float(value)
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"field {name}: expected a real number") from exc
            if not np.isfinite(val):
                raise ScenarioError(f"field {name}: must be finite")
            set_attr(self, name, val)
        for name in ("num_antennas", "num_slots"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ScenarioError(f"field {name}: expected an integer")
            set_attr(self, name, int(value))

        # count invariant: at least one station, UAV, sensing point, antenna, slot
        if self.num_antennas < 1:
            raise ScenarioError("count invariant: num_antennas >= 1 required")
        if self.num_slots < 1:
            raise ScenarioError("count invariant: num_slots >= 1 required")
        # positivity invariant
        if np.any(alts <= 0):
            raise ScenarioError("positivity invariant: uav_altitudes must be > 0")
        if self.sensing_altitude <= 0:
            raise ScenarioError("positivity invariant: sensing_altitude must be > 0")
        for name in ("slot_duration", "p_max", "kappa", "noise_power"):
            if getattr(self, name) <= 0:
                raise ScenarioError(f"positivity invariant: {name} must be > 0")
        for name in ("gamma", "v_max", "d_min"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"positivity invariant: {name} must be >= 0")
        if self.antenna_spacing_over_wavelength <= 0:
            raise ScenarioError("positivity invariant: antenna_spacing_over_wavelength must be > 0")

        # straight-line-reachability invariant: the final position must be
        # reachable within (N - 1) slots at v_max
        horizon = (self.num_slots - 1) * self.v_max * self.slot_duration
        span = np.linalg.norm(uav_f - uav_i, axis=1)
        slack = 1e-9 * max(1.0, horizon)
        if np.any(span > horizon + slack):
            k = int(np.argmax(span - horizon))
            raise ScenarioError(
                "straight-line-reachability invariant: UAV %d needs %.6g m but can "
                "cover at most %.6g m in %d slots at v_max" % (k, span[k], horizon, self.num_slots)
            )

        # endpoint-separation invariant: pinned positions must respect d_min
        for label, pts in (("initial", uav_i), ("final", uav_f)):
            for a in range(pts.shape[0]):
                for b in range(a + 1, pts.shape[0]):
                    sep2 = float(np.sum((pts[a] - pts[b]) ** 2) + (alts[a] - alts[b]) ** 2)
                    if sep2 < self.d_min**2 * (1.0 - 1e-9):
                        raise ScenarioError(
                            "endpoint-separation invariant: %s positions of UAVs %d and %d "
                            "are %.6g m apart, below d_min = %.6g" % (label, a, b, np.sqrt(sep2), self.d_min)
                        )

        for name, arr in (
            ("gbs_positions", gbs),
            ("uav_initial", uav_i),
            ("uav_final", uav_f),
            ("uav_altitudes", alts),
            ("sensing_points", sense),
        ):
            arr.setflags(write=False)
            set_attr(self, name, arr)

    @property
    def num_gbs(self) -> int:
        return int(self.gbs_positions.shape[0])

    @property
    def num_uavs(self) -> int:
        return int(self.uav_initial.shape[0])

    @property
    def num_sensing(self) -> int:
        return int(self.sensing_points.shape[0])

    def with_updates(self, **changes) -> "Scenario":
        """Return a copy with the given fields replaced and revalidated."""
        return dataclasses.replace(self, **changes)

    @cached_property
    def sensing_distances(self) -> np.ndarray:
        """(M, Q) distances from each station to each monitored point."""
        diff = self.sensing_points[None, :, :] - self.gbs_positions[:, None, :]
        d = np.sqrt(np.sum(diff**2, axis=-1) + self.sensing_altitude**2)
        d.setflags(write=False)
        return d

    @cached_property
    def sensing_steering(self) -> np.ndarray:
        """(M, Q, Na) steering vectors toward each monitored point."""
        cos_t = self.sensing_altitude / self.sensing_distances
        p = np.arange(self.num_antennas)
        phase = 2.0 * np.pi * self.antenna_spacing_over_wavelength * cos_t[:, :, None] * p
        a = np.exp(1j * phase)
        a.setflags(write=False)
        return a

    @cached_property
    def sensing_forms(self) -> np.ndarray:
        """(M, Q, Na, Na) matrices a a^H / d^2: illumination power toward
        point q is sum_l tr(form[l, q] @ X_l)."""
        a = self.sensing_steering
        forms = a[:, :, :, None] * a[:, :, None, :].conj() / self.sensing_distances[:, :, None, None] ** 2
        forms.setflags(write=False)
        return forms


def straight_line_trajectories(scenario: Scenario) -> np.ndarray:
    """(K, N, 2) constant-speed straight paths between the endpoints."""
    n = scenario.num_slots
    if n == 1:
        return scenario.uav_initial[:, None, :].copy()
    frac = np.arange(n, dtype=float)[None, :, None] / (n - 1)
    start = scenario.uav_initial[:, None, :]
    end = scenario.uav_final[:, None, :]
    return start + frac * (end - start)


@dataclass
class Design:
    """One complete design point: covariances, trajectories, association.

    Attributes:
        w_cov: (M, K, N, Na, Na) complex communication covariances, where
            w_cov[m, k, n] is the covariance station m spends on UAV k.
        r_cov: (M, N, Na, Na) complex dedicated sensing covariances.
        trajectories: (K, N, 2) horizontal UAV positions.
        association: (M, K, N) 0/1, exactly one station per UAV and slot.
    """

    w_cov: np.ndarray
    r_cov: np.ndarray
    trajectories: np.ndarray
    association: np.ndarray

    @classmethod
    def zeros(cls, scenario: Scenario) -> "Design":
        m, k, n, na = (
            scenario.num_gbs,
            scenario.num_uavs,
            scenario.num_slots,
            scenario.num_antennas,
        )
        assoc = np.zeros((m, k, n), dtype=np.int8)
        assoc[0, :, :] = 1
        return cls(
            w_cov=np.zeros((m, k, n, na, na), dtype=complex),
            r_cov=np.zeros((m, n, na, na), dtype=complex),
            trajectories=straight_line_trajectories(scenario),
            association=assoc,
        )

    def copy(self) -> "Design":
        return Design(
            w_cov=self.w_cov.copy(),
            r_cov=self.r_cov.copy(),
            trajectories=self.trajectories.copy(),
            association=self.association.copy(),
        )

    def transmit_covariances(self) -> np.ndarray:
        """(M, N, Na, Na) total per-station covariances X = sum_k W + R."""
        return self.w_cov.sum(axis=1) + self.r_cov

    def associated_gbs(self) -> np.ndarray:
        """(K, N) index of the station serving each UAV and slot."""
        assoc = self.association
        if not np.all(assoc.sum(axis=0) == 1):
            raise ValueError("association invariant: exactly one station per UAV and slot")
        return np.argmax(assoc, axis=0)


def aod(q: np.ndarray, u: np.ndarray, h_alt: float) -> float:
    """Angle of departure from a station at u toward altitude h_alt above q.

    Measured from the vertical array axis: 0 directly overhead, pi/2 at
    the horizon.
    """
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    h_alt = float(h_alt)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(u)) and np.isfinite(h_alt)):
        raise ValueError("aod: positions and altitude must be finite")
    if h_alt <= 0:
        raise ValueError("aod: altitude must be positive")
    horiz = float(np.linalg.norm(q - u))
    return float(np.arccos(h_alt / np.hypot(horiz, h_alt)))


def steering_vector(cos_theta: float, n_a: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Unit-modulus ULA steering vector for direction cosine cos_theta."""
    cos_theta = float(cos_theta)
    if abs(cos_theta) > 1.0 + 1e-12:
        raise ValueError("steering_vector: |cos_theta| must be <= 1")
    cos_theta = min(1.0, max(-1.0, cos_theta))
    p = np.arange(int(n_a))
    return np.exp(2j * np.pi * spacing_ratio * p * cos_theta)


def channel_vector(scenario: Scenario, m: int, q_k: np.ndarray, h_k: float) -> np.ndarray:
    """Line-of-sight channel from station m to a UAV at (q_k, h_k)."""
    q_k = np.asarray(q_k, dtype=float)
    u = scenario.gbs_positions[m]
    d2 = float(np.sum((q_k - u) ** 2) + h_k**2)
    beta = scenario.kappa / d2
    cos_t = h_k / np.sqrt(d2)
    g = steering_vector(cos_t, scenario.num_antennas, scenario.antenna_spacing_over_wavelength)
    return np.sqrt(beta) * g


def channel_vectors(scenario: Scenario, trajectories: np.ndarray) -> np.ndarray:
    """(M, K, N, Na) channels from every station to every UAV and slot."""
    traj = np.asarray(trajectories, dtype=float)
    diff = traj[None, :, :, :] - scenario.gbs_positions[:, None, None, :]
    alt = scenario.uav_altitudes[None, :, None]
    d2 = np.sum(diff**2, axis=-1) + alt**2
    beta = scenario.kappa / d2
    cos_t = alt / np.sqrt(d2)
    p = np.arange(scenario.num_antennas)
    phase = 2.0 * np.pi * scenario.antenna_spacing_over_wavelength * cos_t[..., None] * p
    return np.sqrt(beta)[..., None] * np.exp(1j * phase)


def _validated_form(value: complex, scale: float, clamp: bool) -> float:
    real = float(np.real(value))
    if real < -QUAD_FORM_RTOL * max(1e-30, scale):
        if clamp:
            return 0.0
        raise PsdViolationError(
            "quadratic form %.3e is negative beyond -%g relative: covariance not PSD" % (real, QUAD_FORM_RTOL)
        )
    return max(real, 0.0)


def _slot_power_scale(design: Design, n: int) -> float:
    """Total |trace| of every covariance active at slot n."""
    total = float(np.abs(np.einsum("liaa->", design.w_cov[:, :, n])))
    total += float(np.abs(np.einsum("laa->", design.r_cov[:, n])))
    return total


def _quad_form(mat: np.ndarray, vec: np.ndarray, scale: float, clamp: bool = False) -> float:
    value = vec.conj() @ mat @ vec
    return _validated_form(value, scale, clamp)


def sinr(design: Design, scenario: Scenario, m: int, k: int, n: int) -> float:
    """SINR of the (station m, UAV k) pair at slot n.

    Every term, including interference radiated by other stations, is
    evaluated through the channel of the (m, k) pair, so a UAV's rate
    depends only on its own serving station.
    """
    h = channel_vector(scenario, m, design.trajectories[k, n], float(scenario.uav_altitudes[k]))
    scale = _slot_power_scale(design, n) * float(np.real(h.conj() @ h))
    signal = _quad_form(design.w_cov[m, k, n], h, scale)
    total = 0.0
    for l in range(scenario.num_gbs):
        for i in range(scenario.num_uavs):
            total += _quad_form(design.w_cov[l, i, n], h, scale)
        total += _quad_form(design.r_cov[l, n], h, scale)
    interference = total - signal + scenario.noise_power
    return signal / interference


def rate(design: Design, scenario: Scenario, m: int, k: int, n: int) -> float:
    """Achievable rate log2(1 + SINR) of the (m, k) pair at slot n."""
    return float(np.log2(1.0 + sinr(design, scenario, m, k, n)))


def _all_quadratic_forms(design: Design, scenario: Scenario, clamp: bool):
    """Quadratic forms of every covariance through every pair channel.

    Returns (forms_w, forms_r) with shapes (M, K, N, M, K) and
    (M, K, N, M): forms_w[m, k, n, l, i] = h_{m,k,n}^H W_{l,i,n} h_{m,k,n}.
    """
    ch = channel_vectors(scenario, design.trajectories)
    forms_w = np.einsum("mkna,linab,mknb->mknli", ch.conj(), design.w_cov, ch, optimize=True)
    forms_r = np.einsum("mkna,lnab,mknb->mknl", ch.conj(), design.r_cov, ch, optimize=True)
    norm_h = np.sum(np.abs(ch) ** 2, axis=-1)
    slot_scale = np.abs(np.einsum("linaa->n", design.w_cov)) + np.abs(np.einsum("lnaa->n", design.r_cov))
    scale = slot_scale[None, None, :] * norm_h
    scale_w = scale[:, :, :, None, None]
    scale_r = scale[:, :, :, None]
    if not clamp:
        for forms, sc in ((forms_w, scale_w), (forms_r, scale_r)):
            bad = forms.real < -QUAD_FORM_RTOL * np.maximum(1e-30, sc)
            if np.any(bad):
                raise PsdViolationError(
                    "quadratic form %.3e is negative beyond -%g relative: covariance not PSD"
                    % (float(forms.real[bad].min()), QUAD_FORM_RTOL)
                )
    return np.maximum(forms_w.real, 0.0), np.maximum(forms_r.real, 0.0)


def rate_matrix(design: Design, scenario: Scenario, clamp: bool = False) -> np.ndarray:
    """(M, K, N) rates of every potential pair under the current design."""
    forms_w, forms_r = _all_quadratic_forms(design, scenario, clamp)
    m_idx = np.arange(scenario.num_gbs)[:, None, None]
    k_idx = np.arange(scenario.num_uavs)[None, :, None]
    n_idx = np.arange(scenario.num_slots)[None, None, :]
    signal = forms_w[m_idx, k_idx, n_idx, m_idx, k_idx]
    interference = forms_w.sum(axis=(3, 4)) - signal + forms_r.sum(axis=3) + scenario.noise_power
    return np.log2(1.0 + signal / interference)


def _associated_rates(design: Design, scenario: Scenario) -> np.ndarray:
    """(K, N) rate of each UAV through its associated station."""
    rm = rate_matrix(design, scenario)
    serving = design.associated_gbs()
    k_idx = np.arange(scenario.num_uavs)[:, None]
    n_idx = np.arange(scenario.num_slots)[None, :]
    return rm[serving, k_idx, n_idx]


def sum_rate(design: Design, scenario: Scenario, n: int) -> float:
    """Sum over UAVs of the associated-pair rates at slot n."""
    total = 0.0
    for k in range(scenario.num_uavs):
        picks = np.flatnonzero(design.association[:, k, n])
        if picks.size != 1:
            raise ValueError("association invariant: exactly one station per UAV and slot")
        total += rate(design, scenario, int(picks[0]), k, n)
    return total


def total_rate(design: Design, scenario: Scenario) -> float:
    """Sum of the per-slot sum rates over the whole flight."""
    return float(_associated_rates(design, scenario).sum())


def average_sum_rate(design: Design, scenario: Scenario) -> float:
    """Average over slots of the per-slot sum rate."""
    return total_rate(design, scenario) / scenario.num_slots


def illumination_power(design: Design, scenario: Scenario, q: int, n: int) -> float:
    """Illumination power delivered to monitored point q at slot n."""
    total = 0.0
    scale = _slot_power_scale(design, n) * scenario.num_antennas
    for l in range(scenario.num_gbs):
        x = design.w_cov[l, :, n].sum(axis=0) + design.r_cov[l, n]
        a = scenario.sensing_steering[l, q]
        val = a.conj() @ x @ a
        total += _validated_form(val, scale, clamp=False) / scenario.sensing_distances[l, q] ** 2
    return total


def illumination_matrix(design: Design, scenario: Scenario, clamp: bool = False) -> np.ndarray:
    """(Q, N) illumination power at every monitored point and slot."""
    x = design.transmit_covariances()
    vals = np.einsum("mqab,mnba->qn", scenario.sensing_forms, x, optimize=True).real
    if not clamp and vals.size:
        scale = np.einsum("mnaa->n", np.abs(x)).real.max() * scenario.num_antennas
        if vals.min() < -QUAD_FORM_RTOL * max(1e-300, float(scale)):
            raise PsdViolationError("negative illumination power: covariance not PSD")
    return np.maximum(vals, 0.0)


@dataclass(frozen=True)
class ConstraintTolerances:
    """Feasibility slacks used by check_constraints."""

    power_rel: float = 1e-6
    psd_rel: float = 1e-9
    sensing_rel: float = 1e-6
    endpoint_abs: float = 1e-6
    speed_rel: float = 1e-6
    collision_rel: float = 1e-6


@dataclass(frozen=True)
class Violation:
    """One constraint violation: family, non-slot index, slot, magnitude."""

    family: str
    index: tuple
    slot: int
    magnitude: float


@dataclass
class ConstraintReport:
    """Worst violation and count per constraint family."""

    worst: dict
    counts: dict

    @property
    def feasible(self) -> bool:
        return not self.counts

    def __bool__(self) -> bool:
        return bool(self.counts)

    def total(self) -> int:
        return int(sum(self.counts.values()))

    def describe(self) -> str:
        if self.feasible:
            return "feasible"
        parts = []
        for family, violation in self.worst.items():
            parts.append(
                "%s: %d violation(s), worst %.3e at index %s slot %d"
                % (family, self.counts[family], violation.magnitude, violation.index, violation.slot)
            )
        return "; ".join(parts)


def check_constraints(
    design: Design,
    scenario: Scenario,
    tolerances: ConstraintTolerances | None = None,
) -> ConstraintReport:
    """Evaluate every deployment constraint on a design.

    Violations are reported as data, never raised; each family keeps its
    worst offender and a count.
    """
    tol = tolerances or ConstraintTolerances()
    worst: dict[str, Violation] = {}
    counts: dict[str, int] = {}

    def record(family: str, index: tuple, slot: int, magnitude: float):
        counts[family] = counts.get(family, 0) + 1
        if family not in worst or magnitude > worst[family].magnitude:
            worst[family] = Violation(family, index, slot, float(magnitude))

    m_count, k_count, n_count = scenario.num_gbs, scenario.num_uavs, scenario.num_slots

    # association: binary entries, exactly one station per UAV and slot
    assoc = design.association
    for k in range(k_count):
        for n in range(n_count):
            col = assoc[:, k, n]
            if np.any((col != 0) & (col != 1)) or int(col.sum()) != 1:
                record("association", (k,), n, abs(float(col.sum()) - 1.0))

    # psd: every covariance block
    for n in range(n_count):
        for l in range(m_count):
            for i in range(k_count):
                w = design.w_cov[l, i, n]
                floor = -tol.psd_rel * max(1.0, float(np.trace(w).real))
                mineig = float(np.linalg.eigvalsh(0.5 * (w + w.conj().T))[0])
                if mineig < floor:
                    record("psd", (l, i), n, -mineig)
            r = design.r_cov[l, n]
            floor = -tol.psd_rel * max(1.0, float(np.trace(r).real))
            mineig = float(np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0])
            if mineig < floor:
                record("psd", (l,), n, -mineig)

    # power: per-station budget
    x = design.transmit_covariances()
    powers = np.einsum("mnaa->mn", x).real
    for l in range(m_count):
        for n in range(n_count):
            excess = powers[l, n] - scenario.p_max
            if excess > tol.power_rel * scenario.p_max:
                record("power", (l,), n, excess)

    # sensing: illumination threshold at every monitored point
    zeta = illumination_matrix(design, scenario, clamp=True)
    deficit = scenario.gamma - zeta
    limit = tol.sensing_rel * max(scenario.gamma, 1e-30)
    for q in range(scenario.num_sensing):
        for n in range(n_count):
            if deficit[q, n] > limit:
                record("sensing", (q,), n, deficit[q, n])

    # endpoint: pinned initial and final positions
    traj = design.trajectories
    for k in range(k_count):
        d0 = float(np.linalg.norm(traj[k, 0] - scenario.uav_initial[k]))
        if d0 > tol.endpoint_abs:
            record("endpoint", (k, "initial"), 0, d0)
        d1 = float(np.linalg.norm(traj[k, n_count - 1] - scenario.uav_final[k]))
        if d1 > tol.endpoint_abs:
            record("endpoint", (k, "final"), n_count - 1, d1)

    # speed: per-slot displacement budget
    step_limit = scenario.v_max * scenario.slot_duration
    for k in range(k_count):
        steps = np.linalg.norm(np.diff(traj[k], axis=0), axis=1)
        for n, step in enumerate(steps):
            over = step - step_limit
            if over > max(1e-9, tol.speed_rel * step_limit):
                record("speed", (k,), n + 1, over)

    # collision: pairwise separation including the altitude gap
    if scenario.d_min > 0:
        dmin2 = scenario.d_min**2
        for a in range(k_count):
            for b in range(a + 1, k_count):
                alt2 = (scenario.uav_altitudes[a] - scenario.uav_altitudes[b]) ** 2
                sep2 = np.sum((traj[a] - traj[b]) ** 2, axis=1) + alt2
                for n in range(n_count):
                    deficit2 = dmin2 - float(sep2[n])
                    if deficit2 > tol.collision_rel * dmin2:
                        record("collision", (a, b), n, deficit2)

    return ConstraintReport(worst=worst, counts=counts)
