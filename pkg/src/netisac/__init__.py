"""Networked sensing-and-communication design toolkit.

Jointly designs cooperative transmit beamforming, UAV-to-station
association and UAV trajectories for a set of multi-antenna ground
stations that serve authorized UAVs while keeping a monitored airspace
region illuminated above a power threshold.
"""

from netisac.model import (
    ConstraintReport,
    ConstraintTolerances,
    Design,
    PsdViolationError,
    Scenario,
    ScenarioError,
    Violation,
    aod,
    average_sum_rate,
    channel_vector,
    check_constraints,
    dbw_to_watts,
    illumination_matrix,
    illumination_power,
    rate,
    rate_matrix,
    sinr,
    steering_vector,
    sum_rate,
    total_rate,
)

__version__ = "0.1.0"

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
    "check_constraints",
    "dbw_to_watts",
    "illumination_matrix",
    "illumination_power",
    "rate",
    "rate_matrix",
    "sinr",
    "steering_vector",
    "sum_rate",
    "total_rate",
    "__version__",
]
