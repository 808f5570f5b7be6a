"""UAV-to-station association.

Because every SINR term of a pair is evaluated through that pair's own
channel, a UAV's rate does not depend on which stations serve the other
UAVs. The joint association problem therefore decomposes into an
independent argmax per UAV and slot, which this module solves exactly.
"""

from __future__ import annotations

import numpy as np

from netisac import model

__all__ = ["optimize_association", "association_from_rates"]


def association_from_rates(rates: np.ndarray) -> np.ndarray:
    """(M, K, N) one-hot association maximizing each pair rate.

    Ties go to the smallest station index.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 3:
        raise ValueError("rates must have shape (M, K, N)")
    best = np.argmax(rates, axis=0)  # argmax returns the first maximizer
    assoc = np.zeros(rates.shape, dtype=np.int8)
    k_idx = np.arange(rates.shape[1])[:, None]
    n_idx = np.arange(rates.shape[2])[None, :]
    assoc[best, k_idx, n_idx] = 1
    return assoc


def optimize_association(design: model.Design, scenario: model.Scenario) -> np.ndarray:
    """Best association for the design's covariances and trajectories."""
    rates = model.rate_matrix(design, scenario)
    return association_from_rates(rates)
