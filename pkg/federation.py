"""
Dual-server aggregation.

The Fed Server aggregates the client halves and the Split Server aggregates
its per-client server halves, both with the same rule:

    x^{t+1} = x^t + eta_g * sum_m w_m (x_m - x^t)

over the clients that took part in the round. Participants are always summed
in ascending client id so results are bitwise reproducible.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from agno.utils.log import logger

from model.split_model import DimensionMismatchError

DEFAULT_ETA_G = 0.3


class EmptyParticipantsError(ValueError):
    """Raised when a round has nobody to aggregate or select."""


@dataclass(frozen=True)
class GlobalState:
    x_c: np.ndarray
    x_s: np.ndarray
    round: int = 0
    eta_g: float = DEFAULT_ETA_G
    weights: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ParticipantUpdate:
    client_id: int
    x_c: np.ndarray
    x_s: np.ndarray
    num_samples: int = 1


def normalize_weights(raw: Sequence[float]) -> list[float]:
    """
    Scale raw weights to sum to one.

    The last weight takes the remainder so the sum in list order is exactly
    1.0 in floating point.
    """
    total = float(sum(raw))
    if total <= 0:
        raise ValueError("Aggregation weights must have a positive sum")
    weights = [float(w) / total for w in raw[:-1]]
    weights.append(1.0 - sum(weights))
    return weights


def equal_weights(count: int) -> list[float]:
    return normalize_weights([1.0] * count)


def aggregate(
    state: GlobalState,
    participants: Sequence[ParticipantUpdate],
    weighting: str = "equal",
) -> GlobalState:
    """
    Fold the participants' updated halves into the global model.

    Args:
        state: Global model the participants started the round from
        participants: Updated client and server halves, one per participant
        weighting: "equal" (1/|participants|) or "data-size"

    Returns:
        GlobalState for the next round
    """
    if not participants:
        raise EmptyParticipantsError("Cannot aggregate an empty participant set")
    for p in participants:
        if p.x_c.shape != state.x_c.shape or p.x_s.shape != state.x_s.shape:
            raise DimensionMismatchError(
                f"Client {p.client_id} returned shapes {p.x_c.shape}/{p.x_s.shape}, "
                f"expected {state.x_c.shape}/{state.x_s.shape}"
            )

    ordered = sorted(participants, key=lambda p: p.client_id)
    if weighting == "equal":
        weights = equal_weights(len(ordered))
    elif weighting == "data-size":
        weights = normalize_weights([p.num_samples for p in ordered])
    else:
        raise ValueError(f"Unknown weighting: {weighting}. Use 'equal' or 'data-size'")

    x_c = _aggregate_half(state.x_c, [p.x_c for p in ordered], weights, state.eta_g)
    x_s = _aggregate_half(state.x_s, [p.x_s for p in ordered], weights, state.eta_g)
    logger.debug(
        f"Aggregated {len(ordered)} participants at round {state.round}, eta_g={state.eta_g}"
    )
    return replace(
        state,
        x_c=x_c,
        x_s=x_s,
        round=state.round + 1,
        weights={p.client_id: w for p, w in zip(ordered, weights)},
    )


def _aggregate_half(
    current: np.ndarray, updated: Sequence[np.ndarray], weights: Sequence[float], eta_g: float
) -> np.ndarray:
    if eta_g == 1.0:
        # plain model averaging; a lone participant is copied bit for bit
        if len(updated) == 1:
            return updated[0].copy()
        result = np.zeros_like(current)
        for w, x in zip(weights, updated):
            result += w * x
        return result

    delta = np.zeros_like(current)
    for w, x in zip(weights, updated):
        delta += w * (x - current)
    return current + eta_g * delta


def select_participants(num_clients: int, fraction: float, rng: np.random.Generator) -> list[int]:
    """
    Sample ceil(fraction * M) distinct clients uniformly without replacement.

    Returns:
        Selected client ids in ascending order
    """
    if num_clients < 1:
        raise EmptyParticipantsError("No clients to select from")
    if not 0 < fraction <= 1:
        raise ValueError(f"Participation fraction must be in (0, 1], got {fraction}")
    count = max(1, math.ceil(fraction * num_clients - 1e-9))
    if count == num_clients:
        return list(range(num_clients))
    chosen = rng.choice(num_clients, size=count, replace=False)
    return sorted(int(c) for c in chosen)


def broadcast(state: GlobalState, participants: Sequence[int]) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Independent copies of both global halves for each participating client."""
    return {cid: (state.x_c.copy(), state.x_s.copy()) for cid in sorted(participants)}
