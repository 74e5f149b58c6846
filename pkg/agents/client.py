"""
Client side of one client/split-server round.

The client samples a fresh direction, sends the unperturbed and the two
perturbed cut-layer embeddings, and later updates its parameters from the
scalar loss difference the server returns.
"""

from dataclasses import dataclass

import numpy as np
from agno.utils.log import logger

from agents.messages import DownLink, UpLink
from model.split_model import Batch, SplitModel, dims, forward_client
from zo.estimator import check_finite, sample_direction


class StaleDirectionError(ValueError):
    """A DownLink does not belong to the round the client is in."""


@dataclass
class ClientRoundState:
    model: SplitModel
    params: np.ndarray
    directions: tuple[np.ndarray, ...]
    batch: Batch
    eta_c: float
    lam: float
    nonce: int
    forward_passes: int = 0

    @property
    def direction(self) -> np.ndarray:
        return self.directions[0]


def start_client_round(
    model: SplitModel,
    params: np.ndarray,
    batch: Batch,
    rng: np.random.Generator,
    eta_c: float,
    lam: float,
    num_perturbations: int = 1,
) -> ClientRoundState:
    """
    Open a client round with freshly sampled directions.

    Args:
        model: Split architecture
        params: Client parameters pulled from the global model
        batch: This round's minibatch
        rng: Client stream for the round
        eta_c: Client learning rate
        lam: Perturbation scale
        num_perturbations: Directions per round (1 unless studying variance)

    Returns:
        ClientRoundState holding a private copy of the parameters
    """
    _, d_c, _ = dims(model)
    directions = tuple(sample_direction(d_c, rng) for _ in range(num_perturbations))
    nonce = int(rng.integers(0, 2**63 - 1))
    return ClientRoundState(
        model=model,
        params=params.copy(),
        directions=directions,
        batch=batch,
        eta_c=eta_c,
        lam=lam,
        nonce=nonce,
    )


def client_emit_embeddings(state: ClientRoundState) -> UpLink:
    """Compute h, h+ and h- for the round; the client parameters are left as they are."""
    h = forward_client(state.model, state.params, state.batch)
    state.forward_passes += 1
    perturbed = []
    for u in state.directions:
        step = state.lam * u
        h_plus = forward_client(state.model, state.params + step, state.batch)
        h_minus = forward_client(state.model, state.params - step, state.batch)
        state.forward_passes += 2
        perturbed.append((h_plus, h_minus))
    return UpLink(h=h, perturbed=tuple(perturbed), labels=state.batch.labels, nonce=state.nonce)


def client_apply_update(state: ClientRoundState, downlink: DownLink) -> np.ndarray:
    """
    Apply x_c <- x_c - eta_c * (delta / 2 lambda) * u_c.

    With several directions the per-direction estimates are averaged.
    """
    if downlink.nonce != state.nonce:
        raise StaleDirectionError(
            f"DownLink nonce {downlink.nonce} does not match round nonce {state.nonce}"
        )
    if len(downlink.deltas) != len(state.directions):
        raise StaleDirectionError(
            f"Expected {len(state.directions)} deltas, got {len(downlink.deltas)}"
        )

    two_lam = 2.0 * state.lam
    if len(state.directions) == 1:
        delta = check_finite(downlink.delta, "client delta")
        gradient = (delta / two_lam) * state.direction
    else:
        gradient = np.zeros_like(state.params)
        for delta, u in zip(downlink.deltas, state.directions):
            gradient += (check_finite(delta, "client delta") / two_lam) * u
        gradient /= len(state.directions)

    logger.debug(f"Client update: delta={downlink.deltas}, eta_c={state.eta_c}")
    state.params = state.params - state.eta_c * gradient
    return state.params
