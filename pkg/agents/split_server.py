"""
Split-server side of one client/split-server round.

On receiving the unperturbed embedding h the server runs tau zeroth-order
steps on its own parameters, all against that same stale h. It then answers
the client with delta_c = F(x_s, h+) - F(x_s, h-) evaluated at the updated
x_s.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from agno.utils.log import logger

from agents.messages import DownLink, UpLink
from model.split_model import SplitModel, dims, forward_server_loss
from zo.estimator import NonFiniteLossError, check_finite, sample_direction, zo_estimate_averaged

ServerLossFn = Callable[[SplitModel, np.ndarray, np.ndarray, np.ndarray], float]


@dataclass
class ServerRoundState:
    model: SplitModel
    params: np.ndarray
    eta_s: float
    tau: int
    lam: float
    num_perturbations: int = 1
    step: int = 0
    loss_evaluations: int = 0
    step_losses: list[float] = field(default_factory=list)
    loss_fn: ServerLossFn = forward_server_loss

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        self.params = self.params.copy()

    def loss(self, params: np.ndarray, embedding: np.ndarray, labels: np.ndarray) -> float:
        self.loss_evaluations += 1
        return self.loss_fn(self.model, params, embedding, labels)


def server_unbalanced_update(
    state: ServerRoundState, h: np.ndarray, labels: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """
    Run tau zeroth-order steps on the server parameters using the stale h.

    Each step samples u_s, forms G_s = (delta_s / 2 lambda) u_s and applies
    x_s <- x_s - eta_s G_s. Exactly 2 * tau loss evaluations are made (per
    direction).

    Args:
        state: Server round state, updated in place
        h: Unperturbed cut-layer embedding from the client
        labels: Labels of the batch
        rng: Server stream for the round

    Returns:
        Server parameters after tau steps
    """
    _, _, d_s = dims(state.model)

    def loss_at(params: np.ndarray) -> float:
        return state.loss(params, h, labels)

    while state.step < state.tau:
        directions = [sample_direction(d_s, rng) for _ in range(state.num_perturbations)]
        try:
            estimate = zo_estimate_averaged(loss_at, state.params, directions, state.lam)
        except NonFiniteLossError as e:
            raise NonFiniteLossError(e.which, e.value, step=state.step) from e
        state.step_losses.append(0.5 * (estimate.loss_plus + estimate.loss_minus))
        state.params = state.params - state.eta_s * estimate.gradient
        state.step += 1

    logger.debug(f"Server finished {state.tau} steps, losses={state.step_losses}")
    return state.params


def server_emit_delta(state: ServerRoundState, uplink: UpLink) -> DownLink:
    """Loss difference of the perturbed embeddings under the updated server model."""
    if state.step != state.tau:
        raise RuntimeError(
            f"delta requested after {state.step} of {state.tau} server steps"
        )
    deltas = []
    for h_plus, h_minus in uplink.perturbed:
        loss_plus = check_finite(state.loss(state.params, h_plus, uplink.labels), "loss at h+")
        loss_minus = check_finite(state.loss(state.params, h_minus, uplink.labels), "loss at h-")
        deltas.append(loss_plus - loss_minus)
    return DownLink(deltas=tuple(deltas), nonce=uplink.nonce)
