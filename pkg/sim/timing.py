"""
Simulated round timing.

Each participating client draws a compute delay; the split server spends
tau * t_server on its local steps while it waits. A synchronous round lasts
until both the slowest client and the server are done. Time is in
dimensionless simulation units.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class DelayModel:
    distribution: str
    per_client_means: tuple[float, ...]
    t_server: float
    overhead: float = 0.0

    def __post_init__(self):
        if self.distribution not in ("exponential", "fixed"):
            raise ValueError(
                f"Unknown delay distribution: {self.distribution}. Use 'exponential' or 'fixed'"
            )
        if not self.per_client_means:
            raise ValueError("DelayModel needs at least one client mean")
        if any(not m > 0 for m in self.per_client_means):
            raise ValueError("All client delay means must be positive")
        if not self.t_server > 0:
            raise ValueError(f"t_server must be positive, got {self.t_server}")
        if self.overhead < 0:
            raise ValueError(f"overhead must be >= 0, got {self.overhead}")

    @property
    def num_clients(self) -> int:
        return len(self.per_client_means)


@dataclass(frozen=True)
class RoundTiming:
    client_times: tuple[float, ...]
    straggler_time: float
    server_busy_time: float
    round_wall_clock: float

    @property
    def server_idle_time(self) -> float:
        """Time the server waits on the straggler after finishing its steps."""
        return max(0.0, self.straggler_time - self.server_busy_time)


def build_delay_model(
    num_clients: int,
    t_server: float,
    distribution: str = "exponential",
    client_means: Sequence[float] | None = None,
    base_mean: float | None = None,
    straggler: int | None = None,
    straggler_factor: float = 4.0,
    overhead: float = 0.0,
) -> DelayModel:
    """
    Per-client delay means for an experiment.

    Means come from `client_means` when given, else `base_mean` for everyone,
    else log-spaced over [1, 8] * t_server. A designated straggler has its
    mean multiplied by `straggler_factor`.
    """
    if client_means is not None:
        if len(client_means) != num_clients:
            raise ValueError(
                f"Expected {num_clients} client delay means, got {len(client_means)}"
            )
        means = [float(m) for m in client_means]
    elif base_mean is not None:
        means = [float(base_mean)] * num_clients
    else:
        means = [float(m) for m in np.geomspace(1.0, 8.0, num_clients) * t_server]

    if straggler is not None:
        if not 0 <= straggler < num_clients:
            raise ValueError(f"Straggler id {straggler} out of range for {num_clients} clients")
        means[straggler] *= straggler_factor

    return DelayModel(
        distribution=distribution,
        per_client_means=tuple(means),
        t_server=float(t_server),
        overhead=float(overhead),
    )


def draw_round_timing(
    delay_model: DelayModel, participants: Sequence[int], tau: int, rng: np.random.Generator
) -> RoundTiming:
    """
    Draw one round's client delays and combine them with the server time.

    Args:
        delay_model: Per-client delay means and server step time
        participants: Client ids taking part, in ascending order
        tau: Server steps per round
        rng: Round stream for delay draws

    Returns:
        RoundTiming with wall clock max(straggler, tau * t_server) + overhead
    """
    if not participants:
        raise ValueError("Round timing needs at least one participant")
    means = [delay_model.per_client_means[m] for m in participants]
    if delay_model.distribution == "exponential":
        times = tuple(float(rng.exponential(mean)) for mean in means)
    else:
        times = tuple(means)

    straggler = max(times)
    busy = tau * delay_model.t_server
    return RoundTiming(
        client_times=times,
        straggler_time=straggler,
        server_busy_time=busy,
        round_wall_clock=max(straggler, busy) + delay_model.overhead,
    )


def matched_tau(t_straggler: float, t_server: float) -> int:
    """Server steps that fill the straggler's delay: round(t_straggler / t_server), at least 1."""
    return max(1, math.floor(t_straggler / t_server + 0.5))


@dataclass(frozen=True)
class StragglerIdentity:
    tau: int
    rounds: int
    total_time: float
    reference_time: float

    @property
    def gap(self) -> float:
        """Relative difference between total_time and T0 * t_server."""
        return abs(self.total_time - self.reference_time) / self.reference_time


def straggler_identity_check(T0: int, t_straggler: float, t_server: float) -> StragglerIdentity:
    """
    With tau matched to the straggler, T0 rounds shrink to ceil(T0 / tau) and
    the total time T1 * t_straggler should equal T0 * t_server.

    Args:
        T0: Rounds needed without unbalanced updates
        t_straggler: Straggler delay per round
        t_server: Server time per local step

    Returns:
        StragglerIdentity with tau, T1, total time and the reference T0 * t_server
    """
    if not t_server > 0 or not t_straggler > 0:
        raise ValueError("Straggler and server times must be positive")
    if t_straggler < t_server:
        raise ValueError(
            f"t_straggler ({t_straggler}) must be at least t_server ({t_server})"
        )
    if T0 < 1:
        raise ValueError(f"T0 must be >= 1, got {T0}")
    tau = matched_tau(t_straggler, t_server)
    rounds = math.ceil(T0 / tau)
    return StragglerIdentity(
        tau=tau,
        rounds=rounds,
        total_time=rounds * t_straggler,
        reference_time=T0 * t_server,
    )
