"""
Experiment entry points: the federated run and the standalone single-pair loop.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass, field

import numpy as np
from agno.utils.log import logger

from agents.messages import RoundTraceWriter
from config import ExperimentConfig
from federation import GlobalState
from metrics import RunRecord
from sim.experiment import Experiment, build_experiment, run_pair_round
from sim.graph import build_round_graph, initial_state, recursion_limit
from zo.estimator import NonFiniteLossError


@dataclass
class RunResult:
    records: list[RunRecord]
    final_state: GlobalState
    experiment: Experiment
    param_trace: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def total_time(self) -> float:
        return self.records[-1].simulated_time if self.records else 0.0

    @property
    def final_accuracy(self) -> float:
        return self.records[-1].eval_accuracy if self.records else 0.0


def run_experiment(
    config: ExperimentConfig,
    keep_param_trace: bool = False,
    trace_path: str | None = None,
) -> RunResult:
    """
    Run T global rounds of select, broadcast, pair rounds and aggregate.

    Args:
        config: Validated experiment config
        keep_param_trace: Keep the global parameters after every round
        trace_path: Write the binary UpLink/DownLink trace here

    Returns:
        RunResult with one RunRecord per round; identical for identical configs
    """
    exp = build_experiment(config)
    total_rounds = config.training.rounds
    logger.info(
        f"Running {total_rounds} rounds with {config.training.num_clients} clients, "
        f"tau={exp.tau}, seed={config.seed}"
    )

    with ExitStack() as stack:
        trace = None
        if trace_path is not None:
            os.makedirs(os.path.dirname(trace_path) or ".", exist_ok=True)
            trace = stack.enter_context(RoundTraceWriter(trace_path))
        executor = None
        if config.run.workers > 1:
            executor = stack.enter_context(ThreadPoolExecutor(max_workers=config.run.workers))

        graph = build_round_graph(
            exp, trace=trace, keep_param_trace=keep_param_trace, executor=executor
        )
        final = graph.invoke(
            initial_state(exp), {"recursion_limit": recursion_limit(total_rounds)}
        )

    result = RunResult(
        records=list(final["records"]),
        final_state=final["global_state"],
        experiment=exp,
        param_trace=list(final["param_trace"]),
    )
    logger.info(
        f"Finished: accuracy={result.final_accuracy:.4f}, simulated time={result.total_time:.2f}"
    )
    return result


def records_or_diverged(config: ExperimentConfig) -> list[RunRecord]:
    """Records of a run, or an empty list when it diverged to a non-finite loss."""
    try:
        return run_experiment(config).records
    except NonFiniteLossError as e:
        logger.warning(f"Run diverged at tau={config.training.tau}: {e}")
        return []


def train_single_pair(
    config: ExperimentConfig, rounds: int | None = None, client_id: int = 0
) -> list[tuple[np.ndarray, np.ndarray]]:
    """
    Plain zeroth-order split training of one client with its server model.

    No participant selection and no aggregation: each round starts from the
    previous round's parameters. Uses the same random streams as
    run_experiment, so with one client, full participation and eta_g = 1 the
    two produce the same parameter trace.

    Returns:
        (x_c, x_s) after every round
    """
    exp = build_experiment(config)
    rounds = config.training.rounds if rounds is None else rounds
    x_c = exp.model.params_client.copy()
    x_s = exp.model.params_server.copy()
    trace = []
    for t in range(rounds):
        result = run_pair_round(exp, client_id, t, x_c, x_s)
        x_c, x_s = result.x_c, result.x_s
        trace.append((x_c.copy(), x_s.copy()))
    return trace
