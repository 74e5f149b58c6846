"""
LangGraph definition of the global training loop.

Each global round walks the graph once; the conditional edge out of
evaluate loops back to select until all rounds are done.

Graph topology:
    START → {select, END}
    select → pair_rounds → aggregate → evaluate
    evaluate → {select, END}
"""

import operator
from concurrent.futures import ThreadPoolExecutor
from typing import Annotated, TypedDict

import numpy as np
from agno.utils.log import logger
from langgraph.graph import END, START, StateGraph

from agents.messages import RoundTraceWriter
from federation import GlobalState, ParticipantUpdate, aggregate, broadcast, select_participants
from metrics import RunRecord
from sim.experiment import Experiment, PairResult, evaluate, run_pair_round
from sim.streams import DELAY, SELECT, round_stream
from sim.timing import RoundTiming, draw_round_timing


class RoundState(TypedDict):
    global_state: GlobalState
    round: int
    clock: float
    accuracy: float
    participants: list[int]
    pair_results: list[PairResult]
    timing: RoundTiming | None
    records: Annotated[list[RunRecord], operator.add]
    param_trace: Annotated[list[tuple[np.ndarray, np.ndarray]], operator.add]


def initial_state(exp: Experiment) -> RoundState:
    return {
        "global_state": GlobalState(
            x_c=exp.model.params_client.copy(),
            x_s=exp.model.params_server.copy(),
            round=0,
            eta_g=exp.eta_g,
        ),
        "round": 0,
        "clock": 0.0,
        "accuracy": 0.0,
        "participants": [],
        "pair_results": [],
        "timing": None,
        "records": [],
        "param_trace": [],
    }


def build_round_graph(
    exp: Experiment,
    trace: RoundTraceWriter | None = None,
    keep_param_trace: bool = False,
    executor: ThreadPoolExecutor | None = None,
):
    """
    Build and compile the global round graph for an experiment.

    Args:
        exp: Experiment context the nodes close over
        trace: Optional writer receiving every UpLink/DownLink
        keep_param_trace: Append the global (x_c, x_s) after every round
        executor: Optional pool running the pair rounds of a round concurrently

    Returns:
        A compiled StateGraph over RoundState
    """
    training = exp.config.training
    total_rounds = training.rounds

    def select_node(state: RoundState):
        """Sample this round's participants."""
        t = state["round"]
        participants = select_participants(
            training.num_clients, training.participation, round_stream(exp.seed, t, SELECT)
        )
        return {"participants": participants}

    def pair_rounds_node(state: RoundState):
        """Broadcast, run every client/split-server pair, and draw the round's delays."""
        t = state["round"]
        pulled = broadcast(state["global_state"], state["participants"])

        def run(client_id: int) -> PairResult:
            x_c, x_s = pulled[client_id]
            return run_pair_round(exp, client_id, t, x_c, x_s)

        ids = sorted(pulled)
        if executor is not None:
            results = list(executor.map(run, ids))
        else:
            results = [run(cid) for cid in ids]

        if trace is not None:
            for result in results:
                trace.write_uplink(t, result.client_id, result.uplink)
                trace.write_downlink(t, result.client_id, result.downlink)

        timing = draw_round_timing(
            exp.delay_model, ids, exp.tau, round_stream(exp.seed, t, DELAY)
        )
        logger.debug(
            f"Round {t}: straggler={timing.straggler_time:.4g}, "
            f"server busy={timing.server_busy_time:.4g}, wall={timing.round_wall_clock:.4g}"
        )
        return {"pair_results": results, "timing": timing}

    def aggregate_node(state: RoundState):
        """Dual FedAvg of both halves at the round barrier."""
        updates = [
            ParticipantUpdate(client_id=r.client_id, x_c=r.x_c, x_s=r.x_s, num_samples=r.num_samples)
            for r in state["pair_results"]
        ]
        new_global = aggregate(state["global_state"], updates, weighting=training.weighting)
        return {
            "global_state": new_global,
            "clock": state["clock"] + state["timing"].round_wall_clock,
        }

    def evaluate_node(state: RoundState):
        """Held-out accuracy every eval_interval rounds and at the end; emit the round record."""
        t = state["round"]
        g = state["global_state"]
        results = state["pair_results"]
        evaluated = t % training.eval_interval == 0 or t == total_rounds - 1
        acc = evaluate(exp, g.x_c, g.x_s) if evaluated else state["accuracy"]

        record = RunRecord(
            round=t,
            simulated_time=state["clock"],
            train_loss=float(np.mean([r.train_loss for r in results])),
            eval_accuracy=acc,
            comm_rounds=t + 1,
            uplink_scalars=sum(r.uplink_scalars for r in results),
            downlink_scalars=sum(r.downlink_scalars for r in results),
            participants=len(results),
            evaluated=evaluated,
        )
        if evaluated:
            logger.info(
                f"Round {t + 1}/{total_rounds}: time={record.simulated_time:.2f}, "
                f"loss={record.train_loss:.4f}, accuracy={acc:.4f}"
            )
        update = {
            "round": t + 1,
            "accuracy": acc,
            "records": [record],
            "pair_results": [],
        }
        if keep_param_trace:
            update["param_trace"] = [(g.x_c.copy(), g.x_s.copy())]
        return update

    def should_continue(state: RoundState) -> str:
        """Loop back to select until every round has run."""
        if state["round"] < total_rounds:
            return "select"
        return END

    workflow = StateGraph(RoundState)
    workflow.add_node("select", select_node)
    workflow.add_node("pair_rounds", pair_rounds_node)
    workflow.add_node("aggregate", aggregate_node)
    workflow.add_node("evaluate", evaluate_node)

    workflow.add_conditional_edges(START, should_continue, ["select", END])
    workflow.add_edge("select", "pair_rounds")
    workflow.add_edge("pair_rounds", "aggregate")
    workflow.add_edge("aggregate", "evaluate")
    workflow.add_conditional_edges("evaluate", should_continue, ["select", END])

    return workflow.compile()


def recursion_limit(total_rounds: int) -> int:
    """Graph steps needed for a run: four nodes per round plus slack."""
    return 4 * total_rounds + 10
