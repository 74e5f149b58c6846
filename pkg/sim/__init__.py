from .experiment import Experiment, PairResult, build_experiment, evaluate, run_pair_round
from .graph import build_round_graph
from .runner import RunResult, run_experiment, train_single_pair
from .streams import pair_stream, round_stream, stream
from .timing import (
    DelayModel,
    RoundTiming,
    StragglerIdentity,
    build_delay_model,
    draw_round_timing,
    matched_tau,
    straggler_identity_check,
)

__all__ = [
    "Experiment",
    "PairResult",
    "build_experiment",
    "evaluate",
    "run_pair_round",
    "build_round_graph",
    "RunResult",
    "run_experiment",
    "train_single_pair",
    "pair_stream",
    "round_stream",
    "stream",
    "DelayModel",
    "RoundTiming",
    "StragglerIdentity",
    "build_delay_model",
    "draw_round_timing",
    "matched_tau",
    "straggler_identity_check",
]
