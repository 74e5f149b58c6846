"""
Property suites runnable from the command line.

- smoothing (alias lemma1): Monte-Carlo checks of the two-point estimator
  against analytic quadratic oracles, and the smoothing bounds on a log-cosh loss
- straggler: the straggler-time identity and server idle time
- reduction: one client, full participation and eta_g = 1 reproduce plain
  single-pair training bit for bit
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from agno.utils.log import logger

from config import parse_config
from sim.runner import run_experiment, train_single_pair
from sim.streams import stream
from sim.timing import DelayModel, build_delay_model, draw_round_timing, matched_tau, straggler_identity_check
from zo.estimator import sample_directions, zo_estimate_batch
from zo.oracles import LogCoshLoss, QuadraticLoss, bias_bound, second_moment_bound, smoothed_gradient_oracle

SMOOTHING_DIMS = (2, 8, 32)
SMOOTHING_LAMBDAS = (1e-1, 1e-2, 1e-3)
SMOOTHING_SAMPLES = 100_000
STANDARD_ERRORS = 6.0

REDUCTION_ROUNDS = 200


class UnknownSuiteError(ValueError):
    """Raised for a suite name that is not registered."""


@dataclass(frozen=True)
class PropertyResult:
    name: str
    measured: float
    bound: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.bound - self.measured


def _check(name: str, measured: float, bound: float) -> PropertyResult:
    return PropertyResult(name=name, measured=float(measured), bound=float(bound), passed=measured <= bound)


def random_quadratic(d: int, rng: np.random.Generator) -> tuple[QuadraticLoss, np.ndarray]:
    """Symmetric quadratic with a random linear term, plus a random evaluation point."""
    G = rng.standard_normal((d, d))
    A = 0.5 * (G + G.T)
    b = rng.standard_normal(d)
    x = rng.standard_normal(d)
    return QuadraticLoss(A, b), x


def smoothing_suite(seed: int = 0, samples: int = SMOOTHING_SAMPLES) -> list[PropertyResult]:
    """
    For each (d, lambda): estimator mean against the smoothed gradient in
    standard errors on a random quadratic, then the bias bound and the
    second-moment bound on a log-cosh loss, each with a Monte-Carlo allowance
    of STANDARD_ERRORS standard errors.
    """
    results = []
    for d in SMOOTHING_DIMS:
        for k, lam in enumerate(SMOOTHING_LAMBDAS):
            rng = stream(seed, d, k)
            loss, x = random_quadratic(d, rng)
            oracle = smoothed_gradient_oracle(loss.A, loss.b, x, lam)

            U = sample_directions(d, samples, rng)
            G = zo_estimate_batch(loss.rows, x, U, lam)
            mean = G.mean(axis=0)
            se = G.std(axis=0, ddof=1) / math.sqrt(samples)

            z = np.abs(mean - oracle) / np.maximum(se, 1e-300)
            results.append(_check(f"mean vs smoothed gradient d={d} lam={lam:g} (max z)", z.max(), STANDARD_ERRORS))

            # smoothing leaves a quadratic's gradient unchanged, so the bounds run on a curved loss
            curved = LogCoshLoss(rng.standard_normal(d))
            true_grad = curved.gradient(x)
            G = zo_estimate_batch(curved.rows, x, U, lam)
            mean = G.mean(axis=0)
            se = G.std(axis=0, ddof=1) / math.sqrt(samples)

            bias = np.linalg.norm(mean - true_grad)
            allowance = STANDARD_ERRORS * np.linalg.norm(se)
            results.append(
                _check(f"bias log-cosh d={d} lam={lam:g}", bias, bias_bound(curved.smoothness, lam, d) + allowance)
            )

            sq = np.sum(G * G, axis=1)
            moment = sq.mean() - STANDARD_ERRORS * sq.std(ddof=1) / math.sqrt(samples)
            bound = second_moment_bound(float(true_grad @ true_grad), curved.smoothness, lam, d)
            results.append(_check(f"second moment log-cosh d={d} lam={lam:g}", moment, bound))
    return results


def _simulate_clock(delay_model: DelayModel, participants: list[int], tau: int, rounds: int, seed: int) -> float:
    clock = 0.0
    for t in range(rounds):
        clock += draw_round_timing(delay_model, participants, tau, stream(seed, t)).round_wall_clock
    return clock


def mean_idle_time(
    delay_model: DelayModel, participants: list[int], tau: int, rounds: int, seed: int
) -> float:
    """Average server idle time per round; draws depend only on (seed, round), so tau values are paired."""
    total = 0.0
    for t in range(rounds):
        total += draw_round_timing(delay_model, participants, tau, stream(seed, t)).server_idle_time
    return total / rounds


def straggler_suite(seed: int = 0) -> list[PropertyResult]:
    results = []

    exact = straggler_identity_check(100, 8.0, 2.0)
    results.append(_check(f"identity gap T0=100 t_straggler=8 t_server=2 (tau={exact.tau}, T1={exact.rounds})", exact.gap, 0.0))

    rounded = straggler_identity_check(100, 7.0, 2.0)
    expected_gap = abs(math.ceil(100 / rounded.tau) * 7.0 - 200.0) / 200.0
    results.append(
        _check(
            f"identity gap T0=100 t_straggler=7 t_server=2 matches rounding (tau={rounded.tau})",
            abs(rounded.gap - expected_gap),
            1e-12,
        )
    )

    # fixed delays: every round lasts exactly t_straggler
    fixed = DelayModel(distribution="fixed", per_client_means=(2.0, 8.0, 4.0), t_server=2.0)
    identity = straggler_identity_check(100, 8.0, 2.0)
    simulated = _simulate_clock(fixed, [0, 1, 2], identity.tau, identity.rounds, seed)
    results.append(
        _check(
            "simulated time with fixed delays vs T0 * t_server (gap)",
            abs(simulated - identity.reference_time) / identity.reference_time,
            0.0,
        )
    )

    exponential = build_delay_model(num_clients=5, t_server=1.0, base_mean=2.0, straggler=4, straggler_factor=4.0)
    tau = matched_tau(max(exponential.per_client_means), exponential.t_server)
    everyone = list(range(exponential.num_clients))
    baseline = mean_idle_time(exponential, everyone, 1, 2000, seed)
    matched = mean_idle_time(exponential, everyone, tau, 2000, seed)
    results.append(_check(f"mean server idle time at tau={tau} below tau=1", matched, baseline - 1e-12))
    return results


def reduction_config(seed: int = 0, rounds: int = REDUCTION_ROUNDS):
    return parse_config(
        {
            "seed": seed,
            "model": {"widths": [4, 6, 5, 3], "cut_layer": 1},
            "training": {
                "rounds": rounds,
                "tau": 2,
                "num_clients": 1,
                "participation": 1.0,
                "batch_size": 16,
                "eval_interval": rounds or 1,
            },
            "learning_rates": {"eta_g": 1.0},
            "dataset": {"num_classes": 3, "dim": 4, "samples_per_class": 30},
        }
    )


def reduction_suite(seed: int = 0, rounds: int = REDUCTION_ROUNDS) -> list[PropertyResult]:
    config = reduction_config(seed, rounds)
    federated = run_experiment(config, keep_param_trace=True).param_trace
    single = train_single_pair(config)
    mismatched = sum(
        not (np.array_equal(a_c, b_c) and np.array_equal(a_s, b_s))
        for (a_c, a_s), (b_c, b_s) in zip(federated, single)
    )
    mismatched += abs(len(federated) - len(single))
    return [_check(f"rounds differing from single-pair training over {rounds} rounds", mismatched, 0)]


SUITES: dict[str, Callable[[int], list[PropertyResult]]] = {
    "smoothing": smoothing_suite,
    "lemma1": smoothing_suite,
    "straggler": straggler_suite,
    "reduction": reduction_suite,
}


def run_suite(name: str, seed: int = 0) -> list[PropertyResult]:
    if name not in SUITES:
        raise UnknownSuiteError(f"Unknown suite: {name}. Use one of {', '.join(SUITES)}")
    logger.info(f"Running verify suite '{name}' with seed {seed}")
    return SUITES[name](seed)


def format_results(results: list[PropertyResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(
            f"[{status}] {r.name}: measured={r.measured:.6g} bound={r.bound:.6g} margin={r.margin:.6g}"
        )
    return "\n".join(lines)
