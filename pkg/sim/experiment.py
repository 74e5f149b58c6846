"""
Runtime context of one experiment and the client/split-server pair round.

build_experiment turns a validated config into everything a run needs: the
initialized split model, the train/test data, the client partition, the delay
model and the effective learning rates.
"""

from dataclasses import dataclass

import numpy as np
from agno.utils.log import logger

from agents.client import client_apply_update, client_emit_embeddings, start_client_round
from agents.messages import DownLink, UpLink
from agents.split_server import ServerRoundState, server_emit_delta, server_unbalanced_update
from config import ExperimentConfig, effective_learning_rates, resolve_cut_layer
from data.datasets import (
    Dataset,
    PartitionPlan,
    load_csv,
    make_blobs,
    partition_dirichlet,
    partition_iid,
    standardize,
    train_test_split,
)
from model.split_model import SplitModel, accuracy, dims
from sim.streams import BATCH, CLIENT, INIT, PARTITION, SERVER, pair_stream, stream
from sim.timing import DelayModel, build_delay_model
from zo.estimator import SmoothingConfig


@dataclass(frozen=True)
class Experiment:
    config: ExperimentConfig
    model: SplitModel
    train: Dataset
    test: Dataset
    partition: PartitionPlan
    delay_model: DelayModel
    eta_g: float
    eta_s: float
    eta_c: float

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def tau(self) -> int:
        return self.config.training.tau

    @property
    def smoothing(self) -> SmoothingConfig:
        training = self.config.training
        return SmoothingConfig(lam=training.lam, num_perturbations=training.num_perturbations)

    @property
    def lam(self) -> float:
        return self.config.training.lam


@dataclass(frozen=True)
class PairResult:
    client_id: int
    x_c: np.ndarray
    x_s: np.ndarray
    train_loss: float
    delta: float
    uplink_matrices: int
    uplink_scalars: int
    downlink_scalars: int
    client_forward_passes: int
    server_loss_evaluations: int
    num_samples: int
    uplink: UpLink
    downlink: DownLink


def load_dataset(config: ExperimentConfig) -> Dataset:
    ds = config.dataset
    if ds.kind == "csv":
        return load_csv(
            ds.path,
            label_column=ds.label_column,
            num_classes=config.model.widths[-1],
            normalize=ds.standardize,
        )
    dataset = make_blobs(
        num_classes=ds.num_classes,
        dim=ds.dim,
        samples_per_class=ds.samples_per_class,
        spread=ds.spread,
        seed=config.seed,
        separation=ds.separation,
    )
    return standardize(dataset) if ds.standardize else dataset


def build_experiment(config: ExperimentConfig) -> Experiment:
    """
    Resolve a config into the objects a run works on.

    Args:
        config: Validated experiment config

    Returns:
        Experiment with the model initialized from the seed's INIT stream
    """
    dataset = load_dataset(config)
    if dataset.dim != config.model.widths[0]:
        raise ValueError(
            f"Dataset has {dataset.dim} features but model.widths[0] is {config.model.widths[0]}"
        )
    train, test = train_test_split(dataset, config.dataset.test_fraction, config.seed)

    M = config.training.num_clients
    partition_seed = int(stream(config.seed, PARTITION).integers(2**32))
    if config.dataset.alpha == "iid":
        partition = partition_iid(train, M, partition_seed)
    else:
        partition = partition_dirichlet(train, M, config.dataset.alpha, partition_seed)
    partition.validate(len(train))

    cut = resolve_cut_layer(config)
    model = SplitModel.init(
        config.model.widths, cut, stream(config.seed, INIT), activation=config.model.activation
    )

    delays = config.delays
    delay_model = build_delay_model(
        num_clients=M,
        t_server=delays.t_server,
        distribution=delays.distribution,
        client_means=delays.client_means,
        base_mean=delays.base_mean,
        straggler=delays.straggler,
        straggler_factor=delays.straggler_factor,
        overhead=delays.overhead,
    )

    eta_g, eta_s, eta_c = effective_learning_rates(config)
    d, d_c, d_s = dims(model)
    logger.info(
        f"Experiment: d={d} (client {d_c}, server {d_s}), cut={cut}, tau={config.training.tau}, "
        f"M={M}, eta_g={eta_g}, eta_s={eta_s}, eta_c={eta_c}"
    )
    return Experiment(
        config=config,
        model=model,
        train=train,
        test=test,
        partition=partition,
        delay_model=delay_model,
        eta_g=eta_g,
        eta_s=eta_s,
        eta_c=eta_c,
    )


def sample_batch_indices(exp: Experiment, client_id: int, round_num: int) -> np.ndarray:
    """One minibatch per client per round, drawn without replacement from its shard."""
    shard = exp.partition.client_indices[client_id]
    size = min(exp.config.training.batch_size, len(shard))
    rng = pair_stream(exp.seed, round_num, client_id, BATCH)
    return np.sort(rng.choice(shard, size=size, replace=False))


def run_pair_round(
    exp: Experiment,
    client_id: int,
    round_num: int,
    x_c: np.ndarray,
    x_s: np.ndarray,
) -> PairResult:
    """
    One client and its split-server model through a full round: embeddings
    up, tau server steps on the stale h, delta down, client update.
    """
    batch = exp.train.batch(sample_batch_indices(exp, client_id, round_num))
    smoothing = exp.smoothing

    client = start_client_round(
        exp.model,
        x_c,
        batch,
        pair_stream(exp.seed, round_num, client_id, CLIENT),
        eta_c=exp.eta_c,
        lam=smoothing.lam,
        num_perturbations=smoothing.num_perturbations,
    )
    uplink = client_emit_embeddings(client)

    server = ServerRoundState(
        model=exp.model,
        params=x_s,
        eta_s=exp.eta_s,
        tau=exp.tau,
        lam=smoothing.lam,
        num_perturbations=smoothing.num_perturbations,
    )
    server_unbalanced_update(
        server, uplink.h, uplink.labels, pair_stream(exp.seed, round_num, client_id, SERVER)
    )
    downlink = server_emit_delta(server, uplink)
    new_x_c = client_apply_update(client, downlink)

    logger.debug(
        f"Round {round_num} client {client_id}: delta={downlink.delta:.6g}, "
        f"server loss {server.step_losses[0]:.6g} -> {server.step_losses[-1]:.6g}"
    )
    return PairResult(
        client_id=client_id,
        x_c=new_x_c,
        x_s=server.params,
        train_loss=server.step_losses[0],
        delta=downlink.delta,
        uplink_matrices=uplink.num_matrices,
        uplink_scalars=uplink.num_scalars,
        downlink_scalars=downlink.num_scalars,
        client_forward_passes=client.forward_passes,
        server_loss_evaluations=server.loss_evaluations,
        num_samples=len(exp.partition.client_indices[client_id]),
        uplink=uplink,
        downlink=downlink,
    )


def evaluate(exp: Experiment, x_c: np.ndarray, x_s: np.ndarray) -> float:
    """Held-out accuracy of the given global model; not part of the simulated clock."""
    return accuracy(exp.model, x_c, x_s, exp.test.features, exp.test.labels)
