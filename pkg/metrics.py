"""
Run records, their CSV persistence and the reports built from them.

Every run directory holds:
- config.snapshot: the effective config as YAML
- records.csv: one RunRecord per global round
- summary.txt: flat key=value lines
"""

import csv
import os
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Mapping, Sequence

from agno.utils.log import logger

NOT_REACHED = "not reached"


class MissingBaselineError(ValueError):
    """Raised when a speedup report has no tau=1 run to compare against."""


@dataclass(frozen=True)
class RunRecord:
    round: int
    simulated_time: float
    train_loss: float
    eval_accuracy: float
    comm_rounds: int
    uplink_scalars: int
    downlink_scalars: int
    participants: int
    evaluated: bool


RECORD_FIELDS = [f.name for f in fields(RunRecord)]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_records(records: Iterable[RunRecord], path: str):
    """
    Write records as CSV with a header line.

    Floats use 17 significant digits, so reading the file back gives the
    same values and identical runs give identical bytes.
    """
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RECORD_FIELDS)
        for record in records:
            writer.writerow([_fmt(v) for v in astuple(record)])


def read_records(path: str) -> list[RunRecord]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != RECORD_FIELDS:
            raise ValueError(f"{path} is not a records file (header {header})")
        records = []
        for row in reader:
            r, time, loss, acc, comm, up, down, parts, evaluated = row
            records.append(
                RunRecord(
                    round=int(r),
                    simulated_time=float(time),
                    train_loss=float(loss),
                    eval_accuracy=float(acc),
                    comm_rounds=int(comm),
                    uplink_scalars=int(up),
                    downlink_scalars=int(down),
                    participants=int(parts),
                    evaluated=evaluated == "1",
                )
            )
        return records


def rounds_to_target(records: Sequence[RunRecord], target_accuracy: float) -> int | str:
    """
    First round index whose eval_accuracy reaches the target.

    Args:
        records: Records of one run, in round order
        target_accuracy: Accuracy threshold in [0, 1]

    Returns:
        The round index, or NOT_REACHED
    """
    if not 0 <= target_accuracy <= 1:
        raise ValueError(f"Target accuracy must be in [0, 1], got {target_accuracy}")
    for record in records:
        if record.eval_accuracy >= target_accuracy:
            return record.round
    return NOT_REACHED


def communication_rounds_to_target(records: Sequence[RunRecord], target_accuracy: float) -> int | None:
    """Communication rounds spent up to and including the hitting round, None if never reached."""
    hit = rounds_to_target(records, target_accuracy)
    if hit == NOT_REACHED:
        return None
    return next(r.comm_rounds for r in records if r.round == hit)


def accuracy_at_time(records: Sequence[RunRecord], time: float) -> float:
    """Accuracy of the last round that finished by the given simulated time (0 if none did)."""
    acc = 0.0
    for record in records:
        if record.simulated_time > time:
            break
        acc = record.eval_accuracy
    return acc


@dataclass(frozen=True)
class SpeedupRow:
    tau: int
    rounds: int | None
    ratio: float | None

    @property
    def reached(self) -> bool:
        return self.rounds is not None


def speedup_table(rounds_by_tau: Mapping[int, int | None]) -> list[SpeedupRow]:
    """
    Ratio rounds(tau=1) / rounds(tau) for each tau.

    A run that never reached the target has blank rounds and ratio.
    """
    if 1 not in rounds_by_tau:
        raise MissingBaselineError(
            f"Speedup report needs a tau=1 baseline, got taus {sorted(rounds_by_tau)}"
        )
    baseline = rounds_by_tau[1]
    rows = []
    for tau in sorted(rounds_by_tau):
        rounds = rounds_by_tau[tau]
        ratio = None
        if rounds is not None and baseline is not None:
            ratio = baseline / rounds
        rows.append(SpeedupRow(tau=tau, rounds=rounds, ratio=ratio))
    return rows


def speedup_report(
    runs: Mapping[int, Sequence[RunRecord]], target_accuracy: float
) -> list[SpeedupRow]:
    """Speedup table for runs that share everything except tau."""
    return speedup_table(
        {tau: communication_rounds_to_target(records, target_accuracy) for tau, records in runs.items()}
    )


def write_speedup_csv(rows: Sequence[SpeedupRow], path: str):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["tau", "rounds", "ratio", "reached"])
        for row in rows:
            writer.writerow(
                [
                    row.tau,
                    "" if row.rounds is None else row.rounds,
                    "" if row.ratio is None else _fmt(row.ratio),
                    _fmt(row.reached),
                ]
            )


def format_speedup_table(rows: Sequence[SpeedupRow]) -> str:
    lines = [f"{'tau':>5}  {'rounds':>8}  {'ratio':>8}"]
    for row in rows:
        rounds = NOT_REACHED if row.rounds is None else str(row.rounds)
        ratio = "-" if row.ratio is None else f"{row.ratio:.2f}"
        lines.append(f"{row.tau:>5}  {rounds:>8}  {ratio:>8}")
    return "\n".join(lines)


@dataclass(frozen=True)
class GridCell:
    cut_layer: int
    tau: int
    rounds: int | None
    final_accuracy: float
    best_for_cut: bool


def grid_report(
    runs: Mapping[tuple[int, int], Sequence[RunRecord]], target_accuracy: float
) -> list[GridCell]:
    """
    Cut layer by tau ablation table.

    Args:
        runs: Records keyed by (cut_layer, tau)
        target_accuracy: Accuracy threshold for the rounds column

    Returns:
        One cell per run, sorted by (cut_layer, tau). best_for_cut marks the
        tau that reached the target in the fewest rounds for its cut, with
        final accuracy breaking ties and deciding when nothing was reached.
    """
    cells = []
    for cut in sorted({cut for cut, _ in runs}):
        row = []
        for tau in sorted(t for c, t in runs if c == cut):
            records = runs[(cut, tau)]
            row.append(
                (
                    tau,
                    communication_rounds_to_target(records, target_accuracy),
                    records[-1].eval_accuracy if records else 0.0,
                )
            )

        def rank(item):
            _, rounds, acc = item
            return (rounds is None, rounds if rounds is not None else 0, -acc)

        best_tau = min(row, key=rank)[0]
        cells.extend(
            GridCell(cut_layer=cut, tau=tau, rounds=rounds, final_accuracy=acc, best_for_cut=tau == best_tau)
            for tau, rounds, acc in row
        )
    return cells


def write_grid_csv(cells: Sequence[GridCell], path: str):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["cut_layer", "tau", "rounds", "final_accuracy", "best_for_cut"])
        for cell in cells:
            writer.writerow(
                [
                    cell.cut_layer,
                    cell.tau,
                    "" if cell.rounds is None else cell.rounds,
                    _fmt(cell.final_accuracy),
                    _fmt(cell.best_for_cut),
                ]
            )


def write_summary(summary: Mapping[str, object], path: str):
    """Flat key=value text, one entry per line, in the given order."""
    with open(path, "w", encoding="utf-8") as f:
        for key, value in summary.items():
            f.write(f"{key}={_fmt(value)}\n")


def read_summary(path: str) -> dict[str, str]:
    summary = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            key, _, value = line.rstrip("\n").partition("=")
            if key:
                summary[key] = value
    return summary


def summarize(records: Sequence[RunRecord], extra: Mapping[str, object] | None = None) -> dict:
    summary = {
        "rounds": len(records),
        "final_accuracy": records[-1].eval_accuracy if records else 0.0,
        "final_train_loss": records[-1].train_loss if records else 0.0,
        "total_simulated_time": records[-1].simulated_time if records else 0.0,
        "uplink_scalars": sum(r.uplink_scalars for r in records),
        "downlink_scalars": sum(r.downlink_scalars for r in records),
    }
    summary.update(extra or {})
    return summary


def write_run_dir(
    out_dir: str,
    run_id: str,
    config_snapshot: str,
    records: Sequence[RunRecord],
    summary: Mapping[str, object],
) -> str:
    """
    Persist one run as <out_dir>/<run_id>/{config.snapshot,records.csv,summary.txt}.

    Returns:
        Path of the run directory
    """
    run_dir = os.path.join(out_dir, run_id)
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.snapshot"), "w", encoding="utf-8") as f:
        f.write(config_snapshot)
    write_records(records, os.path.join(run_dir, "records.csv"))
    write_summary(summary, os.path.join(run_dir, "summary.txt"))
    logger.info(f"Wrote {len(records)} records to {run_dir}")
    return run_dir
