"""Analytical models for training-run planning and benchmark reporting.

Everything here is closed-form arithmetic over published or measured
quantities: ZeRO stage-3 model-state memory with optional host offload,
throughput-based scaling efficiency, a warmup-plus-cosine learning-rate
schedule, and benchmark-score aggregation (averages, percent deltas
against a base row, per-group deltas under two aggregation methods, and
relative loss gaps between training curves).

``emit_report`` renders all of it to a directory: a plain-text summary,
CSV tables, and matplotlib line charts saved as SVG next to the CSVs.
Output is deterministic, byte for byte, for identical inputs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ConfigError, DataError

# ── Memory model ────────────────────────────────────────────────────────


@dataclass(frozen=True)
class DtypeBytes:
    """Bytes per parameter for each model-state component."""

    param: int = 2
    grad: int = 2
    optim_master: int = 4
    optim_m1: int = 4
    optim_m2: int = 4

    @property
    def optimizer(self) -> int:
        return self.optim_master + self.optim_m1 + self.optim_m2

    @property
    def total(self) -> int:
        return self.param + self.grad + self.optimizer


@dataclass(frozen=True)
class TrainRunSpec:
    """Shape and measured outcome of one training run."""

    params: int
    world_size: int = 1
    tokens: int = 0
    wall_hours: float = 0.0
    offload_params: bool = False
    offload_optimizer: bool = False
    dtype_bytes: DtypeBytes = field(default_factory=DtypeBytes)
    label: str = ""

    def validate(self) -> None:
        if self.params < 1:
            raise ConfigError("params must be >= 1")
        if self.world_size < 1:
            raise ConfigError("world_size must be >= 1")
        if self.tokens < 0 or self.wall_hours < 0:
            raise ConfigError("tokens and wall_hours must be >= 0")


@dataclass(frozen=True)
class MemoryEstimate:
    """Model-state bytes only; activations are deliberately excluded."""

    gpu_bytes: float
    host_bytes: float
    param_bytes: float
    grad_bytes: float
    optimizer_bytes: float


def estimate_memory(spec: TrainRunSpec) -> MemoryEstimate:
    """Per-GPU model-state memory under full stage-3 partitioning.

    Every state is sharded across ``world_size`` ranks, so each rank
    holds a 1/W slice of parameters, gradients, and optimizer state.
    Offloading moves the parameter or optimizer slice to host memory;
    the host figure is the node-wide total (every rank offloads onto the
    same host pool). Activations depend on batch geometry, not model
    state, and are not part of this estimate.
    """
    spec.validate()
    d = spec.dtype_bytes
    share = spec.params / spec.world_size
    param_bytes = d.param * share
    grad_bytes = d.grad * share
    optim_bytes = d.optimizer * share
    gpu = param_bytes + grad_bytes + optim_bytes
    host = 0.0
    if spec.offload_params:
        gpu -= param_bytes
        host += d.param * spec.params
    if spec.offload_optimizer:
        gpu -= optim_bytes
        host += d.optimizer * spec.params
    return MemoryEstimate(gpu, host, param_bytes, grad_bytes, optim_bytes)


# ── Scaling efficiency ──────────────────────────────────────────────────


@dataclass(frozen=True)
class ScalingEfficiency:
    base_rate: float
    scaled_rate: float
    efficiency: float


def scaling_efficiency(base: TrainRunSpec, scaled: TrainRunSpec) -> ScalingEfficiency:
    """Per-GPU token throughput of ``scaled`` relative to ``base``.

    The rate is tokens per GPU-hour: ``tokens / (world_size * wall_hours)``.
    Perfect scaling gives 1.0; values below 1 quantify the communication
    and memory-pressure tax of the larger run.
    """
    rates = []
    for run in (base, scaled):
        run.validate()
        if run.tokens <= 0 or run.wall_hours <= 0:
            raise DataError("scaling efficiency needs tokens > 0 and wall_hours > 0")
        rates.append(run.tokens / (run.world_size * run.wall_hours))
    return ScalingEfficiency(rates[0], rates[1], rates[1] / rates[0])


# ── Learning-rate schedule ──────────────────────────────────────────────


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup to ``peak_lr``, then cosine decay to ``floor_lr``."""

    total_steps: int
    peak_lr: float = 1e-4
    warmup_fraction: float = 0.10
    floor_lr: float = 0.0

    def validate(self) -> None:
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must be in (0, 1)")
        if not self.peak_lr > self.floor_lr >= 0.0:
            raise ConfigError("need peak_lr > floor_lr >= 0")

    @property
    def warmup_steps(self) -> int:
        return round(self.warmup_fraction * self.total_steps)


def lr_at(step: int, sched: LrSchedule) -> float:
    """Learning rate at ``step``; defined on 0 <= step <= total_steps.

    Warmup is linear from 0 through ``peak_lr`` at the warmup boundary;
    the remainder follows a half-cosine from peak down to the floor. The
    two pieces agree at the boundary, so the schedule is continuous.
    """
    sched.validate()
    if not 0 <= step <= sched.total_steps:
        raise DataError(f"step {step} outside [0, {sched.total_steps}]")
    warmup = sched.warmup_steps
    if warmup and step <= warmup:
        return sched.peak_lr * step / warmup
    span = sched.total_steps - warmup
    if span == 0:
        return sched.peak_lr if step < sched.total_steps else sched.floor_lr
    progress = (step - warmup) / span
    cosine = 0.5 * (1.0 + math.cos(math.pi * progress))
    return sched.floor_lr + (sched.peak_lr - sched.floor_lr) * cosine


# ── Benchmark tables ────────────────────────────────────────────────────


@dataclass(frozen=True)
class BenchmarkRow:
    tokens: int
    scores: dict[str, float]


@dataclass(frozen=True)
class BenchmarkTable:
    """Benchmark scores for several checkpoints plus named score groups."""

    rows: dict[str, BenchmarkRow]
    base: str
    groups: dict[str, list[str]] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.rows:
            raise DataError("benchmark table has no rows")
        if self.base not in self.rows:
            raise DataError(f"base row {self.base!r} not present")
        names = list(self.rows[self.base].scores)
        if not names:
            raise DataError("base row has no scores")
        for label, row in self.rows.items():
            if sorted(row.scores) != sorted(names):
                raise DataError(f"row {label!r} scores a different benchmark set")
            for bench, score in row.scores.items():
                if not 0.0 <= score <= 1.0:
                    raise DataError(f"{label}/{bench}: score {score} outside [0, 1]")
            if row.tokens < 0:
                raise DataError(f"row {label!r}: tokens must be >= 0")
        for group, members in self.groups.items():
            unknown = [m for m in members if m not in names]
            if unknown:
                raise DataError(f"group {group!r} names unknown benchmarks {unknown}")
            if not members:
                raise DataError(f"group {group!r} is empty")

    def benchmarks(self) -> list[str]:
        """Benchmark names in the base row's order."""
        return list(self.rows[self.base].scores)

    def ordered_labels(self) -> list[str]:
        """Row labels ordered by token budget, base first on ties."""
        return sorted(self.rows, key=lambda lb: (self.rows[lb].tokens, lb != self.base, lb))


def load_benchmark_table(source: str | Path | Mapping) -> BenchmarkTable:
    """Build a table from JSON: {"rows": ..., "base": ..., "groups": ...}."""
    if isinstance(source, Mapping):
        obj: Mapping = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    if not isinstance(obj, Mapping):
        raise DataError("benchmark table must be a JSON object")
    unknown = set(obj) - {"rows", "base", "groups"}
    if unknown:
        raise DataError(f"unknown benchmark table key(s): {sorted(unknown)}")
    try:
        rows_obj = obj["rows"]
        base = obj["base"]
    except KeyError as exc:
        raise DataError(f"benchmark table missing key {exc}") from exc
    rows = {}
    for label, row in rows_obj.items():
        extra = set(row) - {"tokens", "scores"}
        if extra:
            raise DataError(f"row {label!r}: unknown key(s) {sorted(extra)}")
        rows[label] = BenchmarkRow(
            tokens=int(row.get("tokens", 0)),
            scores={str(k): float(v) for k, v in row.get("scores", {}).items()},
        )
    groups = {str(g): [str(m) for m in ms] for g, ms in obj.get("groups", {}).items()}
    table = BenchmarkTable(rows=rows, base=str(base), groups=groups)
    table.validate()
    return table


def table_average(scores: Mapping[str, float]) -> float:
    """Arithmetic mean of a row's benchmark scores."""
    if not scores:
        raise DataError("cannot average an empty score row")
    return sum(scores.values()) / len(scores)


def relative_delta(base: float, new: float) -> float:
    """Percent change of ``new`` against ``base``; base must be positive."""
    if base <= 0:
        raise DataError(f"relative delta needs a positive base, got {base}")
    return 100.0 * (new - base) / base


def tokens_per_parameter(tokens: int, params: int) -> float:
    if params <= 0:
        raise DataError("params must be > 0")
    return tokens / params


GROUP_METHODS = ("ratio-of-means", "mean-of-ratios")


def group_deltas(table: BenchmarkTable, method: str) -> dict[str, dict[str, float]]:
    """Per-group percent delta of every row against the base row.

    ``ratio-of-means`` compares group score means; ``mean-of-ratios``
    averages the per-benchmark percent deltas. The two agree only when
    base scores within a group are equal, so both are reported and the
    method is always named next to the number.
    """
    if method not in GROUP_METHODS:
        raise DataError(f"unknown method {method!r}; expected one of {GROUP_METHODS}")
    table.validate()
    base_scores = table.rows[table.base].scores
    out: dict[str, dict[str, float]] = {}
    for group, members in table.groups.items():
        per_row: dict[str, float] = {}
        for label in table.ordered_labels():
            scores = table.rows[label].scores
            if method == "ratio-of-means":
                base_mean = sum(base_scores[m] for m in members) / len(members)
                row_mean = sum(scores[m] for m in members) / len(members)
                per_row[label] = relative_delta(base_mean, row_mean)
            else:
                ratios = [relative_delta(base_scores[m], scores[m]) for m in members]
                per_row[label] = sum(ratios) / len(ratios)
        out[group] = per_row
    return out


# ── Loss curves ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class LossCurve:
    label: str
    points: tuple[tuple[int, float], ...]

    def validate(self) -> None:
        if not self.points:
            raise DataError(f"loss curve {self.label!r} has no points")
        steps = [s for s, _ in self.points]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise DataError(f"loss curve {self.label!r}: steps must strictly increase")
        if any(loss <= 0 for _, loss in self.points):
            raise DataError(f"loss curve {self.label!r}: losses must be positive")

    @property
    def final_loss(self) -> float:
        return self.points[-1][1]


def load_loss_curve(path: str | Path, label: str) -> LossCurve:
    """Read a ``step,loss`` CSV; a single header line is tolerated."""
    points: list[tuple[int, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for i, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            try:
                points.append((int(row[0]), float(row[1])))
            except (ValueError, IndexError) as exc:
                if i == 1:
                    continue  # header
                raise DataError(f"{path}:{i}: bad loss-curve row {row!r}") from exc
    curve = LossCurve(label=label, points=tuple(points))
    curve.validate()
    return curve


@dataclass(frozen=True)
class LossGap:
    """Relative gap between two final losses; ``a`` is the higher curve."""

    label_a: str
    label_b: str
    final_a: float
    final_b: float
    relative_gap_percent: float


def loss_gap(a: LossCurve, b: LossCurve) -> LossGap:
    """Percent by which the lower final loss undercuts the higher one."""
    a.validate()
    b.validate()
    hi, lo = (a, b) if a.final_loss >= b.final_loss else (b, a)
    gap = 100.0 * (hi.final_loss - lo.final_loss) / hi.final_loss
    return LossGap(hi.label, lo.label, hi.final_loss, lo.final_loss, gap)


# ── Report emission ─────────────────────────────────────────────────────

_MEMORY_NOTE = (
    "Model states only; activations are excluded. Offload reduction is "
    "relative to the same run without offload (reference band: 20-25%)."
)


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def _write_table1_csv(table: BenchmarkTable, path: Path) -> None:
    benches = table.benchmarks()
    base_scores = table.rows[table.base].scores
    base_avg = table_average(base_scores)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = (
            ["label", "tokens"]
            + benches
            + ["average"]
            + [f"delta_{b}_pct" for b in benches]
            + ["delta_average_pct"]
        )
        writer.writerow(header)
        for label in table.ordered_labels():
            row = table.rows[label]
            avg = table_average(row.scores)
            deltas = [relative_delta(base_scores[b], row.scores[b]) for b in benches]
            writer.writerow(
                [label, row.tokens]
                + [_fmt(row.scores[b]) for b in benches]
                + [_fmt(avg)]
                + [_fmt(d) for d in deltas]
                + [_fmt(relative_delta(base_avg, avg))]
            )


def _method_column(method: str) -> str:
    return method.replace("-", "_")


def _write_efficiency_csv(
    table: BenchmarkTable, path: Path, params: int | None
) -> dict[str, dict[str, dict[str, float]]]:
    deltas = {method: group_deltas(table, method) for method in GROUP_METHODS}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["label", "tokens"]
        if params:
            header.append("tokens_per_parameter")
        for group in table.groups:
            for method in GROUP_METHODS:
                header.append(f"{group}_{_method_column(method)}_pct")
        writer.writerow(header)
        for label in table.ordered_labels():
            row: list[object] = [label, table.rows[label].tokens]
            if params:
                row.append(_fmt(tokens_per_parameter(table.rows[label].tokens, params)))
            for group in table.groups:
                for method in GROUP_METHODS:
                    row.append(_fmt(deltas[method][group][label]))
            writer.writerow(row)
    return deltas


def _write_loss_csv(curves: Sequence[LossCurve], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "step", "loss"])
        for curve in curves:
            for step, loss in curve.points:
                writer.writerow([curve.label, step, _fmt(loss)])


def _report_lines(
    table: BenchmarkTable,
    curves: Sequence[LossCurve],
    runs: Sequence[TrainRunSpec],
    deltas: dict[str, dict[str, dict[str, float]]],
    params: int | None,
) -> list[str]:
    lines: list[str] = []
    benches = table.benchmarks()
    base_scores = table.rows[table.base].scores
    base_avg = table_average(base_scores)

    lines.append("benchmark scores")
    lines.append("================")
    width = max(len(b) for b in benches + ["average"]) + 2
    header = "label".ljust(16) + "tokens".rjust(14)
    for b in benches:
        header += b.rjust(width)
    header += "average".rjust(width)
    lines.append(header)
    for label in table.ordered_labels():
        row = table.rows[label]
        text = label.ljust(16) + str(row.tokens).rjust(14)
        for b in benches:
            text += _fmt(row.scores[b]).rjust(width)
        text += _fmt(table_average(row.scores)).rjust(width)
        lines.append(text)
    lines.append("")

    lines.append(f"percent deltas vs base row ({table.base})")
    for label in table.ordered_labels():
        if label == table.base:
            continue
        row = table.rows[label]
        lines.append(f"  {label}:")
        for b in benches:
            d = relative_delta(base_scores[b], row.scores[b])
            lines.append(f"    {b}: {d:+.2f}%")
        avg_delta = relative_delta(base_avg, table_average(row.scores))
        lines.append(f"    average: {avg_delta:+.2f}%")
    lines.append("")

    if table.groups:
        lines.append("group deltas vs base row")
        for group in table.groups:
            lines.append(f"  {group}:")
            for method in GROUP_METHODS:
                for label in table.ordered_labels():
                    if label == table.base:
                        continue
                    d = deltas[method][group][label]
                    lines.append(f"    {label} [{method}]: {d:+.2f}%")
        lines.append("")

    if params:
        lines.append(f"token budget (params = {params})")
        for label in table.ordered_labels():
            ratio = tokens_per_parameter(table.rows[label].tokens, params)
            lines.append(f"  {label}: {ratio:.1f} tokens per parameter")
        lines.append("")

    lines.append("loss")
    if len(curves) >= 2:
        gap = loss_gap(curves[0], curves[1])
        lines.append(
            f"  final loss {gap.label_a}: {_fmt(gap.final_a)}, "
            f"{gap.label_b}: {_fmt(gap.final_b)}"
        )
        lines.append(
            f"  relative gap: {gap.relative_gap_percent:.2f}% "
            f"(lower curve: {gap.label_b})"
        )
    elif curves:
        lines.append(f"  final loss {curves[0].label}: {_fmt(curves[0].final_loss)}")
    else:
        lines.append("  no loss curves provided; loss.csv omitted")
    lines.append("")

    if len(runs) >= 2 and all(r.tokens and r.wall_hours for r in runs[:2]):
        eff = scaling_efficiency(runs[0], runs[1])
        lines.append("scaling")
        lines.append(f"  base rate: {eff.base_rate:.0f} tokens per GPU-hour")
        lines.append(f"  scaled rate: {eff.scaled_rate:.0f} tokens per GPU-hour")
        lines.append(f"  efficiency: {eff.efficiency:.4f}")
        lines.append("")

    if runs:
        lines.append("memory estimates")
        lines.append(f"  {_MEMORY_NOTE}")
        for i, run in enumerate(runs):
            est = estimate_memory(run)
            name = run.label or f"run{i}"
            lines.append(
                f"  {name}: params={run.params} world_size={run.world_size} "
                f"gpu={est.gpu_bytes:.0f} bytes host={est.host_bytes:.0f} bytes"
            )
            if run.offload_params or run.offload_optimizer:
                plain = estimate_memory(
                    TrainRunSpec(params=run.params, world_size=run.world_size,
                                 dtype_bytes=run.dtype_bytes)
                )
                saved = 100.0 * (1.0 - est.gpu_bytes / plain.gpu_bytes)
                lines.append(f"    offload cuts per-GPU model state by {saved:.1f}%")
        lines.append("")
    return lines


def emit_report(
    table: BenchmarkTable,
    curves: Sequence[LossCurve] = (),
    runs: Sequence[TrainRunSpec] = (),
    out_dir: str | Path = "report",
    figures: bool = True,
) -> list[Path]:
    """Write report.txt plus CSV tables and SVG charts into ``out_dir``.

    Emits ``table1.csv`` (scores, averages, deltas), ``efficiency.csv``
    (token volume against group deltas under both methods), ``loss.csv``
    (omitted when no curves are given; the text report says so), and,
    when ``figures`` is true, deterministic SVG line charts next to the
    CSVs. Returns the written paths. Running twice with the same inputs
    produces byte-identical files.
    """
    table.validate()
    for curve in curves:
        curve.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = runs[0].params if runs else None
    written: list[Path] = []

    table1 = out / "table1.csv"
    _write_table1_csv(table, table1)
    written.append(table1)

    efficiency = out / "efficiency.csv"
    deltas = _write_efficiency_csv(table, efficiency, params)
    written.append(efficiency)

    if curves:
        loss_path = out / "loss.csv"
        _write_loss_csv(curves, loss_path)
        written.append(loss_path)

    report = out / "report.txt"
    lines = _report_lines(table, curves, runs, deltas, params)
    report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(report)

    if figures:
        from . import plots

        if table.groups:
            fig_path = out / "efficiency.svg"
            plots.render_group_deltas(table, deltas, fig_path)
            written.append(fig_path)
        if curves:
            fig_path = out / "loss.svg"
            plots.render_loss_curves(curves, fig_path)
            written.append(fig_path)
    return written
