"""
Confusion matrices, accuracy, the repeated-split experiment protocol and
text and CSV report rendering.
"""

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from config import Config
from dataset import AUGMENT_FACTOR, DatasetManifest, build_feature_matrix, stratified_split
from errors import EmptyMatrixError, EvaluationError, LengthMismatchError, UnknownLabelError
from features import FeatureConfig, FeatureKind, FeatureVector
from learn import TRAINERS, LabelSpace, ModelKind, Task, TrainConfig, predict_labels

logger = logging.getLogger(__name__)

REPORT_HEADER = "# stampid-report v1"
GRID_HEADER = "# stampid-grid v1"

# Position of each variant in dataset.augment_image output
VARIANT_ORIGINAL = 0
VARIANT_ROTATE90 = 3


class EvalMode(str, Enum):
    PLAIN = "plain"
    AUGMENTED = "augmented"
    ROTATED = "rotated"


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true labels, columns predicted labels."""

    labels: Tuple[str, ...]
    counts: NDArray[np.int64]

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        size = len(self.labels)
        if counts.shape != (size, size):
            raise EvaluationError(f"counts have shape {counts.shape}, expected {(size, size)}")
        if np.any(counts < 0):
            raise EvaluationError("counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> NDArray[np.int64]:
        return self.counts.sum(axis=1)

    def is_diagonal(self) -> bool:
        return not np.any(self.counts - np.diag(np.diag(self.counts)))

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.labels != other.labels:
            raise EvaluationError("cannot add confusion matrices over different labels")
        return ConfusionMatrix(self.labels, self.counts + other.counts)


@dataclass(frozen=True)
class RunResult:
    run: int
    seed: int
    matrix: ConfusionMatrix
    accuracy: float


@dataclass(frozen=True)
class ExperimentReport:
    task: Task
    feature_kind: FeatureKind
    model_kind: ModelKind
    repeats: int
    per_run: Tuple[RunResult, ...]
    mean_accuracy: float
    pooled_matrix: ConfusionMatrix
    augment_train: bool = False
    eval_mode: EvalMode = EvalMode.PLAIN


@dataclass(frozen=True)
class GridReport:
    task: Task
    feature_kinds: Tuple[FeatureKind, ...]
    model_kinds: Tuple[ModelKind, ...]
    reports: Tuple[ExperimentReport, ...]

    def report(self, kind: FeatureKind, model_kind: ModelKind) -> ExperimentReport:
        for rep in self.reports:
            if rep.feature_kind == kind and rep.model_kind == model_kind:
                return rep
        raise KeyError((kind, model_kind))


@dataclass(frozen=True)
class ParsedReport:
    labels: Tuple[str, ...]
    counts: NDArray[np.int64]
    runs: Tuple[Tuple[int, int, float], ...]
    mean_accuracy: float


# Metrics

def confusion_matrix(truth: Sequence[str], pred: Sequence[str], ls: LabelSpace) -> ConfusionMatrix:
    """
    Count (true, predicted) label pairs.

    Args:
        truth: True label per sample
        pred: Predicted label per sample
        ls: Label space fixing row/column order

    Returns:
        ConfusionMatrix with counts[i][j] = #{truth = label_i and pred = label_j}
    """
    if len(truth) != len(pred):
        raise LengthMismatchError(f"{len(truth)} true labels but {len(pred)} predictions")
    index = {label: i for i, label in enumerate(ls.labels)}
    size = ls.size
    try:
        rows = np.array([index[str(t)] for t in truth], dtype=np.int64)
        cols = np.array([index[str(p)] for p in pred], dtype=np.int64)
    except KeyError as e:
        raise UnknownLabelError(f"label {e.args[0]!r} is not one of {list(ls.labels)}") from None
    counts = np.bincount(rows * size + cols, minlength=size * size).reshape(size, size)
    return ConfusionMatrix(ls.labels, counts)


def accuracy(cm: ConfusionMatrix) -> float:
    """Trace over total."""
    total = cm.total
    if total < 1:
        raise EmptyMatrixError("accuracy of an empty confusion matrix is undefined")
    return float(np.trace(cm.counts)) / total


# Experiment protocol

def extract_all(
    m: DatasetManifest,
    kind: FeatureKind,
    cfg: FeatureConfig,
    with_variants: bool = False,
    workers: Optional[int] = None
) -> List[List[FeatureVector]]:
    """
    Descriptors for every record, grouped per record.

    With variants each group holds the 5 augment_image descriptors,
    otherwise just the original.
    """
    matrix = build_feature_matrix(m, range(len(m)), kind, cfg, augment=with_variants, workers=workers)
    stride = AUGMENT_FACTOR if with_variants else 1
    return [matrix.X[i:i + stride] for i in range(0, len(matrix.X), stride)]


def _gather(
    features: List[List[FeatureVector]],
    labels: List[str],
    indices: Sequence[int],
    variants: Optional[Sequence[int]]
) -> Tuple[List[FeatureVector], List[str]]:
    X, y = [], []
    for i in indices:
        group = features[i]
        chosen = group if variants is None else [group[v] for v in variants]
        X.extend(chosen)
        y.extend([labels[i]] * len(chosen))
    return X, y


def run_experiment(
    m: DatasetManifest,
    task: Task,
    kind: FeatureKind,
    model_kind: ModelKind,
    cfg: FeatureConfig,
    tc: TrainConfig,
    repeats: Optional[int] = None,
    base_seed: Optional[int] = None,
    ratio: Optional[float] = None,
    augment_train: bool = False,
    eval_mode: EvalMode = EvalMode.PLAIN,
    workers: Optional[int] = None,
    features: Optional[List[List[FeatureVector]]] = None
) -> ExperimentReport:
    """
    Repeat split / train / test with seeds base_seed + r.

    Features are extracted once for the whole manifest and reused by every
    run; training-side augmentation and the augmented/rotated evaluation
    modes use the augment_image variants.

    Args:
        m: Dataset manifest
        task: country or year
        kind: Descriptor kind
        model_kind: svm or logreg
        cfg: Feature configuration
        tc: Training configuration; run r trains with seed tc.seed + r
        repeats: Number of runs (default Config.REPEATS)
        base_seed: Split seed of run 0 (default Config.SEED)
        ratio: Training fraction per class (default Config.SPLIT_RATIO)
        augment_train: Train on all 5 augment_image variants
        eval_mode: plain, augmented (5 variants per test image) or rotated (90 degrees clockwise)
        workers: Threads for extraction and independent runs
        features: Precomputed per-record descriptors from extract_all

    Returns:
        ExperimentReport with per-run matrices in run order
    """
    repeats = Config.REPEATS if repeats is None else repeats
    base_seed = Config.SEED if base_seed is None else base_seed
    ratio = Config.SPLIT_RATIO if ratio is None else ratio
    workers = workers or Config.WORKERS
    task, kind, model_kind = Task(task), FeatureKind(kind), ModelKind(model_kind)
    eval_mode = EvalMode(eval_mode)
    if repeats < 1:
        raise ValueError(f"repeats must be at least 1, got {repeats}")

    with_variants = augment_train or eval_mode != EvalMode.PLAIN
    if features is None:
        features = extract_all(m, kind, cfg, with_variants, workers)
    elif with_variants and any(len(group) != AUGMENT_FACTOR for group in features):
        raise EvaluationError("precomputed features lack augmentation variants")

    ls = LabelSpace(task, m.labels(task))
    labels = m.task_labels(task)
    train_variants = None if augment_train else [VARIANT_ORIGINAL]
    test_variants = {
        EvalMode.PLAIN: [VARIANT_ORIGINAL],
        EvalMode.AUGMENTED: None,
        EvalMode.ROTATED: [VARIANT_ROTATE90],
    }[eval_mode]
    trainer = TRAINERS[model_kind]

    def one_run(r: int) -> RunResult:
        seed = base_seed + r
        split = stratified_split(m, task, ratio, seed)
        X_train, y_train = _gather(features, labels, split.train, train_variants)
        X_test, y_test = _gather(features, labels, split.test, test_variants)
        model = trainer(X_train, y_train, ls, replace(tc, seed=tc.seed + r), cfg)
        cm = confusion_matrix(y_test, predict_labels(model, X_test), ls)
        acc = accuracy(cm)
        logger.info(f"Run {r} (seed {seed}): {model_kind.value}+{kind.value} accuracy {acc:.3f}")
        return RunResult(run=r, seed=seed, matrix=cm, accuracy=acc)

    if workers > 1 and repeats > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one_run, range(repeats)))
    else:
        runs = [one_run(r) for r in range(repeats)]

    pooled = runs[0].matrix
    for run in runs[1:]:
        pooled = pooled + run.matrix
    mean = float(np.mean([run.accuracy for run in runs]))

    return ExperimentReport(
        task=task,
        feature_kind=kind,
        model_kind=model_kind,
        repeats=repeats,
        per_run=tuple(runs),
        mean_accuracy=mean,
        pooled_matrix=pooled,
        augment_train=augment_train,
        eval_mode=eval_mode,
    )


def run_grid(
    m: DatasetManifest,
    task: Task,
    kinds: Sequence[FeatureKind],
    model_kinds: Sequence[ModelKind],
    cfg: FeatureConfig,
    tc: TrainConfig,
    **experiment_options
) -> GridReport:
    """
    Run the experiment for every feature x model combination.

    Descriptors are extracted once per feature kind and shared by the models.
    """
    kinds = tuple(FeatureKind(k) for k in kinds)
    model_kinds = tuple(ModelKind(k) for k in model_kinds)
    with_variants = (
        experiment_options.get("augment_train", False)
        or EvalMode(experiment_options.get("eval_mode", EvalMode.PLAIN)) != EvalMode.PLAIN
    )
    reports = []
    for kind in kinds:
        features = extract_all(m, kind, cfg, with_variants, experiment_options.get("workers"))
        for model_kind in model_kinds:
            reports.append(run_experiment(
                m, task, kind, model_kind, cfg, tc, features=features, **experiment_options
            ))
    return GridReport(task=Task(task), feature_kinds=kinds, model_kinds=model_kinds, reports=tuple(reports))


# Rendering

def _percent(value: float) -> str:
    return f"{100.0 * value:.1f}"


def _matrix_lines(cm: ConfusionMatrix) -> List[str]:
    width = max([len(label) for label in cm.labels] + [len(str(cm.counts.max())), 5])
    lines = [" " * width + " " + " ".join(label.rjust(width) for label in cm.labels)]
    for label, row in zip(cm.labels, cm.counts):
        lines.append(label.ljust(width) + " " + " ".join(str(int(v)).rjust(width) for v in row))
    return lines


def render_report(rep: ExperimentReport, format: str = "text") -> str:
    """
    Render a report as text (pooled matrix, per-run and mean accuracy in
    percent with 1 decimal) or as the versioned CSV document.
    """
    if format == "csv":
        return _render_report_csv(rep)
    if format != "text":
        raise ValueError(f"unknown report format {format!r}")

    lines = [
        f"task: {rep.task.value}  feature: {rep.feature_kind.value}  "
        f"model: {rep.model_kind.value}  repeats: {rep.repeats}",
    ]
    if rep.augment_train or rep.eval_mode != EvalMode.PLAIN:
        lines.append(f"augment train: {'yes' if rep.augment_train else 'no'}  eval: {rep.eval_mode.value}")
    lines.append("pooled confusion matrix (rows = true, columns = predicted)")
    lines.extend(_matrix_lines(rep.pooled_matrix))
    lines.append("")
    for run in rep.per_run:
        lines.append(f"run {run.run} (seed {run.seed}) accuracy: {_percent(run.accuracy)}")
    lines.append(f"mean accuracy: {_percent(rep.mean_accuracy)}")
    return "\n".join(lines) + "\n"


def _render_report_csv(rep: ExperimentReport) -> str:
    buffer = io.StringIO()
    buffer.write(REPORT_HEADER + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["label"] + list(rep.pooled_matrix.labels))
    for label, row in zip(rep.pooled_matrix.labels, rep.pooled_matrix.counts):
        writer.writerow([label] + [int(v) for v in row])
    writer.writerow(["run", "seed", "accuracy"])
    for run in rep.per_run:
        writer.writerow([run.run, run.seed, repr(run.accuracy)])
    writer.writerow(["mean", repr(rep.mean_accuracy)])
    return buffer.getvalue()


def parse_report_csv(text: str) -> ParsedReport:
    """Parse a CSV report back into labels, pooled counts and accuracies."""
    lines = text.splitlines()
    if not lines or lines[0] != REPORT_HEADER:
        raise EvaluationError(f"report must start with {REPORT_HEADER!r}")
    rows = list(csv.reader(lines[1:]))
    if not rows or rows[0][0] != "label":
        raise EvaluationError("missing matrix header row")

    labels = tuple(rows[0][1:])
    matrix_rows = rows[1:1 + len(labels)]
    if [row[0] for row in matrix_rows] != list(labels):
        raise EvaluationError("matrix rows do not match the label header")
    counts = np.array([[int(v) for v in row[1:]] for row in matrix_rows], dtype=np.int64)

    rest = rows[1 + len(labels):]
    if not rest or rest[0] != ["run", "seed", "accuracy"]:
        raise EvaluationError("missing run header row")
    runs, mean = [], None
    for row in rest[1:]:
        if row[0] == "mean":
            mean = float(row[1])
        else:
            runs.append((int(row[0]), int(row[1]), float(row[2])))
    if mean is None:
        raise EvaluationError("missing mean row")
    return ParsedReport(labels=labels, counts=counts, runs=tuple(runs), mean_accuracy=mean)


def render_grid(grid: GridReport, format: str = "text") -> str:
    """Feature-by-model table of mean accuracies (percent, 1 decimal)."""
    header = ["feature"] + [k.value for k in grid.model_kinds]
    rows = [
        [kind.value] + [_percent(grid.report(kind, mk).mean_accuracy) for mk in grid.model_kinds]
        for kind in grid.feature_kinds
    ]
    if format == "csv":
        buffer = io.StringIO()
        buffer.write(GRID_HEADER + "\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buffer.getvalue()
    if format != "text":
        raise ValueError(f"unknown report format {format!r}")

    repeats = grid.reports[0].repeats if grid.reports else 0
    width = max(len(cell) for cell in header + [row[0] for row in rows]) + 2
    lines = [f"task: {grid.task.value}  mean accuracy (%) over {repeats} repeats"]
    lines.append("".join(cell.ljust(width) for cell in header))
    for row in rows:
        lines.append("".join(cell.ljust(width) for cell in row))
    return "\n".join(lines) + "\n"
