#!/usr/bin/env python3
"""
Command-line interface for the stamp classifier.

Exit codes: 0 success, 1 usage error, 2 data/feature/model/evaluation error.
Results go to standard output, diagnostics to standard error.
"""

import argparse
import logging
import sys
from typing import List, Optional

from app import StampClassifier
from config import Config
from dataset import write_text_atomic
from errors import InvalidConfigError, ModelError, StampIdError, UsageError
from evaluation import EvalMode, render_grid, render_report
from features import FeatureConfig, FeatureKind
from learn import ModelKind, Task, TrainConfig

logger = logging.getLogger(__name__)


class StampArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {value}")
    return value


def _ratio(text: str) -> float:
    value = _positive_float(text)
    if value >= 1:
        raise argparse.ArgumentTypeError(f"ratio must lie strictly between 0 and 1, got {value}")
    return value


def _choice_list(enum_type):
    def parse(text: str) -> list:
        try:
            return [enum_type(item.strip()) for item in text.split(",") if item.strip()]
        except ValueError:
            allowed = ",".join(member.value for member in enum_type)
            raise argparse.ArgumentTypeError(f"expected a comma-separated subset of {allowed}") from None
    return parse


def _common_parent() -> argparse.ArgumentParser:
    parent = StampArgumentParser(add_help=False, allow_abbrev=False)
    parent.add_argument("--workers", type=_positive_int, default=None,
                        help=f"threads for feature extraction (default {Config.WORKERS})")
    parent.add_argument("--canonical-size", type=_positive_int, default=None,
                        help=f"canonical image side in pixels (default {Config.CANONICAL_SIZE})")
    return parent


def _pipeline_parent() -> argparse.ArgumentParser:
    parent = StampArgumentParser(add_help=False, allow_abbrev=False)
    source = parent.add_mutually_exclusive_group(required=True)
    source.add_argument("--manifest", help="manifest CSV (or dataset root)")
    source.add_argument("--root", help="dataset root laid out as <country>/<year>/<image>")
    parent.add_argument("--task", choices=[t.value for t in Task], default=Task.COUNTRY.value)
    parent.add_argument("--seed", type=int, default=Config.SEED)
    parent.add_argument("--ratio", type=_ratio, default=Config.SPLIT_RATIO,
                        help="training fraction per class")
    parent.add_argument("--augment", action="store_true",
                        help="train on flipped and rotated copies as well")
    parent.add_argument("--epochs", type=_positive_int, default=TrainConfig.epochs_sgd,
                        help="gradient descent epochs")
    parent.add_argument("--learning-rate", type=_positive_float, default=TrainConfig.learning_rate)
    parent.add_argument("--l2", type=_non_negative_float, default=TrainConfig.l2_lambda, help="ridge strength")
    parent.add_argument("--batch-size", type=_positive_int, default=TrainConfig.batch_size)
    return parent


def _eval_parent() -> argparse.ArgumentParser:
    parent = StampArgumentParser(add_help=False, allow_abbrev=False)
    parent.add_argument("--repeats", type=_positive_int, default=Config.REPEATS)
    mode = parent.add_mutually_exclusive_group()
    mode.add_argument("--eval-augmented", action="store_true",
                      help="evaluate on all 5 flip/rotation variants of each test image")
    mode.add_argument("--eval-rotated", action="store_true",
                      help="evaluate on test images rotated 90 degrees clockwise")
    return parent


def build_parser() -> StampArgumentParser:
    parser = StampArgumentParser(
        prog="stampid",
        description="Classify stamp images by country and year.",
        allow_abbrev=False,
    )
    parser.add_argument("--log-level", default=None,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                        help=f"diagnostic verbosity (default {Config.LOG_LEVEL})")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = _common_parent()
    pipeline = _pipeline_parent()
    evaluation = _eval_parent()
    features = [f.value for f in FeatureKind]
    models = [m.value for m in ModelKind]

    def add(name: str, parents: list, help: str) -> StampArgumentParser:
        return commands.add_parser(name, parents=parents, help=help, allow_abbrev=False)

    scan = add("scan", [], "scan a dataset tree into a manifest CSV")
    scan.add_argument("root")
    scan.add_argument("--out", required=True, help="manifest CSV destination")
    scan.set_defaults(handler=cmd_scan)

    train = add("train", [common, pipeline], "train one model and save it")
    train.add_argument("--feature", choices=features, required=True)
    train.add_argument("--model", choices=models, required=True)
    train.add_argument("--full", action="store_true", help="train on every record, no held-out split")
    train.add_argument("--out", required=True, help="model JSON destination")
    train.set_defaults(handler=cmd_train)

    ev = add("eval", [common, pipeline, evaluation], "repeated split/train/test experiment")
    ev.add_argument("--feature", choices=features, required=True)
    ev.add_argument("--model", choices=models, required=True)
    ev.add_argument("--out", help="report CSV destination")
    ev.set_defaults(handler=cmd_eval)

    grid = add("grid", [common, pipeline, evaluation], "accuracy table over features and models")
    grid.add_argument("--features", type=_choice_list(FeatureKind), default=list(FeatureKind))
    grid.add_argument("--models", type=_choice_list(ModelKind), default=list(ModelKind))
    grid.add_argument("--out", help="grid CSV destination")
    grid.set_defaults(handler=cmd_grid)

    predict = add("predict", [common], "classify one image")
    predict.add_argument("model")
    predict.add_argument("image")
    predict.add_argument("--top-k", type=_positive_int, default=None,
                         help="print only the K best classes")
    predict.set_defaults(handler=cmd_predict)

    tag = add("tag", [common], "predict both country and year of one image")
    tag.add_argument("image")
    tag.add_argument("--country-model", required=True)
    tag.add_argument("--year-model", required=True)
    tag.set_defaults(handler=cmd_tag)

    dump = add("dump-features", [common], "write one image's descriptor as JSON")
    dump.add_argument("image")
    dump.add_argument("--feature", choices=features, required=True)
    dump.add_argument("--out", required=True, help="descriptor JSON destination")
    dump.add_argument("--dump-hog", help="also write the HOG rendering to this PNG")
    dump.set_defaults(handler=cmd_dump_features)

    synth = add("synth", [], "generate the seeded synthetic benchmark tree")
    synth.add_argument("root")
    synth.add_argument("--per-class", type=_positive_int, default=100)
    synth.add_argument("--seed", type=int, default=Config.SEED)
    synth.set_defaults(handler=cmd_synth)

    return parser


def _classifier(args: argparse.Namespace) -> StampClassifier:
    size = getattr(args, "canonical_size", None)
    try:
        feature_config = FeatureConfig(canonical_size=size) if size else FeatureConfig()
        train_config = None
        if hasattr(args, "epochs"):
            train_config = TrainConfig(
                learning_rate=args.learning_rate,
                l2_lambda=args.l2,
                epochs_sgd=args.epochs,
                batch_size=args.batch_size,
                seed=args.seed,
            )
    except (InvalidConfigError, ModelError) as e:
        # settings built from flags: report as misuse
        raise UsageError(f"invalid option: {e}") from e
    return StampClassifier(feature_config, train_config, getattr(args, "workers", None))


def _source(args: argparse.Namespace) -> str:
    return args.manifest or args.root


def _eval_mode(args: argparse.Namespace) -> EvalMode:
    if args.eval_augmented:
        return EvalMode.AUGMENTED
    if args.eval_rotated:
        return EvalMode.ROTATED
    return EvalMode.PLAIN


def cmd_scan(args: argparse.Namespace) -> int:
    manifest = StampClassifier().scan(args.root, args.out)
    print(f"{len(manifest)} records")
    for task in Task:
        tally = manifest.tally(task)
        print(f"{task.value}: " + ", ".join(f"{label}={count}" for label, count in tally.items()))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    outcome = _classifier(args).train(
        _source(args), args.task, args.feature, args.model,
        full=args.full, augment=args.augment, seed=args.seed, ratio=args.ratio, out=args.out,
    )
    model = outcome.model
    print(f"trained {model.kind.value} on {model.feature_kind.value} "
          f"({model.feature_dim} features, {model.label_space.size} classes, {outcome.train_size} samples)")
    if outcome.heldout_accuracy is not None:
        print(f"held-out accuracy: {100.0 * outcome.heldout_accuracy:.1f} ({outcome.test_size} samples)")
    print(f"model written to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    report = _classifier(args).evaluate(
        _source(args), args.task, args.feature, args.model,
        repeats=args.repeats, seed=args.seed, augment_train=args.augment,
        eval_mode=_eval_mode(args), ratio=args.ratio,
    )
    if args.out:
        write_text_atomic(args.out, render_report(report, "csv"))
    sys.stdout.write(render_report(report, "text"))
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    if not args.features or not args.models:
        raise UsageError("--features and --models must name at least one entry")
    grid = _classifier(args).grid(
        _source(args), args.task, args.features, args.models,
        repeats=args.repeats, seed=args.seed, augment_train=args.augment,
        eval_mode=_eval_mode(args), ratio=args.ratio,
    )
    if args.out:
        write_text_atomic(args.out, render_grid(grid, "csv"))
    sys.stdout.write(render_grid(grid, "text"))
    return 0


def _print_prediction(prediction, top_k: Optional[int], prefix: str = "") -> None:
    print(f"{prefix}{prediction.label}")
    for label, value in prediction.top(top_k):
        print(f"  {label}\t{value:.6f}")


def cmd_predict(args: argparse.Namespace) -> int:
    prediction = _classifier(args).predict(args.model, args.image)
    _print_prediction(prediction, args.top_k)
    return 0


def cmd_tag(args: argparse.Namespace) -> int:
    country, year = _classifier(args).tag(args.country_model, args.year_model, args.image)
    print(f"country: {country.label}")
    print(f"year: {year.label}")
    return 0


def cmd_dump_features(args: argparse.Namespace) -> int:
    vector = _classifier(args).dump_features(args.image, args.feature, args.out, args.dump_hog)
    print(f"{vector.kind.value}: {vector.dim} values written to {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    manifest = StampClassifier().synthesize(args.root, per_class=args.per_class, seed=args.seed)
    print(f"{len(manifest)} synthetic images written under {args.root}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    Config.configure_logging(args.log_level)
    try:
        return args.handler(args)
    except StampIdError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return StampIdError.exit_code
    except ValueError as e:
        # out-of-range settings from the environment
        print(f"error: {e}", file=sys.stderr)
        return UsageError.exit_code


if __name__ == "__main__":
    sys.exit(main())
