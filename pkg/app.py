import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

from config import Config
from dataset import (
    DatasetManifest,
    build_feature_matrix,
    load_manifest,
    scan_dataset,
    stratified_split,
    write_manifest,
    write_text_atomic,
)
from errors import ModelError
from evaluation import (
    ConfusionMatrix,
    EvalMode,
    ExperimentReport,
    GridReport,
    accuracy,
    confusion_matrix,
    run_experiment,
    run_grid,
)
from features import FeatureConfig, FeatureKind, FeatureVector, canonicalize, extract
from hog_render import dump_hog
from imgio import ImageRGB, load_image, to_grayscale
from learn import (
    TRAINERS,
    LabelSpace,
    LinearModel,
    ModelKind,
    Task,
    TrainConfig,
    predict_labels,
    predict_scores,
    softmax,
)
from model_store import load_model, save_model
from synthetic import SyntheticConfig, write_synthetic_dataset

logger = logging.getLogger(__name__)

Source = Union[str, Path, DatasetManifest]


@dataclass(frozen=True)
class Prediction:
    """Predicted label plus every class ranked by score (probability for logreg)."""

    label: str
    ranking: Tuple[Tuple[str, float], ...]
    probabilities: bool

    def top(self, k: Optional[int] = None) -> Tuple[Tuple[str, float], ...]:
        return self.ranking if k is None else self.ranking[:k]


@dataclass(frozen=True)
class TrainOutcome:
    model: LinearModel
    train_size: int
    test_size: int = 0
    heldout_matrix: Optional[ConfusionMatrix] = None
    heldout_accuracy: Optional[float] = None


def predict_image(m: LinearModel, img: ImageRGB, cfg: Optional[FeatureConfig] = None) -> Prediction:
    """
    Classify one image with a trained model.

    The model's own feature configuration is used when it carries one.
    Ties in the ranking keep label order, so ranking[0] is the argmax label.
    """
    cfg = m.feature_config or cfg or FeatureConfig()
    scores = predict_scores(m, extract(img, m.feature_kind, cfg))
    is_logreg = m.kind == ModelKind.LOGREG
    values = softmax(scores) if is_logreg else scores
    order = sorted(range(len(values)), key=lambda i: -values[i])
    ranking = tuple((m.label_space.labels[i], float(values[i])) for i in order)
    return Prediction(label=ranking[0][0], ranking=ranking, probabilities=is_logreg)


def tag_image(
    country_model: LinearModel,
    year_model: LinearModel,
    img: ImageRGB,
    cfg: Optional[FeatureConfig] = None
) -> Tuple[Prediction, Prediction]:
    """Predict both the country and the year of one stamp."""
    if country_model.label_space.task != Task.COUNTRY:
        raise ModelError(f"country model was trained for {country_model.label_space.task.value}")
    if year_model.label_space.task != Task.YEAR:
        raise ModelError(f"year model was trained for {year_model.label_space.task.value}")
    return predict_image(country_model, img, cfg), predict_image(year_model, img, cfg)


class StampClassifier:
    """High-level interface over ingestion, training, evaluation and prediction."""

    def __init__(
        self,
        feature_config: Optional[FeatureConfig] = None,
        train_config: Optional[TrainConfig] = None,
        workers: Optional[int] = None
    ):
        """
        Initialize the classifier pipeline.

        Args:
            feature_config: Extractor parameters (defaults from Config)
            train_config: Optimiser settings
            workers: Threads for feature extraction and repeated runs
        """
        try:
            Config.validate()
            self.feature_config = feature_config or FeatureConfig()
            self.train_config = train_config or TrainConfig()
            self.workers = workers or Config.WORKERS
            logger.info(
                f"Stamp classifier initialized (canonical size {self.feature_config.canonical_size}, "
                f"{self.workers} worker(s))"
            )
        except Exception as e:
            logger.error(f"Failed to initialize stamp classifier: {e}")
            raise

    def _manifest(self, source: Source) -> DatasetManifest:
        return source if isinstance(source, DatasetManifest) else load_manifest(source)

    def scan(self, root: Union[str, Path], out: Optional[Union[str, Path]] = None) -> DatasetManifest:
        """
        Scan a dataset tree and optionally write its manifest CSV.

        Args:
            root: <country>/<year>/<image> directory tree
            out: Manifest CSV destination

        Returns:
            The scanned manifest
        """
        try:
            manifest = scan_dataset(root)
            if out is not None:
                write_manifest(manifest, out)
            return manifest
        except Exception as e:
            logger.error(f"Error scanning {root}: {e}")
            raise

    def train(
        self,
        source: Source,
        task: Task,
        kind: FeatureKind,
        model_kind: ModelKind,
        full: bool = False,
        augment: bool = False,
        seed: Optional[int] = None,
        ratio: Optional[float] = None,
        out: Optional[Union[str, Path]] = None
    ) -> TrainOutcome:
        """
        Train one model, on a seeded stratified split or on all records.

        Args:
            source: Manifest, manifest CSV or dataset root
            task: country or year
            kind: Descriptor kind
            model_kind: svm or logreg
            full: Train on every record instead of the training split
            augment: Expand the training images with flips and rotations
            seed: Split and shuffle seed (default train_config.seed)
            ratio: Training fraction (default Config.SPLIT_RATIO)
            out: Model file destination

        Returns:
            TrainOutcome with held-out accuracy when a split was used
        """
        try:
            manifest = self._manifest(source)
            task = Task(task)
            seed = self.train_config.seed if seed is None else seed
            ratio = Config.SPLIT_RATIO if ratio is None else ratio
            tc = replace(self.train_config, seed=seed)
            ls = LabelSpace(task, manifest.labels(task))

            if full:
                train_idx, test_idx = range(len(manifest)), ()
            else:
                split = stratified_split(manifest, task, ratio, seed)
                train_idx, test_idx = split.train, split.test
            logger.info(f"Training on {len(train_idx)} records, holding out {len(test_idx)}")

            train_set = build_feature_matrix(
                manifest, train_idx, kind, self.feature_config, augment=augment, workers=self.workers
            )
            model = TRAINERS[ModelKind(model_kind)](
                train_set.X, train_set.labels(task), ls, tc, self.feature_config
            )

            outcome = TrainOutcome(model=model, train_size=len(train_set.X))
            if test_idx:
                test_set = build_feature_matrix(
                    manifest, test_idx, kind, self.feature_config, workers=self.workers
                )
                cm = confusion_matrix(test_set.labels(task), predict_labels(model, test_set.X), ls)
                outcome = replace(
                    outcome, test_size=len(test_set.X), heldout_matrix=cm, heldout_accuracy=accuracy(cm)
                )
            if out is not None:
                save_model(model, out)
            return outcome
        except Exception as e:
            logger.error(f"Error training {model_kind} on {kind}: {e}")
            raise

    def evaluate(
        self,
        source: Source,
        task: Task,
        kind: FeatureKind,
        model_kind: ModelKind,
        repeats: Optional[int] = None,
        seed: Optional[int] = None,
        augment_train: bool = False,
        eval_mode: EvalMode = EvalMode.PLAIN,
        ratio: Optional[float] = None
    ) -> ExperimentReport:
        """Run the repeated split/train/test experiment."""
        try:
            return run_experiment(
                self._manifest(source), task, kind, model_kind,
                self.feature_config, self.train_config,
                repeats=repeats, base_seed=seed, ratio=ratio,
                augment_train=augment_train, eval_mode=eval_mode, workers=self.workers,
            )
        except Exception as e:
            logger.error(f"Error evaluating {model_kind} on {kind}: {e}")
            raise

    def grid(
        self,
        source: Source,
        task: Task,
        kinds: Sequence[FeatureKind],
        model_kinds: Sequence[ModelKind],
        repeats: Optional[int] = None,
        seed: Optional[int] = None,
        augment_train: bool = False,
        eval_mode: EvalMode = EvalMode.PLAIN,
        ratio: Optional[float] = None
    ) -> GridReport:
        """Evaluate every feature x model combination."""
        try:
            return run_grid(
                self._manifest(source), task, kinds, model_kinds,
                self.feature_config, self.train_config,
                repeats=repeats, base_seed=seed, ratio=ratio,
                augment_train=augment_train, eval_mode=eval_mode, workers=self.workers,
            )
        except Exception as e:
            logger.error(f"Error running accuracy grid: {e}")
            raise

    def predict(self, model: Union[str, Path, LinearModel], image_path: Union[str, Path]) -> Prediction:
        """
        Classify one image file.

        Args:
            model: Model file path or loaded model
            image_path: PNG or JPEG file

        Returns:
            Prediction with the ranked classes
        """
        try:
            m = model if isinstance(model, LinearModel) else load_model(model)
            return predict_image(m, load_image(image_path), self.feature_config)
        except Exception as e:
            logger.error(f"Error predicting {image_path}: {e}")
            raise

    def tag(
        self,
        country_model: Union[str, Path, LinearModel],
        year_model: Union[str, Path, LinearModel],
        image_path: Union[str, Path]
    ) -> Tuple[Prediction, Prediction]:
        """Predict country and year of one image file."""
        try:
            cm = country_model if isinstance(country_model, LinearModel) else load_model(country_model)
            ym = year_model if isinstance(year_model, LinearModel) else load_model(year_model)
            return tag_image(cm, ym, load_image(image_path), self.feature_config)
        except Exception as e:
            logger.error(f"Error tagging {image_path}: {e}")
            raise

    def dump_features(
        self,
        image_path: Union[str, Path],
        kind: FeatureKind,
        out: Optional[Union[str, Path]] = None,
        hog_png: Optional[Union[str, Path]] = None
    ) -> FeatureVector:
        """
        Extract one descriptor and optionally write it as JSON.

        Args:
            image_path: PNG or JPEG file
            kind: Descriptor kind
            out: JSON destination ({kind, dim, config_fingerprint, values})
            hog_png: Destination of the HOG star-plot rendering

        Returns:
            The extracted FeatureVector
        """
        try:
            img = load_image(image_path)
            vector = extract(img, kind, self.feature_config)
            if out is not None:
                write_text_atomic(out, json.dumps(self.feature_document(vector)) + "\n")
                logger.info(f"Wrote {vector.kind.value} descriptor ({vector.dim} values) to {out}")
            if hog_png is not None:
                dump_hog(to_grayscale(canonicalize(img, self.feature_config)), self.feature_config, hog_png)
            return vector
        except Exception as e:
            logger.error(f"Error dumping features of {image_path}: {e}")
            raise

    def feature_document(self, vector: FeatureVector) -> Dict[str, Any]:
        return {
            "kind": vector.kind.value,
            "dim": vector.dim,
            "config_fingerprint": self.feature_config.fingerprint(),
            "values": [float(v) for v in vector.values],
        }

    def synthesize(self, root: Union[str, Path], per_class: int = 100, seed: int = 0) -> DatasetManifest:
        """Write the seeded synthetic benchmark tree."""
        try:
            params = SyntheticConfig(per_class=per_class, size=self.feature_config.canonical_size, seed=seed)
            return write_synthetic_dataset(root, params)
        except Exception as e:
            logger.error(f"Error generating synthetic dataset: {e}")
            raise
