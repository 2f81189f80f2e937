"""
Stamp dataset ingestion, stratified splitting and flip/rotation augmentation.

On-disk layout: <root>/<country>/<year>/<image>.{png,jpg,jpeg}
Manifest CSV:   header `path,country,year`, UTF-8, LF line endings
"""

import csv
import hashlib
import io
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import Config
from errors import (
    ClassTooSmallError,
    EmptyDatasetError,
    ManifestError,
    OutputWriteError,
    RootNotFoundError,
    StampIdError,
)
from features import FeatureConfig, FeatureKind, FeatureVector, extract
from imgio import ImageRGB, load_image
from learn import Task

logger = logging.getLogger(__name__)

MANIFEST_HEADER = ("path", "country", "year")
AUGMENT_FACTOR = 5


@dataclass(frozen=True)
class SampleRecord:
    path: str
    country: str
    year: str

    def __post_init__(self):
        if not self.path:
            raise ManifestError("sample path must not be empty")
        if not self.country or not self.year:
            raise ManifestError("country and year must not be empty", path=self.path)

    def label(self, task: Task) -> str:
        return self.country if Task(task) == Task.COUNTRY else self.year


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered sample records; label sets are derived from the records."""

    records: Tuple[SampleRecord, ...]

    def __post_init__(self):
        records = tuple(self.records)
        seen = set()
        for record in records:
            if record.path in seen:
                raise ManifestError("duplicate path in manifest", path=record.path)
            seen.add(record.path)
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def countries(self) -> Tuple[str, ...]:
        return tuple(sorted({record.country for record in self.records}))

    @property
    def years(self) -> Tuple[str, ...]:
        return tuple(sorted({record.year for record in self.records}))

    def labels(self, task: Task) -> Tuple[str, ...]:
        return self.countries if Task(task) == Task.COUNTRY else self.years

    def task_labels(self, task: Task, indices: Optional[Sequence[int]] = None) -> List[str]:
        if indices is None:
            indices = range(len(self.records))
        return [self.records[i].label(task) for i in indices]

    def tally(self, task: Task) -> Dict[str, int]:
        counts = {label: 0 for label in self.labels(task)}
        for record in self.records:
            counts[record.label(task)] += 1
        return counts


@dataclass(frozen=True)
class SplitResult:
    train: Tuple[int, ...]
    test: Tuple[int, ...]
    seed: int
    ratio: float


@dataclass(frozen=True)
class FeatureMatrix:
    X: List[FeatureVector]
    y_country: List[str]
    y_year: List[str]

    def labels(self, task: Task) -> List[str]:
        return self.y_country if Task(task) == Task.COUNTRY else self.y_year


# Ingestion

def _is_image(path: Path) -> bool:
    return path.suffix.lower() in Config.IMAGE_EXTENSIONS


def scan_dataset(root: Union[str, Path]) -> DatasetManifest:
    """
    Build a manifest from a <country>/<year>/<image> directory tree.

    Records are sorted by (country, year, filename) so the result does not
    depend on filesystem enumeration order. Files that are not images, or
    that sit at the wrong depth, are skipped with a warning count.

    Args:
        root: Dataset root directory

    Returns:
        DatasetManifest with one record per image file
    """
    root = Path(root)
    if not root.is_dir():
        raise RootNotFoundError("dataset root not found", path=str(root))

    records = []
    skipped = 0
    for dirpath, _, filenames in os.walk(root):
        relative = Path(dirpath).relative_to(root)
        for name in filenames:
            if len(relative.parts) != 2 or not _is_image(Path(name)):
                skipped += 1
                continue
            country, year = relative.parts
            records.append(SampleRecord(path=str(Path(dirpath) / name), country=country, year=year))

    if skipped:
        logger.warning(f"Skipped {skipped} non-image files under {root}")
    if not records:
        raise EmptyDatasetError("empty dataset", path=str(root))

    records.sort(key=lambda r: (r.country, r.year, Path(r.path).name))
    logger.info(f"Scanned {len(records)} images under {root}")
    return DatasetManifest(records=tuple(records))


def manifest_to_csv(manifest: DatasetManifest) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for record in manifest.records:
        writer.writerow((record.path, record.country, record.year))
    return buffer.getvalue()


def write_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> None:
    """Write the manifest CSV atomically."""
    write_text_atomic(path, manifest_to_csv(manifest))
    logger.info(f"Wrote manifest with {len(manifest)} records to {path}")


def read_manifest(path: Union[str, Path]) -> DatasetManifest:
    """
    Read a `path,country,year` CSV manifest.

    Relative image paths are resolved against the manifest's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError("manifest file not found", path=str(path))

    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ManifestError(f"manifest header must be {','.join(MANIFEST_HEADER)}", path=str(path))
        records = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ManifestError(f"line {line_no}: expected 3 fields, got {len(row)}", path=str(path))
            image_path = Path(row[0])
            if not image_path.is_absolute():
                image_path = path.parent / image_path
            records.append(SampleRecord(path=str(image_path), country=row[1], year=row[2]))

    if not records:
        raise EmptyDatasetError("empty dataset", path=str(path))
    return DatasetManifest(records=tuple(records))


def load_manifest(source: Union[str, Path]) -> DatasetManifest:
    """Directory → scan; file → CSV manifest."""
    source = Path(source)
    if source.is_dir():
        return scan_dataset(source)
    return read_manifest(source)


def write_text_atomic(path: Union[str, Path], text: str) -> None:
    """Write text through a temporary file in the same directory, then rename."""
    path = Path(path)
    tmp = None
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except OSError as e:
        raise OutputWriteError(f"cannot write output: {e.strerror or e}", path=str(path)) from e
    finally:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)


# Splitting

def _class_rng(seed: int, label: str) -> np.random.Generator:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest[:8], "little")])


def train_count(n: int, ratio: float) -> int:
    """round(ratio * n), halves rounded up."""
    return int(math.floor(ratio * n + 0.5))


def stratified_split(
    m: DatasetManifest,
    task: Task,
    ratio: float,
    seed: int
) -> SplitResult:
    """
    Split every class independently into train and test.

    Within a class the record indices are shuffled by a generator seeded
    from (seed, class name); the first round(ratio * n) go to train.

    Args:
        m: Dataset manifest
        task: Which label stratifies the split
        ratio: Training fraction in (0, 1)
        seed: Split seed

    Returns:
        SplitResult with sorted train and test index tuples
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie strictly between 0 and 1, got {ratio}")

    by_class: Dict[str, List[int]] = {}
    for i, record in enumerate(m.records):
        by_class.setdefault(record.label(task), []).append(i)

    train, test = [], []
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) < 2:
            raise ClassTooSmallError(f"class {label!r} has {len(members)} record(s); need at least 2")
        shuffled = _class_rng(seed, label).permutation(np.asarray(members))
        k = train_count(len(members), ratio)
        train.extend(int(i) for i in shuffled[:k])
        test.extend(int(i) for i in shuffled[k:])

    logger.debug(f"Split seed {seed}: {len(train)} train / {len(test)} test")
    return SplitResult(train=tuple(sorted(train)), test=tuple(sorted(test)), seed=seed, ratio=ratio)


# Augmentation

def flip_horizontal(img: ImageRGB) -> ImageRGB:
    return np.ascontiguousarray(img[:, ::-1])


def flip_vertical(img: ImageRGB) -> ImageRGB:
    return np.ascontiguousarray(img[::-1])


def rotate90(img: ImageRGB) -> ImageRGB:
    """Rotate 90 degrees clockwise; width and height swap."""
    return np.ascontiguousarray(np.rot90(img, k=-1))


def rotate180(img: ImageRGB) -> ImageRGB:
    return np.ascontiguousarray(np.rot90(img, k=2))


def augment_image(img: ImageRGB) -> List[ImageRGB]:
    """[original, horizontal flip, vertical flip, rotate90 (clockwise), rotate180]"""
    return [img.copy(), flip_horizontal(img), flip_vertical(img), rotate90(img), rotate180(img)]


# Batch extraction

def extract_record(
    record: SampleRecord,
    kind: FeatureKind,
    cfg: FeatureConfig,
    augment: bool = False,
    transform: Optional[Callable[[ImageRGB], ImageRGB]] = None
) -> List[FeatureVector]:
    """Load one record and extract its descriptor(s); errors name the file."""
    try:
        img = load_image(record.path)
        if transform is not None:
            img = transform(img)
        images = augment_image(img) if augment else [img]
        return [extract(image, kind, cfg) for image in images]
    except StampIdError as e:
        if not e.path:
            e.path = record.path
        raise


def build_feature_matrix(
    m: DatasetManifest,
    indices: Sequence[int],
    kind: FeatureKind,
    cfg: FeatureConfig,
    augment: bool = False,
    workers: Optional[int] = None,
    transform: Optional[Callable[[ImageRGB], ImageRGB]] = None
) -> FeatureMatrix:
    """
    Extract descriptors for the given records, in index order.

    With augment, each record contributes 5 consecutive vectors (see
    augment_image) and its labels are repeated accordingly.

    Args:
        m: Dataset manifest
        indices: Record indices to extract
        kind: Descriptor kind
        cfg: Feature configuration
        augment: Expand every image through augment_image
        workers: Extraction threads (default Config.WORKERS)
        transform: Optional image transform applied before augmentation

    Returns:
        FeatureMatrix with X, y_country and y_year aligned
    """
    workers = workers or Config.WORKERS
    records = [m.records[i] for i in indices]

    def work(record: SampleRecord) -> List[FeatureVector]:
        return extract_record(record, kind, cfg, augment, transform)

    if workers > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_record = list(pool.map(work, records))
    else:
        per_record = [work(record) for record in records]

    X, y_country, y_year = [], [], []
    for record, vectors in zip(records, per_record):
        X.extend(vectors)
        y_country.extend([record.country] * len(vectors))
        y_year.extend([record.year] * len(vectors))

    logger.info(f"Extracted {len(X)} {FeatureKind(kind).value} vectors from {len(records)} images")
    return FeatureMatrix(X=X, y_country=y_country, y_year=y_year)
