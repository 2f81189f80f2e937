#!/usr/bin/env python3
"""
Tests for dataset scanning, manifests, stratified splits, augmentation and
batch feature extraction.
"""

import os
import sys
import shutil
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
from PIL import Image

# Add current directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from dataset import (
    DatasetManifest,
    SampleRecord,
    augment_image,
    build_feature_matrix,
    flip_horizontal,
    load_manifest,
    manifest_to_csv,
    read_manifest,
    rotate90,
    rotate180,
    scan_dataset,
    stratified_split,
    train_count,
    write_manifest,
    write_text_atomic,
)
from errors import (
    ClassTooSmallError,
    CorruptImageError,
    EmptyDatasetError,
    ManifestError,
    OutputWriteError,
    RootNotFoundError,
)
from features import FeatureConfig, FeatureKind
from learn import Task


def write_png(path, rng=None, size=(8, 8), color=None):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    if color is not None:
        Image.new("RGB", size, color).save(path)
    else:
        rng = rng or np.random.default_rng(0)
        Image.fromarray(rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)).save(path)


def synthetic_manifest(class_sizes, task=Task.COUNTRY):
    records = []
    for c, size in enumerate(class_sizes):
        for i in range(size):
            label = f"class{c}"
            country, year = (label, "2000") if task == Task.COUNTRY else ("X", label)
            records.append(SampleRecord(path=f"/data/{label}/{i}.png", country=country, year=year))
    return DatasetManifest(records=tuple(records))


class TestScan(unittest.TestCase):

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.root = os.path.join(self.test_dir, "stamps")
        os.makedirs(self.root)

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_two_records(self):
        write_png(os.path.join(self.root, "Japan", "2013", "b.jpg"))
        write_png(os.path.join(self.root, "China", "2012", "a.png"))

        manifest = scan_dataset(self.root)

        self.assertEqual(len(manifest), 2)
        self.assertEqual(manifest.countries, ("China", "Japan"))
        self.assertEqual(manifest.years, ("2012", "2013"))
        self.assertTrue(manifest.records[0].path.endswith(os.path.join("China", "2012", "a.png")))

    def test_non_images_and_wrong_depth_are_skipped(self):
        write_png(os.path.join(self.root, "China", "2012", "a.png"))
        with open(os.path.join(self.root, "China", "2012", "notes.txt"), "w") as handle:
            handle.write("x")
        write_png(os.path.join(self.root, "loose.png"))
        write_png(os.path.join(self.root, "China", "2012", "deep", "c.png"))

        with self.assertLogs("dataset", level="WARNING") as logs:
            manifest = scan_dataset(self.root)

        self.assertEqual(len(manifest), 1)
        self.assertIn("Skipped 3", logs.output[0])

    def test_empty_root(self):
        with self.assertRaises(EmptyDatasetError) as ctx:
            scan_dataset(self.root)
        self.assertIn("empty dataset", str(ctx.exception))

    def test_missing_root(self):
        with self.assertRaises(RootNotFoundError):
            scan_dataset(os.path.join(self.test_dir, "absent"))

    def test_fixture_tree_order_is_deterministic(self):
        rng = np.random.default_rng(1)
        countries = ["South-Korea", "China", "Singapore", "Japan", "Malaysia"]
        years = ["2015", "2011", "2013", "2012", "2014"]
        for country in countries:
            for year in years:
                for name in ("b.png", "a.jpeg"):
                    write_png(os.path.join(self.root, country, year, name), rng)

        first = scan_dataset(self.root)
        second = scan_dataset(self.root)

        self.assertEqual(len(first), 50)
        self.assertEqual(manifest_to_csv(first), manifest_to_csv(second))
        keys = [(r.country, r.year, os.path.basename(r.path)) for r in first.records]
        self.assertEqual(keys, sorted(keys))
        self.assertEqual(first.tally(Task.COUNTRY), {c: 10 for c in sorted(countries)})

    def test_enumeration_order_does_not_matter(self):
        for name in ("c.png", "a.png", "b.png"):
            write_png(os.path.join(self.root, "China", "2012", name))
        real_walk = os.walk

        def reversed_walk(top):
            for dirpath, dirnames, filenames in real_walk(top):
                yield dirpath, dirnames, list(reversed(filenames))

        with patch("dataset.os.walk", side_effect=reversed_walk):
            shuffled = scan_dataset(self.root)

        self.assertEqual(manifest_to_csv(shuffled), manifest_to_csv(scan_dataset(self.root)))


class TestManifestCsv(unittest.TestCase):

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_write_then_read(self):
        manifest = synthetic_manifest([2, 3])
        path = os.path.join(self.test_dir, "manifest.csv")

        write_manifest(manifest, path)
        loaded = read_manifest(path)

        self.assertEqual(loaded.records, manifest.records)
        with open(path, "rb") as handle:
            content = handle.read()
        self.assertTrue(content.startswith(b"path,country,year\n"))
        self.assertNotIn(b"\r", content)

    def test_relative_paths_resolve_against_manifest(self):
        path = os.path.join(self.test_dir, "manifest.csv")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("path,country,year\nChina/2012/a.png,China,2012\n")

        manifest = load_manifest(path)

        self.assertEqual(manifest.records[0].path, os.path.join(self.test_dir, "China", "2012", "a.png"))

    def test_bad_header(self):
        path = os.path.join(self.test_dir, "manifest.csv")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("file,label\na.png,China\n")
        with self.assertRaises(ManifestError):
            read_manifest(path)

    def test_header_only_is_empty(self):
        path = os.path.join(self.test_dir, "manifest.csv")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("path,country,year\n")
        with self.assertRaises(EmptyDatasetError):
            read_manifest(path)

    def test_duplicate_paths_rejected(self):
        record = SampleRecord("/a.png", "China", "2012")
        with self.assertRaises(ManifestError):
            DatasetManifest((record, record))

    def test_empty_labels_rejected(self):
        with self.assertRaises(ManifestError):
            SampleRecord("/a.png", "", "2012")

    def test_write_into_missing_directory(self):
        path = os.path.join(self.test_dir, "missing", "manifest.csv")

        with self.assertRaises(OutputWriteError) as ctx:
            write_manifest(synthetic_manifest([2]), path)

        self.assertEqual(ctx.exception.path, path)
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_failed_write_leaves_no_temporary_file(self):
        path = os.path.join(self.test_dir, "out.csv")
        os.makedirs(path)

        with self.assertRaises(OutputWriteError):
            write_text_atomic(path, "x\n")

        self.assertEqual(os.listdir(self.test_dir), ["out.csv"])


class TestStratifiedSplit(unittest.TestCase):

    def test_three_records_two_thirds(self):
        split = stratified_split(synthetic_manifest([3]), Task.COUNTRY, 2 / 3, seed=0)
        self.assertEqual((len(split.train), len(split.test)), (2, 1))

    def test_thirty_records_round_up(self):
        manifest = synthetic_manifest([10, 10, 10])

        split = stratified_split(manifest, Task.COUNTRY, 2 / 3, seed=5)

        for c in range(3):
            members = set(range(10 * c, 10 * (c + 1)))
            self.assertEqual(len(members & set(split.train)), 7)
            self.assertEqual(len(members & set(split.test)), 3)

    def test_same_seed_same_split(self):
        manifest = synthetic_manifest([6, 9])
        self.assertEqual(
            stratified_split(manifest, Task.COUNTRY, 0.5, seed=11),
            stratified_split(manifest, Task.COUNTRY, 0.5, seed=11),
        )

    def test_seeds_vary_the_split(self):
        manifest = synthetic_manifest([10, 10, 10])
        splits = {stratified_split(manifest, Task.COUNTRY, 2 / 3, seed).train for seed in range(10)}
        self.assertGreaterEqual(len(splits), 2)

    def test_partition_and_rounding_on_random_manifests(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            sizes = rng.integers(2, 15, size=rng.integers(1, 6))
            ratio = float(rng.uniform(0.1, 0.9))
            task = Task.COUNTRY if rng.random() < 0.5 else Task.YEAR
            manifest = synthetic_manifest(sizes, task)

            split = stratified_split(manifest, task, ratio, int(rng.integers(0, 2 ** 31)))

            self.assertEqual(set(split.train) & set(split.test), set())
            self.assertEqual(sorted(split.train + split.test), list(range(len(manifest))))
            self.assertEqual(list(split.train), sorted(split.train))
            train_labels = manifest.task_labels(task, split.train)
            for label, n in manifest.tally(task).items():
                self.assertEqual(train_labels.count(label), train_count(n, ratio))

    def test_stratifies_by_year(self):
        manifest = DatasetManifest(tuple(
            SampleRecord(f"/{i}.png", "China", "2011" if i < 4 else "2012") for i in range(10)
        ))
        split = stratified_split(manifest, Task.YEAR, 0.5, seed=0)
        self.assertEqual(manifest.task_labels(Task.YEAR, split.train).count("2011"), 2)

    def test_rounding_rule(self):
        self.assertEqual(train_count(3, 2 / 3), 2)
        self.assertEqual(train_count(10, 2 / 3), 7)
        self.assertEqual(train_count(5, 0.5), 3)

    def test_class_too_small(self):
        with self.assertRaises(ClassTooSmallError):
            stratified_split(synthetic_manifest([5, 1]), Task.COUNTRY, 2 / 3, seed=0)

    def test_ratio_bounds(self):
        with self.assertRaises(ValueError):
            stratified_split(synthetic_manifest([4]), Task.COUNTRY, 1.0, seed=0)


class TestAugmentation(unittest.TestCase):

    def test_single_pixel_fixed_point(self):
        img = np.array([[[1, 2, 3]]], dtype=np.uint8)
        variants = augment_image(img)
        self.assertEqual(len(variants), 5)
        for variant in variants:
            np.testing.assert_array_equal(variant, img)

    def test_two_pixel_flips(self):
        a, b = [10, 10, 10], [200, 200, 200]
        img = np.array([[a, b]], dtype=np.uint8)

        np.testing.assert_array_equal(flip_horizontal(img), [[b, a]])
        np.testing.assert_array_equal(rotate180(img), [[b, a]])

    def test_rotate90_is_clockwise(self):
        img = np.arange(4, dtype=np.uint8).reshape(2, 2, 1).repeat(3, axis=2)
        # [[0, 1], [2, 3]] clockwise -> [[2, 0], [3, 1]]
        np.testing.assert_array_equal(rotate90(img)[:, :, 0], [[2, 0], [3, 1]])

    def test_rotate90_order_four(self):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 256, size=(3, 5, 3), dtype=np.uint8)

        once = rotate90(img)
        back = rotate90(rotate90(rotate90(once)))

        self.assertEqual(once.shape, (5, 3, 3))
        np.testing.assert_array_equal(back, img)

    def test_variant_order(self):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, size=(4, 6, 3), dtype=np.uint8)

        original, hflip, vflip, rot90, rot180 = augment_image(img)

        np.testing.assert_array_equal(original, img)
        np.testing.assert_array_equal(hflip, img[:, ::-1])
        np.testing.assert_array_equal(vflip, img[::-1])
        np.testing.assert_array_equal(rot90, np.rot90(img, k=-1))
        np.testing.assert_array_equal(rot180, img[::-1, ::-1])


class TestBuildFeatureMatrix(unittest.TestCase):

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        rng = np.random.default_rng(4)
        for country in ("China", "Japan", "Malaysia"):
            write_png(os.path.join(self.test_dir, country, "2012", "s.png"), rng, size=(24, 16))
        self.manifest = scan_dataset(self.test_dir)
        self.cfg = FeatureConfig(canonical_size=32, hist_bins=8, daisy_radius=6, daisy_step=8)

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_plain_extraction(self):
        matrix = build_feature_matrix(self.manifest, [0, 1, 2], FeatureKind.HIST, self.cfg)

        self.assertEqual(len(matrix.X), 3)
        self.assertEqual(matrix.y_country, ["China", "Japan", "Malaysia"])
        self.assertEqual(matrix.labels(Task.YEAR), ["2012"] * 3)

    def test_augmented_extraction_repeats_labels(self):
        matrix = build_feature_matrix(self.manifest, [2, 0, 1], FeatureKind.HOG, self.cfg, augment=True)

        self.assertEqual(len(matrix.X), 15)
        self.assertEqual(matrix.y_country, ["Malaysia"] * 5 + ["China"] * 5 + ["Japan"] * 5)
        distinct = {vector.values.tobytes() for vector in matrix.X[:5]}
        self.assertGreaterEqual(len(distinct), 2)

    def test_threaded_extraction_keeps_order(self):
        serial = build_feature_matrix(self.manifest, [0, 1, 2], FeatureKind.ALL, self.cfg, workers=1)
        threaded = build_feature_matrix(self.manifest, [0, 1, 2], FeatureKind.ALL, self.cfg, workers=3)

        for a, b in zip(serial.X, threaded.X):
            np.testing.assert_array_equal(a.values, b.values)
        self.assertEqual(serial.y_country, threaded.y_country)

    def test_errors_name_the_file(self):
        broken = self.manifest.records[1].path
        with open(broken, "wb") as handle:
            handle.write(b"garbage")

        with self.assertRaises(CorruptImageError) as ctx:
            build_feature_matrix(self.manifest, [0, 1, 2], FeatureKind.HIST, self.cfg)
        self.assertIn(broken, str(ctx.exception))


if __name__ == "__main__":
    unittest.main()
