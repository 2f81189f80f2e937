#!/usr/bin/env python3
"""
Tests for the versioned JSON model format.
"""

import json
import os
import sys
import shutil
import tempfile
import unittest

import numpy as np

# Add current directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from errors import ModelFormatError, ModelVersionError
from features import FeatureConfig, FeatureKind, FeatureVector
from learn import LabelSpace, ModelKind, Task, TrainConfig, predict_labels, predict_scores_batch, train_logreg, train_svm
from model_store import _format_float, dumps_model, load_model, save_model


class TestModelStore(unittest.TestCase):
    """Save/load round trips and version checking."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.path = os.path.join(self.test_dir, "model.json")
        rng = np.random.default_rng(42)
        self.cfg = FeatureConfig(hist_bins=4)
        self.X = [FeatureVector(FeatureKind.HIST, row) for row in rng.random((30, 12))]
        self.y = [("China", "Japan", "Malaysia")[i % 3] for i in range(30)]
        self.ls = LabelSpace(Task.COUNTRY, ("China", "Japan", "Malaysia"))
        self.model = train_logreg(self.X, self.y, self.ls, TrainConfig(seed=1, epochs_sgd=20), self.cfg)
        self.inputs = [FeatureVector(FeatureKind.HIST, row) for row in rng.normal(size=(100, 12))]

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def _write(self, doc):
        with open(self.path, "w", encoding="utf-8") as handle:
            json.dump(doc, handle)

    def test_round_trip_is_bit_exact(self):
        save_model(self.model, self.path)
        loaded = load_model(self.path)

        np.testing.assert_array_equal(loaded.weights, self.model.weights)
        np.testing.assert_array_equal(loaded.standardizer.mean, self.model.standardizer.mean)
        np.testing.assert_array_equal(loaded.standardizer.scale, self.model.standardizer.scale)
        self.assertEqual(loaded.label_space.labels, self.ls.labels)
        self.assertIs(loaded.kind, ModelKind.LOGREG)
        self.assertEqual(loaded.feature_config, self.cfg)
        self.assertEqual(loaded.config_fingerprint, self.cfg.fingerprint())

    def test_reloaded_model_predicts_identically(self):
        save_model(self.model, self.path)
        loaded = load_model(self.path)

        np.testing.assert_array_equal(
            predict_scores_batch(loaded, self.inputs), predict_scores_batch(self.model, self.inputs)
        )
        self.assertEqual(predict_labels(loaded, self.inputs), predict_labels(self.model, self.inputs))

    def test_svm_round_trip(self):
        model = train_svm(self.X, self.y, self.ls, TrainConfig(seed=2, epochs_sgd=5), self.cfg)
        save_model(model, self.path)
        self.assertIs(load_model(self.path).kind, ModelKind.SVM)

    def test_document_layout(self):
        doc = json.loads(dumps_model(self.model))

        self.assertEqual(doc["format_version"], 1)
        self.assertEqual(doc["kind"], "logreg")
        self.assertEqual(doc["task"], "country")
        self.assertEqual(doc["labels"], ["China", "Japan", "Malaysia"])
        self.assertEqual(doc["feature_kind"], "hist")
        self.assertEqual(doc["feature_config"]["hist_bins"], 4)
        self.assertEqual(len(doc["standardizer"]["mean"]), 12)
        self.assertEqual(len(doc["weights"]), 3)
        self.assertEqual(len(doc["weights"][0]), 13)

    def test_serialisation_is_deterministic(self):
        save_model(self.model, self.path)
        with open(self.path, "rb") as handle:
            first = handle.read()
        save_model(self.model, self.path)
        with open(self.path, "rb") as handle:
            second = handle.read()
        self.assertEqual(first, second)

    def test_float_tokens(self):
        self.assertEqual(_format_float(1.0), "1.0")
        self.assertEqual(_format_float(-0.0), "-0.0")
        self.assertEqual(float(_format_float(0.1)), 0.1)
        self.assertEqual(float(_format_float(1e-300)), 1e-300)
        self.assertEqual(json.loads(_format_float(1e20)), 1e20)

    def test_unknown_version_fails_loudly(self):
        doc = json.loads(dumps_model(self.model))
        doc["format_version"] = 2
        self._write(doc)

        with self.assertRaises(ModelVersionError) as ctx:
            load_model(self.path)
        self.assertEqual(ctx.exception.path, self.path)

    def test_missing_keys(self):
        doc = json.loads(dumps_model(self.model))
        del doc["weights"]
        self._write(doc)

        with self.assertRaises(ModelFormatError):
            load_model(self.path)

    def test_fingerprint_must_match_config(self):
        doc = json.loads(dumps_model(self.model))
        doc["config_fingerprint"] = "0" * 64
        self._write(doc)

        with self.assertRaises(ModelFormatError):
            load_model(self.path)

    def test_standardizer_length_must_match(self):
        doc = json.loads(dumps_model(self.model))
        doc["standardizer"]["mean"] = doc["standardizer"]["mean"][:-1]
        self._write(doc)

        with self.assertRaises(ModelFormatError):
            load_model(self.path)

    def test_ragged_weights(self):
        doc = json.loads(dumps_model(self.model))
        doc["weights"][1] = doc["weights"][1][:-1]
        self._write(doc)

        with self.assertRaises(ModelFormatError):
            load_model(self.path)

    def test_not_json(self):
        with open(self.path, "w") as handle:
            handle.write("{not json")

        with self.assertRaises(ModelFormatError) as ctx:
            load_model(self.path)
        self.assertIn(self.path, str(ctx.exception))

    def test_missing_file(self):
        with self.assertRaises(ModelFormatError):
            load_model(os.path.join(self.test_dir, "absent.json"))

    def test_directory_is_not_a_model(self):
        with self.assertRaises(ModelFormatError) as ctx:
            load_model(self.test_dir)
        self.assertEqual(ctx.exception.path, self.test_dir)

    def test_no_temporary_files_left(self):
        save_model(self.model, self.path)
        self.assertEqual(os.listdir(self.test_dir), ["model.json"])


if __name__ == "__main__":
    unittest.main()
