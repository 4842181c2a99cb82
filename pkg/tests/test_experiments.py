# test_experiments.py
"""End-to-end checks on synthetic corpora with known ground truth."""
import json

import numpy as np
import pytest

from agents.detector_agent import DetectorAgent
from utils.config import RunConfig


def run_corpus(tmp_path, scenario, seed=0, **generator):
    agent = DetectorAgent(RunConfig(out=tmp_path / "corpus", seed=seed))
    generated = agent.generate_synthetic(scenario, **generator)
    assert generated["success"], generated["error"]
    agent.config.out = tmp_path / "run"
    featurized = agent.featurize(generated["manifest"])
    assert featurized["success"], featurized["error"]
    return agent, featurized["features"]


def test_separable_corpus_is_detected(tmp_path):
    agent, features = run_corpus(tmp_path, "separable", seed=1, apps_per_class=500)
    result = agent.evaluate_cv(features, folds=10)
    assert result["metrics"]["f_measure"] >= 0.95


def test_indistinguishable_classes_stay_at_chance(tmp_path):
    agent, features = run_corpus(tmp_path, "null", seed=2, apps_per_class=150)
    result = agent.evaluate_cv(features, folds=10)
    assert result["metrics"]["f_measure"] == pytest.approx(0.5, abs=0.1)


def test_no_drift_keeps_accuracy_over_time(tmp_path):
    agent, features = run_corpus(tmp_path, "separable", seed=3, apps_per_class=150, epochs=[0, 1], drift=0.0)
    rows = agent.evaluate_temporal(features)["rows"]
    same, later = rows[0]["f_measure"], rows[1]["f_measure"]
    assert abs(same - later) <= 0.05


def converging_spec(path, seed, n=8):
    """Benign apps call uniformly, malware follows two fixed successors; random drift pulls malware toward benign."""
    benign = np.full((n, n), 1 / n)
    malware = np.zeros((n, n))
    for i in range(n):
        malware[i, [(i + 1) % n, (i + 3) % n]] = 0.5
    path.write_text(json.dumps({"benign_profile": benign.tolist(), "malware_profile": malware.tolist(), "seed": seed}))
    return path


@pytest.mark.parametrize("seed", [4, 5, 6])
def test_drift_degrades_older_models(tmp_path, seed):
    spec_file = converging_spec(tmp_path / "spec.json", seed)
    agent, features = run_corpus(tmp_path, "separable", spec_file=spec_file,
                                 apps_per_class=80, epochs=[0, 1, 2], drift=0.3)
    rows = agent.evaluate_temporal(features)["rows"]
    assert [r["delta_epoch"] for r in rows] == [0, 1, 2]
    assert rows[0]["f_measure"] >= 0.95
    assert rows[0]["f_measure"] - rows[2]["f_measure"] >= 0.05
