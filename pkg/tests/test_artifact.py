import json
import math

import numpy as np
import pytest

from nile import artifact
from nile.estimator import NileOptions, nile_fit, predict
from nile.scm import make_model, sample_data

STRONG = (math.sqrt(1 / 3), math.sqrt(2 / 3), 0.0)


@pytest.fixture(scope="module")
def fit():
    rng = np.random.default_rng(0)
    data = sample_data(make_model(STRONG, rng), 200, rng)
    return nile_fit(data, NileOptions(k=20, seed=3))


class TestRoundTrip:
    def test_bitwise_predictions(self, fit, tmp_path):
        path = tmp_path / "fit.json"
        artifact.save(fit, path)
        loaded = artifact.load(path)
        x = np.linspace(-3, 3, 601)
        np.testing.assert_array_equal(predict(loaded, x), predict(fit, x))
        np.testing.assert_array_equal(loaded.theta, fit.theta)
        assert loaded.lambda_star == fit.lambda_star
        assert loaded.gamma == fit.gamma and loaded.delta == fit.delta
        assert loaded.test_kind == fit.test_kind and loaded.seed == 3

    def test_required_fields(self, fit):
        doc = json.loads(artifact.dumps(fit))
        for key in ("theta", "a", "b", "k", "knots", "gamma", "delta", "lambda_star", "fallback_used", "alpha", "test_kind", "seed"):
            assert key in doc

    def test_infinite_lambda(self, fit):
        doc = artifact.fit_to_dict(fit)
        doc["lambda_star"] = "inf"
        doc["fallback_used"] = True
        loaded = artifact.fit_from_dict(doc)
        assert math.isinf(loaded.lambda_star)
        assert json.loads(json.dumps(doc))["lambda_star"] == "inf"


class TestCorruption:
    @pytest.mark.parametrize(
        "mutate,match",
        [
            (lambda d: d.update(k=3), "k >= 4"),
            (lambda d: d.update(a=5.0), "a < b"),
            (lambda d: d.update(theta=d["theta"][:-1]), "len\\(theta\\) == k"),
            (lambda d: d.update(knots=[0.0] * len(d["knots"])), "knots"),
            (lambda d: d.update(lambda_star=-1.0), "lambda_star >= 0"),
            (lambda d: d.update(alpha=2.0), "alpha"),
            (lambda d: d.update(test_kind="t9"), "test_kind"),
            (lambda d: d.pop("gamma"), "missing field 'gamma'"),
            (lambda d: d.update(theta=["x"] * len(d["theta"])), "must be a number"),
            (lambda d: d.update(reject=True), "accepts unless fallback_used"),
        ],
    )
    def test_names_failed_invariant(self, fit, mutate, match):
        doc = artifact.fit_to_dict(fit)
        mutate(doc)
        with pytest.raises(artifact.ArtifactError, match=match):
            artifact.fit_from_dict(doc)

    def test_not_json(self):
        with pytest.raises(artifact.ArtifactError, match="JSON"):
            artifact.loads("{not json")

    def test_not_object(self):
        with pytest.raises(artifact.ArtifactError):
            artifact.loads("[1, 2]")
