import json
import math
import warnings

import jsonschema
import numpy as np
import pytest

from moe_lab.densities import (
    GAUSSIAN_IDENTITY, BaseFamily, ComponentParams, base_logpdf, prompt_logpdf,
)
from moe_lab.errors import ParameterError, ShapeError
from moe_lab.experts import IDENTITY, SIGMOID, TANH
from moe_lab.model import (
    MODEL_SCHEMA, ContaminatedModel, Dataset, hellinger_mc, log_likelihood, log_responsibility,
    mixture_logpdf, read_dataset_csv, read_model_json, responsibility, sample_covariates,
    sample_dataset, write_dataset_csv, write_model_json,
)


def random_model(rng, d=3, lam=None):
    base = BaseFamily(str(rng.choice(["gaussian", "student_t"])), TANH)
    nu0 = rng.uniform(2.5, 6) if base.kind == "student_t" else rng.uniform(0.2, 2)
    G0 = ComponentParams(rng.uniform(-1, 1, d), rng.uniform(-1, 1), nu0)
    G = ComponentParams(rng.uniform(-1, 1, d), rng.uniform(-1, 1), rng.uniform(0.05, 2))
    return ContaminatedModel(rng.uniform(0, 1) if lam is None else lam, base, G0, SIGMOID, G)


def test_degenerate_mixtures(gauss_model, rng):
    x = rng.uniform(-1, 1, (50, 3))
    y = rng.normal(size=50)
    m0 = gauss_model.with_prompt(lam=0.0)
    m1 = gauss_model.with_prompt(lam=1.0)
    assert np.array_equal(mixture_logpdf(m0, x, y), base_logpdf(x, y, m0.base, m0.G0))
    assert np.array_equal(mixture_logpdf(m1, x, y), prompt_logpdf(x, y, m1.G, m1.sigma))


def test_equal_parts_mixture(rng):
    G = ComponentParams([0.4, -0.2], 0.1, 0.6)
    m = ContaminatedModel(0.5, GAUSSIAN_IDENTITY, G, IDENTITY, G)
    x = rng.uniform(-1, 1, (20, 2))
    y = rng.normal(size=20)
    assert np.allclose(mixture_logpdf(m, x, y), prompt_logpdf(x, y, G, IDENTITY), rtol=1e-14, atol=1e-14)


def test_mixture_monotone_in_lambda(rng):
    for _ in range(200):
        m = random_model(rng)
        x, y = rng.uniform(-1, 1, 3), rng.normal(0, 1.5)
        l1, l2 = sorted(rng.uniform(0, 1, 2))
        lo, hi = mixture_logpdf(m.with_prompt(lam=l1), x, y), mixture_logpdf(m.with_prompt(lam=l2), x, y)
        fp = prompt_logpdf(x, y, m.G, m.sigma)
        f0 = base_logpdf(x, y, m.base, m.G0)
        if fp > f0:
            assert hi >= lo - 1e-12
        else:
            assert hi <= lo + 1e-12


def test_mixture_integrates_to_one(rng):
    y = np.linspace(-400, 400, 800_001)
    for _ in range(20):
        m = random_model(rng)
        x = np.tile(rng.uniform(-1, 1, 3), (y.size, 1))
        assert abs(np.trapezoid(np.exp(mixture_logpdf(m, x, y)), y) - 1.0) < 1e-4


def test_log_likelihood_examples(rng):
    m = random_model(rng)
    data = sample_dataset(m, 40, rng)
    one = data.take([0])
    assert log_likelihood(m, one) == pytest.approx(float(mixture_logpdf(m, data.x[0], data.y[0])), rel=1e-15)
    doubled = Dataset(np.vstack([data.x, data.x]), np.concatenate([data.y, data.y]))
    assert log_likelihood(m, doubled) == pytest.approx(2 * log_likelihood(m, data), rel=1e-14)
    naive = 0.0
    for xi, yi in zip(data.x, data.y):
        f0 = math.exp(base_logpdf(xi, yi, m.base, m.G0))
        f = math.exp(prompt_logpdf(xi, yi, m.G, m.sigma))
        naive += math.log((1 - m.lam) * f0 + m.lam * f)
    assert log_likelihood(m, data) == pytest.approx(naive, rel=1e-12)


def test_log_likelihood_empty_warns(gauss_model):
    with pytest.warns(RuntimeWarning):
        assert log_likelihood(gauss_model, Dataset(np.zeros((0, 3)), np.zeros(0))) == 0.0


def test_dimension_mismatch(gauss_model):
    with pytest.raises(ShapeError):
        log_likelihood(gauss_model, Dataset(np.zeros((2, 4)), np.zeros(2)))


def test_model_rejects_bad_lambda(gauss_model):
    with pytest.raises(ValueError):
        gauss_model.with_prompt(lam=1.5)


def test_covariates_uniform_box(rng):
    x = sample_covariates(50_000, 4, rng)
    assert x.min() >= -1 and x.max() <= 1
    assert np.all(np.abs(x.mean(axis=0)) < 4 * math.sqrt(1 / 3 / 50_000))


def test_sample_lambda_one_mean_at_origin():
    n = 200_000
    m = ContaminatedModel(1.0, GAUSSIAN_IDENTITY, ComponentParams([1.0], 0.0, 1.0),
                          SIGMOID, ComponentParams([2.0], 0.7, 0.3))
    data = sample_dataset(m, n, np.random.default_rng(7))
    near = np.abs(data.x[:, 0]) < 0.02
    # sigmoid varies by at most 0.01 across the window, which the slack covers
    k = near.sum()
    assert abs(data.y[near].mean() - 1 / (1 + math.exp(-0.7))) <= 4 * math.sqrt(0.3 / k) + 0.01


def test_sample_prompt_fraction(t2_model):
    _, labels = sample_dataset(t2_model, 10_000, np.random.default_rng(11), return_labels=True)
    assert abs(labels.mean() - 0.5) <= 0.02


def test_sampling_is_deterministic(t2_model):
    a = sample_dataset(t2_model, 500, np.random.default_rng(5))
    b = sample_dataset(t2_model, 500, np.random.default_rng(5))
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()


def test_responsibility_examples(gauss_model, rng):
    x, y = rng.uniform(-1, 1, 3), 0.4
    assert responsibility(gauss_model.with_prompt(lam=0.0), x, y) == 0.0
    assert responsibility(gauss_model.with_prompt(lam=1.0), x, y) == 1.0
    G = ComponentParams([0.4, -0.2, 0.0], 0.1, 0.6)
    same = ContaminatedModel(0.3, GAUSSIAN_IDENTITY, G, IDENTITY, G)
    assert responsibility(same, x, y) == pytest.approx(0.3, rel=1e-14)


def test_responsibility_identity(rng):
    for _ in range(200):
        m = random_model(rng)
        x, y = rng.uniform(-1, 1, 3), rng.normal()
        p = math.exp(mixture_logpdf(m, x, y))
        f = math.exp(prompt_logpdf(x, y, m.G, m.sigma))
        assert responsibility(m, x, y) * p == pytest.approx(m.lam * f, rel=1e-12)


def test_joint_underflow_falls_back_to_lambda():
    m = ContaminatedModel(0.3, GAUSSIAN_IDENTITY, ComponentParams([1.0], 0.0, 1e-4),
                          IDENTITY, ComponentParams([1.0], 0.0, 1e-4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        logr, under = log_responsibility(m, np.array([[0.0]]), np.array([1e200]))
    assert under[0] and math.exp(logr[0]) == pytest.approx(0.3)


def test_hellinger_self_distance_is_zero(t2_model):
    est = hellinger_mc(t2_model, t2_model, 2000, np.random.default_rng(0))
    assert est.h == 0.0


def test_hellinger_gaussian_closed_form():
    def unit(mu):
        return ContaminatedModel(1.0, GAUSSIAN_IDENTITY, ComponentParams([1.0], 0.0, 1.0),
                                 IDENTITY, ComponentParams([0.0], mu, 1.0))

    target = 1 - math.exp(-1 / 8)
    assert target == pytest.approx(0.1175, abs=5e-5)
    for estimator in ("affinity", "squared"):
        est = hellinger_mc(unit(0.0), unit(1.0), 100_000, np.random.default_rng(3), estimator=estimator)
        assert abs(est.h**2 - target) <= 3 * est.se


def test_hellinger_symmetry(gauss_model):
    q = gauss_model.with_prompt(lam=0.6, G=ComponentParams([0.0, 1.0, 0.0], -0.5, 0.5))
    pq = hellinger_mc(gauss_model, q, 100_000, np.random.default_rng(1))
    qp = hellinger_mc(q, gauss_model, 100_000, np.random.default_rng(2))
    # the delta method turns the SE of the inner mean into one for h
    se = pq.se / (2 * pq.h) + qp.se / (2 * qp.h)
    assert abs(pq.h - qp.h) <= 3 * se


def test_hellinger_rejects_small_mc(gauss_model):
    with pytest.raises(ParameterError):
        hellinger_mc(gauss_model, gauss_model, 999, np.random.default_rng(0))


def test_csv_roundtrip(tmp_path, t2_model):
    data = sample_dataset(t2_model, 100, np.random.default_rng(0))
    path = tmp_path / "d.csv"
    write_dataset_csv(data, path)
    assert path.read_text().splitlines()[0] == "x1,x2,x3,x4,x5,x6,x7,x8,y"
    back = read_dataset_csv(path)
    assert np.array_equal(back.x, data.x) and np.array_equal(back.y, data.y)


def test_bad_csv_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ShapeError):
        read_dataset_csv(path)


def test_model_json_roundtrip(tmp_path, t2_model):
    path = tmp_path / "m.json"
    write_model_json(t2_model, path)
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, MODEL_SCHEMA)
    assert set(doc) == {"lambda", "base", "prompt"}
    assert read_model_json(path) == t2_model
