import json
import math

import numpy as np
import pytest

from moe_lab.densities import ComponentParams, GAUSSIAN_IDENTITY
from moe_lab.diagnostics import (
    HEAT_TOL, build_rank_probe, distinguishability_score, grad_audit, heat_residual,
    heat_residual_fd, heat_terms, prompt_function_system, run_suite, sample_probe_points,
)
from moe_lab.errors import DiagnosticError
from moe_lab.experts import IDENTITY, SIGMOID
from moe_lab.ratelab.scenarios import make_scenario


def test_heat_identity_is_exact(rng):
    for _ in range(500):
        G = ComponentParams(rng.uniform(-2, 2, 4), rng.uniform(-2, 2), rng.uniform(0.05, 3))
        x = rng.uniform(-1, 1, 4)
        y = float(x @ G.a + G.b) + math.sqrt(G.nu) * rng.normal()
        d2f, dfn = heat_terms(x, y, G)
        assert abs(heat_residual(x, y, G)) <= HEAT_TOL * (abs(d2f) + abs(2 * dfn))


def test_heat_fd_agrees(rng):
    for _ in range(50):
        G = ComponentParams(rng.uniform(-1, 1, 2), rng.uniform(-1, 1), rng.uniform(0.3, 2))
        x = rng.uniform(-1, 1, 2)
        y = float(x @ G.a + G.b) + rng.normal()
        assert abs(heat_residual_fd(x, y, G) - heat_residual(x, y, G)) <= 1e-4


def test_heat_breaks_for_curved_expert():
    G = ComponentParams([0.8], 0.5, 0.3)
    x, y = np.array([0.4]), 1.4
    assert abs(heat_residual(x, y, G, SIGMOID)) > 1e-6
    assert abs(heat_residual_fd(x, y, G, SIGMOID) - heat_residual(x, y, G, SIGMOID)) <= 1e-4


def test_grad_audit():
    assert grad_audit(0, np.random.default_rng(0)) == {}
    a = grad_audit(200, np.random.default_rng(1))
    b = grad_audit(200, np.random.default_rng(1))
    assert a == b
    assert a and all(c.passed for c in a.values())


def _pair():
    return ComponentParams(np.ones(2), 1.0, 0.5), ComponentParams(np.array([0.5, -1.0]), -0.5, 0.8)


def test_student_t_base_is_distinguishable():
    spec = make_scenario("T2", "fixed_lambda", d=2)
    score = distinguishability_score(spec.base, spec.G0, spec.sigma, _pair(), 10_000,
                                     np.random.default_rng(0))
    assert score > 1e-3


def test_merging_score_shrinks_along_homotopy():
    spec = make_scenario("T4", "drift_i", d=2, nu0=1.0)
    _, G2 = _pair()
    scores = []
    for eps in (1e-1, 10**-1.5, 1e-2, 1e-3, 1e-4):
        G1 = ComponentParams(spec.G0.a + eps, spec.G0.b + eps, spec.G0.nu + eps)
        scores.append(distinguishability_score(spec.base, spec.G0, spec.sigma, (G1, G2), 4000,
                                               np.random.default_rng(3)))
    assert all(b < a for a, b in zip(scores, scores[1:]))
    assert scores[-1] < 1e-6


def test_duplicated_function_is_rank_deficient(rng):
    spec = make_scenario("T2", "fixed_lambda", d=2)
    G1, G2 = _pair()
    funcs = prompt_function_system(spec.base, spec.G0, spec.sigma, G1, G2)
    funcs["f_G1_again"] = funcs["f_G1"]
    xs, ys = sample_probe_points(spec.base, spec.G0, spec.sigma, G1, G2, 2000, rng)
    probe = build_rank_probe(funcs, xs, ys)
    assert abs(probe.score()) < 1e-10


def test_gram_properties_and_permutation_invariance(rng):
    spec = make_scenario("T6", "fixed_lambda", d=2)
    G1, G2 = _pair()
    funcs = prompt_function_system(spec.base, spec.G0, spec.sigma, G1, G2)
    xs, ys = sample_probe_points(spec.base, spec.G0, spec.sigma, G1, G2, 3000, rng)
    probe = build_rank_probe(funcs, xs, ys)
    assert probe.gram.shape == (5, 5)
    assert np.allclose(probe.gram, probe.gram.T, atol=1e-12)
    assert probe.eigenvalues().min() >= -1e-10
    shuffled = dict(reversed(list(funcs.items())))
    assert build_rank_probe(shuffled, xs, ys).score() == pytest.approx(probe.score(), abs=1e-6)


def test_degenerate_inputs(rng):
    spec = make_scenario("T2", "fixed_lambda", d=2)
    G1, G2 = _pair()
    funcs = prompt_function_system(spec.base, spec.G0, spec.sigma, G1, G2)
    with pytest.raises(DiagnosticError):
        build_rank_probe(funcs, np.zeros((10, 2)), np.zeros(10))
    with pytest.raises(DiagnosticError):
        distinguishability_score(GAUSSIAN_IDENTITY, spec.G0, IDENTITY, (G1, G1), 500, rng)
    with pytest.raises(DiagnosticError):
        distinguishability_score(GAUSSIAN_IDENTITY, spec.G0, IDENTITY, (G1, G2), 50, rng)


@pytest.mark.parametrize("suite", ["gradients", "heat", "distinguishability", "losses"])
def test_suites_pass(suite):
    results = run_suite(suite, np.random.default_rng(0))
    assert results and all(r.passed for r in results), [r.to_json() for r in results if not r.passed]
    json.dumps([r.to_json() for r in results])


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suite("bogus", np.random.default_rng(0))
