"""Numerical audits: finite-difference gradient checks, the heat-equation
identity of the identity-expert Gaussian prompt, and a Gram-matrix rank probe
for linear independence of the component function system.

The rank probe is a heuristic. A small smallest-eigenvalue says the functions
are nearly linearly dependent on the sampled cloud; it proves nothing, and it
ignores any sign constraints on the combination coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .densities import (
    BaseFamily,
    ComponentParams,
    base_logpdf,
    base_mean,
    gaussian_logpdf,
    prompt_logpdf,
    prompt_mean,
    prompt_score,
    student_t_logpdf,
)
from .errors import DiagnosticError
from .experts import IDENTITY, KINDS, ExpertFn, deriv1, deriv2, eval_expert
from .losses import ParamPoint, d1, d2, d2_bar, d4, d4_bar

FD_STEP = 1e-5
FD_TOL = 1e-5
HEAT_FD_STEP = 1e-4
HEAT_FD_TOL = 1e-4
HEAT_TOL = 1e-12


# --- heat equation --------------------------------------------------------------

def heat_terms(x, y, G: ComponentParams, sigma: ExpertFn = IDENTITY):
    """``(d2f/db2, df/dnu)`` of the prompt density, from closed forms."""
    z = float(np.asarray(x) @ G.a + G.b)
    f = math.exp(prompt_logpdf(x, y, G, sigma))
    r = y - eval_expert(sigma, z)
    s1, s2, nu = deriv1(sigma, z), deriv2(sigma, z), G.nu
    d2f_db2 = f * ((r * s1 / nu) ** 2 - s1 * s1 / nu + r * s2 / nu)
    df_dnu = f * (r * r / (2 * nu * nu) - 1 / (2 * nu))
    return d2f_db2, df_dnu


def heat_residual(x, y, G: ComponentParams, sigma: ExpertFn = IDENTITY) -> float:
    """``d2f/db2 - 2 df/dnu``; identically zero for the identity expert."""
    d2f, dfn = heat_terms(x, y, G, sigma)
    return d2f - 2.0 * dfn


def heat_residual_fd(x, y, G: ComponentParams, sigma: ExpertFn = IDENTITY, h: float = HEAT_FD_STEP) -> float:
    """Same residual by nested central differences on the density itself."""
    def f(b, nu):
        return math.exp(prompt_logpdf(x, y, G.replace(b=b, nu=nu), sigma))

    b, nu = G.b, G.nu
    d2f = (f(b + h, nu) - 2 * f(b, nu) + f(b - h, nu)) / (h * h)
    dfn = (f(b, nu + h) - f(b, nu - h)) / (2 * h)
    return d2f - 2.0 * dfn


# --- finite differences ---------------------------------------------------------

def central_diff(fun, theta, h):
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h[j] if np.ndim(h) else h
        grad[j] = (fun(theta + e) - fun(theta - e)) / (2 * e[j])
    return grad


def _rel_err(analytic, numeric):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(analytic - numeric) / (1.0 + np.abs(analytic))))


def _random_component(d, rng, nu_range=(0.1, 2.0)):
    return ComponentParams(rng.uniform(-1.5, 1.5, d), rng.uniform(-1, 1), rng.uniform(*nu_range))


def _expert_zoo():
    return [ExpertFn(k) if k != "affine" else ExpertFn("affine", 2.0, -0.5) for k in KINDS]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    samples: int = 0
    detail: str = ""

    def to_json(self):
        return {k: getattr(self, k) for k in ("name", "passed", "value", "tolerance", "samples", "detail")}


def audit_expert_derivatives(sample_count, rng) -> list:
    out = []
    h = FD_STEP
    for f in _expert_zoo():
        z = rng.uniform(-10, 10, sample_count)
        if f.kind == "relu":
            z = z[np.abs(z) > 2 * h]
        d1_ = deriv1(f, z)
        fd1 = (eval_expert(f, z + h) - eval_expert(f, z - h)) / (2 * h)
        d2_ = deriv2(f, z)
        fd2 = (deriv1(f, z + h) - deriv1(f, z - h)) / (2 * h)
        e1 = float(np.max(np.abs(d1_ - fd1) / (1 + np.abs(d1_)))) if z.size else 0.0
        e2 = float(np.max(np.abs(d2_ - fd2) / (1 + np.abs(d2_)))) if z.size else 0.0
        out.append(CheckResult(f"deriv1[{f.kind}]", e1 <= FD_TOL, e1, FD_TOL, int(z.size)))
        out.append(CheckResult(f"deriv2[{f.kind}]", e2 <= FD_TOL, e2, FD_TOL, int(z.size)))
    return out


def audit_prompt_score(sample_count, rng, d=3) -> list:
    out = []
    for f in _expert_zoo():
        worst, used = 0.0, 0
        for _ in range(sample_count):
            G = _random_component(d, rng)
            x = rng.uniform(-1, 1, d)
            z = float(x @ G.a + G.b)
            if f.kind == "relu" and abs(z) < 1e-3:
                continue
            y = eval_expert(f, z) + math.sqrt(G.nu) * rng.standard_normal()
            ga, gb, gn = prompt_score(x, y, G, f)
            analytic = np.concatenate([ga, [gb, gn]])
            theta = G.vector()
            step = 1e-6 * np.maximum(1.0, np.abs(theta))
            numeric = central_diff(lambda t: prompt_logpdf(x, y, ComponentParams.from_vector(t), f), theta, step)
            worst = max(worst, _rel_err(analytic, numeric))
            used += 1
        out.append(CheckResult(f"prompt_score[{f.kind}]", worst <= FD_TOL, worst, FD_TOL, used))
    return out


def audit_heat(sample_count, rng, d=3) -> list:
    worst_exact, worst_fd = 0.0, 0.0
    for _ in range(sample_count):
        G = _random_component(d, rng, nu_range=(0.2, 2.0))
        x = rng.uniform(-1, 1, d)
        y = float(x @ G.a + G.b) + math.sqrt(G.nu) * rng.standard_normal()
        d2f, dfn = heat_terms(x, y, G)
        scale = abs(d2f) + abs(2 * dfn) + 1e-300
        worst_exact = max(worst_exact, abs(d2f - 2 * dfn) / scale)
        f = math.exp(prompt_logpdf(x, y, G, IDENTITY))
        worst_fd = max(worst_fd, abs(heat_residual_fd(x, y, G)) / (1 + f))
    return [
        CheckResult("heat_identity_analytic", worst_exact < HEAT_TOL, worst_exact, HEAT_TOL, sample_count),
        CheckResult("heat_identity_fd", worst_fd <= HEAT_FD_TOL, worst_fd, HEAT_FD_TOL, sample_count),
    ]


def grad_audit(sample_count: int, rng: np.random.Generator) -> dict:
    """Max errors of every finite-difference check, keyed by check name."""
    if sample_count <= 0:
        return {}
    checks = audit_expert_derivatives(sample_count, rng) + audit_prompt_score(sample_count, rng)
    return {c.name: c for c in checks}


# --- rank probe -------------------------------------------------------------------

@dataclass
class RankProbe:
    labels: list
    values: np.ndarray  # (m, k): each column is one function on the point cloud
    gram: np.ndarray = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        norms = np.linalg.norm(v, axis=0)
        if np.any(norms == 0):
            raise DiagnosticError("a function vanishes on every sample point")
        self.values = v / norms
        g = self.values.T @ self.values
        self.gram = 0.5 * (g + g.T)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.gram)

    def score(self) -> float:
        return float(self.eigenvalues()[0])


def build_rank_probe(functions: dict, xs: np.ndarray, ys: np.ndarray) -> RankProbe:
    if xs.shape[0] < 2 or (np.ptp(xs, axis=0).max() == 0 and np.ptp(ys) == 0):
        raise DiagnosticError("degenerate sample: all points identical")
    cols = [np.asarray(fn(xs, ys), dtype=float) for fn in functions.values()]
    return RankProbe(list(functions), np.column_stack(cols))


def prompt_function_system(base: BaseFamily, G0: ComponentParams, sigma: ExpertFn,
                           G1: ComponentParams, G2: ComponentParams) -> dict:
    """``{f0, f(G1), f(G2), df/dmean at G1, d2f/dmean2 at G1}`` as callables."""
    def f0(x, y):
        return np.exp(base_logpdf(x, y, base, G0))

    def fk(G):
        return lambda x, y: np.exp(prompt_logpdf(x, y, G, sigma))

    def df(x, y):
        r = y - prompt_mean(x, G1, sigma)
        return np.exp(prompt_logpdf(x, y, G1, sigma)) * r / G1.nu

    def d2f(x, y):
        r = y - prompt_mean(x, G1, sigma)
        return np.exp(prompt_logpdf(x, y, G1, sigma)) * (r * r / G1.nu**2 - 1 / G1.nu)

    return {"f0": f0, "f_G1": fk(G1), "f_G2": fk(G2), "df_dmean_G1": df, "d2f_dmean2_G1": d2f}


def sample_probe_points(base, G0, sigma, G1, G2, m, rng):
    """Uniform covariates; responses on a grid spanning +-6 combined std devs."""
    d = G0.d
    xs = rng.uniform(-1, 1, (m, d))
    means = np.concatenate([
        base_mean(xs, base, G0), prompt_mean(xs, G1, sigma), prompt_mean(xs, G2, sigma)
    ])
    base_var = G0.nu / (G0.nu - 2) if base.kind == "student_t" and G0.nu > 2 else G0.nu
    sd = math.sqrt(max(base_var, G1.nu, G2.nu))
    ys = rng.permutation(np.linspace(means.min() - 6 * sd, means.max() + 6 * sd, m))
    return xs, ys


def distinguishability_score(base: BaseFamily, G0: ComponentParams, sigma: ExpertFn, pair,
                             m: int, rng: np.random.Generator) -> float:
    """Smallest eigenvalue of the normalized Gram matrix of the function system."""
    G1, G2 = pair
    if G1 == G2:
        raise DiagnosticError("the two prompt components must differ")
    if m < 100:
        raise DiagnosticError("need at least 100 sample points")
    xs, ys = sample_probe_points(base, G0, sigma, G1, G2, m, rng)
    probe = build_rank_probe(prompt_function_system(base, G0, sigma, G1, G2), xs, ys)
    return probe.score()


# --- check suites (CLI) -----------------------------------------------------------

SUITES = ("gradients", "heat", "distinguishability", "losses")


def check_gradients(rng, samples=1000) -> list:
    return audit_expert_derivatives(samples, rng) + audit_prompt_score(min(samples, 300), rng)


def check_heat(rng, samples=1000) -> list:
    return audit_heat(samples, rng)


def check_distinguishability(rng, m=4000) -> list:
    from .ratelab.scenarios import make_scenario

    t2 = make_scenario("T2", "fixed_lambda", d=2)
    G1 = ComponentParams(np.ones(2), 1.0, 0.5)
    G2 = ComponentParams(np.array([0.5, -1.0]), -0.5, 0.8)
    s_t2 = distinguishability_score(t2.base, t2.G0, t2.sigma, (G1, G2), m, rng)
    t4 = make_scenario("T4", "drift_i", d=2, nu0=1.0)
    near = ComponentParams(t4.G0.a + 1e-4, t4.G0.b + 1e-4, t4.G0.nu + 1e-4)
    s_merge = distinguishability_score(t4.base, t4.G0, t4.sigma, (near, G2), m, rng)
    return [
        CheckResult("student_t_base_distinguishable", s_t2 > 1e-3, s_t2, 1e-3, m, "score must exceed"),
        CheckResult("gaussian_merging_degenerate", s_merge < 1e-6, s_merge, 1e-6, m, "score must stay below"),
    ]


def _random_point(d, rng):
    return ParamPoint(rng.uniform(0, 1), ComponentParams(
        rng.uniform(-10, 10, d), rng.uniform(-10, 10), rng.uniform(1e-4, 10)))


def check_losses(rng, samples=10_000) -> list:
    asym = neg = 0.0
    lo2, hi2, lo4, hi4 = math.inf, 0.0, math.inf, 0.0
    zero_ok = True
    for _ in range(samples):
        d = int(rng.integers(1, 9))
        p, q, g0 = _random_point(d, rng), _random_point(d, rng), _random_point(d, rng).G
        vals_pq = [d1(p, q), d2(p, q, g0), d2_bar(p, q, g0), d4(p, q, g0), d4_bar(p, q, g0)]
        vals_qp = [d1(q, p), d2(q, p, g0), d2_bar(q, p, g0), d4(q, p, g0), d4_bar(q, p, g0)]
        for a, b in zip(vals_pq, vals_qp):
            asym = max(asym, abs(a - b) / max(abs(a), abs(b), 1e-300))
        neg = min(neg, min(vals_pq))
        if vals_pq[1] > 0 and vals_pq[2] > 0:
            r = vals_pq[1] / vals_pq[2]
            lo2, hi2 = min(lo2, r), max(hi2, r)
        if vals_pq[3] > 0 and vals_pq[4] > 0:
            r = vals_pq[3] / vals_pq[4]
            lo4, hi4 = min(lo4, r), max(hi4, r)
        zero_ok &= d1(p, p) == 0.0
    return [
        CheckResult("loss_symmetry", asym <= 1e-12, asym, 1e-12, samples),
        CheckResult("loss_nonnegative", neg >= 0.0, neg, 0.0, samples),
        CheckResult("d1_zero_at_identity", bool(zero_ok), 0.0, 0.0, samples),
        CheckResult("d2_equivalence_band", 1 / 3 <= lo2 and hi2 <= 3, hi2, 3.0, samples,
                    f"ratio range [{lo2:.3f}, {hi2:.3f}]"),
        CheckResult("d4_equivalence_band", 1 / 8 <= lo4 and hi4 <= 8, hi4, 8.0, samples,
                    f"ratio range [{lo4:.3f}, {hi4:.3f}]"),
    ]


def run_suite(name: str, rng: np.random.Generator) -> list:
    if name == "all":
        return [c for s in SUITES for c in run_suite(s, rng)]
    runners = {
        "gradients": check_gradients,
        "heat": check_heat,
        "distinguishability": check_distinguishability,
        "losses": check_losses,
    }
    if name not in runners:
        raise KeyError(name)
    return runners[name](rng)


__all__ = [
    "CheckResult", "RankProbe", "build_rank_probe", "central_diff", "distinguishability_score",
    "grad_audit", "heat_residual", "heat_residual_fd", "heat_terms", "run_suite",
    "gaussian_logpdf", "student_t_logpdf",
]
