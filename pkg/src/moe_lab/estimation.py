"""Maximum-likelihood fitting of the prompt by a generalized EM algorithm.

The mixing proportion has a closed-form update, the prompt slope/intercept get
a few backtracked ascent steps on the expected complete-data log-likelihood,
and the prompt variance is set to its exact weighted-variance maximizer. Every
update is projected into a box so the returned estimate lies in a compact
parameter set.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .densities import ComponentParams, base_logpdf, prompt_logpdf
from .errors import InitializationError, ParameterError
from .experts import deriv1, eval_expert
from .model import ContaminatedModel, Dataset, log_responsibility

MSTEP_METHODS = ("gauss_newton", "gradient")


@dataclass(frozen=True)
class ThetaBounds:
    a_max: float = 10.0
    b_max: float = 10.0
    nu_min: float = 1e-4
    nu_max: float = 10.0

    def __post_init__(self):
        if not 0 < self.nu_min < self.nu_max:
            raise ParameterError("need 0 < nu_min < nu_max")
        if self.a_max <= 0 or self.b_max <= 0:
            raise ParameterError("a_max and b_max must be positive")

    def contains(self, G: ComponentParams) -> bool:
        return bool(
            np.all(np.abs(G.a) <= self.a_max)
            and abs(G.b) <= self.b_max
            and self.nu_min <= G.nu <= self.nu_max
        )

    def project(self, G: ComponentParams) -> ComponentParams:
        return ComponentParams(
            np.clip(G.a, -self.a_max, self.a_max),
            min(max(G.b, -self.b_max), self.b_max),
            min(max(G.nu, self.nu_min), self.nu_max),
        )


@dataclass(frozen=True)
class InitSpec:
    """``near_truth`` perturbs the supplied truth; ``explicit`` starts at (lam, G)."""

    mode: str = "near_truth"
    noise_scale: float = 0.1
    lam: float | None = None
    G: ComponentParams | None = None

    def __post_init__(self):
        if self.mode not in ("near_truth", "explicit"):
            raise ParameterError(f"unknown init mode {self.mode!r}")
        if self.noise_scale < 0:
            raise ParameterError("noise_scale must be non-negative")
        if self.mode == "explicit" and (self.lam is None or self.G is None):
            raise ParameterError("explicit init needs lam and G")


@dataclass(frozen=True)
class FitOptions:
    max_em_iters: int = 500
    em_tol: float = 1e-8
    mstep_iters: int = 50
    mstep_lr: float = 1.0
    mstep_method: str = "gauss_newton"
    max_halvings: int = 30
    theta_bounds: ThetaBounds = field(default_factory=ThetaBounds)
    lambda_clip: float = 1e-6
    init: InitSpec = field(default_factory=InitSpec)

    def __post_init__(self):
        if self.mstep_iters < 1:
            raise ParameterError("mstep_iters must be at least 1")
        if not 0 < self.lambda_clip < 0.5:
            raise ParameterError("lambda_clip must lie in (0, 0.5)")
        if self.mstep_method not in MSTEP_METHODS:
            raise ParameterError(f"mstep_method must be one of {MSTEP_METHODS}")
        if self.max_em_iters < 1:
            raise ParameterError("max_em_iters must be at least 1")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["init"] = {"mode": self.init.mode, "noise_scale": self.init.noise_scale}
        if self.init.mode == "explicit":
            doc["init"].update(lam=self.init.lam, G=self.init.G.to_json())
        return doc

    @classmethod
    def from_json(cls, doc: dict | None) -> "FitOptions":
        """Build from a ``"fit"`` config section; missing keys keep defaults."""
        doc = dict(doc or {})
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ParameterError(f"unknown fit options: {sorted(unknown)}")
        if "theta_bounds" in doc:
            doc["theta_bounds"] = ThetaBounds(**doc["theta_bounds"])
        if "init" in doc:
            init = dict(doc["init"])
            if "G" in init and init["G"] is not None:
                g = init["G"]
                init["G"] = ComponentParams(g["a"], g["b"], g["nu"])
            doc["init"] = InitSpec(**init)
        return cls(**doc)


@dataclass
class FitDiagnostics:
    underflow_events: int = 0
    projection_events: int = 0
    q_decrease_events: int = 0
    skipped_prompt_updates: int = 0


@dataclass
class MLEResult:
    lambda_hat: float
    G_hat: ComponentParams
    final_loglik: float
    iters: int
    converged: bool
    diagnostics: FitDiagnostics
    loglik_history: list = field(default_factory=list, repr=False)

    def model(self, template: ContaminatedModel) -> ContaminatedModel:
        return template.with_prompt(lam=self.lambda_hat, G=self.G_hat)

    def to_json(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "G_hat": {"a": self.G_hat.a.tolist(), "b": self.G_hat.b, "nu": self.G_hat.nu},
            "final_loglik": self.final_loglik,
            "iters": self.iters,
            "converged": self.converged,
            "diagnostics": asdict(self.diagnostics),
        }


MLE_RESULT_SCHEMA = {
    "type": "object",
    "required": ["lambda_hat", "G_hat", "final_loglik", "iters", "converged", "diagnostics"],
    "properties": {
        "lambda_hat": {"type": "number", "minimum": 0, "maximum": 1},
        "G_hat": {
            "type": "object",
            "required": ["a", "b", "nu"],
            "properties": {
                "a": {"type": "array", "items": {"type": "number"}},
                "b": {"type": "number"},
                "nu": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "final_loglik": {"type": "number"},
        "iters": {"type": "integer", "minimum": 0},
        "converged": {"type": "boolean"},
        "diagnostics": {
            "type": "object",
            "required": ["underflow_events", "projection_events", "q_decrease_events"],
            "properties": {
                "underflow_events": {"type": "integer", "minimum": 0},
                "projection_events": {"type": "integer", "minimum": 0},
                "q_decrease_events": {"type": "integer", "minimum": 0},
            },
        },
    },
}


# --- E and M steps ------------------------------------------------------------

def e_step(m: ContaminatedModel, data: Dataset, diagnostics: FitDiagnostics | None = None):
    """Posterior prompt responsibilities for every row."""
    logr, under = log_responsibility(m, data.x, data.y)
    if diagnostics is not None:
        diagnostics.underflow_events += int(np.count_nonzero(under))
    return np.exp(logr)


def _prompt_fit_state(xt, y, theta, sigma):
    z = xt @ theta
    res = y - eval_expert(sigma, z)
    return z, res


def _weighted_sse(xt, y, r, theta, sigma):
    _, res = _prompt_fit_state(xt, y, theta, sigma)
    return float(np.dot(r, res * res))


def _project_ab(theta, bounds: ThetaBounds):
    out = theta.copy()
    out[:-1] = np.clip(out[:-1], -bounds.a_max, bounds.a_max)
    out[-1] = min(max(out[-1], -bounds.b_max), bounds.b_max)
    return out, not np.array_equal(out, theta)


def _ascend_mean_params(xt, y, r, theta, sigma, opts: FitOptions, diag: FitDiagnostics):
    """Backtracked ascent on the weighted Gaussian Q for (a, b) at fixed nu.

    With nu fixed, maximizing Q is minimizing the responsibility-weighted
    squared residual, so that is what the line search monitors.
    """
    rsum = float(r.sum())
    sse = _weighted_sse(xt, y, r, theta, sigma)
    for _ in range(opts.mstep_iters):
        z, res = _prompt_fit_state(xt, y, theta, sigma)
        jac = deriv1(sigma, z)[:, None] * xt
        grad = jac.T @ (r * res)
        if opts.mstep_method == "gauss_newton":
            hess = jac.T @ (jac * r[:, None])
            ridge = 1e-10 * (np.trace(hess) / hess.shape[0] + 1e-300)
            try:
                step = np.linalg.solve(hess + ridge * np.eye(hess.shape[0]), grad)
            except np.linalg.LinAlgError:
                step = grad / rsum
        else:
            # gradient of Q / sum(r), rescaled by nu
            step = grad / rsum
        lr = opts.mstep_lr
        accepted = False
        for _ in range(opts.max_halvings + 1):
            cand, projected = _project_ab(theta + lr * step, opts.theta_bounds)
            cand_sse = _weighted_sse(xt, y, r, cand, sigma)
            if cand_sse <= sse:
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            diag.q_decrease_events += 1
            break
        if projected:
            diag.projection_events += 1
        gain = sse - cand_sse
        theta, sse = cand, cand_sse
        if gain <= 1e-14 * max(sse, 1e-300):
            break
    return theta, sse


def m_step(m: ContaminatedModel, data: Dataset, r, opts: FitOptions,
           diagnostics: FitDiagnostics | None = None) -> ContaminatedModel:
    """One generalized M-step given responsibilities ``r``."""
    diag = diagnostics if diagnostics is not None else FitDiagnostics()
    r = np.asarray(r, dtype=float)
    lam = float(np.clip(np.mean(r), opts.lambda_clip, 1.0 - opts.lambda_clip))
    rsum = float(r.sum())
    if not rsum > 0:
        diag.skipped_prompt_updates += 1
        return m.with_prompt(lam=lam)
    xt = np.hstack([data.x, np.ones((data.n, 1))])
    theta = np.concatenate([m.G.a, [m.G.b]])
    theta, sse = _ascend_mean_params(xt, data.y, r, theta, m.sigma, opts, diag)
    bounds = opts.theta_bounds
    nu = sse / rsum
    nu_c = min(max(nu, bounds.nu_min), bounds.nu_max)
    if nu_c != nu:
        diag.projection_events += 1
    return m.with_prompt(lam=lam, G=ComponentParams(theta[:-1], theta[-1], nu_c))


# --- driver -------------------------------------------------------------------

def _logit(p, clip):
    p = min(max(p, clip), 1.0 - clip)
    return math.log(p) - math.log1p(-p)


def _expit(t):
    return 1.0 / (1.0 + math.exp(-t)) if t >= 0 else math.exp(t) / (1.0 + math.exp(t))


def initial_point(truth, opts: FitOptions, rng: np.random.Generator):
    """Starting (lam, G) under ``opts.init``, projected into the box."""
    init = opts.init
    if init.mode == "explicit":
        lam, G = init.lam, init.G
    else:
        if truth is None:
            raise ParameterError("near_truth initialization needs the true parameters")
        lam0, G0 = truth
        s = init.noise_scale
        noise = rng.standard_normal(G0.d + 3)
        # lam on the logit scale and nu on the log scale: the perturbation stays
        # relative, so small truths are not pushed onto the box edge
        lam = _expit(_logit(lam0, opts.lambda_clip) + s * noise[0])
        G = ComponentParams(G0.a + s * noise[1:-2], G0.b + s * noise[-2], G0.nu * math.exp(s * noise[-1]))
    lam = float(np.clip(lam, opts.lambda_clip, 1.0 - opts.lambda_clip))
    return lam, opts.theta_bounds.project(G)


def canonical_order(data: Dataset) -> np.ndarray:
    """Row permutation that depends only on the multiset of rows."""
    keys = np.column_stack([data.x, data.y]).T[::-1]
    return np.lexsort(keys)


class _LogLik:
    """Observed-data log-likelihood with the frozen base term cached."""

    def __init__(self, template: ContaminatedModel, data: Dataset):
        self.data = data
        self.log_base = np.asarray(base_logpdf(data.x, data.y, template.base, template.G0), dtype=float)

    def __call__(self, m: ContaminatedModel) -> float:
        lp = np.asarray(prompt_logpdf(self.data.x, self.data.y, m.G, m.sigma), dtype=float)
        if m.lam == 1.0:
            return float(np.sum(lp))
        if m.lam == 0.0:
            return float(np.sum(self.log_base))
        return float(np.sum(np.logaddexp(math.log1p(-m.lam) + self.log_base, math.log(m.lam) + lp)))


def fit_em(base, sigma, data: Dataset, truth_for_init=None, opts: FitOptions | None = None,
           rng: np.random.Generator | None = None, G0: ComponentParams | None = None) -> MLEResult:
    """Fit ``(lam, G)`` by generalized EM and return the best iterate seen.

    ``base`` is either a :class:`ContaminatedModel` (its frozen part is used) or a
    :class:`BaseFamily`, in which case ``G0`` must be given. ``truth_for_init`` is
    a ``(lam, G)`` pair used by near-truth initialization.
    """
    opts = opts or FitOptions()
    rng = rng if rng is not None else np.random.default_rng(0)
    if isinstance(base, ContaminatedModel):
        template = base
        base_family, G0 = base.base, base.G0
    else:
        if G0 is None:
            raise ParameterError("G0 is required when base is a BaseFamily")
        base_family = base
    if data.n == 0:
        raise ParameterError("cannot fit an empty dataset")
    # row order must not influence floating-point reductions
    data = data.take(canonical_order(data))

    lam, G = initial_point(truth_for_init, opts, rng)
    model = ContaminatedModel(lam, base_family, G0, sigma, G)
    loglik = _LogLik(model, data)
    diag = FitDiagnostics()

    ll = loglik(model)
    if not math.isfinite(ll):
        raise InitializationError(f"non-finite log-likelihood {ll} at the initial point")
    history = [ll]
    best, best_ll = model, ll
    converged = False
    it = 0
    for it in range(1, opts.max_em_iters + 1):
        r = e_step(model, data, diag)
        model = m_step(model, data, r, opts, diag)
        ll_new = loglik(model)
        history.append(ll_new)
        if ll_new > best_ll:
            best, best_ll = model, ll_new
        if abs(ll_new - ll) / data.n < opts.em_tol:
            converged = True
            ll = ll_new
            break
        ll = ll_new

    return MLEResult(
        lambda_hat=best.lam,
        G_hat=best.G,
        final_loglik=best_ll,
        iters=it,
        converged=converged,
        diagnostics=diag,
        loglik_history=history,
    )
