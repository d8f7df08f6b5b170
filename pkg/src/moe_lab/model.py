"""The contaminated mixture: a frozen base component plus a trainable prompt.

    p(y | x) = (1 - lam) * f0(y | phi(a0'x + b0), nu0) + lam * f(y | sigma(a'x + b), nu)

Covariates are uniform on [-1, 1]^d, so their density cancels everywhere it
would appear (responsibilities, likelihood ratios) and is never evaluated.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .densities import (
    BaseFamily,
    ComponentParams,
    base_logpdf,
    prompt_logpdf,
    sample_base,
    sample_prompt,
)
from .errors import ParameterError, ShapeError
from .experts import IDENTITY, ExpertFn


@dataclass(frozen=True)
class ContaminatedModel:
    lam: float
    base: BaseFamily
    G0: ComponentParams
    sigma: ExpertFn
    G: ComponentParams

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"mixing proportion must lie in [0, 1], got {self.lam}")
        if self.G.d != self.G0.d:
            raise ShapeError(f"prompt dimension {self.G.d} != base dimension {self.G0.d}")

    @property
    def d(self) -> int:
        return self.G0.d

    def with_prompt(self, lam=None, G=None) -> "ContaminatedModel":
        return replace(self, lam=self.lam if lam is None else lam, G=self.G if G is None else G)

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "base": {
                "kind": self.base.kind,
                "expert": self.base.expert.to_json(),
                "a0": self.G0.a.tolist(),
                "b0": self.G0.b,
                "nu0": self.G0.nu,
            },
            "prompt": {
                "expert": self.sigma.to_json(),
                "a": self.G.a.tolist(),
                "b": self.G.b,
                "nu": self.G.nu,
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ContaminatedModel":
        try:
            b, p = doc["base"], doc["prompt"]
            return cls(
                lam=doc["lambda"],
                base=BaseFamily(b["kind"], ExpertFn.from_json(b.get("expert", "identity"))),
                G0=ComponentParams(b["a0"], b["b0"], b["nu0"]),
                sigma=ExpertFn.from_json(p.get("expert", "identity")),
                G=ComponentParams(p["a"], p["b"], p["nu"]),
            )
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"malformed model document: {exc}") from exc


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.shape[0] != y.shape[0]:
            raise ShapeError(f"{x.shape[0]} covariate rows but {y.shape[0]} responses")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def take(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])


def component_logpdfs(m: ContaminatedModel, x, y):
    """``(log f0, log f)`` at the given points."""
    return base_logpdf(x, y, m.base, m.G0), prompt_logpdf(x, y, m.G, m.sigma)


def mixture_logpdf(m: ContaminatedModel, x, y):
    if m.lam == 0.0:
        return base_logpdf(x, y, m.base, m.G0)
    if m.lam == 1.0:
        return prompt_logpdf(x, y, m.G, m.sigma)
    lb, lp = component_logpdfs(m, x, y)
    out = np.logaddexp(math.log1p(-m.lam) + lb, math.log(m.lam) + lp)
    return float(out) if np.ndim(out) == 0 else out


def log_likelihood(m: ContaminatedModel, data: Dataset) -> float:
    if data.n == 0:
        warnings.warn("log-likelihood of an empty dataset is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.sum(mixture_logpdf(m, data.x, data.y)))


def sample_covariates(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, d))


def sample_dataset(m: ContaminatedModel, n: int, rng: np.random.Generator, d=None,
                   return_labels=False):
    """Draw ``n`` i.i.d. pairs. With ``return_labels`` also return the latent
    prompt indicators (normally discarded)."""
    if n < 1:
        raise ParameterError("n must be at least 1")
    if d is not None and d != m.d:
        raise ShapeError(f"requested d={d} but the model has d={m.d}")
    x = sample_covariates(n, m.d, rng)
    from_prompt = rng.random(n) < m.lam
    y = np.where(
        from_prompt,
        sample_prompt(x, m.G, m.sigma, rng),
        sample_base(x, m.base, m.G0, rng),
    )
    data = Dataset(x, y)
    return (data, from_prompt) if return_labels else data


def log_responsibility(m: ContaminatedModel, x, y):
    """Log posterior probability that the prompt generated each point.

    Returns the log-responsibilities and a boolean mask of points where both
    component densities underflowed; those fall back to the prior ``lam``.
    """
    lb, lp = component_logpdfs(m, x, y)
    lb, lp = np.asarray(lb, dtype=float), np.asarray(lp, dtype=float)
    under = np.isneginf(lb) & np.isneginf(lp)
    if m.lam == 0.0:
        return np.full(lb.shape, -np.inf), under
    if m.lam == 1.0:
        return np.zeros(lb.shape), under
    wp = math.log(m.lam) + lp
    wb = math.log1p(-m.lam) + lb
    with np.errstate(invalid="ignore"):
        logr = wp - np.logaddexp(wb, wp)
    logr = np.where(under, math.log(m.lam), logr)
    return logr, under


def responsibility(m: ContaminatedModel, x, y):
    logr, _ = log_responsibility(m, x, y)
    r = np.exp(logr)
    return float(r) if np.ndim(r) == 0 else r


class HellingerEstimate(NamedTuple):
    h: float
    se: float


def hellinger_mc(p: ContaminatedModel, q: ContaminatedModel, mc_n: int,
                 rng: np.random.Generator, estimator: str = "affinity") -> HellingerEstimate:
    """Monte-Carlo Hellinger distance with draws from ``p``.

    ``"affinity"`` estimates ``1 - E_p sqrt(q/p)`` and reports the standard
    error of that inner mean. ``"squared"`` estimates the same quantity as
    ``0.5 * E_p (1 - sqrt(q/p))^2``; it is unbiased for the same target but its
    relative error does not blow up as ``q -> p``.
    """
    if mc_n < 1000:
        raise ParameterError("mc_n must be at least 1000")
    if p.d != q.d:
        raise ShapeError("models have different covariate dimensions")
    data = sample_dataset(p, mc_n, rng)
    half_log_ratio = 0.5 * (mixture_logpdf(q, data.x, data.y) - mixture_logpdf(p, data.x, data.y))
    root = np.exp(half_log_ratio)
    if estimator == "affinity":
        inner = float(np.mean(root))
        se = float(np.std(root, ddof=1) / math.sqrt(mc_n))
        h2 = 1.0 - inner
    elif estimator == "squared":
        terms = 0.5 * (1.0 - root) ** 2
        h2 = float(np.mean(terms))
        se = float(np.std(terms, ddof=1) / math.sqrt(mc_n))
    else:
        raise ParameterError(f"unknown Hellinger estimator {estimator!r}")
    return HellingerEstimate(math.sqrt(min(1.0, max(0.0, h2))), se)


# --- file formats -----------------------------------------------------------

def write_dataset_csv(data: Dataset, path) -> None:
    header = [f"x{j + 1}" for j in range(data.d)] + ["y"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row, yi in zip(data.x, data.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(yi))])


def read_dataset_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ShapeError(f"{path}: empty file")
    header = rows[0]
    if not header or header[-1] != "y" or any(h != f"x{j + 1}" for j, h in enumerate(header[:-1])):
        raise ShapeError(f"{path}: expected header x1,...,xd,y")
    try:
        arr = np.array(rows[1:], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise ShapeError(f"{path}: {exc}") from exc
    return Dataset(arr[:, :-1], arr[:, -1])


def write_model_json(m: ContaminatedModel, path, **extra) -> None:
    doc = m.to_json()
    doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_model_json(path) -> ContaminatedModel:
    return ContaminatedModel.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


MODEL_SCHEMA = {
    "type": "object",
    "required": ["lambda", "base", "prompt"],
    "properties": {
        "lambda": {"type": "number", "minimum": 0, "maximum": 1},
        "base": {
            "type": "object",
            "required": ["kind", "expert", "a0", "b0", "nu0"],
            "properties": {
                "kind": {"enum": ["gaussian", "student_t"]},
                "a0": {"type": "array", "items": {"type": "number"}},
                "b0": {"type": "number"},
                "nu0": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "prompt": {
            "type": "object",
            "required": ["expert", "a", "b", "nu"],
            "properties": {
                "a": {"type": "array", "items": {"type": "number"}},
                "b": {"type": "number"},
                "nu": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

__all__ = [
    "ContaminatedModel", "Dataset", "HellingerEstimate", "IDENTITY", "MODEL_SCHEMA",
    "component_logpdfs", "hellinger_mc", "log_likelihood", "log_responsibility",
    "mixture_logpdf", "read_dataset_csv", "read_model_json", "responsibility",
    "sample_covariates", "sample_dataset", "write_dataset_csv", "write_model_json",
]
