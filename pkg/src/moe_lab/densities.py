"""Conditional densities for the prompt (Gaussian) and the frozen base component.

Everything is computed in log space. ``x`` may be a single covariate vector of
length ``d`` or an ``(n, d)`` matrix, in which case ``y`` is a length-``n``
vector and results are vectorized over rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .experts import IDENTITY, ExpertFn, deriv1, eval_expert

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ComponentParams:
    """One expert component ``(a, b, nu)``.

    ``nu`` is the variance for a Gaussian component and the degrees of freedom
    for a Student-t base.
    """

    a: np.ndarray
    b: float
    nu: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float)).copy()
        if a.ndim != 1:
            raise ShapeError("slope vector a must be one-dimensional")
        a.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "nu", float(self.nu))
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")

    @property
    def d(self) -> int:
        return self.a.shape[0]

    def vector(self) -> np.ndarray:
        """Concatenated ``(a, b, nu)``."""
        return np.concatenate([self.a, [self.b, self.nu]])

    @classmethod
    def from_vector(cls, v) -> "ComponentParams":
        v = np.asarray(v, dtype=float)
        return cls(v[:-2], v[-2], v[-1])

    def replace(self, a=None, b=None, nu=None) -> "ComponentParams":
        return ComponentParams(
            self.a if a is None else a,
            self.b if b is None else b,
            self.nu if nu is None else nu,
        )

    def __eq__(self, other):
        if not isinstance(other, ComponentParams):
            return NotImplemented
        return (
            np.array_equal(self.a, other.a) and self.b == other.b and self.nu == other.nu
        )

    def __hash__(self):
        return hash((self.a.tobytes(), self.b, self.nu))

    def to_json(self, prefix=""):
        return {f"a{prefix}": self.a.tolist(), f"b{prefix}": self.b, f"nu{prefix}": self.nu}


@dataclass(frozen=True)
class BaseFamily:
    kind: str = "gaussian"  # or "student_t"
    expert: ExpertFn = field(default=IDENTITY)

    def __post_init__(self):
        if self.kind not in ("gaussian", "student_t"):
            raise ValueError(f"unknown base family {self.kind!r}")


GAUSSIAN_IDENTITY = BaseFamily("gaussian", IDENTITY)
STUDENT_T_IDENTITY = BaseFamily("student_t", IDENTITY)


def _check_nu(nu):
    if not np.all(np.asarray(nu) > 0):
        raise DomainError(f"nu must be positive, got {nu}")


def _scalar_or_array(v):
    return float(v) if np.ndim(v) == 0 else v


def gaussian_logpdf(y, mean, nu):
    _check_nu(nu)
    y = np.asarray(y, dtype=float)
    r = y - mean
    return _scalar_or_array(-0.5 * (LOG_2PI + np.log(nu)) - r * r / (2.0 * nu))


def student_t_logpdf(y, mean, df):
    """Unit-scale Student-t log-density centred at ``mean``."""
    _check_nu(df)
    y = np.asarray(y, dtype=float)
    r = y - mean
    const = (
        math.lgamma((df + 1.0) / 2.0)
        - math.lgamma(df / 2.0)
        - 0.5 * math.log(df * math.pi)
    )
    return _scalar_or_array(const - 0.5 * (df + 1.0) * np.log1p(r * r / df))


def linear_index(x, G: ComponentParams):
    """``a^T x + b`` for a single row or each row of a matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != G.d:
        raise ShapeError(f"covariate dimension {x.shape[-1]} != parameter dimension {G.d}")
    return _scalar_or_array(x @ G.a + G.b)


def prompt_mean(x, G: ComponentParams, sigma: ExpertFn):
    return eval_expert(sigma, linear_index(x, G))


def prompt_logpdf(x, y, G: ComponentParams, sigma: ExpertFn):
    return gaussian_logpdf(y, prompt_mean(x, G, sigma), G.nu)


def prompt_score(x, y, G: ComponentParams, sigma: ExpertFn):
    """Gradient of the prompt log-density w.r.t. ``(a, b, nu)``.

    Returns ``(grad_a, grad_b, grad_nu)``; for matrix input ``grad_a`` has shape
    ``(n, d)`` and the others shape ``(n,)``.
    """
    _check_nu(G.nu)
    x = np.asarray(x, dtype=float)
    z = linear_index(x, G)
    r = np.asarray(y, dtype=float) - eval_expert(sigma, z)
    gb = deriv1(sigma, z) * r / G.nu
    ga = np.asarray(gb)[..., None] * x if x.ndim == 2 else gb * x
    gnu = (r * r - G.nu) / (2.0 * G.nu**2)
    return ga, _scalar_or_array(gb), _scalar_or_array(gnu)


def base_mean(x, base: BaseFamily, G0: ComponentParams):
    return eval_expert(base.expert, linear_index(x, G0))


def base_logpdf(x, y, base: BaseFamily, G0: ComponentParams):
    m = base_mean(x, base, G0)
    if base.kind == "gaussian":
        return gaussian_logpdf(y, m, G0.nu)
    return student_t_logpdf(y, m, G0.nu)


def sample_prompt(x, G: ComponentParams, sigma: ExpertFn, rng: np.random.Generator):
    m = np.asarray(prompt_mean(x, G, sigma))
    draw = m + math.sqrt(G.nu) * rng.standard_normal(m.shape)
    return _scalar_or_array(draw)


def sample_student_t(df: float, size, rng: np.random.Generator):
    """Standard t draws as a normal over sqrt(chi-square / df)."""
    z = rng.standard_normal(size)
    chi2 = rng.chisquare(df, size)
    return z / np.sqrt(chi2 / df)


def sample_base(x, base: BaseFamily, G0: ComponentParams, rng: np.random.Generator):
    m = np.asarray(base_mean(x, base, G0))
    if base.kind == "gaussian":
        draw = m + math.sqrt(G0.nu) * rng.standard_normal(m.shape)
    else:
        draw = m + sample_student_t(G0.nu, m.shape, rng)
    return _scalar_or_array(draw)
