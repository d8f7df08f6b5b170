"""Parameter losses between two (mixing proportion, prompt) points.

``d1`` is the plain loss for distinguishable settings. ``d2``/``d4`` and their
barred equivalents measure distances relative to the frozen component ``G0``
and govern the merging regimes; ``d4`` uses the mixed norm that weighs the
intercept with a squared exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .densities import ComponentParams
from .errors import ParameterError, ShapeError

SCENARIO_IDS = ("T2", "T4", "T6", "T7", "T8", "T9")
RAW_METRICS = ("err_lambda", "err_a", "err_b", "err_nu")


@dataclass(frozen=True)
class ParamPoint:
    lam: float
    G: ComponentParams

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")


@dataclass(frozen=True)
class DeltaG:
    """Differences ``G - G0`` coordinate block by block."""

    da: np.ndarray
    db: float
    dnu: float

    @classmethod
    def between(cls, G: ComponentParams, G0: ComponentParams) -> "DeltaG":
        if G.d != G0.d:
            raise ShapeError(f"dimension mismatch: {G.d} vs {G0.d}")
        return cls(G.a - G0.a, G.b - G0.b, G.nu - G0.nu)

    def __sub__(self, other: "DeltaG") -> "DeltaG":
        return DeltaG(self.da - other.da, self.db - other.db, self.dnu - other.dnu)

    def norm(self) -> float:
        return math.sqrt(float(self.da @ self.da) + self.db**2 + self.dnu**2)

    def mixed(self) -> float:
        """``||da|| + |db|^2 + |dnu|``."""
        return float(np.linalg.norm(self.da)) + self.db**2 + abs(self.dnu)

    def mixed_sq(self) -> float:
        """``||da||^2 + |db|^4 + |dnu|^2``."""
        return float(self.da @ self.da) + self.db**4 + self.dnu**2

    def theta(self, alpha, beta, gamma) -> float:
        """``||da||^alpha + |db|^beta + |dnu|^gamma``."""
        return float(np.linalg.norm(self.da)) ** alpha + abs(self.db) ** beta + abs(self.dnu) ** gamma


def _check(p: ParamPoint, q: ParamPoint):
    if p.G.d != q.G.d:
        raise ShapeError(f"dimension mismatch: {p.G.d} vs {q.G.d}")


def d1(p: ParamPoint, q: ParamPoint) -> float:
    _check(p, q)
    dist = float(np.linalg.norm(p.G.vector() - q.G.vector()))
    return abs(p.lam - q.lam) + (p.lam + q.lam) * dist


def _deltas(p, q, G0):
    _check(p, q)
    return DeltaG.between(p.G, G0), DeltaG.between(q.G, G0)


def d2(p: ParamPoint, q: ParamPoint, G0: ComponentParams) -> float:
    dp, dq = _deltas(p, q, G0)
    np_, nq = dp.norm(), dq.norm()
    lo = min(p.lam, q.lam)
    # (lam - min) s + (lam* - min) s*: same value, no cancellation
    head = (p.lam - lo) * np_**2 + (q.lam - lo) * nq**2
    return head + (p.lam * np_ + q.lam * nq) * (dp - dq).norm()


def d2_bar(p: ParamPoint, q: ParamPoint, G0: ComponentParams) -> float:
    dp, dq = _deltas(p, q, G0)
    np_, nq = dp.norm(), dq.norm()
    return abs(p.lam - q.lam) * np_ * nq + (dp - dq).norm() * (p.lam * np_ + q.lam * nq)


def d4(p: ParamPoint, q: ParamPoint, G0: ComponentParams) -> float:
    dp, dq = _deltas(p, q, G0)
    sp, sq = dp.mixed_sq(), dq.mixed_sq()
    lo = min(p.lam, q.lam)
    head = (p.lam - lo) * sp + (q.lam - lo) * sq
    return head + (p.lam * dp.mixed() + q.lam * dq.mixed()) * (dp - dq).mixed()


def d4_bar(p: ParamPoint, q: ParamPoint, G0: ComponentParams) -> float:
    dp, dq = _deltas(p, q, G0)
    rp, rq = dp.mixed(), dq.mixed()
    return abs(p.lam - q.lam) * rp * rq + (p.lam * rp + q.lam * rq) * (dp - dq).mixed()


@dataclass(frozen=True)
class Membership:
    member: bool
    degenerate: bool = False
    threshold: float = math.inf

    def __bool__(self):
        return self.member


def _xi_member(p: ParamPoint, G0, l_n, n, b_power) -> Membership:
    if l_n <= 0 or n < 1:
        raise ParameterError("need l_n > 0 and n >= 1")
    dp = DeltaG.between(p.G, G0)
    terms = np.concatenate([dp.da**2, [abs(dp.db) ** b_power, dp.dnu**2]])
    smallest = float(terms.min())
    if smallest == 0.0:
        return Membership(False, degenerate=True)
    threshold = l_n / (smallest * math.sqrt(n))
    return Membership(p.lam >= threshold, threshold=threshold)


def xi1_member(p: ParamPoint, G0: ComponentParams, l_n: float, n: int) -> Membership:
    """Sample-size dependent truth set for identity experts with a Gaussian base."""
    return _xi_member(p, G0, l_n, n, b_power=4)


def xi2_member(p: ParamPoint, G0: ComponentParams, l_n: float, n: int) -> Membership:
    """Truth set for a shared non-linear expert with a Gaussian base."""
    return _xi_member(p, G0, l_n, n, b_power=2)


def raw_errors(truth: ParamPoint, est: ParamPoint) -> dict:
    _check(truth, est)
    return {
        "err_lambda": abs(est.lam - truth.lam),
        "err_a": float(np.linalg.norm(est.G.a - truth.G.a)),
        "err_b": abs(est.G.b - truth.G.b),
        "err_nu": abs(est.G.nu - truth.G.nu),
    }


def scaling_factors(scenario_id: str, truth: ParamPoint, G0: ComponentParams) -> dict:
    """Per-metric ``(weight, power)`` so that ``scaled = weight * raw**power``.

    The scaled quantities are the ones whose squared expectation the
    corresponding theorem bounds by ``log(n)/n``.
    """
    if scenario_id not in SCENARIO_IDS:
        raise ParameterError(f"unknown scenario {scenario_id!r}; expected one of {SCENARIO_IDS}")
    lam = truth.lam
    if scenario_id == "T4":
        dg = DeltaG.between(truth.G, G0)
        w_lam = math.sqrt(dg.theta(4, 8, 4))
        w_g = lam * math.sqrt(dg.theta(2, 4, 2))
        return {
            "err_lambda": (w_lam, 1),
            "err_a": (w_g, 1),
            "err_b": (w_g, 2),
            "err_nu": (w_g, 1),
        }
    if scenario_id == "T9":
        dn = DeltaG.between(truth.G, G0).norm()
        return {
            "err_lambda": (dn**2, 1),
            "err_a": (lam * dn, 1),
            "err_b": (lam * dn, 1),
            "err_nu": (lam * dn, 1),
        }
    return {
        "err_lambda": (1.0, 1),
        "err_a": (lam, 1),
        "err_b": (lam, 1),
        "err_nu": (lam, 1),
    }


def theorem_errors(scenario_id: str, truth: ParamPoint, est: ParamPoint, G0: ComponentParams) -> dict:
    """Raw errors plus ``scaled_*`` versions following the theorem's weighting."""
    raw = raw_errors(truth, est)
    out = dict(raw)
    for name, (weight, power) in scaling_factors(scenario_id, truth, G0).items():
        out["scaled_" + name[4:]] = weight * raw[name] ** power
    return out


def all_metrics(scenario_id: str, truth: ParamPoint, est: ParamPoint, G0: ComponentParams) -> dict:
    """Everything written to the long-format CSV for one replicate."""
    out = theorem_errors(scenario_id, truth, est, G0)
    out.update(
        d1=d1(est, truth),
        d2=d2(est, truth, G0),
        d2_bar=d2_bar(est, truth, G0),
        d4=d4(est, truth, G0),
        d4_bar=d4_bar(est, truth, G0),
    )
    return out
