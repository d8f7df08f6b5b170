"""Preset experiment settings as ready-to-run scenarios.

Each scenario fixes the base family, the two expert functions, the frozen
component G0 and a truth schedule n -> (lam*(n), G*(n)).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from ..densities import BaseFamily, ComponentParams
from ..errors import ParameterError
from ..estimation import ThetaBounds
from ..experts import IDENTITY, SIGMOID, ExpertFn
from ..losses import ParamPoint
from ..model import ContaminatedModel

CASES = ("fixed_lambda", "vanishing_lambda", "drift_i", "drift_ii")

# base kind, base expert, prompt expert, allowed cases
PRESETS = {
    "T2": ("student_t", IDENTITY, IDENTITY, ("fixed_lambda", "vanishing_lambda")),
    "T4": ("gaussian", IDENTITY, IDENTITY, ("drift_i", "drift_ii")),
    "T6": ("gaussian", SIGMOID, IDENTITY, ("fixed_lambda", "vanishing_lambda")),
    "T7": ("student_t", IDENTITY, SIGMOID, ("fixed_lambda", "vanishing_lambda")),
    "T8": ("gaussian", IDENTITY, SIGMOID, ("fixed_lambda", "vanishing_lambda")),
    "T9": ("gaussian", SIGMOID, SIGMOID, ("vanishing_lambda", "drift_ii")),
}

STUDENT_T_DF = 4.0
GAUSSIAN_NU0 = 1.0
# drift schedules send nu* -> 0.01, so merging needs the base variance there too
MERGING_NU0 = 0.01
DEFAULT_D = 8


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    case: str
    base: BaseFamily
    sigma: ExpertFn
    G0: ComponentParams
    d: int = DEFAULT_D

    @property
    def label(self) -> str:
        return f"{self.id}/{self.case}"

    @property
    def key(self) -> int:
        """Stable 32-bit hash used for seed derivation."""
        return zlib.crc32(self.label.encode())

    def truth(self, n: int) -> ParamPoint:
        return truth_schedule(self.id, self.case, n, self.d)

    def truth_model(self, n: int) -> ContaminatedModel:
        t = self.truth(n)
        return ContaminatedModel(t.lam, self.base, self.G0, self.sigma, t.G)

    def check_grid(self, grid, bounds: ThetaBounds | None = None) -> None:
        """Raise unless every truth on ``grid`` lies in ``[0, 1] x`` the box."""
        bounds = bounds or ThetaBounds()
        for n in grid:
            t = self.truth(n)
            if not (0.0 <= t.lam <= 1.0 and bounds.contains(t.G)):
                raise ParameterError(f"{self.label}: truth at n={n} leaves the parameter box")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "case": self.case,
            "d": self.d,
            "base": {"kind": self.base.kind, "expert": self.base.expert.to_json()},
            "sigma": self.sigma.to_json(),
            "G0": {"a0": self.G0.a.tolist(), "b0": self.G0.b, "nu0": self.G0.nu},
        }


def truth_schedule(scenario_id: str, case: str, n: int, d: int = DEFAULT_D) -> ParamPoint:
    e1 = np.eye(d)[0]
    ones = np.ones(d)
    if case == "fixed_lambda":
        return ParamPoint(0.5, ComponentParams(ones, 1.0, 0.01))
    if case == "vanishing_lambda":
        lam = 0.5 * n ** (-0.25)
        if scenario_id == "T9":
            # shared expert: the prompt differs from the base only through nu
            return ParamPoint(lam, ComponentParams(e1, 0.0, 0.01))
        return ParamPoint(lam, ComponentParams(ones, 1.0, 0.01))
    if case == "drift_i":
        s = n ** (-1 / 8)
        return ParamPoint(0.5, ComponentParams((1 + s) * e1, 0.0, 0.01 + s))
    if case == "drift_ii":
        if scenario_id == "T9":
            s = n ** (-1 / 4)
            return ParamPoint(0.5, ComponentParams((1 + s) * e1, s, 0.01 + s))
        return ParamPoint(0.5, ComponentParams(e1, n ** (-1 / 8), 0.01))
    raise ParameterError(f"unknown case {case!r}")


def make_scenario(scenario_id: str, case: str, d: int = DEFAULT_D, nu0: float | None = None) -> ScenarioSpec:
    """Build a preset. ``nu0`` overrides the frozen component's variance (or df)."""
    if scenario_id not in PRESETS:
        raise ParameterError(f"unknown scenario {scenario_id!r}; expected one of {sorted(PRESETS)}")
    kind, phi, sigma, cases = PRESETS[scenario_id]
    if case not in cases:
        raise ParameterError(f"{scenario_id} supports cases {cases}, not {case!r}")
    if nu0 is None:
        if kind == "student_t":
            nu0 = STUDENT_T_DF
        elif case.startswith("drift"):
            nu0 = MERGING_NU0
        else:
            nu0 = GAUSSIAN_NU0
    G0 = ComponentParams(np.eye(d)[0], 0.0, nu0)
    return ScenarioSpec(scenario_id, case, BaseFamily(kind, phi), sigma, G0, d)


def all_scenarios():
    return [(sid, case) for sid, (_, _, _, cases) in PRESETS.items() for case in cases]
