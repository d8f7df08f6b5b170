"""Expert (activation) functions used as conditional-mean links.

All evaluators accept scalars or numpy arrays and broadcast elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("identity", "affine", "sigmoid", "relu", "tanh")


@dataclass(frozen=True)
class ExpertFn:
    kind: str
    slope: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown expert kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "affine" and self.slope == 0:
            raise ValueError("affine expert needs a non-zero slope")

    def __call__(self, z):
        return eval_expert(self, z)

    def to_json(self):
        if self.kind == "affine":
            return {"kind": "affine", "slope": self.slope, "offset": self.offset}
        return self.kind

    @classmethod
    def from_json(cls, obj) -> "ExpertFn":
        if isinstance(obj, ExpertFn):
            return obj
        if isinstance(obj, str):
            return parse_expert(obj)
        return cls(obj["kind"], float(obj.get("slope", 1.0)), float(obj.get("offset", 0.0)))


IDENTITY = ExpertFn("identity")
SIGMOID = ExpertFn("sigmoid")
RELU = ExpertFn("relu")
TANH = ExpertFn("tanh")


def parse_expert(text: str) -> ExpertFn:
    """Parse ``"sigmoid"`` or ``"affine:2,3"`` (slope, offset) into an ExpertFn."""
    name, _, params = text.strip().partition(":")
    name = name.lower()
    if name == "affine":
        if not params:
            raise ValueError("affine expert needs 'affine:slope,offset'")
        slope, offset = (float(v) for v in params.split(","))
        return ExpertFn("affine", slope, offset)
    if params:
        raise ValueError(f"expert {name!r} takes no parameters")
    return ExpertFn(name)


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    # two branches so exp never overflows
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def _out(z, value):
    return float(value) if np.ndim(z) == 0 else value


def eval_expert(f: ExpertFn, z):
    z = np.asarray(z, dtype=float)
    k = f.kind
    if k == "identity":
        v = z.copy()
    elif k == "affine":
        v = f.slope * z + f.offset
    elif k == "sigmoid":
        v = _sigmoid(z)
    elif k == "relu":
        v = np.maximum(z, 0.0)
    else:
        v = np.tanh(z)
    return _out(z, v)


def deriv1(f: ExpertFn, z):
    """First derivative. ReLU uses 0 at the kink."""
    z = np.asarray(z, dtype=float)
    k = f.kind
    if k == "identity":
        v = np.ones_like(z)
    elif k == "affine":
        v = np.full_like(z, f.slope)
    elif k == "sigmoid":
        s = _sigmoid(z)
        v = s * (1.0 - s)
    elif k == "relu":
        v = (z > 0).astype(float)
    else:
        v = 1.0 - np.tanh(z) ** 2
    return _out(z, v)


def deriv2(f: ExpertFn, z):
    """Second derivative. ReLU is 0 everywhere."""
    z = np.asarray(z, dtype=float)
    k = f.kind
    if k == "sigmoid":
        s = _sigmoid(z)
        v = s * (1.0 - s) * (1.0 - 2.0 * s)
    elif k == "tanh":
        t = np.tanh(z)
        v = -2.0 * t * (1.0 - t * t)
    else:
        v = np.zeros_like(z)
    return _out(z, v)
