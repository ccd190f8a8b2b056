"""
Verdict Module
Numerical identity verdicts and the tolerance set used to judge them
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    """Tolerances passed explicitly through every engine"""

    identity: float = 1e-9
    oracle: float = 1e-8
    rank: float = 1e-11
    feasibility: float = 1e-10
    zero: float = 1e-12

    def __post_init__(self):
        for name in ('identity', 'oracle', 'rank', 'feasibility', 'zero'):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f'tolerance {name} must be a positive finite number, got {value!r}')


@dataclass(frozen=True)
class Verdict:
    """
    Outcome of one numerical identity check.

    max_deviation is already relative to the scale chosen by the check.
    An unavailable verdict carries a reason and never counts as a failure.
    """

    name: str
    max_deviation: float
    tolerance: float
    passed: bool
    available: bool = True
    reason: str = ''
    detail: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def judge(cls, name: str, deviation: float, tolerance: float,
              detail: Optional[Dict[str, float]] = None) -> 'Verdict':
        deviation = float(deviation)
        passed = bool(deviation <= tolerance)
        return cls(name, deviation, float(tolerance), passed, detail=dict(detail or {}))

    @classmethod
    def flag(cls, name: str, holds: bool, tolerance: float, reason: str = '') -> 'Verdict':
        """Boolean check (biconditionals, negative controls)"""
        return cls(name, 0.0 if holds else 1.0, float(tolerance), bool(holds), reason=reason)

    @classmethod
    def unavailable(cls, name: str, reason: str) -> 'Verdict':
        return cls(name, 0.0, 0.0, True, available=False, reason=reason)

    def to_dict(self) -> Dict:
        if not self.available:
            return {'available': False, 'reason': self.reason}
        out = {
            'available': True,
            'max_deviation': _json_float(self.max_deviation),
            'tolerance': self.tolerance,
            'passed': self.passed,
        }
        if self.reason:
            out['reason'] = self.reason
        if self.detail:
            out['detail'] = {k: _json_float(v) for k, v in sorted(self.detail.items())}
        return out


def max_abs(values) -> float:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0
    return float(np.max(np.abs(arr)))


def relative_deviation(difference, scale: float) -> float:
    """max |difference| / scale; an exact zero difference is 0 whatever the scale"""
    dev = max_abs(difference)
    if dev == 0.0:
        return 0.0
    if scale <= 0.0 or not math.isfinite(scale):
        return math.inf
    return dev / scale


def _json_float(value: float):
    # JSON has no infinity; a non-finite deviation is reported as a string
    if math.isfinite(value):
        return float(value)
    return str(value)
