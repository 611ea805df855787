"""Effect sizes from 2x2 contingency tables and unit-information prior scales."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import DomainError


class EffectMeasure(enum.Enum):
    LOGOR = "logor"
    LOGRR = "logrr"

    @classmethod
    def parse(cls, value) -> "EffectMeasure":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise DomainError(f"unknown effect measure {value!r}; use 'logor' or 'logrr'") from None


@dataclass(frozen=True)
class ContingencyTable:
    """Counts of a two-arm study.

    ``a``/``b`` are events/non-events under treatment, ``c``/``d`` under
    control. Counts may be fractional after a continuity correction.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"cell {name} must be a finite nonnegative count, got {v!r}")
        if self.n1 <= 0 or self.n2 <= 0:
            raise DomainError("both arms need at least one participant")

    @classmethod
    def from_totals(cls, events_t, total_t, events_c, total_c) -> "ContingencyTable":
        if events_t > total_t or events_c > total_c:
            raise DomainError("events exceed arm total")
        return cls(events_t, total_t - events_t, events_c, total_c - events_c)

    @property
    def n1(self) -> float:
        return self.a + self.b

    @property
    def n2(self) -> float:
        return self.c + self.d

    @property
    def total(self) -> float:
        return self.n1 + self.n2

    def corrected(self, amount: float) -> "ContingencyTable":
        return ContingencyTable(self.a + amount, self.b + amount, self.c + amount, self.d + amount)


@dataclass(frozen=True)
class EffectEstimate:
    y: float
    sigma: float
    label: str = ""

    def __post_init__(self):
        if not math.isfinite(self.y):
            raise DomainError(f"estimate {self.label!r}: y must be finite")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"estimate {self.label!r}: sigma must be positive and finite")


def needs_correction(table: ContingencyTable, measure: EffectMeasure) -> bool:
    measure = EffectMeasure.parse(measure)
    if measure is EffectMeasure.LOGOR:
        return min(table.a, table.b, table.c, table.d) == 0
    return table.a == 0 or table.c == 0


def escalc(table: ContingencyTable, measure=EffectMeasure.LOGOR,
           correction: float = 0.5, label: str = "") -> EffectEstimate:
    """Log odds ratio or log relative risk with its standard error.

    When a cell entering a logarithm or reciprocal is zero, ``correction``
    is added to all four cells of that table (and only that table).
    """
    measure = EffectMeasure.parse(measure)
    if correction < 0:
        raise DomainError("continuity correction must be nonnegative")
    if needs_correction(table, measure):
        if correction == 0:
            raise DomainError(f"study {label!r}: zero cell and no continuity correction")
        table = table.corrected(correction)
    a, b, c, d = table.a, table.b, table.c, table.d
    if measure is EffectMeasure.LOGOR:
        y = math.log(a) + math.log(d) - math.log(b) - math.log(c)
        var = 1 / a + 1 / b + 1 / c + 1 / d
    else:
        n1, n2 = table.n1, table.n2
        y = math.log(a / n1) - math.log(c / n2)
        var = 1 / a - 1 / n1 + 1 / c - 1 / n2
    if not var > 0:
        raise DomainError(f"study {label!r}: standard error is zero (all events in both arms?)")
    return EffectEstimate(y, math.sqrt(var), label)


def unit_information_sd(measure, p: float) -> float:
    """Standard deviation of a unit-information prior for the effect.

    ``p`` is the assumed event probability in both arms.
    """
    measure = EffectMeasure.parse(measure)
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie strictly between 0 and 1")
    if measure is EffectMeasure.LOGOR:
        return 2.0 / math.sqrt(p * (1.0 - p))
    return 2.0 * math.sqrt((1.0 - p) / p)
