"""Certificate reports: the common result type of every numerical check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class CertificateReport:
    """Outcome of one checked inequality lhs <= rhs.

    slack = rhs - lhs is oriented so that a nonnegative value means the
    inequality holds sharply; the check passes as long as the violation
    does not exceed `tolerance`.
    """

    name: str
    lhs: float
    rhs: float
    tolerance: float = 0.0
    step: int | None = None
    context: dict[str, Any] = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.slack >= -self.tolerance

    def row(self) -> list:
        """CSV row: certificate, step, lhs, rhs, slack, tolerance, pass."""
        step = "" if self.step is None else self.step
        return [self.name, step, repr(float(self.lhs)), repr(float(self.rhs)),
                repr(float(self.slack)), repr(float(self.tolerance)),
                int(self.passed)]


CSV_SCHEMA_VERSION = 1
CSV_HEADER = ["certificate", "step", "lhs", "rhs", "slack", "tolerance", "pass"]
