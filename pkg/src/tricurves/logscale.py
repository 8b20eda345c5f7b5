"""Log-scaled complex scalars.

Quantities such as corner weights, transfer products and tridiagonal
determinants grow like exp(const * n) and overflow doubles near n ~ 700,
while the combinations we actually need (determinant ratios, corner
resolvent entries multiplied by corner weights) stay O(1).  A LogComplex
stores a number as ``phase * exp(log_mod)`` with ``|phase| = 1``; products
add log-moduli, sums factor out the larger modulus first.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

__all__ = ["LogComplex", "LOG_ZERO"]

# Effective log-modulus of an exact zero.
_NEG_INF = float("-inf")


@dataclass(frozen=True)
class LogComplex:
    log_mod: float
    phase: complex  # unit modulus, or 0j for an exact zero

    @staticmethod
    def from_complex(value: complex) -> "LogComplex":
        value = complex(value)
        if value == 0:
            return LOG_ZERO
        m = abs(value)
        return LogComplex(math.log(m), value / m)

    @staticmethod
    def from_log(log_mod: float, phase: complex = 1.0 + 0j) -> "LogComplex":
        p = complex(phase)
        ap = abs(p)
        if ap == 0:
            return LOG_ZERO
        return LogComplex(float(log_mod) + math.log(ap) if ap != 1.0 else float(log_mod), p / ap)

    @property
    def is_zero(self) -> bool:
        return self.phase == 0

    def to_complex(self) -> complex:
        """Materialize; overflows to inf if log_mod > ~709 (caller's risk)."""
        if self.is_zero:
            return 0j
        return self.phase * cmath.exp(complex(self.log_mod, 0.0))

    def __mul__(self, other) -> "LogComplex":
        other = _coerce(other)
        if self.is_zero or other.is_zero:
            return LOG_ZERO
        return LogComplex(self.log_mod + other.log_mod, _renorm(self.phase * other.phase))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "LogComplex":
        other = _coerce(other)
        if other.is_zero:
            raise ZeroDivisionError("division by log-scaled zero")
        if self.is_zero:
            return LOG_ZERO
        return LogComplex(self.log_mod - other.log_mod, _renorm(self.phase / other.phase))

    def __add__(self, other) -> "LogComplex":
        other = _coerce(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        # Factor out the larger modulus: a + b = e^{La} (pa + pb e^{Lb-La}).
        if other.log_mod > self.log_mod:
            self, other = other, self
        rest = self.phase + other.phase * cmath.exp(complex(other.log_mod - self.log_mod, 0.0))
        if rest == 0:
            return LOG_ZERO
        m = abs(rest)
        return LogComplex(self.log_mod + math.log(m), rest / m)

    __radd__ = __add__

    def __neg__(self) -> "LogComplex":
        if self.is_zero:
            return self
        return LogComplex(self.log_mod, -self.phase)

    def __sub__(self, other) -> "LogComplex":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "LogComplex":
        return _coerce(other) + (-self)

    def __abs__(self) -> float:
        return 0.0 if self.is_zero else math.exp(self.log_mod)


def _renorm(phase: complex) -> complex:
    # Guard against slow drift of |phase| from repeated products.
    m = abs(phase)
    return phase if m == 1.0 else phase / m


def _coerce(value) -> LogComplex:
    if isinstance(value, LogComplex):
        return value
    return LogComplex.from_complex(value)


LOG_ZERO = LogComplex(_NEG_INF, 0j)
