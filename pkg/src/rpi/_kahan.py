"""Compensated summation for long exact-probability accumulations."""

from __future__ import annotations


class KahanSum:
    """Kahan-Babuska (Neumaier) compensated running sum."""

    __slots__ = ("_sum", "_comp")

    def __init__(self, initial: float = 0.0) -> None:
        self._sum = initial
        self._comp = 0.0

    def add(self, x: float) -> None:
        t = self._sum + x
        if abs(self._sum) >= abs(x):
            self._comp += (self._sum - t) + x
        else:
            self._comp += (x - t) + self._sum
        self._sum = t

    @property
    def value(self) -> float:
        return self._sum + self._comp
