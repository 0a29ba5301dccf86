"""Fixed-length transport delay lines (ring buffers)."""
from __future__ import annotations

import math
from collections import deque

from .errors import ConfigurationError

SENTINEL = -1.0


def delay_steps(duration: float, dt: float) -> int:
    """Number of whole steps needed to cover ``duration``; rounds up, never early.

    A relative slack of 1e-9 keeps e.g. 0.2/0.1 from rounding up to 3.
    """
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    ratio = duration / dt
    return max(0, math.ceil(ratio - 1e-9 * max(1.0, abs(ratio))))


class DelayLine:
    """FIFO of ``capacity`` slots; a pushed value pops out ``capacity`` pushes later."""

    __slots__ = ("capacity", "_buf")

    def __init__(self, capacity: int, idle: float = 0.0):
        if capacity < 1:
            raise ConfigurationError(f"delay line capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._buf = deque([float(idle)] * capacity, maxlen=capacity)

    def push_pop(self, value: float) -> float:
        out = self._buf[0]
        self._buf.append(float(value))
        return out

    def peek(self) -> float:
        return self._buf[0]

    def flush(self, sentinel: float = SENTINEL) -> "DelayLine":
        self._buf.extend([float(sentinel)] * self.capacity)
        return self

    def contents(self) -> tuple[float, ...]:
        return tuple(self._buf)

    def copy(self) -> "DelayLine":
        line = DelayLine.__new__(DelayLine)
        line.capacity = self.capacity
        line._buf = deque(self._buf, maxlen=self.capacity)
        return line

    def __eq__(self, other):
        return isinstance(other, DelayLine) and self.contents() == other.contents()

    def __repr__(self):
        return f"DelayLine({list(self._buf)})"


def make_delay_line(capacity_steps: int, idle: float = 0.0) -> DelayLine:
    return DelayLine(capacity_steps, idle)


def push_pop(line: DelayLine, value: float) -> float:
    return line.push_pop(value)


def flush_delay_line(line: DelayLine, sentinel: float = SENTINEL) -> DelayLine:
    return line.flush(sentinel)
