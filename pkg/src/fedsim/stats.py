"""Sample statistics and QoS evaluation.

Percentiles use the nearest-rank method: the q-quantile of n ascending values
is the value at 1-based index ceil(q * n). Medians everywhere in the reports
are percentile(…, 0.5) for consistency with that definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptySamples

XR_LATENCY_THRESHOLD_MS = 15.0


def percentile(samples: list[float], q: float) -> float:
    """Nearest-rank percentile; q in (0, 1]."""
    if not samples:
        raise EmptySamples(f"percentile({q}) of no samples")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    ordered = sorted(samples)
    rank = math.ceil(q * len(ordered))
    return ordered[rank - 1]


def pstdev(samples: list[float]) -> float:
    """Population standard deviation."""
    if not samples:
        raise EmptySamples("stddev of no samples")
    mean = sum(samples) / len(samples)
    return math.sqrt(sum((x - mean) ** 2 for x in samples) / len(samples))


@dataclass(frozen=True)
class LatencyStats:
    n: int
    p50_ms: float | None = None
    p90_ms: float | None = None
    stddev_ms: float | None = None

    @classmethod
    def from_samples(cls, latencies_ms: list[float]) -> "LatencyStats":
        if not latencies_ms:
            return cls(n=0)
        return cls(n=len(latencies_ms),
                   p50_ms=percentile(latencies_ms, 0.5),
                   p90_ms=percentile(latencies_ms, 0.9),
                   stddev_ms=pstdev(latencies_ms))


@dataclass(frozen=True)
class QoSVerdict:
    threshold_ms: float
    violations: int
    passed: bool
    no_data: bool = False


def evaluate_qos(latencies_ms: list[float],
                 threshold_ms: float = XR_LATENCY_THRESHOLD_MS) -> QoSVerdict:
    """Strict threshold check: a violation is any sample above the threshold."""
    if threshold_ms <= 0:
        raise ValueError("threshold must be positive")
    if not latencies_ms:
        return QoSVerdict(threshold_ms=threshold_ms, violations=0,
                          passed=False, no_data=True)
    violations = sum(1 for x in latencies_ms if x > threshold_ms)
    return QoSVerdict(threshold_ms=threshold_ms, violations=violations,
                      passed=violations == 0)
