"""Run reports and their deterministic on-disk forms.

Two export formats:
  summary-doc    JSON rendering of the RunReport, keys sorted, LF endings;
                 parse_summary() round-trips it exactly
  samples-table  CSV with header ``frame_id,embed_ms,consume_ms,latency_ms``,
                 one row per consumed frame in frame-id order
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .pipeline import LatencySample
from .stats import LatencyStats, QoSVerdict

SAMPLES_HEADER = "frame_id,embed_ms,consume_ms,latency_ms"


@dataclass(frozen=True)
class ProvisionEntry:
    cluster: str
    cp_ready_at_ms: float
    all_ready_at_ms: float


@dataclass(frozen=True)
class FrameCounts:
    generated: int
    consumed: int
    dropped: int


@dataclass(frozen=True)
class UsageStats:
    median_pct: float | None
    per_cluster: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class RunReport:
    scenario: str
    seed: int
    duration_min: float
    latency: LatencyStats
    cpu: UsageStats
    mem: UsageStats
    provisioning: tuple[ProvisionEntry, ...]
    frames: FrameCounts
    qos: QoSVerdict

    def to_dict(self) -> dict:
        latency: dict = {"n": self.latency.n}
        if self.latency.n > 0:
            latency.update(p50_ms=self.latency.p50_ms, p90_ms=self.latency.p90_ms,
                           stddev_ms=self.latency.stddev_ms)
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "duration_min": self.duration_min,
            "latency": latency,
            "cpu": {"median_pct": self.cpu.median_pct,
                    "per_cluster": dict(sorted(self.cpu.per_cluster.items()))},
            "mem": {"median_pct": self.mem.median_pct,
                    "per_cluster": dict(sorted(self.mem.per_cluster.items()))},
            "provisioning": [
                {"cluster": p.cluster, "cp_ready_at_ms": p.cp_ready_at_ms,
                 "all_ready_at_ms": p.all_ready_at_ms}
                for p in self.provisioning
            ],
            "frames": {"generated": self.frames.generated,
                       "consumed": self.frames.consumed,
                       "dropped": self.frames.dropped},
            "qos": {"threshold_ms": self.qos.threshold_ms,
                    "violations": self.qos.violations,
                    "passed": self.qos.passed,
                    "no_data": self.qos.no_data},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        lat = doc["latency"]
        latency = LatencyStats(n=lat["n"], p50_ms=lat.get("p50_ms"),
                               p90_ms=lat.get("p90_ms"),
                               stddev_ms=lat.get("stddev_ms"))
        return cls(
            scenario=doc["scenario"], seed=doc["seed"],
            duration_min=doc["duration_min"], latency=latency,
            cpu=UsageStats(median_pct=doc["cpu"]["median_pct"],
                           per_cluster=dict(doc["cpu"]["per_cluster"])),
            mem=UsageStats(median_pct=doc["mem"]["median_pct"],
                           per_cluster=dict(doc["mem"]["per_cluster"])),
            provisioning=tuple(
                ProvisionEntry(cluster=p["cluster"],
                               cp_ready_at_ms=p["cp_ready_at_ms"],
                               all_ready_at_ms=p["all_ready_at_ms"])
                for p in doc["provisioning"]),
            frames=FrameCounts(generated=doc["frames"]["generated"],
                               consumed=doc["frames"]["consumed"],
                               dropped=doc["frames"]["dropped"]),
            qos=QoSVerdict(threshold_ms=doc["qos"]["threshold_ms"],
                           violations=doc["qos"]["violations"],
                           passed=doc["qos"]["passed"],
                           no_data=doc["qos"]["no_data"]),
        )


def export_summary(report: RunReport) -> bytes:
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2)
    return (text + "\n").encode("utf-8")


def parse_summary(data: bytes) -> RunReport:
    return RunReport.from_dict(json.loads(data.decode("utf-8")))


def _fmt_ms(us: int) -> str:
    # microsecond grid renders exactly with three decimals
    return f"{us // 1000}.{us % 1000:03d}"


def export_samples(samples: list[LatencySample]) -> bytes:
    lines = [SAMPLES_HEADER]
    for s in sorted(samples, key=lambda s: s.frame_id):
        lines.append(f"{s.frame_id},{_fmt_ms(s.embed_us)},{_fmt_ms(s.consume_us)},"
                     f"{_fmt_ms(s.latency_us)}")
    return ("\n".join(lines) + "\n").encode("utf-8")
