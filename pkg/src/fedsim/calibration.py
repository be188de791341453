"""Reference-experiment harness: reruns the shipped scenarios and provisioning
cells and checks them against the calibrated target bands.

The targets encode the behavior the `paper-v1` profile was fitted to; once
fitted they are frozen here and act as regression bands.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from importlib import resources

from .config import ScenarioConfig, load_config
from .engine import Engine, constant
from .errors import FedsimError, UnsupportedTransport
from .federation import FederationManager
from .lifecycle import ClusterManager, PROFILES, ProvisionReport
from .network import DATAGRAM, FlowRecord, L7_PROXY, NODE_PORT, OVERLAY_TUNNEL, Network
from .runner import RunResult, run_scenario

SCENARIO_NAMES = ("sce1", "sce2", "sce3", "sce4", "sce5")

# medians of the end-to-end latency distribution per scenario, ms
LATENCY_TARGET_MS = {"sce1": 762.0, "sce2": 794.0, "sce3": 811.0,
                     "sce4": 801.0, "sce5": 824.0}
LATENCY_TOLERANCE = 0.03
P90_BAND_MS = (900.0, 1100.0)
SCE1_STDDEV_MS = 202.0
STDDEV_TOLERANCE = 0.15

# cluster-averaged CPU medians per scenario, percent
CPU_TARGET_PCT = {"sce1": 43.2, "sce2": 31.5, "sce3": 29.4,
                  "sce4": 33.5, "sce5": 31.0}
CPU_TOLERANCE_PP = 2.0
MEM_BAND_PCT = (62.0, 70.0)

PROVISION_BAND_S = (150.0, 270.0)
PROVISION_SIZES = (1, 3, 5)
PROVISION_REPETITIONS = 30
MIN_FRAMES = 10_000


def packaged_scenario(name: str, apply_env: bool = False) -> ScenarioConfig:
    """Load one of the configs shipped with the package (sce1..sce5, xr-target)."""
    path = resources.files("fedsim") / "scenarios" / f"{name}.yaml"
    with resources.as_file(path) as real:
        return load_config(str(real), apply_env=apply_env)


def run_provisioning(distribution: str, node_count: int, seed: int,
                     profiles=None) -> ProvisionReport:
    """One isolated provisioning run; report times are on the virtual clock."""
    engine = Engine(seed=seed)
    mgr = ClusterManager(engine, profiles=profiles)
    spec = mgr.generate_cluster_definition(distribution, node_count,
                                           name=f"{distribution}-{node_count}")
    mgr.apply_cluster(spec)
    engine.run_all()
    return mgr.provisioning_report(spec.name)


def provisioning_matrix(repetitions: int = PROVISION_REPETITIONS,
                        profiles=None) -> dict[tuple[str, int], list[float]]:
    """all_ready times in seconds, keyed by (distribution, size), one per seed."""
    matrix: dict[tuple[str, int], list[float]] = {}
    for distribution in ("kubeadm-like", "k3s-like"):
        for size in PROVISION_SIZES:
            matrix[(distribution, size)] = [
                run_provisioning(distribution, size, seed, profiles).all_ready_at_ms
                / 1000.0
                for seed in range(repetitions)
            ]
    return matrix


class ScenarioCache:
    """Runs each packaged scenario at most once per process."""

    def __init__(self):
        self._results: dict[str, RunResult] = {}
        self.wall_clock_s: dict[str, float] = {}

    def result(self, name: str) -> RunResult:
        if name not in self._results:
            t0 = time.perf_counter()
            self._results[name] = run_scenario(packaged_scenario(name))
            self.wall_clock_s[name] = time.perf_counter() - t0
        return self._results[name]


def udp_gate_outcomes() -> dict[str, bool | str]:
    """Transmit one datagram flow under each exposure over a two-cluster world."""
    engine = Engine(seed=7)
    clusters = ClusterManager(engine)
    net = Network(engine)
    fed = FederationManager(engine, clusters, net)
    for name in ("left", "right"):
        spec = clusters.generate_cluster_definition("k3s-like", 1, name=name)
        net.register_cluster(name, spec.pod_cidr)
        clusters.apply_cluster(spec)
    engine.run_all()
    net.add_link("left", "right", one_way_latency=constant(3.0))
    fed.initiate_peering("left", "right")
    engine.run_all()
    src = "10.42.1.1"
    dst = "10.43.1.1"
    outcomes: dict[str, bool | str] = {}
    for exposure in (OVERLAY_TUNNEL, NODE_PORT, L7_PROXY):
        flow = FlowRecord(src=src, dst=dst, transport=DATAGRAM,
                          exposure=exposure, payload_bytes=1000)
        try:
            record = net.transmit(flow, src_cluster="left")
            outcomes[exposure] = not record.dropped
        except UnsupportedTransport:
            outcomes[exposure] = "unsupported-transport"
        except FedsimError as exc:
            outcomes[exposure] = f"error:{type(exc).__name__}"
    return outcomes


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def run_checks(cache: ScenarioCache | None = None,
               repetitions: int = PROVISION_REPETITIONS) -> list[CheckResult]:
    """Evaluate every calibrated band; one result per check."""
    cache = cache or ScenarioCache()
    checks: list[CheckResult] = []

    matrix = provisioning_matrix(repetitions)
    lo, hi = PROVISION_BAND_S
    out_of_band = {
        cell: [t for t in times if not lo <= t <= hi]
        for cell, times in matrix.items()
    }
    bad = {cell: times for cell, times in out_of_band.items() if times}
    checks.append(CheckResult(
        "provisioning-band",
        not bad,
        f"all_ready within [{lo:.0f}, {hi:.0f}] s for "
        f"{sum(len(v) for v in matrix.values())} runs" if not bad
        else f"out of band: {bad}"))

    ordering_ok = all(
        k3s < kube
        for size in PROVISION_SIZES
        for k3s, kube in zip(matrix[("k3s-like", size)],
                             matrix[("kubeadm-like", size)])
    )
    checks.append(CheckResult(
        "distribution-ordering", ordering_ok,
        "k3s-like below kubeadm-like at every size and seed" if ordering_ok
        else "k3s-like not uniformly faster"))

    sub_ok = True
    detail = []
    for distribution in ("kubeadm-like", "k3s-like"):
        worker_median_s = PROFILES["paper-v1"][distribution].worker_bootstrap.median()
        gaps = [five - one
                for five, one in zip(matrix[(distribution, 5)],
                                     matrix[(distribution, 1)])]
        worst = max(gaps)
        sub_ok &= worst < 2 * worker_median_s
        detail.append(f"{distribution}: max gap {worst:.1f}s < {2 * worker_median_s:.1f}s")
    checks.append(CheckResult("sub-proportional-scaling", sub_ok, "; ".join(detail)))

    for name in SCENARIO_NAMES:
        report = cache.result(name).report
        target = LATENCY_TARGET_MS[name]
        p50 = report.latency.p50_ms
        ok = (report.latency.n >= MIN_FRAMES
              and abs(p50 - target) <= LATENCY_TOLERANCE * target
              and P90_BAND_MS[0] <= report.latency.p90_ms <= P90_BAND_MS[1])
        detail = (f"p50 {p50:.1f} ms (target {target:.0f} +/-3%), "
                  f"p90 {report.latency.p90_ms:.1f} ms, n={report.latency.n}")
        if name == "sce1":
            sd = report.latency.stddev_ms
            ok = ok and abs(sd - SCE1_STDDEV_MS) <= STDDEV_TOLERANCE * SCE1_STDDEV_MS
            detail += f", stddev {sd:.1f} ms (target {SCE1_STDDEV_MS:.0f} +/-15%)"
        checks.append(CheckResult(f"latency-{name}", ok, detail))

    cpu_ok = True
    cpu_detail = []
    for name in SCENARIO_NAMES:
        report = cache.result(name).report
        target = CPU_TARGET_PCT[name]
        ok = abs(report.cpu.median_pct - target) <= CPU_TOLERANCE_PP
        cpu_ok &= ok
        cpu_detail.append(f"{name} {report.cpu.median_pct:.1f}% (target {target})")
    cpu_ok &= (cache.result("sce2").report.cpu.median_pct
               > cache.result("sce3").report.cpu.median_pct)
    cpu_ok &= (cache.result("sce4").report.cpu.median_pct
               > cache.result("sce5").report.cpu.median_pct)
    checks.append(CheckResult("cpu-medians", cpu_ok, ", ".join(cpu_detail)))

    mem_ok = True
    mem_detail = []
    for name in SCENARIO_NAMES:
        report = cache.result(name).report
        ok = MEM_BAND_PCT[0] <= report.mem.median_pct <= MEM_BAND_PCT[1]
        mem_ok &= ok
        mem_detail.append(f"{name} {report.mem.median_pct:.1f}%")
    checks.append(CheckResult(
        "memory-band", mem_ok,
        f"medians in [{MEM_BAND_PCT[0]:.0f}, {MEM_BAND_PCT[1]:.0f}]%: "
        + ", ".join(mem_detail)))

    outcomes = udp_gate_outcomes()
    gate_ok = (outcomes[L7_PROXY] == "unsupported-transport"
               and outcomes[OVERLAY_TUNNEL] is True
               and outcomes[NODE_PORT] is True)
    checks.append(CheckResult("udp-gate", gate_ok, str(outcomes)))

    xr = run_scenario(packaged_scenario("xr-target"))
    qos_ok = xr.report.qos.passed and all(
        not cache.result(name).report.qos.passed for name in SCENARIO_NAMES)
    checks.append(CheckResult(
        "qos-evaluator", qos_ok,
        f"xr-target passes at {xr.report.qos.threshold_ms:.0f} ms; "
        "reference scenarios all fail"))

    return checks
