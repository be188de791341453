"""End-to-end scenario execution: provision, peer, offload, stream, report.

A run is staged on one engine: clusters reconcile to Ready first, then
peerings handshake and tunnels come up, then the pipeline streams for the
configured duration while usage sampling and sync ticks ride the same clock.
The queue drains naturally afterwards (recurring events stop rescheduling
past the stream end), so in-flight frames still land.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import engine as eng
from .config import ScenarioConfig
from .engine import Engine
from .errors import FedsimError
from .federation import FederationManager
from .lifecycle import ClusterManager
from .network import Network
from .pipeline import (
    ComponentSpec,
    LatencySample,
    PipelineSpec,
    StreamingPipeline,
    UsageMonitor,
)
from .report import FrameCounts, ProvisionEntry, RunReport, UsageStats
from .scheduler import Scheduler
from .stats import LatencyStats, evaluate_qos, percentile


@dataclass
class RunResult:
    report: RunReport
    samples: list[LatencySample]
    stream_start_us: int
    warmup_cutoff_us: int


class ScenarioRun:
    """Wires the subsystems for one config and drives the staged execution."""

    def __init__(self, config: ScenarioConfig, collect_stages: bool = False):
        self.config = config
        self.engine = Engine(seed=config.seed)
        self.clusters = ClusterManager(self.engine, profiles=config.profiles)
        self.net = Network(
            self.engine,
            local_latency=config.local_latency,
            tunnel_overhead_ms=config.tunnel_overhead_ms,
            tunnel_overhead_cpu=config.tunnel_overhead_cpu,
            nodeport_service_ms=config.nodeport_service_ms,
            proxy_side_ms=config.proxy_side_ms,
        )
        self.fed = FederationManager(
            self.engine, self.clusters, self.net,
            discover_ms=config.discover_ms,
            authenticate_ms=config.authenticate_ms,
            sync_tick_ms=config.sync_tick_ms,
        )
        self.sched = Scheduler(self.fed)
        self.pipeline: StreamingPipeline | None = None
        self.monitor: UsageMonitor | None = None
        self._collect_stages = collect_stages

    def execute(self) -> RunResult:
        config = self.config
        for cc in config.clusters:
            spec = self.clusters.generate_cluster_definition(
                cc.distribution, cc.node_count, cc.flavor, cc.region,
                name=cc.name, pod_cidr=cc.pod_cidr)
            self.net.register_cluster(cc.name, spec.pod_cidr)
            self.clusters.apply_cluster(spec)
        for lc in config.links:
            self.net.add_link(lc.a, lc.b, lc.latency, lc.bandwidth_mbps,
                              lc.loss_rate)
        self.engine.run_all()
        if not self.clusters.all_ready():
            raise FedsimError("clusters failed to reach Ready")

        for cluster, namespace in config.namespaces:
            self.fed.create_namespace(cluster, namespace)
        for pc in config.peerings:
            self.fed.initiate_peering(pc.consumer, pc.provider, pc.mode, pc.share)
        self.engine.run_all()
        for oc in config.offloads:
            self.fed.offload_namespace(oc.origin, oc.namespace,
                                       list(oc.targets), oc.policy)

        stream_start_us = self.engine.now_us
        duration_us = round(config.duration_min * 60 * eng.US_PER_S)
        samples: list[LatencySample] = []
        if config.pipeline is not None:
            spec = self._pipeline_spec()
            self.pipeline = StreamingPipeline(self.engine, self.fed, self.sched,
                                              self.net, spec,
                                              collect_stages=self._collect_stages)
            self.pipeline.spawn()
            self.monitor = UsageMonitor(
                self.engine, self.fed, self.net,
                baselines={c.name: (c.base_cpu, c.base_mem)
                           for c in config.clusters},
                cadence_us=eng.ms_to_us(config.sample_cadence_ms),
            )
            self.fed.start_sync_ticks(until_us=stream_start_us + duration_us)
            self.pipeline.start(duration_us)
            self.monitor.start(duration_us)
            self.engine.run_all()
            samples = self.pipeline.latency_samples()

        warmup_cutoff_us = stream_start_us + round(config.warmup_s * eng.US_PER_S)
        report = self._build_report(samples, warmup_cutoff_us)
        return RunResult(report=report, samples=samples,
                         stream_start_us=stream_start_us,
                         warmup_cutoff_us=warmup_cutoff_us)

    def _pipeline_spec(self) -> PipelineSpec:
        pc = self.config.pipeline

        def comp(role: str, cfg) -> ComponentSpec:
            return ComponentSpec(role=role, cluster=cfg.cluster, delay=cfg.delay,
                                 cpu_demand=cfg.cpu_demand,
                                 mem_demand=cfg.mem_demand,
                                 vcpus=cfg.vcpus, ram_mb=cfg.ram_mb)

        return PipelineSpec(
            namespace=pc.namespace,
            renderer=comp("renderer", pc.renderer),
            streamer=comp("streamer", pc.streamer),
            client=comp("client", pc.client),
            exposure=self.config.exposure,
            frame_interval_ms=pc.frame_interval_ms,
            frame_bytes=pc.frame_bytes,
        )

    def _build_report(self, samples: list[LatencySample],
                      warmup_cutoff_us: int) -> RunReport:
        measured = [s.latency_ms for s in samples if s.embed_us >= warmup_cutoff_us]
        latency = LatencyStats.from_samples(measured)
        qos = evaluate_qos(measured, self.config.qos_threshold_ms)

        cpu_median = mem_median = None
        per_cpu: dict[str, float] = {}
        per_mem: dict[str, float] = {}
        if self.monitor is not None:
            averaged = self.monitor.cluster_average_series()
            if averaged:
                cpu_median = percentile([cpu for _, cpu, _ in averaged], 0.5)
                mem_median = percentile([mem for _, _, mem in averaged], 0.5)
            for cluster, series in self.monitor.samples.items():
                if series:
                    per_cpu[cluster] = percentile([s.cpu_pct for s in series], 0.5)
                    per_mem[cluster] = percentile([s.mem_pct for s in series], 0.5)

        provisioning = tuple(
            ProvisionEntry(cluster=name,
                           cp_ready_at_ms=rep.cp_ready_at_ms,
                           all_ready_at_ms=rep.all_ready_at_ms)
            for name, rep in sorted(
                (n, self.clusters.provisioning_report(n))
                for n in self.clusters.clusters)
        )
        if self.pipeline is not None:
            frames = FrameCounts(generated=self.pipeline.generated,
                                 consumed=self.pipeline.consumed,
                                 dropped=self.pipeline.dropped)
        else:
            frames = FrameCounts(0, 0, 0)
        return RunReport(
            scenario=self.config.name, seed=self.config.seed,
            duration_min=self.config.duration_min, latency=latency,
            cpu=UsageStats(median_pct=cpu_median, per_cluster=per_cpu),
            mem=UsageStats(median_pct=mem_median, per_cluster=per_mem),
            provisioning=provisioning, frames=frames, qos=qos,
        )


def run_scenario(config: ScenarioConfig, collect_stages: bool = False) -> RunResult:
    """Provision, federate, stream and summarize one scenario config."""
    return ScenarioRun(config, collect_stages=collect_stages).execute()
