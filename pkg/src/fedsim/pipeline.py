"""Timestamped frame pipeline: renderer -> streamer -> client, plus usage sampling.

The renderer emits frames on a fixed cadence, each carrying its generation
timestamp. Frames travel renderer->streamer over a stream transport and
streamer->client over a datagram transport; the consumption-side latency
sample is simply consume time minus embedded timestamp, which decomposes
exactly into render + transit + buffer + transit + decode because every term
is an integer-microsecond quantity.

Placement discipline follows the exposure mode: with an overlay tunnel the
pipeline is owned by one control-plane cluster and remote components must
land in twin namespaces (pod offloading); with node-port or l7-proxy each
component deploys natively into its own cluster.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import engine as eng
from .engine import Dist, Engine
from .errors import NotReady, Unresolvable, Unschedulable, UnsupportedTransport
from .federation import FederationManager, PodState, PodStatus
from .network import DATAGRAM, FlowRecord, Network, OVERLAY_TUNNEL, STREAM
from .scheduler import PlacementPolicy, Scheduler


@dataclass(frozen=True)
class ComponentSpec:
    role: str  # "renderer" | "streamer" | "client"
    cluster: str
    delay: Dist  # render processing / buffer delay / decode delay, ms
    cpu_demand: float = 0.0
    mem_demand: float = 0.0
    vcpus: float = 0.5
    ram_mb: float = 512.0
    namespace: str | None = None  # defaults to the pipeline namespace


@dataclass(frozen=True)
class PipelineSpec:
    namespace: str
    renderer: ComponentSpec
    streamer: ComponentSpec
    client: ComponentSpec
    exposure: str
    frame_interval_ms: float = 33.333
    frame_bytes: int = 25000
    origin: str | None = None  # control-plane cluster; defaults to renderer's

    def components(self) -> tuple[ComponentSpec, ComponentSpec, ComponentSpec]:
        return (self.renderer, self.streamer, self.client)


@dataclass(frozen=True)
class Frame:
    frame_id: int
    embed_us: int
    size_bytes: int


@dataclass(frozen=True)
class LatencySample:
    frame_id: int
    embed_us: int
    consume_us: int

    @property
    def latency_us(self) -> int:
        return self.consume_us - self.embed_us

    @property
    def latency_ms(self) -> float:
        return eng.us_to_ms(self.latency_us)


@dataclass
class UsageSample:
    cluster: str
    t_us: int
    cpu_pct: float
    mem_pct: float


def end_to_end_latency(frame: Frame, consume_us: int) -> LatencySample:
    """Latency record for a delivered frame: consumption minus embedded stamp."""
    return LatencySample(frame_id=frame.frame_id, embed_us=frame.embed_us,
                         consume_us=consume_us)


class StreamingPipeline:
    """One renderer/streamer/client deployment driven by engine events."""

    def __init__(self, engine: Engine, fed: FederationManager, sched: Scheduler,
                 net: Network, spec: PipelineSpec, collect_stages: bool = False):
        self.engine = engine
        self.fed = fed
        self.sched = sched
        self.net = net
        self.spec = spec
        self.origin = spec.origin or spec.renderer.cluster
        self.pods: dict[str, PodState] = {}
        self.generated = 0
        self.consumed = 0
        self.dropped = 0
        self.in_flight = 0
        self.samples: list[tuple[int, int, int]] = []  # (frame_id, embed, consume)
        self.stages: dict[int, dict[str, int]] = {} if collect_stages else None
        self._end_us: int | None = None
        self._next_id = 0
        self._rng = {role: engine.stream(f"pipeline/{role}")
                     for role in ("render", "buffer", "decode")}

    # -- placement ------------------------------------------------------------

    def spawn(self) -> None:
        """Place all three components; raises Unschedulable when any cannot land."""
        for comp in self.spec.components():
            ns = comp.namespace or self.spec.namespace
            self.pods[comp.role] = self._place(comp, ns)

    def _place(self, comp: ComponentSpec, ns: str) -> PodState:
        name = f"{comp.role}-0"
        if self.spec.exposure == OVERLAY_TUNNEL:
            if comp.cluster == self.origin:
                pod = self.fed.create_pod(self.origin, ns, name, comp.vcpus,
                                          comp.ram_mb, comp.cpu_demand,
                                          comp.mem_demand)
                self.sched.deploy(pod, self.origin, PlacementPolicy.local_first())
                return pod
            twin = self.fed.namespaces.get((comp.cluster, ns))
            if twin is None or twin.twin_of != (self.origin, ns):
                raise Unschedulable(
                    f"{comp.role}: {ns} in {comp.cluster} is not a twin of "
                    f"{self.origin}/{ns}")
            pod = self.fed.create_pod(self.origin, ns, name, comp.vcpus,
                                      comp.ram_mb, comp.cpu_demand,
                                      comp.mem_demand)
            self.sched.deploy(pod, self.origin,
                              PlacementPolicy.offload_target(comp.cluster))
            return pod
        # node-port / l7-proxy: no federation, deploy natively per cluster
        if not self.fed.has_namespace(comp.cluster, ns):
            raise Unschedulable(f"{comp.role}: no namespace {ns} in {comp.cluster}")
        pod = self.fed.create_pod(comp.cluster, ns, name, comp.vcpus,
                                  comp.ram_mb, comp.cpu_demand, comp.mem_demand)
        self.sched.deploy(pod, comp.cluster, PlacementPolicy.local_first())
        return pod

    # -- streaming --------------------------------------------------------------

    def start(self, duration_us: int) -> None:
        """Begin frame generation now, stopping the cadence after `duration_us`."""
        self._end_us = self.engine.now_us + duration_us
        self.engine.schedule(self.engine.now_us, "frame/gen", self._generate)

    def _interval_us(self) -> int:
        return eng.ms_to_us(self.spec.frame_interval_ms)

    def _generate(self) -> None:
        now = self.engine.now_us
        frame = Frame(frame_id=self._next_id, embed_us=now,
                      size_bytes=self.spec.frame_bytes)
        self._next_id += 1
        self.generated += 1
        self.in_flight += 1
        if now + self._interval_us() <= self._end_us:
            self.engine.schedule(now + self._interval_us(), "frame/gen",
                                 self._generate)

        render_us = eng.ms_to_us(self.spec.renderer.delay.sample(self._rng["render"]))
        transit1 = self._transit("renderer", "streamer", STREAM, frame)
        if transit1 is None:
            self._drop(frame.frame_id)
            return
        latency1, via1 = transit1
        if self.stages is not None:
            self.stages[frame.frame_id] = {"render": render_us, "transit1": latency1}
        self.engine.schedule(now + render_us + latency1, "frame/streamer",
                             self._at_streamer, frame, via1)

    def _at_streamer(self, frame: Frame, via: str | None) -> None:
        if self._tunnel_gone(via) or not self._component_live("streamer"):
            self._drop(frame.frame_id)
            return
        buffer_us = eng.ms_to_us(self.spec.streamer.delay.sample(self._rng["buffer"]))
        transit2 = self._transit("streamer", "client", DATAGRAM, frame)
        if transit2 is None:
            self._drop(frame.frame_id)
            return
        latency2, via2 = transit2
        decode_us = eng.ms_to_us(self.spec.client.delay.sample(self._rng["decode"]))
        if self.stages is not None:
            self.stages[frame.frame_id].update(
                buffer=buffer_us, transit2=latency2, decode=decode_us)
        self.engine.schedule(self.engine.now_us + buffer_us + latency2 + decode_us,
                             "frame/consume", self._consume, frame, via2)

    def _consume(self, frame: Frame, via: str | None) -> None:
        if self._tunnel_gone(via) or not self._component_live("client"):
            self._drop(frame.frame_id)
            return
        self.consumed += 1
        self.in_flight -= 1
        self.samples.append((frame.frame_id, frame.embed_us, self.engine.now_us))

    def _tunnel_gone(self, via: str | None) -> bool:
        """Frames still crossing a tunnel die with it on teardown."""
        if via is None:
            return False
        tunnel = self.net.tunnels.get(via)
        return tunnel is None or not tunnel.active

    def _drop(self, frame_id: int) -> None:
        self.dropped += 1
        self.in_flight -= 1

    def _component_live(self, role: str) -> bool:
        pod = self.pods[role]
        return pod.status is PodStatus.RUNNING

    def _transit(self, src_role: str, dst_role: str, transport: str,
                 frame: Frame) -> tuple[int, str | None] | None:
        """(transit us, tunnel crossed) for one leg, or None when lost."""
        src = self.pods[src_role]
        dst = self.pods[dst_role]
        if not (self._component_live(src_role) and self._component_live(dst_role)):
            return None
        src_cluster = src.incarnation_cluster
        try:
            dst_addr = self.fed.resolve_pod_address(src_cluster, dst)
            flow = FlowRecord(src=src.live().address, dst=dst_addr,
                              transport=transport, exposure=self.spec.exposure,
                              payload_bytes=frame.size_bytes)
            record = self.net.transmit(flow, src_cluster=src_cluster)
        except (UnsupportedTransport, Unresolvable):
            return None
        if record.dropped:
            return None
        return record.latency_us, record.via_tunnel

    # -- accounting ----------------------------------------------------------------

    def check_conservation(self) -> None:
        assert self.generated == self.consumed + self.in_flight + self.dropped, (
            f"frames leak: gen={self.generated} consumed={self.consumed} "
            f"in_flight={self.in_flight} dropped={self.dropped}")
        assert self.in_flight >= 0

    def latency_samples(self) -> list[LatencySample]:
        return [LatencySample(*t) for t in self.samples]


class UsageMonitor:
    """Periodic CPU/memory sampling per cluster while the pipeline runs.

    cpu = base + running component demands on the cluster + per-active-tunnel
    endpoint overhead; mem = base + running component demands. Values carry a
    small uniform jitter and are clamped to [0, 100] percent.
    """

    def __init__(self, engine: Engine, fed: FederationManager, net: Network,
                 baselines: dict[str, tuple[float, float]],
                 cadence_us: int = 1_000_000, jitter_pct: float = 0.8):
        self.engine = engine
        self.fed = fed
        self.net = net
        self.baselines = baselines
        self.cadence_us = cadence_us
        self.jitter_pct = jitter_pct
        self.samples: dict[str, list[UsageSample]] = {c: [] for c in baselines}
        self._end_us: int | None = None

    def resource_usage(self, cluster: str) -> UsageSample:
        """Instantaneous sample for one cluster at the current virtual time."""
        if not self.fed.clusters.is_ready(cluster):
            raise NotReady(cluster)
        base_cpu, base_mem = self.baselines[cluster]
        cpu = base_cpu
        mem = base_mem
        for pod in self.fed.pods.values():
            if pod.status is PodStatus.RUNNING and pod.incarnation_cluster == cluster:
                cpu += pod.cpu_demand
                mem += pod.mem_demand
        for tunnel in self.net.tunnels.values():
            if tunnel.active and cluster in (tunnel.cluster_a, tunnel.cluster_b):
                cpu += tunnel.overhead_cpu
        rng = self.engine.stream(f"usage/{cluster}")
        cpu_pct = cpu * 100.0 + rng.uniform(-self.jitter_pct, self.jitter_pct)
        mem_pct = mem * 100.0 + rng.uniform(-self.jitter_pct, self.jitter_pct)
        return UsageSample(cluster=cluster, t_us=self.engine.now_us,
                           cpu_pct=min(max(cpu_pct, 0.0), 100.0),
                           mem_pct=min(max(mem_pct, 0.0), 100.0))

    def start(self, duration_us: int) -> None:
        self._end_us = self.engine.now_us + duration_us
        self.engine.schedule_in(self.cadence_us, "usage/sample", self._tick)

    def _tick(self) -> None:
        for cluster in self.baselines:
            self.samples[cluster].append(self.resource_usage(cluster))
        nxt = self.engine.now_us + self.cadence_us
        if self._end_us is not None and nxt <= self._end_us:
            self.engine.schedule(nxt, "usage/sample", self._tick)

    def cluster_average_series(self) -> list[tuple[int, float, float]]:
        """Per-instant (t, mean cpu, mean mem) across all monitored clusters."""
        if not self.baselines:
            return []
        series = list(zip(*(self.samples[c] for c in sorted(self.baselines))))
        out = []
        for instant in series:
            t = instant[0].t_us
            cpu = sum(s.cpu_pct for s in instant) / len(instant)
            mem = sum(s.mem_pct for s in instant) / len(instant)
            out.append((t, cpu, mem))
        return out
