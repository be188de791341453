"""Scenario config document (version ``fedsim/v1``): schema, parsing, validation.

A scenario is a YAML mapping that names the clusters, topology, peerings,
offloads and the streaming pipeline for one run. Every validation failure
raises ConfigError carrying the dotted path of the offending field.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .engine import Dist, constant, lognormal, uniform
from .errors import ConfigError, InvalidDistribution
from .lifecycle import Flavor, KNOWN_DISTRIBUTIONS, PROFILES, ProviderProfile
from .network import EXPOSURES

CONFIG_VERSION = "fedsim/v1"
SEED_ENV_VAR = "FEDSIM_SEED"


def parse_dist(value, path: str) -> Dist:
    """Distribution spec from YAML: bare number, {constant: v},
    {uniform: [lo, hi]} or {lognormal: {median: m, sigma: s}}."""
    try:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return constant(float(value))
        if isinstance(value, dict) and len(value) == 1:
            kind, params = next(iter(value.items()))
            if kind == "constant":
                return constant(float(params))
            if kind == "uniform":
                lo, hi = params
                return uniform(float(lo), float(hi))
            if kind == "lognormal":
                return lognormal(float(params["median"]), float(params["sigma"]))
    except InvalidDistribution as exc:
        raise ConfigError(path, str(exc)) from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(path, f"malformed distribution: {value!r}") from exc
    raise ConfigError(path, f"unknown distribution spec: {value!r}")


@dataclass(frozen=True)
class ClusterConfig:
    name: str
    distribution: str = "kubeadm-like"
    node_count: int = 1
    flavor: Flavor = Flavor()
    region: str = "local"
    pod_cidr: str | None = None
    base_cpu: float = 0.0  # idle CPU fraction of the cluster
    base_mem: float = 0.0


@dataclass(frozen=True)
class LinkConfig:
    a: str
    b: str
    latency: Dist
    bandwidth_mbps: float | None = None
    loss_rate: float = 0.0


@dataclass(frozen=True)
class PeeringConfig:
    consumer: str
    provider: str
    mode: str = "unidirectional"
    share: float = 0.5


@dataclass(frozen=True)
class OffloadConfig:
    origin: str
    namespace: str
    targets: tuple[str, ...] = ()
    policy: str = "both"


@dataclass(frozen=True)
class ComponentConfig:
    cluster: str
    delay: Dist
    cpu_demand: float = 0.0
    mem_demand: float = 0.0
    vcpus: float = 0.5
    ram_mb: float = 512.0


@dataclass(frozen=True)
class PipelineConfig:
    namespace: str
    renderer: ComponentConfig
    streamer: ComponentConfig
    client: ComponentConfig
    frame_interval_ms: float = 33.333
    frame_bytes: int = 25000


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    duration_min: float
    exposure: str
    clusters: list[ClusterConfig]
    namespaces: list[tuple[str, str]]  # (cluster, namespace)
    links: list[LinkConfig] = field(default_factory=list)
    peerings: list[PeeringConfig] = field(default_factory=list)
    offloads: list[OffloadConfig] = field(default_factory=list)
    pipeline: PipelineConfig | None = None
    profiles: dict[str, ProviderProfile] = field(default_factory=lambda: dict(PROFILES["paper-v1"]))
    warmup_s: float = 10.0
    sample_cadence_ms: float = 1000.0
    sync_tick_ms: float = 500.0
    qos_threshold_ms: float = 15.0
    local_latency: Dist = field(default_factory=lambda: constant(0.5))
    tunnel_overhead_ms: float = 1.5
    tunnel_overhead_cpu: float = 0.021
    nodeport_service_ms: float = 10.0
    proxy_side_ms: float = 5.0
    discover_ms: float = 250.0
    authenticate_ms: float = 750.0

    def cluster_names(self) -> list[str]:
        return [c.name for c in self.clusters]


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return mapping[key]


def _parse_cluster(raw: dict, path: str) -> ClusterConfig:
    name = _require(raw, "name", path)
    distribution = raw.get("distribution", "kubeadm-like")
    if distribution not in KNOWN_DISTRIBUTIONS:
        raise ConfigError(f"{path}.distribution", f"unknown distribution {distribution!r}")
    node_count = int(raw.get("node_count", 1))
    if node_count < 1:
        raise ConfigError(f"{path}.node_count", "must be >= 1")
    flavor_raw = raw.get("flavor", {})
    flavor = Flavor(vcpus=int(flavor_raw.get("vcpus", 2)),
                    ram_mb=int(flavor_raw.get("ram_mb", 4096)),
                    disk_gb=int(flavor_raw.get("disk_gb", 20)))
    return ClusterConfig(name=name, distribution=distribution,
                         node_count=node_count, flavor=flavor,
                         region=raw.get("region", "local"),
                         pod_cidr=raw.get("pod_cidr"),
                         base_cpu=float(raw.get("base_cpu", 0.0)),
                         base_mem=float(raw.get("base_mem", 0.0)))


def _parse_component(raw: dict, path: str, known: set[str],
                     delay_key: str) -> ComponentConfig:
    cluster = _require(raw, "cluster", path)
    if cluster not in known:
        raise ConfigError(f"{path}.cluster", f"unknown cluster {cluster!r}")
    delay = parse_dist(raw.get(delay_key, 0.0), f"{path}.{delay_key}")
    return ComponentConfig(cluster=cluster, delay=delay,
                           cpu_demand=float(raw.get("cpu_demand", 0.0)),
                           mem_demand=float(raw.get("mem_demand", 0.0)),
                           vcpus=float(raw.get("vcpus", 0.5)),
                           ram_mb=float(raw.get("ram_mb", 512.0)))


def _parse_profiles(raw, path: str) -> dict[str, ProviderProfile]:
    if raw is None:
        return dict(PROFILES["paper-v1"])
    if isinstance(raw, str):
        if raw not in PROFILES:
            raise ConfigError(path, f"unknown profile {raw!r}")
        return dict(PROFILES[raw])
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected profile name or mapping")
    profiles = {}
    for distribution, steps in raw.items():
        if distribution not in KNOWN_DISTRIBUTIONS:
            raise ConfigError(f"{path}.{distribution}", "unknown distribution")
        profiles[distribution] = ProviderProfile(
            distribution=distribution,
            vm_create=parse_dist(_require(steps, "vm_create_s", f"{path}.{distribution}"),
                                 f"{path}.{distribution}.vm_create_s"),
            cp_bootstrap=parse_dist(_require(steps, "cp_bootstrap_s", f"{path}.{distribution}"),
                                    f"{path}.{distribution}.cp_bootstrap_s"),
            worker_bootstrap=parse_dist(
                _require(steps, "worker_bootstrap_s", f"{path}.{distribution}"),
                f"{path}.{distribution}.worker_bootstrap_s"),
            readiness_check=parse_dist(
                _require(steps, "readiness_check_s", f"{path}.{distribution}"),
                f"{path}.{distribution}.readiness_check_s"),
        )
    return profiles


def parse_config(doc: dict, apply_env: bool = True) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "scenario document must be a mapping")
    version = _require(doc, "version", "")
    if version != CONFIG_VERSION:
        raise ConfigError("version", f"expected {CONFIG_VERSION!r}, got {version!r}")
    name = str(_require(doc, "name", ""))
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed", "must be an integer")
    if apply_env and os.environ.get(SEED_ENV_VAR):
        try:
            seed = int(os.environ[SEED_ENV_VAR])
        except ValueError as exc:
            raise ConfigError("seed", f"bad {SEED_ENV_VAR}: "
                              f"{os.environ[SEED_ENV_VAR]!r}") from exc
    duration_min = float(_require(doc, "duration_min", ""))
    if duration_min <= 0:
        raise ConfigError("duration_min", "must be positive")
    exposure = doc.get("exposure", "overlay-tunnel")
    if exposure not in EXPOSURES:
        raise ConfigError("exposure", f"unknown exposure {exposure!r}")

    clusters_raw = _require(doc, "clusters", "")
    if not clusters_raw:
        raise ConfigError("clusters", "at least one cluster required")
    clusters = [_parse_cluster(c, f"clusters[{i}]") for i, c in enumerate(clusters_raw)]
    known = {c.name for c in clusters}
    if len(known) != len(clusters):
        raise ConfigError("clusters", "cluster names must be unique")

    namespaces = []
    for i, raw in enumerate(doc.get("namespaces", [])):
        cluster = _require(raw, "cluster", f"namespaces[{i}]")
        if cluster not in known:
            raise ConfigError(f"namespaces[{i}].cluster", f"unknown cluster {cluster!r}")
        namespaces.append((cluster, _require(raw, "name", f"namespaces[{i}]")))

    links = []
    for i, raw in enumerate(doc.get("links", [])):
        path = f"links[{i}]"
        a, b = _require(raw, "a", path), _require(raw, "b", path)
        for endpoint, key in ((a, "a"), (b, "b")):
            if endpoint not in known:
                raise ConfigError(f"{path}.{key}", f"unknown cluster {endpoint!r}")
        loss = float(raw.get("loss_rate", 0.0))
        if not 0.0 <= loss < 1.0:
            raise ConfigError(f"{path}.loss_rate", "must be in [0, 1)")
        bw = raw.get("bandwidth_mbps")
        links.append(LinkConfig(a=a, b=b,
                                latency=parse_dist(_require(raw, "latency_ms", path),
                                                   f"{path}.latency_ms"),
                                bandwidth_mbps=None if bw is None else float(bw),
                                loss_rate=loss))

    peerings = []
    for i, raw in enumerate(doc.get("peerings", [])):
        path = f"peerings[{i}]"
        consumer = _require(raw, "consumer", path)
        provider = _require(raw, "provider", path)
        for endpoint, key in ((consumer, "consumer"), (provider, "provider")):
            if endpoint not in known:
                raise ConfigError(f"{path}.{key}", f"unknown cluster {endpoint!r}")
        mode = raw.get("mode", "unidirectional")
        if mode not in ("unidirectional", "bidirectional"):
            raise ConfigError(f"{path}.mode", f"unknown mode {mode!r}")
        share = float(raw.get("share", 0.5))
        if not 0.0 < share <= 1.0:
            raise ConfigError(f"{path}.share", "must be in (0, 1]")
        peerings.append(PeeringConfig(consumer=consumer, provider=provider,
                                      mode=mode, share=share))

    offloads = []
    for i, raw in enumerate(doc.get("offloads", [])):
        path = f"offloads[{i}]"
        origin = _require(raw, "origin", path)
        if origin not in known:
            raise ConfigError(f"{path}.origin", f"unknown cluster {origin!r}")
        targets = tuple(_require(raw, "targets", path))
        for t in targets:
            if t not in known:
                raise ConfigError(f"{path}.targets", f"unknown cluster {t!r}")
        policy = raw.get("policy", "both")
        if policy not in ("pods", "services", "both"):
            raise ConfigError(f"{path}.policy", f"unknown policy {policy!r}")
        offloads.append(OffloadConfig(origin=origin,
                                      namespace=_require(raw, "namespace", path),
                                      targets=targets, policy=policy))

    pipeline = None
    if "pipeline" in doc:
        raw = doc["pipeline"]
        ns = _require(raw, "namespace", "pipeline")
        pipeline = PipelineConfig(
            namespace=ns,
            renderer=_parse_component(_require(raw, "renderer", "pipeline"),
                                      "pipeline.renderer", known, "process_delay_ms"),
            streamer=_parse_component(_require(raw, "streamer", "pipeline"),
                                      "pipeline.streamer", known, "buffer_delay_ms"),
            client=_parse_component(_require(raw, "client", "pipeline"),
                                    "pipeline.client", known, "decode_delay_ms"),
            frame_interval_ms=float(raw.get("frame_interval_ms", 33.333)),
            frame_bytes=int(raw.get("frame_bytes", 25000)),
        )
        if pipeline.frame_interval_ms <= 0:
            raise ConfigError("pipeline.frame_interval_ms", "must be positive")
        if pipeline.frame_bytes <= 0:
            raise ConfigError("pipeline.frame_bytes", "must be positive")

    warmup_s = float(doc.get("warmup_s", 10.0))
    if warmup_s < 0:
        raise ConfigError("warmup_s", "must be >= 0")

    return ScenarioConfig(
        name=name, seed=seed, duration_min=duration_min, exposure=exposure,
        clusters=clusters, namespaces=namespaces, links=links,
        peerings=peerings, offloads=offloads, pipeline=pipeline,
        profiles=_parse_profiles(doc.get("provider_profile"), "provider_profile"),
        warmup_s=warmup_s,
        sample_cadence_ms=float(doc.get("sample_cadence_ms", 1000.0)),
        sync_tick_ms=float(doc.get("sync_tick_ms", 500.0)),
        qos_threshold_ms=float(doc.get("qos_threshold_ms", 15.0)),
        local_latency=parse_dist(doc.get("local_latency_ms", 0.5), "local_latency_ms"),
        tunnel_overhead_ms=float(doc.get("tunnel_overhead_ms", 1.5)),
        tunnel_overhead_cpu=float(doc.get("tunnel_overhead_cpu", 0.021)),
        nodeport_service_ms=float(doc.get("nodeport_service_ms", 10.0)),
        proxy_side_ms=float(doc.get("proxy_side_ms", 5.0)),
        discover_ms=float(doc.get("discover_ms", 250.0)),
        authenticate_ms=float(doc.get("authenticate_ms", 750.0)),
    )


def load_config(path: str, apply_env: bool = True) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return parse_config(doc, apply_env=apply_env)
