"""Declarative cluster provisioning: specs, phased reconciliation, readiness reports.

A cluster definition is applied against a provider profile that assigns a
duration distribution to each provisioning step (VM creation, control-plane
bootstrap, worker bootstrap, readiness checks). VM creation and worker
bootstrap run concurrently across nodes, so the phase duration is the max of
the per-node draws; the total therefore scales sub-proportionally with node
count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from . import engine as eng
from .engine import Dist, Engine, constant, uniform
from .errors import DuplicateName, InvalidSize, NotReady


class ClusterPhase(str, Enum):
    PENDING = "Pending"
    PROVISIONING_INFRA = "ProvisioningInfra"
    BOOTSTRAPPING_CONTROL_PLANE = "BootstrappingControlPlane"
    BOOTSTRAPPING_WORKERS = "BootstrappingWorkers"
    READY = "Ready"
    FAILED = "Failed"


# Canonical transition order; Failed is reachable from any non-Ready phase
# but no fault injector drives it yet.
PHASE_ORDER = (
    ClusterPhase.PENDING,
    ClusterPhase.PROVISIONING_INFRA,
    ClusterPhase.BOOTSTRAPPING_CONTROL_PLANE,
    ClusterPhase.BOOTSTRAPPING_WORKERS,
    ClusterPhase.READY,
)


@dataclass(frozen=True)
class Flavor:
    vcpus: int = 2
    ram_mb: int = 4096
    disk_gb: int = 20


DEFAULT_FLAVOR = Flavor()


@dataclass(frozen=True)
class ClusterSpec:
    name: str
    distribution: str  # "kubeadm-like" | "k3s-like"
    node_count: int
    flavor: Flavor
    region: str
    pod_cidr: str


@dataclass(frozen=True)
class ProviderProfile:
    """Step duration distributions, in seconds."""

    distribution: str
    vm_create: Dist
    cp_bootstrap: Dist
    worker_bootstrap: Dist
    readiness_check: Dist


# Calibrated reference profiles. Uniform supports are chosen so that, for
# 1/3/5 nodes, totals always land inside the 150-270 s band, the k3s-like
# total is below the kubeadm-like total at equal size for any pair of seeds
# (disjoint supports per size), and the 5-vs-1 node gap stays under twice
# the worker-bootstrap median.
PROFILES: dict[str, dict[str, ProviderProfile]] = {
    "paper-v1": {
        "kubeadm-like": ProviderProfile(
            distribution="kubeadm-like",
            vm_create=uniform(62, 68),
            cp_bootstrap=uniform(106, 116),
            worker_bootstrap=uniform(40, 48),
            readiness_check=uniform(16, 20),
        ),
        "k3s-like": ProviderProfile(
            distribution="k3s-like",
            vm_create=uniform(62, 68),
            cp_bootstrap=uniform(76, 84),
            worker_bootstrap=uniform(28, 36),
            readiness_check=uniform(12, 16),
        ),
    },
}

KNOWN_DISTRIBUTIONS = ("kubeadm-like", "k3s-like")


def constant_profile(distribution: str, vm: float, cp: float, worker: float,
                     check: float) -> ProviderProfile:
    """Degenerate profile, handy for closed-form timing tests."""
    return ProviderProfile(distribution, constant(vm), constant(cp),
                           constant(worker), constant(check))


@dataclass(frozen=True)
class ProvisionReport:
    cluster: str
    cp_ready_at_us: int
    all_ready_at_us: int

    @property
    def cp_ready_at_ms(self) -> float:
        return eng.us_to_ms(self.cp_ready_at_us)

    @property
    def all_ready_at_ms(self) -> float:
        return eng.us_to_ms(self.all_ready_at_us)


@dataclass
class NodeState:
    node_id: str
    role: str  # "control-plane" | "worker"
    cap_vcpus: float
    cap_ram_mb: float
    alloc_vcpus: float = 0.0
    alloc_ram_mb: float = 0.0

    def free_vcpus(self) -> float:
        return self.cap_vcpus - self.alloc_vcpus

    def free_ram_mb(self) -> float:
        return self.cap_ram_mb - self.alloc_ram_mb


@dataclass
class ClusterState:
    spec: ClusterSpec
    profile: ProviderProfile
    phase: ClusterPhase
    applied_at_us: int
    nodes: list[NodeState]
    # (enter_at_us, phase) transitions still ahead of `phase`
    transitions: list[tuple[int, ClusterPhase]] = field(default_factory=list)
    cp_ready_at_us: int | None = None
    all_ready_at_us: int | None = None
    phase_log: list[ClusterPhase] = field(default_factory=list)


class ClusterManager:
    """Registers cluster specs and reconciles them to Ready on the event clock."""

    def __init__(self, engine: Engine, profiles: dict[str, ProviderProfile] | None = None):
        self.engine = engine
        self.profiles = dict(profiles) if profiles else dict(PROFILES["paper-v1"])
        self.clusters: dict[str, ClusterState] = {}
        self._on_ready: list[Callable[[str], None]] = []
        self._auto_cidr_index = 0

    # -- definition ---------------------------------------------------------

    def generate_cluster_definition(self, distribution: str, node_count: int,
                                    flavor: Flavor = DEFAULT_FLAVOR,
                                    region: str = "local",
                                    name: str | None = None,
                                    pod_cidr: str | None = None) -> ClusterSpec:
        if node_count < 1:
            raise InvalidSize(f"node_count must be >= 1, got {node_count}")
        if name is None:
            name = f"cluster-{len(self.clusters) + 1}"
        if pod_cidr is None:
            pod_cidr = self._next_pod_cidr()
        return ClusterSpec(name=name, distribution=distribution,
                           node_count=node_count, flavor=flavor,
                           region=region, pod_cidr=pod_cidr)

    def _next_pod_cidr(self) -> str:
        # 10.42.0.0/16, 10.43.0.0/16, ... distinct per cluster and clear of
        # the 10.64.0.0/10 translation pool for the first 22 clusters.
        cidr = f"10.{42 + self._auto_cidr_index}.0.0/16"
        self._auto_cidr_index += 1
        return cidr

    # -- reconciliation -----------------------------------------------------

    def apply_cluster(self, spec: ClusterSpec,
                      profile: ProviderProfile | None = None) -> str:
        if spec.name in self.clusters:
            raise DuplicateName(spec.name)
        if profile is None:
            profile = self.profiles[spec.distribution]
        rng = self.engine.stream(f"lifecycle/{spec.name}")
        now = self.engine.now_us

        n = spec.node_count
        vm_done = max(eng.s_to_us(profile.vm_create.sample(rng)) for _ in range(n))
        cp_dur = eng.s_to_us(profile.cp_bootstrap.sample(rng))
        worker_dur = max(
            (eng.s_to_us(profile.worker_bootstrap.sample(rng)) for _ in range(n - 1)),
            default=0,
        )
        checks = [eng.s_to_us(profile.readiness_check.sample(rng)) for _ in range(n)]

        t_infra = now
        t_cp = t_infra + vm_done
        t_workers = t_cp + cp_dur
        t_ready = t_workers + worker_dur + max(checks)
        cp_ready = t_workers + checks[0]  # CP check overlaps worker bootstrap

        nodes = [
            NodeState(
                node_id=f"{spec.name}-node-{i}",
                role="control-plane" if i == 0 else "worker",
                cap_vcpus=float(spec.flavor.vcpus),
                cap_ram_mb=float(spec.flavor.ram_mb),
            )
            for i in range(n)
        ]
        state = ClusterState(
            spec=spec, profile=profile, phase=ClusterPhase.PENDING,
            applied_at_us=now, nodes=nodes,
            transitions=[
                (t_infra, ClusterPhase.PROVISIONING_INFRA),
                (t_cp, ClusterPhase.BOOTSTRAPPING_CONTROL_PLANE),
                (t_workers, ClusterPhase.BOOTSTRAPPING_WORKERS),
                (t_ready, ClusterPhase.READY),
            ],
            cp_ready_at_us=cp_ready,
            phase_log=[ClusterPhase.PENDING],
        )
        self.clusters[spec.name] = state
        for at, _ in state.transitions:
            self.engine.schedule(at, f"lifecycle/{spec.name}", self.reconcile, spec.name)
        return spec.name

    def reconcile(self, name: str) -> ClusterPhase:
        """Advance at most one phase, if its duration timer has elapsed."""
        state = self.clusters[name]
        if state.transitions and state.transitions[0][0] <= self.engine.now_us:
            _, nxt = state.transitions.pop(0)
            state.phase = nxt
            state.phase_log.append(nxt)
            if nxt is ClusterPhase.READY:
                state.all_ready_at_us = self.engine.now_us
                for cb in self._on_ready:
                    cb(name)
        return state.phase

    def on_ready(self, cb: Callable[[str], None]) -> None:
        self._on_ready.append(cb)

    # -- views --------------------------------------------------------------

    def phase(self, name: str) -> ClusterPhase:
        return self.clusters[name].phase

    def is_ready(self, name: str) -> bool:
        return self.clusters[name].phase is ClusterPhase.READY

    def all_ready(self) -> bool:
        return all(s.phase is ClusterPhase.READY for s in self.clusters.values())

    def provisioning_report(self, name: str) -> ProvisionReport:
        state = self.clusters[name]
        if state.phase is not ClusterPhase.READY:
            raise NotReady(f"{name} is {state.phase.value}")
        return ProvisionReport(cluster=name,
                               cp_ready_at_us=state.cp_ready_at_us,
                               all_ready_at_us=state.all_ready_at_us)

    def nodes(self, name: str) -> list[NodeState]:
        return self.clusters[name].nodes

    def physical_free(self, name: str) -> tuple[float, float]:
        """Aggregate free (vcpus, ram_mb) across the cluster's own nodes."""
        vc = sum(n.free_vcpus() for n in self.clusters[name].nodes)
        ram = sum(n.free_ram_mb() for n in self.clusters[name].nodes)
        return vc, ram

    def allocate(self, name: str, node_id: str, vcpus: float, ram_mb: float) -> None:
        node = self._node(name, node_id)
        node.alloc_vcpus += vcpus
        node.alloc_ram_mb += ram_mb

    def release(self, name: str, node_id: str, vcpus: float, ram_mb: float) -> None:
        node = self._node(name, node_id)
        node.alloc_vcpus -= vcpus
        node.alloc_ram_mb -= ram_mb

    def _node(self, name: str, node_id: str) -> NodeState:
        for node in self.clusters[name].nodes:
            if node.node_id == node_id:
                return node
        raise KeyError(node_id)
