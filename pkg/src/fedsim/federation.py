"""Cluster federation: peering handshake, virtual nodes, namespace twinning,
pod offloading, service reflection.

Peering is modeled peer-to-peer: a session walks Discovered -> Authenticating
-> Established on configured handshake delays, with identity verification as
an opaque token exchange. On establishment the provider side's advertised
share of free capacity materializes as a virtual node in the consumer
cluster (both clusters, for bidirectional mode) and an overlay tunnel comes
up on the underlying link.

Execution state is tracked per pod as a list of incarnations, exactly one of
which is non-Terminated at any instant; the local shadow of an offloaded pod
refreshes from its remote incarnation on the periodic sync tick.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .engine import Engine, ms_to_us
from .errors import (
    AlreadyPeered,
    DuplicateName,
    FedsimError,
    InsufficientCapacity,
    InvalidShare,
    NoLink,
    NoSuchNamespace,
    NoSuchService,
    NoSuchSession,
    NotPeered,
    NotReady,
    PolicyForbids,
    SelfPeering,
)
from .lifecycle import ClusterManager
from .network import Network


class PeeringState(str, Enum):
    DISCOVERED = "Discovered"
    AUTHENTICATING = "Authenticating"
    ESTABLISHED = "Established"
    TORN_DOWN = "TornDown"


class PodStatus(str, Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    TERMINATED = "Terminated"


UNIDIRECTIONAL = "unidirectional"
BIDIRECTIONAL = "bidirectional"

POLICY_PODS = "pods"
POLICY_SERVICES = "services"
POLICY_BOTH = "both"
OFFLOAD_POLICIES = (POLICY_PODS, POLICY_SERVICES, POLICY_BOTH)


@dataclass
class PeeringSession:
    session_id: str
    consumer: str
    provider: str
    mode: str
    state: PeeringState
    share: float
    tokens: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ResourceOffer:
    from_cluster: str
    vcpus: float
    ram_mb: float
    share: float


@dataclass
class VirtualNode:
    node_id: str
    host_cluster: str
    backing_cluster: str
    session_id: str
    cap_vcpus: float
    cap_ram_mb: float
    alloc_vcpus: float = 0.0
    alloc_ram_mb: float = 0.0
    pending_offer: ResourceOffer | None = None

    def free_vcpus(self) -> float:
        return self.cap_vcpus - self.alloc_vcpus

    def free_ram_mb(self) -> float:
        return self.cap_ram_mb - self.alloc_ram_mb


@dataclass
class NamespaceInfo:
    cluster: str
    name: str
    twin_of: tuple[str, str] | None = None  # (origin cluster, origin namespace)


@dataclass
class NamespaceOffload:
    origin: str
    namespace: str
    targets: list[str]
    policy: str
    twins: dict[str, str] = field(default_factory=dict)  # target -> twin name
    active: bool = True


@dataclass
class PodIncarnation:
    cluster: str
    status: PodStatus
    node_id: str | None = None
    address: str | None = None


@dataclass
class PodState:
    name: str
    origin: str
    namespace: str
    req_vcpus: float
    req_ram_mb: float
    cpu_demand: float = 0.0  # fraction of hosting cluster capacity
    mem_demand: float = 0.0
    incarnations: list[PodIncarnation] = field(default_factory=list)
    shadow_status: PodStatus | None = None  # set while offloaded
    last_sync_us: int | None = None

    def live(self) -> PodIncarnation:
        for inc in self.incarnations:
            if inc.status is not PodStatus.TERMINATED:
                return inc
        raise FedsimError(f"pod {self.name} has no live incarnation")

    @property
    def status(self) -> PodStatus:
        return self.live().status

    @property
    def incarnation_cluster(self) -> str:
        return self.live().cluster

    @property
    def offloaded(self) -> bool:
        return self.incarnation_cluster != self.origin


@dataclass(frozen=True)
class ShadowPod:
    local_name: str
    origin: str
    incarnation_cluster: str
    status: PodStatus
    last_sync_us: int | None


@dataclass
class ServiceState:
    name: str
    origin: str
    namespace: str
    endpoints: list[str]  # pod names within the same origin namespace


@dataclass
class ReflectedService:
    service: str
    origin: str
    target: str
    remote_endpoints: list[str]

    @property
    def remote_address(self) -> str | None:
        return self.remote_endpoints[0] if self.remote_endpoints else None


class FederationManager:
    """Owns sessions, virtual nodes, namespaces, pods and services."""

    def __init__(self, engine: Engine, clusters: ClusterManager, net: Network,
                 discover_ms: float = 250.0, authenticate_ms: float = 750.0,
                 default_share: float = 0.5, sync_tick_ms: float = 500.0):
        self.engine = engine
        self.clusters = clusters
        self.net = net
        self.discover_us = ms_to_us(discover_ms)
        self.authenticate_us = ms_to_us(authenticate_ms)
        self.default_share = default_share
        self.sync_tick_us = ms_to_us(sync_tick_ms)
        self.sessions: dict[str, PeeringSession] = {}
        self._active_pairs: dict[tuple[str, str], str] = {}
        self.virtual_nodes: dict[str, VirtualNode] = {}  # node_id -> vnode
        self.namespaces: dict[tuple[str, str], NamespaceInfo] = {}
        self.offloads: dict[tuple[str, str], NamespaceOffload] = {}
        self.pods: dict[tuple[str, str, str], PodState] = {}
        self.services: dict[tuple[str, str, str], ServiceState] = {}
        self.reflections: list[ReflectedService] = []
        self._addr_counters: dict[str, int] = {}
        self._session_seq = 0
        self._sync_until_us: int | None = None
        self._sync_running = False
        self._on_established: list[Callable[[PeeringSession], None]] = []

    # -- namespaces and pods --------------------------------------------------

    def create_namespace(self, cluster: str, name: str) -> NamespaceInfo:
        key = (cluster, name)
        if key in self.namespaces:
            raise DuplicateName(f"namespace {name} in {cluster}")
        info = NamespaceInfo(cluster=cluster, name=name)
        self.namespaces[key] = info
        return info

    def has_namespace(self, cluster: str, name: str) -> bool:
        return (cluster, name) in self.namespaces

    def create_pod(self, origin: str, namespace: str, name: str,
                   vcpus: float, ram_mb: float,
                   cpu_demand: float = 0.0, mem_demand: float = 0.0) -> PodState:
        if (origin, namespace) not in self.namespaces:
            raise NoSuchNamespace(f"{namespace} in {origin}")
        key = (origin, namespace, name)
        if key in self.pods:
            raise DuplicateName(f"pod {name} in {origin}/{namespace}")
        pod = PodState(name=name, origin=origin, namespace=namespace,
                       req_vcpus=vcpus, req_ram_mb=ram_mb,
                       cpu_demand=cpu_demand, mem_demand=mem_demand,
                       incarnations=[PodIncarnation(origin, PodStatus.PENDING)])
        self.pods[key] = pod
        return pod

    def create_service(self, origin: str, namespace: str, name: str,
                       endpoints: list[str] | None = None) -> ServiceState:
        if (origin, namespace) not in self.namespaces:
            raise NoSuchNamespace(f"{namespace} in {origin}")
        svc = ServiceState(name=name, origin=origin, namespace=namespace,
                           endpoints=list(endpoints or []))
        self.services[(origin, namespace, name)] = svc
        return svc

    def _next_address(self, cluster: str) -> str:
        net = ipaddress.ip_network(self.clusters.clusters[cluster].spec.pod_cidr)
        idx = self._addr_counters.get(cluster, 0) + 1
        self._addr_counters[cluster] = idx
        return str(net.network_address + 256 + idx)  # skip the .0.x block

    # -- peering ---------------------------------------------------------------

    @staticmethod
    def _pair(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a <= b else (b, a)

    def initiate_peering(self, consumer: str, provider: str,
                         mode: str = UNIDIRECTIONAL,
                         share: float | None = None) -> PeeringSession:
        if consumer == provider:
            raise SelfPeering(consumer)
        for name in (consumer, provider):
            if not self.clusters.is_ready(name):
                raise NotReady(name)
        pair = self._pair(consumer, provider)
        if pair in self._active_pairs:
            raise AlreadyPeered(f"{pair[0]}--{pair[1]}")
        if self.net.link_between(consumer, provider) is None:
            raise NoLink(f"no tunnel possible between {consumer} and {provider}")
        if share is None:
            share = self.default_share
        if not 0.0 < share <= 1.0:
            raise InvalidShare(str(share))
        self._session_seq += 1
        session = PeeringSession(
            session_id=f"peer-{self._session_seq}", consumer=consumer,
            provider=provider, mode=mode, state=PeeringState.DISCOVERED,
            share=share)
        self.sessions[session.session_id] = session
        self._active_pairs[pair] = session.session_id
        self.engine.schedule_in(self.discover_us, f"peering/{session.session_id}",
                                self._authenticate, session.session_id)
        return session

    def _authenticate(self, session_id: str) -> None:
        session = self.sessions[session_id]
        if session.state is not PeeringState.DISCOVERED:
            return
        session.state = PeeringState.AUTHENTICATING
        # identity verification modeled as an opaque token exchange
        session.tokens[session.consumer] = f"token:{session.consumer}:{session_id}"
        session.tokens[session.provider] = f"token:{session.provider}:{session_id}"
        self.engine.schedule_in(self.authenticate_us, f"peering/{session_id}",
                                self._establish, session_id)

    def _establish(self, session_id: str) -> None:
        session = self.sessions[session_id]
        if session.state is not PeeringState.AUTHENTICATING:
            return
        if len(session.tokens) != 2:
            raise FedsimError(f"{session_id}: identity tokens missing")
        session.state = PeeringState.ESTABLISHED
        self.net.establish_tunnel(session_id, session.consumer, session.provider)
        self._materialize_virtual_node(session, host=session.consumer,
                                       backing=session.provider)
        if session.mode == BIDIRECTIONAL:
            self._materialize_virtual_node(session, host=session.provider,
                                           backing=session.consumer)
        for cb in self._on_established:
            cb(session)

    def on_established(self, cb: Callable[[PeeringSession], None]) -> None:
        self._on_established.append(cb)

    def _materialize_virtual_node(self, session: PeeringSession,
                                  host: str, backing: str) -> VirtualNode:
        offer = self.advertise_resources(backing, session.share, _apply=False)
        vnode = VirtualNode(
            node_id=f"{host}-vnode-{backing}",
            host_cluster=host, backing_cluster=backing,
            session_id=session.session_id,
            cap_vcpus=offer.vcpus, cap_ram_mb=offer.ram_mb)
        self.virtual_nodes[vnode.node_id] = vnode
        return vnode

    def session_between(self, a: str, b: str) -> PeeringSession | None:
        sid = self._active_pairs.get(self._pair(a, b))
        return self.sessions[sid] if sid else None

    def established(self, a: str, b: str) -> bool:
        session = self.session_between(a, b)
        return session is not None and session.state is PeeringState.ESTABLISHED

    # -- resource advertisement -------------------------------------------------

    def _reserved_for_consumers(self, provider: str) -> tuple[float, float]:
        vc = sum(v.cap_vcpus for v in self.virtual_nodes.values()
                 if v.backing_cluster == provider)
        ram = sum(v.cap_ram_mb for v in self.virtual_nodes.values()
                  if v.backing_cluster == provider)
        return vc, ram

    def free_capacity(self, provider: str) -> tuple[float, float]:
        """Provider capacity still offerable: own free minus already-reserved."""
        vc, ram = self.clusters.physical_free(provider)
        res_vc, res_ram = self._reserved_for_consumers(provider)
        return max(vc - res_vc, 0.0), max(ram - res_ram, 0.0)

    def advertise_resources(self, provider: str, share: float,
                            _apply: bool = True) -> ResourceOffer:
        if not 0.0 < share <= 1.0:
            raise InvalidShare(str(share))
        free_vc, free_ram = self.free_capacity(provider)
        offer = ResourceOffer(from_cluster=provider, vcpus=share * free_vc,
                              ram_mb=share * free_ram, share=share)
        if _apply:
            # queue for the virtual nodes this provider backs; applied at the
            # next sync tick
            for vnode in self.virtual_nodes.values():
                if vnode.backing_cluster == provider:
                    vnode.pending_offer = offer
        return offer

    # -- namespace offloading ----------------------------------------------------

    def offload_namespace(self, origin: str, namespace: str, targets: list[str],
                          policy: str = POLICY_BOTH) -> NamespaceOffload:
        if policy not in OFFLOAD_POLICIES:
            raise ValueError(policy)
        if (origin, namespace) not in self.namespaces:
            raise NoSuchNamespace(f"{namespace} in {origin}")
        for target in targets:
            if not self.established(origin, target):
                raise NotPeered(f"{origin} and {target}")
        key = (origin, namespace)
        if key in self.offloads and self.offloads[key].active:
            raise DuplicateName(f"offload of {origin}/{namespace}")
        offload = NamespaceOffload(origin=origin, namespace=namespace,
                                   targets=list(targets), policy=policy)
        for target in targets:
            twin_key = (target, namespace)
            if twin_key in self.namespaces:
                raise DuplicateName(f"namespace {namespace} already in {target}")
            self.namespaces[twin_key] = NamespaceInfo(
                cluster=target, name=namespace, twin_of=(origin, namespace))
            offload.twins[target] = namespace
        self.offloads[key] = offload
        return offload

    def unoffload_namespace(self, origin: str, namespace: str) -> None:
        key = (origin, namespace)
        offload = self.offloads.get(key)
        if offload is None or not offload.active:
            raise NoSuchNamespace(f"no active offload of {namespace} from {origin}")
        for target in list(offload.twins):
            self._withdraw_twin(offload, target)
        offload.active = False

    def _withdraw_twin(self, offload: NamespaceOffload, target: str) -> None:
        # evict pods incarnated through this twin, then drop the namespace
        for pod in self.pods.values():
            if (pod.origin == offload.origin and pod.namespace == offload.namespace
                    and pod.offloaded and pod.incarnation_cluster == target):
                self._evict_pod(pod)
        self.reflections = [r for r in self.reflections
                            if not (r.origin == offload.origin and r.target == target)]
        twin_name = offload.twins.pop(target)
        del self.namespaces[(target, twin_name)]

    def offload_policy_allows(self, origin: str, namespace: str, target: str,
                              what: str) -> bool:
        offload = self.offloads.get((origin, namespace))
        if offload is None or not offload.active or target not in offload.targets:
            return False
        if what == "pods":
            return offload.policy in (POLICY_PODS, POLICY_BOTH)
        return offload.policy in (POLICY_SERVICES, POLICY_BOTH)

    # -- pod offloading -----------------------------------------------------------

    def place_local(self, pod: PodState, node_id: str) -> None:
        live = pod.live()
        if live.status is not PodStatus.PENDING or live.cluster != pod.origin:
            raise FedsimError(f"pod {pod.name} is not pending in its origin")
        self.clusters.allocate(pod.origin, node_id, pod.req_vcpus, pod.req_ram_mb)
        live.status = PodStatus.RUNNING
        live.node_id = node_id
        live.address = self._next_address(pod.origin)

    def offload_pod(self, pod: PodState, vnode: VirtualNode) -> ShadowPod:
        target = vnode.backing_cluster
        if not self.offload_policy_allows(pod.origin, pod.namespace, target, "pods"):
            raise PolicyForbids(
                f"{pod.origin}/{pod.namespace} does not offload pods to {target}")
        if vnode.free_vcpus() < pod.req_vcpus or vnode.free_ram_mb() < pod.req_ram_mb:
            raise InsufficientCapacity(
                f"{vnode.node_id}: need {pod.req_vcpus} vcpus / {pod.req_ram_mb} MB")
        live = pod.live()
        if live.status is not PodStatus.PENDING:
            raise FedsimError(f"pod {pod.name} already placed")
        vnode.alloc_vcpus += pod.req_vcpus
        vnode.alloc_ram_mb += pod.req_ram_mb
        live.status = PodStatus.TERMINATED
        pod.incarnations.append(PodIncarnation(
            cluster=target, status=PodStatus.RUNNING, node_id=vnode.node_id,
            address=self._next_address(target)))
        # the local shadow learns the remote status at the next sync tick
        pod.shadow_status = PodStatus.PENDING
        pod.last_sync_us = None
        return self.shadow_of(pod)

    def shadow_of(self, pod: PodState) -> ShadowPod:
        return ShadowPod(local_name=pod.name, origin=pod.origin,
                         incarnation_cluster=pod.incarnation_cluster,
                         status=pod.shadow_status or pod.status,
                         last_sync_us=pod.last_sync_us)

    def _evict_pod(self, pod: PodState) -> None:
        """Terminate the remote incarnation and move the pod back to Pending."""
        live = pod.live()
        vnode = self.virtual_nodes.get(live.node_id or "")
        if vnode is not None:
            vnode.alloc_vcpus -= pod.req_vcpus
            vnode.alloc_ram_mb -= pod.req_ram_mb
        live.status = PodStatus.TERMINATED
        pod.incarnations.append(PodIncarnation(pod.origin, PodStatus.PENDING))
        pod.shadow_status = None
        pod.last_sync_us = None

    # -- service reflection ---------------------------------------------------------

    def reflect_service(self, origin: str, namespace: str, service: str,
                        session: PeeringSession) -> ReflectedService:
        svc = self.services.get((origin, namespace, service))
        if svc is None:
            raise NoSuchService(f"{service} in {origin}/{namespace}")
        target = session.provider if session.consumer == origin else session.consumer
        if not self.offload_policy_allows(origin, namespace, target, "services"):
            raise PolicyForbids(
                f"{origin}/{namespace} does not reflect services to {target}")
        tunnel = self.net.tunnel_for_session(session.session_id)
        if tunnel is None:
            raise NoSuchSession(session.session_id)
        remote_endpoints = []
        for pod_name in svc.endpoints:
            pod = self.pods.get((origin, namespace, pod_name))
            if pod is None or pod.status is not PodStatus.RUNNING:
                continue
            addr = pod.live().address
            if pod.incarnation_cluster == origin:
                addr = self.net.translate_address(tunnel, origin, addr)
            remote_endpoints.append(addr)
        reflection = ReflectedService(service=service, origin=origin,
                                      target=target,
                                      remote_endpoints=remote_endpoints)
        self.reflections.append(reflection)
        return reflection

    def resolve_pod_address(self, viewer: str, pod: PodState) -> str:
        """Address at which `viewer` reaches the pod's live incarnation."""
        live = pod.live()
        if live.address is None:
            raise FedsimError(f"pod {pod.name} has no address yet")
        if live.cluster == viewer:
            return live.address
        tunnel = self.net.tunnel_between(viewer, live.cluster)
        if tunnel is not None and tunnel.active:
            return self.net.translate_address(tunnel, live.cluster, live.address)
        return live.address  # node-port style: the raw (publicly routed) address

    # -- teardown ----------------------------------------------------------------

    def teardown_peering(self, session_id: str) -> None:
        session = self.sessions.get(session_id)
        if session is None or session.state is PeeringState.TORN_DOWN:
            raise NoSuchSession(session_id)
        if session.state is not PeeringState.ESTABLISHED:
            raise FedsimError(f"{session_id} is {session.state.value}, not Established")
        doomed = [v for v in self.virtual_nodes.values()
                  if v.session_id == session_id]
        for vnode in doomed:
            for pod in self.pods.values():
                if (pod.status is PodStatus.RUNNING
                        and pod.live().node_id == vnode.node_id):
                    self._evict_pod(pod)
            del self.virtual_nodes[vnode.node_id]
        pair = {session.consumer, session.provider}
        for key, offload in self.offloads.items():
            if not offload.active or offload.origin not in pair:
                continue
            other = (pair - {offload.origin}).pop()
            if other in offload.twins:
                self._withdraw_twin(offload, other)
                offload.targets.remove(other)
                if not offload.targets:
                    offload.active = False
        tunnel = self.net.tunnel_for_session(session_id)
        if tunnel is not None:
            self.net.close_tunnel(tunnel.tunnel_id)
        session.state = PeeringState.TORN_DOWN
        del self._active_pairs[self._pair(session.consumer, session.provider)]

    # -- sync ticks ----------------------------------------------------------------

    def start_sync_ticks(self, until_us: int | None = None) -> None:
        self._sync_until_us = until_us
        if not self._sync_running:
            self._sync_running = True
            self.engine.schedule_in(self.sync_tick_us, "fed/sync", self._sync_tick)

    def stop_sync_ticks(self) -> None:
        self._sync_running = False

    def _sync_tick(self) -> None:
        if not self._sync_running:
            return
        now = self.engine.now_us
        for vnode in self.virtual_nodes.values():
            if vnode.pending_offer is not None:
                # never shrink below what is already allocated
                vnode.cap_vcpus = max(vnode.pending_offer.vcpus, vnode.alloc_vcpus)
                vnode.cap_ram_mb = max(vnode.pending_offer.ram_mb, vnode.alloc_ram_mb)
                vnode.pending_offer = None
        for pod in self.pods.values():
            if pod.offloaded:
                pod.shadow_status = pod.status
                pod.last_sync_us = now
        if self._sync_until_us is None or now + self.sync_tick_us <= self._sync_until_us:
            self.engine.schedule_in(self.sync_tick_us, "fed/sync", self._sync_tick)
        else:
            self._sync_running = False

    # -- invariants (test support) ---------------------------------------------------

    def check_invariants(self) -> None:
        for vnode in self.virtual_nodes.values():
            session = self.sessions[vnode.session_id]
            assert session.state is PeeringState.ESTABLISHED, \
                f"{vnode.node_id} outlives its session"
            if vnode.host_cluster == session.provider:
                assert session.mode == BIDIRECTIONAL, \
                    f"{vnode.node_id} hosted on provider side of unidirectional session"
            assert vnode.alloc_vcpus <= vnode.cap_vcpus + 1e-9, vnode.node_id
            assert vnode.alloc_ram_mb <= vnode.cap_ram_mb + 1e-9, vnode.node_id
        for session in self.sessions.values():
            if session.state is PeeringState.ESTABLISHED:
                hosts = [v.host_cluster for v in self.virtual_nodes.values()
                         if v.session_id == session.session_id]
                expected = {session.consumer, session.provider} \
                    if session.mode == BIDIRECTIONAL else {session.consumer}
                assert set(hosts) == expected and len(hosts) == len(expected), \
                    f"{session.session_id} virtual nodes {hosts}"
        for pod in self.pods.values():
            live = [i for i in pod.incarnations if i.status is not PodStatus.TERMINATED]
            assert len(live) == 1, f"pod {pod.name}: {len(live)} live incarnations"
        for offload in self.offloads.values():
            if offload.active:
                for target in offload.targets:
                    twin = self.namespaces.get((target, offload.twins[target]))
                    assert twin is not None and twin.twin_of == (
                        offload.origin, offload.namespace)
            else:
                assert not offload.twins, "inactive offload retains twins"
