"""Simulated network substrate: links, overlay tunnels with CIDR remapping, transmit.

Cluster pod CIDRs may collide (that is the point of the overlay); translated
prefixes never do. Each tunnel maps each side's pod CIDR onto a fresh prefix
carved first-fit from a reserved pool, so any address is unambiguously either
a real cluster address or one tunnel's translated view of the other side.

Three exposure modes route cross-cluster traffic:
  overlay-tunnel  dedicated tunnel; per-traversal overhead_ms
  node-port       direct link; per-traversal service penalty, no tunnel
  l7-proxy        stream-only relaying with a per-side proxy delay
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field

from . import engine as eng
from .engine import Dist, Engine, constant
from .errors import (
    DuplicateLink,
    ExhaustedPrefixSpace,
    NoLink,
    SelfLink,
    UnmappedAddress,
    UnsupportedTransport,
    Unresolvable,
)

DATAGRAM = "datagram"
STREAM = "stream"

OVERLAY_TUNNEL = "overlay-tunnel"
NODE_PORT = "node-port"
L7_PROXY = "l7-proxy"

EXPOSURES = (OVERLAY_TUNNEL, NODE_PORT, L7_PROXY)
TRANSPORTS = (DATAGRAM, STREAM)


@dataclass
class Link:
    a: str
    b: str
    one_way_latency: Dist  # ms
    bandwidth_mbps: float | None  # None = no serialization term
    loss_rate: float

    def serialization_us(self, payload_bytes: int) -> int:
        if self.bandwidth_mbps is None:
            return 0
        return round(payload_bytes * 8 / self.bandwidth_mbps)  # bits / (Mbit/s) = us


@dataclass
class Tunnel:
    tunnel_id: str
    session_id: str
    cluster_a: str
    cluster_b: str
    link_key: tuple[str, str]
    # origin cluster -> (origin network, translated network)
    remap: dict[str, tuple[ipaddress.IPv4Network, ipaddress.IPv4Network]]
    overhead_ms: float
    overhead_cpu: float
    active: bool = True


@dataclass(frozen=True)
class FlowRecord:
    src: str  # pod address
    dst: str  # service / pod address, possibly tunnel-translated
    transport: str
    exposure: str
    payload_bytes: int

    def __post_init__(self):
        if self.payload_bytes <= 0:
            raise ValueError("payload_bytes must be positive")


@dataclass
class DeliveryRecord:
    sent_at_us: int
    delivered_at_us: int | None  # None = dropped
    hops: list[tuple[str, int]] = field(default_factory=list)
    via_tunnel: str | None = None

    @property
    def dropped(self) -> bool:
        return self.delivered_at_us is None

    @property
    def latency_us(self) -> int | None:
        if self.delivered_at_us is None:
            return None
        return self.delivered_at_us - self.sent_at_us

    @property
    def latency_ms(self) -> float | None:
        lat = self.latency_us
        return None if lat is None else eng.us_to_ms(lat)


class Network:
    """Topology registry plus the address translation and transmit machinery."""

    def __init__(self, engine: Engine, cluster_cidrs: dict[str, str] | None = None,
                 local_latency: Dist | None = None,
                 translation_pool: str = "10.64.0.0/10",
                 tunnel_overhead_ms: float = 1.5,
                 tunnel_overhead_cpu: float = 0.021,
                 nodeport_service_ms: float = 10.0,
                 proxy_side_ms: float = 5.0):
        self.engine = engine
        self.cluster_cidrs: dict[str, ipaddress.IPv4Network] = {}
        self.local_latency = local_latency if local_latency is not None else constant(0.5)
        self.pool = ipaddress.ip_network(translation_pool)
        self.tunnel_overhead_ms = tunnel_overhead_ms
        self.tunnel_overhead_cpu = tunnel_overhead_cpu
        self.nodeport_service_ms = nodeport_service_ms
        self.proxy_side_ms = proxy_side_ms
        self.links: dict[tuple[str, str], Link] = {}
        self.tunnels: dict[str, Tunnel] = {}
        self._tunnel_seq = 0
        for name, cidr in (cluster_cidrs or {}).items():
            self.register_cluster(name, cidr)

    # -- topology -----------------------------------------------------------

    def register_cluster(self, name: str, pod_cidr: str) -> None:
        self.cluster_cidrs[name] = ipaddress.ip_network(pod_cidr)

    @staticmethod
    def _pair(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a <= b else (b, a)

    def add_link(self, a: str, b: str, one_way_latency: Dist,
                 bandwidth_mbps: float | None = None,
                 loss_rate: float = 0.0) -> Link:
        if a == b:
            raise SelfLink(a)
        key = self._pair(a, b)
        if key in self.links:
            raise DuplicateLink(f"{key[0]}--{key[1]}")
        if not 0.0 <= loss_rate < 1.0:
            raise ValueError("loss_rate must be in [0, 1)")
        link = Link(a=a, b=b, one_way_latency=one_way_latency,
                    bandwidth_mbps=bandwidth_mbps, loss_rate=loss_rate)
        self.links[key] = link
        return link

    def link_between(self, a: str, b: str) -> Link | None:
        return self.links.get(self._pair(a, b))

    # -- tunnels and translation --------------------------------------------

    def establish_tunnel(self, session_id: str, cluster_a: str, cluster_b: str,
                         overhead_ms: float | None = None,
                         overhead_cpu: float | None = None) -> Tunnel:
        link = self.link_between(cluster_a, cluster_b)
        if link is None:
            raise NoLink(f"{cluster_a}--{cluster_b}")
        remap = {}
        in_progress: list[ipaddress.IPv4Network] = []
        for origin in (cluster_a, cluster_b):
            origin_net = self.cluster_cidrs[origin]
            translated = self._allocate_prefix(origin_net.prefixlen, in_progress)
            in_progress.append(translated)
            remap[origin] = (origin_net, translated)
        self._tunnel_seq += 1
        tunnel = Tunnel(
            tunnel_id=f"tun-{self._tunnel_seq}",
            session_id=session_id,
            cluster_a=cluster_a,
            cluster_b=cluster_b,
            link_key=self._pair(cluster_a, cluster_b),
            remap=remap,
            overhead_ms=self.tunnel_overhead_ms if overhead_ms is None else overhead_ms,
            overhead_cpu=self.tunnel_overhead_cpu if overhead_cpu is None else overhead_cpu,
        )
        self.tunnels[tunnel.tunnel_id] = tunnel
        return tunnel

    def close_tunnel(self, tunnel_id: str) -> None:
        tunnel = self.tunnels.pop(tunnel_id)
        tunnel.active = False

    def _allocated_prefixes(self) -> list[ipaddress.IPv4Network]:
        return [translated for t in self.tunnels.values()
                for _, translated in t.remap.values()]

    def _allocate_prefix(self, prefixlen: int,
                         in_progress: list[ipaddress.IPv4Network] = ()) -> ipaddress.IPv4Network:
        """First-fit subnet of the pool disjoint from every cluster CIDR and
        every already-translated prefix."""
        if prefixlen < self.pool.prefixlen:
            raise ExhaustedPrefixSpace(
                f"/{prefixlen} does not fit in pool {self.pool}")
        taken = (list(self.cluster_cidrs.values()) + self._allocated_prefixes()
                 + list(in_progress))
        for candidate in self.pool.subnets(new_prefix=prefixlen):
            if not any(candidate.overlaps(net) for net in taken):
                return candidate
        raise ExhaustedPrefixSpace(f"no free /{prefixlen} left in {self.pool}")

    def tunnel_for_session(self, session_id: str) -> Tunnel | None:
        for t in self.tunnels.values():
            if t.session_id == session_id:
                return t
        return None

    def tunnel_between(self, a: str, b: str) -> Tunnel | None:
        key = self._pair(a, b)
        for t in self.tunnels.values():
            if t.link_key == key:
                return t
        return None

    @staticmethod
    def translate_address(tunnel: Tunnel, origin_cluster: str, address: str) -> str:
        """Origin-side address -> its translated form on the remote side."""
        origin_net, translated_net = tunnel.remap[origin_cluster]
        addr = ipaddress.ip_address(address)
        if addr not in origin_net:
            raise UnmappedAddress(f"{address} not in {origin_net}")
        suffix = int(addr) - int(origin_net.network_address)
        return str(translated_net.network_address + suffix)

    @staticmethod
    def reverse_translate(tunnel: Tunnel, origin_cluster: str, address: str) -> str:
        """Translated form back to the origin-side address; inverse of translate."""
        origin_net, translated_net = tunnel.remap[origin_cluster]
        addr = ipaddress.ip_address(address)
        if addr not in translated_net:
            raise UnmappedAddress(f"{address} not in {translated_net}")
        suffix = int(addr) - int(translated_net.network_address)
        return str(origin_net.network_address + suffix)

    # -- resolution and transmit ---------------------------------------------

    def locate(self, address: str) -> tuple[str, Tunnel | None]:
        """(cluster owning the real address, tunnel if `address` is translated).

        Translated prefixes are globally disjoint, so a translated address is
        unambiguous. Raw cluster addresses can collide when two clusters share
        a pod CIDR; the first registered cluster wins, so callers that know the
        sender's location should pass it to transmit() instead of relying on
        this lookup.
        """
        addr = ipaddress.ip_address(address)
        for tunnel in self.tunnels.values():
            for origin, (_, translated) in tunnel.remap.items():
                if addr in translated:
                    return origin, tunnel
        for name, net in self.cluster_cidrs.items():
            if addr in net:
                return name, None
        raise Unresolvable(address)

    def transmit(self, flow: FlowRecord, src_cluster: str | None = None) -> DeliveryRecord:
        """Compute the delivery outcome for one flow, sampling link noise.

        Pure computation against the current topology; the caller schedules the
        arrival event at `delivered_at_us`.
        """
        if flow.transport not in TRANSPORTS:
            raise ValueError(flow.transport)
        if flow.exposure not in EXPOSURES:
            raise ValueError(flow.exposure)
        if flow.exposure == L7_PROXY and flow.transport == DATAGRAM:
            raise UnsupportedTransport("datagram flows cannot cross an l7-proxy")

        if src_cluster is None:
            src_cluster, src_tunnel = self.locate(flow.src)
            if src_tunnel is not None:
                raise Unresolvable(f"source {flow.src} is a translated address")
        dst_cluster, dst_tunnel = self.locate(flow.dst)
        if dst_tunnel is not None and flow.exposure != OVERLAY_TUNNEL:
            raise Unresolvable(
                f"{flow.dst} is tunnel-translated but exposure is {flow.exposure}")

        sent_at = self.engine.now_us
        record = DeliveryRecord(sent_at_us=sent_at, delivered_at_us=None)

        if src_cluster == dst_cluster:
            hop = self.local_latency.sample_us(self.engine.stream(f"net/local/{src_cluster}"))
            record.hops.append((f"local:{src_cluster}", hop))
            record.delivered_at_us = sent_at + hop
            return record

        link = self.link_between(src_cluster, dst_cluster)
        if link is None:
            raise Unresolvable(f"no link {src_cluster}--{dst_cluster}")
        key = self._pair(src_cluster, dst_cluster)
        rng = self.engine.stream(f"net/link/{key[0]}-{key[1]}")

        total = 0
        wire = link.one_way_latency.sample_us(rng)
        record.hops.append((f"link:{src_cluster}->{dst_cluster}", wire))
        total += wire
        ser = link.serialization_us(flow.payload_bytes)
        if ser:
            record.hops.append(("serialization", ser))
            total += ser

        if flow.exposure == OVERLAY_TUNNEL:
            tunnel = dst_tunnel or self.tunnel_between(src_cluster, dst_cluster)
            if tunnel is None or not tunnel.active:
                raise Unresolvable(f"no active tunnel {src_cluster}--{dst_cluster}")
            overhead = eng.ms_to_us(tunnel.overhead_ms)
            record.hops.append((f"tunnel:{tunnel.tunnel_id}", overhead))
            record.via_tunnel = tunnel.tunnel_id
            total += overhead
        elif flow.exposure == NODE_PORT:
            penalty = eng.ms_to_us(self.nodeport_service_ms)
            record.hops.append(("node-port-service", penalty))
            total += penalty
        else:  # L7_PROXY, stream only
            per_side = eng.ms_to_us(self.proxy_side_ms)
            record.hops.append(("proxy:src-side", per_side))
            record.hops.append(("proxy:dst-side", per_side))
            total += 2 * per_side

        if link.loss_rate > 0.0:
            if flow.transport == DATAGRAM:
                if rng.random() < link.loss_rate:
                    return record  # dropped: delivered_at stays None
            else:
                # stream transport retransmits; each loss costs one RTT
                while rng.random() < link.loss_rate:
                    rtt = 2 * link.one_way_latency.sample_us(rng)
                    record.hops.append(("retransmit", rtt))
                    total += rtt

        record.delivered_at_us = sent_at + total
        return record
