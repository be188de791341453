"""Cross-cluster pod placement over physical and virtual nodes.

Policies:
  local-first        physical nodes preferred; virtual only when nothing local fits
  offload-target(c)  only virtual nodes backed by cluster c
  balanced           node leaving the most free vcpus after placement

Ties always break toward the lexicographically smallest node id, so identical
views produce identical assignments.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NotReady, PolicyInfeasible, Unschedulable
from .federation import FederationManager, PodState


@dataclass(frozen=True)
class NodeView:
    node_id: str
    kind: str  # "physical" | "virtual"
    cap_vcpus: float
    cap_ram_mb: float
    alloc_vcpus: float
    alloc_ram_mb: float
    backing_cluster: str | None = None

    def free_vcpus(self) -> float:
        return self.cap_vcpus - self.alloc_vcpus

    def free_ram_mb(self) -> float:
        return self.cap_ram_mb - self.alloc_ram_mb


@dataclass(frozen=True)
class PlacementPolicy:
    kind: str  # "local-first" | "offload-target" | "balanced"
    target: str | None = None

    @classmethod
    def local_first(cls) -> "PlacementPolicy":
        return cls("local-first")

    @classmethod
    def offload_target(cls, cluster: str) -> "PlacementPolicy":
        return cls("offload-target", cluster)

    @classmethod
    def balanced(cls) -> "PlacementPolicy":
        return cls("balanced")


class Scheduler:
    """Places pods onto a cluster's view of its own and peered capacity."""

    def __init__(self, fed: FederationManager):
        self.fed = fed
        self.clusters = fed.clusters

    def cluster_view(self, cluster: str) -> list[NodeView]:
        if not self.clusters.is_ready(cluster):
            raise NotReady(cluster)
        views = [
            NodeView(node_id=n.node_id, kind="physical",
                     cap_vcpus=n.cap_vcpus, cap_ram_mb=n.cap_ram_mb,
                     alloc_vcpus=n.alloc_vcpus, alloc_ram_mb=n.alloc_ram_mb)
            for n in self.clusters.nodes(cluster)
        ]
        views += [
            NodeView(node_id=v.node_id, kind="virtual",
                     cap_vcpus=v.cap_vcpus, cap_ram_mb=v.cap_ram_mb,
                     alloc_vcpus=v.alloc_vcpus, alloc_ram_mb=v.alloc_ram_mb,
                     backing_cluster=v.backing_cluster)
            for v in self.fed.virtual_nodes.values()
            if v.host_cluster == cluster
        ]
        return sorted(views, key=lambda v: v.node_id)

    def schedule(self, pod: PodState, cluster: str,
                 policy: PlacementPolicy) -> NodeView:
        """Pick a node for the pod; raises instead of returning nothing."""
        if policy.kind == "offload-target":
            if not self.fed.established(cluster, policy.target):
                raise PolicyInfeasible(
                    f"{policy.target} is not peered with {cluster}")
        views = self.cluster_view(cluster)
        feasible = [v for v in views if self._fits(v, pod)]
        if policy.kind == "local-first":
            physical = [v for v in feasible if v.kind == "physical"]
            pool = physical if physical else [v for v in feasible if v.kind == "virtual"]
        elif policy.kind == "offload-target":
            pool = [v for v in feasible
                    if v.kind == "virtual" and v.backing_cluster == policy.target]
        else:  # balanced
            pool = feasible
        if not pool:
            raise Unschedulable(
                f"pod {pod.name} ({pod.req_vcpus} vcpus, {pod.req_ram_mb} MB) "
                f"on {cluster} under {policy.kind}")
        if policy.kind == "balanced":
            # max free vcpus after placement; node id breaks ties (pool is
            # id-sorted, and max() keeps the first of equal keys)
            return max(pool, key=lambda v: v.free_vcpus() - pod.req_vcpus)
        return pool[0]  # id-sorted: smallest id wins

    def _fits(self, view: NodeView, pod: PodState) -> bool:
        if view.free_vcpus() < pod.req_vcpus or view.free_ram_mb() < pod.req_ram_mb:
            return False
        if view.kind == "virtual":
            # virtual nodes only take pods whose namespace offloads toward
            # the backing cluster with a pod-permitting policy
            return self.fed.offload_policy_allows(
                pod.origin, pod.namespace, view.backing_cluster, "pods")
        return True

    def deploy(self, pod: PodState, cluster: str,
               policy: PlacementPolicy) -> NodeView:
        """Schedule and immediately bind: local allocation or pod offload."""
        view = self.schedule(pod, cluster, policy)
        if view.kind == "physical":
            self.fed.place_local(pod, view.node_id)
        else:
            self.fed.offload_pod(pod, self.fed.virtual_nodes[view.node_id])
        return view
