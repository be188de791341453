"""Exception hierarchy shared by all simulator subsystems."""


class FedsimError(Exception):
    """Base class for all simulator errors."""


# --- engine ---

class PastTime(FedsimError):
    """Event scheduled before the current virtual time."""


class InvalidDistribution(FedsimError):
    """Distribution spec with negative or inconsistent scale parameters."""


# --- cluster lifecycle ---

class InvalidSize(FedsimError):
    """Cluster definition requested with fewer than one node."""


class DuplicateName(FedsimError):
    """A cluster with this name is already registered."""


class NotReady(FedsimError):
    """Operation requires a cluster in the Ready phase."""


# --- peering / offloading ---

class SelfPeering(FedsimError):
    """A cluster cannot peer with itself."""


class AlreadyPeered(FedsimError):
    """An active peering session already exists for this cluster pair."""


class NotPeered(FedsimError):
    """Target cluster has no established peering with the origin."""


class NoSuchNamespace(FedsimError):
    """Namespace does not exist in the origin cluster."""


class NoSuchService(FedsimError):
    """Service does not exist in the given namespace."""


class NoSuchSession(FedsimError):
    """Peering session unknown or already torn down."""


class InvalidShare(FedsimError):
    """Resource share must lie in (0, 1]."""


class PolicyForbids(FedsimError):
    """Offload policy does not permit this placement or reflection."""


class InsufficientCapacity(FedsimError):
    """Virtual node lacks free capacity for the pod request."""


# --- overlay network ---

class SelfLink(FedsimError):
    """A link must connect two distinct clusters."""


class DuplicateLink(FedsimError):
    """A link already exists for this cluster pair."""


class NoLink(FedsimError):
    """No physical link exists between the two clusters."""


class ExhaustedPrefixSpace(FedsimError):
    """Translation pool has no free prefix of the required size."""


class UnmappedAddress(FedsimError):
    """Address outside the mapped origin prefix for this direction."""


class UnsupportedTransport(FedsimError):
    """Transport not carried by the selected exposure mode."""


class Unresolvable(FedsimError):
    """Source or destination cannot be resolved under the flow's exposure."""


# --- scheduler ---

class Unschedulable(FedsimError):
    """No node satisfies the pod request under the given policy."""


class PolicyInfeasible(FedsimError):
    """Placement policy references a cluster that is not peered."""


# --- metrics / config ---

class EmptySamples(FedsimError):
    """Percentile of an empty sample set is undefined."""


class ConfigError(FedsimError):
    """Scenario config rejected; `path` names the offending field."""

    def __init__(self, path: str, message: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else path)


class IoError(FedsimError):
    """Report export or import failed."""
