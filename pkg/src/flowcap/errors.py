"""Exception types raised by the capture pipeline and its tooling."""


class FlowcapError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FlowcapError):
    """Experiment configuration is invalid or unparseable."""


class NotIPv4Error(FlowcapError):
    """Frame is not an IPv4 packet (wrong ethertype or IP version)."""


class TruncatedFrameError(FlowcapError):
    """Frame is shorter than its declared headers."""


class UnreadableFileError(FlowcapError):
    """Capture file is missing, unreadable, or not a classic pcap."""


class UnsupportedLinkTypeError(FlowcapError):
    """Capture file uses a link type other than Ethernet."""


class InsufficientBenignError(FlowcapError):
    """Benign trace has too few packets to reach the requested share."""


class EmptyWindowError(FlowcapError):
    """Metric requested over a window with no observed flows."""


class NoMaliciousFlowsError(FlowcapError):
    """sFNR requested over a window with no malicious flows."""
