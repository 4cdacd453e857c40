"""Queueing-network laboratory: exact product-form quantities of multi-class
networks with spinning, packet-level and flow-level simulators, and the
experiment harness tying them together."""

__version__ = "0.1.0"

from .topology import (  # noqa: F401
    Discipline,
    DisciplineKind,
    Network,
    Route,
    ServiceProfile,
    Stability,
    TailRule,
    build_network,
    network_to_config,
    stability_check,
    zeta,
)
