"""Packet-kernel lane selection: compiled extension if built, pure otherwise.

Set SPINNET_KERNEL=pure or =compiled to force a lane; both produce
bit-identical runs for the same seed (see tests/test_kernel_parity.py).
"""

from __future__ import annotations

import os

from . import _pykernel
from ._pykernel import BUDGET, CLOSED, DEPARTED, OPEN, REACHED  # noqa: F401
from ._pykernel import EV_ARRIVAL, EV_DEPART, EV_STAGE, EV_WRAP  # noqa: F401

PurePacketKernel = _pykernel.PacketKernel

try:
    from ._ckernel import PacketKernel as CompiledPacketKernel

    HAVE_COMPILED = True
except ImportError:  # extension not built; fall back silently
    CompiledPacketKernel = None
    HAVE_COMPILED = False


def kernel_class(impl: str | None = None):
    if impl is None:
        impl = os.environ.get("SPINNET_KERNEL", "auto")
    if impl in ("auto", ""):
        return CompiledPacketKernel if HAVE_COMPILED else PurePacketKernel
    if impl in ("compiled", "c"):
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernel requested but the extension is not built")
        return CompiledPacketKernel
    if impl in ("pure", "python", "pure-python"):
        return PurePacketKernel
    raise ValueError(f"unknown kernel implementation {impl!r}")


def active_impl() -> str:
    return getattr(kernel_class(), "IMPL", "unknown")
