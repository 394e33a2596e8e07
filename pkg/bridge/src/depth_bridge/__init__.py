"""Thin bridge: run a monocular depth model over 20 tangent images and write
provider-format disparity files plus the layout-echoing manifest."""

from .bridge import BridgeError, bridge_run

__version__ = "0.1.0"
