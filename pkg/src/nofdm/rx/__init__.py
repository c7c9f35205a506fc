"""Receiver DSP stages."""

from .receiver import RxConfig, RxResult, receive

__all__ = ["RxConfig", "RxResult", "receive"]
