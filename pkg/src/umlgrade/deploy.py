"""GPU deployment feasibility: KV-cache and weight memory estimation.

KV-cache bytes = 2 * batch * layers * kv_heads * head_dim * context *
bytes_per_element; weights are quantized parameter bytes. Only weights and
KV cache are modeled, in exact integer arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

GIB = 2**30

SUPPORTED_WEIGHT_BITS = (4, 8, 16, 32)


class UnsupportedPrecision(Exception):
    pass


@dataclass(frozen=True)
class DeploymentConfig:
    batch: int
    layers: int
    kv_heads: int
    head_dim: int
    context: int
    bytes_per_element: int
    param_count: int = 0
    weight_bits: int = 4

    def __post_init__(self) -> None:
        for name in ("batch", "layers", "kv_heads", "head_dim", "bytes_per_element"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.context < 0:
            raise ValueError("context must be >= 0")
        if self.param_count < 0:
            raise ValueError("param_count must be >= 0")
        if self.weight_bits < 1:
            raise ValueError("weight_bits must be >= 1")


@dataclass(frozen=True)
class DeploymentEstimate:
    kv_bytes: int
    weight_bytes: int
    total_bytes: int
    fits: bool
    headroom_bytes: int

    def to_json_dict(self) -> dict:
        return {
            "kv_bytes": self.kv_bytes,
            "weight_bytes": self.weight_bytes,
            "total_bytes": self.total_bytes,
            "fits": self.fits,
            "headroom_bytes": self.headroom_bytes,
        }


def kv_cache_bytes(cfg: DeploymentConfig) -> int:
    return (
        2
        * cfg.batch
        * cfg.layers
        * cfg.kv_heads
        * cfg.head_dim
        * cfg.context
        * cfg.bytes_per_element
    )


def weight_bytes(param_count: int, weight_bits: int) -> int:
    if weight_bits not in SUPPORTED_WEIGHT_BITS:
        raise UnsupportedPrecision(
            f"weight_bits must be one of {SUPPORTED_WEIGHT_BITS}, got {weight_bits}"
        )
    return -(-param_count * weight_bits // 8)  # ceil division


def check_fit(cfg: DeploymentConfig, vram_budget_bytes: int) -> DeploymentEstimate:
    if vram_budget_bytes < 0:
        raise ValueError("budget must be >= 0")
    kv = kv_cache_bytes(cfg)
    weights = weight_bytes(cfg.param_count, cfg.weight_bits)
    total = kv + weights
    return DeploymentEstimate(
        kv_bytes=kv,
        weight_bytes=weights,
        total_bytes=total,
        fits=total <= vram_budget_bytes,
        headroom_bytes=vram_budget_bytes - total,
    )
