"""Four-axis rotary positional embedding.

Each attention head dimension is split into four disjoint slices, one per
coordinate axis (height, width, sequential, temporal). Every slice gets its
own frequency table; a token's query/key vector is rotated pairwise inside
each slice by (coordinate * frequency). Attention logits then depend only on
per-axis coordinate differences. Context extension is handled by NTK-aware
rescaling of the base frequency per axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

AXES = ("h", "w", "s", "tau")


@dataclass(frozen=True)
class RopeConfig:
    """Per-axis rotary dims (which must sum to head_dim) and NTK extents."""

    d_h: int = 14
    d_w: int = 14
    d_s: int = 2
    d_tau: int = 2
    base: float = 10000.0
    trained_extent: tuple[int, int, int, int] = (64, 64, 64, 16)
    target_extent: tuple[int, int, int, int] = (64, 64, 64, 16)
    ntk_axes: tuple[bool, bool, bool, bool] = (True, True, True, True)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.d_h, self.d_w, self.d_s, self.d_tau)

    @property
    def head_dim(self) -> int:
        return sum(self.dims)

    def __post_init__(self):
        for name, d in zip(AXES, self.dims):
            if d < 0 or d % 2 != 0:
                raise ConfigError(f"rotary dim for axis {name} must be even and >= 0, got {d}")
        if self.base <= 1.0:
            raise ConfigError(f"rotary base must be > 1, got {self.base}")
        for name, ext in (("trained_extent", self.trained_extent), ("target_extent", self.target_extent)):
            if len(ext) != 4 or any(e < 1 for e in ext):
                raise ConfigError(f"{name} must be 4 extents >= 1, got {ext}")


@dataclass
class RopeTables:
    """Precomputed per-axis frequencies plus the pair-index layout of a head."""

    freqs: tuple[np.ndarray, ...]  # one (d_axis/2,) array per axis
    idx_first: np.ndarray  # (head_dim/2,) first element of each rotation pair
    idx_second: np.ndarray  # (head_dim/2,) second element of each rotation pair
    axis_of_pair: np.ndarray  # (head_dim/2,) axis id of each pair
    head_dim: int


def ntk_scale(base: float, trained_extent: int, target_extent: int, d_axis: int) -> float:
    """NTK-aware base rescaling: base * s**(d/(d-2)) for extension ratio s > 1."""
    if trained_extent < 1 or target_extent < 1:
        raise ConfigError("extents must be >= 1")
    if target_extent <= trained_extent:
        return base
    if d_axis <= 2:
        raise ConfigError(
            f"NTK scaling needs d_axis > 2 (formula singular), got {d_axis}"
        )
    s = target_extent / trained_extent
    return base * s ** (d_axis / (d_axis - 2))


def build_tables(cfg: RopeConfig) -> RopeTables:
    """Build the four frequency tables; zero coordinates give identity rotation."""
    freqs = []
    idx_first, idx_second, axis_of_pair = [], [], []
    offset = 0
    for axis, d in enumerate(cfg.dims):
        base = cfg.base
        if cfg.ntk_axes[axis]:
            base = ntk_scale(
                cfg.base, cfg.trained_extent[axis], cfg.target_extent[axis], d
            )
        k = np.arange(d // 2)
        freqs.append(base ** (-2.0 * k / d) if d else np.zeros(0))
        idx_first.extend(range(offset, offset + d // 2))
        idx_second.extend(range(offset + d // 2, offset + d))
        axis_of_pair.extend([axis] * (d // 2))
        offset += d
    return RopeTables(
        freqs=tuple(freqs),
        idx_first=np.asarray(idx_first, dtype=np.intp),
        idx_second=np.asarray(idx_second, dtype=np.intp),
        axis_of_pair=np.asarray(axis_of_pair, dtype=np.intp),
        head_dim=offset,
    )


def pair_angles(tables: RopeTables, coords) -> np.ndarray:
    """Rotation angle of every pair: (..., head_dim/2) from 4 coordinate arrays.

    `coords` is a length-4 sequence (h, w, s, tau); each entry is a scalar or
    an array, all broadcasting to a common leading shape.
    """
    if len(coords) != 4:
        raise DimensionError(f"expected 4 coordinates, got {len(coords)}")
    parts = []
    for axis in range(4):
        f = tables.freqs[axis]
        if f.size == 0:
            continue
        c = np.asarray(coords[axis], dtype=np.float64)
        parts.append(c[..., None] * f)
    return np.concatenate(parts, axis=-1)


def rotate_pairs(vec: np.ndarray, cos: np.ndarray, sin: np.ndarray, tables: RopeTables) -> np.ndarray:
    """Rotate each (first, second) pair of `vec` by the given cos/sin.

    `vec` has shape (..., head_dim); cos/sin broadcast against
    (..., head_dim/2). The caller controls the rotation sign through `sin`.
    """
    if vec.shape[-1] != tables.head_dim:
        raise DimensionError(
            f"vector width {vec.shape[-1]} != head_dim {tables.head_dim}"
        )
    x1 = vec[..., tables.idx_first]
    x2 = vec[..., tables.idx_second]
    out = np.empty_like(vec)
    out[..., tables.idx_first] = x1 * cos - x2 * sin
    out[..., tables.idx_second] = x1 * sin + x2 * cos
    return out


def apply(vec: np.ndarray, coords, tables: RopeTables) -> np.ndarray:
    """Rotate a head-width vector (or batch of them) at the given coordinates."""
    theta = pair_angles(tables, coords)
    cos = np.cos(theta).astype(vec.dtype)
    sin = np.sin(theta).astype(vec.dtype)
    return rotate_pairs(vec, cos, sin, tables)
