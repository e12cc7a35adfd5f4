"""Sparse binary feature construction.

Raw observation vectors are turned into large binary feature vectors by
tile coding: each tiling group covers one input or a pair of inputs with
several overlapping grid tilings, and every tiling contributes exactly one
active index per step.  The total number of active indices is therefore a
constant of the configuration, which downstream learners rely on (their
step sizes are normalized by it).

Also provides the fixed 5-state feature representation used by the
random-walk chain experiments and the sparse dot product shared by the
learners.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError

__all__ = [
    "SparseFeatures",
    "TilingGroup",
    "TileCoderConfig",
    "TileCoder",
    "tile_code",
    "dot_sparse",
    "chain_features",
    "chain_feature_matrix",
    "paper_scale_tile_config",
    "compact_tile_config",
]


class SparseFeatures:
    """Indices of the active components of an n-dimensional binary vector."""

    __slots__ = ("indices", "n")

    def __init__(self, indices, n: int):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.n = int(n)

    @property
    def active_count(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.n)
        dense[self.indices] = 1.0
        return dense

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SparseFeatures)
            and self.n == other.n
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self) -> str:
        return f"SparseFeatures({self.indices.tolist()}, n={self.n})"


@dataclass(frozen=True)
class TilingGroup:
    """One block of tilings over a subset of one or two inputs.

    ``tilings`` overlapping grids, each ``tiles`` cells wide per dimension,
    shifted relative to each other by a uniform stride of 1/tilings of one
    tile width.
    """

    inputs: tuple[int, ...]
    tilings: int
    tiles: int

    def __post_init__(self):
        if len(self.inputs) not in (1, 2):
            raise ConfigurationError(f"tiling group must cover 1 or 2 inputs, got {self.inputs}")
        if self.tilings < 1:
            raise ConfigurationError("tilings must be >= 1")
        if self.tiles < 1:
            raise ConfigurationError("tiles per dimension must be >= 1")

    @property
    def size(self) -> int:
        return self.tilings * self.tiles ** len(self.inputs)


@dataclass(frozen=True)
class TileCoderConfig:
    """Input ranges plus the tiling groups that partition the index space."""

    ranges: tuple[tuple[float, float], ...]
    groups: tuple[TilingGroup, ...]
    include_bias: bool = True

    def __post_init__(self):
        for lo, hi in self.ranges:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigurationError(f"bad input range ({lo}, {hi})")
        n_inputs = len(self.ranges)
        for g in self.groups:
            for i in g.inputs:
                if not 0 <= i < n_inputs:
                    raise ConfigurationError(f"tiling group input {i} out of range [0, {n_inputs})")

    @property
    def n_inputs(self) -> int:
        return len(self.ranges)

    @property
    def n(self) -> int:
        total = sum(g.size for g in self.groups)
        return total + (1 if self.include_bias else 0)

    @property
    def active_count(self) -> int:
        total = sum(g.tilings for g in self.groups)
        return total + (1 if self.include_bias else 0)


class TileCoder:
    """Deterministic tile coding of bounded real inputs into binary features.

    Inputs are scaled to [0, 1] by their configured ranges and clamped, so
    out-of-range readings land in the boundary tiles rather than wrapping.
    Each tiling group owns a disjoint index block; the bias index, when
    enabled, is the last index ``n - 1`` and is always active.
    """

    def __init__(self, config: TileCoderConfig):
        self.config = config
        self._lo = np.array([r[0] for r in config.ranges])
        self._span = np.array([r[1] - r[0] for r in config.ranges])
        offsets = []
        base = 0
        for g in config.groups:
            offsets.append(base)
            base += g.size
        self._group_offsets = offsets
        self.n = config.n
        self.active_count = config.active_count

    def encode(self, obs) -> SparseFeatures:
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (self.config.n_inputs,):
            raise ConfigurationError(
                f"expected {self.config.n_inputs} inputs, got shape {obs.shape}"
            )
        if not np.all(np.isfinite(obs)):
            raise InputError("observation contains NaN or Inf")
        scaled = np.clip((obs - self._lo) / self._span, 0.0, 1.0)

        indices = np.empty(self.active_count, dtype=np.int64)
        pos = 0
        for g, base in zip(self.config.groups, self._group_offsets):
            tiles = g.tiles
            cells = tiles ** len(g.inputs)
            for j in range(g.tilings):
                shift = j / (g.tilings * tiles)
                flat = 0
                for d, inp in enumerate(g.inputs):
                    t = int((scaled[inp] + shift) * tiles)
                    if t >= tiles:
                        t = tiles - 1
                    flat += t * tiles**d
                indices[pos] = base + j * cells + flat
                pos += 1
        if self.config.include_bias:
            indices[pos] = self.n - 1
        return SparseFeatures(indices, self.n)


def tile_code(obs, config: TileCoderConfig) -> SparseFeatures:
    """One-shot encoding; build a TileCoder directly when encoding many steps."""
    return TileCoder(config).encode(obs)


def dot_sparse(weights: np.ndarray, feats: SparseFeatures) -> float:
    """Inner product of a dense weight vector with a binary sparse vector."""
    if weights.shape != (feats.n,):
        raise InputError(f"weights of dim {weights.shape} vs features of dim {feats.n}")
    if feats.indices.size == 0:
        return 0.0
    return float(weights[feats.indices].sum())


# Fixed representation for the 5 non-terminal states of the 7-state chain.
# "inverted": state i has 0 at component i and 1/2 everywhere else, which is
# full rank (determinant 1/8 for 5 states).  "tabular" is the unit basis.
_CHAIN_STATES = 5


def chain_features(state_index: int, kind: str = "inverted") -> np.ndarray:
    if not 0 <= state_index < _CHAIN_STATES:
        raise InputError(f"chain state index {state_index} out of [0, {_CHAIN_STATES})")
    if kind == "inverted":
        v = np.full(_CHAIN_STATES, 0.5)
        v[state_index] = 0.0
        return v
    if kind == "tabular":
        v = np.zeros(_CHAIN_STATES)
        v[state_index] = 1.0
        return v
    raise ConfigurationError(f"unknown chain feature kind {kind!r}")


def chain_feature_matrix(kind: str = "inverted") -> np.ndarray:
    """Stacked feature vectors, one row per non-terminal chain state."""
    return np.stack([chain_features(i, kind) for i in range(_CHAIN_STATES)])


def paper_scale_tile_config(n_inputs: int = 53) -> TileCoderConfig:
    """Full-scale layout: 6065 total indices with 457 active per step.

    53 single-input groups (4 tilings of 10 tiles), 53 adjacent-pair groups
    (4 tilings of 4x4), 15 skip-2 pair groups (2 tilings of 4x4), one wide
    pair (2 tilings of 6x6), plus the bias.  All inputs range over [0, 1].
    """
    if n_inputs != 53:
        raise ConfigurationError("the full-scale layout is defined for 53 inputs")
    groups = [TilingGroup((i,), 4, 10) for i in range(53)]
    groups += [TilingGroup((i, (i + 1) % 53), 4, 4) for i in range(53)]
    groups += [TilingGroup((i, (i + 2) % 53), 2, 4) for i in range(15)]
    groups.append(TilingGroup((0, 26), 2, 6))
    return TileCoderConfig(
        ranges=tuple((0.0, 1.0) for _ in range(n_inputs)),
        groups=tuple(groups),
        include_bias=True,
    )


def compact_tile_config(
    n_inputs: int = 53,
    single_tilings: int = 2,
    single_tiles: int = 8,
    pair_tilings: int = 1,
    pair_tiles: int = 4,
) -> TileCoderConfig:
    """Smaller layout with the same structure, for simulation-scale runs."""
    groups = [TilingGroup((i,), single_tilings, single_tiles) for i in range(n_inputs)]
    if pair_tilings > 0:
        groups += [
            TilingGroup((i, (i + 1) % n_inputs), pair_tilings, pair_tiles)
            for i in range(n_inputs)
        ]
    return TileCoderConfig(
        ranges=tuple((0.0, 1.0) for _ in range(n_inputs)),
        groups=tuple(groups),
        include_bias=True,
    )
