"""Permanent-fault maps for a grid of processing elements.

Each fabricated chip carries its own pattern of dead PEs. A fault map
records that pattern as a set of (row, col) coordinates over the array.
Maps are immutable; fusing two maps is plain set union, so the fused map
is pessimistic for every member chip. Fault rate is simply the faulty
fraction of the array.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class HardwareConfig:
    """Dimensions of the PE array. rows * cols is the fault-rate denominator."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"array dims must be >= 1, got {self.rows}x{self.cols}")

    @property
    def total(self) -> int:
        return self.rows * self.cols

    @property
    def dims(self) -> tuple[int, int]:
        return (self.rows, self.cols)


@dataclass(frozen=True)
class FaultMap:
    """Set of faulty PE coordinates for one chip.

    `seed` records how the map was generated (None for fused or hand-built
    maps). Coordinates are validated against `dims`; duplicates cannot
    exist because faults is a frozenset.
    """

    chip_id: str
    dims: tuple[int, int]
    faults: frozenset[tuple[int, int]]
    seed: int | None = None

    def __post_init__(self):
        rows, cols = self.dims
        if rows < 1 or cols < 1:
            raise ValueError(f"fault map dims must be >= 1, got {rows}x{cols}")
        object.__setattr__(
            self, "faults", frozenset((int(r), int(c)) for r, c in self.faults)
        )
        for r, c in self.faults:
            if not (0 <= r < rows and 0 <= c < cols):
                raise ValueError(
                    f"fault ({r}, {c}) outside {rows}x{cols} array on chip {self.chip_id!r}"
                )

    @property
    def fault_rate(self) -> float:
        """Faulty fraction of the array: #faults / (rows * cols)."""
        return len(self.faults) / (self.dims[0] * self.dims[1])

    def sorted_faults(self) -> list[tuple[int, int]]:
        """Coordinates in canonical row-major order."""
        return sorted(self.faults)

    def to_matrix(self) -> np.ndarray:
        """Boolean (rows, cols) grid, True where the PE is faulty."""
        grid = np.zeros(self.dims, dtype=bool)
        if self.faults:
            idx = np.asarray(self.sorted_faults(), dtype=np.intp)
            grid[idx[:, 0], idx[:, 1]] = True
        return grid


def generate_fault_map(
    config: HardwareConfig, target_rate: float, seed: int, chip_id: str
) -> FaultMap:
    """Inject exactly round(target_rate * total) faults, uniform without replacement.

    Deterministic for a fixed seed. The realized fault_rate can differ from
    target_rate only by the rounding of the count.
    """
    if not 0.0 <= target_rate <= 1.0:
        raise ValueError(f"target_rate must be in [0, 1], got {target_rate}")
    count = round(target_rate * config.total)
    rng = np.random.default_rng(seed)
    flat = rng.choice(config.total, size=count, replace=False)
    faults = frozenset((int(f) // config.cols, int(f) % config.cols) for f in flat)
    return FaultMap(chip_id=chip_id, dims=config.dims, faults=faults, seed=int(seed))


def fuse(a: FaultMap, b: FaultMap) -> FaultMap:
    """Union of two fault maps: the merged map is faulty wherever either is."""
    if a.dims != b.dims:
        raise ValueError(f"cannot fuse maps with different dims {a.dims} vs {b.dims}")
    return FaultMap(
        chip_id=f"{a.chip_id}+{b.chip_id}", dims=a.dims, faults=a.faults | b.faults
    )


def combined_rate(p_a: float, p_b: float, p_overlap: float) -> float:
    """Fault rate of a fused pair by inclusion-exclusion: p_a + p_b - p_overlap.

    For maps drawn independently the expected overlap is p_a * p_b.
    """
    for name, p in (("p_a", p_a), ("p_b", p_b)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {p}")
    if p_overlap < 0.0 or p_overlap > min(p_a, p_b):
        raise ValueError(
            f"overlap {p_overlap} must lie in [0, min(p_a, p_b)] = [0, {min(p_a, p_b)}]"
        )
    return p_a + p_b - p_overlap


def save_fault_maps(maps, path) -> None:
    """Write a collection of same-dims fault maps to one JSON file."""
    maps = list(maps)
    ids = [m.chip_id for m in maps]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate chip_ids: {', '.join(dupes)}")
    dims = None
    for m in maps:
        if dims is None:
            dims = m.dims
        elif m.dims != dims:
            raise ValueError(
                f"all maps in one file must share dims; saw {dims} and {m.dims}"
            )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "dims": list(dims) if dims is not None else None,
        "chips": [
            {
                "chip_id": m.chip_id,
                **({"seed": m.seed} if m.seed is not None else {}),
                "faults": [list(f) for f in m.sorted_faults()],
            }
            for m in maps
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_fault_maps(path) -> list[FaultMap]:
    """Read fault maps back, validating structure, ranges and duplicates."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"fault map file {path}: invalid JSON ({e})") from e

    def bad(msg):
        return ValueError(f"fault map file {path}: {msg}")

    if not isinstance(doc, dict) or "chips" not in doc:
        raise bad("expected an object with a 'chips' array")
    chips = doc["chips"]
    if not isinstance(chips, list):
        raise bad("'chips' must be an array")
    dims = doc.get("dims")
    if dims is None:
        if chips:
            raise bad("'dims' may be null only when 'chips' is empty")
        return []
    if (
        not isinstance(dims, list)
        or len(dims) != 2
        or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in dims)
    ):
        raise bad(f"'dims' must be two integers >= 1, got {dims!r}")
    rows, cols = dims

    maps = []
    for k, chip in enumerate(chips):
        if not isinstance(chip, dict) or "chip_id" not in chip or "faults" not in chip:
            raise bad(f"chip #{k} must be an object with 'chip_id' and 'faults'")
        cid = chip["chip_id"]
        if not isinstance(cid, str):
            raise bad(f"chip #{k}: 'chip_id' must be a string")
        seed = chip.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise bad(f"chip {cid!r}: 'seed' must be an integer when present")
        raw = chip["faults"]
        if not isinstance(raw, list):
            raise bad(f"chip {cid!r}: 'faults' must be an array")
        coords = []
        for f in raw:
            if (
                not isinstance(f, list)
                or len(f) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in f)
            ):
                raise bad(f"chip {cid!r}: each fault must be an [row, col] integer pair")
            r, c = f
            if not (0 <= r < rows and 0 <= c < cols):
                raise bad(f"chip {cid!r}: fault ({r}, {c}) outside {rows}x{cols} array")
            coords.append((r, c))
        if len(set(coords)) != len(coords):
            raise bad(f"chip {cid!r}: duplicate fault coordinates")
        maps.append(
            FaultMap(chip_id=cid, dims=(rows, cols), faults=frozenset(coords), seed=seed)
        )
    ids = [m.chip_id for m in maps]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise bad(f"duplicate chip_ids: {', '.join(dupes)}")
    return maps
