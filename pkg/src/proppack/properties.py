"""Object property model: materials, density estimates, avoidance rules.

Density is never measured; it is estimated by mapping an object to a density
level (0-5) and taking the mean density of the built-in material rows at that
level.  Avoidance is a small symmetric rule engine over semantic flags.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import MalformedFileError
from .voxelgeom import VoxelShape, volume

N_DENSITY_LEVELS = 6


@dataclass(frozen=True)
class MaterialEntry:
    name: str
    density_level: int
    density: float  # g/cm^3
    fragile: bool


DEFAULT_MATERIALS = (
    MaterialEntry("Air", 0, 0.0, False),
    MaterialEntry("Bread", 1, 0.3, True),
    MaterialEntry("Biscuit", 1, 0.4, True),
    MaterialEntry("Wood", 1, 0.4, False),
    MaterialEntry("Cardboard", 1, 0.6, False),
    MaterialEntry("Wax", 2, 0.9, True),
    MaterialEntry("Water", 2, 1.0, False),
    MaterialEntry("Fruits", 2, 1.0, True),
    MaterialEntry("Synthetic (Nylon)", 2, 1.1, False),
    MaterialEntry("Paper", 2, 1.2, False),
    MaterialEntry("Plastic", 2, 1.4, False),
    MaterialEntry("Glass", 3, 2.5, True),
    MaterialEntry("Clay", 3, 3.1, True),
    MaterialEntry("Ceramic", 4, 4.2, True),
    MaterialEntry("Steel", 5, 7.8, False),
)


class MaterialTable:
    """Lookup from density level to representative densities.

    Every level 0-5 must be populated and densities may not decrease across
    level boundaries.
    """

    def __init__(self, entries=DEFAULT_MATERIALS):
        entries = tuple(entries)
        by_level: dict[int, list[float]] = {lvl: [] for lvl in range(N_DENSITY_LEVELS)}
        for e in entries:
            if not 0 <= e.density_level < N_DENSITY_LEVELS:
                raise ValueError(f"density level out of range: {e!r}")
            if e.density < 0:
                raise ValueError(f"negative density: {e!r}")
            by_level[e.density_level].append(e.density)
        for lvl in range(N_DENSITY_LEVELS):
            if not by_level[lvl]:
                raise ValueError(f"density level {lvl} has no material rows")
        for lvl in range(N_DENSITY_LEVELS - 1):
            if max(by_level[lvl]) > min(by_level[lvl + 1]):
                raise ValueError(
                    f"densities must be non-decreasing across levels ({lvl} -> {lvl + 1})"
                )
        self.entries = entries
        self._means = tuple(float(np.mean(by_level[lvl])) for lvl in range(N_DENSITY_LEVELS))

    def level_mean_density(self, level: int) -> float:
        if not 0 <= level < N_DENSITY_LEVELS:
            raise ValueError(f"unknown density level: {level}")
        return self._means[level]

    def level_members(self, level: int) -> tuple[MaterialEntry, ...]:
        return tuple(e for e in self.entries if e.density_level == level)

    def to_file(self, path):
        lines = ["# name\tlevel\tdensity\tfragile"]
        for e in self.entries:
            lines.append(f"{e.name}\t{e.density_level}\t{e.density}\t{int(e.fragile)}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path) -> "MaterialTable":
        entries = []
        for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise MalformedFileError(f"{path}:{ln}: expected 4 tab-separated fields")
            name, level_s, density_s, fragile_s = parts
            try:
                entry = MaterialEntry(name, int(level_s), float(density_s), bool(int(fragile_s)))
            except ValueError as exc:
                raise MalformedFileError(f"{path}:{ln}: {exc}") from exc
            entries.append(entry)
        try:
            return cls(entries)
        except ValueError as exc:
            raise MalformedFileError(f"{path}: {exc}") from exc


FLAG_NAMES = (
    "fragile",
    "soft",
    "sharp",
    "edible",
    "medicine",
    "household_chemical",
    "ignition",
    "flammable",
)


@dataclass(frozen=True)
class ObjectProperties:
    fragile: bool = False
    soft: bool = False
    sharp: bool = False
    edible: bool = False
    medicine: bool = False
    household_chemical: bool = False
    ignition: bool = False
    flammable: bool = False
    density_level: int = 0

    def __post_init__(self):
        if not 0 <= self.density_level < N_DENSITY_LEVELS:
            raise ValueError(f"density level out of range: {self.density_level}")

    def flags(self) -> tuple[bool, ...]:
        return tuple(getattr(self, name) for name in FLAG_NAMES)


# ObjectProperties field order must track FLAG_NAMES
assert tuple(f.name for f in fields(ObjectProperties))[:8] == FLAG_NAMES


def property_vector(shape: VoxelShape, props: ObjectProperties, table: MaterialTable) -> np.ndarray:
    """Conditioning vector: (fragile, soft, sharp, est. density g/cm^3, volume cm^3)."""
    return np.array(
        [
            float(props.fragile),
            float(props.soft),
            float(props.sharp),
            table.level_mean_density(props.density_level),
            float(volume(shape)),
        ]
    )


def estimated_weight(shape: VoxelShape, props: ObjectProperties, table: MaterialTable) -> float:
    """Estimated mass in kg: volume x level mean density, grams -> kg."""
    return volume(shape) * table.level_mean_density(props.density_level) / 1000.0


def derive_avoidance(a: ObjectProperties, b: ObjectProperties) -> bool:
    """Should these two objects be kept apart?  Symmetric in (a, b).

    Rules: sharp vs soft, medicine vs edible, household chemical vs edible,
    ignition source vs flammable.
    """
    def one_way(p: ObjectProperties, q: ObjectProperties) -> bool:
        return (
            (p.sharp and q.soft)
            or (p.medicine and q.edible)
            or (p.household_chemical and q.edible)
            or (p.ignition and q.flammable)
        )

    return one_way(a, b) or one_way(b, a)


@dataclass(frozen=True, eq=False)
class AvoidanceMatrix:
    ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_index", {oid: i for i, oid in enumerate(self.ids)})

    def pair(self, id_a: str, id_b: str) -> bool:
        return bool(self.matrix[self._index[id_a], self._index[id_b]])

    def row(self, id_a: str) -> np.ndarray:
        return self.matrix[self._index[id_a]]


def avoidance_matrix(records) -> AvoidanceMatrix:
    """Symmetric boolean matrix over records (anything with .id/.properties)."""
    recs = list(records)
    n = len(recs)
    matrix = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if derive_avoidance(recs[i].properties, recs[j].properties):
                matrix[i, j] = matrix[j, i] = True
    return AvoidanceMatrix(tuple(r.id for r in recs), matrix)
