"""Object catalogs and arrival scenarios.

A catalog couples voxel shapes with their property records and the material
table used for density estimates.  Catalogs and scenarios serialize to
versioned, self-describing text files; voxel grids are run-length encoded one
z-slab per line.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumMismatchError,
    DuplicateIdError,
    MalformedFileError,
    VersionMismatchError,
)
from .properties import (
    FLAG_NAMES,
    AvoidanceMatrix,
    MaterialEntry,
    MaterialTable,
    ObjectProperties,
    avoidance_matrix,
)
from .voxelgeom import MAX_DIM, VoxelShape

CATALOG_MAGIC = "packcatalog"
SCENARIO_MAGIC = "packscenarios"
FORMAT_VERSION = 1

DEFAULT_BUFFER_CAPACITY = 10


@dataclass(frozen=True)
class ObjectRecord:
    id: str
    class_name: str
    shape: VoxelShape
    properties: ObjectProperties


class Catalog:
    def __init__(self, records, material_table: MaterialTable | None = None):
        records = tuple(records)
        seen = set()
        for r in records:
            if r.id in seen:
                raise DuplicateIdError(f"duplicate object id: {r.id}")
            seen.add(r.id)
        self.records = records
        self.material_table = material_table or MaterialTable()
        self._by_id = {r.id: r for r in records}

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, object_id: str) -> ObjectRecord:
        return self._by_id[object_id]

    def __contains__(self, object_id: str) -> bool:
        return object_id in self._by_id

    @cached_property
    def avoidance(self) -> AvoidanceMatrix:
        return avoidance_matrix(self.records)


@dataclass(frozen=True)
class Scenario:
    """One episode's arrival stream over catalog object ids."""

    name: str
    seed: int
    order: tuple[str, ...]
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY

    def __post_init__(self):
        if self.buffer_capacity < 1:
            raise ValueError("buffer capacity must be >= 1")
        if not self.order:
            raise ValueError("scenario needs at least one arrival")


# --- primitive shape builders --------------------------------------------

def make_box(dims, shape_id="box") -> VoxelShape:
    return VoxelShape(shape_id, np.ones(dims, dtype=bool))


def make_l_shape(dims, cut, shape_id="l") -> VoxelShape:
    """Box with a corner block removed over the full height (L cross-section)."""
    nx, ny, nz = dims
    cx, cy = cut
    if not (0 < cx < nx and 0 < cy < ny):
        raise ValueError("cut must leave both legs of the L")
    cells = np.ones(dims, dtype=bool)
    cells[nx - cx :, ny - cy :, :] = False
    return VoxelShape(shape_id, cells)


def make_t_shape(bar_dims, stem_width, stem_depth, shape_id="t") -> VoxelShape:
    """Bar with a centered stem sticking out in +y, extruded in z."""
    bx, by, nz = bar_dims
    if not (0 < stem_width <= bx and stem_depth > 0):
        raise ValueError("bad stem dimensions")
    cells = np.zeros((bx, by + stem_depth, nz), dtype=bool)
    cells[:, :by, :] = True
    x0 = (bx - stem_width) // 2
    cells[x0 : x0 + stem_width, by:, :] = True
    return VoxelShape(shape_id, cells)


def make_cylinder(diameter, height, shape_id="cyl") -> VoxelShape:
    r = diameter / 2.0
    xs = np.arange(diameter) + 0.5 - r
    inside = xs[:, None] ** 2 + xs[None, :] ** 2 <= r * r
    cells = np.repeat(inside[:, :, None], height, axis=2)
    return VoxelShape(shape_id, cells)


def make_hemisphere(radius, shape_id="dome") -> VoxelShape:
    d = 2 * radius
    xs = np.arange(d) + 0.5 - radius
    zs = np.arange(radius) + 0.5
    dist2 = xs[:, None, None] ** 2 + xs[None, :, None] ** 2 + zs[None, None, :] ** 2
    return VoxelShape(shape_id, dist2 <= radius * radius)


# --- synthetic generation -------------------------------------------------

@dataclass(frozen=True)
class PropertyMarginals:
    """Independent Bernoulli marginals per flag + a density level distribution."""

    fragile: float = 0.0
    soft: float = 0.0
    sharp: float = 0.0
    edible: float = 0.0
    medicine: float = 0.0
    household_chemical: float = 0.0
    ignition: float = 0.0
    flammable: float = 0.0
    density_level_weights: tuple[float, ...] = (0.0, 0.25, 0.4, 0.2, 0.1, 0.05)

    def __post_init__(self):
        for name in FLAG_NAMES:
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"marginal {name} out of [0, 1]: {p}")
        if len(self.density_level_weights) != 6 or sum(self.density_level_weights) <= 0:
            raise ValueError("density_level_weights needs 6 nonnegative weights")


FAMILIES = ("box", "l_shape", "t_shape", "cylinder", "hemisphere")


@dataclass(frozen=True)
class GenerationSpec:
    counts: dict = field(default_factory=lambda: {"box": 10})
    size_range: tuple[int, int] = (2, 8)
    marginals: PropertyMarginals = field(default_factory=PropertyMarginals)

    def __post_init__(self):
        lo, hi = self.size_range
        if not (1 <= lo <= hi <= MAX_DIM):
            raise ValueError(f"size range out of bounds: {self.size_range}")
        for family in self.counts:
            if family not in FAMILIES:
                raise ValueError(f"unknown primitive family: {family}")


def _sample_properties(rng: np.random.Generator, marginals: PropertyMarginals) -> ObjectProperties:
    flags = {name: bool(rng.random() < getattr(marginals, name)) for name in FLAG_NAMES}
    weights = np.asarray(marginals.density_level_weights, dtype=float)
    level = int(rng.choice(6, p=weights / weights.sum()))
    return ObjectProperties(density_level=level, **flags)


def generate_synthetic(spec: GenerationSpec, seed: int, material_table=None) -> Catalog:
    """Deterministic synthetic catalog from primitive families.

    Same (spec, seed) yields the same catalog byte-for-byte after saving.
    """
    rng = np.random.default_rng(seed)
    lo, hi = spec.size_range
    size = lambda: int(rng.integers(lo, hi + 1))
    records = []
    for family in FAMILIES:  # fixed family order keeps generation stable
        for i in range(spec.counts.get(family, 0)):
            oid = f"{family}{i:03d}"
            if family == "box":
                shape = make_box((size(), size(), size()), oid)
            elif family == "l_shape":
                nx, ny = max(size(), 2), max(size(), 2)
                nz = size()
                cut = (int(rng.integers(1, nx)), int(rng.integers(1, ny)))
                shape = make_l_shape((nx, ny, nz), cut, oid)
            elif family == "t_shape":
                bx = max(size(), 2)
                by = max(size() // 2, 1)
                nz = size()
                stem_w = int(rng.integers(1, bx + 1))
                stem_d = max(size() // 2, 1)
                shape = make_t_shape((bx, by, nz), stem_w, stem_d, oid)
            elif family == "cylinder":
                d = max(size(), 2)
                shape = make_cylinder(d, size(), oid)
            else:
                r = max(min(size(), MAX_DIM // 2), 1)
                shape = make_hemisphere(r, oid)
            records.append(
                ObjectRecord(oid, family, shape, _sample_properties(rng, spec.marginals))
            )
    return Catalog(records, material_table)


def make_scenario(
    catalog: Catalog,
    n_objects: int,
    seed: int,
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY,
    name: str | None = None,
) -> Scenario:
    """Uniform-with-replacement arrival stream over catalog ids."""
    rng = np.random.default_rng(seed)
    ids = tuple(r.id for r in catalog.records)
    order = tuple(ids[int(i)] for i in rng.integers(0, len(ids), size=n_objects))
    return Scenario(name or f"s{seed}", seed, order, buffer_capacity)


# --- run-length slab codec ------------------------------------------------

_RUN_RE = re.compile(r"(\d+)([.o])")


def encode_slab(slab: np.ndarray) -> str:
    """RLE of one z-slab flattened row-major over (x, y); 'o' occupied, '.' empty."""
    flat = slab.reshape(-1)
    out = []
    i = 0
    while i < len(flat):
        j = i
        while j < len(flat) and flat[j] == flat[i]:
            j += 1
        out.append(f"{j - i}{'o' if flat[i] else '.'}")
        i = j
    return "".join(out)


def decode_slab(text: str, nx: int, ny: int) -> np.ndarray:
    runs = _RUN_RE.findall(text)
    if "".join(f"{n}{c}" for n, c in runs) != text:
        raise MalformedFileError(f"bad slab encoding: {text!r}")
    flat = np.zeros(nx * ny, dtype=bool)
    pos = 0
    for count_s, ch in runs:
        count = int(count_s)
        if pos + count > len(flat):
            raise MalformedFileError(f"slab run overflows {nx}x{ny} grid: {text!r}")
        if ch == "o":
            flat[pos : pos + count] = True
        pos += count
    if pos != len(flat):
        raise MalformedFileError(f"slab runs cover {pos} cells, expected {nx * ny}: {text!r}")
    return flat.reshape(nx, ny)


def _avoidance_checksum(matrix: AvoidanceMatrix) -> str:
    payload = ",".join(matrix.ids).encode() + b"|" + np.packbits(matrix.matrix).tobytes()
    return hashlib.sha256(payload).hexdigest()[:16]


# --- catalog file format --------------------------------------------------

def save_catalog(catalog: Catalog, path) -> None:
    lines = [f"{CATALOG_MAGIC} {FORMAT_VERSION}", "resolution_cm 1", "[materials]"]
    for e in catalog.material_table.entries:
        lines.append(f"{e.name}\t{e.density_level}\t{e.density}\t{int(e.fragile)}")
    lines.append("[objects]")
    for r in catalog.records:
        nx, ny, nz = r.shape.dims
        lines.append(f"object {r.id} {r.class_name}")
        lines.append(f"dims {nx} {ny} {nz}")
        p = r.properties
        flag_text = " ".join(f"{name}={int(getattr(p, name))}" for name in FLAG_NAMES)
        lines.append(f"props {flag_text} density_level={p.density_level}")
        for z in range(nz):
            lines.append(encode_slab(r.shape.cells[:, :, z]))
    lines.append("[checksums]")
    lines.append(f"avoidance {_avoidance_checksum(catalog.avoidance)}")
    Path(path).write_text("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, path):
        self.path = str(path)
        self.lines = Path(path).read_text().splitlines()
        self.pos = 0

    def next(self) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return line
        raise MalformedFileError(f"{self.path}: unexpected end of file")

    def peek(self) -> str | None:
        pos = self.pos
        try:
            line = self.next()
        except MalformedFileError:
            return None
        self.pos = pos
        return line


def _check_magic(reader: _LineReader, magic: str) -> None:
    header = reader.next().split()
    if len(header) != 2 or header[0] != magic:
        raise MalformedFileError(f"{reader.path}: not a {magic} file")
    if header[1] != str(FORMAT_VERSION):
        raise VersionMismatchError(
            f"{reader.path}: format version {header[1]}, expected {FORMAT_VERSION}"
        )


def load_catalog(path) -> Catalog:
    reader = _LineReader(path)
    _check_magic(reader, CATALOG_MAGIC)
    if reader.next() != "resolution_cm 1":
        raise MalformedFileError(f"{path}: unsupported resolution")
    if reader.next() != "[materials]":
        raise MalformedFileError(f"{path}: missing [materials] section")
    entries = []
    while True:
        line = reader.next()
        if line == "[objects]":
            break
        parts = line.split("\t")
        if len(parts) != 4:
            raise MalformedFileError(f"{path}: bad material row: {line!r}")
        try:
            entries.append(
                MaterialEntry(parts[0], int(parts[1]), float(parts[2]), bool(int(parts[3])))
            )
        except ValueError as exc:
            raise MalformedFileError(f"{path}: bad material row: {line!r}") from exc
    try:
        table = MaterialTable(entries)
    except ValueError as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc

    records = []
    checksum = None
    while True:
        line = reader.next()
        if line == "[checksums]":
            check_line = reader.next().split()
            if len(check_line) != 2 or check_line[0] != "avoidance":
                raise MalformedFileError(f"{path}: bad checksum line")
            checksum = check_line[1]
            break
        head = line.split()
        if len(head) != 3 or head[0] != "object":
            raise MalformedFileError(f"{path}: expected object header, got {line!r}")
        _, oid, class_name = head
        dims_line = reader.next().split()
        if len(dims_line) != 4 or dims_line[0] != "dims":
            raise MalformedFileError(f"{path}: expected dims line for {oid}")
        try:
            nx, ny, nz = (int(v) for v in dims_line[1:])
        except ValueError as exc:
            raise MalformedFileError(f"{path}: bad dims for {oid}") from exc
        props_line = reader.next().split()
        if props_line[0] != "props":
            raise MalformedFileError(f"{path}: expected props line for {oid}")
        kv = {}
        for token in props_line[1:]:
            if "=" not in token:
                raise MalformedFileError(f"{path}: bad props token {token!r}")
            key, value = token.split("=", 1)
            kv[key] = value
        try:
            props = ObjectProperties(
                density_level=int(kv.pop("density_level")),
                **{name: bool(int(kv.pop(name))) for name in FLAG_NAMES},
            )
        except (KeyError, ValueError) as exc:
            raise MalformedFileError(f"{path}: bad props for {oid}: {exc}") from exc
        if kv:
            raise MalformedFileError(f"{path}: unknown props for {oid}: {sorted(kv)}")
        cells = np.zeros((nx, ny, nz), dtype=bool)
        for z in range(nz):
            cells[:, :, z] = decode_slab(reader.next(), nx, ny)
        try:
            shape = VoxelShape(oid, cells)
        except ValueError as exc:
            raise MalformedFileError(f"{path}: bad voxel grid for {oid}: {exc}") from exc
        records.append(ObjectRecord(oid, class_name, shape, props))

    catalog = Catalog(records, table)
    actual = _avoidance_checksum(catalog.avoidance)
    if actual != checksum:
        raise ChecksumMismatchError(
            f"{path}: avoidance checksum mismatch (stored {checksum}, derived {actual})"
        )
    return catalog


# --- scenario file format -------------------------------------------------

def save_scenarios(scenarios, path, catalog_name: str = "") -> None:
    scenarios = list(scenarios)
    caps = {s.buffer_capacity for s in scenarios}
    if len(caps) != 1:
        raise ValueError("scenario files hold a single buffer capacity")
    lines = [
        f"{SCENARIO_MAGIC} {FORMAT_VERSION}",
        f"catalog {catalog_name}",
        f"buffer_capacity {caps.pop()}",
    ]
    for s in scenarios:
        lines.append(f"scenario {s.name} {s.seed} " + " ".join(s.order))
    Path(path).write_text("\n".join(lines) + "\n")


def load_scenarios(path, catalog: Catalog | None = None) -> list[Scenario]:
    reader = _LineReader(path)
    _check_magic(reader, SCENARIO_MAGIC)
    cat_line = reader.next().split(maxsplit=1)
    if cat_line[0] != "catalog":
        raise MalformedFileError(f"{path}: missing catalog reference")
    cap_line = reader.next().split()
    if len(cap_line) != 2 or cap_line[0] != "buffer_capacity":
        raise MalformedFileError(f"{path}: missing buffer_capacity")
    try:
        capacity = int(cap_line[1])
    except ValueError as exc:
        raise MalformedFileError(f"{path}: bad buffer_capacity") from exc

    scenarios = []
    names = set()
    while reader.peek() is not None:
        parts = reader.next().split()
        if parts[0] != "scenario" or len(parts) < 4:
            raise MalformedFileError(f"{path}: bad scenario line: {' '.join(parts)!r}")
        name, seed_s = parts[1], parts[2]
        if name in names:
            raise DuplicateIdError(f"{path}: duplicate scenario name: {name}")
        names.add(name)
        try:
            seed = int(seed_s)
        except ValueError as exc:
            raise MalformedFileError(f"{path}: bad scenario seed: {seed_s!r}") from exc
        order = tuple(parts[3:])
        if catalog is not None:
            unknown = [oid for oid in order if oid not in catalog]
            if unknown:
                raise MalformedFileError(f"{path}: unknown object ids {unknown} in {name}")
        try:
            scenarios.append(Scenario(name, seed, order, capacity))
        except ValueError as exc:
            raise MalformedFileError(f"{path}: {exc}") from exc
    if not scenarios:
        raise MalformedFileError(f"{path}: no scenarios")
    return scenarios
