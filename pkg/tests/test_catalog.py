import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proppack.catalog import (
    Catalog,
    GenerationSpec,
    ObjectRecord,
    PropertyMarginals,
    Scenario,
    decode_slab,
    encode_slab,
    generate_synthetic,
    load_catalog,
    load_scenarios,
    make_box,
    make_cylinder,
    make_hemisphere,
    make_l_shape,
    make_scenario,
    make_t_shape,
    save_catalog,
    save_scenarios,
)
from proppack.errors import (
    ChecksumMismatchError,
    DuplicateIdError,
    MalformedFileError,
    VersionMismatchError,
)
from proppack.properties import ObjectProperties
from proppack.voxelgeom import volume


# --- primitives -----------------------------------------------------------

def test_primitive_shapes_are_tight_and_sized():
    assert make_box((2, 3, 4)).dims == (2, 3, 4)
    l = make_l_shape((4, 4, 2), (2, 2))
    assert l.dims == (4, 4, 2) and volume(l) == 4 * 4 * 2 - 2 * 2 * 2
    t = make_t_shape((5, 2, 2), 1, 3)
    assert t.dims == (5, 5, 2)
    cyl = make_cylinder(4, 3)
    assert cyl.dims == (4, 4, 3)
    dome = make_hemisphere(3)
    assert dome.dims == (6, 6, 3)

def test_l_shape_rejects_full_cut():
    with pytest.raises(ValueError):
        make_l_shape((3, 3, 1), (3, 1))


# --- generation -----------------------------------------------------------

def test_generate_boxes_reproducible_byte_identical(tmp_path):
    spec = GenerationSpec(counts={"box": 10}, size_range=(2, 6))
    cat_a = generate_synthetic(spec, seed=42)
    cat_b = generate_synthetic(spec, seed=42)
    assert len(cat_a) == 10
    pa, pb = tmp_path / "a.cat", tmp_path / "b.cat"
    save_catalog(cat_a, pa)
    save_catalog(cat_b, pb)
    assert pa.read_bytes() == pb.read_bytes()
    lo, hi = spec.size_range
    for r in cat_a:
        assert all(lo <= d <= hi for d in r.shape.dims)

def test_generate_different_seeds_differ(tmp_path):
    spec = GenerationSpec(counts={"box": 10})
    pa, pb = tmp_path / "a.cat", tmp_path / "b.cat"
    save_catalog(generate_synthetic(spec, seed=1), pa)
    save_catalog(generate_synthetic(spec, seed=2), pb)
    assert pa.read_bytes() != pb.read_bytes()

def test_generate_marginal_one_sets_flag_everywhere():
    spec = GenerationSpec(
        counts={"box": 5, "cylinder": 3},
        marginals=PropertyMarginals(fragile=1.0),
    )
    cat = generate_synthetic(spec, seed=7)
    assert len(cat) == 8
    assert all(r.properties.fragile for r in cat)

def test_generate_all_families():
    spec = GenerationSpec(counts={f: 2 for f in ("box", "l_shape", "t_shape", "cylinder", "hemisphere")})
    cat = generate_synthetic(spec, seed=3)
    assert len(cat) == 10
    assert {r.class_name for r in cat} == {"box", "l_shape", "t_shape", "cylinder", "hemisphere"}


# --- scenarios ------------------------------------------------------------

def test_make_scenario_deterministic_and_resolvable():
    cat = generate_synthetic(GenerationSpec(counts={"box": 6}), seed=0)
    s1 = make_scenario(cat, 20, seed=5)
    s2 = make_scenario(cat, 20, seed=5)
    s3 = make_scenario(cat, 20, seed=6)
    assert s1.order == s2.order and s1.order != s3.order
    assert len(s1.order) == 20
    assert all(oid in cat for oid in s1.order)
    assert s1.buffer_capacity == 10  # default

def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario("s", 0, ("a",), buffer_capacity=0)
    with pytest.raises(ValueError):
        Scenario("s", 0, ())


# --- slab codec -----------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 99_999), nx=st.integers(1, 8), ny=st.integers(1, 8))
def test_slab_codec_round_trip(seed, nx, ny):
    rng = np.random.default_rng(seed)
    slab = rng.random((nx, ny)) < 0.5
    assert np.array_equal(decode_slab(encode_slab(slab), nx, ny), slab)

def test_slab_codec_errors():
    with pytest.raises(MalformedFileError):
        decode_slab("2o junk", 2, 2)
    with pytest.raises(MalformedFileError):
        decode_slab("3o", 2, 2)  # covers too few cells
    with pytest.raises(MalformedFileError):
        decode_slab("5o", 2, 2)  # overflow


# --- catalog file format --------------------------------------------------

def _sample_catalog():
    records = [
        ObjectRecord("knife0", "tool", make_box((6, 1, 1), "knife0"), ObjectProperties(sharp=True, density_level=5)),
        ObjectRecord("fig0", "food", make_hemisphere(2, "fig0"), ObjectProperties(soft=True, edible=True, density_level=2)),
        ObjectRecord("vase0", "decor", make_cylinder(3, 4, "vase0"), ObjectProperties(fragile=True, density_level=3)),
    ]
    return Catalog(records)

def test_catalog_round_trip(tmp_path):
    cat = _sample_catalog()
    path = tmp_path / "cat.txt"
    save_catalog(cat, path)
    loaded = load_catalog(path)
    assert len(loaded) == len(cat)
    for a, b in zip(cat, loaded):
        assert a.id == b.id and a.class_name == b.class_name
        assert a.properties == b.properties
        assert a.shape == b.shape
    assert loaded.material_table.entries == cat.material_table.entries
    # round trip is byte-stable
    path2 = tmp_path / "cat2.txt"
    save_catalog(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()

def test_catalog_avoidance_rederived_on_load(tmp_path):
    cat = _sample_catalog()
    path = tmp_path / "cat.txt"
    save_catalog(cat, path)
    loaded = load_catalog(path)
    assert loaded.avoidance.pair("knife0", "fig0")
    assert not loaded.avoidance.pair("knife0", "vase0")

def test_catalog_version_mismatch(tmp_path):
    cat = _sample_catalog()
    path = tmp_path / "cat.txt"
    save_catalog(cat, path)
    text = path.read_text().replace("packcatalog 1", "packcatalog 9", 1)
    path.write_text(text)
    with pytest.raises(VersionMismatchError):
        load_catalog(path)

def test_catalog_truncated_file(tmp_path):
    cat = _sample_catalog()
    path = tmp_path / "cat.txt"
    save_catalog(cat, path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[: len(lines) // 2]))
    with pytest.raises(MalformedFileError):
        load_catalog(path)

def test_catalog_malformed_grid(tmp_path):
    cat = _sample_catalog()
    path = tmp_path / "cat.txt"
    save_catalog(cat, path)
    text = path.read_text().replace("6o", "5o1x", 1)
    path.write_text(text)
    with pytest.raises(MalformedFileError):
        load_catalog(path)

def test_catalog_checksum_mismatch(tmp_path):
    cat = _sample_catalog()
    path = tmp_path / "cat.txt"
    save_catalog(cat, path)
    # flip a property that feeds the avoidance rules but keep the old checksum
    text = path.read_text().replace("sharp=1", "sharp=0", 1)
    path.write_text(text)
    with pytest.raises(ChecksumMismatchError):
        load_catalog(path)

def test_catalog_duplicate_ids():
    rec = ObjectRecord("dup", "box", make_box((1, 1, 1), "dup"), ObjectProperties())
    with pytest.raises(DuplicateIdError):
        Catalog([rec, rec])


# --- scenario file format -------------------------------------------------

def test_scenario_file_round_trip(tmp_path):
    cat = _sample_catalog()
    scenarios = [make_scenario(cat, 8, seed=s, buffer_capacity=4, name=f"e{s}") for s in range(3)]
    path = tmp_path / "runs.txt"
    save_scenarios(scenarios, path, catalog_name="sample")
    loaded = load_scenarios(path, cat)
    assert loaded == scenarios

def test_scenario_file_unknown_ids(tmp_path):
    cat = _sample_catalog()
    path = tmp_path / "runs.txt"
    save_scenarios([Scenario("e0", 1, ("ghost",), 4)], path)
    load_scenarios(path)  # fine without catalog check
    with pytest.raises(MalformedFileError):
        load_scenarios(path, cat)

def test_scenario_file_version_and_duplicates(tmp_path):
    path = tmp_path / "runs.txt"
    path.write_text("packscenarios 2\ncatalog x\nbuffer_capacity 4\nscenario a 1 id1\n")
    with pytest.raises(VersionMismatchError):
        load_scenarios(path)
    path.write_text(
        "packscenarios 1\ncatalog x\nbuffer_capacity 4\n"
        "scenario a 1 id1\nscenario a 2 id1\n"
    )
    with pytest.raises(DuplicateIdError):
        load_scenarios(path)
