"""Record file parsing/serialization, dataset splits, and config files."""

import json

import numpy as np
import pytest

from seqstruct import data as dio


def chain_coords(n):
    return (np.arange(n)[:, None] * np.array([3.75, 0.0, 0.0])).tolist()


def record_obj(rid="r1", seq="ACDE", frag=(1, 3)):
    return {
        "id": rid,
        "sequence": seq,
        "coords": chain_coords(len(seq)),
        "fragments": list(frag),
    }


def write_jsonl(path, objs):
    path.write_text("\n".join(json.dumps(o) for o in objs) + "\n")


# ---------------------------------------------------------------------------
# record validation


def test_record_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    recs = [dio.synthetic_record(f"s{i}", 10, 3, rng) for i in range(4)]
    path = tmp_path / "recs.jsonl"
    dio.write_records(str(path), recs)
    back = dio.parse_records(str(path))
    assert [r.id for r in back] == [r.id for r in recs]
    for a, b in zip(recs, back):
        assert a.sequence == b.sequence
        assert np.array_equal(a.coords, b.coords)  # float repr round-trips exactly
        assert np.array_equal(a.fragments, b.fragments)


def test_file_fragments_are_one_based(tmp_path):
    path = tmp_path / "r.jsonl"
    write_jsonl(path, [record_obj(frag=(1, 4))])
    rec = dio.parse_records(str(path))[0]
    assert np.array_equal(rec.fragments, [0, 3])  # 0-based in memory

    write_jsonl(path, [record_obj(frag=(0, 2))])
    with pytest.raises(dio.ParseError, match="1-based"):
        dio.parse_records(str(path))


def test_parse_errors_name_line_numbers(tmp_path):
    path = tmp_path / "r.jsonl"
    good = record_obj()
    bad = record_obj(rid="r2", seq="ACXE")  # X is not an amino acid
    write_jsonl(path, [good, bad])
    with pytest.raises(dio.ParseError, match=r":2:"):
        dio.parse_records(str(path))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda o: o.update(sequence="ACXE"),
        lambda o: o.update(coords=o["coords"][:-1]),
        lambda o: o.update(fragments=[1, 99]),
        lambda o: o.update(fragments=[3, 1]),
        lambda o: o.pop("coords"),
    ],
)
def test_parse_rejects_malformed_records(tmp_path, mutate):
    obj = record_obj()
    mutate(obj)
    path = tmp_path / "r.jsonl"
    write_jsonl(path, [obj])
    with pytest.raises(dio.ParseError):
        dio.parse_records(str(path))


def test_parse_rejects_nonfinite_coords(tmp_path):
    obj = record_obj()
    obj["coords"][1][0] = float("nan")
    path = tmp_path / "r.jsonl"
    write_jsonl(path, [obj])
    with pytest.raises(dio.ParseError, match="non-finite"):
        dio.parse_records(str(path))


def test_distance_band_violation_names_position():
    coords = np.array(chain_coords(4))
    coords[2] = coords[1] + np.array([10.0, 0.0, 0.0])  # 10 A jump at step 1->2
    with pytest.raises(ValueError) as exc:
        dio.ProteinRecord(id="r", sequence="ACDE", coords=coords, fragments=np.array([]))
    assert "position 1" in str(exc.value)


def test_too_close_consecutive_residues_rejected():
    coords = np.array(chain_coords(3))
    coords[2] = coords[1] + np.array([0.5, 0.0, 0.0])
    with pytest.raises(ValueError):
        dio.ProteinRecord(id="r", sequence="ACD", coords=coords, fragments=np.array([]))


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(dio.ParseError, match="no records"):
        dio.parse_records(str(path))


def test_free_indices_complement_fragments():
    rec = dio.ProteinRecord(
        id="r", sequence="ACDEF", coords=chain_coords(5), fragments=np.array([1, 3])
    )
    assert np.array_equal(rec.free_indices(), [0, 2, 4])


def test_transform_record_coords_skips_band_check():
    rec = dio.ProteinRecord(
        id="r", sequence="ACD", coords=chain_coords(3), fragments=np.array([0])
    )
    stretched = np.array(chain_coords(3)) * 100.0  # would fail validation on ingest
    out = dio.transform_record_coords(rec, stretched)
    assert np.array_equal(out.coords, stretched)
    assert out.sequence == rec.sequence
    assert np.array_equal(rec.coords, chain_coords(3))  # original untouched


# ---------------------------------------------------------------------------
# splits


class _Stub:
    def __init__(self, rid):
        self.id = rid


def test_split_sizes_floor_small_parts():
    recs = [_Stub(f"r{i}") for i in range(10)]
    split = dio.split_dataset(recs, ratios=(8, 1, 1), seed=0)
    assert (len(split.train), len(split.validation), len(split.test)) == (8, 1, 1)
    recs = [_Stub(f"r{i}") for i in range(12)]
    split = dio.split_dataset(recs, ratios=(8, 1, 1), seed=0)
    # 12/10 floors to 1 for each small part; the remainder of 10 goes to train
    assert (len(split.train), len(split.validation), len(split.test)) == (10, 1, 1)


def test_split_is_disjoint_cover():
    recs = [_Stub(f"r{i}") for i in range(23)]
    split = dio.split_dataset(recs, seed=3)
    everything = split.train + split.validation + split.test
    assert sorted(everything) == sorted(r.id for r in recs)
    assert len(set(everything)) == len(everything)


def test_split_deterministic_by_seed():
    recs = [_Stub(f"r{i}") for i in range(20)]
    a = dio.split_dataset(recs, seed=7)
    b = dio.split_dataset(recs, seed=7)
    c = dio.split_dataset(recs, seed=8)
    assert a == b
    assert a != c


def test_split_too_few_records():
    with pytest.raises(ValueError):
        dio.split_dataset([_Stub("a"), _Stub("b")], ratios=(8, 1, 1))


def test_split_zero_ratio_part_allowed():
    recs = [_Stub(f"r{i}") for i in range(5)]
    split = dio.split_dataset(recs, ratios=(1, 0, 0), seed=0)
    assert len(split.train) == 5
    assert split.validation == [] and split.test == []


# ---------------------------------------------------------------------------
# config files


def test_parse_config_file(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(
        "# training setup\n"
        "epochs = 20\n"
        "learning_rate=5e-4  # inline comment\n"
        "\n"
        "variant = no_gate\n"
    )
    cfg = dio.parse_config_file(str(path))
    assert cfg == {"epochs": "20", "learning_rate": "5e-4", "variant": "no_gate"}


def test_parse_config_errors_name_lines(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("epochs = 20\nnot a pair\n")
    with pytest.raises(dio.ParseError, match=r":2:"):
        dio.parse_config_file(str(path))
    path.write_text("epochs = 20\nepochs = 21\n")
    with pytest.raises(dio.ParseError, match="duplicate"):
        dio.parse_config_file(str(path))


# ---------------------------------------------------------------------------
# synthetic fixtures


def test_synthetic_record_is_valid_and_self_avoiding():
    rng = np.random.default_rng(1)
    rec = dio.synthetic_record("s", 30, 8, rng, clearance=3.0)
    steps = np.linalg.norm(np.diff(rec.coords, axis=0), axis=1)
    assert np.max(np.abs(steps - 3.75)) < 1e-9
    d = np.linalg.norm(rec.coords[:, None] - rec.coords[None, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 3.0 - 1e-9
    assert rec.fragments.size == 8
    assert np.all(np.diff(rec.fragments) > 0)


def test_atomic_write_replaces_existing(tmp_path):
    path = tmp_path / "out.txt"
    path.write_text("old")
    dio.atomic_write_text(str(path), "new")
    assert path.read_text() == "new"
    leftovers = [p for p in tmp_path.iterdir() if p.name.startswith(".tmp-")]
    assert leftovers == []
