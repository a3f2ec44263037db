import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from autocollect.geometry import PointCloud, Pose
from autocollect.library import (
    AffordanceLibrary,
    Demonstration,
    DemonstrationStep,
    LibraryError,
    ObjectDescriptor,
    Shape,
    Verb,
    downsample_cloud,
    load_library,
    save_library,
    score_similarity,
    shape_affinity,
    verb_affinity,
)


def make_step(x=0.0, gripper=0, label=1):
    cloud = PointCloud(np.array([[x, 0.0, 0.02]]), np.array([label]))
    return DemonstrationStep(cloud, Pose.from_translation([x, 0.0, 0.1]), gripper)


def make_demo(demo_id="demo-0", verb=Verb.PICK, name="ball", shape=Shape.OVAL,
              n_steps=3, provenance="seed"):
    steps = tuple(make_step(0.05 * i, gripper=i % 2) for i in range(n_steps))
    return Demonstration(demo_id, verb, ObjectDescriptor(name, shape), steps,
                         object_ids=(1,), provenance=provenance)


def test_demo_requires_two_steps_and_continuity():
    with pytest.raises(LibraryError):
        make_demo(n_steps=1)
    steps = (make_step(0.0), make_step(0.5))
    with pytest.raises(LibraryError, match="jumps"):
        Demonstration("d", Verb.PICK, ObjectDescriptor("b", Shape.OVAL), steps)


def test_append_and_duplicate():
    lib = AffordanceLibrary()
    lib.append(make_demo())
    assert len(lib) == 1
    assert "demo-0" in lib
    with pytest.raises(LibraryError, match="duplicate"):
        lib.append(make_demo())


def test_fold_query_matches_close_demo_best():
    lib = AffordanceLibrary()
    close_demo = make_demo("close-box", Verb.CLOSE, "box", Shape.ARTICULATED)
    lib.append(close_demo)
    lib.append(make_demo("open-box", Verb.OPEN, "box", Shape.ARTICULATED))
    lib.append(make_demo("pick-ball", Verb.PICK, "ball", Shape.OVAL))

    query = (Verb.FOLD, ObjectDescriptor("towel", Shape.FLAT))
    score = score_similarity(query, close_demo)
    assert score >= 0.6
    ranked = lib.retrieve_ranked(query, r=3)
    assert ranked[0].id == "close-box"


def test_identical_shape_gives_full_geometry_similarity():
    demo = make_demo("grip-ball", Verb.PICK, "grip ball", Shape.OVAL)
    query = (Verb.PICK, ObjectDescriptor("lemon", Shape.OVAL))
    # action and geometry both saturate, so the weighted sum is 1.0
    assert score_similarity(query, demo) == pytest.approx(1.0)


def test_identical_query_scores_one():
    demo = make_demo("d", Verb.STACK, "red block", Shape.CUBOID)
    query = (Verb.STACK, ObjectDescriptor("red block", Shape.CUBOID))
    assert score_similarity(query, demo) == pytest.approx(1.0)


def test_retrieve_ranked_ordering_and_ties():
    lib = AffordanceLibrary()
    lib.append(make_demo("b-demo", Verb.PICK, "thing", Shape.CUBOID))
    lib.append(make_demo("a-demo", Verb.PICK, "thing", Shape.CUBOID))
    lib.append(make_demo("c-demo", Verb.OPEN, "door", Shape.ARTICULATED))
    query = (Verb.PICK, ObjectDescriptor("thing", Shape.CUBOID))

    ranked = lib.retrieve_ranked(query, r=2)
    assert [d.id for d in ranked] == ["a-demo", "b-demo"]

    full = lib.retrieve_ranked(query, r=10)
    assert len(full) == 3

    # brute-force argmax agrees with r=1
    best = max(sorted(lib.demos.values(), key=lambda d: d.id),
               key=lambda d: score_similarity(query, d))
    assert lib.retrieve_ranked(query, r=1)[0].id == best.id


def test_retrieve_empty_library_returns_empty():
    assert AffordanceLibrary().retrieve_ranked(
        (Verb.PICK, ObjectDescriptor("x", Shape.OVAL)), r=1) == []


def test_monotonic_ranking_under_append():
    lib = AffordanceLibrary()
    lib.append(make_demo("m1", Verb.PICK, "cup", Shape.CYLINDRICAL))
    lib.append(make_demo("m2", Verb.PLACE, "cup", Shape.CYLINDRICAL))
    lib.append(make_demo("m3", Verb.PUSH_IN, "block", Shape.CUBOID))
    query = (Verb.PICK, ObjectDescriptor("cup", Shape.CYLINDRICAL))
    before = [d.id for d in lib.retrieve_ranked(query, r=10)]
    lib.append(make_demo("m4", Verb.CLOSE, "box", Shape.ARTICULATED))
    after = [d.id for d in lib.retrieve_ranked(query, r=10)]
    assert [i for i in after if i in before] == before


shapes = st.sampled_from(list(Shape))
verbs = st.sampled_from(list(Verb))


@given(shapes, shapes)
def test_shape_affinity_symmetric(a, b):
    assert shape_affinity(a, b) == shape_affinity(b, a)


@given(verbs, verbs)
@settings(max_examples=120)
def test_verb_affinity_bounds(a, b):
    v = verb_affinity(a, b)
    assert 0.0 <= v <= 1.0
    assert verb_affinity(a, b) == verb_affinity(b, a)


def test_save_load_round_trip(tmp_path):
    lib = AffordanceLibrary()
    for i in range(5):
        lib.append(make_demo(f"demo-{i}", Verb.PICK, "ball", Shape.OVAL))
    path = tmp_path / "lib.jsonl"
    save_library(lib, path)
    again = load_library(path)
    assert list(again.demos) == list(lib.demos)
    for a, b in zip(again.demos.values(), lib.demos.values()):
        assert a == b

    # byte-exact: save(load(file)) reproduces the file
    path2 = tmp_path / "lib2.jsonl"
    save_library(again, path2)
    assert path.read_bytes() == path2.read_bytes()

    assert len(path.read_text().splitlines()) == 5


def test_load_empty_dir_and_empty_file(tmp_path):
    assert len(load_library(tmp_path)) == 0
    f = tmp_path / "lib.jsonl"
    f.write_text("")
    assert len(load_library(f)) == 0


def test_load_duplicate_id_names_offender(tmp_path):
    lib = AffordanceLibrary()
    lib.append(make_demo("dup-id"))
    path = tmp_path / "lib.jsonl"
    save_library(lib, path)
    line = path.read_text()
    path.write_text(line + line)
    with pytest.raises(LibraryError, match="dup-id"):
        load_library(path)


def test_load_reports_record_index_on_parse_error(tmp_path):
    lib = AffordanceLibrary()
    lib.append(make_demo("ok"))
    path = tmp_path / "lib.jsonl"
    save_library(lib, path)
    with path.open("a") as f:
        f.write("{not json\n")
    with pytest.raises(LibraryError, match="record 2"):
        load_library(path)


def test_unknown_fields_rejected(tmp_path):
    rec = make_demo("x").to_record()
    rec["surprise"] = 1
    path = tmp_path / "lib.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(LibraryError, match="surprise"):
        load_library(path)


def test_downsample_cloud_budget():
    cloud = PointCloud(np.random.default_rng(0).normal(size=(1000, 3)),
                       np.zeros(1000, dtype=int))
    small = downsample_cloud(cloud, 512)
    assert len(small) == 512
    assert len(downsample_cloud(small, 512)) == 512


def test_harvested_provenance_round_trip(tmp_path):
    lib = AffordanceLibrary()
    lib.append(make_demo("h-1", provenance="harvested"))
    path = tmp_path / "lib.jsonl"
    save_library(lib, path)
    assert load_library(path).get("h-1").provenance == "harvested"
