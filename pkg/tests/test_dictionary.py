import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from lesionpaint.dictionary import (
    LesionDictionary,
    build_dictionary,
    generate_dataset,
    load_dictionary,
    read_session,
    sample_candidate_mask,
    save_dictionary,
    write_session,
)
from lesionpaint.errors import GenerationError, IngestionError, ParameterError, SamplingError
from lesionpaint.volume import MaskVolume, MultiContrastVolume


def blob_dictionary(n_sessions, per_session, shape=(32, 32, 32), seed=0):
    """Sessions of isolated single-voxel-spaced cubes, so component counts are known."""
    r = np.random.default_rng(seed)
    sites = [(x, y, z) for x in range(1, shape[0] - 2, 4) for y in range(1, shape[1] - 2, 4)
             for z in range(1, shape[2] - 2, 4)]
    masks = []
    for _ in range(n_sessions):
        m = np.zeros(shape, np.uint8)
        for k in r.choice(len(sites), per_session, replace=False):
            x, y, z = sites[k]
            m[x:x + 2, y:y + 2, z:z + int(r.integers(1, 3))] = 1
        masks.append(MaskVolume(m))
    return masks


def test_build_counts_components():
    masks = blob_dictionary(5, 7)
    d = build_dictionary(masks, "toy")
    assert [len(s) for s in d.sessions] == [7] * 5
    assert d.n_components == 35
    for m, comps in zip(masks, d.sessions):
        back = np.zeros(m.shape, np.uint8)
        for c in comps:
            back[tuple(c.T)] = 1
        np.testing.assert_array_equal(back, m.data)


def test_build_rejects_shape_mismatch():
    with pytest.raises(IngestionError):
        build_dictionary([MaskVolume(np.zeros((4, 4, 4), np.uint8)), MaskVolume(np.zeros((4, 4, 5), np.uint8))], "x")


def test_dictionary_rejects_overlap_and_out_of_grid():
    c = np.array([[0, 0, 0], [0, 0, 1]])
    with pytest.raises(IngestionError):
        LesionDictionary("x", (2, 2, 2), ((c, c[:1]),))
    with pytest.raises(IngestionError):
        LesionDictionary("x", (2, 2, 2), ((np.array([[0, 0, 2]]),),))


@pytest.mark.parametrize("mode", ["pooled", "per-session"])
def test_sample_is_union_of_disjoint_selected_components(mode):
    d = build_dictionary(blob_dictionary(10, 8), "toy")
    all_sets = {frozenset(map(tuple, c.tolist())) for s in d.sessions for c in s}
    for i in range(50):
        m, info = sample_candidate_mask(d, 4, 0.25, np.random.default_rng(i), mode, return_info=True)
        assert len(set(info["sessions"])) == 4
        assert info["n_components"] == (8 if mode == "pooled" else 4 * 2)
        # every voxel of the mask belongs to a dictionary component
        on = set(map(tuple, np.argwhere(m.data).tolist()))
        assert on <= set().union(*all_sets)


def test_pooled_count_is_rounded_fraction():
    d = build_dictionary(blob_dictionary(8, 5), "toy")
    for i in range(20):
        _, info = sample_candidate_mask(d, 3, 0.3, np.random.default_rng(i), return_info=True)
        assert info["pool_size"] == 15
        assert info["n_components"] == round(0.3 * 15)


def test_sampling_errors():
    d = build_dictionary(blob_dictionary(3, 2), "toy")
    with pytest.raises(SamplingError):
        sample_candidate_mask(d, 4)
    with pytest.raises(ParameterError):
        sample_candidate_mask(d, 2, 0.0)
    with pytest.raises(ParameterError):
        sample_candidate_mask(d, 2, 0.5, mode="mixed")
    with pytest.raises(SamplingError):
        sample_candidate_mask(build_dictionary([], "e"), 1)


def test_sampling_reproducible():
    d = build_dictionary(blob_dictionary(8, 4), "toy")
    a = sample_candidate_mask(d, 8, 0.125, np.random.default_rng(3))
    b = sample_candidate_mask(d, 8, 0.125, np.random.default_rng(3))
    np.testing.assert_array_equal(a.data, b.data)


@given(hnp.arrays(np.uint8, (6, 5, 4), elements=st.integers(0, 1)))
def test_session_file_roundtrip(tmp_path_factory, m):
    from lesionpaint.volume import connected_components

    comps = connected_components(m, 6)
    p = tmp_path_factory.mktemp("rle") / "s.rle"
    write_session(p, comps, m.shape)
    shape, back = read_session(p)
    assert shape == m.shape
    assert len(back) == len(comps)
    for a, b in zip(comps, back):
        assert set(map(tuple, a.tolist())) == set(map(tuple, b.tolist()))


def test_dictionary_dir_roundtrip(tmp_path):
    d = build_dictionary(blob_dictionary(3, 4, (12, 12, 12)), "mni-toy", names=["a", "b", "c"])
    save_dictionary(d, tmp_path / "d")
    meta = json.loads((tmp_path / "d" / "dictionary.json").read_text())
    assert meta["space_id"] == "mni-toy" and meta["n_components"] == 12
    e = load_dictionary(tmp_path / "d")
    assert e.session_names == ("a", "b", "c") and e.shape == d.shape
    for s1, s2 in zip(d.sessions, e.sessions):
        for c1, c2 in zip(s1, s2):
            assert set(map(tuple, c1.tolist())) == set(map(tuple, c2.tolist()))


def test_bad_session_magic(tmp_path):
    (tmp_path / "x.rle").write_bytes(b"NOPE" * 8)
    with pytest.raises(IngestionError):
        read_session(tmp_path / "x.rle")


def test_generate_dataset_records_failures(tmp_path):
    d = build_dictionary(blob_dictionary(4, 3, (12, 12, 12)), "toy")
    base = MultiContrastVolume.from_arrays({"T1w": np.ones((12, 12, 12))})
    calls = []

    def synth(vol, mask, seed):
        calls.append(seed)
        if len(calls) == 2:
            raise GenerationError("boom")
        return vol

    rows = generate_dataset(d, base, 3, tmp_path, synthesize=synth, seed=1, n_sessions=2, fraction=0.5)
    assert [r["status"] for r in rows] == ["ok", "failed", "ok"]
    lines = (tmp_path / "manifest.jsonl").read_text().splitlines()
    assert [json.loads(l)["index"] for l in lines] == [0, 1, 2]
    assert (tmp_path / "img_00000_T1w.nii").exists() and not (tmp_path / "img_00001_T1w.nii").exists()
    rows2 = generate_dataset(d, base, 3, tmp_path / "again", synthesize=lambda v, m, s: v, seed=1, n_sessions=2,
                             fraction=0.5)
    # per-image seeds depend only on the run seed and the image index
    assert [r["seed"] for r in rows2] == [r["seed"] for r in rows] == calls
    assert len(set(calls)) == 3
