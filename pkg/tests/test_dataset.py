from __future__ import annotations

import json

import numpy as np
import pytest

from telecodec.dataset import (
    GROUP_SAMPLES,
    DatasetManifest,
    GroupBank,
    build_dataset,
    build_group,
    select_rir_pair,
    synth_room_pair,
    verify_partition,
)
from telecodec.dsp import ImpulseResponse, convolve_rir, estimate_rt60, peak_normalize, read_wav, synth_rir
from telecodec.dsp.rir import preprocess_rir
from telecodec.errors import BandExhausted, IoError, ValidationError


def _rir(rt60, seed, room_id=None):
    return preprocess_rir(synth_rir(rt60, max(0.3, 2 * rt60), seed, room_id=room_id))


def test_select_forced_choice():
    small, large = _rir(0.1, 1), _rir(0.8, 2)
    a, b = select_rir_pair([large, small], seed=3)
    assert a is small and b is large


def test_select_band_exhausted():
    with pytest.raises(BandExhausted):
        select_rir_pair([_rir(0.3, 1), _rir(0.35, 2)], seed=0)
    with pytest.raises(BandExhausted):
        select_rir_pair([_rir(0.1, 1), _rir(0.3, 2)], seed=0)


def test_select_coverage_and_determinism():
    smalls = [_rir(0.08 + 0.015 * k, k, room_id=k) for k in range(10)]
    larges = [_rir(0.5 + 0.06 * k, 50 + k, room_id=100 + k) for k in range(10)]
    pool = smalls + larges
    picked_small, picked_large = set(), set()
    for seed in range(1000):
        a, b = select_rir_pair(pool, seed)
        picked_small.add(a.room_id)
        picked_large.add(b.room_id)
    assert picked_small == {r.room_id for r in smalls}
    assert picked_large == {r.room_id for r in larges}
    assert select_rir_pair(pool, 42)[0] is select_rir_pair(pool, 42)[0]


@pytest.fixture(scope="module")
def group():
    pool = synth_room_pair((10, 11), seed=9)
    return build_group((1, 2), (10, 11), pool, seed=9)


def test_group_construction_identity(group):
    expected = peak_normalize(convolve_rir(group.clean_1, group.rir_small))
    np.testing.assert_array_equal(group.reverb_11.samples, expected.samples)
    expected = peak_normalize(convolve_rir(group.clean_2, group.rir_large))
    np.testing.assert_array_equal(group.reverb_22.samples, expected.samples)


def test_group_invariants(group):
    for name in ("clean_1", "clean_2", "reverb_11", "reverb_12", "reverb_21", "reverb_22"):
        sig = getattr(group, name)
        assert len(sig) == GROUP_SAMPLES == 48000
        assert np.max(np.abs(sig.samples)) <= 1.0
    assert estimate_rt60(group.rir_small) < 0.25
    assert 0.4 < estimate_rt60(group.rir_large) < 1.2
    assert group.speaker_ids == (1, 2) and group.room_ids == (10, 11)
    assert np.max(np.abs(group.reverb_12.samples)) == pytest.approx(1.0)


def test_group_deterministic(group):
    again = build_group((1, 2), (10, 11), synth_room_pair((10, 11), seed=9), seed=9)
    np.testing.assert_array_equal(group.stack(), again.stack())


def test_group_rejects_duplicate_ids():
    pool = synth_room_pair((10, 11), seed=1)
    with pytest.raises(ValidationError):
        build_group((3, 3), (10, 11), pool, seed=1)


def test_group_propagates_band_exhausted():
    pool = [_rir(0.3, 1, room_id=1), _rir(0.8, 2, room_id=2)]
    with pytest.raises(BandExhausted):
        build_group((1, 2), (1, 2), pool, seed=0)


def test_build_dataset_counts_and_exclusivity(small_dataset):
    m = small_dataset
    assert len(m.entries) == 10
    assert [len(m.split(s)) for s in ("train", "val", "test")] == [6, 2, 2]
    spk = {s: {i for e in m.split(s) for i in e.speaker_ids} for s in ("train", "val", "test")}
    rooms = {s: {i for e in m.split(s) for i in e.room_ids} for s in ("train", "val", "test")}
    for sets in (spk, rooms):
        assert not sets["train"] & sets["val"]
        assert not sets["train"] & sets["test"]
        assert not sets["val"] & sets["test"]
    assert verify_partition(m).ok


def test_manifest_paths_per_group(tmp_path):
    m = build_dataset(tmp_path, 1, 1, 1, seed=2)
    test = m.split("test")
    assert len(test) == 1
    paths = test[0].paths
    assert len([k for k in paths if not k.startswith("rir")]) == 6
    assert len([k for k in paths if k.startswith("rir")]) == 2
    for key in paths:
        audio = read_wav(m.path(test[0], key))
        assert len(audio) > 0


def test_stored_rirs_in_band(small_dataset):
    report = verify_partition(small_dataset, remeasure=True)
    assert report.ok, report.summary()


def test_manifest_roundtrip(small_dataset):
    loaded = DatasetManifest.load(small_dataset.root)
    assert loaded.seed == small_dataset.seed
    assert [e.to_json() for e in loaded.entries] == [e.to_json() for e in small_dataset.entries]


def test_rebuild_is_byte_identical(tmp_path):
    a = build_dataset(tmp_path / "a", 2, 1, 1, seed=3)
    b = build_dataset(tmp_path / "b", 2, 1, 1, seed=3)
    assert (a.root / "manifest.jsonl").read_bytes() == (b.root / "manifest.jsonl").read_bytes()
    for e in a.entries:
        for key in e.paths:
            assert a.path(e, key).read_bytes() == b.path(e, key).read_bytes()


def _rewrite(manifest_path, edit):
    lines = manifest_path.read_text().splitlines()
    records = [json.loads(ln) for ln in lines[1:]]
    edit(records)
    manifest_path.write_text("\n".join([lines[0]] + [json.dumps(r) for r in records]) + "\n")


def test_verify_detects_speaker_leak(tmp_path):
    m = build_dataset(tmp_path, 2, 1, 1, seed=4)
    leaked = m.split("train")[0].speaker_ids[0]

    def edit(records):
        for r in records:
            if r["split"] == "test":
                r["speaker_ids"][0] = leaked

    _rewrite(tmp_path / "manifest.jsonl", edit)
    report = verify_partition(tmp_path / "manifest.jsonl")
    assert not report.ok
    assert any(str(leaked) in v for v in report.violations)


def test_verify_detects_band_violation(tmp_path):
    m = build_dataset(tmp_path, 1, 1, 1, seed=6)

    def edit(records):
        records[0]["rt60_large"] = 1.3

    _rewrite(tmp_path / "manifest.jsonl", edit)
    report = verify_partition(DatasetManifest.load(tmp_path))
    assert not report.ok
    assert any("rir_large" in v for v in report.violations)
    assert len(m.entries) == 3


def test_verify_detects_missing_file(tmp_path):
    m = build_dataset(tmp_path, 1, 1, 1, seed=8)
    m.path(m.entries[0], "clean_1").unlink()
    report = verify_partition(DatasetManifest.load(tmp_path))
    assert any("missing file" in v for v in report.violations)


def test_unreadable_manifest(tmp_path):
    (tmp_path / "manifest.jsonl").write_text("{broken")
    with pytest.raises(IoError):
        verify_partition(tmp_path / "manifest.jsonl")


def test_invalid_counts(tmp_path):
    with pytest.raises(ValidationError):
        build_dataset(tmp_path, 0, 1, 1)


def test_group_bank(small_dataset):
    bank = GroupBank.from_manifest(small_dataset, "train")
    assert bank.data.shape == (6, 6, 48000)
    assert bank.data.dtype == np.float32
