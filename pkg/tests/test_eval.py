from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from telecodec.codec import CodecModel, ModelConfig
from telecodec.dsp import AudioBuffer, convolve_rir, peak_normalize, synth_speech
from telecodec.dsp.rir import preprocess_rir, synth_rir
from telecodec.errors import (
    DegenerateReference,
    DegenerateVariance,
    InsufficientSamples,
    InvalidInput,
    ShapeError,
)
from telecodec.eval import log_mel_distance, pca_fit, pca_project, pearson, si_sdr, welch_t_test
from telecodec.eval.analysis import (
    ProbeConfig,
    TeleportPair,
    ablate_downsampling,
    build_probe_items,
    correlation_from_vectors,
    export_scatter,
    nearest_centroid_loo,
    planted_correlation,
    summarize,
    task_distances,
    task_variants,
    teleport_rt60_eval,
)
from telecodec.train.tasks import SIGNAL_ORDER, TaskId, enumerate_pairs

from conftest import TINY

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


# -- si_sdr -------------------------------------------------------------------


def test_si_sdr_identity_capped(rng):
    x = rng.standard_normal(1000)
    assert si_sdr(x, x) == 60.0


def test_si_sdr_scaled_estimate_matches_identity(rng):
    x = rng.standard_normal(1000)
    assert si_sdr(x, 0.3 * x) == si_sdr(x, x)


def test_si_sdr_orthogonal_noise_zero_db(rng):
    ref = rng.standard_normal(4096)
    ref /= np.linalg.norm(ref)
    noise = rng.standard_normal(4096)
    noise -= np.dot(noise, ref) * ref
    noise /= np.linalg.norm(noise)
    assert si_sdr(ref, ref + noise) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_si_sdr_scale_invariance(alpha, seed):
    r = np.random.default_rng(seed)
    ref, est = r.standard_normal(512), r.standard_normal(512)
    assert si_sdr(ref, alpha * est) == pytest.approx(si_sdr(ref, est), abs=1e-9)


def test_si_sdr_errors(rng):
    with pytest.raises(DegenerateReference):
        si_sdr(np.zeros(10), rng.standard_normal(10))
    with pytest.raises(ShapeError):
        si_sdr(np.ones(10), np.ones(11))
    assert si_sdr(rng.standard_normal(10), np.zeros(10)) == -60.0


# -- log_mel_distance -----------------------------------------------------------


def test_log_mel_distance_identity_and_symmetry(rng):
    a, b = rng.standard_normal(8000), rng.standard_normal(8000)
    assert log_mel_distance(a, a) == 0.0
    assert log_mel_distance(a, b) == log_mel_distance(b, a)
    assert log_mel_distance(a, b) > 0
    with pytest.raises(ShapeError):
        log_mel_distance(a, b[:-1])


def test_log_mel_distance_monotone_in_reverberation():
    for speaker in range(5):
        clean = synth_speech(2.0, speaker, 100 + speaker)
        dist = {}
        for rt in (0.1, 1.0):
            rir = preprocess_rir(synth_rir(rt, 2 * rt, seed=speaker))
            dist[rt] = log_mel_distance(clean, peak_normalize(convolve_rir(clean, rir), 0.9))
        assert dist[1.0] > dist[0.1]


# -- pearson --------------------------------------------------------------------


def test_pearson_examples():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)


def test_pearson_errors():
    with pytest.raises(DegenerateVariance):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidInput):
        pearson([1, 2], [1, 2])
    with pytest.raises(InvalidInput):
        pearson([1, 2, 3], [1, 2, 3, 4])


@settings(max_examples=80, deadline=None)
@given(
    x=arrays(np.float64, 12, elements=finite),
    y=arrays(np.float64, 12, elements=finite),
    a=st.floats(0.01, 100),
    b=st.floats(-100, 100),
)
def test_pearson_affine_invariance(x, y, a, b):
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    r = pearson(x, y)
    assert -1.0 <= r <= 1.0
    assert pearson(a * x + b, y) == pytest.approx(r, abs=1e-9)
    assert pearson(x, -a * y + b) == pytest.approx(-r, abs=1e-9)


# -- welch ----------------------------------------------------------------------


def test_welch_examples(rng):
    t, _, p = welch_t_test([1, 2, 3], [1, 2, 3])
    assert t == 0.0 and p == pytest.approx(1.0, abs=0.05)
    a = rng.normal(0.0, 0.1, 100)
    b = rng.normal(1.0, 0.1, 100)
    assert welch_t_test(a, b)[2] < 1e-10


def test_welch_matches_textbook_values():
    # hand computation: means 2 and 5, variances 1 and 2.5, n = 3 and 4
    a, b = [1.0, 2.0, 3.0], [3.0, 4.0, 5.0, 8.0]
    t, df, _ = welch_t_test(a, b)
    qa, qb = 1.0 / 3, (14 / 3) / 4
    assert t == pytest.approx((2.0 - 5.0) / np.sqrt(qa + qb))
    assert df == pytest.approx((qa + qb) ** 2 / (qa**2 / 2 + qb**2 / 3))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), na=st.integers(2, 30), nb=st.integers(2, 30))
def test_welch_symmetric(seed, na, nb):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal(na), r.standard_normal(nb) + 0.5
    assert welch_t_test(a, b)[2] == pytest.approx(welch_t_test(b, a)[2], rel=1e-12)
    assert welch_t_test(a, b)[0] == pytest.approx(-welch_t_test(b, a)[0], rel=1e-12)


def test_welch_errors():
    with pytest.raises(DegenerateVariance):
        welch_t_test([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidInput):
        welch_t_test([1], [1, 2, 3])


# -- PCA ------------------------------------------------------------------------


def test_pca_line_through_origin(rng):
    direction = rng.standard_normal(16)
    x = rng.standard_normal(50)[:, None] * direction[None]
    model = pca_fit(x)
    assert model.explained_variance_ratio[0] >= 0.999


def test_pca_train_projection_zero_mean_and_orthonormal(rng):
    x = rng.standard_normal((40, 64)) * rng.uniform(0.1, 5, 64) + rng.standard_normal(64)
    model = pca_fit(x)
    assert model.fit_on_train and model.n_train == 40
    np.testing.assert_allclose(pca_project(model, x).mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(model.axes @ model.axes.T, np.eye(10), atol=1e-5)
    assert model.explained_variance_ratio.sum() <= 1.0 + 1e-12


def test_pca_matches_power_iteration(rng):
    x = rng.standard_normal((20, 64))
    model = pca_fit(x, n_components=5)
    z = (x - x.mean(0)) / x.std(0)
    cov = z.T @ z / (len(z) - 1)
    power_rng = np.random.default_rng(7)
    for k in range(5):
        v = power_rng.standard_normal(64)
        for _ in range(5000):
            v = cov @ v
            v /= np.linalg.norm(v)
        lam = v @ cov @ v
        cov = cov - lam * np.outer(v, v)
        assert abs(np.dot(v, model.axes[k])) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(12, 60))
def test_pca_projected_variance_bounded(seed, n):
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, 20)) @ r.standard_normal((20, 20))
    model = pca_fit(x)
    coords = pca_project(model, x)
    z = (x - model.mean) / model.scale
    assert coords.var(axis=0).sum() <= z.var(axis=0).sum() + 1e-9
    assert model.explained_variance_ratio.sum() <= 1.0 + 1e-12


def test_pca_errors(rng):
    with pytest.raises(InsufficientSamples):
        pca_fit(rng.standard_normal((10, 64)))
    model = pca_fit(rng.standard_normal((20, 8)), n_components=3)
    with pytest.raises(ShapeError):
        pca_project(model, rng.standard_normal((2, 9)))


def test_pca_constant_dimension_stays_zero(rng):
    x = rng.standard_normal((30, 6))
    x[:, 2] = 4.0
    model = pca_fit(x, n_components=3)
    assert model.scale[2] == 1.0
    assert np.all(np.isfinite(pca_project(model, x)))


# -- correlation pipeline --------------------------------------------------------


def test_planted_correlation_recovers_rt60():
    res = planted_correlation(200, 200, seed=0)
    assert abs(res.r) >= 0.95


def test_random_embeddings_null(rng):
    rt = rng.uniform(0.1, 1.2, 200)
    res = correlation_from_vectors(rng.standard_normal((200, 64)), rng.standard_normal((200, 64)), rt)
    assert abs(res.r) < 0.3


def test_constant_embeddings_degenerate(rng):
    with pytest.raises(DegenerateVariance):
        correlation_from_vectors(rng.standard_normal((30, 8)), np.ones((30, 8)), rng.uniform(size=30))


def test_held_out_projection_uses_train_statistics(rng):
    v = rng.standard_normal(64)
    rt_train = rng.uniform(0.1, 0.5, 200)
    rt_test = rng.uniform(0.8, 1.2, 200)
    train = rt_train[:, None] * v + 0.05 * rng.standard_normal((200, 64))
    test = rt_test[:, None] * v + 0.05 * rng.standard_normal((200, 64))
    res = correlation_from_vectors(train, test, rt_test)
    expected = ((test - train.mean(0)) / train.std(0)) @ res.pca.axes.T
    np.testing.assert_allclose(res.test_coords, expected, atol=1e-9)
    # test items lie beyond the train range, so their coordinates are far from zero-mean
    assert abs(res.test_coords[:, 0].mean()) > 5 * res.test_coords[:, 0].std()


# -- probes -------------------------------------------------------------------


def test_probe_perfect_clusters(rng):
    centers = rng.standard_normal((10, 64)) * 10
    labels = np.repeat(np.arange(10), 20)
    x = centers[labels] + 0.01 * rng.standard_normal((200, 64))
    assert nearest_centroid_loo(x, labels) == 1.0


def test_probe_random_is_chance(rng):
    labels = np.repeat(np.arange(10), 100)
    acc = nearest_centroid_loo(rng.standard_normal((1000, 64)), labels)
    sigma = np.sqrt(0.1 * 0.9 / 1000)
    assert abs(acc - 0.1) <= 3 * sigma


def test_probe_permutation_invariant(rng):
    labels = np.repeat(np.arange(4), 10)
    x = rng.standard_normal((40, 8)) + labels[:, None]
    perm = rng.permutation(40)
    assert nearest_centroid_loo(x, labels) == nearest_centroid_loo(x[perm], labels[perm])


def test_probe_single_class_rejected(rng):
    with pytest.raises(InsufficientSamples):
        nearest_centroid_loo(rng.standard_normal((5, 3)), np.zeros(5))


def test_probe_items_layout():
    cfg = ProbeConfig(n_classes=3, n_items=4, seed=2)
    room_set, speaker_set = build_probe_items(cfg)
    assert len(room_set) == len(speaker_set) == 12
    assert len({it[2] for it in room_set}) == 3 and len({it[1] for it in room_set}) == 4
    assert len({it[1] for it in speaker_set}) == 3 and len({it[2] for it in speaker_set}) == 4
    rts = sorted({it[3] for it in room_set})
    assert rts[0] == pytest.approx(0.05) and rts[-1] == pytest.approx(1.2)
    assert all(len(it[0]) == 48000 for it in room_set)
    with pytest.raises(InsufficientSamples):
        build_probe_items(ProbeConfig(n_classes=1))


# -- model-level evaluations on an untrained tiny model ---------------------------


@pytest.fixture(scope="module")
def tiny_model():
    return CodecModel(ModelConfig(**TINY, n_quantizers=2)).eval()


def test_summarize_shapes(tiny_model):
    items = [(synth_speech(0.5, k, k), k, 0, 0.3) for k in range(3)]
    summary = summarize(tiny_model, items)
    assert summary.speech.shape == summary.acoustic.shape == (3, 64)
    assert list(summary.speaker_ids) == [0, 1, 2]


def test_teleport_report_rows(tiny_model, small_dataset):
    pairs = []
    for k, entry in enumerate(small_dataset.split("train")[:3]):
        g = small_dataset.load_group(entry)
        pairs.append(TeleportPair(g.reverb_11, g.reverb_22, g.reverb_12, g.reverb_21,
                                  g.rt60s[0], g.rt60s[1], k))
    report = teleport_rt60_eval(tiny_model, pairs)
    assert len(report.rows) == len(pairs) - report.skipped
    assert set(report.summary()) >= {"pairs", "skipped", "success_fraction", "quality_correlation"}


def test_task_variants_are_enumerated_pairs():
    seen = set()
    for task in TaskId:
        for spec in task_variants(task):
            for k, sid in enumerate(spec.inputs):
                acoustic = None if spec.op.value == "zero_acoustic" else (
                    spec.inputs[1 - k] if spec.op.value == "swap_acoustic" else sid)
                seen.add((sid, acoustic, spec.targets[k]))
    pairs = {(p.speech, p.acoustic, p.target) for p in enumerate_pairs()}
    assert seen <= pairs
    # AT_DS always encodes reverb_11 with reverb_22; its anti-diagonal swaps are never trained
    assert pairs - seen == {((1, 2), (2, 1), (1, 1)), ((2, 1), (1, 2), (2, 2))}


def test_task_distances_counts(tiny_model, rng):
    stacks = [rng.standard_normal((6, 3200)).astype(np.float32) * 0.1 for _ in range(3)]
    assert task_distances(tiny_model, stacks, TaskId.RR).shape == (12,)
    assert task_distances(tiny_model, stacks, TaskId.AT_DS).shape == (6,)
    assert len(SIGNAL_ORDER) == 6


def test_ablation_table_shape(rng):
    from telecodec.train.loop import TrainConfig

    stacks = [rng.standard_normal((6, 3200)).astype(np.float32) * 0.1 for _ in range(2)]
    base = TrainConfig(model=ModelConfig(**TINY, n_quantizers=1), steps=1, batch_size=1,
                       crop_seconds=0.2)
    models = {f: CodecModel(ModelConfig(**TINY, n_quantizers=1, downsample_factor=f, seed=f))
              for f in (1, 10)}
    table = ablate_downsampling(base, (1, 10, 150), np.stack(stacks), stacks,
                                tasks=("rr", "dr"), models=models)
    assert len(table.rows) == 3 * 2
    assert all(r.p is None for r in table.rows if r.factor == 1)
    assert all(r.p is not None for r in table.rows if r.factor != 1)
    assert "n/a" in table.format()
    with pytest.raises(InvalidInput):
        ablate_downsampling(base, (2, 10), stacks, stacks, models=models)


def test_export_scatter(tmp_path, rng):
    path = export_scatter(tmp_path / "s.txt", rng.standard_normal((12, 8)), list("abcdefghijkl"))
    lines = path.read_text().splitlines()
    assert lines[0] == "x y label" and len(lines) == 13
    assert lines[1].split()[-1] == "a"


def test_audio_buffer_inputs_accepted(rng):
    a = AudioBuffer(rng.standard_normal(4000) * 0.1)
    assert si_sdr(a, a) == 60.0
    assert log_mel_distance(a, a) == 0.0
