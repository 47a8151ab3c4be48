from __future__ import annotations

import json

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from telecodec.codec import CodecModel, ModelConfig
from telecodec.codec.checkpoint import load_checkpoint
from telecodec.errors import NumericalDivergence, ShapeError, ValidationError
from telecodec.train.loop import (
    BatchStream,
    TaskSampler,
    TrainConfig,
    make_optimizer,
    task_forward,
    train_loop,
    train_step,
)
from telecodec.train.gradcheck import gradient_check
from telecodec.train.losses import LossWeights, commitment_loss, reconstruction_loss
from telecodec.train.tasks import (
    AT_ONLY,
    OMRAN_TASKSET,
    SIGNAL_INDEX,
    EmbeddingOp,
    TaskId,
    assemble_task_batch,
    enumerate_pairs,
    ideal_target,
    parse_tasks,
    task_spec,
)

from conftest import TINY


def fake_stack(seed, n=3200):
    """Six distinguishable random signals in signal order."""
    r = np.random.default_rng(seed)
    return (r.standard_normal((6, n)) * 0.1 + np.arange(6)[:, None]).astype(np.float32)


# -- tasks -----------------------------------------------------------------------


def test_omran_and_at_only_sets():
    assert parse_tasks("rr,dr,at_ds") == OMRAN_TASKSET == (TaskId.RR, TaskId.DR, TaskId.AT_DS)
    assert parse_tasks(["AT_SS", "at-ds"]) == AT_ONLY


def test_parse_tasks_errors():
    with pytest.raises(ValidationError, match="valid ids"):
        parse_tasks("rr,bogus")
    with pytest.raises(ValidationError):
        parse_tasks("")


def test_enumerate_pairs_counts():
    pairs = enumerate_pairs()
    assert len(pairs) == 18
    assert len({p.target for p in pairs}) == 6
    assert len({(p.speech, p.acoustic) for p in pairs}) == 18


def test_enumerate_pairs_dr_entries():
    dr = [p for p in enumerate_pairs() if p.acoustic is None]
    assert len(dr) == 4
    for p in dr:
        assert p.target == (p.speech[0], 0)


def test_enumerate_pairs_ideal_disentanglement():
    for p in enumerate_pairs():
        assert p.target == ideal_target(p.speech, p.acoustic)
        if p.acoustic is not None and p.acoustic[1] == p.speech[1]:
            assert p.target == p.speech


_TABLE = {
    TaskId.CR: lambda s: s.op is EmbeddingOp.NONE and s.inputs == s.targets and s.inputs[0][1] == 0,
    TaskId.RR: lambda s: s.op is EmbeddingOp.NONE and s.inputs == s.targets and s.inputs[0][1] > 0,
    TaskId.DR: lambda s: (s.op is EmbeddingOp.ZERO and s.inputs[0][1] > 0
                          and s.targets == ((s.inputs[0][0], 0),)),
    TaskId.AT_SS: lambda s: (s.op is EmbeddingOp.SWAP and s.inputs[0][0] == s.inputs[1][0]
                             and {s.inputs[0][1], s.inputs[1][1]} == {1, 2}
                             and s.targets == ((s.inputs[0][0], s.inputs[1][1]),
                                               (s.inputs[1][0], s.inputs[0][1]))),
    TaskId.AT_DS: lambda s: (s.op is EmbeddingOp.SWAP and s.inputs == ((1, 1), (2, 2))
                             and s.targets == ((1, 2), (2, 1))),
}


@settings(max_examples=60, deadline=None)
@given(task=st.sampled_from(list(TaskId)), seed=st.integers(0, 2**31 - 1))
def test_task_specs_match_table(task, seed):
    spec = task_spec(task, np.random.default_rng(seed))
    assert spec.task_id is task
    assert _TABLE[task](spec)


@settings(max_examples=30, deadline=None)
@given(task=st.sampled_from(list(TaskId)), seed=st.integers(0, 10_000), n_groups=st.integers(1, 3))
def test_assembled_batches_follow_spec(task, seed, n_groups):
    groups = [fake_stack(seed + g) for g in range(n_groups)]
    batch = assemble_task_batch(groups, task, seed)
    assert _TABLE[task](batch.spec)
    n_in = len(batch.spec.inputs)
    assert batch.inputs.shape == batch.targets.shape == (n_in, n_groups, 3200)
    for k, (sid_in, sid_out) in enumerate(zip(batch.spec.inputs, batch.spec.targets)):
        for g in range(n_groups):
            np.testing.assert_array_equal(batch.inputs[k, g], groups[g][SIGNAL_INDEX[sid_in]])
            np.testing.assert_array_equal(batch.targets[k, g], groups[g][SIGNAL_INDEX[sid_out]])


def test_cr_batch_seed_determined():
    g = fake_stack(0)
    seen = set()
    for seed in range(20):
        b = assemble_task_batch([g], TaskId.CR, seed)
        assert b.op is EmbeddingOp.NONE
        assert b.spec.inputs == b.spec.targets
        seen.add(b.spec.inputs[0])
        again = assemble_task_batch([g], TaskId.CR, seed)
        assert again.spec == b.spec
    assert seen == {(1, 0), (2, 0)}


def test_at_ds_batch():
    b = assemble_task_batch([fake_stack(1)], TaskId.AT_DS, 3)
    assert b.spec.inputs == ((1, 1), (2, 2))
    assert b.op is EmbeddingOp.SWAP
    assert b.spec.targets == ((1, 2), (2, 1))


def test_dr_batch_reverb21_targets_clean2():
    g = fake_stack(2)
    for seed in range(100):
        b = assemble_task_batch([g], TaskId.DR, seed)
        if b.spec.inputs == ((2, 1),):
            assert b.op is EmbeddingOp.ZERO
            assert b.spec.targets == ((2, 0),)
            np.testing.assert_array_equal(b.targets[0, 0], g[SIGNAL_INDEX[(2, 0)]])
            return
    pytest.fail("no seed selected reverb_21")


def test_crops_are_aligned_across_signals():
    n = 48000
    base = np.arange(n, dtype=np.float32)
    stack = np.stack([base + 1e6 * k for k in range(6)])
    b = assemble_task_batch([stack, stack], TaskId.AT_DS, 7, crop=16000)
    assert b.inputs.shape[-1] == 16000
    offsets = (b.inputs[0, :, 0] - 1e6 * SIGNAL_INDEX[(1, 1)]).astype(int)
    assert all(o % 320 == 0 for o in offsets)
    np.testing.assert_array_equal(b.targets[0, :, 0] - 1e6 * SIGNAL_INDEX[(1, 2)], offsets)


def test_empty_groups_rejected():
    with pytest.raises(ValidationError):
        assemble_task_batch([], TaskId.CR, 0)


def test_task_sampling_uniform():
    sampler = TaskSampler(OMRAN_TASKSET, seed=0)
    draws = [sampler() for _ in range(10_000)]
    p = 1 / 3
    sigma = np.sqrt(10_000 * p * (1 - p))
    for task in OMRAN_TASKSET:
        assert abs(draws.count(task) - 10_000 * p) <= 3 * sigma


# -- losses ----------------------------------------------------------------------


def test_loss_weights_defaults_and_validation():
    w = LossWeights()
    assert (w.time_domain, w.multi_spectral, w.commitment, w.adversarial) == (0.1, 0.1, 1.0, 0.0)
    with pytest.raises(ValidationError):
        LossWeights(time_domain=-1)


def test_reconstruction_loss_zero_for_identical(rng):
    x = torch.as_tensor(rng.standard_normal((2, 4000)))
    total, _ = reconstruction_loss(x, x)
    assert float(total) == 0.0


def test_reconstruction_loss_symmetric_and_positive(rng):
    a = torch.as_tensor(rng.standard_normal((2, 4000)))
    b = torch.as_tensor(rng.standard_normal((2, 4000)))
    ab, terms_ab = reconstruction_loss(a, b)
    ba, terms_ba = reconstruction_loss(b, a)
    assert float(terms_ab["time"]) == float(terms_ba["time"])
    assert float(ab) == pytest.approx(float(ba), rel=1e-12)
    assert float(ab) > 0


def test_reconstruction_loss_components(rng):
    a = torch.as_tensor(rng.standard_normal(4000))
    b = torch.as_tensor(rng.standard_normal(4000))
    total, terms = reconstruction_loss(a, b, LossWeights(time_domain=1.0, multi_spectral=0.0))
    assert float(total) == pytest.approx(float(torch.mean(torch.abs(a - b))))
    assert float(terms["mel"]) > 0


def test_reconstruction_loss_shape_error():
    with pytest.raises(ShapeError):
        reconstruction_loss(torch.zeros(100), torch.zeros(101))


def test_commitment_loss(rng):
    e = torch.as_tensor(rng.standard_normal((5, 64)))
    q = torch.as_tensor(rng.standard_normal((5, 64)))
    assert float(commitment_loss(e, e)) == 0.0
    base = float(commitment_loss(e, q))
    assert float(commitment_loss(e, e + 2 * (q - e))) == pytest.approx(4 * base, rel=1e-12)
    oracle = np.mean((e.numpy() - q.numpy()) ** 2)
    assert abs(float(commitment_loss(e, q)) - oracle) < 1e-6
    with pytest.raises(ShapeError):
        commitment_loss(e, q[:4])


def test_commitment_gradient_reaches_encoder_only(rng):
    e = torch.as_tensor(rng.standard_normal((3, 4)), dtype=torch.float64).requires_grad_(True)
    q = torch.as_tensor(rng.standard_normal((3, 4)), dtype=torch.float64).requires_grad_(True)
    commitment_loss(e, q).backward()
    assert q.grad is None
    assert e.grad is not None


def test_initial_loss_finite_nonnegative(tiny_config):
    model = CodecModel(tiny_config)
    batch = assemble_task_batch([fake_stack(3)], TaskId.RR, 0)
    total, terms = task_forward(model, batch, LossWeights())
    assert np.isfinite(total.item()) and total.item() >= 0


# -- train_step ---------------------------------------------------------------


def _params(model):
    return {k: v.detach().clone() for k, v in model.named_parameters()}


def test_zero_learning_rate_is_noop(tiny_config):
    model = CodecModel(tiny_config)
    before = _params(model)
    opt = make_optimizer(model, 0.0)
    batch = assemble_task_batch([fake_stack(4)], TaskId.AT_DS, 1)
    train_step(model, batch, LossWeights(), opt)
    for k, v in model.named_parameters():
        assert torch.equal(v, before[k]), k


def test_zero_weights_is_noop(tiny_config):
    model = CodecModel(tiny_config)
    before = _params(model)
    opt = make_optimizer(model, 3e-4)
    batch = assemble_task_batch([fake_stack(5)], TaskId.DR, 1)
    train_step(model, batch, LossWeights(0.0, 0.0, 0.0, 0.0), opt)
    for k, v in model.named_parameters():
        assert torch.equal(v, before[k]), k


def test_train_step_updates_parameters(tiny_config):
    model = CodecModel(tiny_config)
    before = _params(model)
    opt = make_optimizer(model, 3e-4)
    values = train_step(model, assemble_task_batch([fake_stack(6)], TaskId.RR, 1), LossWeights(), opt)
    assert set(values) >= {"time", "mel", "commit", "total"}
    assert any(not torch.equal(v, before[k]) for k, v in model.named_parameters())
    assert int(model.step) == 1


def test_non_finite_loss_raises(tiny_config):
    model = CodecModel(tiny_config)
    before = _params(model)
    opt = make_optimizer(model, 3e-4)
    stack = fake_stack(7)
    stack[:] = np.inf
    with pytest.raises(NumericalDivergence, match="non-finite"):
        train_step(model, assemble_task_batch([stack], TaskId.CR, 0), LossWeights(), opt)
    for k, v in model.named_parameters():
        assert torch.equal(v, before[k])


def _tiny_train_config(**kw):
    base = dict(batch_size=2, steps=6, crop_seconds=0.2, seed=3, checkpoint_every=3,
                model=ModelConfig(**TINY, n_quantizers=2))
    base.update(kw)
    return TrainConfig(**base)


def test_identical_seeds_identical_trajectories():
    data = np.stack([fake_stack(s, 9600) for s in range(3)])
    a = train_loop(_tiny_train_config(), data).history
    b = train_loop(_tiny_train_config(), data).history
    assert a == b
    c = train_loop(_tiny_train_config(seed=4), data).history
    assert a != c


def test_train_loop_outputs(tmp_path):
    data = np.stack([fake_stack(s, 9600) for s in range(3)])
    cfg = _tiny_train_config()
    res = train_loop(cfg, data, out_dir=tmp_path)
    assert (tmp_path / "step_000003.pt").exists() and (tmp_path / "step_000006.pt").exists()
    log = [json.loads(ln) for ln in (tmp_path / "losses.jsonl").read_text().splitlines()]
    assert [r["step"] for r in log] == list(range(1, 7))
    assert all(r["task_id"] in {"RR", "DR", "AT_DS"} for r in log)
    snapshot = json.loads((tmp_path / "resolved_config.json").read_text())
    assert TrainConfig.from_flat(snapshot) == cfg
    model, payload = load_checkpoint(res.checkpoint)
    assert payload["step"] == 6
    assert payload["extra"]["train_config"]["tasks"] == ["RR", "DR", "AT_DS"]


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(tasks=())
    with pytest.raises(ValidationError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValidationError):
        TrainConfig.from_flat({"nonsense": 1})


def test_train_config_flat_roundtrip():
    cfg = TrainConfig(tasks=AT_ONLY, model=ModelConfig(n_quantizers=0, downsample_factor=10))
    assert TrainConfig.from_flat(json.loads(json.dumps(cfg.to_flat()))) == cfg


def test_batch_stream_uses_enabled_tasks():
    data = np.stack([fake_stack(s, 9600) for s in range(2)])
    stream = BatchStream(data, _tiny_train_config(tasks=("cr",)))
    assert {next(stream).spec.task_id for _ in range(10)} == {TaskId.CR}


def test_adversarial_branch_runs():
    data = np.stack([fake_stack(s, 9600) for s in range(2)])
    cfg = _tiny_train_config(steps=2, weights=LossWeights(adversarial=0.1))
    hist = train_loop(cfg, data).history
    assert all("adv" in h and "disc" in h for h in hist)
    assert all(np.isfinite(h["total"]) for h in hist)


# -- gradient check -----------------------------------------------------------


@pytest.mark.parametrize("task", [TaskId.RR, TaskId.DR, TaskId.AT_DS])
def test_gradient_check_unquantized(task):
    model = CodecModel(ModelConfig(**TINY, n_quantizers=0)).double()
    batch = assemble_task_batch([fake_stack(1, 1920)], task, 0)
    entries = gradient_check(model, batch, n_params=12, seed=1)
    assert len(entries) == 12
    assert max(e.rel_error for e in entries) < 1e-4


def test_gradient_check_decoder_with_quantizers():
    model = CodecModel(ModelConfig(**TINY, n_quantizers=2)).double()
    batch = assemble_task_batch([fake_stack(2, 1920)], TaskId.RR, 0)
    entries = gradient_check(model, batch, n_params=10, prefixes=("decoder.",))
    assert all(e.name.startswith("decoder.") for e in entries)
    assert max(e.rel_error for e in entries) < 1e-4


def test_gradient_check_restores_parameters():
    model = CodecModel(ModelConfig(**TINY, n_quantizers=0)).double()
    before = _params(model)
    gradient_check(model, assemble_task_batch([fake_stack(3, 1920)], TaskId.CR, 0), n_params=3)
    for k, v in model.named_parameters():
        assert torch.equal(v, before[k])


def test_task_balanced_mean_ignores_mix():
    from telecodec.train.loop import task_balanced_mean

    hist = [{"task_id": "RR", "total": 1.0}] * 9 + [{"task_id": "DR", "total": 3.0}]
    assert task_balanced_mean(hist) == 2.0


def test_loss_decrease():
    from telecodec.train.loop import loss_decrease

    hist = [{"task_id": t, "total": v} for v in (2.0, 1.0) for t in ("RR", "DR") for _ in range(100)]
    assert loss_decrease(hist, head=100, tail=100) == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        loss_decrease(hist[:10])
