"""Model-level evaluations: RT60 correlation, teleportation, disentanglement
probes and the acoustic downsampling ablation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..codec.inference import decode, encode, reconstruct, teleport
from ..codec.model import CodecModel
from ..dsp.buffers import AudioBuffer
from ..dsp.rir import convolve_rir, peak_normalize, preprocess_rir, synth_rir
from ..dsp.rt60 import blind_rt60
from ..dsp.speech import synth_speech
from ..errors import DegenerateVariance, InsufficientDecay, InsufficientSamples, InvalidInput, IoError
from ..train.tasks import EmbeddingOp, TaskBatch, TaskId, TaskSpec, parse_tasks
from .metrics import log_mel_distance, pearson, si_sdr, welch_t_test
from .pca import PcaModel, pca_fit, pca_project


# ---------------------------------------------------------------------------
# embedding summaries


@dataclass
class EmbeddingSummary:
    """Temporally averaged speech and acoustic embeddings plus item labels."""

    speech: np.ndarray  # [items, 64]
    acoustic: np.ndarray  # [items, 64]
    speaker_ids: np.ndarray
    room_ids: np.ndarray
    rt60: np.ndarray


def summarize(model: CodecModel, items) -> EmbeddingSummary:
    """Encode ``(audio, speaker_id, room_id, rt60)`` tuples and average over time.

    Embeddings are taken after quantization whenever the model quantizes.
    """
    s_rows, h_rows, spk, room, rt = [], [], [], [], []
    for audio, speaker_id, room_id, rt60 in items:
        lat = encode(audio, model)
        s_rows.append(lat.speech_emb.mean(axis=0))
        h_rows.append(lat.acoustic_emb.mean(axis=0))
        spk.append(speaker_id)
        room.append(room_id)
        rt.append(rt60)
    return EmbeddingSummary(np.array(s_rows), np.array(h_rows), np.array(spk), np.array(room),
                            np.array(rt, dtype=np.float64))


# ---------------------------------------------------------------------------
# RT60 correlation


@dataclass
class CorrelationResult:
    r: float
    pca: PcaModel
    test_coords: np.ndarray
    test_rt60: np.ndarray


def correlation_from_vectors(train_vectors, test_vectors, test_rt60) -> CorrelationResult:
    """Pearson r between RT60 and the first principal coordinate of held-out vectors.

    Standardization and PCA are fitted on ``train_vectors`` only.
    """
    pca = pca_fit(train_vectors)
    coords = pca_project(pca, test_vectors)
    rt = np.asarray(test_rt60, dtype=np.float64)
    return CorrelationResult(pearson(coords[:, 0], rt), pca, coords, rt)


def rt60_correlation(model: CodecModel, train_items, test_items) -> CorrelationResult:
    """Correlate the leading PCA direction of acoustic embeddings with RT60.

    Args:
        model: Frozen codec.
        train_items, test_items: ``(audio, speaker_id, room_id, rt60)`` tuples.
    """
    train = summarize(model, train_items)
    test = summarize(model, test_items)
    return correlation_from_vectors(train.acoustic, test.acoustic, test.rt60)


# ---------------------------------------------------------------------------
# teleportation


@dataclass
class TeleportPair:
    """Utterance 1 in room 1 and utterance 2 in room 2, with ground-truth swaps."""

    x1: AudioBuffer
    x2: AudioBuffer
    target_12: AudioBuffer | None = None
    target_21: AudioBuffer | None = None
    rt60_room1: float = float("nan")
    rt60_room2: float = float("nan")
    pair_id: int = 0


@dataclass
class TeleportRow:
    pair_id: int
    rt60_in1: float
    rt60_in2: float
    rt60_rec1: float
    rt60_rec2: float
    rt60_out1: float
    rt60_out2: float
    success1: bool
    success2: bool
    delta_rt60: float
    si_sdr1: float | None
    si_sdr2: float | None


@dataclass
class TeleportReport:
    rows: list[TeleportRow]
    skipped: int
    success_fraction: float
    pair_success_fraction: float
    quality_correlation: float | None

    def summary(self) -> dict:
        return {
            "pairs": len(self.rows),
            "skipped": self.skipped,
            "success_fraction": self.success_fraction,
            "pair_success_fraction": self.pair_success_fraction,
            "quality_correlation": self.quality_correlation,
        }


def _closer(value: float, target: float, source: float) -> bool:
    return abs(value - target) < abs(value - source)


def teleport_rt60_eval(model: CodecModel, pairs) -> TeleportReport:
    """Blind-RT60 check of acoustic-embedding swaps.

    An output counts as a success when its blind RT60 is strictly closer to
    that of the input recorded in its target room than to that of the input
    recorded in its source room. ``success_fraction`` is taken over all
    outputs (two per pair); ``pair_success_fraction`` requires both.
    Pairs where any blind estimate fails are skipped and counted.
    """
    rows, skipped = [], 0
    for pair in pairs:
        y1, y2 = teleport(pair.x1, pair.x2, model)
        rec1, rec2 = reconstruct(pair.x1, model), reconstruct(pair.x2, model)
        try:
            r = [blind_rt60(a) for a in (pair.x1, pair.x2, rec1, rec2, y1, y2)]
        except (InsufficientDecay, InvalidInput):
            skipped += 1
            continue
        s1 = si_sdr(pair.target_12, y1) if pair.target_12 is not None else None
        s2 = si_sdr(pair.target_21, y2) if pair.target_21 is not None else None
        rows.append(TeleportRow(
            pair.pair_id, r[0], r[1], r[2], r[3], r[4], r[5],
            _closer(r[4], r[1], r[0]), _closer(r[5], r[0], r[1]),
            abs(pair.rt60_room2 - pair.rt60_room1), s1, s2,
        ))
    if rows:
        outcomes = [o for row in rows for o in (row.success1, row.success2)]
        frac = float(np.mean(outcomes))
        pair_frac = float(np.mean([row.success1 and row.success2 for row in rows]))
    else:
        frac = pair_frac = float("nan")
    deltas, quality = [], []
    for row in rows:
        for s in (row.si_sdr1, row.si_sdr2):
            if s is not None and math.isfinite(row.delta_rt60):
                deltas.append(row.delta_rt60)
                quality.append(s)
    try:
        corr = pearson(deltas, quality) if len(deltas) >= 3 else None
    except DegenerateVariance:
        corr = None
    return TeleportReport(rows, skipped, frac, pair_frac, corr)


# ---------------------------------------------------------------------------
# disentanglement probes


def nearest_centroid_loo(features, labels) -> float:
    """Leave-one-out nearest-centroid accuracy.

    Each item is classified against class centroids computed without it;
    a class reduced to zero members by the exclusion cannot be predicted.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes, inv = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise InsufficientSamples("need at least two classes for a probe")
    counts = np.bincount(inv).astype(np.float64)
    sums = np.zeros((len(classes), x.shape[1]))
    np.add.at(sums, inv, x)
    correct = 0
    for i in range(x.shape[0]):
        c = inv[i]
        cnt = counts.copy()
        sm = sums.copy()
        cnt[c] -= 1
        sm[c] -= x[i]
        valid = cnt > 0
        cent = sm[valid] / cnt[valid, None]
        d = np.sum((cent - x[i]) ** 2, axis=1)
        pred = np.flatnonzero(valid)[int(np.argmin(d))]
        correct += int(pred == c)
    return correct / x.shape[0]


@dataclass(frozen=True)
class ProbeConfig:
    """Probe set sizes: ``n_classes`` fixed rooms (speakers) crossed with
    ``n_items`` varying speakers (rooms)."""

    n_classes: int = 10
    n_items: int = 100
    rt60_range: tuple[float, float] = (0.05, 1.2)
    seed: int = 0
    id_base: int = 3_000_000


@dataclass
class ProbeScores:
    room_from_acoustic: float
    room_from_speech: float
    speaker_from_speech: float
    speaker_from_acoustic: float

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def separated(self) -> bool:
        return (self.room_from_acoustic > self.room_from_speech
                and self.speaker_from_speech > self.speaker_from_acoustic)


def _probe_rir(rt60: float, seed: int, room_id: int):
    return preprocess_rir(synth_rir(rt60, max(0.3, 2 * rt60), seed, room_id=room_id))


def build_probe_items(cfg: ProbeConfig = ProbeConfig()):
    """Two probe sets of ``(audio, speaker_id, room_id, rt60)`` tuples.

    The room set holds ``n_classes`` rooms with log-spaced RT60s, each heard
    with ``n_items`` different speakers. The speaker set holds ``n_classes``
    speakers, each heard in ``n_items`` different random rooms. Ids come from
    a range disjoint from every dataset split.
    """
    if cfg.n_classes < 2 or cfg.n_items < 2:
        raise InsufficientSamples("probe sets need at least 2 classes and 2 items per class")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 21]))
    lo, hi = cfg.rt60_range
    base = cfg.id_base
    room_rts = np.geomspace(lo, hi, cfg.n_classes)
    rooms = [_probe_rir(float(rt), int(rng.integers(2**31)), base + k) for k, rt in enumerate(room_rts)]
    room_set = []
    for j in range(cfg.n_items):
        speaker = base + j
        clean = synth_speech(3.0, speaker, int(rng.integers(2**31)))
        for k, rir in enumerate(rooms):
            room_set.append((peak_normalize(convolve_rir(clean, rir)), speaker, rir.room_id, rir.nominal_rt60))
    speaker_set = []
    speakers = [base + cfg.n_items + k for k in range(cfg.n_classes)]
    for j in range(cfg.n_items):
        rt = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        rir = _probe_rir(rt, int(rng.integers(2**31)), base + cfg.n_classes + j)
        for speaker in speakers:
            clean = synth_speech(3.0, speaker, int(rng.integers(2**31)))
            speaker_set.append((peak_normalize(convolve_rir(clean, rir)), speaker, rir.room_id, rt))
    return room_set, speaker_set


def scores_from_summaries(room_set: EmbeddingSummary, speaker_set: EmbeddingSummary) -> ProbeScores:
    return ProbeScores(
        nearest_centroid_loo(room_set.acoustic, room_set.room_ids),
        nearest_centroid_loo(room_set.speech, room_set.room_ids),
        nearest_centroid_loo(speaker_set.speech, speaker_set.speaker_ids),
        nearest_centroid_loo(speaker_set.acoustic, speaker_set.speaker_ids),
    )


def disentangle_scores(model: CodecModel, cfg: ProbeConfig = ProbeConfig(),
                       return_summaries: bool = False):
    """Four leave-one-out probe accuracies on synthetic probe sets."""
    room_items, speaker_items = build_probe_items(cfg)
    room_sum = summarize(model, room_items)
    speaker_sum = summarize(model, speaker_items)
    scores = scores_from_summaries(room_sum, speaker_sum)
    return (scores, room_sum, speaker_sum) if return_summaries else scores


def export_scatter(path, vectors, labels, train_vectors=None) -> Path:
    """Write 2-D PCA coordinates as ``x y label`` lines for plotting."""
    ref = vectors if train_vectors is None else train_vectors
    pca = pca_fit(ref, n_components=2)
    xy = pca_project(pca, vectors)
    lines = ["x y label"] + [f"{a:.6f} {b:.6f} {lab}" for (a, b), lab in zip(xy, labels)]
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(path, f"cannot write scatter export: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# per-task distances and the downsampling ablation


def task_variants(task: TaskId) -> list[TaskSpec]:
    """Every concrete input/target selection of ``task`` within one group."""
    task = TaskId(task)
    if task is TaskId.CR:
        return [TaskSpec(task, ((c, 0),), EmbeddingOp.NONE, ((c, 0),)) for c in (1, 2)]
    if task is TaskId.RR:
        return [TaskSpec(task, ((c, r),), EmbeddingOp.NONE, ((c, r),)) for c in (1, 2) for r in (1, 2)]
    if task is TaskId.DR:
        return [TaskSpec(task, ((c, r),), EmbeddingOp.ZERO, ((c, 0),)) for c in (1, 2) for r in (1, 2)]
    if task is TaskId.AT_SS:
        return [TaskSpec(task, ((c, 1), (c, 2)), EmbeddingOp.SWAP, ((c, 2), (c, 1))) for c in (1, 2)]
    return [TaskSpec(task, ((1, 1), (2, 2)), EmbeddingOp.SWAP, ((1, 2), (2, 1)))]


@torch.no_grad()
def task_outputs(model: CodecModel, stacks, spec: TaskSpec) -> np.ndarray:
    """Decoded outputs ``[n_inputs, groups, samples]`` for one task variant (no codebook updates)."""
    from ..train.tasks import SIGNAL_INDEX

    was_training = model.training
    model.eval()
    try:
        x = np.stack([[s[SIGNAL_INDEX[sid]] for s in stacks] for sid in spec.inputs]).astype(np.float32)
        n_in, b, n = x.shape
        s, h = model.encode_continuous(torch.as_tensor(x).reshape(n_in * b, n))
        s, h, _, _, _ = model.quantize(s, h, update=False)
        if spec.op is EmbeddingOp.ZERO:
            h = torch.zeros_like(h)
        elif spec.op is EmbeddingOp.SWAP:
            h = torch.cat([h[b:], h[:b]], dim=0)
        y = model.decode_continuous(s, h)[..., :n]
    finally:
        model.train(was_training)
    return y.reshape(n_in, b, n).double().numpy()


def task_distances(model: CodecModel, stacks, task: TaskId, batch: int = 4) -> np.ndarray:
    """Per-output log-mel distance to the target, over all variants and groups."""
    from ..train.tasks import SIGNAL_INDEX

    out = []
    for spec in task_variants(task):
        for start in range(0, len(stacks), batch):
            chunk = stacks[start:start + batch]
            y = task_outputs(model, chunk, spec)
            for k, sid in enumerate(spec.targets):
                for g, stack in enumerate(chunk):
                    out.append(log_mel_distance(y[k, g], stack[SIGNAL_INDEX[sid]]))
    return np.asarray(out)


@dataclass
class AblationRow:
    factor: int
    task: str
    mean: float
    std: float
    n: int
    t: float | None
    p: float | None


@dataclass
class AblationTable:
    rows: list[AblationRow]
    distances: dict = field(default_factory=dict)  # (factor, task) -> per-item array

    def mean(self, factor: int, task) -> float:
        task = TaskId(task).value
        return next(r.mean for r in self.rows if r.factor == factor and r.task == task)

    def format(self) -> str:
        head = f"{'factor':>6}  {'task':<6} {'mean':>8} {'std':>8} {'n':>5} {'p_vs_1':>10}"
        lines = [head]
        for r in self.rows:
            p = "n/a" if r.p is None else f"{r.p:.3g}"
            lines.append(f"{r.factor:>6}  {r.task:<6} {r.mean:8.4f} {r.std:8.4f} {r.n:>5} {p:>10}")
        return "\n".join(lines)

    def to_records(self) -> list[dict]:
        return [asdict(r) for r in self.rows]


DEFAULT_FACTORS = (1, 2, 4, 10, 30, 150)


def ablate_downsampling(base_config, factors=DEFAULT_FACTORS, data=None, eval_stacks=None,
                        tasks=None, out_dir=None, models: dict | None = None,
                        progress=None) -> AblationTable:
    """Train one model per downsampling factor and compare per-task distances.

    Args:
        base_config: ``TrainConfig``; only ``model.downsample_factor`` varies.
        factors: Must include 1, the baseline for the t-tests.
        data: Training data accepted by ``train_loop``.
        eval_stacks: Held-out ``[6, samples]`` group arrays.
        tasks: Tasks to evaluate (defaults to the training task set).
        out_dir: Optional parent directory for one run directory per factor.
        models: Already trained models keyed by factor; these are reused
            instead of retrained.
    """
    from ..train.loop import train_loop

    factors = [int(f) for f in factors]
    if 1 not in factors:
        raise InvalidInput("ablation factors must include the baseline factor 1")
    tasks = parse_tasks(tasks) if tasks is not None else base_config.tasks
    models = dict(models or {})
    distances = {}
    for f in factors:
        if f not in models:
            cfg = base_config.replace(**{"model.downsample_factor": f})
            run_dir = None if out_dir is None else Path(out_dir) / f"d{f}"
            models[f] = train_loop(cfg, data, out_dir=run_dir, progress=progress).model
        for task in tasks:
            distances[f, task.value] = task_distances(models[f], eval_stacks, task)
    rows = []
    for f in factors:
        for task in tasks:
            d = distances[f, task.value]
            t = p = None
            if f != 1:
                try:
                    t, _, p = welch_t_test(d, distances[1, task.value])
                except (DegenerateVariance, InvalidInput):
                    pass
            rows.append(AblationRow(f, task.value, float(d.mean()), float(d.std(ddof=1)) if d.size > 1 else 0.0,
                                    int(d.size), t, p))
    return AblationTable(rows, distances)


def write_jsonl(path, records) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(json.dumps(r) + "\n" for r in records))
    except OSError as exc:
        raise IoError(path, f"cannot write report: {exc}") from exc
    return path


def planted_vectors(rt60, dim: int = 64, noise: float = 0.05, seed: int = 0, direction=None):
    """Synthetic embeddings ``rt60 * v + noise`` for a fixed direction ``v``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim) if direction is None else np.asarray(direction, dtype=np.float64)
    rt = np.asarray(rt60, dtype=np.float64)
    return rt[:, None] * v[None, :] + noise * rng.standard_normal((rt.size, dim))


def planted_correlation(n_train: int = 200, n_test: int = 200, seed: int = 0,
                        noise: float = 0.05) -> CorrelationResult:
    """Run the correlation pipeline on planted embeddings, bypassing the encoder."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 31]))
    v = rng.standard_normal(64)
    rt_train = rng.uniform(0.1, 1.2, n_train)
    rt_test = rng.uniform(0.1, 1.2, n_test)
    train = planted_vectors(rt_train, noise=noise, seed=seed + 1, direction=v)
    test = planted_vectors(rt_test, noise=noise, seed=seed + 2, direction=v)
    return correlation_from_vectors(train, test, rt_test)
