"""Training step and loop."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from ..codec.checkpoint import save_checkpoint
from ..codec.config import ModelConfig
from ..codec.model import CodecModel
from ..errors import IoError, NumericalDivergence, ValidationError
from .losses import LossWeights, reconstruction_loss
from .tasks import OMRAN_TASKSET, EmbeddingOp, TaskBatch, TaskId, assemble_task_batch, parse_tasks


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on.

    ``crop_seconds`` sets the length of the random aligned crop taken from
    each 3 s group per step.
    """

    tasks: tuple[TaskId, ...] = OMRAN_TASKSET
    batch_size: int = 4
    learning_rate: float = 3e-4
    steps: int = 2000
    crop_seconds: float = 1.0
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    checkpoint_every: int = 500
    log_every: int = 1
    out_dir: str = "runs/default"
    dataset: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tasks", parse_tasks(self.tasks))
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.steps < 0:
            raise ValidationError("steps must be >= 0")
        if not self.learning_rate >= 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.crop_seconds <= 0:
            raise ValidationError("crop_seconds must be > 0")

    @property
    def crop_samples(self) -> int:
        hop = self.model.hop
        return max(hop, int(round(self.crop_seconds * self.model.sample_rate / hop)) * hop)

    def to_flat(self) -> dict:
        """Flat key/value view: model fields prefixed ``model.``, weights ``weight.``."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "weights":
                out.update({f"weight.{k}": v for k, v in asdict(value).items()})
            elif f.name == "model":
                out.update({f"model.{k}": v for k, v in value.to_dict().items()})
            elif f.name == "tasks":
                out["tasks"] = [t.value for t in value]
            else:
                out[f.name] = value
        return out

    @classmethod
    def from_flat(cls, d: dict) -> TrainConfig:
        top, weights, model = {}, {}, {}
        known = {f.name for f in fields(cls)} - {"weights", "model"}
        for key, value in d.items():
            if key.startswith("weight."):
                weights[key[7:]] = float(value)
            elif key.startswith("model."):
                model[key[6:]] = value
            elif key in known:
                top[key] = value
            else:
                raise ValidationError(f"unknown training config key {key!r}")
        try:
            return cls(weights=LossWeights(**weights), model=ModelConfig.from_dict(model), **top)
        except TypeError as exc:
            raise ValidationError(str(exc)) from exc

    def replace(self, **kw) -> TrainConfig:
        flat = self.to_flat()
        flat.update(kw)
        return TrainConfig.from_flat(flat)


def load_train_config(path) -> TrainConfig:
    try:
        return TrainConfig.from_flat(json.loads(Path(path).read_text()))
    except (OSError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise IoError(path, f"cannot read training config: {exc}") from exc


def make_optimizer(model: CodecModel, lr: float) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=lr)


def task_forward(model: CodecModel, batch: TaskBatch, weights: LossWeights,
                 generator: torch.Generator | None = None, update_codebooks: bool = True,
                 return_outputs: bool = False):
    """Losses of one task batch without touching the optimizer.

    AT inputs are encoded together, their acoustic halves exchanged, and the
    loss averaged over both outputs.

    Returns:
        ``(total, terms)`` with scalar tensors, plus ``(y_hat, y)`` when
        ``return_outputs`` is set.
    """
    n_in, b, n = batch.inputs.shape
    dtype = next(model.parameters()).dtype
    x = torch.as_tensor(batch.inputs, dtype=dtype).reshape(n_in * b, n)
    y = torch.as_tensor(batch.targets, dtype=dtype).reshape(n_in * b, n)
    s, h = model.encode_continuous(x)
    s, h, _, _, commit = model.quantize(s, h, update=update_codebooks, generator=generator)
    if batch.op is EmbeddingOp.ZERO:
        h = torch.zeros_like(h)
    elif batch.op is EmbeddingOp.SWAP:
        h = torch.cat([h[b:], h[:b]], dim=0)
    y_hat = model.decode_continuous(s, h)[..., :n]
    recon, terms = reconstruction_loss(y_hat, y, weights)
    total = recon + weights.commitment * commit
    terms = {"time": terms["time"], "mel": terms["mel"], "commit": commit, "total": total}
    if return_outputs:
        return total, terms, y_hat, y
    return total, terms


def train_step(model: CodecModel, batch: TaskBatch, weights: LossWeights,
               optimizer: torch.optim.Optimizer, generator: torch.Generator | None = None,
               discriminator=None) -> dict:
    """One gradient update on the task batch; returns per-term losses as floats.

    Raises:
        NumericalDivergence: if any loss term is not finite. Parameters are
            left untouched in that case.
    """
    model.train()
    optimizer.zero_grad(set_to_none=True)
    adversarial = discriminator is not None and weights.adversarial > 0
    total, terms, y_hat, y = task_forward(model, batch, weights, generator, return_outputs=True)
    if adversarial:
        adv = discriminator.generator_loss(y_hat)
        total = total + weights.adversarial * adv
        terms = {**terms, "adv": adv, "total": total}
    values = {k: float(v.detach()) for k, v in terms.items()}
    bad = [k for k, v in values.items() if not math.isfinite(v)]
    if bad:
        raise NumericalDivergence(
            f"non-finite loss at step {int(model.step)} (task {batch.spec.task_id.value}): "
            + ", ".join(f"{k}={values[k]}" for k in bad)
        )
    total.backward()
    optimizer.step()
    if adversarial:
        values["disc"] = discriminator.step(y_hat.detach(), y)
    model.step += 1
    return values


class TaskSampler:
    """Seeded uniform choice of one enabled task per batch."""

    def __init__(self, tasks, seed: int):
        self.tasks = parse_tasks(tasks)
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))

    def __call__(self) -> TaskId:
        return self.tasks[int(self.rng.integers(len(self.tasks)))]


class BatchStream:
    """Deterministic stream of task batches from a ``[groups, 6, samples]`` bank."""

    def __init__(self, bank, cfg: TrainConfig):
        data = bank if isinstance(bank, np.ndarray) else getattr(bank, "data", bank)
        self.data = np.asarray(data, dtype=np.float32)
        if len(self.data) == 0:
            raise ValidationError("training data is empty")
        self.cfg = cfg
        self.sampler = TaskSampler(cfg.tasks, cfg.seed)
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 12]))

    def __next__(self) -> TaskBatch:
        task = self.sampler()
        idx = self.rng.integers(0, len(self.data), size=self.cfg.batch_size)
        seed = int(self.rng.integers(2**31))
        return assemble_task_batch([self.data[i] for i in idx], task, seed,
                                   crop=self.cfg.crop_samples, hop=self.cfg.model.hop)

    def __iter__(self):
        return self


@dataclass
class TrainResult:
    model: CodecModel
    history: list[dict]
    checkpoint: Path | None


def train_loop(cfg: TrainConfig, data, out_dir=None, log_path=None, progress=None) -> TrainResult:
    """Train a fresh model.

    Args:
        cfg: Run configuration.
        data: ``DatasetManifest`` (its train split is used), a ``GroupBank``
            or a ``[groups, 6, samples]`` array.
        out_dir: Where checkpoints and the loss log go; ``None`` disables
            file output.
        log_path: Loss log override (defaults to ``out_dir/losses.jsonl``).
        progress: Optional callback ``(step, values)``.
    """
    from ..dataset import DatasetManifest, GroupBank

    if isinstance(data, (str, Path)):
        data = DatasetManifest.load(data)
    if isinstance(data, DatasetManifest):
        data = GroupBank.from_manifest(data, "train")
    torch.manual_seed(cfg.seed)
    model = CodecModel(cfg.model)
    optimizer = make_optimizer(model, cfg.learning_rate)
    discriminator = None
    if cfg.weights.adversarial > 0:
        from .adversarial import SpectrogramDiscriminator

        discriminator = SpectrogramDiscriminator(lr=cfg.learning_rate, seed=cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    stream = BatchStream(data, cfg)
    out = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "resolved_config.json").write_text(json.dumps(cfg.to_flat(), indent=2))
            log_fh = open(log_path or out / "losses.jsonl", "w")
        except OSError as exc:
            raise IoError(out, f"cannot prepare run directory: {exc}") from exc
    history = []
    ckpt = None
    t0 = time.perf_counter()
    try:
        for step in range(1, cfg.steps + 1):
            batch = next(stream)
            values = train_step(model, batch, cfg.weights, optimizer, generator, discriminator)
            record = {"step": step, "task_id": batch.spec.task_id.value, **values}
            history.append(record)
            if log_fh is not None and step % cfg.log_every == 0:
                log_fh.write(json.dumps(record) + "\n")
            if progress is not None:
                progress(step, record)
            if out is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                save_checkpoint(out / f"step_{step:06d}.pt", model, step, {"train_config": cfg.to_flat()})
    finally:
        if log_fh is not None:
            log_fh.close()
    if out is not None:
        ckpt = save_checkpoint(out / "final.pt", model, cfg.steps,
                               {"train_config": cfg.to_flat(),
                                "seconds": time.perf_counter() - t0})
    model.eval()
    return TrainResult(model, history, ckpt)


def smoothed(values, window: int = 100) -> np.ndarray:
    """Trailing moving average used to compare loss levels across a run."""
    v = np.asarray(values, dtype=np.float64)
    w = max(1, min(window, len(v)))
    c = np.cumsum(np.insert(v, 0, 0.0))
    return (c[w:] - c[:-w]) / w


def task_balanced_mean(history, key: str = "total") -> float:
    """Mean of per-task means, i.e. the expected loss under uniform task sampling.

    Consecutive steps draw different tasks whose loss levels differ several
    fold, so a plain window mean mostly measures the task mix.
    """
    by_task: dict[str, list[float]] = {}
    for rec in history:
        by_task.setdefault(rec["task_id"], []).append(rec[key])
    if not by_task:
        raise ValidationError("empty loss history")
    return float(np.mean([np.mean(v) for v in by_task.values()]))


def loss_decrease(history, head: int = 50, tail: int = 200, key: str = "total") -> float:
    """Relative drop ``1 - late / early`` of the task-balanced loss.

    ``early`` averages the first ``head`` steps and ``late`` the last
    ``tail`` steps.
    """
    if len(history) < max(head, tail):
        raise ValidationError(f"need at least {max(head, tail)} logged steps, got {len(history)}")
    early = task_balanced_mean(history[:head], key)
    late = task_balanced_mean(history[-tail:], key)
    return 1.0 - late / early
