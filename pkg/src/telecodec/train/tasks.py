"""The five embedding-manipulation training tasks.

Signals of a sample group are addressed by ``(content, room)`` with room 0
meaning the anechoic recording: ``(1, 0)`` is clean_1, ``(2, 1)`` is
reverb_21 and so on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

SignalId = tuple[int, int]

# row order of a group's signal stack; see dataset.GroupBank
SIGNAL_ORDER: tuple[SignalId, ...] = ((1, 0), (2, 0), (1, 1), (1, 2), (2, 1), (2, 2))
SIGNAL_INDEX = {sid: k for k, sid in enumerate(SIGNAL_ORDER)}
SIGNAL_NAMES = {
    (1, 0): "clean_1",
    (2, 0): "clean_2",
    (1, 1): "reverb_11",
    (1, 2): "reverb_12",
    (2, 1): "reverb_21",
    (2, 2): "reverb_22",
}


class TaskId(str, enum.Enum):
    CR = "CR"
    RR = "RR"
    DR = "DR"
    AT_SS = "AT_SS"
    AT_DS = "AT_DS"


class EmbeddingOp(str, enum.Enum):
    NONE = "none"
    ZERO = "zero_acoustic"
    SWAP = "swap_acoustic"


OMRAN_TASKSET = (TaskId.RR, TaskId.DR, TaskId.AT_DS)
ALL_TASKS = tuple(TaskId)
AT_ONLY = (TaskId.AT_SS, TaskId.AT_DS)

_OPS = {
    TaskId.CR: EmbeddingOp.NONE,
    TaskId.RR: EmbeddingOp.NONE,
    TaskId.DR: EmbeddingOp.ZERO,
    TaskId.AT_SS: EmbeddingOp.SWAP,
    TaskId.AT_DS: EmbeddingOp.SWAP,
}


def parse_tasks(spec) -> tuple[TaskId, ...]:
    """Parse ``"rr,dr,at_ds"`` (or an iterable of names) into task ids."""
    names = spec.split(",") if isinstance(spec, str) else list(spec)
    out = []
    for name in names:
        key = str(getattr(name, "value", name)).strip().upper().replace("-", "_")
        if not key:
            continue
        try:
            task = TaskId(key)
        except ValueError:
            valid = ", ".join(t.value.lower() for t in TaskId)
            raise ValidationError(f"unknown task {name!r}; valid ids: {valid}") from None
        if task not in out:
            out.append(task)
    if not out:
        raise ValidationError("task set must not be empty")
    return tuple(out)


@dataclass(frozen=True)
class TaskSpec:
    """One concrete task instance: which signals go in, what happens to the
    latents, and which signals are the targets (aligned with ``inputs``)."""

    task_id: TaskId
    inputs: tuple[SignalId, ...]
    op: EmbeddingOp
    targets: tuple[SignalId, ...]


def task_spec(task: TaskId, rng: np.random.Generator | None = None) -> TaskSpec:
    """Draw the input/target selection for ``task``.

    CR, RR, DR and AT_SS pick their content (and room) indices from ``rng``;
    AT_DS always pairs reverb_11 with reverb_22.
    """
    task = TaskId(task)
    rng = rng if rng is not None else np.random.default_rng(0)
    c = int(rng.integers(1, 3))
    if task is TaskId.CR:
        return TaskSpec(task, ((c, 0),), EmbeddingOp.NONE, ((c, 0),))
    if task is TaskId.RR:
        r = int(rng.integers(1, 3))
        return TaskSpec(task, ((c, r),), EmbeddingOp.NONE, ((c, r),))
    if task is TaskId.DR:
        r = int(rng.integers(1, 3))
        return TaskSpec(task, ((c, r),), EmbeddingOp.ZERO, ((c, 0),))
    if task is TaskId.AT_SS:
        return TaskSpec(task, ((c, 1), (c, 2)), EmbeddingOp.SWAP, ((c, 2), (c, 1)))
    return TaskSpec(task, ((1, 1), (2, 2)), EmbeddingOp.SWAP, ((1, 2), (2, 1)))


@dataclass(frozen=True)
class EmbeddingPair:
    """Speech source, acoustic source (``None`` = zero embedding) and target."""

    speech: SignalId
    acoustic: SignalId | None
    target: SignalId
    task_id: TaskId


def enumerate_pairs(group=None) -> list[EmbeddingPair]:
    """All speech/acoustic embedding pairings that the five tasks train.

    Under ideal disentanglement the speech embedding depends only on content
    and the acoustic one only on the room, so every pairing decodes to the
    signal with the speech source's content and the acoustic source's room.
    The group itself only fixes the two contents and two rooms, so the
    enumeration does not depend on its audio.
    """
    pairs = []
    for c in (1, 2):
        pairs.append(EmbeddingPair((c, 0), (c, 0), (c, 0), TaskId.CR))
    for c in (1, 2):
        for r in (1, 2):
            pairs.append(EmbeddingPair((c, r), (c, r), (c, r), TaskId.RR))
    for c in (1, 2):
        for r in (1, 2):
            pairs.append(EmbeddingPair((c, r), None, (c, 0), TaskId.DR))
    for c in (1, 2):
        for r1, r2 in ((1, 2), (2, 1)):
            pairs.append(EmbeddingPair((c, r1), (c, r2), (c, r2), TaskId.AT_SS))
    for c1, c2 in ((1, 2), (2, 1)):
        for r1, r2 in ((1, 2), (2, 1)):
            pairs.append(EmbeddingPair((c1, r1), (c2, r2), (c1, r2), TaskId.AT_DS))
    return pairs


def ideal_target(speech: SignalId, acoustic: SignalId | None) -> SignalId:
    """Signal an ideally disentangled codec decodes a pairing to."""
    return (speech[0], 0 if acoustic is None else acoustic[1])


@dataclass
class TaskBatch:
    spec: TaskSpec
    inputs: np.ndarray  # [n_inputs, B, samples]
    targets: np.ndarray  # [n_inputs, B, samples]

    @property
    def op(self) -> EmbeddingOp:
        return self.spec.op


def assemble_task_batch(groups, task: TaskId, seed: int, crop: int | None = None,
                        hop: int = 320) -> TaskBatch:
    """Stack per-task inputs and targets for a list of groups.

    Args:
        groups: Sequence of ``[6, samples]`` arrays in ``SIGNAL_ORDER`` (or
            objects with a ``stack()`` method returning one).
        task: Task to assemble.
        seed: Seeds the task selection and the crop offsets.
        crop: Optional crop length in samples; one hop-aligned offset is
            drawn per group and shared by all of its signals.
    """
    if len(groups) == 0:
        raise ValidationError("assemble_task_batch needs at least one group")
    rng = np.random.default_rng(seed)
    spec = task_spec(task, rng)
    stacks = [g.stack() if hasattr(g, "stack") else np.asarray(g) for g in groups]
    n = stacks[0].shape[-1]
    if crop is not None and crop < n:
        offsets = rng.integers(0, (n - crop) // hop + 1, size=len(stacks)) * hop
    else:
        crop, offsets = n, np.zeros(len(stacks), dtype=int)

    def pick(sid):
        k = SIGNAL_INDEX[sid]
        return np.stack([s[k, o:o + crop] for s, o in zip(stacks, offsets)])

    inputs = np.stack([pick(sid) for sid in spec.inputs]).astype(np.float32)
    targets = np.stack([pick(sid) for sid in spec.targets]).astype(np.float32)
    return TaskBatch(spec, inputs, targets)
