"""Training tasks, losses and loop."""

from .losses import LossWeights, reconstruction_loss
from .tasks import (
    ALL_TASKS,
    AT_ONLY,
    OMRAN_TASKSET,
    EmbeddingOp,
    TaskId,
    TaskSpec,
    assemble_task_batch,
    enumerate_pairs,
    parse_tasks,
)

__all__ = [
    "ALL_TASKS",
    "AT_ONLY",
    "OMRAN_TASKSET",
    "EmbeddingOp",
    "LossWeights",
    "TaskId",
    "TaskSpec",
    "assemble_task_batch",
    "enumerate_pairs",
    "parse_tasks",
    "reconstruction_loss",
]
