"""Staged training harness: losses, desk-scale data, schedules, presets."""

from .data import MicroDataset, attach_references, make_micro_dataset, pack_clips
from .losses import (INTRA_DISTORTION_SCALE, distortion, packed_pixels,
                     rd_loss_inter, rd_loss_intra)
from .presets import (SCHEDULES, desk_schedule, residual_schedule,
                      stages_from_yaml, stages_to_yaml)
from .schedule import (PARAM_GROUPS, Stage, StageResult, run_schedule,
                       run_stage)

__all__ = [
    "INTRA_DISTORTION_SCALE", "MicroDataset", "PARAM_GROUPS", "SCHEDULES",
    "Stage", "StageResult", "attach_references", "desk_schedule", "distortion",
    "make_micro_dataset", "pack_clips", "packed_pixels", "rd_loss_inter",
    "rd_loss_intra", "residual_schedule", "run_schedule", "run_stage",
    "stages_from_yaml", "stages_to_yaml",
]
