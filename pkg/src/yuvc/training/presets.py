"""Canned stage schedules and a YAML config layer for the train CLI."""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path

import yaml

from .schedule import Stage

# Fixed operating points for the single-rate warmup stages. The variable-rate
# stages that follow sample per batch element across the full ranges.
WARMUP_LAMBDA_I = 0.05
WARMUP_LAMBDA_P_INDEX = 1


def desk_schedule(steps: int = 60, batch: int = 4, crop: int = 64) -> list[Stage]:
    """Full conditional-codec progression at desk scale.

    Single-rate warmups first (intra, then the motion path, then the
    conditional coder, then everything jointly), then the rate-adaption
    nets are trained one group at a time with the backbone frozen.
    """
    fixed = dict(lambda_i=WARMUP_LAMBDA_I, lambda_p_index=WARMUP_LAMBDA_P_INDEX,
                 batch=batch, crop=crop)
    sampled = dict(lambda_i=None, lambda_p_index=None, batch=batch, crop=crop,
                   adapt=True)
    return [
        Stage("intra", "intra", steps, ("intra",), lr=1e-3, **fixed),
        Stage("vr_intra", "intra", steps, ("intra_rate",), lr=1e-3,
              lambda_p_index=None, batch=batch, crop=crop, adapt=True),
        # the warp objective moves slowly (subpixel gradients), so the flow
        # warmup gets twice the budget; past that the held-out warp stops
        # improving and starts drifting, so the flow net stays frozen from
        # here on
        Stage("flow", "flow", 2 * steps, ("flow",), lr=1e-3, **fixed),
        Stage("motion", "motion", steps, ("motion_coder", "mcnet"),
              lr=1e-3, **fixed),
        Stage("inter", "inter", steps, ("inter",), lr=1e-3, **fixed),
        # the motion coder is frozen here on purpose: once the conditional
        # coder is in the loop it will happily absorb prediction error, the
        # RD pressure on the motion code collapses, and the code drifts into
        # a state that only works at the training crop size (bits blow up
        # ~10x at larger frames and the decoded flow goes wild at borders)
        Stage("joint", "joint", steps, ("inter", "mcnet"), lr=3e-4, **fixed),
        Stage("vr_inter", "inter", steps, ("inter_rate",), lr=1e-3, **sampled),
        Stage("vr_motion", "inter", steps, ("motion_rate",), lr=1e-3, **sampled),
        # co-adaption pass over heads that are already near their optima: a
        # fresh optimizer at warmup lr knocks them off before settling, so
        # this runs cold
        Stage("vr_joint", "joint", steps, ("inter_rate", "motion_rate"),
              lr=1e-4, **sampled),
    ]


def residual_schedule(steps: int = 60, batch: int = 4, crop: int = 64) -> list[Stage]:
    """Baseline: same motion path, residual coder instead of conditional."""
    fixed = dict(lambda_i=WARMUP_LAMBDA_I, lambda_p_index=WARMUP_LAMBDA_P_INDEX,
                 batch=batch, crop=crop)
    return [
        Stage("intra", "intra", steps, ("intra",), lr=1e-3, **fixed),
        Stage("flow", "flow", 2 * steps, ("flow",), lr=1e-3, **fixed),
        Stage("motion", "motion", steps, ("motion_coder", "mcnet"),
              lr=1e-3, **fixed),
        Stage("residual", "residual", steps, ("residual",), lr=1e-3, **fixed),
        # motion pieces frozen for the same reason as the desk joint stage
        Stage("res_joint", "residual", steps, ("residual", "mcnet"),
              lr=1e-4, **fixed),
    ]


SCHEDULES = {"desk": desk_schedule, "residual": residual_schedule}


def stages_to_yaml(stages: list[Stage], path) -> None:
    Path(path).write_text(yaml.safe_dump({"stages": [asdict(s) for s in stages]},
                                         sort_keys=False))


def stages_from_yaml(path) -> list[Stage]:
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict) or "stages" not in doc:
        raise ValueError(f"{path}: expected a mapping with a 'stages' list")
    stages = []
    for i, raw in enumerate(doc["stages"]):
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: stage {i} is not a mapping")
        raw = dict(raw)
        if "trainable" in raw:
            raw["trainable"] = tuple(raw["trainable"])
        try:
            stages.append(Stage(**raw))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: stage {i}: {exc}") from exc
    return stages
