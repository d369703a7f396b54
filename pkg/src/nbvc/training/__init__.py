from .loss import STAGES, TrainingConfig, guard_finite, rd_loss
from .data import ClipDataset, SequenceFolderDataset
from .stages import StageReport, motion_train_step, run_stage
from .gradcheck import GradReport, gradcheck, run_all

__all__ = [
    "STAGES", "TrainingConfig", "guard_finite", "rd_loss",
    "ClipDataset", "SequenceFolderDataset",
    "StageReport", "motion_train_step", "run_stage",
    "GradReport", "gradcheck", "run_all",
]
