from .finetune import apply_feedback, run_simulation, simulation_records
from .morphology import dilate, erode, perturb_mask
from .records import FeedbackRecord, FeedbackSchedule, build_schedule

__all__ = [
    "FeedbackRecord",
    "FeedbackSchedule",
    "build_schedule",
    "perturb_mask",
    "dilate",
    "erode",
    "apply_feedback",
    "run_simulation",
    "simulation_records",
]
