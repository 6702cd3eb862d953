"""Carbon-aware scheduling of workflows on heterogeneous clusters."""

from .cwm import CwmParams, run_cwm
from .evaluate import carbon_cost, makespan, validate_schedule
from .heft_sl import schedule_heft_sl
from .model import (
    Cluster,
    CommChannel,
    Edge,
    Instance,
    Interval,
    PowerProfile,
    Processor,
    Schedule,
    ScheduledItem,
    Task,
    Workflow,
)

__version__ = "0.1.0"

__all__ = [
    "CwmParams", "run_cwm", "carbon_cost", "makespan", "validate_schedule", "schedule_heft_sl",
    "Cluster", "CommChannel", "Edge", "Instance", "Interval", "PowerProfile", "Processor",
    "Schedule", "ScheduledItem", "Task", "Workflow",
]
