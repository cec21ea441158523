from .history import Event, History
from .scheduler import (
    ExplicitSchedule,
    Program,
    RandomScheduler,
    RoundRobin,
    RunResult,
    explore_all_schedules,
    run,
    run_schedule,
)
from .check import Verdict, check_detectable, check_linearizable, HistoryTooLarge
from .crash import CrashPlan, enumerate_crash_points, run_crash_plan, detectability_sweep

__all__ = [
    "Event",
    "History",
    "Program",
    "RunResult",
    "RoundRobin",
    "RandomScheduler",
    "ExplicitSchedule",
    "run",
    "run_schedule",
    "explore_all_schedules",
    "Verdict",
    "check_linearizable",
    "check_detectable",
    "HistoryTooLarge",
    "CrashPlan",
    "enumerate_crash_points",
    "run_crash_plan",
    "detectability_sweep",
]
