"""Optimizer subsystem: phase plug-ins driven by an optimization manager."""
from .history import APPLIED, NON_PROFITABLE, HistoryDatabase, HistoryEntry
from .manager import PHASE_CALLS, OptimizationManager, OptimizeResult
from .phases import (BUILTIN, CommonSubexpressionElimination, ConstantFolding, DeadCodeElimination, Devirtualization,
                     EstimateMsg, IdentifyMsg, Inlining, Instrumentation, OptContext, OptimizationPhase, OptimizeMsg,
                     RecompileMsg, eliminate_common_subexpressions, eliminate_dead_code, fold_constants, inline_call)
from .schedule import CyclicAnchors, ScheduleError, UnknownAnchor

DEFAULT_PHASES = ("devirtualize", "inline", "constfold", "cse", "dce")


def standard_phases(names=DEFAULT_PHASES, profiler=None) -> list:
    """Instantiate built-in phases in canonical registration order."""
    out = []
    if profiler is not None:
        out.append(Instrumentation(profiler))
    for n in DEFAULT_PHASES:
        if n in names:
            out.append(BUILTIN[n]())
    unknown = set(names) - set(DEFAULT_PHASES)
    if unknown:
        raise ValueError(f"unknown phases: {sorted(unknown)}")
    return out


__all__ = [
    "APPLIED", "BUILTIN", "CommonSubexpressionElimination", "ConstantFolding", "CyclicAnchors", "DEFAULT_PHASES",
    "DeadCodeElimination", "Devirtualization", "EstimateMsg", "HistoryDatabase", "HistoryEntry", "IdentifyMsg",
    "Inlining", "Instrumentation", "NON_PROFITABLE", "OptContext", "OptimizationManager", "OptimizationPhase",
    "OptimizeMsg", "OptimizeResult", "PHASE_CALLS", "RecompileMsg", "ScheduleError", "UnknownAnchor",
    "eliminate_common_subexpressions", "eliminate_dead_code", "fold_constants", "inline_call", "standard_phases",
]
