"""Profiling subsystem: a message bus over pluggable profiling components."""
from .components import BlockProfiler, PathProfiler, ProfilingComponent, SamplingProfiler, decay
from .manager import ProfilingManager
from .messages import (QUERY, REGISTER, RELEASE, AgeMsg, BlockCntMsg, EdgeCntMsg, MeasureMsg, MissCntMsg,
                       PathCntMsg, PathSetMsg, ProcHotnessMsg, ProfileMessage, SimilarityMsg)
from .paths import PathCapExceeded, PathPlan, enumerate_paths, find_back_edges

__all__ = [
    "AgeMsg", "BlockCntMsg", "BlockProfiler", "EdgeCntMsg", "MeasureMsg", "MissCntMsg", "PathCapExceeded",
    "PathCntMsg", "PathPlan", "PathProfiler", "PathSetMsg", "ProcHotnessMsg", "ProfileMessage",
    "ProfilingComponent", "ProfilingManager", "QUERY", "REGISTER", "RELEASE", "SamplingProfiler",
    "SimilarityMsg", "decay", "enumerate_paths", "find_back_edges",
]
