"""Messages carried by the profiling bus."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

REGISTER, QUERY, RELEASE = 1, 2, 3


@dataclass
class ProfileMessage:
    handled: bool = field(default=False, init=False)


@dataclass
class AgeMsg(ProfileMessage):
    pass


@dataclass
class SimilarityMsg(ProfileMessage):
    proc: str = ""
    values: dict[str, float] = field(default_factory=dict)  # component name -> S

    @property
    def reply(self) -> float:
        return min(self.values.values()) if self.values else 1.0


@dataclass
class MeasureMsg(ProfileMessage):
    request_code: int = QUERY
    proc: str = ""
    target: Any = None
    reply: Any = None

    def __post_init__(self):
        if self.request_code not in (REGISTER, QUERY, RELEASE):
            raise ValueError(f"bad request code {self.request_code}")


@dataclass
class PathCntMsg(MeasureMsg):
    """target: path id."""


@dataclass
class BlockCntMsg(MeasureMsg):
    """target: block label."""


@dataclass
class EdgeCntMsg(MeasureMsg):
    """target: (source label, target label) of a back edge."""


@dataclass
class ProcHotnessMsg(MeasureMsg):
    """target unused; reply is the procedure's share of recent samples (a count)."""


@dataclass
class MissCntMsg(MeasureMsg):
    """Defined for protocol completeness; no shipped component handles it."""


@dataclass
class PathSetMsg(MeasureMsg):
    """target: block label; reply is the sorted list of path ids through the block."""
