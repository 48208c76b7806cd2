"""Volatile record of which phases were applied to which procedures and how they paid off."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

APPLIED = "applied"
NON_PROFITABLE = "non_profitable"


@dataclass
class HistoryEntry:
    phase: str
    status: str = APPLIED
    last_speedup: float | None = None
    count: int = 0
    detail: Any = None


@dataclass
class PhaseMeasure:
    ewma: float | None = None
    samples: int = 0


@dataclass
class HistoryDatabase:
    ewma_weight: float = 0.3
    entries: dict[str, list[HistoryEntry]] = field(default_factory=dict)
    measures: dict[str, PhaseMeasure] = field(default_factory=dict)
    failures: dict[str, int] = field(default_factory=dict)

    def for_proc(self, proc: str) -> list[HistoryEntry]:
        return self.entries.get(proc, [])

    def entry(self, proc: str, phase: str) -> HistoryEntry | None:
        for e in self.entries.get(proc, []):
            if e.phase == phase:
                return e
        return None

    def is_applied(self, proc: str, phase: str) -> bool:
        e = self.entry(proc, phase)
        return e is not None and e.status == APPLIED

    def is_non_profitable(self, proc: str, phase: str) -> bool:
        e = self.entry(proc, phase)
        return e is not None and e.status == NON_PROFITABLE

    def record_applied(self, proc: str, phase: str, detail: Any) -> tuple[HistoryEntry, bool]:
        """Returns the entry and whether this is its first application."""
        e = self.entry(proc, phase)
        fresh = e is None or e.status != APPLIED
        if e is None:
            e = HistoryEntry(phase)
            self.entries.setdefault(proc, []).append(e)
        e.status = APPLIED
        e.count += 1
        e.detail = detail
        return e, fresh

    def mark_non_profitable(self, proc: str, phase: str) -> None:
        e = self.entry(proc, phase)
        if e is None:
            e = HistoryEntry(phase)
            self.entries.setdefault(proc, []).append(e)
        e.status = NON_PROFITABLE

    def remove(self, proc: str, phase: str) -> HistoryEntry | None:
        lst = self.entries.get(proc, [])
        for i, e in enumerate(lst):
            if e.phase == phase:
                return lst.pop(i)
        return None

    def measured(self, phase: str) -> float | None:
        m = self.measures.get(phase)
        return None if m is None else m.ewma

    def fold(self, phase: str, speedup: float) -> None:
        m = self.measures.setdefault(phase, PhaseMeasure())
        m.ewma = speedup if m.ewma is None else self.ewma_weight * speedup + (1 - self.ewma_weight) * m.ewma
        m.samples += 1

    def dump(self) -> list[str]:
        lines = []
        for proc in sorted(self.entries):
            for e in self.entries[proc]:
                sp = "-" if e.last_speedup is None else f"{e.last_speedup:.4f}"
                lines.append(f"{proc} {e.phase} {e.status} speedup={sp} count={e.count}")
        return lines
