"""Profiling manager: component registry, broadcast bus, aging and stability."""
from __future__ import annotations

import logging

from ..similarity import DEFAULT, SimilarityParams, is_stable
from .messages import AgeMsg, ProfileMessage, SimilarityMsg

log = logging.getLogger(__name__)


class ProfilingManager:
    def __init__(self, params: SimilarityParams = DEFAULT):
        self.params = params
        self.components: dict[int, object] = {}
        self._next_id = 1
        self.depth = 0
        self.last_similarity: dict[str, float] = {}

    def register_component(self, comp) -> int:
        if any(c.name == comp.name for c in self.components.values()):
            raise ValueError(f"profiling component {comp.name!r} already registered")
        rid = self._next_id
        self._next_id += 1
        self.components[rid] = comp
        comp.attach(self)
        return rid

    def deregister(self, rid: int) -> None:
        self.components.pop(rid)

    def component(self, name: str):
        for c in self.components.values():
            if c.name == name:
                return c
        raise KeyError(name)

    def broadcast(self, msg: ProfileMessage) -> ProfileMessage:
        """Deliver ``msg`` to every component in registration order; nested calls allowed."""
        self.depth += 1
        try:
            for comp in list(self.components.values()):
                comp.receive(msg)
        finally:
            self.depth -= 1
        return msg

    def age(self) -> None:
        self.broadcast(AgeMsg())

    def similarity(self, proc: str) -> float:
        msg = self.broadcast(SimilarityMsg(proc=proc))
        s = msg.reply
        self.last_similarity[proc] = s
        return s

    def stable_proc(self, proc: str) -> bool:
        return is_stable(self.similarity(proc), self.params)

    def dump(self) -> list[str]:
        lines = []
        for comp in self.components.values():
            lines.extend(comp.dump())
        return lines
