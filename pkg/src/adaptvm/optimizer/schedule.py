"""Phase ordering from placement anchors."""
from __future__ import annotations

import heapq


class ScheduleError(Exception):
    pass


class UnknownAnchor(ScheduleError):
    pass


class CyclicAnchors(ScheduleError):
    pass


def parse_anchor(anchor: str) -> tuple[str, str | None]:
    """``"first"`` / ``"last"`` / ``"before NAME"`` / ``"after NAME"`` -> (kind, target)."""
    parts = anchor.split()
    if parts in (["first"], ["last"]):
        return parts[0], None
    if len(parts) == 2 and parts[0] in ("before", "after"):
        return parts[0], parts[1]
    raise ScheduleError(f"malformed anchor {anchor!r}")


def resolve(phases: list[tuple[str, tuple[str, ...]]]) -> list[str]:
    """Topologically order ``[(name, anchors)]``; list order breaks ties."""
    names = [n for n, _ in phases]
    index = {n: i for i, n in enumerate(names)}
    if len(index) != len(names):
        raise ScheduleError("duplicate phase name")
    edges: dict[str, set[str]] = {n: set() for n in names}
    firsts, lasts = set(), set()
    for name, anchors in phases:
        for a in anchors:
            kind, target = parse_anchor(a)
            if kind == "first":
                firsts.add(name)
            elif kind == "last":
                lasts.add(name)
            else:
                if target not in index:
                    raise UnknownAnchor(f"{name}: anchor {a!r} names an unknown phase")
                if target == name:
                    raise CyclicAnchors(f"{name} anchored to itself")
                if kind == "before":
                    edges[name].add(target)
                else:
                    edges[target].add(name)
    for f in firsts:
        edges[f].update(n for n in names if n not in firsts)
    for n in names:
        if n not in lasts:
            edges[n].update(lasts)
    indeg = {n: 0 for n in names}
    for n in names:
        edges[n].discard(n)
        for m in edges[n]:
            indeg[m] += 1
    ready = [(index[n], n) for n in names if indeg[n] == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        _, n = heapq.heappop(ready)
        order.append(n)
        for m in edges[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(ready, (index[m], m))
    if len(order) != len(names):
        stuck = sorted(set(names) - set(order))
        raise CyclicAnchors(f"unsatisfiable anchors among {stuck}")
    return order


def check(order: list[str], phases: list[tuple[str, tuple[str, ...]]]) -> list[str]:
    """Anchor violations of ``order``; empty when legal."""
    pos = {n: i for i, n in enumerate(order)}
    firsts = {n for n, a in phases if "first" in a}
    lasts = {n for n, a in phases if "last" in a}
    bad = []
    for name, anchors in phases:
        for a in anchors:
            kind, target = parse_anchor(a)
            if kind == "before" and not pos[name] < pos[target]:
                bad.append(f"{name} {a}")
            elif kind == "after" and not pos[name] > pos[target]:
                bad.append(f"{name} {a}")
            elif kind == "first" and any(pos[n] < pos[name] for n in pos if n not in firsts):
                bad.append(f"{name} first")
            elif kind == "last" and any(pos[n] > pos[name] for n in pos if n not in lasts):
                bad.append(f"{name} last")
    return bad
