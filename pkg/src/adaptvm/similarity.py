"""Profile similarity: angular and magnitude terms over consecutive counter vectors."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

Vector = Sequence[float]


@dataclass(frozen=True)
class SimilarityParams:
    c: float = 100.0
    k: int = 8
    stable_epsilon: float = 1e-9
    reopt_threshold: float = 0.95

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.k <= 0 or self.k % 2:
            raise ValueError("k must be a positive even integer")
        if not self.stable_epsilon > 0:
            raise ValueError("stable_epsilon must be positive")
        if not 0 < self.reopt_threshold < 1:
            raise ValueError("reopt_threshold must lie in (0, 1)")


DEFAULT = SimilarityParams()


def _check(a: Vector, b: Vector) -> None:
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")


def pad(prev: Vector, cur: Vector) -> tuple[list, list]:
    """Append the largest entry of either vector to both."""
    _check(prev, cur)
    m = max(max(prev, default=0), max(cur, default=0))
    return list(prev) + [m], list(cur) + [m]


def alpha(a: Vector, b: Vector) -> float:
    _check(a, b)
    dot = math.fsum(x * y for x, y in zip(a, b))
    na = math.sqrt(math.fsum(x * x for x in a))
    nb = math.sqrt(math.fsum(y * y for y in b))
    return dot / (na * nb + 1.0)


def beta(a: Vector, b: Vector) -> float:
    _check(a, b)
    if not a:
        return 0.0
    return math.sqrt(math.fsum((y - x) ** 2 for x, y in zip(a, b))) / math.sqrt(len(a))


def combine(al: float, bt: float, params: SimilarityParams = DEFAULT) -> float:
    """S from its angular and magnitude terms; exactly 1 when ``bt == 0``."""
    if bt == 0.0:
        return 1.0
    return math.exp(-((bt / params.c) ** params.k)) * (1.0 - al) + al


def similarity(a: Vector, b: Vector, params: SimilarityParams = DEFAULT) -> float:
    """Combine the damped angular term with a change-size gate; exactly 1 when ``a == b``.

    Two positive one-dimensional vectors point the same way, so their angular
    term is taken as exactly 1 rather than the damped ``ab/(ab+1)``. This is
    the degeneracy that ``pad`` exists to remove.
    """
    _check(a, b)
    if len(a) == 1 and a[0] > 0 and b[0] > 0:
        return 1.0
    return combine(alpha(a, b), beta(a, b), params)


def padded_similarity(prev: Vector, cur: Vector, params: SimilarityParams = DEFAULT) -> float:
    return similarity(*pad(prev, cur), params)


def is_stable(s: float, params: SimilarityParams = DEFAULT) -> bool:
    return s >= 1.0 - params.stable_epsilon


def needs_reoptimization(s: float, params: SimilarityParams = DEFAULT) -> bool:
    return s < params.reopt_threshold


# Earlier, superseded forms of the angular term, kept for comparison in tests.

def _cosine(a: Vector, b: Vector) -> float:
    """Undamped cosine; undefined for zero vectors."""
    dot = math.fsum(x * y for x, y in zip(a, b))
    return dot / (math.sqrt(math.fsum(x * x for x in a)) * math.sqrt(math.fsum(y * y for y in b)))


def _angle(a: Vector, b: Vector) -> float:
    return math.acos(max(-1.0, min(1.0, _cosine(a, b))))


def _similarity_undamped(a: Vector, b: Vector, params: SimilarityParams = DEFAULT) -> float:
    al = _cosine(a, b)
    return math.exp(-((beta(a, b) / params.c) ** params.k)) * (1.0 - al) + al
