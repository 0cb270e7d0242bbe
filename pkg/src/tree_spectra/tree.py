"""Regular rooted metric trees and their geometric invariants."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, HorizonExceededError, InconclusiveError, UnsupportedOperationError


class TreeKind(enum.Enum):
    RECURRENT = "Recurrent"
    TRANSIENT = "Transient"


@dataclass(frozen=True)
class TreeClass:
    kind: TreeKind
    reduced_height: float  # math.inf iff recurrent

    def __post_init__(self):
        if (self.kind is TreeKind.TRANSIENT) != math.isfinite(self.reduced_height):
            raise ValueError("kind must be Transient exactly when reduced_height is finite")


@dataclass(frozen=True, eq=False)
class RegularTree:
    """A regular tree given by ``b_0..b_{H-1}`` and ``t_0 = 0 < t_1 < ... < t_H``.

    ``g0[n] = b_0 * ... * b_n`` is the branching function on ``(t_n, t_{n+1}]``.
    ``generator`` holds ``(b, d)`` for trees built by :func:`b_regular`; it lets
    tail sums be done in closed form.
    """

    branching: np.ndarray
    radii: np.ndarray
    generator: Optional[tuple] = None
    g0: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b = np.asarray(self.branching, dtype=np.int64)
        t = np.asarray(self.radii, dtype=np.float64)
        if t.ndim != 1 or t.size < 2:
            raise DomainError("at least one vertex radius t_1 is required")
        if b.size != t.size - 1:
            raise DomainError("need one branching number per materialized generation (b_0..b_{H-1})")
        if b[0] != 1:
            raise DomainError("b_0 must equal 1")
        if np.any(b[1:] < 2):
            raise DomainError("b_n must be >= 2 for n >= 1")
        if t[0] != 0.0:
            raise DomainError("t_0 must be 0")
        if np.any(np.diff(t) <= 0) or not np.all(np.isfinite(t)):
            raise DomainError("vertex radii must be finite and strictly increasing")
        b.setflags(write=False)
        t.setflags(write=False)
        g0 = np.cumprod(b.astype(np.float64))
        g0.setflags(write=False)
        object.__setattr__(self, "branching", b)
        object.__setattr__(self, "radii", t)
        object.__setattr__(self, "g0", g0)

    @property
    def horizon(self) -> int:
        return self.radii.size - 1

    @property
    def max_radius(self) -> float:
        return float(self.radii[-1])

    @property
    def is_b_regular(self) -> bool:
        return self.generator is not None

    @property
    def dimension_two(self) -> bool:
        return self.generator is not None and self.generator[1] == 2

    def generation_of(self, t):
        """Index ``n`` with ``t_n < t <= t_{n+1}`` (half-open to the left)."""
        return np.searchsorted(self.radii, t, side="left") - 1

    def multiplicity(self, k: int) -> int:
        """Number of copies of the channel that starts at generation ``k``."""
        if k == 0:
            return 1
        if k >= self.horizon:
            raise HorizonExceededError(f"generation {k} beyond horizon {self.horizon}")
        prod = 1
        for bn in self.branching[:k].tolist():
            prod *= bn
        return prod * (int(self.branching[k]) - 1)

    def extend(self, horizon: int) -> "RegularTree":
        if self.generator is None:
            raise UnsupportedOperationError("only generator trees can be extended")
        b, d = self.generator
        return b_regular(b, d, horizon)

    def to_dict(self) -> dict:
        if self.generator is not None:
            b, d = self.generator
            return {"kind": "b_regular", "b": int(b), "d": float(d), "horizon": self.horizon}
        return {"kind": "explicit", "b": self.branching.tolist(), "t": self.radii[1:].tolist()}


def b_regular(b: int, d: float, horizon: int = 40) -> RegularTree:
    """b-regular tree with ``t_n = b**(n/(d-1))``; its global dimension is ``d``."""
    if int(b) != b or b < 2:
        raise DomainError("b must be an integer >= 2")
    if not d > 1:
        raise DomainError("global dimension d must exceed 1")
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    n = np.arange(horizon + 1, dtype=np.float64)
    t = float(b) ** (n / (d - 1.0))
    t[0] = 0.0
    branching = np.full(horizon, int(b), dtype=np.int64)
    branching[0] = 1
    return RegularTree(branching, t, generator=(int(b), float(d)))


def explicit_tree(branching: Sequence[int], radii: Sequence[float]) -> RegularTree:
    """Tree from ``b_0..b_{H-1}`` and ``t_1..t_H`` (``t_0 = 0`` is implied)."""
    radii = list(radii)
    if radii and radii[0] == 0.0:
        raise DomainError("list t_1..t_H only; t_0 = 0 is implied")
    return RegularTree(np.asarray(branching), np.concatenate([[0.0], np.asarray(radii, dtype=float)]))


def tree_from_dict(spec: dict) -> RegularTree:
    kind = spec.get("kind")
    if kind == "b_regular":
        return b_regular(int(spec["b"]), float(spec["d"]), int(spec.get("horizon", 40)))
    if kind == "explicit":
        return explicit_tree(spec["b"], spec["t"])
    raise DomainError(f"unknown tree kind {kind!r}")


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------


def branching_function(tree: RegularTree, t):
    """``g0(t)``; scalar in, float out, arrays map elementwise."""
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr <= 0):
        raise DomainError("branching function is defined for t > 0")
    if np.any(arr > tree.max_radius):
        raise HorizonExceededError(f"t beyond materialized horizon t_H = {tree.max_radius}")
    out = tree.g0[tree.generation_of(arr)]
    return float(out) if np.ndim(t) == 0 else out


def reduced_height_terms(tree: RegularTree) -> np.ndarray:
    """Summands ``(t_{n+1} - t_n) / g0(t_{n+1})`` for ``n < H``."""
    return np.diff(tree.radii) / tree.g0


def _b_regular_tail(b: int, d: float, start: int) -> float:
    # sum_{n >= start} (t_{n+1} - t_n) / b^n with t_n = beta^n, start >= 1
    beta = float(b) ** (1.0 / (d - 1.0))
    r = beta / b
    if r >= 1.0:
        return math.inf
    return (beta - 1.0) * r**start / (1.0 - r)


def reduced_height(tree: RegularTree, window: int = 16, ratio_cap: float = 0.95, floor: float = None) -> float:
    """Reduced height ``l = int dt / g0``; ``math.inf`` for recurrent trees.

    Generator trees are summed in closed form.  Otherwise the last ``window``
    summands decide: ratios all ``<= ratio_cap`` bound the tail geometrically,
    summands all ``>= floor`` mean divergence, anything else is inconclusive.
    """
    terms = reduced_height_terms(tree)
    if tree.generator is not None:
        b, d = tree.generator
        tail = _b_regular_tail(b, d, 1)
        return math.inf if math.isinf(tail) else float(terms[0] + tail)
    partial = float(terms.sum())
    if terms.size < window + 1:
        raise InconclusiveError("horizon too short to decide convergence of the reduced height", partial)
    last = terms[-(window + 1):]
    ratios = last[1:] / last[:-1]
    if np.all(ratios <= ratio_cap):
        tail = float(last[-1] * ratios.max() / (1.0 - ratios.max()))
        return partial + tail
    eps = floor if floor is not None else 1e-3 * float(terms[0])
    if np.all(last >= eps):
        return math.inf
    raise InconclusiveError("reduced height series neither geometric-convergent nor bounded below", partial)


def classify(tree: RegularTree, **kwargs) -> TreeClass:
    height = reduced_height(tree, **kwargs)
    kind = TreeKind.TRANSIENT if math.isfinite(height) else TreeKind.RECURRENT
    return TreeClass(kind, height)


def harmonic_profile(tree: RegularTree, t):
    """``h0(t) = int_t^inf ds / g0(s)``, the harmonic function vanishing at infinity."""
    height = reduced_height(tree)
    if math.isinf(height):
        raise UnsupportedOperationError("harmonic profile requires a transient tree")
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr < 0):
        raise DomainError("t must be nonnegative")
    if np.any(arr > tree.max_radius):
        raise HorizonExceededError("t beyond materialized horizon")
    terms = reduced_height_terms(tree)
    if tree.generator is not None:
        b, d = tree.generator
        beyond = _b_regular_tail(b, d, tree.horizon)
    else:
        beyond = max(height - float(terms.sum()), 0.0)
    # suffix sums avoid cancellation far from the root
    suffix = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]]) + beyond
    n = np.clip(tree.generation_of(arr), 0, tree.horizon - 1)
    out = (tree.radii[n + 1] - arr) / tree.g0[n] + suffix[n + 1]
    return float(out) if np.ndim(t) == 0 else out


def inverse_weight_integral(tree: RegularTree, t):
    """``int_0^t ds / g0(s)`` for ``0 <= t <= t_H``."""
    arr = np.asarray(t, dtype=np.float64)
    cum = np.concatenate([[0.0], np.cumsum(reduced_height_terms(tree))])
    n = np.clip(tree.generation_of(arr), 0, tree.horizon - 1)
    out = cum[n] + (arr - tree.radii[n]) / tree.g0[n]
    out = np.where(arr <= 0, 0.0, out)
    return float(out) if np.ndim(t) == 0 else out


def tail_inverse_weight(tree: RegularTree, t) -> float:
    """``int_t^inf ds / g0(s)`` allowing ``t`` beyond the horizon for generator trees."""
    if t <= tree.max_radius:
        return harmonic_profile(tree, t)
    if tree.generator is None:
        raise HorizonExceededError("t beyond horizon of an explicit tree")
    return harmonic_profile(covering(tree, t), t)


def covering(tree: RegularTree, radius: float) -> RegularTree:
    """The tree itself, or a generator tree extended until ``t_H >= radius``."""
    if radius <= tree.max_radius:
        return tree
    if tree.generator is None:
        raise HorizonExceededError(f"radius {radius} beyond horizon t_H = {tree.max_radius}")
    b, d = tree.generator
    horizon = int(math.ceil(math.log(radius) / math.log(b) * (d - 1.0))) + 1
    return b_regular(b, d, max(horizon, tree.horizon + 1))


@dataclass(frozen=True)
class GlobalDimension:
    d: float
    c1: float
    c2: float


def global_dimension(tree: RegularTree, fit_window=None, ratio_cap: float = 10.0) -> Optional[GlobalDimension]:
    """Fit ``c1 t^(d-1) <= g0(t) <= c2 t^(d-1)`` over a window of generations.

    The exponent is the least-squares slope of ``log g0(t_n+)`` against
    ``log t_n``.  The constants are the tightest ones over the closed
    intervals ``[t_n, t_{n+1}]`` in the window.  Returns ``None`` when
    ``c2 / c1 > ratio_cap``.
    """
    if fit_window is None:
        fit_window = (1, tree.horizon - 1)
    lo, hi = fit_window
    if lo < 1 or hi > tree.horizon - 1:
        raise HorizonExceededError("fit window must lie within generations 1..H-1")
    if hi - lo + 1 < 4:
        raise DomainError("fit window needs at least 4 generations")
    n = np.arange(lo, hi + 1)
    tn = tree.radii[n]
    tn1 = tree.radii[n + 1]
    g = tree.g0[n]
    slope = np.polyfit(np.log(tn), np.log(g), 1)[0]
    d = 1.0 + float(slope)
    # g0 is constant on (t_n, t_{n+1}] so the extremes of g0 / t^(d-1) sit at the ends
    left = g / tn ** (d - 1.0)
    right = g / tn1 ** (d - 1.0)
    c1 = float(min(left.min(), right.min()))
    c2 = float(max(left.max(), right.max()))
    if c2 / c1 > ratio_cap:
        return None
    return GlobalDimension(d, c1, c2)
