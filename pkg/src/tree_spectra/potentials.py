"""Symmetric potentials ``V(x) = v(|x|)`` and the integrals built from them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, HorizonExceededError, InconclusiveError, IncompleteDataError
from .tree import RegularTree, covering


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


def _power_integral(coef: float, k: float, a: float, b: float) -> float:
    """``coef * int_a^b t^k dt`` without cancellation for nearby endpoints."""
    if b <= a or coef == 0.0:
        return 0.0
    if a == 0.0:
        if k <= -1.0:
            return math.inf
        return coef * b ** (k + 1.0) / (k + 1.0)
    if k == -1.0:
        return coef * math.log(b / a)
    return coef * a ** (k + 1.0) * math.expm1((k + 1.0) * math.log(b / a)) / (k + 1.0)


def _power_cells(c, gamma, a, b):
    """Vectorised ``c * int_a^b t^gamma dt`` over cells ``(a_i, b_i]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = gamma + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = a > 0
        ratio = np.log(np.where(pos, b / np.where(pos, a, 1.0), 1.0))
        if k == 0.0:
            inner = c * ratio
            at0 = np.full(a.shape, np.inf)
        else:
            inner = c * np.where(pos, a, 1.0) ** k * np.expm1(k * ratio) / k
            at0 = c * b**k / k if k > 0 else np.full(a.shape, np.inf)
    return np.where(b > a, np.where(pos, inner, at0), 0.0)


@dataclass(frozen=True)
class Constant:
    c: float

    def __post_init__(self):
        if not self.c >= 0:
            raise DomainError("potential values must be nonnegative")

    def value(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.c)

    def moment(self, a, b, e=1.0, w=0.0):
        if self.c == 0.0:
            return 0.0
        return _power_integral(self.c**e, w, a, b)

    def max_on(self, a, b):
        return self.c

    def cells(self, a, b):
        return self.c * (b - a)

    def as_power(self):
        return self.c, 0.0

    def scaled(self, s):
        return Constant(self.c * s)

    def to_dict(self):
        return {"kind": "constant", "c": self.c}


@dataclass(frozen=True)
class Power:
    """``c * t**gamma``."""

    c: float
    gamma: float

    def __post_init__(self):
        if not self.c >= 0:
            raise DomainError("potential values must be nonnegative")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.c * t**self.gamma

    def moment(self, a, b, e=1.0, w=0.0):
        if self.c == 0.0:
            return 0.0
        return _power_integral(self.c**e, self.gamma * e + w, a, b)

    def cells(self, a, b):
        return _power_cells(self.c, self.gamma, a, b)

    def max_on(self, a, b):
        if self.gamma >= 0:
            return self.c * b**self.gamma
        return math.inf if a == 0 else self.c * a**self.gamma

    def as_power(self):
        return self.c, self.gamma

    def scaled(self, s):
        return Power(self.c * s, self.gamma)

    def to_dict(self):
        return {"kind": "power", "c": self.c, "gamma": self.gamma}


@dataclass(frozen=True)
class Tabulated:
    """Samples joined by straight lines."""

    t: tuple
    v: tuple

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.size < 2 or t.size != v.size:
            raise DomainError("tabulated profile needs matching t and v with at least 2 samples")
        if np.any(np.diff(t) <= 0):
            raise DomainError("tabulated sample radii must increase")
        if np.any(v < 0):
            raise DomainError("potential values must be nonnegative")
        object.__setattr__(self, "t", tuple(t.tolist()))
        object.__setattr__(self, "v", tuple(v.tolist()))

    def value(self, t):
        return np.interp(t, self.t, self.v)

    def _pieces(self, a, b):
        ts = np.asarray(self.t)
        if a < ts[0] - 1e-12 * abs(ts[0]) or b > ts[-1] * (1 + 1e-12):
            raise IncompleteDataError("integration range leaves the tabulated samples")
        inner = ts[(ts > a) & (ts < b)]
        knots = np.concatenate([[a], inner, [b]])
        return knots, self.value(knots)

    def moment(self, a, b, e=1.0, w=0.0):
        if b <= a:
            return 0.0
        knots, vals = self._pieces(a, b)
        total = 0.0
        for x0, x1, y0, y1 in zip(knots[:-1], knots[1:], vals[:-1], vals[1:]):
            if x1 <= x0:
                continue
            slope = (y1 - y0) / (x1 - x0)
            if e == 1.0:
                # (y0 - slope*x0) t^w + slope t^(w+1)
                total += _power_integral(y0 - slope * x0, w, x0, x1) + _power_integral(slope, w + 1.0, x0, x1)
            else:
                f = lambda s, x0=x0, y0=y0, slope=slope: max(y0 + slope * (s - x0), 0.0) ** e * s**w
                total += integrate.quad(f, x0, x1, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        return total

    def max_on(self, a, b):
        knots, vals = self._pieces(a, b)
        return float(vals.max())

    def cells(self, a, b):
        # callers split cells at the sample radii, so v is linear on each cell
        return 0.5 * (self.value(a) + self.value(b)) * (b - a)

    def knots(self):
        return np.asarray(self.t)

    def as_power(self):
        return None

    def scaled(self, s):
        return Tabulated(self.t, tuple(s * x for x in self.v))

    def to_dict(self):
        return {"kind": "tabulated", "t": list(self.t), "v": list(self.v)}


@dataclass(frozen=True)
class Sum:
    """Pointwise sum of profiles sharing an interval."""

    parts: tuple

    def value(self, t):
        return sum(p.value(t) for p in self.parts)

    def moment(self, a, b, e=1.0, w=0.0):
        if e == 1.0:
            return sum(p.moment(a, b, 1.0, w) for p in self.parts)
        f = lambda s: float(self.value(s)) ** e * s**w
        return integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0]

    def max_on(self, a, b):
        return sum(p.max_on(a, b) for p in self.parts)

    def cells(self, a, b):
        return sum(p.cells(a, b) for p in self.parts)

    def knots(self):
        ks = [p.knots() for p in self.parts if hasattr(p, "knots")]
        return np.concatenate(ks) if ks else np.zeros(0)

    def as_power(self):
        return None

    def scaled(self, s):
        return Sum(tuple(p.scaled(s) for p in self.parts))

    def to_dict(self):
        return {"kind": "sum", "parts": [p.to_dict() for p in self.parts]}


def profile_from_dict(spec: dict):
    kind = spec.get("kind")
    if kind == "constant":
        return Constant(float(spec["c"]))
    if kind == "power":
        return Power(float(spec["c"]), float(spec["gamma"]))
    if kind == "tabulated":
        return Tabulated(tuple(spec["t"]), tuple(spec["v"]))
    if kind == "sum":
        return Sum(tuple(profile_from_dict(p) for p in spec["parts"]))
    raise DomainError(f"unknown profile kind {kind!r}")


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Piece:
    start: float
    stop: float
    profile: object

    def __post_init__(self):
        if not (0 <= self.start < self.stop):
            raise DomainError("piece intervals must satisfy 0 <= from < to")


@dataclass(frozen=True)
class DecayEnvelope:
    """Assertion ``v(t) <= C t**(-gamma)`` beyond the last piece.

    ``tight`` marks envelopes that are also asymptotically attained, so a
    divergent envelope integral implies a divergent true integral.
    """

    C: float
    gamma: float
    tight: bool = False


@dataclass(frozen=True)
class SymmetricPotential:
    pieces: tuple = ()
    support_bound: Optional[float] = None
    decay_envelope: Optional[DecayEnvelope] = None
    label: str = ""
    starts: np.ndarray = field(init=False, repr=False, compare=False)
    stops: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pieces = tuple(self.pieces)
        for prev, nxt in zip(pieces[:-1], pieces[1:]):
            if nxt.start < prev.stop:
                raise DomainError("pieces must be ordered and non-overlapping")
        if self.support_bound is not None and pieces and pieces[-1].stop > self.support_bound * (1 + 1e-14):
            raise DomainError("a piece extends beyond support_bound")
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "starts", np.array([p.start for p in pieces], dtype=float))
        object.__setattr__(self, "stops", np.array([p.stop for p in pieces], dtype=float))

    @property
    def covered_to(self) -> float:
        """Radius up to which ``v`` is known exactly."""
        if self.support_bound is not None:
            return math.inf
        return float(self.stops[-1]) if self.pieces else math.inf

    @property
    def is_zero(self) -> bool:
        return all(p.profile.max_on(p.start, p.stop) == 0.0 for p in self.pieces)

    @property
    def compact_support(self) -> Optional[float]:
        """Radius beyond which ``v`` vanishes, if known."""
        if self.support_bound is not None:
            return self.support_bound
        nonzero = [p.stop for p in self.pieces if p.profile.max_on(p.start, p.stop) > 0]
        if not nonzero:
            return 0.0
        return None

    def breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate([self.starts, self.stops]))

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if np.any(t > self.covered_to):
            raise IncompleteDataError("potential not specified beyond its last piece")
        for p in self.pieces:
            mask = (t > p.start) & (t <= p.stop)
            if np.any(mask):
                out[mask] = p.profile.value(t[mask])
        return out

    def _overlaps(self, a, b):
        lo = np.searchsorted(self.stops, a, side="right")
        hi = np.searchsorted(self.starts, b, side="left")
        return self.pieces[lo:hi]

    def moment(self, a: float, b: float, e: float = 1.0, w: float = 0.0) -> float:
        """``int_a^b v(t)^e t^w dt`` (gaps between pieces count as zero)."""
        if b <= a:
            return 0.0
        if b > self.covered_to:
            raise IncompleteDataError(f"potential not specified on ({self.covered_to}, {b}]")
        total = 0.0
        for p in self._overlaps(a, b):
            lo, hi = max(a, p.start), min(b, p.stop)
            if hi > lo:
                total += p.profile.moment(lo, hi, e, w)
        return total

    def max_on(self, a: float, b: float) -> float:
        if b > self.covered_to:
            raise IncompleteDataError("potential not specified on the requested range")
        best = 0.0
        for p in self._overlaps(a, b):
            lo, hi = max(a, p.start), min(b, p.stop)
            if hi > lo:
                best = max(best, p.profile.max_on(lo, hi))
        return best

    def cell_integrals(self, edges) -> np.ndarray:
        """``int v dt`` over each cell ``(edges[i], edges[i+1]]``."""
        edges = np.asarray(edges, dtype=float)
        if edges[-1] > self.covered_to:
            raise IncompleteDataError(f"potential not specified beyond {self.covered_to}")
        cuts = [edges, self.starts, self.stops]
        for p in self.pieces:
            if hasattr(p.profile, "knots"):
                cuts.append(p.profile.knots())
        fine = np.unique(np.concatenate(cuts))
        fine = fine[(fine >= edges[0]) & (fine <= edges[-1])]
        lo, hi = fine[:-1], fine[1:]
        mid = 0.5 * (lo + hi)
        vals = np.zeros(lo.size)
        which = np.searchsorted(self.stops, mid, side="left")
        for j, p in enumerate(self.pieces):
            sel = (which == j) & (mid > p.start) & (mid <= p.stop)
            if np.any(sel):
                vals[sel] = p.profile.cells(lo[sel], hi[sel])
        starts = np.searchsorted(fine, edges[:-1])
        return np.add.reduceat(vals, starts) if vals.size else np.zeros(edges.size - 1)

    def scaled(self, s: float) -> "SymmetricPotential":
        if s < 0:
            raise DomainError("scale factor must be nonnegative")
        env = self.decay_envelope
        if env is not None:
            env = DecayEnvelope(env.C * s, env.gamma, env.tight and s > 0)
        return SymmetricPotential(
            tuple(Piece(p.start, p.stop, p.profile.scaled(s)) for p in self.pieces),
            self.support_bound,
            env,
            self.label,
        )

    def __add__(self, other: "SymmetricPotential") -> "SymmetricPotential":
        edges = np.unique(np.concatenate([self.breakpoints(), other.breakpoints()]))
        pieces = []
        for a, b in zip(edges[:-1], edges[1:]):
            parts = [p.profile for pot in (self, other) for p in pot._overlaps(a, b) if p.start <= a and p.stop >= b]
            if parts:
                pieces.append(Piece(float(a), float(b), parts[0] if len(parts) == 1 else Sum(tuple(parts))))
        support = None
        if self.support_bound is not None and other.support_bound is not None:
            support = max(self.support_bound, other.support_bound)
        return SymmetricPotential(tuple(pieces), support, None)

    def to_dict(self) -> dict:
        out = {"pieces": [{"from": p.start, "to": p.stop, "profile": p.profile.to_dict()} for p in self.pieces]}
        if self.support_bound is not None:
            out["support_bound"] = self.support_bound
        if self.decay_envelope is not None:
            env = self.decay_envelope
            out["decay_envelope"] = {"C": env.C, "gamma": env.gamma, "tight": env.tight}
        if self.label:
            out["label"] = self.label
        return out


def zero_potential() -> SymmetricPotential:
    return SymmetricPotential((), support_bound=0.0, label="zero")


def piecewise(pieces: Sequence[tuple], support_bound=None, decay_envelope=None, label="") -> SymmetricPotential:
    """Build from ``(start, stop, profile)`` triples."""
    return SymmetricPotential(tuple(Piece(float(a), float(b), prof) for a, b, prof in pieces),
                              support_bound, decay_envelope, label)


def indicator(c: float, start: float, stop: float) -> SymmetricPotential:
    """``v = c`` on ``(start, stop]`` and zero elsewhere."""
    return piecewise([(start, stop, Constant(c))], support_bound=stop, label=f"{c}*1({start},{stop}]")


def example_potential(tree: RegularTree, p: float) -> SymmetricPotential:
    """``v = t_{n+1}^{-2} b^{-n/p}`` on ``(t_n, t_{n+1}]`` over a b-regular tree."""
    if tree.generator is None:
        raise DomainError("the example potential lives on a b-regular tree")
    if not p > 0:
        raise DomainError("p must be positive")
    b, d = tree.generator
    t = tree.radii
    n = np.arange(tree.horizon)
    vals = t[1:] ** -2.0 * float(b) ** (-n / p)
    env = DecayEnvelope(float(b) ** (1.0 / p), 2.0 + (d - 1.0) / p, tight=True)
    pieces = tuple(Piece(float(t[k]), float(t[k + 1]), Constant(float(vals[k]))) for k in n)
    return SymmetricPotential(pieces, None, env, label=f"example(b={b},d={d},p={p})")


def eta_profile_potential(tree: RegularTree, eta: Sequence[float], envelope=None, label="") -> SymmetricPotential:
    """Piecewise-constant potential with prescribed ``eta_n`` for ``n < len(eta)``."""
    eta = np.asarray(eta, dtype=float)
    if eta.size > tree.horizon:
        raise HorizonExceededError("more eta values than materialized generations")
    t = tree.radii
    pieces = tuple(
        Piece(float(t[k]), float(t[k + 1]), Constant(float(eta[k] / (t[k + 1] * (t[k + 1] - t[k])))))
        for k in range(eta.size)
    )
    support = None if envelope is not None else float(t[eta.size])
    return SymmetricPotential(pieces, support, envelope, label)


def eta_power_potential(tree: RegularTree, q: float) -> SymmetricPotential:
    """Potential with ``eta_n = b^{-n/q}`` exactly, on a b-regular tree."""
    if tree.generator is None:
        raise DomainError("eta-power potentials live on a b-regular tree")
    b, d = tree.generator
    n = np.arange(tree.horizon)
    eta = float(b) ** (-n / q)
    c = 1.0 - float(b) ** (-1.0 / (d - 1.0))
    env = DecayEnvelope(float(b) ** (1.0 / q) / c, 2.0 + (d - 1.0) / q, tight=True)
    return eta_profile_potential(tree, eta, env, label=f"eta-power(b={b},d={d},q={q})")


def potential_from_dict(spec: dict, tree: Optional[RegularTree] = None) -> SymmetricPotential:
    kind = spec.get("kind", "pieces")
    if kind in ("example-7-1", "example"):
        from .tree import b_regular

        base = tree or b_regular(int(spec["b"]), float(spec["d"]), int(spec.get("horizon", 40)))
        return example_potential(base, float(spec["p"]))
    if kind == "eta-power":
        from .tree import b_regular

        base = tree or b_regular(int(spec["b"]), float(spec["d"]), int(spec.get("horizon", 40)))
        return eta_power_potential(base, float(spec["q"]))
    pieces = tuple(
        Piece(float(p["from"]), float(p["to"]), profile_from_dict(p["profile"])) for p in spec.get("pieces", [])
    )
    env = spec.get("decay_envelope")
    if env is not None:
        env = DecayEnvelope(float(env["C"]), float(env["gamma"]), bool(env.get("tight", False)))
    support = spec.get("support_bound")
    return SymmetricPotential(pieces, None if support is None else float(support), env, spec.get("label", ""))


# ---------------------------------------------------------------------------
# segment decomposition shared by all radial integrals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segments:
    """Partition of ``(0, upto]`` on which both ``g0`` and the profile are fixed."""

    a: np.ndarray
    b: np.ndarray
    g: np.ndarray
    profile: tuple  # profile object or None (zero) per segment


def segments(tree: RegularTree, V: SymmetricPotential, upto: float, start: float = 0.0) -> Segments:
    tree = covering(tree, upto)
    edges = np.concatenate([tree.radii[tree.radii < upto], V.breakpoints(), [start, upto]])
    edges = np.unique(edges[(edges >= start) & (edges <= upto)])
    a, b = edges[:-1], edges[1:]
    mid = 0.5 * (a + b)
    g = tree.g0[tree.generation_of(mid)]
    profiles = []
    for lo, hi in zip(a, b):
        found = None
        for p in V._overlaps(lo, hi):
            if p.start <= lo and p.stop >= hi:
                found = p.profile
        profiles.append(found)
    return Segments(a, b, g, tuple(profiles))


def _segment_moments(seg: Segments, e: float, w: float, weighted: bool) -> np.ndarray:
    out = np.zeros(seg.a.size)
    for i, prof in enumerate(seg.profile):
        if prof is not None:
            m = prof.moment(float(seg.a[i]), float(seg.b[i]), e, w)
            out[i] = m * seg.g[i] if weighted else m
    return out


def _envelope_tail(tree: RegularTree, V: SymmetricPotential, R: float, e: float, w: float) -> float:
    """Upper bound for ``int_R^inf v^e t^w g0 dt`` beyond the known range."""
    if V.support_bound is not None and V.support_bound <= R:
        return 0.0
    env = V.decay_envelope
    if env is None:
        raise InconclusiveError("potential has no decay envelope beyond its last piece")
    if tree.generator is None:
        raise InconclusiveError("tail growth of g0 is unknown for an explicit tree")
    d = tree.generator[1]
    # g0(t) <= t^(d-1) for t > t_1 on a b-regular tree
    k = -env.gamma * e + w + d - 1.0
    if k >= -1.0:
        if env.tight:
            return math.inf
        raise InconclusiveError("decay envelope too weak to bound the tail integral")
    return env.C**e * R ** (k + 1.0) / -(k + 1.0)


def radial_integral(tree: RegularTree, V: SymmetricPotential, e: float = 1.0, w: float = 0.0,
                    upto: float = math.inf) -> float:
    """``int_0^upto v^e t^w g0 dt`` over the tree, tails included via the envelope."""
    support = V.compact_support
    R = min(upto, V.covered_to)
    if support is not None:
        R = min(R, support)
    if R == 0:
        return 0.0
    body = 0.0
    if R > 0:
        body = float(_segment_moments(segments(tree, V, R), e, w, True).sum())
    if upto > R and (support is None or support > R):
        body += _envelope_tail(tree, V, R, e, w)
    return body


# ---------------------------------------------------------------------------
# scalar functionals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerTail:
    """Tail behaviour ``eta_n <~ A * w_n**(-1/q)`` for geometric weights ``w_n``."""

    q: float
    tight: bool


@dataclass(frozen=True)
class EtaSequence:
    values: np.ndarray
    weights: np.ndarray
    tail: Optional[PowerTail] = None

    @property
    def length(self) -> int:
        return int(self.values.size)


def eta_sequence(tree: RegularTree, V: SymmetricPotential, n_max: Optional[int] = None) -> EtaSequence:
    """``eta_n = t_{n+1} int_{t_n}^{t_{n+1}} v dt`` for ``n = 0..n_max``."""
    if n_max is None:
        n_max = tree.horizon - 1
    if n_max > tree.horizon - 1:
        raise HorizonExceededError("n_max must not exceed horizon - 1")
    t = tree.radii
    vals = np.empty(n_max + 1)
    support = V.compact_support
    for n in range(n_max + 1):
        a, b = float(t[n]), float(t[n + 1])
        if support is not None and a >= support:
            vals[n] = 0.0
        else:
            vals[n] = b * V.moment(a, b)
    return EtaSequence(vals, tree.g0[: n_max + 1].copy(), eta_tail(tree, V, n_max))


def eta_tail(tree: RegularTree, V: SymmetricPotential, n_max: int) -> Optional[PowerTail]:
    """How ``eta_n`` behaves beyond ``n_max``; ``None`` when it vanishes there."""
    support = V.compact_support
    if support is not None and support <= tree.radii[n_max + 1]:
        return None
    env = V.decay_envelope
    if env is None or tree.generator is None:
        return PowerTail(math.inf, False)
    d = tree.generator[1]
    if env.gamma <= 2.0:
        return PowerTail(math.inf, env.tight)
    return PowerTail((d - 1.0) / (env.gamma - 2.0), env.tight)


def l1_norm(tree: RegularTree, V: SymmetricPotential) -> float:
    """``int_Gamma V dx = int_0^inf v g0 dt``."""
    return radial_integral(tree, V, 1.0, 0.0)


def weyl_coefficient(tree: RegularTree, V: SymmetricPotential) -> float:
    """``(1/pi) int_0^inf v^{1/2} g0 dt``."""
    value = radial_integral(tree, V, 0.5, 0.0)
    if math.isinf(value):
        raise InconclusiveError("int v^(1/2) g0 diverges: the Weyl asymptotic does not apply", value)
    return value / math.pi


def neumann_correction(tree: RegularTree, V: SymmetricPotential) -> float:
    """``t_1 int_0^{t_1} v dt``, the extra term for a free root."""
    t1 = float(tree.radii[1])
    if V.compact_support is not None and V.compact_support <= 0:
        return 0.0
    return t1 * V.moment(0.0, t1)


def radius_moment(tree: RegularTree, V: SymmetricPotential, upto: float = math.inf) -> float:
    """``int_{|x| <= upto} |x| V dx``."""
    return radial_integral(tree, V, 1.0, 1.0, upto)
