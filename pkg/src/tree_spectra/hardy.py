"""Hardy constants, weak-space quasinorms and estimate functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, InapplicableError, InconclusiveError
from .potentials import (
    Constant,
    DecayEnvelope,
    Piece,
    Power,
    PowerTail,
    SymmetricPotential,
    eta_sequence,
    l1_norm,
    neumann_correction,
    radial_integral,
    segments,
    _envelope_tail,
)
from .tree import (
    RegularTree,
    TreeKind,
    classify,
    covering,
    global_dimension,
    harmonic_profile,
    inverse_weight_integral,
    tail_inverse_weight,
)

REFINE_POINTS = 64


# ---------------------------------------------------------------------------
# sup over a piecewise-smooth function of t
# ---------------------------------------------------------------------------


class _Accumulator:
    """Prefix and suffix integrals of ``v^e t^w (g0)`` over a segment list."""

    def __init__(self, seg, e=1.0, w=0.0, weighted=True, tail=0.0):
        self.seg = seg
        self.e, self.w, self.weighted = e, w, weighted
        m = np.zeros(seg.a.size)
        for i, prof in enumerate(seg.profile):
            if prof is not None:
                m[i] = self._piece(i, seg.a[i], seg.b[i])
        self.prefix_at = np.concatenate([[0.0], np.cumsum(m)])
        self.suffix_at = np.concatenate([np.cumsum(m[::-1])[::-1], [0.0]]) + tail

    def _piece(self, i, lo, hi):
        prof = self.seg.profile[i]
        if prof is None or hi <= lo:
            return 0.0
        val = prof.moment(float(lo), float(hi), self.e, self.w)
        return val * self.seg.g[i] if self.weighted else val

    def _locate(self, t):
        return np.clip(np.searchsorted(self.seg.b, t, side="left"), 0, self.seg.a.size - 1)

    def prefix(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._locate(t)
        return np.array([self.prefix_at[i] + self._piece(i, self.seg.a[i], x) for i, x in zip(idx, t)])

    def suffix(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._locate(t)
        return np.array([self.suffix_at[i + 1] + self._piece(i, x, self.seg.b[i]) for i, x in zip(idx, t)])


def _sup(F, edges, per_piece=REFINE_POINTS):
    """Maximise ``F`` over ``(edges[0], edges[-1]]``: breakpoints, a grid per piece, then a polish."""
    pts = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        if a == 0.0:
            pts.append(np.geomspace(b * 1e-9, b, per_piece + 1))
        else:
            pts.append(np.linspace(a, b, per_piece + 1))
    if not pts:
        return 0.0, None
    grid = np.unique(np.concatenate(pts))
    vals = F(grid)
    i = int(np.nanargmax(vals))
    best, where = float(vals[i]), float(grid[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo and math.isfinite(best):
        res = minimize_scalar(lambda x: -float(F(np.array([x]))[0]), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-13 * max(hi, 1e-300)})
        if -res.fun > best:
            best, where = float(-res.fun), float(res.x)
    return best, where


def _limit_at_zero(V: SymmetricPotential) -> float:
    """``lim_{t->0} t * int_t^{t*} v ds`` for the profile touching the root."""
    if not V.pieces or V.pieces[0].start > 0:
        return 0.0
    shape = V.pieces[0].profile.as_power()
    if shape is None:
        return 0.0
    c, gamma = shape
    if c == 0 or gamma > -2.0:
        return 0.0
    return c if gamma == -2.0 else math.inf


# ---------------------------------------------------------------------------
# Hardy constants
# ---------------------------------------------------------------------------


@dataclass
class HardyReport:
    B0: Optional[float]
    B1: Optional[float]
    B2: Optional[float]
    cv_lower: float
    cv_upper: float
    is_hardy_weight: bool
    tree_class: str
    witnesses: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable(asdict(self))


def _known_range(tree, V):
    support = V.compact_support
    R = V.covered_to if support is None else support
    if not math.isfinite(R):
        R = tree.max_radius
    return R, support


def hardy_constants(tree: RegularTree, V: SymmetricPotential) -> HardyReport:
    """Muckenhoupt-type functionals bracketing the best Hardy constant ``C_V``.

    Sups are taken over the radii where ``v`` is known; for potentials with
    an infinite tail the reported value covers that range only.
    """
    cls = classify(tree)
    R, support = _known_range(tree, V)
    t1 = float(tree.radii[1])
    if cls.kind is TreeKind.RECURRENT:
        if V.is_zero or R == 0:
            return HardyReport(0.0, None, None, 0.0, 0.0, True, cls.kind.value)
        tail = 0.0 if support is not None else _envelope_tail(tree, V, R, 1.0, 0.0)
        if math.isinf(tail):
            return HardyReport(math.inf, None, None, math.inf, math.inf, False, cls.kind.value)
        big = covering(tree, R)
        acc = _Accumulator(segments(big, V, R), tail=tail)
        F = lambda t: acc.suffix(t) * inverse_weight_integral(big, t)
        b0, where = _sup(F, _edges(big, V, 0.0, R))
        b0 = max(b0, _limit_at_zero(V))
        return HardyReport(b0, None, None, b0, 4.0 * b0, math.isfinite(b0), cls.kind.value, {"B0": where})

    # transient
    b1, w1 = 0.0, None
    if (support is None or support > t1) and not V.is_zero:
        big = covering(tree, R)
        acc = _Accumulator(segments(big, V, R, start=t1))
        F = lambda t: acc.prefix(t) * harmonic_profile(big, t)
        b1, w1 = _sup(F, _edges(big, V, t1, R))
    b2, w2 = 0.0, None
    if not V.is_zero:
        acc2 = _Accumulator(segments(tree, V, t1), weighted=False)
        F2 = lambda t: t * acc2.suffix(t)
        b2, w2 = _sup(F2, _edges(tree, V, 0.0, t1))
        b2 = max(b2, _limit_at_zero(V))
    t2 = float(tree.radii[2]) if tree.horizon >= 2 else math.inf
    factor = 1.0 + float(tree.branching[1]) * t1 / (t2 - t1) if tree.horizon >= 2 else 1.0
    lower = max(b1, b2 / factor)
    upper = 4.0 * (b1 + b2)
    finite = math.isfinite(b1) and math.isfinite(b2)
    return HardyReport(None, b1, b2, lower, upper, finite, cls.kind.value, {"B1": w1, "B2": w2})


def _edges(tree, V, lo, hi):
    pts = np.concatenate([tree.radii, V.breakpoints(), [lo, hi]])
    return np.unique(pts[(pts >= lo) & (pts <= hi)])


# ---------------------------------------------------------------------------
# weak quasinorms
# ---------------------------------------------------------------------------


def weak_sequence_functional(values, p: float, weights=None, t_min: float = 0.0, t_max: float = math.inf):
    """``sup_{t_min < t < t_max} t^p * sum_{|f_n| > t} w_n`` and the maximising level."""
    if not p > 0:
        raise DomainError("p must be positive")
    f = np.abs(np.asarray(values, dtype=float))
    w = np.ones_like(f) if weights is None else np.asarray(weights, dtype=float)
    keep = f > 0
    f, w = f[keep], w[keep]
    if f.size == 0:
        return 0.0, None
    order = np.argsort(-f, kind="stable")
    f, w = f[order], w[order]
    cum = np.cumsum(w)
    # value at the last index of each run of equal f: weight of {f_n >= level}
    last = np.r_[f[1:] != f[:-1], True]
    levels, mass = f[last], cum[last]
    best, where = 0.0, None
    # sup over t just below an attained level
    ok = (levels > t_min) & (levels <= t_max)
    if np.any(ok):
        cand = levels[ok] ** p * mass[ok]
        i = int(np.argmax(cand))
        best, where = float(cand[i]), float(levels[ok][i])
    if math.isfinite(t_max):
        above = mass[levels >= t_max]
        val = t_max**p * (float(above[-1]) if above.size else 0.0)
        if val > best:
            best, where = val, t_max
    return best, where


def _tail_verdict(tail: Optional[PowerTail], p: float, what: str):
    """``True`` when a power tail makes the weak functional infinite."""
    if tail is None:
        return False
    if tail.q <= p * (1.0 + 1e-9):
        return False
    if tail.tight:
        return True
    raise InconclusiveError(f"{what}: tail of the sequence cannot be decided")


def weak_quasinorm_sequence(values, p: float, weights=None, tail: Optional[PowerTail] = None) -> float:
    """``||f||_{p,w;Phi_n} = (sup_t t^p sum_{|f_n|>t} Phi_n)^(1/p)``."""
    if _tail_verdict(tail, p, "weak quasinorm"):
        return math.inf
    val, _ = weak_sequence_functional(values, p, weights)
    return val ** (1.0 / p)


def _power_integral_vec(coef, k, a, b):
    coef, k, a, b = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (coef, k, a, b)))
    out = np.zeros(a.shape)
    valid = (b > a) & (coef != 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        lg = np.log(np.where(valid & (a > 0), b / np.where(a > 0, a, 1.0), 1.0))
        kp = k + 1.0
        gen = np.where(kp == 0, coef * lg, coef * a**kp * np.expm1(kp * lg) / np.where(kp == 0, 1.0, kp))
        at0 = np.where(kp > 0, coef * b ** np.where(kp > 0, kp, 1.0) / np.where(kp > 0, kp, 1.0), np.inf)
        out = np.where(valid, np.where(a > 0, gen, at0), 0.0)
    return out


class _LevelSets:
    """Measure of ``{f >= s}`` for a piecewise power ``f`` and power density ``Phi g0``."""

    def __init__(self, tree, f: SymmetricPotential, weight, upto):
        shape = weight.as_power()
        if shape is None:
            raise DomainError("the weight must be a constant or power function")
        cw, gw = shape
        seg = segments(tree, f, upto)
        c = np.zeros(seg.a.size)
        g = np.zeros(seg.a.size)
        for i, prof in enumerate(seg.profile):
            if prof is None:
                continue
            sh = prof.as_power()
            if sh is None:
                raise DomainError("non-piecewise-power input: weak quasinorms need constant or power pieces")
            c[i], g[i] = sh
        keep = c > 0
        self.a, self.b, self.c, self.gamma = seg.a[keep], seg.b[keep], c[keep], g[keep]
        self.dens = cw * seg.g[keep]
        self.gw = gw
        with np.errstate(divide="ignore"):
            self.fa = self.c * self.a**self.gamma
            self.fb = self.c * self.b**self.gamma

    def candidates(self):
        vals = np.concatenate([self.fa, self.fb])
        return np.unique(vals[np.isfinite(vals) & (vals > 0)])

    def measure(self, s, strict=False):
        s = np.atleast_1d(np.asarray(s, dtype=float))[:, None]
        a, b, c, gm = self.a[None, :], self.b[None, :], self.c[None, :], self.gamma[None, :]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            x = (s / c) ** (1.0 / np.where(gm == 0, 1.0, gm))
        inc = gm > 0
        dec = gm < 0
        flat = gm == 0
        lo = np.where(inc, np.maximum(a, x), a)
        hi = np.where(dec, np.minimum(b, x), b)
        hit = (c > s) if strict else (c >= s)
        lo = np.where(flat & ~hit, b, lo)
        hi = np.where(flat & ~hit, a, hi)
        lo = np.where(np.isnan(lo), b, lo)
        hi = np.where(np.isnan(hi), a, hi)
        m = _power_integral_vec(self.dens[None, :], self.gw, lo, hi)
        return m.sum(axis=1)


def weak_functional_radial(tree, f: SymmetricPotential, p: float, weight=Constant(1.0),
                           exclude: Optional[tuple] = None, per_piece: int = REFINE_POINTS):
    """``sup_s s^p int_{f > s} Phi dx`` and the maximising level ``s``.

    ``exclude=(lo, hi)`` drops levels inside ``[lo, hi]`` (limsup proxies).
    """
    if not p > 0:
        raise DomainError("p must be positive")
    R, support = _known_range(tree, f)
    if R == 0 or f.is_zero:
        return 0.0, None
    big = covering(tree, R)
    ls = _LevelSets(big, f, weight, R)
    cand = ls.candidates()
    if cand.size == 0:
        return 0.0, None
    lo_l, hi_l = cand[0], cand[-1]
    grid = [cand]
    knots = np.concatenate([[lo_l * 1e-9], cand])
    for a, b in zip(knots[:-1], knots[1:]):
        grid.append(np.geomspace(a, b, per_piece + 1)[1:-1])
    levels = np.unique(np.concatenate(grid))
    if exclude is not None:
        xl, xh = exclude
        levels = levels[(levels < xl) | (levels > xh)]
        levels = np.concatenate([levels, [xl]])
    F = lambda s: s**p * ls.measure(s)
    vals = F(levels)
    if exclude is not None and np.isfinite(exclude[1]):
        vals = np.concatenate([vals, exclude[1] ** p * ls.measure(exclude[1], strict=True)])
        levels = np.concatenate([levels, [exclude[1]]])
    i = int(np.nanargmax(vals))
    best, where = float(vals[i]), float(levels[i])
    if math.isfinite(best):
        srt = np.sort(levels)
        j = int(np.searchsorted(srt, where))
        lo, hi = srt[max(j - 1, 0)], srt[min(j + 1, srt.size - 1)]
        if exclude is not None and lo < exclude[1] and hi > exclude[0]:
            lo, hi = where, where
        if hi > lo:
            res = minimize_scalar(lambda x: -float(F(x)[0]), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-13 * hi})
            if -res.fun > best:
                best, where = float(-res.fun), float(res.x)
    return best, where


def weak_quasinorm_radial(tree, f: SymmetricPotential, p: float, weight=Constant(1.0)) -> float:
    """``||f||_{p,w;Phi}``: the p-th root of :func:`weak_functional_radial`."""
    val, _ = weak_functional_radial(tree, f, p, weight)
    return val ** (1.0 / p)


def strong_integral_radial(tree, f: SymmetricPotential, p: float, weight=Constant(1.0)) -> float:
    """``int |f|^p Phi dx`` for power-type ``f`` and ``Phi``."""
    cw, gw = weight.as_power()
    return cw * radial_integral(tree, f, p, gw)


# ---------------------------------------------------------------------------
# theorem right-hand sides
# ---------------------------------------------------------------------------

THEOREMS = ("bas", "narr", "bas1", "narr1", "eq-1/2", "eq-<1", "str<1", "p<1", "strong<1",
            "lsup", "lsup1", "lsup3", "p<1bis")


@dataclass
class FunctionalReport:
    theorem_id: str
    p: float
    value: float
    achieving_t: Optional[float] = None
    neumann: bool = False
    correction: float = 0.0
    sequence: list = field(default_factory=list)
    note: str = ""

    def to_dict(self):
        return _jsonable(asdict(self))


def _transform(V: SymmetricPotential, scale: float, shift: float) -> SymmetricPotential:
    """``V(t) * t^shift / scale`` with power pieces kept power."""
    pieces = []
    for p in V.pieces:
        shape = p.profile.as_power()
        if shape is None:
            raise DomainError("non-piecewise-power potential")
        c, g = shape
        pieces.append(Piece(p.start, p.stop, Power(c / scale, g + shift)))
    return SymmetricPotential(tuple(pieces), V.support_bound, None, V.label)


def default_hardy_weight(tree: RegularTree) -> Power:
    """``c |x|^{-2}`` normalised by the upper end of its Hardy bracket."""
    gd = global_dimension(tree)
    if gd is None or abs(gd.d - 2.0) < 1e-9:
        raise InapplicableError("|x|^-2 is a Hardy weight only for global dimension d != 2")
    R = tree.max_radius
    env = DecayEnvelope(1.0, 2.0, tight=True)
    base = SymmetricPotential((Piece(0.0, R, Power(1.0, -2.0)),), None, env, "|x|^-2")
    rep = hardy_constants(tree, base)
    if not math.isfinite(rep.cv_upper) or rep.cv_upper <= 0:
        raise InapplicableError("could not bound the Hardy constant of |x|^-2")
    return Power(1.0 / rep.cv_upper, -2.0)


def _require_dimension_not_two(tree):
    gd = global_dimension(tree)
    if gd is None:
        raise InapplicableError("the tree has no global dimension at the requested tightness")
    if abs(gd.d - 2.0) < 1e-9:
        raise InapplicableError("global dimension d = 2 is excluded")
    return gd


def _require_b_regular(tree):
    if tree.generator is None:
        raise InapplicableError("theorem requires a b-regular tree")
    _require_dimension_not_two(tree)


def _require_root_integrable(tree, V):
    t1 = float(tree.radii[1])
    if not math.isfinite(V.moment(0.0, t1)):
        raise InapplicableError("V must be integrable near the root (int_0^{t_1} v dt < inf)")


def _sequence_sum(eta, r: float) -> float:
    """``sum eta_n^r w_n`` with the tail decided by its power profile."""
    vals, w = eta.values, eta.weights
    body = float(np.sum(np.where(vals > 0, vals, 0.0) ** r * w))
    tail = eta.tail
    if tail is None:
        return body
    if tail.q >= r * (1.0 - 1e-9):
        if tail.tight:
            return math.inf
        raise InconclusiveError("tail of the eta series cannot be decided", body)
    if vals.size < 2 or not math.isfinite(tail.q):
        return body
    # geometric continuation from the last term: eta ~ w^(-1/q), exact for eta-power data
    ratio = (w[-1] / w[-2]) ** (1.0 - r / tail.q)
    return body + float(vals[-1]) ** r * float(w[-1]) * ratio / (1.0 - ratio)


def bound_rhs(theorem_id: str, tree: RegularTree, V: SymmetricPotential, p: float,
              psi: Optional[Power] = None, neumann: bool = False, T_values: Sequence[float] = (1e1, 1e2, 1e3, 1e4)
              ) -> FunctionalReport:
    """Right-hand side of the named estimate with its constant set to 1.

    ``neumann=True`` adds the free-root correction ``t_1 int_{e_0} V``.
    For the ``lsup`` family the sup is restricted to levels outside
    ``[1/T, T]`` (or below ``1/T`` for the sequence forms), one entry per T.
    """
    if theorem_id not in THEOREMS:
        raise DomainError(f"unknown theorem id {theorem_id!r}")
    if not p > 0:
        raise DomainError("p must be positive")
    rep = FunctionalReport(theorem_id, p, 0.0, neumann=neumann)
    if neumann:
        if classify(tree).kind is not TreeKind.TRANSIENT:
            raise InapplicableError("Neumann variants require a transient tree")
        rep.correction = neumann_correction(tree, V)

    if theorem_id in ("bas", "narr", "lsup"):
        if p <= 1 and theorem_id != "narr":
            raise InapplicableError("weak-L_p estimates need p > 1")
        if psi is None:
            psi = default_hardy_weight(tree)
        cpsi, gpsi = psi.as_power()
        if theorem_id == "narr":
            rep.value = cpsi ** (1.0 - p) * radial_integral(tree, V, p, 1.0 + gpsi * (1.0 - p))
        else:
            f = _transform(V, cpsi, -gpsi)
            weight = Power(cpsi, 1.0 + gpsi)
            _radial_sup(rep, tree, f, p, weight, theorem_id == "lsup", T_values)
    elif theorem_id in ("bas1", "narr1", "lsup1"):
        if p <= 1:
            raise InapplicableError("this estimate needs p > 1")
        _require_dimension_not_two(tree)
        if theorem_id == "narr1":
            rep.value = radial_integral(tree, V, p, 2.0 * p - 1.0)
        else:
            f = _transform(V, 1.0, 2.0)
            _radial_sup(rep, tree, f, p, Power(1.0, -1.0), theorem_id == "lsup1", T_values)
    else:
        _require_root_integrable(tree, V)
        if theorem_id in ("p<1", "strong<1", "p<1bis"):
            _require_b_regular(tree)
            if p <= 0.5:
                raise InapplicableError("need p > 1/2")
        elif theorem_id in ("eq-<1", "lsup3") and not 0.5 < p < 1:
            raise InapplicableError("need 1/2 < p < 1")
        elif theorem_id == "str<1" and not 0.5 < p <= 1:
            raise InapplicableError("need 1/2 < p <= 1")
        eta = eta_sequence(tree, V, _eta_span(tree, V))
        if theorem_id == "eq-1/2":
            rep.value = _sequence_sum(eta, 0.5)
        elif theorem_id in ("str<1", "strong<1"):
            rep.value = _sequence_sum(eta, p)
        elif _tail_verdict(eta.tail, p, theorem_id):
            rep.value = math.inf
        elif theorem_id in ("eq-<1", "p<1"):
            rep.value, rep.achieving_t = weak_sequence_functional(eta.values, p, eta.weights)
        else:
            for T in T_values:
                val, _ = weak_sequence_functional(eta.values, p, eta.weights, t_max=1.0 / T)
                rep.sequence.append([float(T), val])
            rep.value = rep.sequence[-1][1]
            rep.note = "sup over t < 1/T; finite-T proxy of the limsup as t -> 0"
    if neumann and math.isfinite(rep.value):
        rep.value += rep.correction
    return rep


def _eta_span(tree, V):
    support = V.compact_support
    if support is not None:
        n = int(np.searchsorted(tree.radii, support, side="left"))
        return max(0, min(n, tree.horizon) - 1)
    return tree.horizon - 1


def _radial_sup(rep, tree, f, p, weight, limsup, T_values):
    if not limsup:
        rep.value, rep.achieving_t = weak_functional_radial(tree, f, p, weight)
        return
    for T in T_values:
        val, _ = weak_functional_radial(tree, f, p, weight, exclude=(1.0 / T, T))
        rep.sequence.append([float(T), val])
    rep.value = rep.sequence[-1][1]
    rep.note = "sup over levels outside [1/T, T]; finite-T proxy of the limsup"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
