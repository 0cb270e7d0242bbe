"""Coupling-constant sweeps, scaling fits and empirical checks of the estimates."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .eigencount import BCS, Numerics, count_negative, count_pair
from .errors import DomainError, InapplicableError
from .hardy import _jsonable, weak_quasinorm_sequence
from .potentials import SymmetricPotential, eta_sequence, potential_from_dict, weyl_coefficient
from .tree import RegularTree, global_dimension, tree_from_dict

SCENARIOS = ("example-7-1", "weyl", "dn-bracket", "necessity")
CSV_COLUMNS = ("alpha", "count", "converged", "alpha_pow_neg_p_count")
PROXY_NOTE = ("limsup proxy: maximum of alpha^-p N over the last quarter of the geometric grid; "
              "o(alpha^p) behaviour cannot be certified from finitely many couplings")
SCENARIO_HORIZON = 120


@dataclass
class SweepConfig:
    tree: dict
    potential: dict
    bc: str = "dirichlet"
    alpha_min: float = 1e2
    alpha_max: float = 1e6
    points: int = 24
    p: Optional[float] = None
    numerics: dict = field(default_factory=dict)
    scenario: str = ""
    slope_window: Optional[tuple] = None
    workers: int = 1

    def __post_init__(self):
        if not self.alpha_min > 0:
            raise DomainError("alpha_min must be positive")
        if not self.alpha_max > self.alpha_min:
            raise DomainError("alpha_max must exceed alpha_min")
        if self.points < 5:
            raise DomainError("an alpha grid needs at least 5 points")
        if self.bc not in BCS:
            raise DomainError(f"bc must be one of {BCS}")
        if self.p is not None and not self.p > 0:
            raise DomainError("p must be positive")
        if self.slope_window is not None:
            self.slope_window = tuple(float(x) for x in self.slope_window)

    def alphas(self) -> np.ndarray:
        return np.geomspace(self.alpha_min, self.alpha_max, self.points)

    def build(self):
        tree = tree_from_dict(self.tree)
        return tree, potential_from_dict(self.potential, tree), Numerics.from_dict(self.numerics)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, spec: dict) -> "SweepConfig":
        spec = dict(spec)
        grid = spec.pop("alpha_grid", None)
        if grid:
            spec.setdefault("alpha_min", grid.get("min", grid.get("alpha_min")))
            spec.setdefault("alpha_max", grid.get("max", grid.get("alpha_max")))
            spec.setdefault("points", grid.get("points", 24))
        known = set(cls.__dataclass_fields__)
        unknown = set(spec) - known
        if unknown:
            raise DomainError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(**spec)


@dataclass
class SlopeFit:
    slope: Optional[float]
    stderr: Optional[float]
    points: int
    window: tuple
    reason: str = ""


@dataclass
class SweepResult:
    config: dict
    rows: list
    fit: SlopeFit
    sup_ratio: Optional[float]
    last_quartile_ratio: Optional[float]
    weyl: Optional[dict] = None
    proxy_note: str = PROXY_NOTE

    @property
    def slope(self):
        return self.fit.slope

    @property
    def counts(self):
        return [r["count"] for r in self.rows]

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def fit_slope(alphas, counts, converged=None, window=None) -> SlopeFit:
    """Least-squares slope of ``log N`` against ``log alpha``.

    Rows enter only with ``N >= 1`` and ``converged``.  The default window is
    the upper half of the grid; ``window=(lo, hi)`` selects by value.
    """
    a = np.asarray(alphas, dtype=float)
    n = np.asarray(counts, dtype=float)
    ok = np.ones(a.size, bool) if converged is None else np.asarray(converged, bool)
    if window is None:
        sel = np.zeros(a.size, bool)
        sel[a.size // 2:] = True
        win = (float(a[a.size // 2]), float(a[-1])) if a.size else (math.nan, math.nan)
    else:
        lo, hi = window
        sel = (a >= lo * (1 - 1e-12)) & (a <= hi * (1 + 1e-12))
        win = (float(lo), float(hi))
    use = sel & ok & (n >= 1)
    if use.sum() < 2:
        reason = "all counts zero" if not np.any(n[sel] >= 1) else "fewer than two usable rows"
        return SlopeFit(None, None, int(use.sum()), win, reason)
    x, y = np.log(a[use]), np.log(n[use])
    if np.ptp(x) == 0:
        return SlopeFit(None, None, int(use.sum()), win, "degenerate window")
    res = stats.linregress(x, y)
    stderr = float(res.stderr) if use.sum() > 2 else None
    return SlopeFit(float(res.slope), stderr, int(use.sum()), win)


def _ratio(count, alpha, p):
    return None if p is None else count * alpha ** (-p)


def run_sweep(config: SweepConfig) -> SweepResult:
    tree, V, numerics = config.build()
    alphas = config.alphas()

    def one(a):
        r = count_negative(tree, V, float(a), config.bc, numerics)
        return {"alpha": float(a), "count": int(r.count), "converged": bool(r.converged),
                "alpha_pow_neg_p_count": _ratio(r.count, float(a), config.p)}

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(one, alphas))
    else:
        rows = [one(a) for a in alphas]
    fit = fit_slope(alphas, [r["count"] for r in rows], [r["converged"] for r in rows], config.slope_window)
    sup_ratio = last_q = None
    if config.p is not None:
        ratios = np.array([r["alpha_pow_neg_p_count"] for r in rows])
        sup_ratio = float(ratios.max())
        q = max(1, int(math.ceil(len(rows) / 4)))
        last_q = float(ratios[-q:].max())
    weyl = None
    if config.scenario == "weyl":
        coef = weyl_coefficient(tree, V)
        weyl = {"coefficient": coef,
                "ratios": [[r["alpha"], r["count"] / math.sqrt(r["alpha"]) / coef] for r in rows]}
    return SweepResult(config.to_dict(), rows, fit, sup_ratio, last_q, weyl)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


@dataclass
class NecessityReport:
    p: float
    slope: Optional[float]
    slope_tol: float
    empirical_bounded: bool
    quasinorm: float
    quasinorm_finite: bool
    agree: bool
    note: str = ("bounded means the fitted slope does not exceed p + slope_tol; "
                 "an empirical consistency check, not a proof")

    def to_dict(self):
        return _jsonable(asdict(self))


def check_necessity(tree: RegularTree, V: SymmetricPotential, p: float, sweep: SweepResult,
                    slope_tol: float = 0.1) -> NecessityReport:
    """Compare boundedness of ``alpha^-p N`` with finiteness of the weak-l_p quasinorm of ``eta``."""
    if tree.generator is None:
        raise InapplicableError("the necessity check needs a b-regular tree")
    gd = global_dimension(tree)
    if gd is None or abs(gd.d - 2.0) < 1e-9:
        raise InapplicableError("the necessity check excludes global dimension 2")
    slope = sweep.fit.slope
    bounded = slope is None or slope <= p + slope_tol
    eta = eta_sequence(tree, V)
    qn = weak_quasinorm_sequence(eta.values, p, eta.weights, eta.tail)
    finite = math.isfinite(qn)
    return NecessityReport(p, slope, slope_tol, bounded, qn, finite, bounded == finite)


@dataclass
class DNReport:
    rows: list
    violations: int

    @property
    def holds(self) -> bool:
        return self.violations == 0

    def to_dict(self):
        return {"rows": self.rows, "violations": self.violations, "holds": self.holds}


def check_dn_bracket(tree: RegularTree, V: SymmetricPotential, alphas: Sequence[float],
                     numerics: Optional[Numerics] = None) -> DNReport:
    """``N_D <= N_N <= N_D + 1`` at every coupling, on shared grids."""
    rows, bad = [], 0
    for a in alphas:
        d, n = count_pair(tree, V, float(a), numerics)
        ok = d.count <= n.count <= d.count + 1
        bad += not ok
        rows.append({"alpha": float(a), "dirichlet": d.count, "neumann": n.count, "ok": ok,
                     "converged": d.converged})
    return DNReport(rows, bad)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def to_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def to_json(result: SweepResult) -> str:
    return json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n"


def emit(result: SweepResult, fmt: str = "csv", path: Optional[str] = None) -> None:
    """Write ``result`` as CSV or JSON to ``path`` (``None`` or ``"-"`` is stdout)."""
    if fmt not in ("csv", "json"):
        raise DomainError("format must be 'csv' or 'json'")
    text = to_csv(result) if fmt == "csv" else to_json(result)
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# built-in scenarios
# ---------------------------------------------------------------------------


def scenario_config(name: str, b: int = 2, d: float = 3.0, p: Optional[float] = None, q: Optional[float] = None,
                    alpha_min: float = 1e2, alpha_max: float = 1e6, points: int = 24,
                    numerics: Optional[dict] = None, bc: str = "dirichlet", workers: int = 1) -> SweepConfig:
    if name not in SCENARIOS:
        raise DomainError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    tree = {"kind": "b_regular", "b": b, "d": d, "horizon": SCENARIO_HORIZON}
    base = dict(bc=bc, alpha_min=alpha_min, alpha_max=alpha_max, points=points,
                numerics=dict(numerics or {}), scenario=name, workers=workers)
    if name in ("example-7-1", "necessity"):
        # log-periodic staircase: fit over the whole grid, not one phase of it
        base["slope_window"] = (alpha_min, alpha_max)
    if name in ("example-7-1", "dn-bracket"):
        p = 1.5 if p is None else p
        pot = {"kind": "example-7-1", "b": b, "d": d, "p": p, "horizon": SCENARIO_HORIZON}
        return SweepConfig(tree, pot, p=p, **base)
    if name == "weyl":
        pot = {"pieces": [{"from": 0.0, "to": 2.0, "profile": {"kind": "constant", "c": 1.0}}],
               "support_bound": 2.0, "label": "1(0,2]"}
        return SweepConfig(tree, pot, p=0.5, **base)
    p = 1.5 if p is None else p
    q = p if q is None else q
    pot = {"kind": "eta-power", "b": b, "d": d, "q": q, "horizon": SCENARIO_HORIZON}
    return SweepConfig(tree, pot, p=p, **base)


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    detail: dict

    def to_dict(self):
        return _jsonable(asdict(self))


def run_check(config: SweepConfig, slope_tol: float = 0.05, weyl_tol: float = 0.05,
              quartile_fraction: float = 0.5) -> list:
    """Run the checks that belong to ``config.scenario``; returns a list of outcomes."""
    tree, V, numerics = config.build()
    name = config.scenario
    if name == "dn-bracket":
        rep = check_dn_bracket(tree, V, config.alphas(), numerics)
        return [CheckOutcome("dn-bracket", rep.holds, rep.to_dict())]
    res = run_sweep(config)
    out = []
    if name == "example-7-1":
        s = res.fit.slope
        out.append(CheckOutcome("slope", s is not None and abs(s - config.p) <= slope_tol,
                                {"slope": s, "p": config.p, "tol": slope_tol, "window": res.fit.window}))
        out.append(CheckOutcome("sup-bounded", res.sup_ratio is not None and math.isfinite(res.sup_ratio),
                                {"sup": res.sup_ratio}))
        lq_ok = res.sup_ratio is not None and res.last_quartile_ratio >= quartile_fraction * res.sup_ratio
        out.append(CheckOutcome("not-o", lq_ok, {"last_quartile": res.last_quartile_ratio, "sup": res.sup_ratio,
                                                 "fraction": quartile_fraction, "note": res.proxy_note}))
    elif name == "weyl":
        last = res.rows[-1]
        ratio = res.weyl["ratios"][-1][1]
        out.append(CheckOutcome("weyl", last["converged"] and abs(ratio - 1.0) <= weyl_tol,
                                {"alpha": last["alpha"], "ratio": ratio, "tol": weyl_tol,
                                 "converged": last["converged"]}))
    elif name == "necessity":
        rep = check_necessity(tree, V, config.p, res)
        out.append(CheckOutcome("necessity", rep.agree, rep.to_dict()))
    else:
        out.append(CheckOutcome("sweep", all(r["converged"] for r in res.rows),
                                {"unconverged": [r["alpha"] for r in res.rows if not r["converged"]]}))
    return out
