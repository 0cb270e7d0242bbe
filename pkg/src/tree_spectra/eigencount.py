"""Negative-eigenvalue counts by channel decomposition, plus a whole-tree oracle.

A symmetric potential on a regular tree splits the operator into weighted
half-line problems: channel ``k`` lives on ``[t_k, L]`` with weight
``g0 / G_k`` and occurs ``m_k`` times.  Every channel is discretized on one
shared radial grid, so channel ``k`` is a suffix of a single tridiagonal
matrix.  Counts come from the inertia of ``K - alpha Q``.

Scaling a channel by the positive constant ``G_k`` changes neither its
inertia nor its generalized eigenvalues, so the arrays below carry the raw
weight ``g0`` throughout.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from ._kernels import (
    backend,
    pencil_inertia,
    tree_inertia,
    tridiagonal_inverse_diagonal,
)
from .errors import (
    DomainError,
    HorizonExceededError,
    IncompleteDataError,
    InconclusiveError,
    SizeCapError,
    UnsupportedOperationError,
)
from .potentials import SymmetricPotential, radius_moment
from .tree import RegularTree, TreeKind, classify, covering, tail_inverse_weight

BCS = ("dirichlet", "neumann")
TAILS = ("dirichlet", "harmonic")
NEAR_CROSSING = 1e-8
DENSE_LDL_MAX = 1500


@dataclass(frozen=True)
class Numerics:
    """Discretization and convergence policy.

    Refinement level ``j`` uses ``L * 2**j`` and spacing ``h / 2**j`` with
    ``ppw * 2**j`` points per local wavelength ``2 pi / sqrt(alpha v)``.
    A count is converged once two successive levels agree.

    ``tail`` closes the grid at ``L``: ``"dirichlet"`` pins ``u(L) = 0``;
    ``"harmonic"`` attaches the zero-energy extension beyond ``L`` (energy
    ``u(L)^2 / h0(L)``, zero on recurrent trees), which makes the count
    exact for ``V`` cut off at ``L``.
    """

    L: Optional[float] = None
    h: float = math.inf
    ppw: float = 48.0
    min_points: int = 4
    max_refinements: int = 4
    refine: bool = True
    tail_tol: float = 0.05
    support_factor: float = 2.0
    workers: int = 1
    size_cap: int = 200_000
    tail: str = "harmonic"

    def __post_init__(self):
        if self.tail not in TAILS:
            raise DomainError(f"tail must be one of {TAILS}")
        if self.L is not None and not self.L > 0:
            raise DomainError("truncation radius L must be positive")
        if not self.h > 0:
            raise DomainError("grid spacing h must be positive")
        if not self.ppw > 0:
            raise DomainError("points per wavelength must be positive")
        if self.min_points < 2:
            raise DomainError("min_points must be at least 2")
        if self.max_refinements < 1:
            raise DomainError("max_refinements must be at least 1")
        if self.workers < 1:
            raise DomainError("workers must be at least 1")

    def at_level(self, j: int, L0: float) -> "Numerics":
        f = 2**j
        return replace(self, L=L0 * f, h=self.h / f, ppw=self.ppw * f)

    def to_dict(self) -> dict:
        out = asdict(self)
        if math.isinf(out["h"]):
            out["h"] = "inf"
        return out

    @staticmethod
    def from_dict(spec: Optional[dict]) -> "Numerics":
        spec = dict(spec or {})
        if spec.get("h") == "inf":
            spec["h"] = math.inf
        return Numerics(**spec)


# ---------------------------------------------------------------------------
# the shared radial grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialGrid:
    """Nodes ``0 = r_0 < ... < r_N = L`` containing every ``t_n < L``.

    ``cond[j]`` is ``g0 / h`` on segment ``j``; ``half_left`` and
    ``half_right`` are ``int v`` over the two halves of each segment.
    ``kd``, ``off`` and ``q`` are the assembled weighted arrays on all
    nodes; channel ``k`` is the suffix after node ``starts[k]``.
    ``tail_coef`` is the energy per ``u(L)^2`` of the exterior, or ``None``
    for a Dirichlet cut.
    """

    tree: RegularTree
    nodes: np.ndarray
    gen: np.ndarray
    starts: np.ndarray
    cond: np.ndarray
    half_left: np.ndarray
    half_right: np.ndarray
    kd: np.ndarray
    off: np.ndarray
    q: np.ndarray
    tail_coef: Optional[float] = None

    @property
    def L(self) -> float:
        return float(self.nodes[-1])

    @property
    def size(self) -> int:
        return int(self.nodes.size)


def auto_radius(tree: RegularTree, V: SymmetricPotential, alpha: float, numerics: Numerics) -> float:
    """Initial truncation radius for a given coupling."""
    if numerics.L is not None:
        return float(numerics.L)
    t1 = float(tree.radii[1])
    support = V.compact_support
    if support is not None:
        return max(numerics.support_factor * support, t1) if support > 0 else t1
    env = V.decay_envelope
    if env is not None and env.gamma > 2.0:
        # alpha v(t) t^2 <= alpha C t^(2 - gamma) falls below tail_tol here
        t = (alpha * env.C / numerics.tail_tol) ** (1.0 / (env.gamma - 2.0))
        return max(t, t1)
    if math.isfinite(V.covered_to):
        return V.covered_to
    raise InconclusiveError("cannot choose a truncation radius: give Numerics.L")


def build_grid(tree: RegularTree, V: SymmetricPotential, alpha: float, numerics: Numerics,
               L: Optional[float] = None) -> RadialGrid:
    L = float(numerics.L if L is None else L)
    if not L > 0:
        raise DomainError("truncation radius must be positive")
    big = covering(tree, L)
    radii = big.radii
    near = int(np.argmin(np.abs(radii - L)))
    if abs(radii[near] - L) <= 1e-12 * L:
        L = float(radii[near])  # avoid a sliver edge just past a vertex
    K = int(np.searchsorted(radii, L, side="left")) - 1  # last generation with t_K < L
    if K + 1 > big.horizon:
        raise HorizonExceededError(f"L = {L} beyond the tree horizon")
    pieces, gens, starts = [], [], []
    offset = 0
    for n in range(K + 1):
        a, b = float(radii[n]), min(float(radii[n + 1]), L)
        length = b - a
        vmax = V.max_on(a, b)
        if math.isinf(vmax):
            vmax = V.max_on(a + 1e-3 * length, b)
        m = numerics.min_points
        if math.isfinite(numerics.h):
            m = max(m, math.ceil(length / numerics.h))
        if alpha > 0 and vmax > 0:
            m = max(m, math.ceil(length * math.sqrt(alpha * vmax) * numerics.ppw / (2.0 * math.pi)))
        pts = np.linspace(a, b, m + 1)
        pts[-1] = b
        starts.append(offset)
        pieces.append(pts[:-1])
        gens.append(np.full(m, n, dtype=np.int64))
        offset += m
    nodes = np.concatenate(pieces + [[L]])
    gen = np.concatenate(gens)
    hseg = np.diff(nodes)
    if np.any(hseg <= 0):
        raise DomainError("grid spacing underflow; lower the resolution")
    kd, off, cond = _stiffness(nodes, big.g0[gen])
    hl, hr, q = _potential_arrays(nodes, big.g0[gen], V)
    return RadialGrid(big, nodes, gen, np.asarray(starts, dtype=np.int64), cond, hl, hr, kd, off, q,
                      _tail_coefficient(big, L, numerics.tail))


def _stiffness(nodes, G):
    cond = G / np.diff(nodes)
    N = nodes.size - 1
    kd = np.empty(N + 1)
    kd[0] = cond[0]
    kd[1:N] = cond[:-1] + cond[1:]
    kd[N] = cond[-1]
    return kd, -cond, cond


def _potential_arrays(nodes, G, V):
    """Half-cell integrals of ``v`` and the lumped weighted diagonal ``q``."""
    fine = np.empty(2 * nodes.size - 1)
    fine[0::2] = nodes
    fine[1::2] = 0.5 * (nodes[:-1] + nodes[1:])
    cells = V.cell_integrals(fine)
    hl, hr = cells[0::2], cells[1::2]
    q = np.zeros(nodes.size)
    q[:-1] += G * hl
    q[1:] += G * hr
    return hl, hr, q


def with_potential(grid: RadialGrid, V: SymmetricPotential) -> RadialGrid:
    """The same mesh carrying another potential (for comparisons on one discretization)."""
    hl, hr, q = _potential_arrays(grid.nodes, grid.tree.g0[grid.gen], V)
    return replace(grid, half_left=hl, half_right=hr, q=q)


def _tail_coefficient(tree, L, tail):
    if tail == "dirichlet":
        return None
    try:
        if classify(tree).kind is TreeKind.RECURRENT:
            return 0.0
        return 1.0 / tail_inverse_weight(tree, L)
    except InconclusiveError as err:
        raise InconclusiveError(f"harmonic tail needs the tree beyond its horizon ({err}); "
                                "use tail='dirichlet'") from err


def _channel_slice(grid: RadialGrid, k: int, bc: str):
    """``(kdiag, koff, qdiag)`` of channel ``k``."""
    N = grid.size - 1
    lo = 0 if (k == 0 and bc == "neumann") else int(grid.starts[k]) + 1
    if grid.tail_coef is not None:
        kd = grid.kd[lo:N + 1].copy()
        kd[-1] += grid.tail_coef
        return kd, grid.off[lo:N], grid.q[lo:N + 1]
    return grid.kd[lo:N], grid.off[lo:N - 1], grid.q[lo:N]


def _active_channels(grid: RadialGrid, V: SymmetricPotential, bc: str):
    """Channels that can carry negative spectrum: those starting inside the support."""
    support = V.compact_support
    ks = []
    for k in range(grid.starts.size):
        t_k = float(grid.tree.radii[k])
        if k > 0 and support is not None and t_k >= support:
            break
        if k == 0 and bc == "neumann":
            ks.append(k)
            continue
        if np.any(grid.q[int(grid.starts[k]) + 1:] > 0):
            ks.append(k)
    return ks


def _check_root(grid: RadialGrid, bc: str):
    if bc == "neumann" and not math.isfinite(grid.q[0]):
        raise DomainError("a free root needs v integrable near the root")
    if bc not in BCS:
        raise DomainError(f"boundary condition must be one of {BCS}")


def channel_counts(grid: RadialGrid, V: SymmetricPotential, a, b, bc: str = "dirichlet",
                   workers: int = 1):
    """Per-channel negative counts of ``a_j K - b_j Q``.

    Returns ``(ks, counts, closest)`` with ``counts`` of shape
    ``(len(ks), len(a))``.
    """
    _check_root(grid, bc)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    ks = _active_channels(grid, V, bc)

    def one(k):
        kd, off, q = _channel_slice(grid, k, bc)
        return pencil_inertia(kd, off, q, a, b)

    if workers > 1 and len(ks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            res = list(pool.map(one, ks))
    else:
        res = [one(k) for k in ks]
    if not res:
        return ks, np.zeros((0, a.size), dtype=np.int64), np.full((0, a.size), np.inf)
    counts = np.stack([r[0] for r in res])
    closest = np.stack([r[1] for r in res])
    return ks, counts, closest


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass
class CountResult:
    count: int
    alpha: float
    bc: str
    numerics: dict
    converged: bool
    channels: list = field(default_factory=list)
    near_crossing: bool = False
    closest_pivot: float = math.inf
    history: list = field(default_factory=list)
    method: str = "channels"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["closest_pivot"] = None if math.isinf(self.closest_pivot) else self.closest_pivot
        out["numerics"] = dict(self.numerics)
        return out


def _require_alpha(alpha):
    if not alpha > 0:
        raise DomainError("alpha must be positive")


def _levels(tree, V, alpha, numerics, evaluate):
    """Run the refinement loop; ``evaluate(grid)`` returns a dict of per-bc summaries."""
    L0 = auto_radius(tree, V, alpha, numerics)
    history, prev, last = [], None, None
    n_levels = numerics.max_refinements + 1 if numerics.refine else 1
    converged = False
    for j in range(n_levels):
        try:
            grid = build_grid(tree, V, alpha, numerics.at_level(j, L0))
        except (HorizonExceededError, IncompleteDataError):
            if j == 0:
                raise
            break
        out = evaluate(grid)
        key = tuple(out[bc]["count"] for bc in sorted(out))
        history.append({"level": j, "L": grid.L, "nodes": grid.size,
                        "counts": {bc: out[bc]["count"] for bc in sorted(out)}})
        last = (j, grid, out)
        if prev is not None and key == prev:
            converged = True
            break
        prev = key
    return last, history, converged


def _summarise(grid, ks, counts, closest, bc, with_channels=True):
    total = 0
    chans = []
    for row, k in enumerate(ks):
        c = int(counts[row])
        m = grid.tree.multiplicity(k)
        total += m * c
        if with_channels:
            chans.append({"k": k, "t_k": float(grid.tree.radii[k]), "multiplicity": m, "count": c})
    pmin = float(closest.min()) if closest.size else math.inf
    return {"count": total, "channels": chans, "closest": pmin}


def _finish(result, alpha, bc, numerics, converged, history, method):
    j, grid, out = result
    s = out[bc]
    num = numerics.to_dict()
    num.update({"L": grid.L, "nodes": grid.size, "level": j, "backend": backend()})
    hist = [{"level": h["level"], "L": h["L"], "nodes": h["nodes"], "count": h["counts"][bc]} for h in history]
    return CountResult(s["count"], float(alpha), bc, num, converged, s.get("channels", []),
                       s["closest"] < NEAR_CROSSING, s["closest"], hist, method)


def _count_on_grid(grid, V, alpha, bcs, workers):
    out = {}
    for bc in bcs:
        ks, counts, closest = channel_counts(grid, V, 1.0, alpha, bc, workers)
        out[bc] = _summarise(grid, ks, counts[:, 0], closest[:, 0], bc)
    return out


def count_negative(tree: RegularTree, V: SymmetricPotential, alpha: float, bc: str = "dirichlet",
                   numerics: Optional[Numerics] = None, grid: Optional[RadialGrid] = None) -> CountResult:
    """``N_-(-Delta - alpha V)`` summed over channels with their multiplicities.

    With ``grid`` given the count is taken on that discretization only and
    ``converged`` is ``False``.
    """
    _require_alpha(alpha)
    numerics = numerics or Numerics()
    if grid is not None:
        out = _count_on_grid(grid, V, alpha, (bc,), numerics.workers)
        return _finish((0, grid, out), alpha, bc, numerics, False, [], "channels")
    last, history, conv = _levels(tree, V, alpha, numerics,
                                  lambda g: _count_on_grid(g, V, alpha, (bc,), numerics.workers))
    return _finish(last, alpha, bc, numerics, conv, history, "channels")


def count_pair(tree: RegularTree, V: SymmetricPotential, alpha: float,
               numerics: Optional[Numerics] = None) -> tuple:
    """Dirichlet and Neumann counts taken on the same grids, refined together."""
    _require_alpha(alpha)
    numerics = numerics or Numerics()
    last, history, conv = _levels(tree, V, alpha, numerics,
                                  lambda g: _count_on_grid(g, V, alpha, BCS, numerics.workers))
    return tuple(_finish(last, alpha, bc, numerics, conv, history, "channels") for bc in BCS)


# ---------------------------------------------------------------------------
# whole-tree oracle
# ---------------------------------------------------------------------------


def _direct_size(grid: RadialGrid, bc: str) -> int:
    """Number of unknowns of the explicit tree discretization (exact integer)."""
    tree = grid.tree
    N = grid.size - 1
    K = grid.starts.size - 1
    total = 1 if bc == "neumann" else 0
    for n in range(K + 1):
        s = int(grid.starts[n])
        e = int(grid.starts[n + 1]) if n < K else N
        edges = tree.multiplicity(0) if n == 0 else _gcount(tree, n)
        total += edges * (e - s - 1)
        if e < N or grid.tail_coef is not None:
            total += edges
    return total


def _gcount(tree, n):
    prod = 1
    for bn in tree.branching[: n + 1].tolist():
        prod *= bn
    return prod


def tree_system(grid: RadialGrid, bc: str = "dirichlet", size_cap: int = 200_000):
    """Explicit truncated tree as ``(k_diag, q_diag, parent, coupling)``.

    Nodes are numbered generation by generation so that every parent
    precedes its children.  Vertices are shared between their incoming
    and outgoing edges, which encodes continuity and the Kirchhoff flux
    condition.  Leaves at ``L`` are Dirichlet, or carry the exterior
    energy of their own branch, ``tail_coef / G_K``, under a harmonic tail.
    """
    _check_root(grid, bc)
    n_total = _direct_size(grid, bc)
    if n_total > size_cap:
        raise SizeCapError(f"explicit tree needs {n_total} unknowns (cap {size_cap})")
    tree = grid.tree
    N = grid.size - 1
    K = grid.starts.size - 1
    c = 1.0 / np.diff(grid.nodes)
    hl, hr = grid.half_left, grid.half_right
    kds, qs, parents, couplings = [], [], [], []
    next_id = 0
    if bc == "neumann":
        kds.append([c[0]])
        qs.append([hl[0]])
        parents.append([-1])
        couplings.append([0.0])
        vertices = np.array([0])
        next_id = 1
    else:
        vertices = np.array([-1])
    for n in range(K + 1):
        s = int(grid.starts[n])
        e = int(grid.starts[n + 1]) if n < K else N
        bn = int(tree.branching[n])
        E = vertices.size * bn
        edge_parent = np.repeat(vertices, bn)
        idx = np.arange(s + 1, e)
        m = idx.size
        ids = next_id + np.arange(E * m).reshape(E, m)
        kds.append(np.tile(c[idx - 1] + c[idx], E))
        qs.append(np.tile(hr[idx - 1] + hl[idx], E))
        par = np.empty((E, m), dtype=np.int64)
        par[:, 0] = edge_parent
        par[:, 1:] = ids[:, :-1]
        parents.append(par.ravel())
        couplings.append(np.tile(-c[idx - 1], E))
        next_id += E * m
        if e < N:
            bnext = int(tree.branching[n + 1])
            vids = next_id + np.arange(E)
            kds.append(np.full(E, c[e - 1] + bnext * c[e]))
            qs.append(np.full(E, hr[e - 1] + bnext * hl[e]))
            parents.append(ids[:, -1])
            couplings.append(np.full(E, -c[e - 1]))
            vertices = vids
            next_id += E
        elif grid.tail_coef is not None:
            kds.append(np.full(E, c[N - 1] + grid.tail_coef / float(tree.g0[n])))
            qs.append(np.full(E, hr[N - 1]))
            parents.append(ids[:, -1])
            couplings.append(np.full(E, -c[N - 1]))
            next_id += E
    return (np.concatenate(kds), np.concatenate(qs),
            np.concatenate(parents).astype(np.int64), np.concatenate(couplings))


def ldl_inertia(A: np.ndarray) -> tuple:
    """Negative inertia from a Bunch-Kaufman ``LDL^T`` factorization."""
    n = A.shape[0]
    if n == 0:
        return 0, math.inf
    _, D, _ = scipy.linalg.ldl(A, lower=True, hermitian=True)
    scale = float(np.abs(A).sum(axis=1).max()) or 1.0
    neg, pmin, i = 0, math.inf, 0
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0.0:
            ev = np.linalg.eigvalsh(D[i:i + 2, i:i + 2])
            step = 2
        else:
            ev = np.array([D[i, i]])
            step = 1
        for x in ev:
            if abs(x) < 1e-30 * scale:
                x = -1e-30 * scale
            neg += x < 0
            pmin = min(pmin, abs(x) / scale)
        i += step
    return int(neg), pmin


def _direct_on_grid(grid, alpha, bcs, size_cap, method):
    out = {}
    for bc in bcs:
        kd, q, parent, coupling = tree_system(grid, bc, size_cap)
        diag = kd - alpha * q
        use_dense = method == "ldl" or (method == "auto" and diag.size <= DENSE_LDL_MAX)
        if use_dense:
            A = np.diag(diag)
            rows = np.nonzero(parent >= 0)[0]
            A[rows, parent[rows]] = coupling[rows]
            A[parent[rows], rows] = coupling[rows]
            neg, pmin = ldl_inertia(A)
        else:
            neg, pmin = tree_inertia(diag, parent, coupling)
        out[bc] = {"count": neg, "channels": [], "closest": pmin}
    return out


def count_negative_direct(tree: RegularTree, V: SymmetricPotential, alpha: float, bc: str = "dirichlet",
                          numerics: Optional[Numerics] = None, grid: Optional[RadialGrid] = None,
                          method: str = "auto") -> CountResult:
    """Brute-force count on the explicitly materialized truncated tree.

    ``method`` is ``"ldl"`` (dense symmetric-pivoting factorization),
    ``"tree"`` (fill-free elimination from the leaves) or ``"auto"``.
    """
    _require_alpha(alpha)
    if method not in ("auto", "ldl", "tree"):
        raise DomainError("method must be 'auto', 'ldl' or 'tree'")
    numerics = numerics or Numerics()
    label = f"direct-{method}"
    if grid is not None:
        out = _direct_on_grid(grid, alpha, (bc,), numerics.size_cap, method)
        return _finish((0, grid, out), alpha, bc, numerics, False, [], label)
    last, history, conv = _levels(tree, V, alpha, numerics,
                                  lambda g: _direct_on_grid(g, alpha, (bc,), numerics.size_cap, method))
    return _finish(last, alpha, bc, numerics, conv, history, label)


# ---------------------------------------------------------------------------
# Birman-Schwinger counting functions
# ---------------------------------------------------------------------------


@dataclass
class BirmanSchwingerResult:
    """``n(s)``: generalized eigenvalues of ``Q u = mu K u`` above ``s``, with multiplicity."""

    pairs: list
    bc: str
    numerics: dict
    converged: bool

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def to_dict(self) -> dict:
        return {"pairs": [[s, n] for s, n in self.pairs], "bc": self.bc,
                "numerics": self.numerics, "converged": self.converged}


def _bs_on_grid(grid, V, s, bc, workers):
    ks, counts, _ = channel_counts(grid, V, s, np.ones_like(s), bc, workers)
    mult = [grid.tree.multiplicity(k) for k in ks]
    return [sum(m * int(counts[r, j]) for r, m in enumerate(mult)) for j in range(s.size)]


def birman_schwinger_counts(tree: RegularTree, V: SymmetricPotential, s_list: Sequence[float],
                            bc: str = "dirichlet", numerics: Optional[Numerics] = None,
                            grid: Optional[RadialGrid] = None) -> BirmanSchwingerResult:
    """Counting function of the Birman-Schwinger pencil via inertia of ``sK - Q``.

    Without ``grid`` the discretization is the one :func:`count_negative`
    would use at ``alpha = 1 / min(s)``, refined until every ``n(s)`` is stable.
    """
    s = np.asarray(s_list, dtype=float)
    if s.size == 0:
        return BirmanSchwingerResult([], bc, {}, True)
    if np.any(s <= 0):
        raise DomainError("s must be positive")
    numerics = numerics or Numerics()
    if grid is not None:
        ns = _bs_on_grid(grid, V, s, bc, numerics.workers)
        num = dict(numerics.to_dict(), L=grid.L, nodes=grid.size)
        return BirmanSchwingerResult(list(zip(s.tolist(), ns)), bc, num, False)
    alpha = 1.0 / float(s.min())
    last, history, conv = _levels(tree, V, alpha, numerics,
                                  lambda g: {bc: {"count": tuple(_bs_on_grid(g, V, s, bc, numerics.workers))}})
    j, g, out = last
    num = dict(numerics.to_dict(), L=g.L, nodes=g.size, level=j)
    return BirmanSchwingerResult(list(zip(s.tolist(), list(out[bc]["count"]))), bc, num, conv)


@dataclass
class CVEstimate:
    value: float
    converged: bool
    tail: str
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _top_generalized(grid, V, bc, rtol, workers):
    """Largest ``mu`` with ``Q u = mu K u`` on ``grid``, by multisection on ``s``."""

    def positive(ss):
        _, counts, _ = channel_counts(grid, V, ss, np.ones_like(ss), bc, workers)
        return counts.sum(axis=0) > 0

    hi = 1.0
    while positive(np.array([hi]))[0]:
        hi *= 16.0
        if hi > 1e300:
            raise InconclusiveError("Birman-Schwinger operator looks unbounded")
    lo = hi
    while not positive(np.array([lo]))[0]:
        lo /= 16.0
        if lo < 1e-300:
            return 0.0
    for _ in range(200):
        if hi - lo <= rtol * hi:
            return hi
        ss = np.geomspace(lo, hi, 17)[1:-1]
        pos = positive(ss)
        k = int(np.argmin(pos)) if not pos.all() else ss.size
        if k < ss.size:
            hi = float(ss[k])
        if k > 0:
            lo = float(ss[k - 1])
    raise InconclusiveError("bisection on s did not converge")


def cv_estimate(tree: RegularTree, V: SymmetricPotential, bc: str = "dirichlet",
                numerics: Optional[Numerics] = None, rtol: float = 1e-6, level_rtol: float = 1e-3) -> CVEstimate:
    """Best Hardy constant ``C_V`` as the top of the Birman-Schwinger pencil.

    With the default harmonic tail the grid is exact beyond the support of
    ``v``; levels double ``L`` and ``min_points`` until the value moves by
    less than ``level_rtol``.
    """
    numerics = numerics or Numerics(min_points=32, ppw=8.0)
    tail = numerics.tail
    if V.is_zero:
        return CVEstimate(0.0, True, tail)
    L0 = auto_radius(tree, V, 1.0, numerics)
    history, prev = [], None
    n_levels = numerics.max_refinements + 1 if numerics.refine else 1
    value, converged = None, False
    for j in range(n_levels):
        f = 2**j
        lev = replace(numerics, L=L0 * f, h=numerics.h / f, min_points=numerics.min_points * f)
        try:
            alpha = 1.0 / value if value else 1.0
            grid = build_grid(tree, V, alpha, lev)
        except (HorizonExceededError, IncompleteDataError):
            if j == 0:
                raise
            break
        value = _top_generalized(grid, V, bc, rtol, numerics.workers)
        history.append({"level": j, "L": grid.L, "nodes": grid.size, "value": value})
        if prev is not None and abs(value - prev) <= level_rtol * value:
            converged = True
            break
        prev = value
    return CVEstimate(value, converged, tail, history)


def estimate_CV(tree: RegularTree, V: SymmetricPotential, bc: str = "dirichlet",
                numerics: Optional[Numerics] = None, **kwargs) -> float:
    """Value of :func:`cv_estimate`."""
    return cv_estimate(tree, V, bc, numerics, **kwargs).value


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------


@dataclass
class TraceDiagnostic:
    rows: list

    @property
    def traces(self):
        return [r["trace"] for r in self.rows]

    @property
    def moments(self):
        return [r["moment"] for r in self.rows]

    def to_dict(self) -> dict:
        return {"rows": self.rows}


def discrete_trace(grid: RadialGrid, V: SymmetricPotential, bc: str = "neumann") -> float:
    """``sum_k m_k tr(K_k^{-1} Q_k)`` on one grid."""
    _check_root(grid, bc)
    total = 0.0
    for k in _active_channels(grid, V, bc):
        kd, off, q = _channel_slice(grid, k, bc)
        if kd.size == 0:
            continue
        inv = tridiagonal_inverse_diagonal(kd, off)
        total += grid.tree.multiplicity(k) * float(np.dot(q, inv))
    return total


def trace_diagnostic(tree: RegularTree, V: SymmetricPotential, numerics: Optional[Numerics] = None,
                     bc: str = "neumann", doublings: int = 6, L0: Optional[float] = None) -> TraceDiagnostic:
    """Discrete Birman-Schwinger traces next to ``int_{|x|<=L} |x| V dx`` for ``L = L0 2^j``."""
    if classify(tree).kind is not TreeKind.TRANSIENT:
        raise UnsupportedOperationError("the trace diagnostic needs a transient tree")
    numerics = numerics or Numerics(min_points=16)
    if L0 is None:
        L0 = numerics.L if numerics.L is not None else float(tree.radii[min(2, tree.horizon)])
    rows = []
    for j in range(doublings + 1):
        L = L0 * 2**j
        try:
            grid = build_grid(tree, V, 0.0, numerics, L=L)
        except (HorizonExceededError, IncompleteDataError):
            break
        rows.append({"L": L, "trace": discrete_trace(grid, V, bc), "moment": radius_moment(tree, V, upto=L),
                     "nodes": grid.size})
    return TraceDiagnostic(rows)
