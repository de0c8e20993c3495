"""LP relaxation and best-first branch-and-bound over binary variables.

Both entry points first split the model into independent blocks: fixed
variables are folded into the row bounds, and the remaining variables are
grouped by the connected components of the constraint graph. Each block is
solved on its own and the results are summed, which keeps the search trees
small for models that are separable by hour.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .model import INFEASIBLE, OPTIMAL, TIME_LIMIT, UNBOUNDED, MilpModel, Solution, StandardForm
from .simplex import Basis, LPResult, SimplexError, solve_arrays


@dataclass(frozen=True)
class SolverOptions:
    abs_gap: float = 1e-6
    feas_tol: float = 1e-7
    int_tol: float = 1e-6
    time_budget: float = 600.0
    heuristic_every: int = 8

    def __post_init__(self):
        for name in ("abs_gap", "feas_tol", "int_tol", "time_budget"):
            if not getattr(self, name) > 0:
                raise ValueError(f"solver option {name} must be positive")


@dataclass
class _Block:
    cols: np.ndarray
    c: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray

    def key(self) -> bytes:
        h = hashlib.blake2b(digest_size=20)
        for arr in (self.c, self.row_lo, self.row_hi, self.lb, self.ub, self.binary,
                    self.A.indptr, self.A.indices, self.A.data):
            h.update(np.ascontiguousarray(arr).tobytes())
            h.update(b"|")
        return h.digest()


@dataclass
class _BlockResult:
    status: str
    x: np.ndarray | None
    objective: float
    nodes: int = 0
    gap: float = 0.0
    bound: float = math.nan
    trace: list[float] = field(default_factory=list)


def _split(sf: StandardForm, tol: float) -> tuple[list[_Block] | None, np.ndarray, float]:
    """Fold fixed variables into the rows and cut the rest into independent blocks.

    Returns ``(blocks, x_fixed, constant)`` where ``blocks`` is None when a row
    left with only fixed variables is violated.
    """
    n = sf.c.size
    fixed = sf.lb >= sf.ub
    x = np.where(fixed, sf.lb, 0.0)
    constant = sf.offset + float(sf.c[fixed] @ sf.lb[fixed])
    A = sf.A.tocsc()
    shift = A[:, fixed] @ sf.lb[fixed] if fixed.any() else np.zeros(A.shape[0])
    row_lo = sf.row_lo - shift
    row_hi = sf.row_hi - shift
    free = np.flatnonzero(~fixed)
    Af = A[:, free].tocsr()
    Af.eliminate_zeros()
    occupied = np.diff(Af.indptr) > 0
    if np.any(row_lo[~occupied] > tol) or np.any(row_hi[~occupied] < -tol):
        return None, x, constant
    rows = np.flatnonzero(occupied)
    Ar = Af[rows]
    nf, mr = free.size, rows.size
    pattern = sp.csr_matrix((np.ones(Ar.nnz), Ar.indices, Ar.indptr), shape=(mr, nf))
    graph = sp.bmat([[None, pattern.T], [pattern, None]], format="csr") if mr else sp.csr_matrix((nf, nf))
    _, labels = connected_components(graph, directed=False)
    var_labels = labels[:nf]
    row_labels = labels[nf:]
    blocks = []
    order = {}
    for k, lab in enumerate(var_labels):
        order.setdefault(lab, []).append(k)
    row_groups: dict[int, list[int]] = {}
    for i, lab in enumerate(row_labels):
        row_groups.setdefault(lab, []).append(i)
    for lab, members in order.items():
        members = np.array(members)
        cols = free[members]
        rsel = np.array(row_groups.get(lab, []), dtype=int)
        sub = Ar[rsel][:, members] if rsel.size else sp.csr_matrix((0, members.size))
        blocks.append(_Block(cols, sf.c[cols], sp.csr_matrix(sub), row_lo[rows[rsel]], row_hi[rows[rsel]],
                             sf.lb[cols], sf.ub[cols], sf.binary[cols]))
    return blocks, x, constant


def _lp(block: _Block, lb, ub, basis: Basis | None, deadline) -> LPResult:
    try:
        return solve_arrays(block.c, block.A, block.row_lo, block.row_hi, lb, ub, basis=basis, deadline=deadline)
    except SimplexError:
        if basis is None:
            raise
        return solve_arrays(block.c, block.A, block.row_lo, block.row_hi, lb, ub, deadline=deadline)


def _violation(block: _Block, x: np.ndarray) -> float:
    ax = block.A @ x if block.A.shape[0] else np.zeros(0)
    parts = [0.0]
    if ax.size:
        parts.append(float(np.max(block.row_lo - ax)))
        parts.append(float(np.max(ax - block.row_hi)))
    parts.append(float(np.max(block.lb - x)))
    parts.append(float(np.max(x - block.ub)))
    return max(parts)


def _check(block: _Block, res: LPResult, tol: float) -> None:
    if res.status == OPTIMAL and _violation(block, res.x) > tol:
        raise SimplexError(f"LP solution violates constraints by {_violation(block, res.x):.3e}")


def _solve_block_lp(block: _Block, options: SolverOptions, deadline) -> _BlockResult:
    res = _lp(block, block.lb, block.ub, None, deadline)
    _check(block, res, options.feas_tol)
    return _BlockResult(res.status, res.x if res.status == OPTIMAL else None, res.objective, 1, 0.0, res.objective)


def _fractional(block: _Block, x: np.ndarray, lb: np.ndarray, ub: np.ndarray, tol: float) -> int:
    """Most fractional free binary, lowest index on ties; -1 when integral."""
    idx = np.flatnonzero(block.binary & (lb < ub))
    if idx.size == 0:
        return -1
    frac = np.minimum(x[idx] - np.floor(x[idx]), np.ceil(x[idx]) - x[idx])
    k = int(np.argmax(frac))
    if frac[k] <= tol:
        return -1
    return int(idx[k])


_DIVE_ROUNDS = 30


def _lock_round(block: _Block, cols: sp.csc_matrix, x: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                tol: float, int_tol: float) -> tuple[np.ndarray | None, list[int]]:
    """Round fractional binaries one at a time, keeping the continuous values.

    A binary is moved to 0 or 1 only if every row it appears in stays within
    its bounds; the direction that helps the objective is tried first. Returns
    the rounded point (None if some binary could not be moved) and the
    indices of the binaries that could not be moved.
    """
    idx = np.flatnonzero(block.binary & (lb < ub))
    frac = idx[np.abs(x[idx] - np.round(x[idx])) > int_tol]
    xr = x.copy()
    xr[idx] = np.where(np.abs(x[idx] - np.round(x[idx])) <= int_tol, np.round(x[idx]), x[idx])
    if frac.size == 0:
        return xr, []
    act = block.A @ xr
    stuck = []
    for j in frac:
        lo, hi = cols.indptr[j], cols.indptr[j + 1]
        rows, coef = cols.indices[lo:hi], cols.data[lo:hi]
        cj = block.c[j]
        near = 1.0 if xr[j] >= 0.5 else 0.0
        if cj > 0:
            order = (1.0, 0.0)
        elif cj < 0:
            order = (0.0, 1.0)
        else:
            order = (near, 1.0 - near)
        for value in order:
            if not lb[j] <= value <= ub[j]:
                continue
            new = act[rows] + coef * (value - xr[j])
            if np.all(new >= block.row_lo[rows] - tol) and np.all(new <= block.row_hi[rows] + tol):
                act[rows] = new
                xr[j] = value
                break
        else:
            stuck.append(int(j))
    return (xr if not stuck else None), stuck


def _reduced_cost_fix(block: _Block, res: LPResult, lb: np.ndarray, ub: np.ndarray,
                      cutoff: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Fix free binaries whose move off their bound would drop the LP bound to ``cutoff`` or below.

    Returns the tightened bounds and the best bound among the excluded sides.
    """
    d = res.reduced
    if d is None or not math.isfinite(cutoff):
        return lb, ub, -math.inf
    free = block.binary & (lb < ub)
    x = res.x
    at_lo = free & (x <= lb) & (d > 0) & (res.objective - d <= cutoff - 1e-9)
    at_hi = free & (x >= ub) & (d < 0) & (res.objective + d <= cutoff - 1e-9)
    if not (at_lo.any() or at_hi.any()):
        return lb, ub, -math.inf
    lb, ub = lb.copy(), ub.copy()
    ub[at_lo] = lb[at_lo]
    lb[at_hi] = ub[at_hi]
    cut = np.concatenate([res.objective - d[at_lo], res.objective + d[at_hi]])
    return lb, ub, float(cut.max())


def _pick_branch(x: np.ndarray, candidates: list[int]) -> int:
    """Most fractional among ``candidates``, lowest index on ties."""
    cand = np.array(sorted(candidates))
    frac = np.minimum(x[cand] - np.floor(x[cand]), np.ceil(x[cand]) - x[cand])
    return int(cand[int(np.argmax(frac))])


def _branch_and_bound(block: _Block, options: SolverOptions, deadline) -> _BlockResult:
    gap_tol = options.abs_gap
    cols = block.A.tocsc()
    root = _lp(block, block.lb, block.ub, None, deadline)
    _check(block, root, options.feas_tol)
    nodes = 1
    if root.status == TIME_LIMIT:
        return _BlockResult(TIME_LIMIT, None, math.nan, nodes, math.inf, math.inf)
    if root.status != OPTIMAL:
        return _BlockResult(root.status, None, math.nan, nodes, math.nan, math.nan)

    best_x: np.ndarray | None = None
    best_obj = -math.inf
    best_path: tuple = ()
    trace: list[float] = []
    pruned_bound = -math.inf

    def offer(x, obj, path):
        nonlocal best_x, best_obj, best_path
        if obj > best_obj + 1e-9 or (abs(obj - best_obj) <= 1e-9 and path < best_path):
            best_x, best_obj, best_path = x, obj, path
            trace.append(obj)

    def finish_integral(res: LPResult, lb, ub, path):
        nonlocal nodes
        x = res.x
        bins = block.binary
        rounded = np.round(x[bins])
        if np.max(np.abs(x[bins] - rounded), initial=0.0) > 1e-9:
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[bins] = rounded
            ub2[bins] = rounded
            res = _lp(block, lb2, ub2, res.basis, deadline)
            nodes += 1
            if res.status != OPTIMAL:
                return
            x = res.x
        offer(x, res.objective, path)

    def dive(res: LPResult, lb, ub, path):
        """Fix the binaries that resist lock rounding to their nearest value, re-solve, repeat."""
        nonlocal nodes
        lb2, ub2 = lb.copy(), ub.copy()
        cur = res
        for _ in range(_DIVE_ROUNDS):
            xr, stuck = _lock_round(block, cols, cur.x, lb2, ub2, options.feas_tol, options.int_tol)
            if xr is not None:
                offer(xr, float(block.c @ xr), path + (2,))
                return
            for j in stuck:
                lb2[j] = ub2[j] = float(round(cur.x[j]))
            cur = _lp(block, lb2, ub2, cur.basis, deadline)
            nodes += 1
            if cur.status != OPTIMAL or _violation(block, cur.x) > options.feas_tol:
                return

    heap: list = []
    store: dict[int, tuple] = {}
    counter = 0

    def push(res, lb, ub, path):
        nonlocal counter
        store[counter] = (res, lb, ub, path)
        heapq.heappush(heap, (-res.objective, -len(path), path, counter))
        counter += 1

    j = _fractional(block, root.x, block.lb, block.ub, options.int_tol)
    if j < 0:
        finish_integral(root, block.lb, block.ub, ())
    else:
        xr, _ = _lock_round(block, cols, root.x, block.lb, block.ub, options.feas_tol, options.int_tol)
        if xr is not None:
            offer(xr, float(block.c @ xr), (2,))
        else:
            dive(root, block.lb, block.ub, ())
        push(root, block.lb.copy(), block.ub.copy(), ())

    popped = 0
    timed_out = False
    while heap:
        neg_bound, _, _, key = heapq.heappop(heap)
        bound = -neg_bound
        res, lb, ub, path = store.pop(key)
        if bound <= best_obj + gap_tol:
            pruned_bound = max(pruned_bound, bound)
            for item in heap:
                pruned_bound = max(pruned_bound, -item[0])
            heap.clear()
            break
        if time.monotonic() > deadline:
            heapq.heappush(heap, (neg_bound, 0, path, key))
            store[key] = (res, lb, ub, path)
            timed_out = True
            break
        popped += 1
        xr, stuck = _lock_round(block, cols, res.x, lb, ub, options.feas_tol, options.int_tol)
        if xr is not None:
            offer(xr, float(block.c @ xr), path + (2,))
            if bound <= best_obj + gap_tol:
                pruned_bound = max(pruned_bound, bound)
                continue
        elif popped % options.heuristic_every == 0:
            dive(res, lb, ub, path)
        lb, ub, cut = _reduced_cost_fix(block, res, lb, ub, best_obj + gap_tol)
        pruned_bound = max(pruned_bound, cut)
        j = _pick_branch(res.x, stuck) if stuck else _fractional(block, res.x, lb, ub, options.int_tol)
        for value in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = value
            child = _lp(block, clb, cub, res.basis, deadline)
            nodes += 1
            cpath = path + (int(value),)
            if child.status == TIME_LIMIT:
                timed_out = True
                push(res, lb, ub, path)
                break
            if child.status != OPTIMAL:
                continue
            _check(block, child, options.feas_tol)
            if child.objective <= best_obj + gap_tol:
                pruned_bound = max(pruned_bound, child.objective)
                continue
            if _fractional(block, child.x, clb, cub, options.int_tol) < 0:
                finish_integral(child, clb, cub, cpath)
            else:
                push(child, clb, cub, cpath)
        if timed_out:
            break

    open_bound = max((-item[0] for item in heap), default=-math.inf)
    if timed_out:
        bound = max(open_bound, best_obj, pruned_bound)
        gap = bound - best_obj if best_x is not None else math.inf
        return _BlockResult(TIME_LIMIT, best_x, best_obj if best_x is not None else math.nan,
                            nodes, gap, bound, trace)
    if best_x is None:
        return _BlockResult(INFEASIBLE, None, math.nan, nodes, math.nan, math.nan, trace)
    bound = max(best_obj, pruned_bound)
    return _BlockResult(OPTIMAL, best_x, best_obj, nodes, max(bound - best_obj, 0.0), bound, trace)


def _combine(model: MilpModel, sf: StandardForm, blocks, x, constant, results) -> Solution:
    statuses = [r.status for r in results]
    nodes = sum(r.nodes for r in results)
    for status in (INFEASIBLE, UNBOUNDED):
        if status in statuses:
            return Solution(status, {}, math.nan, nodes, math.nan)
    objective = constant
    gap = 0.0
    complete = True
    for block, r in zip(blocks, results):
        if r.x is None:
            complete = False
            continue
        x[block.cols] = r.x
        objective += r.objective
        gap += r.gap
    status = TIME_LIMIT if TIME_LIMIT in statuses else OPTIMAL
    if not complete:
        sol = Solution(TIME_LIMIT, {}, math.nan, nodes, math.inf, math.inf)
    else:
        sol = Solution(status, model.solution_from_array(x), objective, nodes, gap, objective + gap)
    sol.trace = [r.trace for r in results]
    return sol


def _run(model: MilpModel, options: SolverOptions, relax: bool, cache: dict | None) -> Solution:
    problems = model.validate()
    if problems:
        raise ValueError("invalid model: " + "; ".join(problems[:5]))
    sf = model.standard_form()
    if relax:
        sf.binary = np.zeros_like(sf.binary)
    deadline = time.monotonic() + options.time_budget
    blocks, x, constant = _split(sf, options.feas_tol)
    if blocks is None:
        return Solution(INFEASIBLE, {}, math.nan, 0, math.nan)
    results = []
    for block in blocks:
        key = (relax, block.key()) if cache is not None else None
        if key is not None and key in cache:
            results.append(cache[key])
            continue
        if relax or not block.binary.any():
            r = _solve_block_lp(block, options, deadline)
        else:
            r = _branch_and_bound(block, options, deadline)
        if key is not None and r.status != TIME_LIMIT:
            cache[key] = r
        results.append(r)
        if r.status in (INFEASIBLE, UNBOUNDED):
            break
    return _combine(model, sf, blocks, x, constant, results)


def solve_lp(model: MilpModel, options: SolverOptions | None = None, cache: dict | None = None) -> Solution:
    """Solve the linear relaxation of ``model`` (binaries relaxed to their bounds)."""
    return _run(model, options or SolverOptions(), relax=True, cache=cache)


def solve_milp(model: MilpModel, options: SolverOptions | None = None, cache: dict | None = None) -> Solution:
    """Branch-and-bound on the binary variables of ``model``.

    ``cache`` may be shared between calls on related models; blocks whose
    data are byte-identical are solved once.
    """
    return _run(model, options or SolverOptions(), relax=False, cache=cache)
