"""Day-ahead P2P scheduling model: builder, profit evaluation and solve strategies.

Conventions used throughout:

* unit-level variables are indexed ``(c, u, t)``; guest-EV variables are
  indexed ``(ev, c, t)`` for the hours the EV is connectable and hosting
  decisions ``(ev, c)``;
* a community hosts at most one EV per hour, so guest-EV cash flows and
  the extra purchase for EV charging are booked once per community-hour
  and split equally across its units;
* energy discharged by a guest EV is shared out among the units through
  ``EVShare`` variables whose sum equals the discharge, so any unit may
  export it or back its own outlets with it;
* ENS is the shortfall of interruptible load after self-supply, demand
  response, grid purchase and P2P purchase;
* PV used for self-supply, P2P sales and grid sales cannot exceed the PV
  output plus the unit's share of EV discharging.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, fields, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .milp import (BINARY, EQ, GE, LE, OPTIMAL, TIME_LIMIT, MilpModel, Solution, SolverOptions,
                   solve_lp, solve_milp)
from .model import EvScenario, Instance

UNIT_ROLES = ("PT2G", "PTFG", "PTUIDFG", "PTIDFG", "DR", "SelfSupply", "PT2P2P", "PTFP2P", "ENS", "v", "r")
EV_HOUR_ROLES = ("UEV", "CHEV", "DCHEV", "SOC")
EV_ROLES = ("VEV",)
SHARE_ROLE = "EVShare"
BINARY_ROLES = {"v", "r", "UEV", "VEV"}

log = logging.getLogger(__name__)

MONOLITHIC = "monolithic"
TWO_STAGE = "two_stage"
PROFIT_TOL = 1e-6


class InfeasibleModelError(ValueError):
    """The instance cannot produce a feasible schedule (detected before solving)."""


class ProfitMismatchError(AssertionError):
    """Recomputed profit disagrees with the solver objective."""


def unit_var(role: str, c: int, u: int, t: int) -> str:
    return f"{role}[c{c},u{u},t{t}]"


def ev_var(role: str, ev_id: str, c: int, t: int | None = None) -> str:
    if t is None:
        return f"{role}[{ev_id},c{c}]"
    return f"{role}[{ev_id},c{c},t{t}]"


class VariableIndex:
    """Two-way map between ``(role, *indices)`` keys and model variable names."""

    def __init__(self, num_communities: int, units_per_community: int, horizon: int,
                 evs: Sequence[EvScenario]):
        self.num_communities = num_communities
        self.units_per_community = units_per_community
        self.horizon = horizon
        self.evs = tuple(evs)
        self._by_key: dict[tuple, str] = {}
        self._by_name: dict[str, tuple] = {}

    def add(self, key: tuple, name: str) -> str:
        if key in self._by_key or name in self._by_name:
            raise KeyError(f"duplicate index entry {key} / {name}")
        self._by_key[key] = name
        self._by_name[name] = key
        return name

    def name(self, role: str, *idx) -> str | None:
        return self._by_key.get((role, *idx))

    def key(self, name: str) -> tuple:
        return self._by_name[name]

    def value(self, values: Mapping[str, float], role: str, *idx) -> float:
        name = self._by_key.get((role, *idx))
        if name is None:
            return 0.0
        return float(values.get(name, 0.0))

    def unit_array(self, values: Mapping[str, float], role: str) -> np.ndarray:
        C, U, T = self.num_communities, self.units_per_community, self.horizon
        out = np.zeros((C, U, T))
        for c in range(C):
            for u in range(U):
                for t in range(T):
                    out[c, u, t] = self.value(values, role, c, u, t)
        return out

    def ev_array(self, values: Mapping[str, float], role: str, ev_id: str) -> np.ndarray:
        out = np.zeros((self.num_communities, self.horizon))
        for c in range(self.num_communities):
            for t in range(self.horizon):
                out[c, t] = self.value(values, role, ev_id, c, t)
        return out

    def __len__(self) -> int:
        return len(self._by_key)

    def __iter__(self):
        return iter(self._by_key.items())


# model construction ----------------------------------------------------------

def check_evs(instance: Instance, evs: Iterable[EvScenario]) -> None:
    seen = set()
    for ev in evs:
        if ev.id in seen:
            raise InfeasibleModelError(f"duplicate EV id {ev.id!r}")
        seen.add(ev.id)
        problems = ev.violations(instance.horizon)
        if problems:
            raise InfeasibleModelError("; ".join(str(p) for p in problems))


def build_model(instance: Instance, evs: Sequence[EvScenario] | None = None,
                assignment: Mapping[str, int | None] | None = None) -> tuple[MilpModel, VariableIndex]:
    """Build the scheduling MILP.

    ``assignment`` optionally pins each EV (by id) to a community or to
    ``None`` (not hosted); only the pinned hosting variables are created and
    they are fixed to 1. Without it every EV may go to any community.
    """
    evs = tuple(instance.evs if evs is None else evs)
    check_evs(instance, evs)
    C, U, T = instance.num_communities, instance.units_per_community, instance.horizon
    pr = instance.prices
    model = MilpModel(f"p2p_{C}x{U}x{T}")
    index = VariableIndex(C, U, T, evs)

    hosts: dict[str, list[int]] = {}
    for ev in evs:
        if assignment is None:
            hosts[ev.id] = list(range(C))
        else:
            c = assignment.get(ev.id)
            hosts[ev.id] = [] if c is None else [int(c)]
            if c is not None and not 0 <= int(c) < C:
                raise ValueError(f"EV {ev.id} assigned to unknown community {c}")

    # which EVs can sit at community c in hour t
    present: dict[tuple[int, int], list[EvScenario]] = {}
    for ev in evs:
        for c in hosts[ev.id]:
            for t in ev.hours:
                present.setdefault((c, t), []).append(ev)

    def var(key, name, kind="continuous", lb=0.0, ub=math.inf):
        index.add(key, name)
        return model.add_var(name, BINARY if kind == BINARY else "continuous", lb, ub)

    obj: dict[int, float] = {}
    constant = 0.0

    # guest EV variables first so unit rows can reference them
    ev_cols: dict[tuple[str, int, int], dict[str, int]] = {}
    for ev in evs:
        w = ev.weight
        vev_cols = []
        for c in hosts[ev.id]:
            lb = 1.0 if assignment is not None else 0.0
            vev = var(("VEV", ev.id, c), ev_var("VEV", ev.id, c), BINARY, lb, 1.0)
            vev_cols.append(vev)
            prev_soc = None
            for t in ev.hours:
                crowded = len(present[(c, t)]) > 1
                ulb = 1.0 if assignment is not None and not crowded else 0.0
                cols = {
                    "UEV": var(("UEV", ev.id, c, t), ev_var("UEV", ev.id, c, t), BINARY, ulb, 1.0),
                    "CHEV": var(("CHEV", ev.id, c, t), ev_var("CHEV", ev.id, c, t), ub=ev.max_charge_rate),
                    "DCHEV": var(("DCHEV", ev.id, c, t), ev_var("DCHEV", ev.id, c, t), ub=ev.max_discharge_rate),
                    "SOC": var(("SOC", ev.id, c, t), ev_var("SOC", ev.id, c, t), ub=ev.capacity),
                }
                ev_cols[(ev.id, c, t)] = cols
                obj[cols["UEV"]] = w * pr.parking_fee[t]
                obj[cols["CHEV"]] = w * pr.ev_charge_price[t]
                obj[cols["DCHEV"]] = -w * pr.ev_discharge_price[t]
                tag = f"[{ev.id},c{c},t{t}]"
                model.add_constraint(f"ev_charge_gate{tag}",
                                     {cols["CHEV"]: 1.0, cols["UEV"]: -ev.max_charge_rate}, LE, 0.0)
                model.add_constraint(f"ev_discharge_gate{tag}",
                                     {cols["DCHEV"]: 1.0, cols["UEV"]: -ev.max_discharge_rate}, LE, 0.0)
                model.add_constraint(f"ev_window{tag}", {cols["UEV"]: 1.0, vev: -1.0}, LE, 0.0)
                dyn = {cols["SOC"]: 1.0, cols["CHEV"]: -ev.charge_efficiency,
                       cols["DCHEV"]: 1.0 / ev.discharge_efficiency}
                if prev_soc is None:
                    dyn[vev] = -ev.arrival_soc * ev.capacity
                else:
                    dyn[prev_soc] = -1.0
                model.add_constraint(f"ev_soc{tag}", dyn, EQ, 0.0)
                prev_soc = cols["SOC"]
            model.add_constraint(f"ev_departure[{ev.id},c{c}]",
                                 {prev_soc: 1.0, vev: -ev.target_soc * ev.capacity}, GE, 0.0)
        if len(vev_cols) > 1:
            model.add_constraint(f"ev_one_host[{ev.id}]", {j: 1.0 for j in vev_cols}, LE, 1.0)
        if len(hosts[ev.id]) > 1:
            for t in ev.hours:
                model.add_constraint(f"ev_one_place[{ev.id},t{t}]",
                                     {ev_cols[(ev.id, c, t)]["UEV"]: 1.0 for c in hosts[ev.id]}, LE, 1.0)
    # the rows above give each EV one host; each community also takes at
    # most one guest per day
    for c in range(C):
        vevs = [model.index_of(ev_var("VEV", ev.id, c)) for ev in evs if c in hosts[ev.id]]
        if len(vevs) > 1:
            model.add_constraint(f"ev_one_per_day[c{c}]", {j: 1.0 for j in vevs}, LE, 1.0)
    for (c, t), group in sorted(present.items()):
        if len(group) > 1:
            model.add_constraint(f"ev_one_guest[c{c},t{t}]",
                                 {ev_cols[(ev.id, c, t)]["UEV"]: 1.0 for ev in group}, LE, 1.0)

    # building units
    sell_p2p: dict[int, list[int]] = {t: [] for t in range(T)}
    buy_p2p: dict[int, list[int]] = {t: [] for t in range(T)}
    for c in range(C):
        for t in range(T):
            guests = present.get((c, t), [])
            charge_share = {ev_cols[(ev.id, c, t)]["CHEV"]: 1.0 / U for ev in guests}
            discharged = {ev_cols[(ev.id, c, t)]["DCHEV"]: 1.0 for ev in guests}
            # any unit may route the discharged energy; the shares add up to the total
            split = guests and U > 1
            shares = []
            dmax = sum(ev.max_discharge_rate for ev in guests)
            g = pr.grid_price[t]
            for u in range(U):
                prof = instance.profiles[c][u]
                uid = float(prof.uninterruptible_load[t])
                idl = float(prof.interruptible_load[t])
                pv = float(prof.pv_generation[t])
                call = float(prof.dr_callable[t])
                v_lb, v_ub = _gate_bounds(pv + dmax, idl, sell_value=1.0)
                r_lb, r_ub = _gate_bounds(pv, idl, sell_value=0.0)

                def uv(role, kind="continuous", lb=0.0, ub=math.inf):
                    return var((role, c, u, t), unit_var(role, c, u, t), kind, lb, ub)

                # only zero bounds are stated, so empty units vanish; finite ones slow the search
                pt2g = uv("PT2G", ub=_zero_cap(pv + dmax))
                ptfg = uv("PTFG", ub=_zero_cap(uid + idl + (1.0 if guests else 0.0)))
                ptuid = uv("PTUIDFG", ub=_zero_cap(uid + (1.0 if guests else 0.0)))
                ptid = uv("PTIDFG", ub=_zero_cap(idl))
                dr = uv("DR", ub=call if min(pv, idl) > 0 else 0.0)  # the callable cap lives in the bound
                ss = uv("SelfSupply", ub=_zero_cap(min(pv, idl)))
                sell = uv("PT2P2P", ub=_zero_cap(pv))
                buy = uv("PTFP2P", ub=_zero_cap(idl))
                ens = uv("ENS", ub=_zero_cap(idl))
                if split:
                    shares.append(uv(SHARE_ROLE, ub=dmax))
                    discharge_share = {shares[-1]: 1.0}
                else:
                    discharge_share = discharged
                v = uv("v", BINARY, v_lb, v_ub)
                r = uv("r", BINARY, r_lb, r_ub)
                sell_p2p[t].append(sell)
                buy_p2p[t].append(buy)

                p2p = pr.p2p_price[c, t]
                swv = pr.social_welfare_value[t]
                fine = pr.dr_fine[t]
                obj[pt2g] = g
                obj[ptfg] = -g
                obj[dr] = pr.dr_incentive[t] + fine
                obj[sell] = p2p + swv
                obj[buy] = -p2p
                obj[ss] = swv
                obj[ens] = -pr.ens_price[t]
                constant += pr.standby_payment[t] - call * fine

                tag = f"[c{c},u{u},t{t}]"
                model.add_constraint(f"ens_balance{tag}", {ens: 1.0, ss: 1.0, dr: 1.0, ptid: 1.0, buy: 1.0}, EQ, idl)
                model.add_constraint(f"self_supply_cap{tag}", {ss: 1.0, dr: 1.0}, LE, pv)
                model.add_constraint(f"uid_purchase{tag}", {ptuid: 1.0, **_neg(charge_share)}, EQ, uid)
                model.add_constraint(f"id_purchase_gate{tag}", {ptid: 1.0, v: idl}, LE, idl)
                model.add_constraint(f"grid_purchase{tag}", {ptfg: 1.0, ptuid: -1.0, ptid: -1.0}, EQ, 0.0)
                model.add_constraint(f"export_gate{tag}", {pt2g: 1.0, v: -pv, **_neg(discharge_share)}, LE, 0.0)
                if dmax > 0:
                    model.add_constraint(f"export_gate_on{tag}", {pt2g: 1.0, v: -(pv + dmax)}, LE, 0.0)
                # PV-backed DR draws on the same PV budget as every other outlet
                model.add_constraint(f"pv_balance{tag}",
                                     {ss: 1.0, dr: 1.0, pt2g: 1.0, sell: 1.0, **_neg(discharge_share)}, LE, pv)
                model.add_constraint(f"dr_residual{tag}", {dr: 1.0, ss: 1.0}, LE, idl)
                model.add_constraint(f"p2p_sell_cap{tag}", {sell: 1.0, ss: 1.0}, LE, pv)
                model.add_constraint(f"p2p_buy_cap{tag}", {buy: 1.0, ss: 1.0, dr: 1.0}, LE, idl)
                model.add_constraint(f"p2p_sell_gate{tag}", {sell: 1.0, r: pv}, LE, pv)
                model.add_constraint(f"p2p_buy_gate{tag}", {buy: 1.0, r: -idl}, LE, 0.0)
                # Tightening rows, redundant for integral v and r: on the side a binary
                # closes, self-supply plus DR is capped by the smaller of PV and ID.
                if idl > pv:
                    model.add_constraint(f"p2p_buy_tight{tag}", {buy: 1.0, ss: 1.0, dr: 1.0, r: pv - idl}, LE, pv)
                    model.add_constraint(f"id_purchase_tight{tag}",
                                         {ptid: 1.0, ss: 1.0, dr: 1.0, v: idl - pv}, LE, idl)
                if pv > idl:
                    model.add_constraint(f"p2p_sell_tight{tag}", {sell: 1.0, ss: 1.0, r: pv - idl}, LE, pv)
                    model.add_constraint(f"export_tight{tag}",
                                         {pt2g: 1.0, ss: 1.0, v: idl - pv, **_neg(discharge_share)}, LE, idl)
            if split:
                model.add_constraint(f"ev_discharge_split[c{c},t{t}]",
                                     {**{j: 1.0 for j in shares}, **_neg(discharged)}, EQ, 0.0)
    for t in range(T):
        terms = {j: 1.0 for j in sell_p2p[t]}
        terms.update({j: -1.0 for j in buy_p2p[t]})
        model.add_constraint(f"p2p_balance[t{t}]", terms, EQ, 0.0)

    model.set_objective(obj, constant)
    return model, index


def _neg(terms: Mapping[int, float]) -> dict[int, float]:
    return {j: -a for j, a in terms.items()}


def _zero_cap(implied: float) -> float:
    return 0.0 if implied <= 0.0 else math.inf


def _gate_bounds(supply: float, demand: float, sell_value: float) -> tuple[float, float]:
    """Bounds for a binary choosing between selling and buying.

    ``sell_value`` is the binary's value that opens the selling side. When
    one side has nothing to trade the other setting dominates, so the binary
    is fixed; with neither side active it is fixed to 0.
    """
    if supply <= 0 and demand <= 0:
        return 0.0, 0.0
    if supply <= 0:
        return (1.0 - sell_value,) * 2
    if demand <= 0:
        return (sell_value,) * 2
    return 0.0, 1.0


# profit evaluation -------------------------------------------------------------

@dataclass
class ProfitBreakdown:
    """Dollar amounts per revenue category. ``ens_penalty`` is a magnitude that is subtracted."""

    grid: float = 0.0
    dr: float = 0.0
    p2p: float = 0.0
    social_welfare: float = 0.0
    parking: float = 0.0
    standby: float = 0.0
    ens_penalty: float = 0.0
    ev_exchange: float = 0.0

    @property
    def total(self) -> float:
        return (self.grid + self.dr + self.p2p + self.social_welfare + self.parking + self.standby
                - self.ens_penalty + self.ev_exchange)

    def scaled(self, w: float) -> "ProfitBreakdown":
        return ProfitBreakdown(**{f.name: w * getattr(self, f.name) for f in fields(self)})

    def __add__(self, other: "ProfitBreakdown") -> "ProfitBreakdown":
        return ProfitBreakdown(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def to_dict(self) -> dict[str, float]:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["total"] = self.total
        return out

    @classmethod
    def from_dict(cls, doc: Mapping[str, float]) -> "ProfitBreakdown":
        return cls(**{f.name: float(doc[f.name]) for f in fields(cls)})


@dataclass
class ProfitReport:
    aggregate: ProfitBreakdown
    per_unit: dict[tuple[int, int], ProfitBreakdown]


def evaluate_profit(solution: Solution, instance: Instance, index: VariableIndex,
                    check: bool = True) -> ProfitReport:
    """Recompute every revenue term from the variable values.

    Community-level guest-EV income (parking and energy exchange) is split
    equally over the community's units. With ``check`` the aggregate total
    must match ``solution.objective`` within 1e-6.
    """
    if not solution.values:
        raise ValueError(f"solution with status {solution.status!r} carries no values")
    vals = solution.values
    pr = instance.prices
    C, U, T = instance.num_communities, instance.units_per_community, instance.horizon
    arr = {role: index.unit_array(vals, role) for role in UNIT_ROLES if role not in ("v", "r")}
    call = instance.stacked("dr_callable")
    g = pr.grid_price
    grid = ((arr["PT2G"] - arr["PTFG"]) * g).sum(axis=2)
    dr = (arr["DR"] * pr.dr_incentive + (arr["DR"] - call) * pr.dr_fine).sum(axis=2)
    p2p = ((arr["PT2P2P"] - arr["PTFP2P"]) * pr.p2p_price[:, None, :]).sum(axis=2)
    sw = ((arr["SelfSupply"] + arr["PT2P2P"]) * pr.social_welfare_value).sum(axis=2)
    standby = np.full((C, U), pr.standby_payment.sum())
    ens = (arr["ENS"] * pr.ens_price).sum(axis=2)

    parking_c = np.zeros(C)
    ev_c = np.zeros(C)
    for ev in index.evs:
        uev = index.ev_array(vals, "UEV", ev.id)
        ch = index.ev_array(vals, "CHEV", ev.id)
        dch = index.ev_array(vals, "DCHEV", ev.id)
        parking_c += ev.weight * (uev * pr.parking_fee).sum(axis=1)
        ev_c += ev.weight * (ch * pr.ev_charge_price - dch * pr.ev_discharge_price).sum(axis=1)

    per_unit = {}
    for c in range(C):
        for u in range(U):
            per_unit[(c, u)] = ProfitBreakdown(
                grid=float(grid[c, u]), dr=float(dr[c, u]), p2p=float(p2p[c, u]),
                social_welfare=float(sw[c, u]), parking=float(parking_c[c] / U), standby=float(standby[c, u]),
                ens_penalty=float(ens[c, u]), ev_exchange=float(ev_c[c] / U))
    aggregate = ProfitBreakdown(
        grid=float(grid.sum()), dr=float(dr.sum()), p2p=float(p2p.sum()), social_welfare=float(sw.sum()),
        parking=float(parking_c.sum()), standby=float(standby.sum()), ens_penalty=float(ens.sum()),
        ev_exchange=float(ev_c.sum()))
    if check and not math.isnan(solution.objective) and abs(aggregate.total - solution.objective) > PROFIT_TOL:
        raise ProfitMismatchError(
            f"recomputed total {aggregate.total:.9f} differs from objective {solution.objective:.9f}")
    return ProfitReport(aggregate, per_unit)


# solve strategies ------------------------------------------------------------------

def _assignments(evs: Sequence[EvScenario], C: int):
    """Every hosting pattern with at most one guest per community."""
    choices = [None] + list(range(C))
    for combo in itertools.product(choices, repeat=len(evs)):
        used = [c for c in combo if c is not None]
        if len(used) == len(set(used)):
            yield {ev.id: c for ev, c in zip(evs, combo)}


def fix_assignment_and_solve(instance: Instance, evs: Sequence[EvScenario] | None = None,
                             strategy: str = TWO_STAGE, options: SolverOptions | None = None,
                             cache: dict | None = None) -> Solution:
    """Solve the scheduling model.

    ``monolithic`` hands the whole model to branch-and-bound. ``two_stage``
    enumerates every EV-to-community hosting pattern, solves each pinned
    model and keeps the best; the returned values are expressed over the
    full model's variable names (unused guest-EV variables are 0).
    """
    evs = tuple(instance.evs if evs is None else evs)
    options = options or instance.options
    if strategy == MONOLITHIC:
        model, _ = build_model(instance, evs)
        sol = solve_milp(model, options, cache=cache)
        sol.info["strategy"] = MONOLITHIC
        return sol
    if strategy != TWO_STAGE:
        raise ValueError(f"unknown strategy {strategy!r}")

    check_evs(instance, evs)
    full_model, full = build_model(instance, evs)
    cache = {} if cache is None else cache
    deadline = time.monotonic() + options.time_budget
    nodes = 0

    # LP bounds first: assignments are solved best bound first and skipped once
    # their bound cannot beat the incumbent by more than the gap tolerance
    staged = []
    for k, assign in enumerate(_assignments(evs, instance.num_communities)):
        model, _ = build_model(instance, evs, assign)
        relax = solve_lp(model, replace(options, time_budget=max(deadline - time.monotonic(), 1e-3)),
                         cache=cache)
        nodes += relax.node_count
        if relax.status == TIME_LIMIT:
            break
        if relax.status == OPTIMAL:
            staged.append((-relax.objective, k, assign, model))
    staged.sort(key=lambda item: (item[0], item[1]))

    best: Solution | None = None
    best_assign = None
    bound = -math.inf
    timed_out = len(staged) == 0 and time.monotonic() > deadline
    for pos, (neg_lp, _, assign, model) in enumerate(staged):
        lp_bound = -neg_lp
        if best is not None and lp_bound <= best.objective + options.abs_gap:
            bound = max(bound, lp_bound)
            break
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            timed_out = True
            bound = max(bound, lp_bound)
            break
        sol = solve_milp(model, replace(options, time_budget=remaining), cache=cache)
        nodes += sol.node_count
        log.debug("assignment %s: lp %.6f milp %s %.6f (%d nodes)", assign, lp_bound, sol.status,
                  sol.objective, sol.node_count)
        if sol.status == TIME_LIMIT:
            timed_out = True
        if sol.values and not math.isnan(sol.objective):
            bound = max(bound, sol.bound if not math.isnan(sol.bound) else sol.objective)
            if best is None or sol.objective > best.objective + 1e-9:
                best, best_assign = sol, assign
        if timed_out:
            if pos + 1 < len(staged):
                bound = max(bound, -staged[pos + 1][0])
            break

    if best is None:
        status = TIME_LIMIT if timed_out else "infeasible"
        return Solution(status, {}, math.nan, nodes, math.nan, info={"strategy": TWO_STAGE})
    values = {name: 0.0 for _, name in full}
    values.update(best.values)
    # gates fixed in the full model keep their fixed value; a pinned model may
    # fix the same idle gate the other way when no guest can reach it
    for var in full_model.variables:
        if var.lb == var.ub:
            values[var.name] = var.lb
    gap = max(bound - best.objective, 0.0)
    status = TIME_LIMIT if timed_out else OPTIMAL
    return Solution(status, values, best.objective, nodes, gap, best.objective + gap,
                    info={"strategy": TWO_STAGE, "assignment": best_assign})


# scenario handling -------------------------------------------------------------

PER_SCENARIO = "per_scenario"
JOINT = "joint"


@dataclass
class ScenarioOutcome:
    weight: float
    evs: tuple[EvScenario, ...]
    solution: Solution
    index: VariableIndex
    profit: ProfitReport | None


def solve_scenarios(instance: Instance, representatives: Sequence[EvScenario] | None,
                    strategy: str = TWO_STAGE, aggregation: str = PER_SCENARIO,
                    options: SolverOptions | None = None, threads: int = 1) -> list[ScenarioOutcome]:
    """Solve one model per weighted representative (or one joint model).

    ``per_scenario`` hosts each representative alone, at weight 1 inside its
    model, and the outcomes carry the representative weights for taking
    expectations. ``joint`` treats all representatives as the day's guest
    fleet in a single model. Without representatives the instance's own
    EVs are used.
    """
    options = options or instance.options
    if not representatives:
        runs = [(1.0, tuple(instance.evs))]
    elif aggregation == PER_SCENARIO:
        runs = [(rep.weight, (replace(rep, weight=1.0),)) for rep in representatives]
    elif aggregation == JOINT:
        runs = [(1.0, tuple(replace(rep, weight=1.0) for rep in representatives))]
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    cache: dict = {}

    def one(run):
        weight, evs = run
        sol = fix_assignment_and_solve(instance, evs, strategy, options, cache=cache)
        _, index = build_model(instance, evs)
        profit = evaluate_profit(sol, instance, index) if sol.values else None
        return ScenarioOutcome(weight, evs, sol, index, profit)

    if threads > 1 and len(runs) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, runs))
    return [one(run) for run in runs]
