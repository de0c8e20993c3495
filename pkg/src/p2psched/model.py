"""Problem instances: prices, unit profiles, guest EVs, validation and file I/O.

All quantities are hourly. Power and energy share one unit (kWh per hour),
so a value of 2.0 in a load profile means 2 kWh consumed during that hour.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .milp import SolverOptions

DEFAULT_HORIZON = 24
DEFAULT_SWV = 0.055
DEFAULT_PARKING_FEE = 1.0
DEFAULT_STANDBY = 0.1
ENS_MARKUP = 1.1
EV_CAPACITY = 25.0
EV_TARGET_SOC = 0.9
EV_MAX_RATE = 7.0


class InstanceError(ValueError):
    """Base class for instance loading problems."""


class InstanceFormatError(InstanceError):
    """The file could not be parsed; the message carries the location."""


class InstanceValidationError(InstanceError):
    def __init__(self, violations: Sequence["Violation"]):
        self.violations = list(violations)
        lines = "\n  ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} invariant violation(s):\n  {lines}")


@dataclass(frozen=True)
class Violation:
    type: str
    index: str
    rule: str

    def __str__(self) -> str:
        return f"{self.type}[{self.index}]: {self.rule}"


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Hourly tariffs. ``p2p_price`` has one row per community."""

    grid_price: np.ndarray
    dr_incentive: np.ndarray
    dr_fine: np.ndarray
    p2p_price: np.ndarray
    ens_price: np.ndarray
    social_welfare_value: np.ndarray
    parking_fee: np.ndarray
    standby_payment: np.ndarray
    ev_charge_price: np.ndarray
    ev_discharge_price: np.ndarray

    SERIES = ("grid_price", "dr_incentive", "dr_fine", "ens_price", "social_welfare_value",
              "parking_fee", "standby_payment", "ev_charge_price", "ev_discharge_price")

    @classmethod
    def build(cls, horizon: int, num_communities: int, grid_price, *, dr_incentive=0.0, dr_fine=0.0,
              p2p_price=None, ens_price=None, social_welfare_value=DEFAULT_SWV,
              parking_fee=DEFAULT_PARKING_FEE, standby_payment=DEFAULT_STANDBY,
              ev_charge_price=None, ev_discharge_price=None) -> "PriceSeries":
        """Broadcast scalars to hourly series and apply the derived defaults.

        ENS is priced 10% above the grid price, guest-EV energy settles at
        the grid price and the P2P price falls back to the grid price.
        """
        T = horizon
        grid = _broadcast(grid_price, T, "grid_price")
        if p2p_price is None:
            p2p = np.tile(grid, (num_communities, 1))
        else:
            p2p = _broadcast_rows(p2p_price, num_communities, T, "p2p_price")
        return cls(
            grid_price=_frozen(grid),
            dr_incentive=_frozen(_broadcast(dr_incentive, T, "dr_incentive")),
            dr_fine=_frozen(_broadcast(dr_fine, T, "dr_fine")),
            p2p_price=_frozen(p2p),
            ens_price=_frozen(ENS_MARKUP * grid if ens_price is None else _broadcast(ens_price, T, "ens_price")),
            social_welfare_value=_frozen(_broadcast(social_welfare_value, T, "social_welfare_value")),
            parking_fee=_frozen(_broadcast(parking_fee, T, "parking_fee")),
            standby_payment=_frozen(_broadcast(standby_payment, T, "standby_payment")),
            ev_charge_price=_frozen(grid if ev_charge_price is None else _broadcast(ev_charge_price, T, "ev_charge_price")),
            ev_discharge_price=_frozen(grid if ev_discharge_price is None
                                       else _broadcast(ev_discharge_price, T, "ev_discharge_price")),
        )

    def to_dict(self) -> dict[str, Any]:
        out = {name: getattr(self, name).tolist() for name in self.SERIES}
        out["p2p_price"] = self.p2p_price.tolist()
        return out


@dataclass(frozen=True, eq=False)
class UnitProfile:
    uninterruptible_load: np.ndarray
    interruptible_load: np.ndarray
    pv_generation: np.ndarray
    dr_callable: np.ndarray

    FIELDS = ("uninterruptible_load", "interruptible_load", "pv_generation", "dr_callable")

    @classmethod
    def build(cls, horizon: int, uninterruptible_load=0.0, interruptible_load=0.0, pv_generation=0.0,
              dr_callable=None) -> "UnitProfile":
        idl = _broadcast(interruptible_load, horizon, "interruptible_load")
        call = idl if dr_callable is None else _broadcast(dr_callable, horizon, "dr_callable")
        return cls(_frozen(_broadcast(uninterruptible_load, horizon, "uninterruptible_load")), _frozen(idl),
                   _frozen(_broadcast(pv_generation, horizon, "pv_generation")), _frozen(call))

    def to_dict(self) -> dict[str, list[float]]:
        return {name: getattr(self, name).tolist() for name in self.FIELDS}


@dataclass(frozen=True)
class EvScenario:
    """One guest EV. It is connectable during hours ``arrival_hour <= t < departure_hour``."""

    id: str
    arrival_hour: int
    departure_hour: int
    arrival_soc: float
    capacity: float = EV_CAPACITY
    target_soc: float = EV_TARGET_SOC
    max_charge_rate: float = EV_MAX_RATE
    max_discharge_rate: float = EV_MAX_RATE
    weight: float = 1.0
    charge_efficiency: float = 1.0
    discharge_efficiency: float = 1.0

    def availability(self, horizon: int) -> np.ndarray:
        t = np.arange(horizon)
        return (t >= self.arrival_hour) & (t < self.departure_hour)

    @property
    def hours(self) -> range:
        return range(self.arrival_hour, self.departure_hour)

    @property
    def energy_needed(self) -> float:
        return max(self.target_soc - self.arrival_soc, 0.0) * self.capacity

    def can_reach_target(self) -> bool:
        reachable = (self.departure_hour - self.arrival_hour) * self.max_charge_rate * self.charge_efficiency
        return reachable >= self.energy_needed - 1e-9

    def violations(self, horizon: int) -> list[Violation]:
        out = []
        idx = self.id

        def bad(rule):
            out.append(Violation("EvScenario", idx, rule))

        if not (0 <= self.arrival_hour < self.departure_hour <= horizon):
            bad(f"need 0 <= arrival_hour < departure_hour <= {horizon}, got "
                f"arrival_hour={self.arrival_hour}, departure_hour={self.departure_hour}")
        if not (0.0 <= self.arrival_soc <= self.target_soc <= 1.0):
            bad(f"need 0 <= arrival_soc <= target_soc <= 1, got {self.arrival_soc}, {self.target_soc}")
        if not self.capacity > 0:
            bad("capacity must be positive")
        if self.max_charge_rate < 0 or self.max_discharge_rate < 0:
            bad("charge/discharge rates must be non-negative")
        if not (0 < self.charge_efficiency <= 1 and 0 < self.discharge_efficiency <= 1):
            bad("efficiencies must lie in (0, 1]")
        if not 0.0 <= self.weight <= 1.0:
            bad(f"weight {self.weight} outside [0, 1]")
        if not out and not self.can_reach_target():
            bad("window too short to reach target_soc at max_charge_rate")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class Instance:
    num_communities: int
    units_per_community: int
    horizon: int
    prices: PriceSeries
    profiles: tuple[tuple[UnitProfile, ...], ...]
    evs: tuple[EvScenario, ...] = ()
    options: SolverOptions = field(default_factory=SolverOptions)

    def profile(self, c: int, u: int) -> UnitProfile:
        return self.profiles[c][u]

    def with_evs(self, evs: Sequence[EvScenario]) -> "Instance":
        return replace(self, evs=tuple(evs))

    def stacked(self, name: str) -> np.ndarray:
        """Profile field as a (communities, units, hours) array."""
        return np.array([[getattr(p, name) for p in row] for row in self.profiles], dtype=float)

    def to_dict(self) -> dict[str, Any]:
        opts = self.options
        return {
            "meta": {"num_communities": self.num_communities, "units_per_community": self.units_per_community,
                     "horizon": self.horizon},
            "prices": self.prices.to_dict(),
            "communities": [{"units": [p.to_dict() for p in row]} for row in self.profiles],
            "evs": [ev.to_dict() for ev in self.evs],
            "options": {"abs_gap": opts.abs_gap, "feas_tol": opts.feas_tol, "int_tol": opts.int_tol,
                        "time_budget": opts.time_budget},
        }


# validation -------------------------------------------------------------

def validate(instance: Instance) -> list[Violation]:
    """Every broken invariant of ``instance``; an empty list means valid."""
    out: list[Violation] = []
    T = instance.horizon
    C, U = instance.num_communities, instance.units_per_community
    if T <= 0:
        out.append(Violation("Instance", "meta", "horizon must be positive"))
    if C <= 0 or U <= 0:
        out.append(Violation("Instance", "meta", "community and unit counts must be positive"))
    pr = instance.prices
    for name in PriceSeries.SERIES:
        arr = getattr(pr, name)
        if arr.shape != (T,):
            out.append(Violation("PriceSeries", name, f"length {arr.shape} != horizon {T}"))
        elif np.any(arr < 0) or not np.all(np.isfinite(arr)):
            out.append(Violation("PriceSeries", name, "prices must be finite and >= 0"))
    if pr.p2p_price.shape != (C, T):
        out.append(Violation("PriceSeries", "p2p_price", f"shape {pr.p2p_price.shape} != ({C}, {T})"))
    elif np.any(pr.p2p_price < 0):
        out.append(Violation("PriceSeries", "p2p_price", "prices must be >= 0"))

    if len(instance.profiles) != C or any(len(row) != U for row in instance.profiles):
        out.append(Violation("Instance", "profiles", f"profile matrix must be {C} x {U}"))
    else:
        for c, row in enumerate(instance.profiles):
            for u, prof in enumerate(row):
                where = f"c{c},u{u}"
                for name in UnitProfile.FIELDS:
                    arr = getattr(prof, name)
                    if arr.shape != (T,):
                        out.append(Violation("UnitProfile", where, f"{name} length {arr.shape} != {T}"))
                    elif np.any(arr < 0) or not np.all(np.isfinite(arr)):
                        hours = np.flatnonzero(~(arr >= 0)).tolist()
                        out.append(Violation("UnitProfile", where, f"{name} negative at hours {hours}"))
                if prof.dr_callable.shape == prof.interruptible_load.shape:
                    over = np.flatnonzero(prof.dr_callable > prof.interruptible_load + 1e-12)
                    if over.size:
                        out.append(Violation("UnitProfile", where,
                                             f"dr_callable exceeds interruptible_load at hours {over.tolist()}"))
    seen = set()
    for ev in instance.evs:
        if ev.id in seen:
            out.append(Violation("EvScenario", ev.id, "duplicate id"))
        seen.add(ev.id)
        out.extend(ev.violations(T))
    return out


# loading ----------------------------------------------------------------

def _broadcast(value, T: int, where: str) -> np.ndarray:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(T, float(value))
    if isinstance(value, np.ndarray) and value.ndim == 0:
        return np.full(T, float(value))
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise InstanceFormatError(f"{where}: expected a number or a list of {T} numbers") from None
    if arr.ndim != 1 or arr.size != T:
        raise InstanceFormatError(f"{where}: expected {T} values, got shape {arr.shape}")
    return arr


def _broadcast_rows(value, rows: int, T: int, where: str) -> np.ndarray:
    if isinstance(value, (list, tuple, np.ndarray)) and len(value) and isinstance(value[0], (list, tuple, np.ndarray)):
        if len(value) != rows:
            raise InstanceFormatError(f"{where}: expected {rows} per-community series, got {len(value)}")
        return np.array([_broadcast(v, T, f"{where}[{i}]") for i, v in enumerate(value)])
    return np.tile(_broadcast(value, T, where), (rows, 1))


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise InstanceFormatError(f"{where}: expected an object")
    if key not in obj:
        raise InstanceFormatError(f"{where}.{key}: missing required field")
    return obj[key]


def _int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
        raise InstanceFormatError(f"{where}: expected an integer, got {value!r}")
    return int(value)


def load_profile_csv(path: str | Path, horizon: int) -> UnitProfile:
    """Read a per-unit CSV with header ``hour,uid,id,pv,dr_callable`` (hours from 0)."""
    path = Path(path)
    cols = {k: np.zeros(horizon) for k in ("uid", "id", "pv")}
    call = np.full(horizon, np.nan)
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["hour", "uid", "id", "pv", "dr_callable"]
        if reader.fieldnames != expected:
            raise InstanceFormatError(f"{path}:1: header must be {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                t = int(row["hour"])
                if not 0 <= t < horizon or t in seen:
                    raise ValueError(f"hour {t} out of range or repeated")
                seen.add(t)
                for k in cols:
                    cols[k][t] = float(row[k])
                if row["dr_callable"] not in ("", None):
                    call[t] = float(row["dr_callable"])
            except (TypeError, ValueError) as exc:
                raise InstanceFormatError(f"{path}:{lineno}: {exc}") from None
    if len(seen) != horizon:
        missing = sorted(set(range(horizon)) - seen)
        raise InstanceFormatError(f"{path}: missing hours {missing}")
    call = np.where(np.isnan(call), cols["id"], call)
    return UnitProfile.build(horizon, cols["uid"], cols["id"], cols["pv"], call)


def write_profile_csv(profile: UnitProfile, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "uid", "id", "pv", "dr_callable"])
        for t in range(profile.interruptible_load.size):
            w.writerow([t, repr(float(profile.uninterruptible_load[t])), repr(float(profile.interruptible_load[t])),
                        repr(float(profile.pv_generation[t])), repr(float(profile.dr_callable[t]))])


_EV_KEYS = {f for f in EvScenario.__dataclass_fields__}


def parse_ev(obj: dict, where: str) -> EvScenario:
    if not isinstance(obj, dict):
        raise InstanceFormatError(f"{where}: expected an object")
    unknown = set(obj) - _EV_KEYS
    if unknown:
        raise InstanceFormatError(f"{where}: unknown field(s) {sorted(unknown)}")
    kw = dict(obj)
    kw["id"] = str(_require(obj, "id", where))
    kw["arrival_hour"] = _int(_require(obj, "arrival_hour", where), f"{where}.arrival_hour")
    kw["departure_hour"] = _int(_require(obj, "departure_hour", where), f"{where}.departure_hour")
    for key in _EV_KEYS - {"id", "arrival_hour", "departure_hour"}:
        if key in kw:
            if isinstance(kw[key], bool) or not isinstance(kw[key], (int, float)):
                raise InstanceFormatError(f"{where}.{key}: expected a number")
            kw[key] = float(kw[key])
    _require(obj, "arrival_soc", where)
    return EvScenario(**kw)


def instance_from_dict(doc: dict, base_dir: Path | None = None) -> Instance:
    meta = _require(doc, "meta", "$")
    C = _int(_require(meta, "num_communities", "meta"), "meta.num_communities")
    U = _int(_require(meta, "units_per_community", "meta"), "meta.units_per_community")
    T = _int(meta.get("horizon", DEFAULT_HORIZON), "meta.horizon")
    if C <= 0 or U <= 0 or T <= 0:
        raise InstanceFormatError("meta: counts and horizon must be positive")

    raw_prices = _require(doc, "prices", "$")
    if not isinstance(raw_prices, dict):
        raise InstanceFormatError("prices: expected an object")
    allowed = set(PriceSeries.SERIES) | {"p2p_price"}
    unknown = set(raw_prices) - allowed
    if unknown:
        raise InstanceFormatError(f"prices: unknown field(s) {sorted(unknown)}")
    kw = {k: v for k, v in raw_prices.items() if k != "grid_price"}
    prices = PriceSeries.build(T, C, _require(raw_prices, "grid_price", "prices"), **kw)

    comms = _require(doc, "communities", "$")
    if not isinstance(comms, list) or len(comms) != C:
        raise InstanceFormatError(f"communities: expected a list of {C} communities")
    profiles = []
    for c, comm in enumerate(comms):
        units = _require(comm, "units", f"communities[{c}]")
        if not isinstance(units, list) or len(units) != U:
            raise InstanceFormatError(f"communities[{c}].units: expected a list of {U} units")
        row = []
        for u, unit in enumerate(units):
            where = f"communities[{c}].units[{u}]"
            if not isinstance(unit, dict):
                raise InstanceFormatError(f"{where}: expected an object")
            if "profile_csv" in unit:
                path = Path(unit["profile_csv"])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                row.append(load_profile_csv(path, T))
                continue
            unknown = set(unit) - set(UnitProfile.FIELDS)
            if unknown:
                raise InstanceFormatError(f"{where}: unknown field(s) {sorted(unknown)}")
            try:
                row.append(UnitProfile.build(T, **{k: unit[k] for k in unit}))
            except InstanceFormatError as exc:
                raise InstanceFormatError(f"{where}.{exc}") from None
        profiles.append(tuple(row))

    evs = tuple(parse_ev(e, f"evs[{i}]") for i, e in enumerate(doc.get("evs", []) or []))
    opt_doc = doc.get("options", {}) or {}
    try:
        options = SolverOptions(**opt_doc)
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"options: {exc}") from None
    return Instance(C, U, T, prices, tuple(profiles), evs, options)


def load_instance(path: str | Path) -> Instance:
    """Parse and validate an instance file.

    Raises InstanceFormatError (with a ``file:line:column`` or field path)
    when the document is malformed, and InstanceValidationError listing
    every violated invariant otherwise.
    """
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        instance = instance_from_dict(doc, base_dir=path.parent)
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{path}: {exc}") from None
    violations = validate(instance)
    if violations:
        raise InstanceValidationError(violations)
    return instance


def save_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance.to_dict(), indent=1) + "\n")


def instances_equal(a: Instance, b: Instance) -> bool:
    return a.to_dict() == b.to_dict()
