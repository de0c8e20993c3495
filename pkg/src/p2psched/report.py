"""Profit ledger, grid-exchange series and the machine-readable run artifacts."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .milp import Solution
from .model import EvScenario, Instance
from .scheduler import ProfitBreakdown, VariableIndex

# (breakdown field, ledger label) in ledger order; "total" closes the table
LEDGER_ROWS = (
    ("grid", "Total Profit from Grid"),
    ("dr", "Total Profit from DR Programs"),
    ("p2p", "Total Profit from P2P Trading"),
    ("parking", "Total Profit from Parking Hosting"),
    ("ev_exchange", "Total Profit of EVs Power Exchange"),
    ("social_welfare", "Total Social Welfare Profit of Customers"),
    ("standby", "Total Profit of Customers Stand-by"),
    ("ens_penalty", "Total Penalty for Energy Not Supplied"),
    ("total", "Total Profit ($)"),
)
LABELS = dict(LEDGER_ROWS)
PROFITS_HEADER = ("category", "amount_usd")
EXCHANGE_HEADER = ("hour", "sold_kwh", "bought_kwh", "net_kwh")
WEIGHT_TOL = 1e-9


class ArtifactError(ValueError):
    """Raised when an emitted artifact cannot be parsed back."""


@dataclass(frozen=True)
class LedgerRow:
    key: str
    category: str
    amount: float


def profit_table(items: Sequence[tuple[float, ProfitBreakdown]]) -> list[LedgerRow]:
    """Expected ledger over weighted breakdowns.

    The penalty row holds a positive magnitude; the total subtracts it.
    """
    if not items:
        raise ValueError("profit_table needs at least one breakdown")
    total_w = sum(w for w, _ in items)
    if abs(total_w - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights sum to {total_w}, expected 1")
    expected = ProfitBreakdown()
    for w, b in items:
        expected = expected + b.scaled(w)
    rows = [LedgerRow(key, label, float(getattr(expected, key))) for key, label in LEDGER_ROWS[:-1]]
    rows.append(LedgerRow("total", LABELS["total"], expected.total))
    return rows


def ledger_total(rows: Sequence[LedgerRow]) -> float:
    """Sum of the category rows with the penalty subtracted."""
    return sum(-r.amount if r.key == "ens_penalty" else r.amount for r in rows if r.key != "total")


def format_table(rows: Sequence[LedgerRow]) -> str:
    width = max(len(r.category) for r in rows)
    lines = [f"{'Profit':<{width}}  Amount ($)", "-" * (width + 12)]
    for r in rows:
        if r.key == "total":
            lines.append("-" * (width + 12))
        amount = 0.0 if abs(r.amount) < 0.005 else r.amount
        lines.append(f"{r.category:<{width}}  {amount:+.2f}")
    return "\n".join(lines)


def write_profits_csv(rows: Sequence[LedgerRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFITS_HEADER)
        for r in rows:
            w.writerow([r.category, repr(float(r.amount))])


def read_profits_csv(path: str | Path) -> list[LedgerRow]:
    by_label = {label: key for key, label in LEDGER_ROWS}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != PROFITS_HEADER:
            raise ArtifactError(f"{path}:1: expected header {','.join(PROFITS_HEADER)}")
        rows = []
        for line, row in enumerate(reader, start=2):
            if len(row) != 2 or row[0] not in by_label:
                raise ArtifactError(f"{path}:{line}: unexpected row {row}")
            rows.append(LedgerRow(by_label[row[0]], row[0], float(row[1])))
    if [r.key for r in rows] != [k for k, _ in LEDGER_ROWS]:
        raise ArtifactError(f"{path}: categories out of order or missing")
    return rows


# grid exchange -------------------------------------------------------------------

@dataclass
class ExchangeSeries:
    """Hourly energy sold to and bought from the grid, system-wide and per community."""

    sold: np.ndarray
    bought: np.ndarray
    community_sold: np.ndarray
    community_bought: np.ndarray

    @property
    def net(self) -> np.ndarray:
        return self.sold - self.bought

    @property
    def community_net(self) -> np.ndarray:
        return self.community_sold - self.community_bought

    def scaled(self, w: float) -> "ExchangeSeries":
        return ExchangeSeries(w * self.sold, w * self.bought, w * self.community_sold, w * self.community_bought)

    def __add__(self, other: "ExchangeSeries") -> "ExchangeSeries":
        return ExchangeSeries(self.sold + other.sold, self.bought + other.bought,
                              self.community_sold + other.community_sold,
                              self.community_bought + other.community_bought)

    def to_dict(self) -> dict[str, Any]:
        return {
            "sold_kwh": self.sold.tolist(),
            "bought_kwh": self.bought.tolist(),
            "community_sold_kwh": self.community_sold.tolist(),
            "community_bought_kwh": self.community_bought.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExchangeSeries":
        return cls(np.array(doc["sold_kwh"], dtype=float), np.array(doc["bought_kwh"], dtype=float),
                   np.array(doc["community_sold_kwh"], dtype=float).reshape(-1, len(doc["sold_kwh"])),
                   np.array(doc["community_bought_kwh"], dtype=float).reshape(-1, len(doc["sold_kwh"])))


def exchange_series(solution: Solution, index: VariableIndex, instance: Instance) -> ExchangeSeries:
    sold = index.unit_array(solution.values, "PT2G").sum(axis=1)
    bought = index.unit_array(solution.values, "PTFG").sum(axis=1)
    # solver noise can leave -1e-12 on a zero-bounded flow
    sold = np.maximum(sold, 0.0)
    bought = np.maximum(bought, 0.0)
    return ExchangeSeries(sold.sum(axis=0), bought.sum(axis=0), sold, bought)


def expected_series(items: Sequence[tuple[float, ExchangeSeries]]) -> ExchangeSeries:
    out = items[0][1].scaled(items[0][0])
    for w, s in items[1:]:
        out = out + s.scaled(w)
    return out


def _write_exchange(path: Path, sold: np.ndarray, bought: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EXCHANGE_HEADER)
        for t, (s, b) in enumerate(zip(sold, bought)):
            w.writerow([t, repr(float(s)), repr(float(b)), repr(float(s - b))])


def write_exchange_csv(series: ExchangeSeries, out_dir: str | Path) -> list[Path]:
    """Write ``exchange.csv`` and one ``exchange_c<k>.csv`` per community (k from 0)."""
    out_dir = Path(out_dir)
    paths = [out_dir / "exchange.csv"]
    _write_exchange(paths[0], series.sold, series.bought)
    for k in range(series.community_sold.shape[0]):
        p = out_dir / f"exchange_c{k}.csv"
        _write_exchange(p, series.community_sold[k], series.community_bought[k])
        paths.append(p)
    return paths


def read_exchange_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(sold, bought)``; the net column must equal their difference."""
    sold, bought = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != EXCHANGE_HEADER:
            raise ArtifactError(f"{path}:1: expected header {','.join(EXCHANGE_HEADER)}")
        for line, row in enumerate(reader, start=2):
            try:
                hour, s, b, n = int(row[0]), float(row[1]), float(row[2]), float(row[3])
            except (ValueError, IndexError):
                raise ArtifactError(f"{path}:{line}: malformed row {row}") from None
            if hour != len(sold):
                raise ArtifactError(f"{path}:{line}: expected hour {len(sold)}, got {hour}")
            if n != s - b:
                raise ArtifactError(f"{path}:{line}: net {n} != sold - bought")
            sold.append(s)
            bought.append(b)
    return np.array(sold), np.array(bought)


# solution document -----------------------------------------------------------

def _enc(x: float) -> float | str:
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _dec(x) -> float:
    return float(x)


@dataclass
class RunRecord:
    """One solved model: a representative (or the joint fleet) and its optimum."""

    weight: float
    evs: list[EvScenario]
    status: str
    objective: float
    gap: float
    assignment: dict[str, int | None]
    values: dict[str, float]
    breakdown: ProfitBreakdown | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "weight": self.weight,
            "evs": [ev.to_dict() for ev in self.evs],
            "status": self.status,
            "objective": _enc(self.objective),
            "gap": _enc(self.gap),
            "assignment": dict(sorted(self.assignment.items())),
            "ledger": None if self.breakdown is None else self.breakdown.to_dict(),
            "values": {k: self.values[k] for k in sorted(self.values)},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunRecord":
        ledger = doc["ledger"]
        return cls(float(doc["weight"]), [EvScenario(**ev) for ev in doc["evs"]], doc["status"],
                   _dec(doc["objective"]), _dec(doc["gap"]), dict(doc["assignment"]),
                   {k: float(v) for k, v in doc["values"].items()},
                   None if ledger is None else ProfitBreakdown.from_dict(ledger))


@dataclass
class RunReport:
    status: str
    objective: float
    gap: float
    strategy: str
    aggregation: str
    ledger: list[LedgerRow]
    series: ExchangeSeries
    runs: list[RunRecord] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "objective": _enc(self.objective),
            "gap": _enc(self.gap),
            "strategy": self.strategy,
            "aggregation": self.aggregation,
            "ledger": [{"key": r.key, "category": r.category, "amount_usd": r.amount} for r in self.ledger],
            "series": self.series.to_dict(),
            "runs": [r.to_dict() for r in self.runs],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        try:
            ledger = [LedgerRow(r["key"], r["category"], float(r["amount_usd"])) for r in doc["ledger"]]
            return cls(doc["status"], _dec(doc["objective"]), _dec(doc["gap"]), doc["strategy"],
                       doc["aggregation"], ledger, ExchangeSeries.from_dict(doc["series"]),
                       [RunRecord.from_dict(r) for r in doc["runs"]])
        except (KeyError, TypeError) as exc:
            raise ArtifactError(f"malformed solution document: {exc!r}") from None


def dumps_report(report: RunReport) -> str:
    return json.dumps(report.to_dict(), indent=1, allow_nan=False) + "\n"


def write_solution_json(report: RunReport, path: str | Path) -> None:
    Path(path).write_text(dumps_report(report))


def read_solution_json(path: str | Path) -> RunReport:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return RunReport.from_dict(doc)
