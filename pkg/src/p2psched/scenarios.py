"""Guest-EV scenario sampling and K-means reduction to weighted medoids."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import (DEFAULT_HORIZON, EV_CAPACITY, EV_MAX_RATE, EV_TARGET_SOC, EvScenario,
                    InstanceFormatError)

SCENARIO_HEADER = ("id", "arrival", "departure", "soc", "capacity", "target", "weight")
MAX_LLOYD_ITERATIONS = 300
REJECTIONS_PER_DRAW = 1000


class DistributionInfeasibleError(ValueError):
    """Rejection sampling ran out of budget before collecting enough valid draws."""


@dataclass(frozen=True)
class EvDistribution:
    """Normal laws for arrival hour, departure hour and arrival state of charge."""

    arrival_mean: float = 9.0
    arrival_stddev: float = 1.5
    departure_mean: float = 17.0
    departure_stddev: float = 1.5
    soc_mean: float = 0.4
    soc_stddev: float = 0.1
    capacity: float = EV_CAPACITY
    target_soc: float = EV_TARGET_SOC
    max_charge_rate: float = EV_MAX_RATE
    horizon: int = DEFAULT_HORIZON
    seed: int = 0

    def __post_init__(self):
        for name in ("arrival_stddev", "departure_stddev", "soc_stddev"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("arrival_mean", "departure_mean"):
            if not 0 <= getattr(self, name) <= self.horizon:
                raise ValueError(f"{name} must lie within [0, {self.horizon}]")
        if not 0 < self.target_soc <= 1:
            raise ValueError("target_soc must lie in (0, 1]")
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")


def sample_scenarios(dist: EvDistribution, n: int, seed: int | None = None) -> list[EvScenario]:
    """Draw ``n`` valid scenarios; hours are rounded, invalid draws are redrawn.

    ``seed`` overrides ``dist.seed``. Each scenario carries weight ``1/n``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return []
    rng = np.random.default_rng(dist.seed if seed is None else seed)
    T = dist.horizon
    budget = REJECTIONS_PER_DRAW * n
    rejected = 0
    out: list[EvScenario] = []
    while len(out) < n:
        size = max(n - len(out), 16)
        arr = np.rint(rng.normal(dist.arrival_mean, dist.arrival_stddev, size))
        dep = np.rint(rng.normal(dist.departure_mean, dist.departure_stddev, size))
        soc = rng.normal(dist.soc_mean, dist.soc_stddev, size)
        for a, d, s in zip(arr, dep, soc):
            if len(out) == n:
                break
            ev = EvScenario(f"s{len(out):05d}", int(a), int(d), float(s), dist.capacity, dist.target_soc,
                            dist.max_charge_rate, dist.max_charge_rate, 1.0 / n)
            if ev.violations(T):
                rejected += 1
                if rejected > budget:
                    raise DistributionInfeasibleError(
                        f"more than {budget} rejected draws while collecting {n} scenarios")
                continue
            out.append(ev)
    return out


@dataclass
class ReducedSet:
    representatives: list[EvScenario]
    weights: list[float]
    inertia: float
    labels: np.ndarray = field(repr=False)
    members: list[list[int]] = field(repr=False)
    inertia_history: list[float] = field(default_factory=list, repr=False)
    iterations: int = 0


def scenario_features(scenarios: Sequence[EvScenario]) -> np.ndarray:
    """(arrival, departure, soc) scaled column-wise to [0, 1]; constant columns become 0."""
    raw = np.array([[s.arrival_hour, s.departure_hour, s.arrival_soc] for s in scenarios], dtype=float)
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (raw - lo) / span


def _sqdist(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            j = int(rng.choice(n, p=d2 / total))
        else:
            j = next(i for i in range(n) if i not in chosen)
        chosen.append(j)
        d2 = np.minimum(d2, ((X - X[j]) ** 2).sum(axis=1))
    return X[chosen].copy()


def kmeans_reduce(scenarios: Sequence[EvScenario], k: int, seed: int = 0) -> ReducedSet:
    """Cluster the scenarios with Lloyd's method and keep one medoid per cluster.

    Representatives are ordered by their position in the input list and carry
    their cluster's share of the sample as weight.
    """
    n = len(scenarios)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    X = scenario_features(scenarios)
    if k == n:
        labels = np.arange(n)
        reps = [replace(s, weight=1.0 / n) for s in scenarios]
        return ReducedSet(reps, [1.0 / n] * n, 0.0, labels, [[i] for i in range(n)], [0.0], 0)

    rng = np.random.default_rng(seed)
    centers = _plus_plus(X, k, rng)
    labels = np.full(n, -1)
    history: list[float] = []
    iterations = 0
    for iterations in range(1, MAX_LLOYD_ITERATIONS + 1):
        d2 = _sqdist(X, centers)
        new = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), new].sum()))
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = X[mask].mean(axis=0)
                continue
            # empty cluster: move its center onto the worst-served point of a shared cluster
            own = d2[np.arange(n), labels]
            sizes = np.bincount(labels, minlength=k)
            own = np.where(sizes[labels] > 1, own, -1.0)
            far = int(np.argmax(own))
            centers[j] = X[far]

    members = [np.flatnonzero(labels == j).tolist() for j in range(k)]
    inertia = 0.0
    medoids = []
    for j, idx in enumerate(members):
        if not idx:
            medoids.append(None)
            continue
        centroid = X[idx].mean(axis=0)
        dist = ((X[idx] - centroid) ** 2).sum(axis=1)
        inertia += float(dist.sum())
        medoids.append(idx[int(np.argmin(dist))])

    order = sorted((m, j) for j, m in enumerate(medoids) if m is not None)
    reps, weights, kept = [], [], []
    for m, j in order:
        w = len(members[j]) / n
        reps.append(replace(scenarios[m], weight=w))
        weights.append(w)
        kept.append(members[j])
    relabel = np.empty(n, dtype=int)
    for new_j, idx in enumerate(kept):
        relabel[idx] = new_j
    return ReducedSet(reps, weights, inertia, relabel, kept, history, iterations)


def write_scenarios_csv(scenarios: Sequence[EvScenario], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCENARIO_HEADER)
        for s in scenarios:
            w.writerow([s.id, s.arrival_hour, s.departure_hour, repr(float(s.arrival_soc)),
                        repr(float(s.capacity)), repr(float(s.target_soc)), repr(float(s.weight))])


def read_scenarios_csv(path: str | Path, horizon: int | None = None) -> list[EvScenario]:
    """Parse a scenario CSV. Rows are checked against ``horizon`` when given."""
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(h.strip() for h in header) != SCENARIO_HEADER:
            raise InstanceFormatError(f"{path}:1: expected header {','.join(SCENARIO_HEADER)}")
        for line, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(SCENARIO_HEADER):
                raise InstanceFormatError(f"{path}:{line}: expected {len(SCENARIO_HEADER)} fields, got {len(row)}")
            try:
                arrival, departure = int(row[1]), int(row[2])
                soc, cap, target, weight = (float(v) for v in row[3:])
            except ValueError as exc:
                raise InstanceFormatError(f"{path}:{line}: {exc}") from None
            if not all(math.isfinite(v) for v in (soc, cap, target, weight)):
                raise InstanceFormatError(f"{path}:{line}: non-finite value")
            ev = EvScenario(row[0], arrival, departure, soc, cap, target, weight=weight)
            if horizon is not None:
                bad = ev.violations(horizon)
                if bad:
                    raise InstanceFormatError(f"{path}:{line}: {bad[0].rule}")
            out.append(ev)
    return out
