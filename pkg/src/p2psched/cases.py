"""Ready-made instances: an all-zero system and a synthetic 3 x 6 x 24 case.

The synthetic profiles are shaped like a residential day (morning and
evening load peaks, PV between 6 h and 19 h, a time-of-use tariff) but are
not data from any measured system.
"""

from __future__ import annotations

import numpy as np

from .model import EvScenario, Instance, PriceSeries, UnitProfile


def zero_instance(num_communities: int = 3, units_per_community: int = 6, horizon: int = 24,
                  standby_payment: float = 0.1) -> Instance:
    prices = PriceSeries.build(horizon, num_communities, 0.0, standby_payment=standby_payment)
    row = tuple(UnitProfile.build(horizon) for _ in range(units_per_community))
    return Instance(num_communities, units_per_community, horizon, prices, tuple(row for _ in range(num_communities)))


def tou_tariff(horizon: int = 24) -> np.ndarray:
    hours = np.arange(horizon) % 24
    price = np.full(horizon, 0.12)
    price[(hours < 6) | (hours >= 23)] = 0.08
    price[(hours >= 17) & (hours < 21)] = 0.22
    return price


def case_evs() -> tuple[EvScenario, ...]:
    return (
        EvScenario("ev_a", 8, 17, 0.35),
        EvScenario("ev_b", 10, 18, 0.45),
        EvScenario("ev_c", 14, 22, 0.30),
    )


def synthetic_case(seed: int = 0, num_communities: int = 3, units_per_community: int = 6,
                   horizon: int = 24, with_evs: bool = True) -> Instance:
    rng = np.random.default_rng(seed)
    T = horizon
    hours = np.arange(T) % 24
    grid = tou_tariff(T)
    # community equilibrium prices sit between a feed-in level and the retail tariff
    p2p = np.array([0.5 * (grid + 0.6 * grid) * rng.uniform(0.95, 1.05) for _ in range(num_communities)])
    peak = (hours >= 17) & (hours < 21)
    prices = PriceSeries.build(
        T, num_communities, grid,
        dr_incentive=np.where(peak, 0.06, 0.0),
        dr_fine=np.where(peak, 0.03, 0.0),
        p2p_price=p2p,
    )
    sun = np.clip(np.sin(np.pi * (hours - 6) / 13), 0.0, None)
    base_shape = 0.5 + 0.4 * np.exp(-((hours - 8) ** 2) / 4) + 0.8 * np.exp(-((hours - 19) ** 2) / 6)
    profiles = []
    for _ in range(num_communities):
        row = []
        for _ in range(units_per_community):
            uid = np.round(base_shape * rng.uniform(0.4, 0.8) + rng.uniform(0, 0.1, T), 3)
            idl = np.round(base_shape * rng.uniform(0.5, 1.2) + rng.uniform(0, 0.2, T), 3)
            pv = np.round(sun * rng.uniform(0.0, 3.5), 3)
            call = np.round(np.where(peak, rng.uniform(0.1, 0.4) * idl, 0.0), 3)
            row.append(UnitProfile.build(T, uid, idl, pv, call))
        profiles.append(tuple(row))
    evs = case_evs() if with_evs else ()
    return Instance(num_communities, units_per_community, T, prices, tuple(profiles), evs)
