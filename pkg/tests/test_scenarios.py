import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p2psched.model import EvScenario, InstanceFormatError
from p2psched.scenarios import (DistributionInfeasibleError, EvDistribution, kmeans_reduce, read_scenarios_csv,
                                sample_scenarios, scenario_features, write_scenarios_csv)


def planted(sizes=(40, 25, 35), seed=3):
    """Three well-separated groups: arrivals near 8, 13 and 18 h."""
    rng = np.random.default_rng(seed)
    out, truth = [], []
    for g, (n, hour) in enumerate(zip(sizes, (8, 13, 18))):
        for _ in range(n):
            a = int(np.rint(rng.normal(hour, 0.2)))
            out.append(EvScenario(f"p{len(out)}", a, a + 4, float(np.clip(rng.normal(0.3 + 0.2 * g, 0.02), 0, 0.9))))
            truth.append(g)
    order = rng.permutation(len(out))
    return [out[i] for i in order], np.array(truth)[order]


def test_sample_zero():
    assert sample_scenarios(EvDistribution(), 0) == []


def test_sample_case_defaults():
    evs = sample_scenarios(EvDistribution(), 1000)
    assert len(evs) == 1000
    assert all(ev.capacity == 25 and ev.target_soc == 0.9 for ev in evs)
    assert all(ev.violations(24) == [] for ev in evs)
    assert len({ev.id for ev in evs}) == 1000
    assert math.fsum(ev.weight for ev in evs) == pytest.approx(1.0, abs=1e-12)


def test_sample_mean_arrival():
    evs = sample_scenarios(EvDistribution(arrival_mean=9, arrival_stddev=1, seed=4), 10000)
    assert abs(np.mean([ev.arrival_hour for ev in evs]) - 9) <= 0.1


def test_sample_is_seeded():
    dist = EvDistribution(seed=9)
    assert sample_scenarios(dist, 50) == sample_scenarios(dist, 50)
    assert sample_scenarios(dist, 50) != sample_scenarios(dist, 50, seed=10)


def test_sample_budget_exhaustion():
    # departure always before arrival: no draw can be valid
    dist = EvDistribution(arrival_mean=20, arrival_stddev=0.01, departure_mean=2, departure_stddev=0.01)
    with pytest.raises(DistributionInfeasibleError):
        sample_scenarios(dist, 3)


@pytest.mark.parametrize("kw", [dict(arrival_stddev=0), dict(departure_mean=30), dict(target_soc=0),
                                dict(soc_stddev=-1)])
def test_distribution_invariants(kw):
    with pytest.raises(ValueError):
        EvDistribution(**kw)


def test_features_are_min_max_scaled():
    evs = [EvScenario("a", 2, 10, 0.2), EvScenario("b", 6, 10, 0.6), EvScenario("c", 4, 10, 0.4)]
    X = scenario_features(evs)
    np.testing.assert_allclose(X[:, 0], [0, 1, 0.5])
    np.testing.assert_allclose(X[:, 1], [0, 0, 0])
    np.testing.assert_allclose(X[:, 2], [0, 1, 0.5])


def test_k_equals_n_gives_singletons():
    evs = sample_scenarios(EvDistribution(), 7)
    red = kmeans_reduce(evs, 7, seed=0)
    assert [r.id for r in red.representatives] == [e.id for e in evs]
    assert red.weights == [1 / 7] * 7


def test_planted_clusters_recovered():
    evs, truth = planted()
    red = kmeans_reduce(evs, 3, seed=1)
    # every found cluster is pure and the partition matches the planted one
    for idx in red.members:
        assert len(set(truth[idx])) == 1
    assert sorted(len(m) for m in red.members) == [25, 35, 40]
    for rep, w, idx in zip(red.representatives, red.weights, red.members):
        assert w == len(idx) / len(evs)
        assert rep.id in {evs[i].id for i in idx}


def test_reduce_case_pipeline():
    evs = sample_scenarios(EvDistribution(), 1000)
    red = kmeans_reduce(evs, 3, seed=0)
    assert len(red.representatives) == 3
    assert abs(math.fsum(red.weights) - 1) <= 1e-12
    by_id = {ev.id: ev for ev in evs}
    for rep, w in zip(red.representatives, red.weights):
        assert rep == EvScenario(**{**by_id[rep.id].to_dict(), "weight": w})
    assert all(b <= a + 1e-12 for a, b in zip(red.inertia_history, red.inertia_history[1:]))


def test_reduce_deterministic():
    evs = sample_scenarios(EvDistribution(seed=2), 300)
    a, b = kmeans_reduce(evs, 4, seed=5), kmeans_reduce(evs, 4, seed=5)
    assert a.representatives == b.representatives and a.weights == b.weights and a.inertia == b.inertia


def test_reduce_rejects_bad_k():
    evs = sample_scenarios(EvDistribution(), 4)
    with pytest.raises(ValueError):
        kmeans_reduce(evs, 5, seed=0)
    with pytest.raises(ValueError):
        kmeans_reduce(evs, 0, seed=0)


def test_medoid_is_closest_member_to_centroid():
    evs = sample_scenarios(EvDistribution(seed=8), 200)
    red = kmeans_reduce(evs, 3, seed=2)
    X = scenario_features(evs)
    pos = {ev.id: i for i, ev in enumerate(evs)}
    for rep, idx in zip(red.representatives, red.members):
        centroid = X[idx].mean(axis=0)
        d = ((X[idx] - centroid) ** 2).sum(axis=1)
        assert pos[rep.id] == idx[int(np.argmin(d))]


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 60), k=st.integers(1, 8), seed=st.integers(0, 1000))
def test_reduce_properties(n, k, seed):
    k = min(k, n)
    evs = sample_scenarios(EvDistribution(seed=seed), n)
    red = kmeans_reduce(evs, k, seed)
    assert 1 <= len(red.representatives) <= k
    assert abs(math.fsum(red.weights) - 1) <= 1e-12
    assert sorted(i for m in red.members for i in m) == list(range(n))
    ids = {ev.id for ev in evs}
    assert all(r.id in ids for r in red.representatives)
    assert all(b <= a + 1e-12 for a, b in zip(red.inertia_history, red.inertia_history[1:]))


def test_scenario_csv_round_trip(tmp_path):
    red = kmeans_reduce(sample_scenarios(EvDistribution(), 100), 3, seed=0)
    path = tmp_path / "s.csv"
    write_scenarios_csv(red.representatives, path)
    assert path.read_text().splitlines()[0] == "id,arrival,departure,soc,capacity,target,weight"
    assert read_scenarios_csv(path, 24) == red.representatives


def test_scenario_csv_errors_carry_line(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("id,arrival,departure,soc,capacity,target,weight\nx,5,3,0.2,25,0.9,1\n")
    with pytest.raises(InstanceFormatError, match=r"s\.csv:2"):
        read_scenarios_csv(path, 24)
    path.write_text("id,arrive\n")
    with pytest.raises(InstanceFormatError, match=r"s\.csv:1"):
        read_scenarios_csv(path)
