import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdflow import synthetic
from crowdflow.data import dataset_to_dict
from crowdflow.errors import InvalidConfig
from crowdflow.graphs import station_distances
from crowdflow.rng import Xoshiro256, splitmix64
from crowdflow.synthetic import SynthConfig, describe, generate

GOLDEN = Path(__file__).parent / "golden" / "synth_summary.json"
NOISY = SynthConfig(n_stations=6, n_days=14, noise_sigma=1.0, diffusion_coeff=0.3, context_effect=0.5,
                    context_prob=0.2, seed=42)


def digest(ds):
    return hashlib.sha256(json.dumps(dataset_to_dict(ds), sort_keys=True).encode()).hexdigest()


# -- generator -----------------------------------------------------------------

def test_splitmix64_reference_vector():
    state, out = 1234567, []
    for _ in range(5):
        state, v = splitmix64(state)
        out.append(v)
    assert out == [6457827717110365317, 3203168211198807973, 9817491932198370423,
                   4593380528125082431, 16408922859458223821]


def test_xoshiro_reference_vector():
    g = Xoshiro256(0)
    g.s = [1, 2, 3, 4]
    assert [g.next_u64() for _ in range(4)] == [11520, 0, 1509978240, 1215971899390074240]


def test_uniform_and_normal_moments():
    g = Xoshiro256(9)
    u = np.array([g.random() for _ in range(20000)])
    z = np.array([g.normal() for _ in range(20000)])
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.03


# -- generate ------------------------------------------------------------------

def test_all_modulation_off_is_constant():
    cfg = SynthConfig(n_stations=4, n_days=7, base_rates=(2.0, 3.0, 5.0, 7.0), daily_amplitude=0,
                      weekly_modulation=0, diffusion_coeff=0, context_effect=0, noise_sigma=0)
    x = generate(cfg).node_traffic
    np.testing.assert_array_equal(x, np.tile([2.0, 3.0, 5.0, 7.0], (7 * 24, 1)))


def test_seed_42_deterministic():
    assert digest(generate(NOISY)) == digest(generate(NOISY))
    assert digest(generate(NOISY)) != digest(generate(SynthConfig(**{**NOISY.to_dict(), "seed": 43})))


def test_daily_autocorrelation_noise_free():
    ds = generate(SynthConfig(n_stations=3, n_days=14, daily_amplitude=0.5, weekly_modulation=0.0))
    for n in range(3):
        assert synthetic.lag_autocorrelation(ds.node_traffic[:, n], 24) > 0.99


def test_describe_constant_dataset():
    cfg = SynthConfig(n_stations=2, n_days=8, daily_amplitude=0, weekly_modulation=0)
    summary = describe(generate(cfg))
    assert summary.variance == (0.0, 0.0)
    assert all(v is None for lag in summary.autocorrelation.values() for v in lag)


def test_describe_pure_sinusoid():
    cfg = SynthConfig(n_stations=2, n_days=21, daily_amplitude=0.4, weekly_modulation=0)
    summary = describe(generate(cfg))
    assert all(abs(r - 1) < 1e-6 for r in summary.autocorrelation[24])
    assert set(summary.autocorrelation) == {1, 24, 168}


def test_describe_golden_snapshot():
    summary = describe(generate(NOISY)).to_dict()
    golden = json.loads(GOLDEN.read_text())
    assert summary == golden["summary"]
    assert digest(generate(NOISY)) == golden["sha256"]


def closed_form_oracle(cfg, events, noise, adjacency):
    """Slot-by-slot loop evaluation of the planted flow recurrence."""
    rates = cfg.rates()
    spd = cfg.slots_per_day
    T, N = len(events), len(rates)
    flow = np.zeros((T, N))
    for t in range(T):
        day = 1 + cfg.daily_amplitude * np.sin(2 * np.pi * t / spd)
        week = 1 + cfg.weekly_modulation * ((t // spd) % 7 in (5, 6))
        ctx = 1 + cfg.context_effect * events[t]
        for n in range(N):
            own = rates[n] * day * week * ctx
            nbrs = [j for j in range(N) if adjacency[n][j] and j != n]
            if t > 0 and nbrs:
                avg = sum(flow[t - 1][j] for j in nbrs) / len(nbrs)
                value = (1 - cfg.diffusion_coeff) * own + cfg.diffusion_coeff * avg
            else:
                value = own
            flow[t][n] = max(0.0, value + noise[t][n])
    return flow


@given(st.integers(0, 1000), st.sampled_from(["ring", "random-geometric"]), st.floats(0, 0.9))
def test_signal_planting(seed, layout, diffusion):
    cfg = SynthConfig(n_stations=5, n_days=8, layout=layout, radius_m=4000, diffusion_coeff=diffusion,
                      context_effect=0.7, context_prob=0.3, seed=seed)
    ds = generate(cfg)
    _, neighbors = synthetic.layout(cfg)
    events = ds.external["events"][:, 0]
    np.testing.assert_allclose(ds.node_traffic, closed_form_oracle(cfg, events, np.zeros(ds.node_traffic.shape),
                                                                   neighbors), rtol=1e-12, atol=1e-12)


@given(st.integers(0, 1000), st.floats(0, 20))
def test_non_negative(seed, sigma):
    ds = generate(SynthConfig(n_stations=4, n_days=7, base_rates=1.0, noise_sigma=sigma, seed=seed))
    assert (ds.node_traffic >= 0).all()


def test_noise_drawn_from_generator():
    cfg = SynthConfig(n_stations=3, n_days=7, noise_sigma=0.5, daily_amplitude=0, weekly_modulation=0,
                      diffusion_coeff=0, context_prob=0, seed=5)
    x = generate(cfg).node_traffic
    g = Xoshiro256(5)
    synthetic._draw_layout(cfg, g)  # replay the draw order: layout, events, then noise
    [g.random() for _ in range(7 * 24)]
    expected = np.array([[max(0.0, 10.0 + 0.5 * g.normal()) for _ in range(3)] for _ in range(7 * 24)])
    np.testing.assert_array_equal(x, expected)


def _adjacent_vs_not(r, nbrs):
    off = ~np.eye(len(nbrs), dtype=bool)
    return r[(nbrs > 0) & off].mean(), r[(nbrs == 0) & off].mean()


def test_diffusion_locality():
    cfg = SynthConfig(n_stations=12, n_days=28, daily_amplitude=0.0, weekly_modulation=0.0,
                      diffusion_coeff=0.6, noise_sigma=2.0, layout="random-geometric", radius_m=3500, seed=11)
    x = generate(cfg).node_traffic
    _, nbrs = synthetic.layout(cfg)
    adj, non = _adjacent_vs_not(np.corrcoef(x.T), nbrs)
    assert adj > non


@pytest.mark.parametrize("layout", ["ring", "random-geometric"])
def test_diffusion_locality_lagged(layout):
    """Flow at t tracks neighbours' flow at t-1 more than non-neighbours'.

    On a ring the same-slot version fails by construction: neighbours i and i+1
    draw on disjoint parity classes of the previous slot, so only the lagged
    relation carries the planted dependence.
    """
    cfg = SynthConfig(n_stations=12, n_days=28, daily_amplitude=0.0, weekly_modulation=0.0,
                      diffusion_coeff=0.6, noise_sigma=2.0, layout=layout, radius_m=3500, seed=11)
    x = generate(cfg).node_traffic
    _, nbrs = synthetic.layout(cfg)
    lagged = np.corrcoef(x[1:].T, x[:-1].T)[:12, 12:]
    adj, non = _adjacent_vs_not(lagged, nbrs)
    assert adj > non + 0.1


def test_layout_in_box_and_true_graph():
    for layout in ("ring", "random-geometric"):
        cfg = SynthConfig(n_stations=15, layout=layout, seed=3)
        stations, nbrs = synthetic.layout(cfg)
        d = station_distances(stations)
        assert d.max() <= 10_000 * np.sqrt(2) + 1
        g = synthetic.true_graph(cfg)
        np.testing.assert_array_equal(g.adjacency - np.eye(15), nbrs)


def test_context_events_recorded():
    ds = generate(SynthConfig(n_stations=2, n_days=7, context_prob=0.5, seed=1))
    ev = ds.external["events"]
    assert ev.shape == (168, 1) and set(np.unique(ev)) <= {0.0, 1.0}
    assert 0.3 < ev.mean() < 0.7


@pytest.mark.parametrize("bad", [
    {"n_stations": 0}, {"diffusion_coeff": 1.0}, {"noise_sigma": -1}, {"context_prob": 1.5},
    {"layout": "grid"}, {"base_rates": (1.0, 2.0)}, {"slots_per_day": 7},
])
def test_invalid_config(bad):
    with pytest.raises(InvalidConfig):
        SynthConfig(**{"n_stations": 3, **bad})
