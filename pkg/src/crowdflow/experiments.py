"""Seeded synthetic-city experiments echoing the qualitative benchmark findings.

Each function returns test RMSEs (raw units) so scripts and tests can print or
assert on them.
"""

from __future__ import annotations

from dataclasses import replace

from .models import ModelSpec
from .pipeline import prepare, run
from .synthetic import SynthConfig, generate, true_graph
from .temporal import TemporalConfig
from .training import EarlyStopRule, TrainConfig

FUSION_VARIANTS = ("none", "early-concat", "early-add", "raw-concat", "raw-add", "raw-gating")

# hourly slots, six weeks: four weeks of look-back plus train/val/test targets
BASE_CITY = SynthConfig(n_stations=20, n_days=42, slots_per_day=24, base_rates=10.0,
                        daily_amplitude=0.5, weekly_modulation=0.3)

STMETA_TRAINING = TrainConfig(batch_size=32, max_epochs=300, learning_rate=3e-3,
                              early_stop=EarlyStopRule("naive", patience=20), seed=0)


def _with_noise(cfg: SynthConfig, relative: float = 0.1) -> SynthConfig:
    return replace(cfg, noise_sigma=relative * cfg.expected_mean())


def temporal_knowledge(seed: int = 7) -> dict[str, float]:
    """HM over closeness only vs closeness + daily + weekly."""
    cfg = _with_noise(replace(BASE_CITY, seed=seed))
    ds = generate(cfg)
    temporal = TemporalConfig(6, 7, 4, cfg.slots_per_day)
    prep = prepare(ds, temporal)
    return {
        family: run(ds, ModelSpec(family, temporal), prep=prep).metrics.rmse
        for family in ("hm-tc", "hm-tm")
    }


def spatial_knowledge(seed: int = 7, diffusion: float = 0.3) -> dict[str, float]:
    """Temporal-only ridge vs the multi-graph model on the true-layout distance graph."""
    cfg = _with_noise(replace(BASE_CITY, diffusion_coeff=diffusion, seed=seed))
    ds = generate(cfg)
    temporal = TemporalConfig(3, 1, 1, cfg.slots_per_day)
    prep = prepare(ds, temporal)
    ridge = run(ds, ModelSpec("tmeta-ridge", temporal, ridge_lambda=1e-3), prep=prep)
    graph_model = run(
        ds,
        ModelSpec("stmeta-lite", temporal, graphs=(true_graph(cfg),), cheb_order=3, hidden_dim=16, seed=seed),
        STMETA_TRAINING,
        prep=prep,
    )
    return {"tmeta-ridge": ridge.metrics.rmse, "stmeta-lite": graph_model.metrics.rmse}


def context_fusion(seed: int = 7, effect: float = 0.5, prob: float = 0.2,
                   variants=FUSION_VARIANTS) -> dict[str, float]:
    """Multi-graph model with each fusion variant; ``none`` ignores the event feature."""
    cfg = _with_noise(replace(BASE_CITY, diffusion_coeff=0.3, context_effect=effect,
                              context_prob=prob, seed=seed))
    ds = generate(cfg)
    temporal = TemporalConfig(3, 1, 1, cfg.slots_per_day)
    prep = prepare(ds, temporal)
    graph = true_graph(cfg)
    out = {}
    for fusion in variants:
        spec = ModelSpec("stmeta-lite", temporal, graphs=(graph,), cheb_order=2, hidden_dim=16,
                         fusion=fusion, seed=seed)
        out[fusion] = run(ds, spec, STMETA_TRAINING, prep=prep).metrics.rmse
    return out
