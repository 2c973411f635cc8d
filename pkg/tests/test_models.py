import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdflow.errors import InvalidConfig, MissingContext, ShapeMismatch, SingularSystem
from crowdflow.models import FUSIONS, ModelSpec, fit, gradient, init_model, load_model, predict, save_model
from crowdflow.models import baselines, stmeta
from crowdflow.models.core import pack
from crowdflow.temporal import SampleSet, TemporalConfig, st_move_sample

from factories import random_graph, random_instance, random_samples
from oracles import finite_difference


def samples_from(closeness, daily=None, weekly=None):
    c = np.asarray(closeness, dtype=float)
    s, n, _ = c.shape
    d = np.zeros((s, n, 0)) if daily is None else np.asarray(daily, dtype=float)
    w = np.zeros((s, n, 0)) if weekly is None else np.asarray(weekly, dtype=float)
    return SampleSet(c, d, w, np.zeros((s, n)), np.arange(s))


def editable(model):
    return {k: v.copy() for k, v in model.params().items()}


def rebuild(model, parts):
    return model.with_parameters(pack(model.layout, {name: parts[name] for name, _ in model.layout}))


def temporal_only(model):
    spec = model.spec
    return init_model(ModelSpec("stmeta-lite", spec.temporal, spec.graphs, spec.cheb_order, spec.hidden_dim))


def sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


def forward_oracle(model, samples):
    """Loop-per-station forward pass written out by hand, one station at a time."""
    spec, p, ctx = model.spec, model.params(), samples.context
    feats = np.concatenate([samples.closeness, samples.daily, samples.weekly], axis=2)
    s_count, n_count, _ = feats.shape
    out = np.zeros((s_count, n_count))
    for s in range(s_count):
        latest = samples.closeness[s, :, -1]
        for n in range(n_count):
            x = feats[s, n]
            if spec.fusion == "early-concat":
                x = np.concatenate([x, ctx[s]])
            elif spec.fusion == "early-add":
                x = x + ctx[s] @ p["W_p"]
            z = x @ p["W_t"] + p["b_h"]
            for g_idx, g in enumerate(spec.graphs):
                lt = g.scaled_laplacian
                t_prev, t_cur = np.eye(len(lt)), lt
                terms = [t_prev]
                for _ in range(1, spec.cheb_order):
                    terms.append(t_cur)
                    t_prev, t_cur = t_cur, 2 * lt @ t_cur - t_prev
                for k in range(spec.cheb_order):
                    z = z + (terms[k][n] @ latest) * p[f"W_g{g_idx}"][k]
            h = np.tanh(z)
            if spec.fusion == "raw-concat":
                h = np.concatenate([h, ctx[s]])
            elif spec.fusion == "raw-add":
                h = h + ctx[s] @ p["W_p"]
            elif spec.fusion == "raw-gating":
                h = h * sigmoid(ctx[s] @ p["W_c"] + p["b_c"])
            out[s, n] = h @ p["W_o"] + p["b_o"][0]
    return out


# -- historical means ----------------------------------------------------------

def test_hm_tc_mean():
    spec = ModelSpec("hm-tc", TemporalConfig(3, 0, 0, slots_per_day=24))
    s = samples_from([[[2, 4, 6]]])
    model = fit(spec, s)
    assert model.parameters.size == 0
    assert predict(model, s)[0, 0] == 4.0


def test_hm_tm_mean():
    spec = ModelSpec("hm-tm", TemporalConfig(1, 1, 1, slots_per_day=24))
    s = samples_from([[[3]]], [[[6]]], [[[9]]])
    assert predict(fit(spec, s), s)[0, 0] == 6.0


@given(st.integers(0, 10_000))
def test_hm_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    cfg = TemporalConfig(4, 2, 2, slots_per_day=24)
    s = random_samples(rng, 3, 2, cfg)
    shuffled = SampleSet(s.closeness[:, :, rng.permutation(4)], s.daily[:, :, ::-1], s.weekly[:, :, ::-1],
                         s.targets, s.target_slots)
    for fam in ("hm-tc", "hm-tm"):
        m = fit(ModelSpec(fam, cfg), s)
        np.testing.assert_allclose(predict(m, shuffled), predict(m, s), rtol=1e-12, atol=1e-15)


# -- closed-form families ------------------------------------------------------

def linear_samples(rng, cfg, w, b, S=80, N=3):
    s = random_samples(rng, S, N, cfg)
    y = s.temporal_features() @ w + b
    return SampleSet(s.closeness, s.daily, s.weekly, y, s.target_slots)


def test_tmeta_ridge_linear_recovery(rng):
    cfg = TemporalConfig(3, 2, 1, slots_per_day=24)
    w = rng.normal(size=cfg.n_features)
    s = linear_samples(rng, cfg, w, 0.7)
    model = fit(ModelSpec("tmeta-ridge", cfg), s)
    np.testing.assert_allclose(model.params()["weights"], w, atol=1e-6)
    assert abs(model.params()["bias"][0] - 0.7) < 1e-6
    assert np.sqrt(np.mean((predict(model, s) - s.targets) ** 2)) < 1e-8


def test_ridge_singular_at_zero_lambda():
    cfg = TemporalConfig(2, 0, 0, slots_per_day=24)
    c = np.ones((10, 2, 2))
    s = SampleSet(c, np.zeros((10, 2, 0)), np.zeros((10, 2, 0)), np.ones((10, 2)), np.arange(10))
    with pytest.raises(SingularSystem):
        fit(ModelSpec("tmeta-ridge", cfg), s)
    fit(ModelSpec("tmeta-ridge", cfg, ridge_lambda=0.1), s)


@given(st.integers(0, 10_000), st.floats(0.0, 5.0))
def test_ridge_optimality(seed, lam):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.normal(size=(30, 4)), np.ones(30)])
    y = rng.normal(size=30)
    w = baselines.ridge_solve(X, y, lam)
    base = baselines.ridge_objective(X, y, w, lam)
    for _ in range(10):
        d = rng.normal(size=5)
        d *= 1e-3 / np.linalg.norm(d)
        assert baselines.ridge_objective(X, y, w + d, lam) >= base - 1e-12 * (1 + base)


def test_ar_recovers_per_station_coefficients(rng):
    cfg = TemporalConfig(2, 0, 0, slots_per_day=24)
    s = random_samples(rng, 50, 3, cfg)
    coef = rng.normal(size=(3, 2))
    bias = rng.normal(size=3)
    y = np.einsum("snp,np->sn", s.closeness, coef) + bias
    s = SampleSet(s.closeness, s.daily, s.weekly, y, s.target_slots)
    model = fit(ModelSpec("ar", cfg), s)
    np.testing.assert_allclose(model.params()["coef"], coef, atol=1e-9)
    np.testing.assert_allclose(predict(model, s), y, atol=1e-9)


def test_ar_differencing_on_ramp():
    cfg = TemporalConfig(3, 0, 0, slots_per_day=24)
    x = np.arange(40.0)[:, None] * np.array([[1.0, 2.0]]) + np.array([[0.0, 5.0]])
    x = x + 0.1 * np.sin(np.arange(40))[:, None]
    s = st_move_sample(x, cfg)
    model = fit(ModelSpec("ar", cfg, ar_difference=True, ridge_lambda=1e-9), s)
    assert model.params()["coef"].shape == (2, 2)
    assert np.max(np.abs(predict(model, s) - s.targets)) < 0.5


# -- stmeta-lite ---------------------------------------------------------------

@pytest.mark.parametrize("fusion", FUSIONS)
def test_stmeta_matches_forward_oracle(fusion):
    rng = np.random.default_rng(100 + FUSIONS.index(fusion))
    for _ in range(5):
        model, batch = random_instance(rng, fusion)
        np.testing.assert_allclose(predict(model, batch), forward_oracle(model, batch), atol=1e-12)


@pytest.mark.parametrize("fusion", FUSIONS)
def test_stmeta_gradient_finite_difference(fusion):
    rng = np.random.default_rng(7 + len(fusion))
    for _ in range(5):
        model, batch = random_instance(rng, fusion)

        def loss(flat):
            return float(np.mean((predict(model.with_parameters(flat), batch) - batch.targets) ** 2))

        num = finite_difference(loss, model.parameters)
        ana = gradient(model, batch)
        np.testing.assert_allclose(ana, num, rtol=1e-4, atol=1e-8)


def test_zero_residual_gives_zero_gradient(rng):
    model, batch = random_instance(rng, "raw-gating")
    pred = predict(model, batch)
    exact = SampleSet(batch.closeness, batch.daily, batch.weekly, pred, batch.target_slots, batch.context)
    np.testing.assert_array_equal(gradient(model, exact), 0.0)


def test_output_bias_gradient(rng):
    model, batch = random_instance(rng, "none")
    resid = predict(model, batch) - batch.targets
    grad = model.with_parameters(gradient(model, batch)).params()
    assert grad["b_o"][0] == pytest.approx(2 * resid.mean(), rel=1e-12)


def test_raw_gating_with_zero_gate_weights_halves(rng):
    model, batch = random_instance(rng, "raw-gating")
    p = editable(model)
    p["W_c"][:] = 0
    p["b_c"][:] = 0
    gated = rebuild(model, p)
    plain = rebuild(temporal_only(model), p)
    b_o = p["b_o"][0]
    np.testing.assert_allclose(predict(gated, batch) - b_o, 0.5 * (predict(plain, batch) - b_o), atol=1e-12)


def test_zero_graph_weights_reduce_to_temporal_network(rng):
    model, batch = random_instance(rng, "none")
    p = editable(model)
    for name in p:
        if name.startswith("W_g"):
            p[name][:] = 0
    model = rebuild(model, p)
    x = batch.temporal_features()
    direct = np.tanh(x @ p["W_t"] + p["b_h"]) @ p["W_o"] + p["b_o"][0]
    np.testing.assert_array_equal(predict(model, batch), direct)


def test_raw_add_with_zero_projection_equals_none(rng):
    model, batch = random_instance(rng, "raw-add")
    p = editable(model)
    p["W_p"][:] = 0
    plain = rebuild(temporal_only(model), p)
    np.testing.assert_array_equal(predict(rebuild(model, p), batch), predict(plain, batch))


def test_forward_deterministic(rng):
    model, batch = random_instance(rng, "early-add")
    assert predict(model, batch).tobytes() == predict(model, batch).tobytes()


def test_missing_context(rng):
    model, batch = random_instance(rng, "raw-gating")
    bare = SampleSet(batch.closeness, batch.daily, batch.weekly, batch.targets, batch.target_slots)
    with pytest.raises(MissingContext):
        predict(model, bare)


def test_shape_mismatch(rng):
    model, batch = random_instance(rng, "none")
    wrong = random_samples(rng, 3, batch.n_stations + 1, model.spec.temporal)
    with pytest.raises(ShapeMismatch):
        predict(model, wrong)


def test_spec_invariants(rng):
    cfg = TemporalConfig(2, 1, 0, slots_per_day=24)
    g = random_graph(rng, 3)
    with pytest.raises(InvalidConfig):
        ModelSpec("stmeta-lite", cfg)
    with pytest.raises(InvalidConfig):
        ModelSpec("tmeta-ridge", cfg, graphs=(g,))
    with pytest.raises(InvalidConfig):
        ModelSpec("ar", cfg, fusion="raw-gating")
    with pytest.raises(InvalidConfig):
        ModelSpec("stmeta-lite", cfg, graphs=(g,), cheb_order=0)


def test_parameter_count_matches_layout(rng):
    for fusion in FUSIONS:
        model, _ = random_instance(rng, fusion)
        assert model.parameters.size == sum(int(np.prod(s)) for _, s in stmeta.layout(model.spec, model.n_context))


def test_save_restore_bit_identical(tmp_path, rng):
    model, batch = random_instance(rng, "raw-gating")
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.parameters.tobytes() == model.parameters.tobytes()
    assert predict(back, batch).tobytes() == predict(model, batch).tobytes()


def test_fit_stmeta_logs_and_improves(rng):
    from crowdflow.training import EarlyStopRule, TrainConfig

    cfg = TemporalConfig(2, 1, 0, slots_per_day=4)
    train = linear_samples(rng, cfg, np.array([0.5, 0.3, 0.1]), 0.0, S=120, N=3)
    val = linear_samples(rng, cfg, np.array([0.5, 0.3, 0.1]), 0.0, S=40, N=3)
    spec = ModelSpec("stmeta-lite", cfg, (random_graph(rng, 3),), hidden_dim=4, seed=3)
    tc = TrainConfig(batch_size=16, max_epochs=60, learning_rate=1e-2, early_stop=EarlyStopRule("naive", 5))
    model = fit(spec, train, val, tc)
    losses = [r.train_loss for r in model.log]
    assert losses[-1] < losses[0]
    best = min(r.val_rmse for r in model.log)
    got = np.sqrt(np.mean((predict(model, val) - val.targets) ** 2))
    assert got == pytest.approx(best, rel=1e-12)
