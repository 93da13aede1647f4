import numpy as np
import pytest

from itfkan.model import (
    EpochStats,
    ForecastModel,
    ModelConfig,
    prediction_loss,
    total_loss,
    train,
)
from itfkan.tensor import Tensor


def tiny_config(**overrides):
    base = dict(
        lookback=8, horizon=4, embed_dim=2, kernel=3, trend_degree=2,
        top_k=2, patch_len=4, stride=2, reg_lambda=0.01, lr=1e-3,
        batch_size=4, epochs=2, patience=1,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_model(seed=0, **overrides):
    return ForecastModel(tiny_config(**overrides), [0.25, 0.5], seed=seed)


def zero_all(model):
    for _, t in model.parameters():
        t.data[:] = 0.0
    return model


def numpy_forward(model, x):
    """Step-by-step recomposition from scalar edge views and explicit loops."""
    cfg = model.config
    n = x.shape[0]
    d = cfg.embed_dim
    e = x[:, :, None] * model.embed.w.data[0][None, None, :] + model.embed.b.data

    half = (cfg.kernel - 1) // 2
    padded = np.concatenate(
        [np.repeat(e[:, :1], half, 1), e, np.repeat(e[:, -1:], half, 1)], axis=1
    )
    trend = np.stack(
        [padded[:, t : t + cfg.kernel].mean(axis=1) for t in range(cfg.lookback)],
        axis=1,
    )
    seasonal = e - trend

    def kan_along_time(net, arr):
        vals = np.moveaxis(arr, 1, 2)  # (N, d, L)
        for layer in net.layers:
            out = np.zeros(vals.shape[:-1] + (layer.out_dim,))
            for j in range(layer.out_dim):
                for i in range(layer.in_dim):
                    out[..., j] += layer.edge(i, j)(vals[..., i])
            vals = out
        return np.moveaxis(vals, 2, 1)

    h_trend = kan_along_time(model.trend_kan, trend)
    h_seasonal = kan_along_time(model.seasonal_kan, seasonal)

    p_len, stride, n_patches = cfg.patch_len, cfg.stride, model.n_patches
    padded_s = np.concatenate([seasonal, np.repeat(seasonal[:, -1:], stride, 1)], 1)
    patches = np.stack(
        [
            padded_s[:, w * stride : w * stride + p_len].reshape(n, -1)
            @ model.patcher.w.data
            + model.patcher.b.data
            for w in range(n_patches)
        ],
        axis=1,
    )

    k_bins = model.k_bins
    spec = np.zeros((n, k_bins, d), dtype=complex)
    for k in range(k_bins):
        for p in range(1, n_patches + 1):
            spec[:, k] += patches[:, p - 1] * np.exp(-2j * np.pi * k * p / n_patches)
    amp, phase = np.abs(spec), np.angle(spec)
    grid = np.zeros((n, k_bins, n_patches, d))
    for p in range(1, n_patches + 1):
        ang = phase + 2.0 * np.pi * np.arange(k_bins)[None, :, None] * p / n_patches
        grid[:, :, p - 1] = amp * np.cos(ang)

    h_tf_patch = np.zeros((n, n_patches, d))
    for p, net in enumerate(model.tf_kans.nets):
        layer = net.layers[0]
        vals = np.moveaxis(grid[:, :, p, :], 1, 2)  # (N, d, K)
        out = np.zeros(vals.shape[:-1] + (k_bins,))
        for j in range(k_bins):
            for i in range(k_bins):
                out[..., j] += layer.edge(i, j)(vals[..., i])
        h_tf_patch[:, p] = out.mean(axis=-1)
    h_tf = (
        np.einsum("npd,pl->nld", h_tf_patch, model.unpatcher.w.data)
        + model.unpatcher.b.data[None, :, None]
    )

    h = h_trend + h_seasonal + h_tf
    collapsed = (h @ model.head_w1.data)[:, :, 0] + model.head_b1.data[0]
    return collapsed @ model.head_w2.data + model.head_b2.data


# --- forward ---------------------------------------------------------------------

def test_forward_matches_compositional_oracle():
    model = tiny_model(seed=3)
    x = np.random.default_rng(4).normal(size=(3, 8))
    got = model.forward(Tensor(x)).data
    expected = numpy_forward(model, x)
    np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-11)


def test_forward_zero_parameters_zero_output():
    model = zero_all(tiny_model())
    x = np.random.default_rng(0).normal(size=(2, 8))
    np.testing.assert_array_equal(model.forward(Tensor(x)).data, 0.0)


def test_identical_variates_identical_forecasts():
    model = tiny_model(seed=1)
    row = np.random.default_rng(2).normal(size=8)
    out = model.forward(Tensor(np.stack([row, row]))).data
    np.testing.assert_array_equal(out[0], out[1])


def test_variate_permutation_equivariance():
    model = tiny_model(seed=5)
    x = np.random.default_rng(6).normal(size=(4, 8))
    perm = np.array([2, 0, 3, 1])
    base = model.forward(Tensor(x)).data
    permuted = model.forward(Tensor(x[perm])).data
    np.testing.assert_array_equal(permuted, base[perm])


def test_forward_rejects_wrong_lookback():
    with pytest.raises(ValueError):
        tiny_model().forward(Tensor(np.zeros((2, 9))))


def test_forward_deterministic_across_builds():
    x = np.random.default_rng(7).normal(size=(2, 8))
    a = tiny_model(seed=9).forward(Tensor(x)).data
    b = tiny_model(seed=9).forward(Tensor(x)).data
    np.testing.assert_array_equal(a, b)


# --- losses ------------------------------------------------------------------------

def test_loss_zero_for_perfect_prediction():
    model = tiny_model()
    for _, t in model.parameters():
        if t.data.ndim == 2 and "a" not in str(t.data.shape):
            pass
    # zero the shaping coefficients so reg vanishes
    zero_all(model)
    y = Tensor(np.ones((2, 4)))
    total, bd = total_loss(y, Tensor(np.ones((2, 4))), model, 0.01, "long")
    assert total.item() == 0.0 and bd.total == 0.0


def test_loss_lambda_zero_is_pred_only():
    model = tiny_model(seed=2)
    pred = Tensor(np.random.default_rng(1).normal(size=(3, 4)))
    target = Tensor(np.random.default_rng(2).normal(size=(3, 4)))
    total, bd = total_loss(pred, target, model, 0.0, "long")
    assert bd.total == bd.pred
    assert total.item() == bd.pred


def test_mse_hand_example():
    pred = Tensor(np.array([[1.0, 1.0]]))
    target = Tensor(np.array([[0.0, 2.0]]))
    assert prediction_loss(pred, target, "long").item() == 1.0


def test_smape_hand_example():
    pred = Tensor(np.array([[2.0]]))
    target = Tensor(np.array([[1.0]]))
    got = prediction_loss(pred, target, "short").item()
    np.testing.assert_allclose(got, 200.0 / 3.0, rtol=1e-12)


def test_smape_zero_over_zero_is_zero():
    pred = Tensor(np.zeros((1, 3)))
    target = Tensor(np.zeros((1, 3)))
    assert prediction_loss(pred, target, "short").item() == 0.0


def test_unknown_task_rejected():
    with pytest.raises(ValueError):
        prediction_loss(Tensor(np.zeros((1, 1))), Tensor(np.zeros((1, 1))), "medium")


def test_total_is_pred_plus_lambda_reg():
    model = tiny_model(seed=11)
    rng = np.random.default_rng(12)
    lam = 0.01
    pred = Tensor(rng.normal(size=(2, 4)))
    target = Tensor(rng.normal(size=(2, 4)))
    for _ in range(1000):
        for _, t in model.parameters():
            t.data += rng.normal(scale=0.05, size=t.data.shape)
        _, bd = total_loss(pred, target, model, lam, "long")
        recomposed = bd.pred + lam * (bd.reg_trend + bd.reg_seasonal + bd.reg_tf)
        assert abs(bd.total - recomposed) <= 1e-12


# --- gradients ------------------------------------------------------------------------

def test_end_to_end_parameter_gradients():
    from gradcheck_util import param_fd_errors

    model = tiny_model(seed=13)
    x = Tensor(np.random.default_rng(14).normal(size=(2, 8)))
    y = Tensor(np.random.default_rng(15).normal(size=(2, 4)))

    def loss_fn():
        return total_loss(model.forward(x), y, model, 0.01, "long")[0]

    # spot-check one parameter from each group; the acceptance suite
    # sweeps every coordinate of every group
    picks = {}
    for name, t in model.parameters():
        group = name.split(".")[0]
        picks.setdefault(group, (name, t))
    errors = param_fd_errors(loss_fn, picks.values())
    for name, err in errors.items():
        assert err < 1e-4, f"{name}: {err}"


# --- training ----------------------------------------------------------------------------

def make_windows(series, lookback, horizon):
    t = np.arange(len(series))
    windows = []
    targets = []
    for s in range(0, len(series) - lookback - horizon + 1):
        windows.append(series[s : s + lookback])
        targets.append(series[s + lookback : s + lookback + horizon])
    x = np.asarray(windows)[:, None, :]
    y = np.asarray(targets)[:, None, :]
    return x, y


def test_overfit_single_window():
    t = np.arange(12, dtype=float)
    series = np.sin(2 * np.pi * t / 6.0) + 0.1 * t / 8.0
    x, y = make_windows(series, 8, 4)
    x, y = x[:1], y[:1]
    model = tiny_model(seed=16, epochs=800, reg_lambda=0.0, patience=800, lr=5e-3)
    history, _ = train(model, x, y, x, y, task="long", seed=16)
    assert history[-1].train_pred < 1e-2, history[-1]


def test_huge_lambda_crushes_coefficients():
    rng = np.random.default_rng(17)
    series = rng.normal(size=30)
    x, y = make_windows(series, 8, 4)
    model = tiny_model(seed=18, epochs=200, reg_lambda=1e6, patience=200, lr=5e-3)
    train(model, x, y, x, y, task="long", seed=18)
    shaped = []
    for name, t in model.parameters():
        if any(part in name for part in (".a1", ".a2", ".poly1", ".poly2", ".fa1", ".fa2", ".fb")):
            shaped.append(t.data.ravel())
    rms = float(np.sqrt(np.mean(np.concatenate(shaped) ** 2)))
    assert rms < 1e-2, rms


def test_patience_zero_stops_after_first_non_improvement(monkeypatch):
    rng = np.random.default_rng(19)
    series = rng.normal(size=40)
    x, y = make_windows(series, 8, 4)
    val_sequence = iter([1.0, 1.0, 0.5, 0.4])
    monkeypatch.setattr(
        "itfkan.model._batched_pred_loss", lambda *a, **k: next(val_sequence)
    )
    model = tiny_model(seed=20, epochs=6, patience=0)
    history, best = train(model, x, y, x, y, task="long", seed=20)
    assert len(history) == 2  # epoch 1 fails to improve and training stops there
    assert best == 0


def test_patience_one_tolerates_single_stall(monkeypatch):
    rng = np.random.default_rng(19)
    series = rng.normal(size=40)
    x, y = make_windows(series, 8, 4)
    val_sequence = iter([1.0, 1.0, 1.0, 0.9, 1.5, 1.5])
    monkeypatch.setattr(
        "itfkan.model._batched_pred_loss", lambda *a, **k: next(val_sequence)
    )
    model = tiny_model(seed=20, epochs=6, patience=1)
    history, best = train(model, x, y, x, y, task="long", seed=20)
    assert len(history) == 3  # two consecutive stalls exceed patience=1
    assert best == 0


def test_train_rejects_empty_training_set():
    model = tiny_model()
    empty = np.zeros((0, 1, 8))
    with pytest.raises(ValueError):
        train(model, empty, np.zeros((0, 1, 4)), empty, np.zeros((0, 1, 4)))


def test_training_restores_best_snapshot():
    rng = np.random.default_rng(21)
    series = rng.normal(size=40)
    x, y = make_windows(series, 8, 4)
    model = tiny_model(seed=22, epochs=5, patience=5, lr=5e-3)
    history, best_epoch = train(model, x, y, x, y, task="long", seed=22)
    vals = [h.val_pred for h in history]
    assert best_epoch == int(np.argmin(vals))


def test_training_deterministic():
    rng = np.random.default_rng(23)
    series = rng.normal(size=36)
    x, y = make_windows(series, 8, 4)

    def run():
        model = tiny_model(seed=24, epochs=3, patience=3)
        history, _ = train(model, x, y, x, y, task="long", seed=24)
        return history, {name: t.data.copy() for name, t in model.parameters()}

    h1, p1 = run()
    h2, p2 = run()
    assert h1 == h2  # bitwise float equality via exact tuple comparison
    for name in p1:
        np.testing.assert_array_equal(p1[name], p2[name])


# --- checkpoints -----------------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    model = tiny_model(seed=25)
    path = tmp_path / "model.itfk"
    model.save(str(path), extra_config=[("task", "long")])
    loaded, raw = ForecastModel.load(str(path))
    assert raw["task"] == "long"
    for (name_a, t_a), (name_b, t_b) in zip(model.parameters(), loaded.parameters()):
        assert name_a == name_b
        np.testing.assert_array_equal(t_a.data, t_b.data)
    np.testing.assert_array_equal(model.frequencies, loaded.frequencies)
    x = np.random.default_rng(26).normal(size=(2, 8))
    np.testing.assert_array_equal(
        model.forward(Tensor(x)).data, loaded.forward(Tensor(x)).data
    )


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.itfk"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError):
        ForecastModel.load(str(path))


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_config(kernel=4)
    with pytest.raises(ValueError):
        tiny_config(lookback=0)
    with pytest.raises(ValueError):
        tiny_config(reg_lambda=-0.5)
    assert tiny_config(patience=0).patience == 0
