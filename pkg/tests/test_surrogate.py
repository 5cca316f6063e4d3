import numpy as np
import pytest
from sklearn.base import clone

from qmbrl import surrogate, vqc
from qmbrl.exceptions import ConfigurationError, SchemaVersionError, TrainingError


def synthetic(rng, n=120):
    t = vqc.VqcTemplate(3, 3, 1, 2, 2)
    p_true = rng.uniform(-np.pi, np.pi, t.num_params)
    X = rng.uniform(-1, 1, (n, 3))
    return t, p_true, X, vqc.evaluate(t, X, p_true)


def test_estimator_api():
    reg = surrogate.VQCRegressor(reuploads=1, epochs=3, random_state=5)
    params = reg.get_params()
    assert params["reuploads"] == 1 and params["encoding_scale"] == surrogate.DEFAULT_ENCODING_SCALE
    assert clone(reg).get_params() == params
    with pytest.raises(Exception):
        reg.predict(np.zeros((1, 3)))


def test_fit_history_and_selection(rng):
    _, _, X, y = synthetic(rng)
    reg = surrogate.VQCRegressor(3, 1, 2, epochs=4, batch_size=16, random_state=0)
    reg.fit(X[:80], y[:80], X[80:], y[80:])
    assert [h[0] for h in reg.history_] == [1, 2, 3, 4]
    vals = [h[2] for h in reg.history_]
    assert reg.history_[reg.best_epoch_ - 1][2] == min(vals)
    assert reg.loss(X[80:], y[80:]) == pytest.approx(min(vals), rel=1e-12)
    assert reg.predict(X).shape == (120, 2)


def test_fit_is_seed_deterministic(rng):
    _, _, X, y = synthetic(rng, 60)
    a = surrogate.VQCRegressor(3, 1, 2, epochs=2, random_state=3).fit(X, y)
    b = surrogate.VQCRegressor(3, 1, 2, epochs=2, random_state=3).fit(X, y)
    np.testing.assert_array_equal(a.params_, b.params_)


def test_gradient_methods_train_identically(rng):
    _, _, X, y = synthetic(rng, 40)
    a = surrogate.VQCRegressor(3, 1, 2, epochs=1, grad_method="adjoint", random_state=0).fit(X, y)
    b = surrogate.VQCRegressor(3, 1, 2, epochs=1, grad_method="parameter-shift", random_state=0).fit(X, y)
    np.testing.assert_allclose(a.params_, b.params_, atol=1e-9)


def test_representable_target_has_zero_loss(rng):
    t, p_true, X, y = synthetic(rng)
    reg = surrogate.VQCRegressor(3, 1, 2, encoding_scale=t.encoding_scale, epochs=1, random_state=0).fit(X, y)
    reg.params_ = p_true
    assert reg.loss(X, y) < 1e-6


def test_non_finite_loss_aborts(rng, monkeypatch):
    _, _, X, y = synthetic(rng, 20)
    monkeypatch.setattr(surrogate.vqc, "evaluate", lambda *a, **k: np.full((len(a[1]), 2), np.nan))
    with pytest.raises(TrainingError, match="epoch 1, batch 0"):
        surrogate.VQCRegressor(3, 1, 2, epochs=1, random_state=0).fit(X, y)


def test_trained_beats_untrained(small_model, small_dataset):
    assert len(small_model.history) == 2
    assert small_model.evaluate_loss(small_dataset, "val") < small_model.meta["initial_val_loss"]
    assert small_model.evaluate_loss(small_dataset, "val") == min(h[2] for h in small_model.history)


def test_predict_deterministic_and_bounded(small_model, rng):
    s = rng.uniform(-0.3, 0.3, (50, 4))
    a = rng.integers(0, 2, 50)
    p1, p2 = small_model.predict_batch(s, a), small_model.predict_batch(s, a)
    np.testing.assert_array_equal(p1, p2)
    np.testing.assert_allclose(small_model.predict(s[0], a[0]), p1[0], atol=1e-14)
    lo, hi = small_model.scaler.inverse_transform_targets(np.array([[-1.0] * 4, [1.0] * 4]))
    delta = p1 - s
    assert np.all(delta >= lo - 1e-12) and np.all(delta <= hi + 1e-12)
    # far outside the data the inputs clamp, so predictions stay finite
    assert np.all(np.isfinite(small_model.predict_batch(np.full((1, 4), 1e6), [1])))


def test_save_load_round_trip(tmp_path, small_model, small_dataset):
    p = tmp_path / "m.json"
    small_model.save(p)
    back = surrogate.SurrogateModel.load(p)
    X, _ = small_dataset.val
    np.testing.assert_array_equal(back.predict_scaled(X), small_model.predict_scaled(X))
    assert back.history == small_model.history
    bad = back.to_dict()
    bad["schema_version"] = 2
    with pytest.raises(SchemaVersionError):
        surrogate.SurrogateModel.from_dict(bad)


def test_train_rejects_wrong_template(small_dataset):
    with pytest.raises(ConfigurationError):
        surrogate.train(small_dataset, vqc.build_policy_template(), epochs=1)


@pytest.mark.slow
def test_full_training_run(full_model, full_dataset):
    assert len(full_model.history) == 20
    val = full_model.evaluate_loss(full_dataset, "val")
    assert val <= full_model.meta["initial_val_loss"] / 2
    t = full_dataset.transitions.subset(full_dataset.test_idx)
    trained = np.abs(full_model.predict_batch(t.states, t.actions) - t.next_states).mean(axis=0)
    rng = np.random.default_rng(0)
    untrained = surrogate.SurrogateModel(full_model.template, rng.uniform(-np.pi, np.pi, 300), full_model.scaler)
    base = np.abs(untrained.predict_batch(t.states, t.actions) - t.next_states).mean(axis=0)
    assert np.all(trained < base)
