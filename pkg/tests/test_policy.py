import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.preprocessing import MinMaxScaler

import oracles
from qmbrl import cartpole, policy, vqc
from qmbrl.dataset import DynamicsScaler


def unit_scaler():
    return MinMaxScaler((-1, 1), clip=True).fit(np.array([[-2.4, -3.0, -0.21, -3.5], [2.4, 3.0, 0.21, 3.5]]))


class ZeroDeltaModel:
    scaler = DynamicsScaler().fit(np.array([[-1, -1, -1, -1, 0], [1, 1, 1, 1, 1.0]]), np.array([[-1.0] * 4, [1.0] * 4]))

    def predict_batch(self, states, actions):
        return np.array(states, dtype=float, ndmin=2).copy()


class BlowUpModel(ZeroDeltaModel):
    """Moves x by +1 per step and returns infinity once x passes 3.5."""

    def predict_batch(self, states, actions):
        s = np.array(states, dtype=float, ndmin=2) + np.array([1.0, 0, 0, 0])
        s[s[:, 0] > 3.5] = np.inf
        return s


class ConstantPolicy:
    def __init__(self, action):
        self.action = action

    def act_batch(self, states):
        return np.full(len(np.atleast_2d(states)), self.action)


def random_policy(seed=0):
    t = vqc.build_policy_template()
    return policy.VQCPolicy(t, np.random.default_rng(seed).uniform(-np.pi, np.pi, t.num_params), unit_scaler())


def test_zero_delta_returns():
    pol = random_policy()
    assert policy.estimate_return(ZeroDeltaModel(), pol, np.zeros(4), 500) == 500.0
    assert policy.estimate_return(ZeroDeltaModel(), pol, [1.0, 0, 0.1, 0], 10) == 5.0
    assert policy.estimate_return(ZeroDeltaModel(), pol, [3.0, 0, 0, 0], 7) == 0.0


def test_horizon_one_is_single_reward(small_model):
    pol = random_policy(1)
    s0 = np.array([0.02, -0.01, 0.03, 0.0])
    nxt = small_model.predict(s0, pol.act(s0))
    assert policy.estimate_return(small_model, pol, s0, 1) == cartpole.reward(nxt)


def test_non_finite_rollout_is_flagged():
    # x goes 0.25 -> 1.25 -> 2.25 -> 3.25 -> inf: rewards 0.5, 0.5, 0, then nothing
    ret, bad = policy.estimate_returns(BlowUpModel(), random_policy(), [[0.25, 0, 0, 0], [-19.0, 0, 0, 0]], 10)
    assert ret.tolist() == [1.0, 0.0] and bad.tolist() == [True, False]


def test_action_tie_goes_right(monkeypatch):
    pol = random_policy()
    monkeypatch.setattr(pol, "readout", lambda s: np.zeros(len(np.atleast_2d(s))))
    assert pol.act(np.zeros(4)) == 1
    assert policy.ACTION_THRESHOLD == 0.0


def test_actions_binary_and_deterministic(rng):
    pol = random_policy(2)
    states = cartpole.reset(rng, 1000) * 20
    a = pol.act_batch(states)
    assert set(np.unique(a)) <= {0, 1}
    np.testing.assert_array_equal(a, pol.act_batch(states))
    assert pol.act(np.zeros(4)) == pol.act(np.zeros(4))


def test_policy_json_round_trip(tmp_path):
    pol = random_policy(3)
    pol.save(tmp_path / "p.json")
    back = policy.VQCPolicy.load(tmp_path / "p.json")
    s = np.random.default_rng(0).normal(size=(20, 4))
    np.testing.assert_array_equal(back.readout(s), pol.readout(s))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_compiled_rollout_matches_numpy(small_model, seed):
    t = vqc.build_policy_template(encoding_scale=small_model.template.encoding_scale)
    params = np.random.default_rng(seed).uniform(-np.pi, np.pi, t.num_params)
    cfg = policy.RolloutConfig(horizon=60, n_starts=8, seed=seed)
    fit = policy.PolicyFitness(small_model, t, cfg)
    fast, fast_bad = fit.returns(params)
    slow, slow_bad = policy.estimate_returns(small_model, policy.VQCPolicy.from_model(small_model, params, t),
                                             cfg.start_states(), cfg.horizon)
    np.testing.assert_array_equal(fast, slow)
    np.testing.assert_array_equal(fast_bad, slow_bad)


def test_fitness_single_start_and_repetitions(small_model):
    t = vqc.build_policy_template()
    p = np.random.default_rng(5).uniform(-np.pi, np.pi, t.num_params)
    cfg = policy.RolloutConfig(horizon=30, n_starts=1, seed=4)
    pol = policy.VQCPolicy.from_model(small_model, p, t)
    assert policy.fitness(small_model, p, cfg, t) == policy.estimate_return(small_model, pol, cfg.start_states()[0], 30)
    many = policy.RolloutConfig(horizon=30, n_starts=5, repetitions=3, seed=4)
    one = policy.RolloutConfig(horizon=30, n_starts=5, repetitions=1, seed=4)
    assert policy.fitness(small_model, p, many, t) == policy.fitness(small_model, p, one, t)


def test_fitness_generic_model_path():
    t = vqc.build_policy_template()
    cfg = policy.RolloutConfig(horizon=25, n_starts=4)
    # start states are within the reward-1 region and the model never moves them
    assert policy.fitness(ZeroDeltaModel(), np.zeros(t.num_params), cfg, t) == 25.0


@given(st.integers(0, 10_000))
def test_fitness_bounds_and_determinism(seed):
    # function-scoped fixtures do not mix with @given, so the model is cached at module level
    model = _cached_model()
    t = vqc.build_policy_template()
    p = np.random.default_rng(seed).uniform(-4, 4, t.num_params)
    cfg = policy.RolloutConfig(horizon=40, n_starts=3, seed=seed % 7)
    fit = policy.PolicyFitness(model, t, cfg)
    a, b = fit.score(p), fit.score(p)
    assert a == b and 0.0 <= a <= 40.0


_MODEL = []


def _cached_model():
    if not _MODEL:
        from qmbrl import dataset, surrogate

        ds = dataset.split(dataset.generate(2, 300), (200, 50, 50), seed=2)
        _MODEL.append(surrogate.train(ds, vqc.build_model_template(reuploads=0, layers_per_upload=1), epochs=1))
    return _MODEL[0]


def test_start_state_sets_are_disjoint():
    fit = policy.fitness_start_states(3, 100)
    ev = policy.evaluation_start_states(3, 100)
    assert not (set(map(tuple, fit)) & set(map(tuple, ev)))
    np.testing.assert_array_equal(fit, policy.RolloutConfig(n_starts=100, seed=3).start_states())
    assert np.all(np.abs(ev) <= 0.05)


def test_rollout_config_validation():
    with pytest.raises(ValueError):
        policy.RolloutConfig(horizon=0)
    with pytest.raises(ValueError):
        policy.RolloutConfig(repetitions=0)


def test_always_right_policy_falls_quickly():
    rep = policy.evaluate_on_env(ConstantPolicy(1), n_states=100, seed=0)
    starts = policy.evaluation_start_states(0, 100)
    expected = [oracles.episode_length(lambda s: 1, s0) for s0 in starts]
    np.testing.assert_array_equal(rep.steps, expected)
    assert rep.mean_steps < 100
    assert not rep.perfect
    assert np.all((rep.steps >= 1) & (rep.steps <= 500))


def test_report_returns_match_oracle():
    rep = policy.evaluate_on_env(ConstantPolicy(0), n_states=5, seed=2)
    for s0, ret in zip(rep.start_states, rep.returns):
        s, total = tuple(s0), 0.0
        while True:
            s = oracles.cartpole_step(s, 0)
            total += oracles.cartpole_reward(s[0], s[2])
            if abs(s[0]) > 2.4 or abs(s[2]) > 0.2095:
                break
        assert ret == total


def test_perfect_flag_and_report_determinism(tmp_path):
    rep = policy.EvaluationReport(np.zeros((3, 4)), np.ones(3), np.array([500, 500, 500]))
    assert rep.perfect
    rep.steps[1] = 499
    assert not rep.perfect
    a = policy.evaluate_on_env(random_policy(4), n_states=20, seed=9)
    b = policy.evaluate_on_env(random_policy(4), n_states=20, seed=9)
    np.testing.assert_array_equal(a.steps, b.steps)
    np.testing.assert_array_equal(a.returns, b.returns)
    a.write_csv(tmp_path / "r.csv")
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 21


def test_search_single_round(small_model):
    est = policy.ModelBasedPolicySearch(n_particles=100, budget=100, horizon=5, n_starts=2, workers=1)
    est.fit(small_model)
    assert est.result_.n_evaluations == 100
    assert len(est.history_) >= 1
    assert est.policy_.template.num_params == 180


def test_search_history_and_worker_independence(small_model, tmp_path):
    kw = dict(n_particles=8, budget=40, horizon=15, n_starts=3, seed=1, eval_during_search=True, eval_episodes=5)
    a = policy.ModelBasedPolicySearch(workers=1, **kw).fit(small_model)
    b = policy.ModelBasedPolicySearch(workers=2, **kw).fit(small_model)
    fits = [h.fitness for h in a.history_]
    assert all(x < y for x, y in zip(fits, fits[1:]))
    assert fits[-1] == a.result_.best_fitness
    assert [vars(h) for h in a.history_] == [vars(h) for h in b.history_]
    np.testing.assert_array_equal(a.policy_.params, b.policy_.params)
    assert all(1 <= h.env_steps <= 500 for h in a.history_)
    policy.write_history(a.history_, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == ",".join(policy.HISTORY_COLUMNS)


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv(policy.WORKERS_ENV, "3")
    assert policy.resolve_workers(None) == 3
    assert policy.resolve_workers(2) == 2
    with pytest.raises(ValueError):
        policy.resolve_workers(0)
