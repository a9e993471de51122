import numpy as np
import pytest

from bellsim.core import NoiseParams, SimConfig, Strategy
from bellsim.engine import LengthMismatch, delay_probability, replay_settings, run


@pytest.mark.parametrize("cfg", [
    SimConfig(n_trials=2000, p_delay=0.5, seed=3),
    SimConfig(strategy=Strategy.APP2, n_trials=2000, seed=3),
    SimConfig(strategy=Strategy.QM, n_trials=2000, seed=3, phi=0.4),
    SimConfig(n_trials=2000, seed=3, noise=NoiseParams(0.05, 0.1, 0.1)),
])
def test_run_is_deterministic(cfg):
    assert run(cfg) == run(cfg)
    assert run(cfg) != run(cfg.with_(seed=4))


def test_replay_of_sampled_settings_is_identical():
    cfg = SimConfig(strategy=Strategy.APP2, n_trials=500, seed=9)
    out = run(cfg)
    assert replay_settings(cfg, out.left_settings, out.right_settings) == out


def test_replay_length_mismatch():
    with pytest.raises(LengthMismatch):
        replay_settings(SimConfig(n_trials=3), [1, 2, 1], [1, 2])


def test_replay_rejects_bad_setting():
    with pytest.raises(ValueError):
        replay_settings(SimConfig(n_trials=2), [1, 3], [1, 2])


@pytest.mark.parametrize("strategy", [Strategy.APP1, Strategy.APP2, Strategy.QM])
def test_one_record_per_side_per_trial(strategy):
    out = run(SimConfig(strategy=strategy, n_trials=1234, seed=1))
    for s in (out.left, out.right):
        assert len(s) == 1234
        assert sorted(s.bullet_id) == list(range(1234))
        assert s.is_sorted()


def test_single_table_trial():
    out = run(SimConfig(strategy=Strategy.TABLE, table=5, n_trials=1))
    assert len(out.left) + len(out.right) == 2


def test_settings_uncorrelated_and_uniform():
    n = 100_000
    out = run(SimConfig(n_trials=n, p_delay=1.0, seed=21))
    r = np.corrcoef(out.left_settings, out.right_settings)[0, 1]
    assert abs(r) < 3 / np.sqrt(n)
    for i in (1, 2):
        for j in (1, 2):
            f = np.mean((out.left_settings == i) & (out.right_settings == j))
            assert abs(f - 0.25) <= 0.01
    for s in (out.left, out.right):
        for k in (1, 2):
            assert abs(s.outcome[s.setting == k].mean() - 0.5) <= 0.01


def test_ground_truth_map():
    out = run(SimConfig(n_trials=10, seed=2))
    gt = out.ground_truth
    assert set(gt) == set(range(10))
    assert gt[4] == (int(out.left_settings[4]), int(out.right_settings[4]))


def test_delay_probability_defaults():
    assert delay_probability(SimConfig()) == 0.0
    assert delay_probability(SimConfig(strategy=Strategy.APP2)) == 1.0
    assert delay_probability(SimConfig(p_delay=0.3)) == 0.3


def test_app2_replay_matches_hand_enumeration():
    # bullets 0..3 alternate i, ii, i, ii; T=100, delta=30
    cfg = SimConfig(strategy=Strategy.APP2, n_trials=4)
    out = replay_settings(cfg, [1, 2, 2, 1], [2, 1, 2, 1])
    left = {(r.time, r.setting, r.outcome, r.bullet_id) for r in out.left}
    right = {(r.time, r.setting, r.outcome, r.bullet_id) for r in out.right}
    assert left == {(0, 1, 0, 0), (130, 2, 0, 1), (300, 2, 1, 2), (300, 1, 1, 3)}
    assert right == {(0, 2, 1, 0), (200, 1, 1, 1), (200, 2, 1, 2), (400, 1, 1, 3)}
    # the released set-i A2 bit precedes the prompt one at tick 300
    assert [r.bullet_id for r in out.left][2:] == [2, 3]

    from bellsim.coincidence import match, tally
    t = tally(match(out.left, out.right, 5))
    assert t.n_pairs == 1 and t.n_opposite[1, 2] == 1 and t.n_singles == 6


@pytest.mark.parametrize("strategy,p", [(Strategy.APP1, 0.5), (Strategy.APP2, 0.7)])
@pytest.mark.parametrize("fixed", ["left", "right"])
def test_locality_under_permutation(strategy, p, fixed):
    rng = np.random.default_rng(0)
    cfg = SimConfig(strategy=strategy, n_trials=1000, seed=5, p_delay=p)
    base = run(cfg)
    for _ in range(10):
        if fixed == "left":
            out = replay_settings(cfg, base.left_settings, rng.permutation(base.right_settings))
            assert out.left == base.left
        else:
            out = replay_settings(cfg, rng.permutation(base.left_settings), base.right_settings)
            assert out.right == base.right
