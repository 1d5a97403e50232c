import math

import pytest

import empathic


@pytest.fixture(scope="module")
def model():
    return empathic.Model.random(3)


def test_rankings_and_index():
    rs = empathic.rankings()
    assert len(rs) == 6
    assert sorted(rs[0]) == [-5, -1, 6]
    assert empathic.ranking_index((6, -1, -5)) == 5
    with pytest.raises(empathic.InvalidArgument):
        empathic.ranking_index((1, 2, 3))


def test_belief_matches_direct_bayes():
    b = empathic.Belief()
    assert b.entropy == pytest.approx(math.log(6))
    q = (0.1, 0.2, 0.7)
    b.update("Passenger", q)
    classes = {-5: 0, -1: 1, 6: 2}
    joint = [q[classes[r[0]]] for r in empathic.rankings()]
    z = sum(joint)
    assert b.probabilities == pytest.approx([j / z for j in joint], abs=1e-12)
    with pytest.raises(empathic.InvalidArgument):
        b.update("Bicycle", q)


def test_statistics():
    assert empathic.binomial_test(9, 10) == 11 / 1024
    tau, p = empathic.kendall_tau([1, 2, 3, 4], [1, 2, 3, 4])
    assert tau == 1.0 and p > 0
    tau, _ = empathic.kendall_tau([1, 1, 1], [1, 2, 3], tie_corrected=True)
    assert tau is None
    assert 0 < empathic.wilcoxon_signed_rank([1, 2, 3, 4, 5, 6], one_sided=True) < 0.05


def test_plan_values_converge():
    values, residual, sweeps = empathic.plan_values(4)
    assert values.shape == (8 * 8 * 4,)
    assert residual < 1e-6
    assert sweeps > 0


def test_session_runs_and_replays(model):
    s = empathic.session(model, seed=5, input="live", env={"episode_length": 30})
    for t in range(30):
        if t == 4:
            onset, offset = s.inject_gesture("Smile")
            assert offset > onset == s.frames_produced
        s.step()
    assert s.finished
    assert s.tick == 30
    metrics = s.metrics
    assert len(metrics) == 30
    assert metrics[-1]["cumulative_return"] == s.total_reward
    assert sum(s.posterior) == pytest.approx(1.0)
    assert empathic.replay(model, s.record()) == metrics


def test_record_integrity(model):
    s = empathic.session(model, seed=1, env={"episode_length": 5})
    s.run()
    text = s.record()
    with pytest.raises(empathic.IntegrityError):
        empathic.replay(model, text.replace('"seed":1', '"seed":2', 1))


def test_online_batch_report(model):
    r = empathic.online_batch(model, sessions=2, baseline_episodes=3, seed=2, env={"episode_length": 20})
    assert r["sessions"] == 2
    assert len(r["runs"]) == 2
    assert r["random_baseline_episodes"] == 3
