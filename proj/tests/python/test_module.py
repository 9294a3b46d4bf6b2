import json

import numpy as np
import pytest

import proxflow as pf

TINY = json.dumps({"K": 2, "p": 2, "h": 4, "batch_b": 32, "epochs_e": 1, "steps_s": 5, "seed": 3})


@pytest.fixture(scope="module")
def toy():
    return pf.train(TINY)


def test_version():
    assert pf.__version__.count(".") == 2


def test_train_is_deterministic(toy):
    flow, losses = toy
    again, losses2 = pf.train(TINY)
    assert losses == losses2
    assert flow.to_json() == again.to_json()
    assert len(losses) == 5
    assert flow.dim == 2 and flow.cond_dim == 0 and flow.blocks == 2


def test_round_trip_and_density(toy):
    flow, _ = toy
    x = flow.sample(50, seed=1)
    assert x.shape == (50, 2)
    z = flow.forward(x)
    assert np.max(np.abs(flow.inverse(z) - x)) < 1e-6
    ld = flow.logdensity(x)
    assert ld.shape == (50,)
    assert np.all(np.isfinite(ld))


def test_checkpoint_round_trip(toy, tmp_path):
    flow, _ = toy
    path = tmp_path / "ck.json"
    path.write_text(flow.to_json())
    back = pf.Flow.load(str(path))
    x = pf.sample_toy("two_moons", 20, seed=2)
    assert np.array_equal(back.logdensity(x), flow.logdensity(x))
    assert pf.Flow.from_json(flow.to_json()).to_json() == flow.to_json()


def test_conditional():
    flow, _ = pf.train(json.dumps({"K": 1, "p": 2, "h": 4, "batch_b": 16, "epochs_e": 1, "steps_s": 2}), preset="circle")
    y = np.array([[0.5]])
    x = flow.sample(10, seed=0, y=y)
    assert x.shape == (10, 2)
    assert np.max(np.abs(flow.inverse(flow.forward(x, y), y) - x)) < 1e-6
    with pytest.raises(ValueError):
        flow.sample(10)
    with pytest.raises(ValueError):
        flow.logdensity(x)


def test_errors_map_to_python():
    with pytest.raises(ValueError, match="learning_rate"):
        pf.train(json.dumps({"learning_rate": 1}))
    flow, _ = pf.train(TINY)
    with pytest.raises(ValueError):
        flow.forward(np.zeros((3, 3)))


def test_metrics_and_projection():
    a = np.zeros((1, 2))
    b = np.array([[3.0, 4.0]])
    assert pf.empirical_w2(a, b) == 5.0
    x = pf.sample_toy("eight_modes", 300, seed=4)
    assert pf.empirical_kl(x, x, [8, 8]) == 0.0
    t = pf.polar_project(np.random.default_rng(0).normal(size=(3, 5)))
    assert np.allclose(t @ t.T, np.eye(3), atol=1e-9)


def test_on_step_callback():
    seen = []
    pf.train(TINY, on_step=lambda step, loss: seen.append((step, loss)))
    assert [s for s, _ in seen] == list(range(5))
