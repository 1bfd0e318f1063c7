import numpy as np
from hypothesis import given, settings, strategies as st

from iffca.batch import run_batch
from iffca.engine import run

from helpers import check_run_invariants, random_scenario, same_results


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 2**31))
def test_state_invariants_hold_every_step(scenario_seed, run_seed):
    check_run_invariants(random_scenario(np.random.default_rng(scenario_seed)), run_seed)


def test_worker_count_does_not_change_results():
    rng = np.random.default_rng(8)
    for _ in range(3):
        s = random_scenario(rng, max_steps=60)
        serial = run_batch(s, range(12), workers=1)
        assert same_results(serial, run_batch(s, range(12), workers=2))
        assert same_results(serial, run_batch(s, range(12), workers=3))


def test_thread_env_variable(monkeypatch):
    from iffca import batch

    monkeypatch.setenv(batch.THREADS_ENV, "2")
    assert batch.default_workers() == 2
    monkeypatch.setenv(batch.THREADS_ENV, "0")
    try:
        batch.default_workers()
    except ValueError:
        pass
    else:
        raise AssertionError("zero workers accepted")


def test_zero_pedestrians_finish_immediately():
    s = random_scenario(np.random.default_rng(0))
    from iffca.scenario import RandomPlacement, Scenario

    empty = Scenario(s.grid, RandomPlacement(0), s.params, 10)
    res = run(empty, 0)
    assert res.t_total == 0 and res.steps == 0 and not res.censored
