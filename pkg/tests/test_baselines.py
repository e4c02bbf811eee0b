import pytest

from conftest import instance, job, node, profiles, scenario_snapshot
from gpusched.baselines import BaselinePolicy, baseline_schedule
from gpusched.greedy import construct_schedule
from gpusched.model import Assigned, JobState
from gpusched.oracle import validate_schedule


def test_single_job_matches_greedy(two_config):
    n1, table = two_config
    inst = instance([n1], [job("a", due=1000.0)], table)
    for policy in BaselinePolicy:
        assert baseline_schedule(inst, policy) == construct_schedule(inst)


def test_no_preemption_for_heavier_arrival():
    table = profiles({("V100", 1): 100.0, ("V100", 2): 60.0})
    old = job("old", epochs=50, weight=1.0, placement=Assigned("n", 2))
    new = job("new", weight=5.0, due=10.0)
    inst = instance([node("n", 2)], [old, new], table)
    for policy in BaselinePolicy:
        s = baseline_schedule(inst, policy)
        assert s.decisions == {"old": Assigned("n", 2), "new": None}


def test_edf_and_ps_order_differently():
    # one free GPU; a is due first, b weighs more
    table = profiles({("V100", 1): 100.0})
    a = job("a", due=500.0, weight=1.0)
    b = job("b", due=900.0, weight=5.0)
    inst = instance([node("n", 1)], [a, b], table)
    assert baseline_schedule(inst, "edf").decisions == {"a": Assigned("n", 1), "b": None}
    assert baseline_schedule(inst, "ps").decisions == {"a": None, "b": Assigned("n", 1)}


def test_fifo_uses_submission_order():
    table = profiles({("V100", 1): 100.0})
    late_heavy = job("a", due=100.0, weight=9.0, submit=5.0)
    early = job("b", due=9000.0, weight=1.0, submit=1.0)
    inst = instance([node("n", 1)], [late_heavy, early], table, now=10.0)
    assert baseline_schedule(inst, "fifo").decisions["b"] == Assigned("n", 1)


def test_fifo_ignores_weights_and_due_dates():
    inst = scenario_snapshot(2, upto=30)
    reweighted = []
    for k, j in enumerate(inst.jobs):
        spec = j.spec.__class__(j.spec.id, j.spec.job_class, j.spec.total_epochs, j.spec.submission_time,
                                j.spec.due_date + 1000.0 * (k % 3), float(1 + (k * 7) % 5), j.spec.batch_size)
        reweighted.append(JobState(spec, j.completed_epochs, j.placement))
    other = instance(inst.nodes, reweighted, inst.profiles, horizon=inst.horizon, now=inst.now)
    assert baseline_schedule(inst, "fifo").decisions == baseline_schedule(other, "fifo").decisions


@pytest.mark.parametrize("policy", list(BaselinePolicy))
def test_running_jobs_locked_and_output_valid(policy):
    for seed in range(8):
        inst = scenario_snapshot(seed, node_mix="scenario2")
        s = baseline_schedule(inst, policy)
        for j in inst.jobs:
            if j.placement is not None:
                assert s.decisions[j.id] == j.placement
        assert validate_schedule(s, inst).feasible


def test_explicit_lock_overrides_placements():
    table = profiles({("V100", 1): 100.0})
    inst = instance([node("n0", 1), node("n1", 1)], [job("a"), job("b")], table)
    s = baseline_schedule(inst, "fifo", locked={"a": Assigned("n1", 1)})
    assert s.decisions == {"a": Assigned("n1", 1), "b": Assigned("n0", 1)}


def test_over_capacity_lock_rejected():
    table = profiles({("V100", 1): 100.0})
    inst = instance([node("n0", 1)], [job("a"), job("b")], table)
    with pytest.raises(ValueError):
        baseline_schedule(inst, "edf", locked={"a": Assigned("n0", 1), "b": Assigned("n0", 1)})
