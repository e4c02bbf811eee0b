import itertools

import numpy as np
import pytest

from conftest import instance, job, node, profiles, scenario_snapshot
from gpusched.baselines import BaselinePolicy, baseline_schedule
from gpusched.greedy import GreedyConfig, optimize
from gpusched.model import Assigned, Schedule, evaluate_objective
from gpusched.oracle import (
    OracleTooLargeError,
    encode,
    exhaustive_optimum,
    search_space,
    validate,
    validate_schedule,
)
from gpusched.workload import tiny_instance


@pytest.fixture
def pair():
    table = profiles({("V100", 1): 100.0, ("V100", 2): 60.0})
    return instance([node("n1", 2), node("n2", 1)], [job("a", due=500.0), job("b", due=80.0)], table)


class TestEncode:
    def test_empty(self, pair):
        enc = encode(Schedule({"a": None, "b": None}), pair)
        for arr in (enc.w, enc.y, enc.z, enc.x, enc.tau, enc.pi, enc.alpha):
            assert not arr.any()

    def test_one_job_two_gpus(self, pair):
        enc = encode(Schedule({"a": Assigned("n1", 2), "b": None}), pair)
        assert enc.z[0, 0] == 1 and enc.x[0, 0, 1] == 1
        assert enc.w[0] == 1 and enc.y[0, 1] == 1 and enc.alpha[0, 0] == 1
        assert enc.z.sum() == 1 and enc.x.sum() == 1 and enc.w.sum() == 1

    def test_sharing_node(self, pair):
        enc = encode(Schedule({"a": Assigned("n1", 1), "b": Assigned("n1", 1)}), pair)
        assert enc.y[0, 1] == 1 and enc.y[0, 0] == 0
        assert enc.x[0, 0, 0] == 1 and enc.x[1, 0, 0] == 1
        # both need 100 s; the tie goes to the lower id
        assert enc.alpha[:, 0].tolist() == [1, 0]
        assert validate(enc, pair).feasible

    def test_objective_matches(self, pair):
        for da, db in itertools.product([None, Assigned("n1", 1), Assigned("n1", 2), Assigned("n2", 1)], repeat=2):
            s = Schedule({"a": da, "b": db})
            if any(u > pair.node(n).capacity for n, u in s.gpus_in_use().items()):
                continue
            assert encode(s, pair).objective(pair) == evaluate_objective(s, pair)


class TestValidate:
    def test_greedy_output_clean(self):
        for seed in range(10):
            inst = scenario_snapshot(seed)
            s, _ = optimize(inst, GreedyConfig(max_iterations=50, seed=seed))
            report = validate_schedule(s, inst)
            assert report.feasible
            assert report.format().startswith("0 violations")

    def test_capacity_breach(self, pair):
        report = validate_schedule(Schedule({"a": Assigned("n1", 2), "b": Assigned("n1", 1)}), pair)
        assert "MShi" in report.constraints()
        assert max(v.amount for v in report.violations if v.constraint == "MShi") == 1.0

    def test_two_nodes(self, pair):
        enc = encode(Schedule({"a": Assigned("n1", 1), "b": None}), pair)
        enc.z[0, 1] = 1
        enc.x[0, 1, 0] = 1
        enc.w[1] = 1
        enc.y[1, 0] = 1
        assert "MShe" in validate(enc, pair).constraints()

    def test_bad_g(self, pair):
        enc = encode(Schedule({"a": Assigned("n2", 1), "b": None}), pair)
        enc.x[0, 1, 0] = 0
        enc.x[0, 1, 1] = 1
        assert "MSht" in validate(enc, pair).constraints()

    def test_understated_tardiness(self, pair):
        enc = encode(Schedule({"a": None, "b": Assigned("n2", 1)}), pair)
        enc.tau[1] = 0.0
        assert "MShk" in validate(enc, pair).constraints()

    def test_understated_energy(self, pair):
        enc = encode(Schedule({"a": Assigned("n1", 2), "b": None}), pair)
        enc.pi[0, 0] *= 0.5
        assert "MShm" in validate(enc, pair).constraints()

    def test_non_binary(self, pair):
        enc = encode(Schedule({"a": Assigned("n1", 2), "b": None}), pair)
        enc.w = enc.w * 2
        assert "MShq" in validate(enc, pair).constraints()

    def test_late_postponed_job_not_charged(self):
        table = profiles({("V100", 1): 100.0})
        inst = instance([node("n", 1)], [job("late", due=10.0)], table, now=500.0)
        assert validate_schedule(Schedule({"late": None}, 500.0), inst).feasible

    def test_node_usage_only_strict(self, pair):
        s = Schedule({"a": Assigned("n1", 1), "b": Assigned("n1", 1)})
        loose = validate_schedule(s, pair)
        assert loose.feasible and [v.constraint for v in loose.informational] == ["MShp"]
        strict = validate_schedule(s, pair, strict=True)
        assert strict.constraints() == {"MShp"}

    @pytest.mark.parametrize("policy", list(BaselinePolicy))
    def test_baseline_output_clean(self, policy):
        for seed in range(5):
            inst = scenario_snapshot(seed, node_mix="scenario2")
            assert validate_schedule(baseline_schedule(inst, policy), inst).feasible


class TestExhaustive:
    def test_single_job_runs(self):
        # postponing would finish after the due date, so running wins
        table = profiles({("V100", 1): 100.0})
        inst = instance([node("n", 1, (0.03,))], [job("a", due=200.0)], table, horizon=300.0)
        s, b = exhaustive_optimum(inst)
        assert s.decisions == {"a": Assigned("n", 1)}
        assert b.total == 100.0 * 0.03

    def test_empty(self):
        inst = instance([node("n", 1)], [], profiles({("V100", 1): 1.0}))
        s, b = exhaustive_optimum(inst)
        assert s.decisions == {} and b.total == 0.0

    def test_two_job_toy(self, pair):
        s, b = exhaustive_optimum(pair)
        # b must run on two GPUs to meet its due date; a waits (free while its worst case is on time)
        assert s.decisions == {"a": None, "b": Assigned("n1", 2)}
        assert b.total == 60.0 * pair.node("n1").cost(2)

    def test_lower_bound_for_any_schedule(self):
        for seed in range(30):
            inst = tiny_instance(seed)
            _, best = exhaustive_optimum(inst)
            rng = np.random.default_rng(seed)
            opts = [None] + [Assigned(n.id, g) for n, g in inst.configurations()]
            for _ in range(20):
                s = Schedule({j.id: opts[int(rng.integers(len(opts)))] for j in inst.jobs})
                if validate_schedule(s, inst).feasible:
                    assert best.total <= evaluate_objective(s, inst).total

    def test_greedy_never_beats_oracle(self):
        for seed in range(30):
            inst = tiny_instance(seed)
            _, best = exhaustive_optimum(inst)
            assert optimize(inst, GreedyConfig(max_iterations=100, seed=seed))[1].total >= best.total

    def test_size_guard(self):
        inst = scenario_snapshot(0, upto=12)
        assert search_space(inst) > 10**6
        with pytest.raises(OracleTooLargeError):
            exhaustive_optimum(inst)

    def test_optimum_validates(self):
        for seed in range(20):
            inst = tiny_instance(seed)
            s, b = exhaustive_optimum(inst)
            assert validate_schedule(s, inst).feasible
            assert encode(s, inst).objective(inst) == b
