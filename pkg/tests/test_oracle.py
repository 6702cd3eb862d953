import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenflow.evaluate import carbon_cost, makespan, validate_schedule
from greenflow.genlab import gen_3partition_instance
from greenflow.heft_sl import schedule_heft_sl
from greenflow.model import Cluster, Instance, Interval, PowerProfile, Processor, Schedule, ScheduledItem, Task, Workflow
from greenflow.oracle import (
    InstanceTooLarge,
    brute_force_min_carbon,
    brute_force_min_makespan,
    exhaustive_knapsack,
    timestep_carbon_cost,
)

from helpers import flat_profile, random_instance


def unit_proc():
    return Cluster((Processor(0, 1.0, 0.0, 1.0),))


def tasks_of(*works):
    return Workflow(tuple(Task(i, float(x)) for i, x in enumerate(works)))


def test_exhaustive_knapsack_examples():
    assert exhaustive_knapsack([], 5) == (0.0, frozenset())
    assert exhaustive_knapsack([(6, 1)], 5) == (0.0, frozenset())
    assert exhaustive_knapsack([(2, 3), (2, 3)], 2) == (3, frozenset({0}))
    with pytest.raises(InstanceTooLarge):
        exhaustive_knapsack([(1, 1)] * 21, 5)


def test_timestep_cost_examples():
    inst = Instance(tasks_of(4), Cluster((Processor(0, 1.0, 1.0, 2.0),)), flat_profile(10, 2), 10)
    s = Schedule({0: 0}, (ScheduledItem(0, 0, 0.0, 4.0),))
    assert timestep_carbon_cost(s, inst, 1) == 4
    assert timestep_carbon_cost(s, inst, 0.5) == 4
    # coarse steps sample the task at t=0 and t=3, so [3, 6) counts as busy
    assert timestep_carbon_cost(s, inst, 3) == 6
    with pytest.raises(ValueError):
        timestep_carbon_cost(s, inst, 0)


def test_unit_task_avoids_zero_budget_slot():
    prof = PowerProfile((Interval(0, 1, 0.0), Interval(1, 3, 1.0)))
    cost, s = brute_force_min_carbon(Instance(tasks_of(1), unit_proc(), prof, 3))
    assert cost == 0 and s.task_items()[0].start == 1


@pytest.mark.parametrize("ints, B", [([1, 2, 3], 6), ([1, 1, 4, 2, 2, 2], 6)])
def test_three_partition_yes_instance(ints, B):
    inst = gen_3partition_instance(ints, B)
    cost, s = brute_force_min_carbon(inst)
    assert cost == 0 and validate_schedule(s, inst) == []


def test_full_packing_forces_gap_use():
    # nine units of work in nine units of time: the zero-budget slot is always busy
    prof = PowerProfile((Interval(0, 4, 1.0), Interval(4, 5, 0.0), Interval(5, 9, 1.0)))
    cost, s = brute_force_min_carbon(Instance(tasks_of(3, 3, 3), unit_proc(), prof, 9))
    assert cost == 1
    assert carbon_cost(s, Instance(tasks_of(3, 3, 3), unit_proc(), prof, 9)).total_cost == 1


def test_no_schedule_fits_deadline():
    inst = Instance(tasks_of(3, 3, 3), unit_proc(), flat_profile(9, 1), 6)
    assert brute_force_min_carbon(inst) == (math.inf, None)


def test_rejects_large_or_fractional_inputs():
    with pytest.raises(InstanceTooLarge):
        brute_force_min_carbon(Instance(tasks_of(*[1] * 7), unit_proc(), flat_profile(10, 1), 10))
    with pytest.raises(InstanceTooLarge):
        brute_force_min_carbon(Instance(tasks_of(1.5), unit_proc(), flat_profile(10, 1), 10))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_brute_force_result_is_consistent(seed):
    inst = random_instance(seed, P=2, n=4, integral=True, alpha=1.5)
    cost, s = brute_force_min_carbon(inst)
    assert s is not None
    assert validate_schedule(s, inst) == []
    assert carbon_cost(s, inst).total_cost == pytest.approx(cost, abs=1e-9)
    assert timestep_carbon_cost(s, inst, 1) == pytest.approx(cost, abs=1e-9)
    best_ms, _ = brute_force_min_makespan(inst)
    assert best_ms <= makespan(schedule_heft_sl(inst, seed)) + 1e-9
