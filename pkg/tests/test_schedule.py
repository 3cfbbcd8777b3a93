import pytest

from errors import PlanError
from schedule import ExperimentScheduleModel, estimate_cost, lane_loads, longest_first, schedule_experiments

COSTS = {"a": 7.0, "b": 5.0, "c": 4.0, "d": 3.0, "e": 1.0}


def test_milp_balances_the_lanes():
    model = ExperimentScheduleModel(COSTS, 2)
    status, makespan = model.solve_model()
    assert status == "Optimal"
    assert makespan == pytest.approx(10.0)
    lanes = model.assignment()
    assert sorted(name for lane in lanes for name in lane) == sorted(COSTS)
    assert "a" in lanes[0]
    assert max(lane_loads(lanes, COSTS)) == pytest.approx(10.0)


def test_model_rejects_bad_inputs():
    with pytest.raises(PlanError):
        ExperimentScheduleModel(COSTS, 0)
    with pytest.raises(PlanError):
        ExperimentScheduleModel({"a": -1.0}, 2)


def test_assignment_needs_a_solved_model():
    with pytest.raises(PlanError):
        ExperimentScheduleModel(COSTS, 2).assignment()


def test_longest_first_keeps_plan_order_in_a_lane():
    lanes = longest_first(COSTS, 2)
    order = list(COSTS)
    for lane in lanes:
        assert lane == sorted(lane, key=order.index)
    assert max(lane_loads(lanes, COSTS)) <= 11.0


def test_single_worker_runs_the_plan_in_order():
    assert schedule_experiments(COSTS, 1) == [list(COSTS)]


def test_lanes_never_outnumber_experiments():
    lanes = schedule_experiments({"a": 1.0, "b": 2.0}, 8)
    assert len(lanes) == 2
    assert all(lanes)


def test_empty_schedule():
    assert schedule_experiments({}, 4) == []


def test_cost_ordering():
    assert estimate_cost("classify-pde", {"radii": [2, 4, 8]}) > estimate_cost("oracle", {})
    assert estimate_cost("sweep", {"points": [{}, {}]}) == 80.0
    assert estimate_cost("simulate", {"n": 100, "replicas": 100}) == pytest.approx(1.0)
