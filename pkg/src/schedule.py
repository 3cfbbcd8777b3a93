from typing import Dict, List, Sequence, Tuple

import pulp

from errors import PlanError
from logger import get_logger

logger = get_logger(__name__)

# beyond this many experiments the milp is replaced by the greedy rule
MILP_LIMIT = 64

COST_WEIGHTS = {
    "classify-pde": 40.0,
    "barrier": 10.0,
    "feller": 2.0,
    "oracle": 0.01,
}


def estimate_cost(subcommand: str, params: Dict) -> float:
    """
    rough relative cost of one experiment; only the ordering matters to the scheduler.

    :param subcommand: experiment kind
    :param params: experiment parameters
    :return: a positive cost
    """
    if subcommand in ("simulate", "hitting", "loglaplace"):
        n = float(params.get("n", 200))
        replicas = float(params.get("replicas", 400))
        rungs = len(params.get("eps_ladder", [])) or len(params.get("n_ladder", [])) or 1
        return max(1e-3, 1e-4 * n * replicas * rungs)
    if subcommand == "sweep":
        return 40.0 * max(1, len(params.get("points", [])))
    base = COST_WEIGHTS.get(subcommand, 1.0)
    radii = len(params.get("radii", [])) or 1
    return base * radii


class ExperimentScheduleModel:
    def __init__(self, costs: Dict[str, float], workers: int):
        """
        assigns experiments to worker threads minimising the makespan

        :param costs: {experiment name: estimated cost}
        :param workers: number of worker threads
        """
        if workers < 1:
            raise PlanError("at least one worker is needed")
        elif any(c < 0 for c in costs.values()):
            raise PlanError("experiment costs must be non-negative")

        self.costs = costs
        self.experiments = list(costs.keys())
        self.workers = range(workers)

        self.problem = pulp.LpProblem("ExperimentSchedule", pulp.LpMinimize)

        self.add_variables()
        self.add_constraints()
        self.build_objective_function()

    def add_variables(self):
        # y[e,w]: 1 if experiment e runs on worker w
        self.y = pulp.LpVariable.dicts(
            "y",
            [(e, w) for e in range(len(self.experiments)) for w in self.workers],
            cat=pulp.LpBinary
        )
        # load of each worker and the makespan above them
        self.T_w = pulp.LpVariable.dicts("T_w", self.workers, lowBound=0)
        self.T = pulp.LpVariable("Makespan", lowBound=0)

    def add_constraints(self):
        for e in range(len(self.experiments)):
            self.problem += (
                pulp.lpSum(self.y[e, w] for w in self.workers) == 1,
                f"Unique_experiment_{e}"
            )

        for w in self.workers:
            self.problem += (
                self.T_w[w] == pulp.lpSum(
                    self.costs[name] * self.y[e, w] for e, name in enumerate(self.experiments)
                ),
                f"Load_w{w}"
            )
            self.problem += (self.T >= self.T_w[w], f"Makespan_{w}")

        # symmetry breaking: the first experiment always lands on worker 0
        if self.experiments:
            self.problem += (self.y[0, 0] == 1, "First_on_w0")

    def build_objective_function(self):
        self.problem += (self.T, "Minimize_Makespan")

    def solve_model(self, solver=None) -> Tuple[str, float]:
        if solver is not None:
            self.problem.solve(solver)
        else:
            self.problem.solve(pulp.PULP_CBC_CMD(msg=False))
        return pulp.LpStatus[self.problem.status], pulp.value(self.problem.objective)

    def assignment(self) -> List[List[str]]:
        """
        :return: one list of experiment names per worker, plan order kept within a worker
        """
        status = pulp.LpStatus[self.problem.status]
        if status != "Optimal":
            raise PlanError(f"Status {status}")
        lanes: List[List[str]] = [[] for _ in self.workers]
        for e, name in enumerate(self.experiments):
            for w in self.workers:
                if pulp.value(self.y[e, w]) > 0.5:
                    lanes[w].append(name)
                    break
        return lanes


def longest_first(costs: Dict[str, float], workers: int) -> List[List[str]]:
    """greedy longest-processing-time assignment"""
    lanes: List[List[str]] = [[] for _ in range(workers)]
    loads = [0.0] * workers
    for name in sorted(costs, key=lambda k: -costs[k]):
        w = loads.index(min(loads))
        lanes[w].append(name)
        loads[w] += costs[name]
    order = {name: i for i, name in enumerate(costs)}
    return [sorted(lane, key=order.__getitem__) for lane in lanes]


def schedule_experiments(costs: Dict[str, float], workers: int) -> List[List[str]]:
    """
    :param costs: {experiment name: estimated cost}, in plan order
    :param workers: number of worker threads
    :return: non-empty lanes of experiment names, one per worker in use
    """
    workers = max(1, min(workers, len(costs)))
    if not costs:
        return []
    if workers == 1:
        return [list(costs)]

    lanes = None
    if len(costs) <= MILP_LIMIT:
        try:
            model = ExperimentScheduleModel(costs, workers)
            status, makespan = model.solve_model()
            logger.info(f"schedule status {status}, makespan {makespan}")
            lanes = model.assignment()
        except (pulp.PulpSolverError, PlanError) as error:
            logger.warning(f"milp schedule unavailable ({error}), using longest-first")
    if lanes is None:
        lanes = longest_first(costs, workers)
    return [lane for lane in lanes if lane]


def lane_loads(lanes: Sequence[Sequence[str]], costs: Dict[str, float]) -> List[float]:
    return [sum(costs[name] for name in lane) for lane in lanes]
