import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from errors import GridError

MAX_RATIO = 1.1
MAX_LOG_JUMP = 1.0


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """
    radial nodes, possibly nonuniform. symmetric_origin marks a first node at
    r = 0 carrying the condition u_r(0, t) = 0.
    """
    nodes: np.ndarray
    symmetric_origin: bool = False

    def __len__(self):
        return self.nodes.size

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    def index_of(self, r: float) -> int:
        return int(np.argmin(np.abs(self.nodes - r)))


def uniform_grid(lo: float, hi: float, nodes: int) -> RadialGrid:
    if not hi > lo or nodes < 3:
        raise GridError("uniform grid needs hi > lo and at least 3 nodes")
    return RadialGrid(np.linspace(lo, hi, nodes), symmetric_origin=(lo == 0))


def _layer(h_min: float, h_max: float, ratio: float) -> np.ndarray:
    steps = []
    h = h_min
    while h < h_max:
        steps.append(h)
        h *= ratio
    return np.asarray(steps)


def clustered_grid(
    lo: float,
    hi: float,
    nodes: int = 400,
    cluster: Sequence[str] = ("hi",),
    ratio: float = MAX_RATIO,
    h_min: Optional[float] = None,
) -> RadialGrid:
    """
    geometric refinement towards the ends listed in cluster, spacing growing by at
    most ratio per cell up to the interior spacing.

    :param lo: left end (0 gives a symmetric origin node unless clustered)
    :param hi: right end
    :param nodes: rough node budget; the interior spacing is 2 (hi - lo) / nodes
    :param cluster: subset of {"lo", "hi"}
    :param ratio: growth factor of consecutive spacings, at most 1.1
    :param h_min: spacing next to a clustered end
    """
    if not hi > lo:
        raise GridError("grid needs hi > lo")
    if ratio > MAX_RATIO or ratio <= 1:
        raise GridError(f"clustering ratio must lie in (1, {MAX_RATIO}]")
    length = hi - lo
    h_max = 2.0 * length / max(nodes, 4)
    if h_min is None:
        h_min = h_max / 50
        if "lo" in cluster and lo > 0:
            h_min = min(h_min, lo / 20)
    h_min = min(h_min, h_max)

    left = _layer(h_min, h_max, ratio) if "lo" in cluster else np.zeros(0)
    right = _layer(h_min, h_max, ratio)[::-1] if "hi" in cluster else np.zeros(0)
    middle = length - left.sum() - right.sum()
    if middle <= 0:
        raise GridError("interval too short for the requested clustering")
    cells = max(int(math.ceil(middle / h_max)), 1)
    steps = np.concatenate([left, np.full(cells, middle / cells), right])

    r = lo + np.concatenate([[0.0], np.cumsum(steps)])
    r[-1] = hi
    return RadialGrid(r, symmetric_origin=(lo == 0 and "lo" not in cluster))


def check_resolution(grid: RadialGrid, P: Callable) -> None:
    """
    raises GridError when log P jumps by more than one unit between neighbours.
    """
    r = grid.nodes
    with np.errstate(all='ignore'):
        values = np.asarray(P(r), dtype=float)
        log_p = np.log(values)
    interior = np.isfinite(log_p)
    if not interior[1:-1].all():
        raise GridError("diffusion coefficient not positive and finite at interior nodes")
    jumps = np.abs(np.diff(log_p[interior]))
    if jumps.size and jumps.max() > MAX_LOG_JUMP:
        worst = int(np.argmax(jumps))
        raise GridError(f"grid does not resolve the diffusion coefficient near r={r[interior][worst]:.4g}")
