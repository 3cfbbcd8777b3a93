from typing import Any, Dict, List, Tuple

# model sections in the plan-file format; expected verdicts are the theory answers


def _model(d=3, p=2.0, m=0.0, alpha=1.0, beta=0.0, domain="full", coefficient=1.0, C0=1.0) -> Dict[str, Any]:
    return {
        "d": d,
        "p": p,
        "motion": {"kind": "radial_power", "m": m, "C0": C0, "coefficient": coefficient},
        "alpha": alpha,
        "beta": beta,
        "domain": {"kind": domain},
        "horizon": 1.0,
    }


def stretched(C1: float, C2: float, s: float) -> Dict[str, Any]:
    return {"kind": "stretched_exp", "C1": C1, "C2": C2, "s": s}


HALF_LAPLACIAN = {"coefficient": 0.5, "C0": 2.0}

ORACLE_MATRIX: List[Tuple[str, Dict[str, Any], str]] = [
    ("brownian-constant-alpha", _model(), "Holds"),
    ("stretched-alpha-m1", _model(m=1.0, alpha=stretched(1.0, 1.0, 1.0)), "Holds"),
    ("fast-decaying-alpha-m0", _model(alpha=stretched(1.0, 1.0, 2.5)), "Fails"),
    ("fast-motion-d3", _model(m=3.0), "Fails"),
    ("fast-motion-d2", _model(d=2, m=3.0), "Fails"),
    ("slow-motion-line", _model(d=1, m=2.8), "Holds"),
    ("fast-motion-line", _model(d=1, p=1.5, m=2.8), "Fails"),
    ("growing-alpha-d3", _model(m=3.0, alpha={"kind": "power_law", "c": 1.0, "q": 1.0}), "Holds"),
    ("fast-motion-damped", _model(m=3.0, beta=-1.0), "Fails"),
    ("punctured-d3", _model(domain="punctured", **HALF_LAPLACIAN), "Fails"),
    ("punctured-d4", _model(d=4, domain="punctured", **HALF_LAPLACIAN), "Holds"),
    ("punctured-d3-damped", _model(domain="punctured", beta={"kind": "inverse_square", "kappa0": -2.0},
                                   **HALF_LAPLACIAN), "Holds"),
]

# alpha = exp(-|x|^(2-m)) for m in {0, 1, 2}
M_SWEEP = [{"motion.m": m, "alpha": stretched(1.0, 1.0, 2.0 - m)} for m in (0.0, 1.0, 2.0)]


def oracle_plan(seed: int = 0) -> Dict[str, Any]:
    """the matrix as a plan of oracle experiments"""
    return {
        "seed": seed,
        "experiments": [
            {"name": name, "subcommand": "oracle", "model": model, "params": {"expected": expected}, "seed": seed}
            for name, model, expected in ORACLE_MATRIX
        ],
    }


def sweep_plan(seed: int = 0) -> Dict[str, Any]:
    return {
        "seed": seed,
        "model": _model(),
        "experiments": [
            {"name": "m-sweep", "subcommand": "sweep", "params": {"points": M_SWEEP}, "seed": seed},
        ],
    }
