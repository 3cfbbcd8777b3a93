import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from errors import MissingArtifacts
from formatter import read_csv, write_atomic, write_csv
from logger import get_logger
from theory import Outcome, Verdict

logger = get_logger(__name__)

AGREE = "AGREE"
DISAGREE = "DISAGREE"
ORACLE_UNDETERMINED = "ORACLE-UNDETERMINED"
NOT_APPLICABLE = "N/A"

OK = "OK"
FAILED = "FAILED"

SUMMARY_FILE = "summary.csv"
REPORT_FILE = "report.csv"
REPORT_TEXT = "report.txt"

SUMMARY_COLUMNS = ["name", "subcommand", "config_hash", "numeric", "oracle", "agreement", "status", "error"]
REPORT_COLUMNS = ["name", "subcommand", "config_hash", "oracle", "pde", "mc", "agreement", "status", "error"]

# experiment kinds whose numeric verdict comes from the PDE side
PDE_KINDS = {"classify-pde", "barrier", "sweep"}
MC_KINDS = {"simulate", "hitting", "loglaplace", "feller"}


@dataclass
class ExperimentResult:
    """
    outcome of one experiment: its CSV rows plus the verdict pair joined in the summary.

    :param name: experiment name from the plan
    :param subcommand: experiment kind
    :param config_hash: hash of the model the experiment ran on
    :param rows: rows of the per-experiment CSV
    :param numeric: verdict produced by the numerics, None if the experiment yields none
    :param oracle: theory verdict for the same config
    :param estimate: free-text numeric summary, e.g. an estimate with its CI
    :param error: error message when the experiment failed
    :param partial: True when rows hold statistics of an aborted run
    :param tables: extra CSVs written as <name>.<key>.csv
    """
    name: str
    subcommand: str
    config_hash: str = ""
    rows: List[Dict[str, Any]] = field(default_factory=list)
    numeric: Optional[Verdict] = None
    oracle: Optional[Verdict] = None
    estimate: str = ""
    error: str = ""
    partial: bool = False
    tables: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return bool(self.error)


def agreement(numeric: Optional[Verdict], oracle: Optional[Verdict]) -> str:
    if oracle is None:
        return NOT_APPLICABLE
    if oracle.value == Outcome.UNDETERMINED:
        return ORACLE_UNDETERMINED
    if numeric is None or numeric.value == Outcome.UNDETERMINED:
        return NOT_APPLICABLE
    return AGREE if numeric.value == oracle.value else DISAGREE


def summary_row(result: ExperimentResult) -> Dict[str, Any]:
    numeric = result.estimate
    if result.numeric is not None:
        numeric = result.numeric.value.value + (f" ({result.estimate})" if result.estimate else "")
    error = result.error
    if result.partial:
        error = f"partial: {error}"
    return {
        "name": result.name,
        "subcommand": result.subcommand,
        "config_hash": result.config_hash,
        "numeric": numeric,
        "oracle": result.oracle.value.value if result.oracle is not None else "",
        "agreement": agreement(result.numeric, result.oracle) if not result.failed else NOT_APPLICABLE,
        "status": FAILED if result.failed else OK,
        "error": error,
    }


def merge_results(results: Sequence[ExperimentResult]) -> List[Dict[str, Any]]:
    """summary rows in the order given, the plan order"""
    return [summary_row(result) for result in results]


def _report_row(row: Dict[str, str]) -> Dict[str, str]:
    kind = row.get("subcommand", "")
    numeric = row.get("numeric", "")
    return {
        "name": row.get("name", ""),
        "subcommand": kind,
        "config_hash": row.get("config_hash", ""),
        "oracle": row.get("oracle", ""),
        "pde": numeric if kind in PDE_KINDS else "",
        "mc": numeric if kind in MC_KINDS else "",
        "agreement": row.get("agreement", ""),
        "status": row.get("status", ""),
        "error": row.get("error", ""),
    }


def report_text(rows: Sequence[Dict[str, str]]) -> str:
    flags = Counter(row["agreement"] for row in rows)
    status = Counter(row["status"] for row in rows)
    decided = flags[AGREE] + flags[DISAGREE]
    rate = f"{flags[AGREE] / decided:.1%}" if decided else "n/a"

    lines = [
        f"experiments: {len(rows)} ({status[OK]} ok, {status[FAILED]} failed)",
        f"agreement rate: {rate} ({flags[AGREE]} agree, {flags[DISAGREE]} disagree, "
        f"{flags[ORACLE_UNDETERMINED]} oracle undetermined, {flags[NOT_APPLICABLE]} n/a)",
        "",
    ]
    width = max([len(row["name"]) for row in rows] + [4])
    for row in rows:
        parts = [f"oracle={row['oracle'] or '-'}"]
        if row["pde"]:
            parts.append(f"pde={row['pde']}")
        if row["mc"]:
            parts.append(f"mc={row['mc']}")
        parts.append(row["agreement"])
        if row["status"] == FAILED:
            parts.append(f"FAILED: {row['error']}")
        lines.append(f"{row['name']:<{width}}  " + "  ".join(parts))
    return "\n".join(lines) + "\n"


def emit_report(out_dir: str) -> str:
    """
    consolidates summary.csv of a (possibly partial) run into report.csv and report.txt

    :param out_dir: output directory of the run
    :return: path of the text report
    """
    path = os.path.join(out_dir, SUMMARY_FILE)
    if not os.path.exists(path):
        raise MissingArtifacts(f"no {SUMMARY_FILE} in {out_dir}")
    rows = [_report_row(row) for row in read_csv(path)]
    missing = [row["name"] for row in rows
               if row["status"] == OK and not os.path.exists(os.path.join(out_dir, f"{row['name']}.csv"))]
    if missing:
        raise MissingArtifacts(f"experiment CSVs missing for {', '.join(missing)}")

    write_csv(os.path.join(out_dir, REPORT_FILE), rows, REPORT_COLUMNS)
    text = report_text(rows)
    target = write_atomic(os.path.join(out_dir, REPORT_TEXT), text)
    logger.info(f"report for {len(rows)} experiments written to {target}")
    return target
