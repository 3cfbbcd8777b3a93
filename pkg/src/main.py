import argparse
import sys
from typing import List, Optional

from errors import MissingArtifacts, PlanError, SupcritError
from logger import get_logger
from merge import emit_report
from runner import SUBCOMMANDS, load_plan, run

logger = get_logger("main")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_PLAN = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="supcrit",
        description="compact support experiments for superprocesses: PDE classifiers, "
                    "particle estimators and the theory oracle",
    )
    parser.add_argument("subcommand", choices=("run",) + SUBCOMMANDS + ("report",))
    parser.add_argument("--plan", help="experiment plan (JSON)")
    parser.add_argument("--out", help="output directory, run.out by default")
    parser.add_argument("--seed", type=int, help="seed for experiments that do not name one")
    parser.add_argument("--config", help="settings file, src/conf.json by default")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.subcommand == "report":
        if not args.out:
            print("report needs --out", file=sys.stderr)
            return EXIT_PLAN
        try:
            with open(emit_report(args.out), "r") as f:
                print(f.read(), end="")
        except MissingArtifacts as error:
            logger.error(str(error))
            print(f"error: {error}", file=sys.stderr)
            return EXIT_PARTIAL
        return EXIT_OK

    try:
        data = None
        if args.plan is None and args.subcommand == "oracle":
            from examples.configs import oracle_plan
            data = oracle_plan(args.seed or 0)
        plan = load_plan(args.plan, args.config, args.seed, args.out, data=data).only(args.subcommand)
    except PlanError as error:
        logger.error(f"plan rejected: {error}")
        print(f"plan error: {error}", file=sys.stderr)
        return EXIT_PLAN

    try:
        results = run(plan)
    except SupcritError as error:
        logger.error(f"run aborted: {error}")
        print(f"error: {error}", file=sys.stderr)
        return EXIT_PARTIAL

    failed = [r.name for r in results if r.failed]
    for result in results:
        print(f"{result.name}: {'FAILED ' + result.error if result.failed else 'ok'}")
    if failed:
        logger.warning(f"{len(failed)} experiments failed: {failed}")
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
