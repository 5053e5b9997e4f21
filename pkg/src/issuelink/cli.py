"""Command-line entry point: ``issuelink <stage> --config run.yaml``.

Exit status: 0 on success, 1 for configuration or validation errors and
missing prerequisite artifacts, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Sequence

from . import __version__
from .config import ConfigError, load_config
from .corpus import IngestError
from .stages import (
    StageError,
    Workspace,
    cmd_all,
    cmd_coverage,
    cmd_evaluate,
    cmd_ingest,
    cmd_rerank,
    cmd_retrieve,
    cmd_train,
)

logger = logging.getLogger("issuelink")

COMMANDS = {
    "ingest": (cmd_ingest, "parse issue and commit exports, filter commits, mine true links"),
    "coverage": (cmd_coverage, "report how many true links each time window keeps"),
    "retrieve": (cmd_retrieve, "rank candidate commits for every linked issue"),
    "train": (cmd_train, "split chronologically and fit the learned rerankers"),
    "rerank": (cmd_rerank, "rerank the top candidates of test issues"),
    "evaluate": (cmd_evaluate, "score retrieval and reranking runs on the test split"),
    "all": (cmd_all, "run every stage in order"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", required=True, help="run config (YAML)")
    common.add_argument("--output", "-o", help="override output_dir from the config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--workers", type=int, help="parallel workers (default: config, then CPU count)")
    common.add_argument("--verbose", "-v", action="store_true", help="log progress")
    parser = argparse.ArgumentParser(prog="issuelink", description="Recover links between issues and commits.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def _render(result) -> str:
    if isinstance(result, str):
        return result
    return json.dumps(result, sort_keys=True, indent=1)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, {"output_dir": args.output, "seed": args.seed})
        ws = Workspace(cfg, args.workers)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        fn, _ = COMMANDS[args.command]
        print(_render(fn(ws)))
        print(f"artifacts: {ws.dir('evaluate' if args.command == 'all' else args.command)}", file=sys.stderr)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (IngestError, ValueError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1 if isinstance(exc, IngestError) else 2
    except Exception as exc:  # anything else is a runtime failure
        logger.debug("unhandled error", exc_info=True)
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
