# cli.py
import argparse
import json
import os
import sys

from dotenv import load_dotenv

from app.kac_decay.assets.errors import KacError
from app.kac_decay.assets.experiment_config import MODELS, RuntimeSettings, load_config
from app.kac_decay.connectors.result_files import dumps
from app.kac_decay.pipelines.energy_decay_pipeline import run_energy_decay_pipeline
from app.kac_decay.pipelines.entropy_decay_pipeline import run_entropy_decay_pipeline
from app.kac_decay.pipelines.info_decay_pipeline import run_info_decay_pipeline
from app.kac_decay.pipelines.k_matrix_pipeline import run_k_matrix_pipeline
from app.kac_decay.pipelines.momentum_decay_pipeline import run_momentum_decay_pipeline
from app.kac_decay.pipelines.ou_check_pipeline import run_ou_check_pipeline
from app.kac_decay.pipelines.verify_pipeline import run_verify_pipeline

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2

# -----------------------------------------------------------------------------
# Subcommand routing
# -----------------------------------------------------------------------------
ROUTES = {
    "energy-decay": run_energy_decay_pipeline,
    "momentum-decay": run_momentum_decay_pipeline,
    "k-matrix": run_k_matrix_pipeline,
    "ou-check": run_ou_check_pipeline,
    "info-decay": run_info_decay_pipeline,
    "entropy-decay": run_entropy_decay_pipeline,
    "verify": run_verify_pipeline,
}


def default_config_path(command: str) -> str:
    return os.path.join(CONFIG_DIR, f"{command.replace('-', '_')}.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kac-decay", description="Kac master equation decay experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in ROUTES:
        p = sub.add_parser(command)
        p.add_argument("--config", help="experiment JSON (default: configs/<command>.json)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="worker processes (never changes results)")
        p.add_argument("--out", help="output file path")
        p.add_argument("--model", choices=MODELS, help="override the config model")
    return parser


def error_record(exc: KacError) -> dict:
    return {
        "ok": False,
        "error": type(exc).__name__,
        "message": str(exc),
        "field": getattr(exc, "field", None),
    }


def main(argv=None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    settings = RuntimeSettings.from_env()
    try:
        config = load_config(
            args.config or default_config_path(args.command),
            {
                "seed": args.seed,
                "workers": args.workers if args.workers is not None else settings.workers,
                "output": args.out,
                "model": args.model,
            },
        )
        result = ROUTES[args.command](config, settings)
    except KacError as exc:
        print(json.dumps(error_record(exc), sort_keys=True))
        return EXIT_ERROR
    print(dumps({"ok": result.ok, "command": args.command, "output": result.output, "summary": result.summary}))
    return EXIT_OK if result.ok else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
