"""
Command-line entry point for the stretched-cluster simulator.

    python app.py validate scenarios/reference-fifo.json
    python app.py run scenarios/reference-fifo.json --seed 7 --out out/ref
    python app.py compare scenarios/reservation-vs-fifo.json --variants fifo,reservation-backfill
"""
import argparse
import sys

from components.compare import render_compare
from components.run import render_run
from components.validate import EXIT_INVALID, render_validate
from models.entities import RunManifest
from utils.config import configure_logging


def _policy_override(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VAL, got '{text}'")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _variant_list(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stretchsim",
        description="Discrete-event simulator of a stretched multi-tenant GPU cluster",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate", help="check a scenario file")
    validate.add_argument("path")

    run = sub.add_parser("run", help="simulate a scenario and write reports")
    run.add_argument("path")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", default="out")
    run.add_argument("--policy", type=_policy_override, action="append", default=[],
                     metavar="KEY=VAL")

    compare = sub.add_parser("compare", help="run policy variants side by side")
    compare.add_argument("path")
    compare.add_argument("--variants", type=_variant_list, default=None)
    compare.add_argument("--seed", type=int, default=None)
    compare.add_argument("--out", default=None)
    return parser


def main(argv=None):
    configure_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; bad arguments are validation failures here.
        return EXIT_INVALID if e.code else 0

    if args.command == "validate":
        return render_validate(args.path)
    if args.command == "run":
        manifest = RunManifest(args.path, args.out, args.seed, tuple(args.policy))
        return render_run(manifest)
    return render_compare(args.path, args.variants, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
