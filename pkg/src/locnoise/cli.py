"""Command-line entry point.

    locnoise attack --model random:7 --images synthetic:11:50 \
        --methods fgsm,pgd,cw --gammas 1.0,0.75,0.5,0.25 --out results

Exits 0 on success and 1 on a fatal configuration or I/O problem.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import LocnoiseError
from .harness import ExperimentSpec, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="locnoise")
    sub = parser.add_subparsers(dest="command", required=True)

    atk = sub.add_parser("attack", help="run a method x gamma attack campaign")
    atk.add_argument("--model", required=True,
                     help="weight file path, or random:SEED for a seeded random model")
    atk.add_argument("--images", required=True,
                     help="directory of .png/.ltns images, or synthetic:SEED:COUNT")
    atk.add_argument("--methods", default="fgsm,pgd,cw",
                     help="comma-separated subset of fgsm,pgd,cw")
    atk.add_argument("--gammas", default="1.0,0.75,0.5,0.25",
                     help="comma-separated mask coverage fractions (must include 1.0)")
    atk.add_argument("--epsilon", type=float, help="L-inf budget override for all methods")
    atk.add_argument("--alpha", type=float, help="PGD step size override")
    atk.add_argument("--lr", type=float, help="C&W learning rate override")
    atk.add_argument("--c", type=float, help="C&W margin weight override")
    atk.add_argument("--kappa", type=float, help="C&W margin floor override")
    atk.add_argument("--max-iters", type=int, help="iteration cap override")
    atk.add_argument("--out", required=True, help="output directory for CSVs and dumps")
    atk.add_argument("--dump-images", action="store_true",
                     help="write adversarial images and noise heat maps")
    atk.add_argument("--workers", type=int, default=1, help="parallel attack workers")
    atk.add_argument("--seed", type=int,
                     help="enable seeded random-start PGD with this seed")
    return parser


def _overrides(args: argparse.Namespace, methods: tuple[str, ...]) -> dict:
    common = {}
    if args.epsilon is not None:
        common["epsilon"] = args.epsilon
    if args.max_iters is not None:
        common["max_iters"] = args.max_iters
    per_method = {m: dict(common) for m in methods}
    if args.alpha is not None and "pgd" in per_method:
        per_method["pgd"]["alpha"] = args.alpha
    if "cw" in per_method:
        if args.lr is not None:
            per_method["cw"]["eta"] = args.lr
        if args.c is not None:
            per_method["cw"]["c"] = args.c
        if args.kappa is not None:
            per_method["cw"]["kappa"] = args.kappa
    return {m: kw for m, kw in per_method.items() if kw}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    gammas = tuple(float(g) for g in args.gammas.split(",") if g.strip())
    try:
        spec = ExperimentSpec(
            model=args.model,
            images=args.images,
            methods=methods,
            gammas=gammas,
            overrides=_overrides(args, methods),
            out_dir=args.out,
            workers=args.workers,
            dump_images=args.dump_images,
            seed=args.seed,
        )
        rows = run_experiment(spec)
    except (LocnoiseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for r in rows:
        iters = f"{r.avg_iters:8.2f}" if r.avg_iters is not None else "       -"
        print(f"{r.method:>4} gamma={r.gamma:4.2f} asr={r.asr:5.3f} avg_iters={iters}")
    print(f"report written to {spec.out_dir}/report.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
