import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from smgo.config import settings
from smgo.lib.bench import list_functions
from smgo.lib.errors import SMGOError
from smgo.lib.experiment import ExperimentSpec, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="SMGO experiment runner")
    parser.add_argument("command", choices=["run", "list"], default="run", nargs="?")
    parser.add_argument("--function", default=None, help="Benchmark name (see the list command)")
    parser.add_argument("--dim", type=int, default=None)
    parser.add_argument("--budget", type=int, default=settings.budget, help="Evaluations per trial")
    parser.add_argument("--trials", type=int, default=settings.trials)
    parser.add_argument("--optimizer", choices=["smgo", "random"], default=settings.optimizer)
    parser.add_argument("--alpha", type=float, default=settings.alpha)
    parser.add_argument("--mu", type=float, default=settings.mu)
    parser.add_argument("--seed", type=int, default=settings.base_seed, help="Trial t uses seed + t")
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument("--gap", action="store_true", help="Write optimality-gap certificates (D <= 3)")
    parser.add_argument("--plot", action="store_true", help="Write an SVG convergence plot")
    parser.add_argument("--log-y", action="store_true", help="Log-scale y axis on the plot")
    parser.add_argument("--format", choices=["csv", "json"], default=settings.output_format)
    parser.add_argument("--workers", type=int, default=settings.max_workers)
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def print_functions() -> None:
    print(f"{'name':<18}{'low':>10}{'high':>10}  z*")
    for name, low, high, zstar in list_functions():
        print(f"{name:<18}{low:>10g}{high:>10g}  {zstar}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.out:
        settings.out_root = Path(args.out)

    if args.command == "list":
        print_functions()
        return 0

    if args.function is None or args.dim is None:
        print("[error] run needs --function and --dim", file=sys.stderr)
        return 2

    try:
        spec = ExperimentSpec(
            function=args.function,
            dim=args.dim,
            budget=args.budget,
            trials=args.trials,
            optimizer=args.optimizer,
            alpha=args.alpha,
            mu=args.mu,
            seed=args.seed,
            out=settings.out_root,
            gap=args.gap,
            plot=args.plot,
            log_y=args.log_y,
            format=args.format,
            workers=args.workers,
        )
        # alpha and mu are checked by EngineConfig
        spec.engine_config(0)
    except (ValidationError, ValueError) as e:
        print(f"[error] Invalid arguments: {e}", file=sys.stderr)
        return 2

    print(f"[info] {spec.optimizer} on {spec.function} D={spec.dim}: {spec.trials} trials x {spec.budget} evaluations")
    try:
        result = run_experiment(spec)
    except ValueError as e:
        print(f"[error] {e}", file=sys.stderr)
        return 2
    except (SMGOError, RuntimeError, OSError) as e:
        print(f"[error] {e}", file=sys.stderr)
        return 1

    print(f"[ok] Final best: mean={result.final_mean:.6g} median={result.final_median:.6g}")
    print(f"[ok] Summary: {result.summary_file}")
    if result.plot_file:
        print(f"[ok] Plot: {result.plot_file}")
    if result.gap_file:
        print(f"[ok] Gap certificates: {result.gap_file}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
