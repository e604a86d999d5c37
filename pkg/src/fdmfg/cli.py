"""Command-line entry point.

Subcommands:
  solve     solve the mean field game and write the equilibrium tables
  simulate  run the network simulator under a stored or fixed policy
  compare   solve, then simulate both policy variants on shared draws
  figure    emit the data table behind one of the documented figures

Exit codes: 0 success, 2 configuration error, 3 grid stability error,
4 solver did not converge (results are still written), 5 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .bundle import emit_bundle
from .config import load_config
from .core import ConfigurationError, DivergenceError, StabilityError
from .experiments import (
    FIGURE_IDS,
    load_policy_csv,
    run_compare,
    run_figure,
    run_simulate,
    run_solve,
)
from .simulator import PolicySource

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STABILITY = 3
EXIT_NO_CONVERGENCE = 4
EXIT_IO = 5

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdmfg",
        description="Mean-field power control: solver, network simulator, comparisons.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML configuration file (omit for defaults)")
        p.add_argument("--out", required=True, help="output directory for the bundle")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed, overrides config")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    common(sub.add_parser("solve", help="solve for the equilibrium policy"))
    p_sim = sub.add_parser("simulate", help="simulate one policy")
    common(p_sim)
    p_sim.add_argument(
        "--policy", required=True,
        help="policy.csv from a solve run, or fixed:<watts>")
    common(sub.add_parser("compare", help="equilibrium vs fixed power"))
    p_fig = sub.add_parser("figure", help="emit one figure's data table")
    common(p_fig)
    p_fig.add_argument("--id", type=int, required=True, choices=FIGURE_IDS,
                       help="figure number")
    return parser


def _policy_source(spec: str, config) -> PolicySource:
    if spec.startswith("fixed:"):
        try:
            watts = float(spec[len("fixed:"):])
        except ValueError as exc:
            raise ConfigurationError(f"bad fixed power spec {spec!r}") from exc
        return PolicySource.fixed_power(watts, config.network.p_max)
    field = load_policy_csv(spec, config.grid)
    return PolicySource.from_equilibrium(field, config.network.p_max)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigurationError(
                    f"--seed must be an unsigned 64-bit integer, got {args.seed}")
            config = replace(config, seed=args.seed)

        extra = {}
        if args.command == "solve":
            bundle, _, extra = run_solve(config)
        elif args.command == "simulate":
            policy = _policy_source(args.policy, config)
            bundle, _ = run_simulate(config, policy)
        elif args.command == "compare":
            bundle, _, extra = run_compare(config)
        else:
            bundle, extra = run_figure(config, args.id)

        emit_bundle(bundle, args.out, config_echo=config.echo, extra=extra)
        logger.info("wrote %d tables to %s", len(bundle.tables), args.out)
        if extra.get("converged") is False:
            logger.warning("solver did not converge; results written anyway")
            return EXIT_NO_CONVERGENCE
        return EXIT_OK
    except StabilityError as exc:
        logger.error("%s", exc)
        return EXIT_STABILITY
    except (ConfigurationError, DivergenceError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        logger.error("%s: %s", getattr(exc, "filename", "I/O error"), exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
