"""Command-line entry point: ``pomcpe run | gridsearch | validate | dump-domain``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .domains import TigerParams, build_layout
from .domains.hallway import dump_layout, parse_layout
from .harness import DomainSpec, RunConfig, grid_search, run_batch, validate_command
from .planners import PlannerConfig

# flag name -> (section, field); section None is a RunConfig field
OVERRIDES = {
    "domain": ("domain", "name"),
    "k1": ("domain", "k1"),
    "k2": ("domain", "k2"),
    "start": ("domain", "start"),
    "c": ("planner_config", "exploration_c"),
    "e": ("planner_config", "entropy_e"),
    "k_threshold": ("planner_config", "k_threshold"),
    "sims": ("planner_config", "simulations"),
    "time_ms": ("planner_config", "time_ms"),
    "particles": ("planner_config", "initial_particles"),
    "epsilon": ("planner_config", "epsilon"),
    "combine": ("planner_config", "entropy_combine"),
    "final": ("planner_config", "final_selection"),
    "planner": (None, "planner"),
    "episodes": (None, "episodes"),
    "max_steps": (None, "max_steps"),
    "seed": (None, "base_seed"),
    "out": (None, "out"),
    "workers": (None, "workers"),
    "backend": (None, "backend"),
}


def _k_threshold(text: str) -> float:
    return math.inf if text.lower() in ("inf", "infinity") else int(text)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _add_run_options(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only flags given on the command line override the config file
    p.add_argument("--config", type=Path, help="JSON file mirroring RunConfig")
    p.add_argument("--domain", choices=("hallway", "tiger"))
    p.add_argument("--k1", type=int)
    p.add_argument("--k2", type=int)
    p.add_argument("--start", choices=("standard", "modified"))
    p.add_argument("--planner", choices=("pomcp", "pomcpe"))
    p.add_argument("--c", type=float, help="UCB1 exploration constant")
    p.add_argument("--e", type=float, help="entropy bonus scale")
    p.add_argument("--k-threshold", type=_k_threshold, help="particles before entropy back-propagation (or 'inf')")
    p.add_argument("--sims", type=int, help="simulations per step")
    p.add_argument("--time-ms", type=float, help="wall-clock budget per step; overrides --sims")
    p.add_argument("--particles", type=int, help="root particle-filter size")
    p.add_argument("--epsilon", type=float, help="depth cutoff: stop once gamma**depth < epsilon")
    p.add_argument("--combine", choices=("sum", "max"), help="how immediate and stored entropy reductions combine")
    p.add_argument("--final", choices=("value", "visits"), help="rule for the executed root action")
    p.add_argument("--episodes", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--seed", type=int, help="base seed; episode i uses seed + i")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--backend", choices=("compiled", "reference"))


def build_config(args: argparse.Namespace) -> RunConfig:
    base = {}
    if args.config is not None:
        base = json.loads(args.config.read_text())
    cfg = RunConfig.from_dict(base) if base else RunConfig()
    domain = asdict(cfg.domain)
    domain["tiger"] = cfg.domain.tiger
    planner = cfg.planner_config.to_dict()
    top = {}
    for flag, (section, name) in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        {"domain": domain, "planner_config": planner, None: top}[section][name] = value
    if args.time_ms is not None and args.sims is None:
        planner["simulations"] = None
    domain_spec = DomainSpec(**{k: v for k, v in domain.items() if k != "tiger"}, tiger=domain.get("tiger", TigerParams()))
    return replace(cfg, domain=domain_spec, planner_config=PlannerConfig.from_dict(planner), **top)


def _print_stats(stats, label: str = "") -> None:
    if stats.empty:
        print(f"{label}0 completed episodes ({stats.errors} errors)")
        return
    print(
        f"{label}episodes={stats.completed} errors={stats.errors} "
        f"discounted={stats.mean_discounted:.3f}±{stats.std_discounted:.3f} "
        f"cumulative={stats.mean_cumulative:.3f}±{stats.std_cumulative:.3f} "
        f"success={stats.success_rate:.2f}"
    )


def cmd_run(args) -> int:
    cfg = build_config(args)
    stats, _ = run_batch(cfg)
    _print_stats(stats)
    if cfg.out:
        print(f"wrote {cfg.out}")
    return 0 if stats.errors == 0 else 1


def cmd_gridsearch(args) -> int:
    cfg = build_config(args)
    cells = grid_search(cfg, _floats(args.c_grid), _floats(args.e_grid), args.episodes_per_cell)
    for rank, cell in enumerate(cells, start=1):
        _print_stats(cell.stats, f"{rank:>3}  c={cell.c:g} e={cell.e:g}  ")
    return 0


def cmd_validate(args) -> int:
    layouts = None
    if args.layout:
        layouts = {str(p): parse_layout(Path(p).read_text()) for p in args.layout}
    report = validate_command(layouts)
    print(report.render())
    return 0 if report.ok else 1


def cmd_dump_domain(args) -> int:
    if args.domain == "tiger":
        from .domains import tiger_model

        m = tiger_model()
        text = "\n".join([
            "# tiger: states " + ", ".join(m.state_names),
            "# actions " + ", ".join(m.action_names),
            "# observations " + ", ".join(m.observation_names),
        ]) + "\n"
    else:
        text = dump_layout(build_layout(args.k1, args.k2))
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pomcpe", description="POMCP and entropy-guided POMCPe experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a batch of episodes and write per-episode CSV")
    _add_run_options(run)
    run.set_defaults(func=cmd_run)

    grid = sub.add_parser("gridsearch", help="batch per (c, e) cell, ranked by mean discounted return")
    _add_run_options(grid)
    grid.add_argument("--c-grid", "--cs", dest="c_grid", default="20,50,100,142", help="comma-separated c values")
    grid.add_argument("--e-grid", "--es", dest="e_grid", default="0,100,500", help="comma-separated e values")
    grid.add_argument("--episodes-per-cell", type=int)
    grid.set_defaults(func=cmd_gridsearch)

    val = sub.add_parser("validate", help="entropy-cache, Tiger and layout self-checks")
    val.add_argument("--layout", action="append", help="validate this layout file instead of the built-in ones")
    val.set_defaults(func=cmd_validate)

    dump = sub.add_parser("dump-domain", help="write a domain description")
    dump.add_argument("--domain", choices=("hallway", "tiger"), default="hallway")
    dump.add_argument("--k1", type=int, default=1)
    dump.add_argument("--k2", type=int, default=1)
    dump.add_argument("--out")
    dump.set_defaults(func=cmd_dump_domain)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
