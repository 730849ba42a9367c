"""
Command-line entry point for HyPeR experiments

Subcommands:
    sweep      run a parameter sweep and write rows, summary and manifest
    summarize  recompute the summary table from an existing rows.csv
    tune       select gamma on one simulated problem
    fixture    copy the bundled KuaiRec-style fixture to a directory

Every SweepConfig field is also a flag (`--obs-prob 0.5`, `--methods r-dr,hyper-beta`).
A flat key=value file given with `--config` is read first and flags override it.
Exit code is 0 only when a sweep produced no error rows.
"""

import argparse
import logging
import shutil
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, get_args, get_origin

import pandas as pd
from dotenv import dotenv_values
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from config import Config, config
from opl.core import derive_seed
from opl.errors import OPLError, OutputError
from opl.tracing import flush
from opl.tuner import tune_gamma, tune_gamma_no_replacement

from .outputs import build_manifest, check_writable, emit_outputs, read_manifest, read_rows
from .summary import Summary, summarize
from .sweep import SweepConfig, build_context, error_rows, run_sweep, sweep_jobs

console = Console()
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR_ROWS = 1
EXIT_USAGE = 2


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=verbose)],
        force=True,
    )


# ============================================================================
# CONFIG ASSEMBLY
# ============================================================================

def _is_list_field(name: str) -> bool:
    annotation = SweepConfig.model_fields[name].annotation
    return get_origin(annotation) in (list, List) or any(get_origin(a) in (list, List) for a in get_args(annotation))


def _parse_value(name: str, raw: Any) -> Any:
    """Strings from files and flags; pydantic does the type coercion."""
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if raw.lower() in ("", "none", "null"):
        return None
    if _is_list_field(name):
        return [item.strip() for item in raw.split(",") if item.strip()]
    return raw


def _normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("sweep settings")
    for name, field in SweepConfig.model_fields.items():
        default = "required" if field.is_required() else field.get_default(call_default_factory=True)
        group.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None, metavar="VALUE", help=f"(default: {default})")


def collect_settings(args: argparse.Namespace) -> Dict[str, Any]:
    """Manifest config, then the key=value file, then flags; later sources win."""
    settings: Dict[str, Any] = {}
    if getattr(args, "manifest", None):
        settings.update(read_manifest(args.manifest)["config"])
    if getattr(args, "config", None):
        if not Path(args.config).is_file():
            raise OutputError(f"config file {args.config} does not exist")
        for key, raw in dotenv_values(args.config).items():
            key = _normalize_key(key)
            settings[key] = _parse_value(key, raw) if key in SweepConfig.model_fields else raw
    for name in SweepConfig.model_fields:
        raw = getattr(args, name, None)
        if raw is not None:
            settings[name] = _parse_value(name, raw)
    return {k: v for k, v in settings.items() if v is not None}


def load_sweep_config(args: argparse.Namespace) -> SweepConfig:
    settings = collect_settings(args)
    if "seed" not in settings:
        raise ValueError("--seed is required (or a manifest/config file that sets it)")
    return SweepConfig.model_validate(settings)


# ============================================================================
# DISPLAY
# ============================================================================

def display_config(cfg: SweepConfig, run_name: str) -> None:
    lines = [
        f"[bold]environment[/bold]: {cfg.environment}    [bold]seed[/bold]: {cfg.seed}",
        f"[bold]axis[/bold]: {cfg.axis} = {cfg.values}",
        f"[bold]methods[/bold]: {', '.join(cfg.methods)}",
        f"[bold]sims[/bold]: {cfg.n_sims}    [bold]n[/bold]: {cfg.n}    [bold]actions[/bold]: {cfg.n_actions}    "
        f"[bold]beta[/bold]: {cfg.beta}    [bold]obs_prob[/bold]: {cfg.obs_prob}",
    ]
    console.print(Panel("\n".join(lines), title=f"🚀 {run_name}", border_style="blue", expand=False))


def display_summary(summary: Summary, metric: str = "relative_combined") -> None:
    frame = summary.table[summary.table["metric"] == metric]
    if frame.empty:
        console.print(f"[yellow]⚠️  no '{metric}' values to show[/yellow]")
        return
    table = Table(title=f"📊 {metric} (mean and 95% CI)")
    table.add_column("axis", justify="right")
    table.add_column("method")
    table.add_column("mean", justify="right")
    table.add_column("95% CI", justify="right")
    table.add_column("sims", justify="right")
    for row in frame.itertuples(index=False):
        table.add_row(
            f"{row.axis:g}", row.method, f"{row.mean:.4f}", f"[{row.ci_low:.4f}, {row.ci_high:.4f}]", str(row.n_sims)
        )
    console.print(table)


def display_errors(rows: pd.DataFrame, limit: int = 10) -> None:
    errors = error_rows(rows)
    console.print(f"[red]❌ {len(errors)} error rows[/red]")
    for row in errors.head(limit).itertuples(index=False):
        console.print(f"   {row.method} sim={row.sim} axis={row.axis:g}: {row.error}")
    if len(errors) > limit:
        console.print(f"   ... and {len(errors) - limit} more (see rows.csv)")


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_sweep_config(args)
    out_dir = check_writable(args.out)
    run_name = Config.get_experiment_run_name("sweep", cfg.axis)
    display_config(cfg, run_name)

    with Progress(
        SpinnerColumn(spinner_name="dots"),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        TimeElapsedColumn(),
        console=console,
    ) as progress:
        task = progress.add_task("Running simulations", total=len(sweep_jobs(cfg)))
        rows = run_sweep(cfg, on_job_done=lambda: progress.advance(task))

    summary = summarize(rows, cfg.n_boot_ci, cfg.seed)
    n_errors = len(error_rows(rows))
    manifest = build_manifest(cfg.model_dump(mode="json"), run_name, summary, n_errors)
    paths = emit_outputs(summary, manifest, out_dir, rows)
    flush()

    display_summary(summary)
    console.print(f"💾 Results written to {paths['summary'].parent}")
    if n_errors:
        display_errors(rows)
        return EXIT_ERROR_ROWS
    console.print("[green]✅ Sweep completed without errors[/green]")
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    rows = read_rows(args.rows)
    out_dir = check_writable(args.out)
    summary = summarize(rows, args.n_boot_ci, args.seed)
    manifest = build_manifest(
        {"seed": args.seed, "n_boot_ci": args.n_boot_ci, "rows": str(args.rows)},
        Config.get_experiment_run_name("summarize"),
        summary,
        len(error_rows(rows)),
    )
    emit_outputs(summary, manifest, out_dir)
    display_summary(summary, args.metric)
    console.print("[green]✅ Summary written[/green]")
    return EXIT_OK


def cmd_tune(args: argparse.Namespace) -> int:
    cfg = load_sweep_config(args)
    # same draws as simulation 0 of a sweep with this seed
    seed = derive_seed(cfg.seed, 0)
    ctx = build_context(cfg, seed)
    tuner = tune_gamma_no_replacement if args.without_replacement else tune_gamma
    with console.status("[bold green]Tuning gamma..."):
        result = tuner(ctx.data, cfg.beta, cfg.tuner, cfg.trainer, seed, cfg.uses_estimated_obs)

    table = Table(title=f"🎯 validation value per gamma (beta={cfg.beta})")
    table.add_column("gamma", justify="right")
    table.add_column("mean value", justify="right")
    for gamma, value in result.mean_values.items():
        style = "bold green" if gamma == result.gamma_hat else None
        table.add_row(f"{gamma:.2f}", f"{value:.5f}", style=style)
    console.print(table)
    console.print(f"✅ Selected gamma = {result.gamma_hat:.2f}")

    if args.out:
        out_dir = check_writable(args.out)
        result.table.to_csv(out_dir / "tuning.csv", index=False)
        console.print(f"💾 Replicate table written to {out_dir / 'tuning.csv'}")
    flush()
    return EXIT_OK


def cmd_fixture(args: argparse.Namespace) -> int:
    source = Path(config.FIXTURE_DIR)
    out_dir = check_writable(args.out)
    copied = []
    for path in sorted(source.glob("*.csv")):
        shutil.copy2(path, out_dir / path.name)
        copied.append(path.name)
    if not copied:
        raise OutputError(f"no fixture files found under {source}")
    console.print(f"✅ Copied {', '.join(copied)} to {out_dir}")
    return EXIT_OK


# ============================================================================
# PARSER
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="run_experiments", description="HyPeR off-policy learning experiments")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug-level library logs")
    commands = parser.add_subparsers(dest="command", required=True)

    sweep = commands.add_parser("sweep", help="run a parameter sweep")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.add_argument("--config", help="flat key=value settings file")
    sweep.add_argument("--manifest", help="rerun the sweep recorded in this manifest.json")
    add_config_flags(sweep)
    sweep.set_defaults(handler=cmd_sweep)

    summarize_cmd = commands.add_parser("summarize", help="summarize an existing rows.csv")
    summarize_cmd.add_argument("--rows", required=True, help="rows.csv written by sweep")
    summarize_cmd.add_argument("--out", required=True, help="output directory")
    summarize_cmd.add_argument("--seed", type=int, required=True)
    summarize_cmd.add_argument("--n-boot-ci", type=int, default=config.N_BOOT_CI)
    summarize_cmd.add_argument("--metric", default="relative_combined", help="metric shown in the console table")
    summarize_cmd.set_defaults(handler=cmd_summarize)

    tune = commands.add_parser("tune", help="select gamma on one simulated problem")
    tune.add_argument("--out", help="optional directory for the per-replicate table")
    tune.add_argument("--config", help="flat key=value settings file")
    tune.add_argument("--without-replacement", action="store_true", help="train once on the training split")
    add_config_flags(tune)
    tune.set_defaults(handler=cmd_tune)

    fixture = commands.add_parser("fixture", help="copy the bundled real-data fixture")
    fixture.add_argument("--out", required=True, help="target directory")
    fixture.set_defaults(handler=cmd_fixture)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.handler(args)
    except ValidationError as e:
        console.print(f"[red]❌ Invalid settings:[/red]\n{e}")
        return EXIT_USAGE
    except ValueError as e:
        console.print(f"[red]❌ {e}[/red]")
        return EXIT_USAGE
    except (OutputError, OPLError) as e:
        console.print(f"[red]❌ {type(e).__name__}: {e}[/red]")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
