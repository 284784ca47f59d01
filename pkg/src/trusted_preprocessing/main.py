"""Command-line entry point for trusted pre-processing workflows.

Exit codes: 0 success, 1 usage, 2 verification failure, 3 I/O.
"""

import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from trusted_preprocessing.adversary import TamperKind, TamperStrategy, run_attack
from trusted_preprocessing.bench import run_benchmark, write_csv
from trusted_preprocessing.config import settings
from trusted_preprocessing.errors import (
    ManifestError,
    PreprocessingError,
    SetupExistsError,
    WorkflowError,
)
from trusted_preprocessing.models import BackendId
from trusted_preprocessing.primitives import KeyRole, generate_keypair, hash_message
from trusted_preprocessing.validators import (
    InputValidationError,
    OutputValidationError,
    validate_inputs,
)
from trusted_preprocessing.workflow import (
    export_chain,
    generate_batches,
    run_batches,
    setup_workflow,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_IO = 3

logger = logging.getLogger(__name__)
console = Console()
app = typer.Typer(help="Trusted pre-processing of sensor data for on-chain verification")


def _backend(value: str) -> BackendId:
    try:
        return BackendId.parse(value)
    except ValueError:
        raise typer.BadParameter(f"unknown backend {value!r}; use cs or tee") from None


def _int_list(value: str) -> List[int]:
    try:
        values = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise typer.BadParameter(f"expected a comma-separated list of integers, got {value!r}") from None
    if not values or any(v < 1 for v in values):
        raise typer.BadParameter("parameters must be >= 1")
    return values


def _fail(error: Exception) -> None:
    """Print an error and exit with its code."""
    if isinstance(error, (InputValidationError, ManifestError, SetupExistsError)):
        code = EXIT_USAGE
    elif isinstance(error, (OSError, OutputValidationError)):
        code = EXIT_IO
    elif isinstance(error, (WorkflowError, PreprocessingError)):
        code = EXIT_VERIFICATION
    else:
        code = EXIT_USAGE
    console.print(f"\n[bold red]❌ {error}[/bold red]\n")
    raise typer.Exit(code)


@app.callback()
def configure(
    log_level: str = typer.Option(settings.log_level, "--log-level", help="Logging level"),
):
    """Configure logging once for every command."""
    logging.basicConfig(
        level=log_level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, console=Console(stderr=True))],
        force=True,
    )


@app.command()
def setup(
    manifest: Path = typer.Option(..., "--manifest", "-m", help="Workflow manifest (JSON)"),
    seed: Optional[int] = typer.Option(
        None, "--seed", help="Deterministic CRS and sensor key (fixtures only)"
    ),
):
    """One-time setup: keys, CS or enclave artifacts, contract deployment."""
    console.print("\n[bold cyan]🚀 Workflow setup[/bold cyan]\n")
    try:
        validate_inputs(manifest_path=manifest)
        crs_seed = sensor_key = None
        if seed is not None:
            crs_seed = hash_message(f"crs/{seed}".encode())
            sensor_key = generate_keypair(KeyRole.SENSOR, seed=hash_message(f"sensor/{seed}".encode()))
        artifact_dir = setup_workflow(manifest, crs_seed=crs_seed, sensor_key=sensor_key)
    except (PreprocessingError, OSError) as e:
        _fail(e)
    console.print(f"[bold green]✅ Artifacts written to {artifact_dir}[/bold green]\n")


@app.command()
def run(
    batch_files: List[Path] = typer.Argument(..., help="Batch files to process in order"),
    manifest: Path = typer.Option(..., "--manifest", "-m", help="Workflow manifest (JSON)"),
    parallel: bool = typer.Option(False, "--parallel", help="Generate cs proofs concurrently"),
    workers: Optional[int] = typer.Option(None, "--workers", help="Worker count for --parallel"),
):
    """Process batches: sign fixtures, pre-process, prove/attest, submit."""
    try:
        validate_inputs(manifest_path=manifest, batch_files=batch_files)
        results = run_batches(manifest, batch_files, parallel=parallel, max_workers=workers)
    except (PreprocessingError, OSError) as e:
        _fail(e)

    table = Table(title="Receipts")
    for column in ("batch", "accepted", "reason", "violations", "cost units"):
        table.add_column(column)
    for result in results:
        if result.receipt is not None:
            r = result.receipt
            table.add_row(Path(result.batch_file).name, "✅" if r.accepted else "❌", r.reason.value,
                          "" if r.violation_count is None else str(r.violation_count), str(r.cost_units))
        else:
            table.add_row(Path(result.batch_file).name, "❌", result.failure.error_type, "", "")
    console.print(table)

    if not all(r.accepted for r in results):
        raise typer.Exit(EXIT_VERIFICATION)


@app.command()
def attack(
    strategy: TamperKind = typer.Option(..., "--strategy", "-s", help="Tamper strategy"),
    backend: str = typer.Option(..., "--backend", "-b", help="cs or tee"),
    seed: int = typer.Option(0, "--seed", help="Scenario seed"),
    count: int = typer.Option(1, "--count", min=1, help="Run seeds seed..seed+count-1"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Append JSON lines here"),
):
    """Run a tamper strategy against an honest scenario and report detection."""
    backend_id = _backend(backend)
    lines, undetected = [], 0
    try:
        for s in range(seed, seed + count):
            outcome = run_attack(TamperStrategy.from_seed(strategy, s), backend_id, s)
            undetected += not outcome.detected
            lines.append(json.dumps(outcome.to_dict(), sort_keys=True))
    except PreprocessingError as e:
        _fail(e)

    for line in lines:
        typer.echo(line)
    if out is not None:
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            with out.open("a") as f:
                f.write("".join(line + "\n" for line in lines))
        except OSError as e:
            _fail(e)
    if undetected:
        console.print(f"[bold red]🚨 {undetected} attack(s) went undetected[/bold red]")
        raise typer.Exit(EXIT_VERIFICATION)


@app.command()
def bench(
    backend: str = typer.Option(..., "--backend", "-b", help="cs or tee"),
    batch_size: Optional[str] = typer.Option(
        None, "--batch-size", help="Size mode: comma-separated batch sizes"
    ),
    batch_count: Optional[str] = typer.Option(
        None, "--batch-count", help="Count mode: comma-separated batch counts"
    ),
    repetitions: int = typer.Option(settings.bench_repetitions, "--repetitions", "-r", min=1),
    seed: int = typer.Option(0, "--seed"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="CSV output file"),
):
    """Time evidence generation plus verification; prints CSV."""
    backend_id = _backend(backend)
    if (batch_size is None) == (batch_count is None):
        raise typer.BadParameter("give exactly one of --batch-size or --batch-count")
    mode, params = ("size", _int_list(batch_size)) if batch_size else ("count", _int_list(batch_count))
    try:
        rows = run_benchmark(backend_id, mode, params, repetitions=repetitions, seed=seed)
        text = write_csv(rows, out)
    except (PreprocessingError, OSError) as e:
        _fail(e)
    if out is None:
        typer.echo(text, nl=False)
    else:
        console.print(f"[green]📊 {len(rows)} row(s) written to {out}[/green]")


@app.command("export-chain")
def export_chain_command(
    manifest: Path = typer.Option(..., "--manifest", "-m", help="Workflow manifest (JSON)"),
    out: Path = typer.Option(..., "--out", "-o", help="Destination JSON file"),
):
    """Dump contracts, transaction log and costs as JSON."""
    try:
        validate_inputs(manifest_path=manifest)
        path = export_chain(manifest, out)
    except (PreprocessingError, OSError) as e:
        _fail(e)
    console.print(f"[green]⛓️  Chain state exported to {path}[/green]")


@app.command()
def generate(
    out: Path = typer.Option(..., "--out", "-o", help="Output directory"),
    batch_count: int = typer.Option(4, "--batch-count", min=1),
    batch_size: int = typer.Option(4, "--batch-size", min=1),
    seed: int = typer.Option(0, "--seed"),
    manifest: Optional[Path] = typer.Option(
        None, "--manifest", "-m", help="Sign with this workflow's sensor key"
    ),
    unsigned: bool = typer.Option(False, "--unsigned", help="Write fixtures without signatures"),
):
    """Write seeded sensor batches (batch, meta-data sidecar, signature)."""
    try:
        if manifest is not None:
            validate_inputs(manifest_path=manifest)
        paths = generate_batches(
            out, batch_count, batch_size, seed=seed, manifest_path=manifest, signed=not unsigned
        )
    except (PreprocessingError, OSError) as e:
        _fail(e)
    for path in paths:
        typer.echo(str(path))


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and map click's usage errors onto exit code 1."""
    try:
        rv = app(args=argv, standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    return rv if isinstance(rv, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
