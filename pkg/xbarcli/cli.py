"""Click CLI entry point for xbarcli.

All commands are thin orchestration wrappers; business logic lives in
design_space, netlist, circuit, paa, dse, verify, llm, passk, sweep and
report.

Exit codes:
  0 — success
  1 — well-formed negative result: Error diagnostics, no feasible design,
      failed sweep points, undetected faults, pass@k below 100%
  2 — invocation or input error (every other XbarError)
"""

from __future__ import annotations

import asyncio
import json
import logging
import shutil
import sys
from pathlib import Path
from typing import Any

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn

from xbarcli import __version__
from xbarcli.config import (
    XbarConfig,
    config_path_in_use,
    config_to_dict,
    get_default_config_path,
    load_config,
    save_config,
)
from xbarcli.design_space import (
    DeviceCatalog,
    design_key,
    enumerate_grid,
    load_catalog,
    load_grid,
    parse_key,
)
from xbarcli.dse import (
    Repository,
    load_repository,
    pareto_front,
    parse_objectives,
    rank,
    result_to_row,
    save_repository,
    seed_paper_table,
)
from xbarcli.exceptions import CalibrationError, ContractError, InputError, XbarError
from xbarcli.llm import AuditLog, EndpointConfig, extract_query, load_endpoint, repo_stats
from xbarcli.mnist import MnistDataset, load_mnist, synthetic_dataset
from xbarcli.models import ConductanceTile, DesignPoint
from xbarcli.netlist import (
    GeneratorOptions,
    emit_spice,
    generate_crossbar_netlist,
    generate_partitioned_netlists,
    netlist_summary,
)
from xbarcli.output import format_output, mask_secret
from xbarcli.paa import (
    DEFAULT_AREA_PARAMS,
    FIDELITIES,
    AreaParams,
    QuantSpec,
    area_residuals,
    calibrate_area_model,
    evaluate_design,
    map_weights_to_conductance,
)
from xbarcli.passk import (
    Backend,
    DslBackend,
    EndpointBackend,
    ScriptedBackend,
    load_tasks,
    passk_harness,
)
from xbarcli.query_dsl import format_query, parse_query
from xbarcli.report import summarize, summary_csv
from xbarcli.sweep import SweepInputs, sweep_to_file
from xbarcli.verify import (
    CrossbarGenerator,
    FaultKind,
    fault_campaign,
    has_errors,
    verification_loop,
    verify_netlist_text,
)
from xbarcli.weights import MlpWeights, load_weights, synthetic_weights

logger = logging.getLogger("xbarcli")


# ── Error handler ─────────────────────────────────────────────────────────────


def _output_error(err: XbarError | Exception) -> None:
    """Write error JSON to stderr and exit with the error's code."""
    if isinstance(err, XbarError):
        payload = err.to_dict()
        exit_code = err.exit_code
    else:
        payload = {"error": "unknown_error", "message": str(err), "details": {}}
        exit_code = 2
    sys.stderr.write(json.dumps(payload, default=str) + "\n")
    sys.stderr.flush()
    sys.exit(exit_code)


def _setup_logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


# ── Context helpers ───────────────────────────────────────────────────────────


def _emit(ctx: click.Context, data: Any) -> None:
    click.echo(format_output(data, ctx.obj["format"]))


def _catalog(config: XbarConfig) -> DeviceCatalog:
    return load_catalog(config.paths.devices or None)


def _weights(ctx: click.Context, path: str | None) -> MlpWeights:
    """Weights from file, else seeded synthetic weights."""
    config: XbarConfig = ctx.obj["config"]
    if path:
        return load_weights(path)
    logger.info("no --weights given; using synthetic weights (seed %d)", ctx.obj["seed"])
    return synthetic_weights(seed=ctx.obj["seed"], activation=config.paa.activation)


def _images(ctx: click.Context, images: str | None, labels: str | None, n: int) -> MnistDataset:
    if bool(images) != bool(labels):
        raise InputError("--images and --labels must be given together")
    if images and labels:
        return load_mnist(images, labels).head(n)
    logger.info("no --images given; using %d synthetic images", n)
    return synthetic_dataset(n, seed=ctx.obj["seed"])


def _repository(path: str | None) -> Repository:
    """Repository file, or the embedded reference table when path is None."""
    return load_repository(path) if path else seed_paper_table()


def _area_params(path: str | None) -> AreaParams:
    if not path:
        return DEFAULT_AREA_PARAMS
    p = Path(path)
    if not p.exists():
        raise InputError(f"area params file not found: {p}", details={"path": str(p)})
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
        raw = raw.get("params", raw)
        return AreaParams(**{k: float(v) for k, v in raw.items()})
    except (json.JSONDecodeError, TypeError, ValueError, AttributeError) as e:
        raise CalibrationError(f"invalid area params file {p}: {e}") from e


def _design_tile(
    dp: DesignPoint, w: MlpWeights, layer: int, catalog: DeviceCatalog
) -> ConductanceTile:
    """Top-left rows×cols block of one augmented layer, mapped onto the device."""
    if not 0 <= layer < w.n_layers:
        raise InputError(f"--layer must be in [0, {w.n_layers - 1}], got {layer}")
    w_aug = w.augmented(layer)
    block = np.zeros((dp.rows, dp.cols))
    r, c = min(dp.rows, w_aug.shape[0]), min(dp.cols, w_aug.shape[1])
    block[:r, :c] = w_aug[:r, :c]
    levels = QuantSpec.from_mode(dp.mode).weight_levels
    return map_weights_to_conductance(block, catalog.device(dp.device), levels)


def _dsl_text(dsl: str | None, dsl_file: str | None) -> str:
    if dsl_file:
        p = Path(dsl_file)
        if not p.exists():
            raise InputError(f"DSL file not found: {p}", details={"path": str(p)})
        return p.read_text(encoding="utf-8")
    if dsl:
        return dsl
    raise InputError("one of --dsl or --dsl-file is required")


def _progress() -> Progress:
    return Progress(
        TextColumn("[bold blue]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=Console(stderr=True),
        transient=True,
        disable=not sys.stderr.isatty(),
    )


# ── Root group ────────────────────────────────────────────────────────────────


def _force_json(ctx: click.Context, _param: click.Parameter, value: bool) -> None:
    if value:
        ctx.ensure_object(dict)["format"] = "json"


class XbarGroup(click.Group):
    """Group whose commands also accept --json after the command name."""

    def add_command(self, cmd: click.Command, name: str | None = None) -> None:
        if not isinstance(cmd, click.Group) and all(p.name != "force_json" for p in cmd.params):
            cmd.params.append(
                click.Option(
                    ["--json", "force_json"],
                    is_flag=True,
                    expose_value=False,
                    callback=_force_json,
                    help="Force JSON output",
                )
            )
        super().add_command(cmd, name)


@click.group(cls=XbarGroup)
@click.version_option(version=__version__)
@click.option(
    "--config",
    "config_path",
    envvar="XBAR_CONFIG_PATH",
    default=None,
    help="Config file path (default: ~/.xbarcli/config.toml)",
)
@click.option(
    "--format",
    "output_format",
    type=click.Choice(["json", "jsonl", "table", "csv"]),
    default=None,
    help="Output format (overrides config default)",
)
@click.option("--json", "force_json", is_flag=True, help="Force JSON output")
@click.option("--seed", type=int, default=None, help="Seed for all randomness (default 42)")
@click.option("--parallel", type=int, default=None, help="Worker processes for sweeps")
@click.option("-v", "--verbose", count=True, help="-v info, -vv debug (stderr)")
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: str | None,
    output_format: str | None,
    force_json: bool,
    seed: int | None,
    parallel: int | None,
    verbose: int,
) -> None:
    """Analog crossbar design-space exploration."""
    ctx.ensure_object(dict)
    _setup_logging(verbose)
    try:
        config = load_config(config_path)
    except XbarError as e:
        # On config errors, use defaults (so config init still works)
        logger.warning("config ignored: %s", e.message)
        config = XbarConfig()

    ctx.obj["config"] = config
    ctx.obj["format"] = "json" if force_json else output_format or config.output.default_format
    ctx.obj["config_path"] = config_path
    ctx.obj["seed"] = config.sweep.seed if seed is None else seed
    ctx.obj["parallel"] = config.sweep.parallel if parallel is None else parallel


# ── Design space ──────────────────────────────────────────────────────────────


@cli.command("enumerate")
@click.option("--grid", "grid_path", default=None, help="Grid TOML (default: bundled grid)")
@click.pass_context
def enumerate_cmd(ctx: click.Context, grid_path: str | None) -> None:
    """List every design point of the grid, sorted by key."""
    config: XbarConfig = ctx.obj["config"]
    try:
        grid = load_grid(grid_path or config.paths.grid or None)
        points = enumerate_grid(grid, _catalog(config))
    except XbarError as e:
        _output_error(e)
        return
    designs = [
        {
            "design_key": design_key(dp),
            "tech": dp.tech,
            "device": dp.device,
            "bitcell": dp.bitcell,
            "rows": dp.rows,
            "cols": dp.cols,
            "mode": dp.mode.token,
            "partition": f"{dp.partition[0]}x{dp.partition[1]}",
        }
        for dp in points
    ]
    _emit(ctx, {"count": len(designs), "designs": designs})


# ── Netlist ───────────────────────────────────────────────────────────────────


def _partition_path(out: Path, a: int, b: int) -> Path:
    return out.with_name(f"{out.stem}.t{a}_{b}{out.suffix or '.sp'}")


@cli.command("netlist")
@click.option("--design", "key", required=True, help="Design key, e.g. t7_pcm_1t1r_64x64_d4_p1x1")
@click.option("--weights", "weights_path", default=None, help="Weights JSON (default: synthetic)")
@click.option("--layer", type=int, default=0, show_default=True, help="Layer to map")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output .sp path")
@click.option("--wire-r", type=float, default=None, help="Ohms per wire segment (default: tech)")
@click.option("--check/--no-check", default=True, show_default=True, help="Run the verify loop")
@click.pass_context
def netlist_cmd(
    ctx: click.Context,
    key: str,
    weights_path: str | None,
    layer: int,
    out: str,
    wire_r: float | None,
    check: bool,
) -> None:
    """Generate the SPICE netlist of one design (one file per partition)."""
    config: XbarConfig = ctx.obj["config"]
    try:
        dp = parse_key(key)
        catalog = _catalog(config)
        tile = _design_tile(dp, _weights(ctx, weights_path), layer, catalog)
        opts = GeneratorOptions(wire_r, config.circuit.vdd, None, catalog)
        out_path = Path(out)
        out_path.parent.mkdir(parents=True, exist_ok=True)

        files: list[dict[str, Any]] = []
        accepted = True
        if dp.partition == (1, 1) and not check:
            n = generate_crossbar_netlist(dp, tile, opts)
            out_path.write_text(emit_spice(n), encoding="utf-8")
            files.append({"path": str(out_path), **netlist_summary(n)})
        elif not check:
            v = dp.partition[1]
            for idx, n in enumerate(generate_partitioned_netlists(dp, tile, opts)):
                path = _partition_path(out_path, idx // v, idx % v)
                path.write_text(emit_spice(n), encoding="utf-8")
                files.append({"path": str(path), **netlist_summary(n)})
        else:
            tr, tc = dp.tile_shape
            h, v = dp.partition
            tile_dp = DesignPoint(dp.tech, dp.device, dp.bitcell, tr, tc, dp.mode, (1, 1))
            for a in range(h):
                for b in range(v):
                    sub = tile.submatrix(a * tr, (a + 1) * tr, b * tc, (b + 1) * tc)
                    outcome = verification_loop(
                        tile_dp,
                        sub,
                        CrossbarGenerator(opts),
                        config.verify.max_rounds,
                        config.verify,
                        catalog,
                    )
                    path = out_path if (h, v) == (1, 1) else _partition_path(out_path, a, b)
                    entry: dict[str, Any] = {"path": str(path), **outcome.to_dict()}
                    if outcome.netlist is not None:
                        path.write_text(emit_spice(outcome.netlist), encoding="utf-8")
                        entry.update(netlist_summary(outcome.netlist))
                    else:
                        accepted = False
                    files.append(entry)
    except XbarError as e:
        _output_error(e)
        return

    _emit(ctx, {"design_key": key, "accepted": accepted, "records": files})
    if not accepted:
        sys.exit(1)


@cli.command("verify")
@click.option("--netlist", "netlist_path", required=True, help="SPICE netlist to check")
@click.option("--design", "key", required=True, help="Design key the netlist claims to implement")
@click.option("--dynamic", is_flag=True, help="Also simulate and compare against the ideal MAC")
@click.pass_context
def verify_cmd(ctx: click.Context, netlist_path: str, key: str, dynamic: bool) -> None:
    """Lint a netlist against its design; exit 1 when Errors are found."""
    config: XbarConfig = ctx.obj["config"]
    try:
        p = Path(netlist_path)
        if not p.exists():
            raise InputError(f"netlist file not found: {p}", details={"path": str(p)})
        dp = parse_key(key)
        diags = verify_netlist_text(
            p.read_text(encoding="utf-8"),
            dp,
            dynamic=dynamic,
            settings=config.verify,
            catalog=_catalog(config),
            seed=ctx.obj["seed"],
        )
    except XbarError as e:
        _output_error(e)
        return

    errors = sum(d.is_error for d in diags)
    _emit(
        ctx,
        {
            "design_key": key,
            "netlist": str(p),
            "errors": errors,
            "warnings": len(diags) - errors,
            "diagnostics": [d.to_dict() for d in diags],
        },
    )
    if has_errors(diags):
        sys.exit(1)


@cli.command("fault-campaign")
@click.option("--design", "key", required=True, help="Design key (use small arrays, e.g. 16x16)")
@click.option("--weights", "weights_path", default=None, help="Weights JSON (default: synthetic)")
@click.option("--layer", type=int, default=0, show_default=True)
@click.option("--seeds", "n_seeds", type=int, default=20, show_default=True, help="Seeds per kind")
@click.option(
    "--kind",
    "kinds",
    multiple=True,
    type=click.Choice([k.value for k in FaultKind]),
    help="Fault kind (repeatable; default all)",
)
@click.pass_context
def fault_campaign_cmd(
    ctx: click.Context,
    key: str,
    weights_path: str | None,
    layer: int,
    n_seeds: int,
    kinds: tuple[str, ...],
) -> None:
    """Inject faults into a generated netlist; exit 1 if any goes undetected."""
    config: XbarConfig = ctx.obj["config"]
    try:
        dp = parse_key(key)
        if dp.partition != (1, 1):
            raise ContractError("fault campaigns run on unpartitioned designs")
        catalog = _catalog(config)
        tile = _design_tile(dp, _weights(ctx, weights_path), layer, catalog)
        base_seed = ctx.obj["seed"]
        records = fault_campaign(
            dp,
            tile,
            [FaultKind(k) for k in kinds] or tuple(FaultKind),
            range(base_seed, base_seed + n_seeds),
            GeneratorOptions(None, config.circuit.vdd, None, catalog),
            config.verify,
            max_workers=max(1, ctx.obj["parallel"]),
        )
    except XbarError as e:
        _output_error(e)
        return

    missed = [r for r in records if not r.detected]
    _emit(
        ctx,
        {
            "design_key": key,
            "injections": len(records),
            "undetected": len(missed),
            "records": [r.to_dict() for r in records],
        },
    )
    if missed:
        sys.exit(1)


# ── Evaluation ────────────────────────────────────────────────────────────────


def _common_eval_options(fn: Any) -> Any:
    for option in reversed(
        [
            click.option("--weights", "weights_path", default=None, help="Weights JSON"),
            click.option("--images", default=None, help="MNIST images IDX(.gz)"),
            click.option("--labels", default=None, help="MNIST labels IDX(.gz)"),
            click.option("--n", "n_images", type=int, default=None, help="Images to evaluate"),
            click.option("--fidelity", type=click.Choice(FIDELITIES), default=None),
            click.option("--area-params", default=None, help="Calibrated area params JSON"),
        ]
    ):
        fn = option(fn)
    return fn


def _sweep_inputs(
    ctx: click.Context,
    weights_path: str | None,
    images: str | None,
    labels: str | None,
    n_images: int | None,
    fidelity: str | None,
    area_params: str | None,
) -> SweepInputs:
    config: XbarConfig = ctx.obj["config"]
    n = n_images or config.paa.n_images
    if n < 1:
        raise InputError(f"--n must be positive, got {n}")
    return SweepInputs(
        weights=_weights(ctx, weights_path),
        images=_images(ctx, images, labels, n),
        catalog=_catalog(config),
        params=_area_params(area_params),
        fidelity=fidelity or config.paa.fidelity,
        vdd=config.circuit.vdd,
    )


@cli.command("eval")
@click.option("--design", "key", required=True, help="Design key")
@_common_eval_options
@click.option("--out", default=None, help="Also write a one-entry repository plus manifest")
@click.pass_context
def eval_cmd(
    ctx: click.Context,
    key: str,
    weights_path: str | None,
    images: str | None,
    labels: str | None,
    n_images: int | None,
    fidelity: str | None,
    area_params: str | None,
    out: str | None,
) -> None:
    """Evaluate accuracy, power and area of one design."""
    config: XbarConfig = ctx.obj["config"]
    try:
        dp = parse_key(key)
        inputs = _sweep_inputs(ctx, weights_path, images, labels, n_images, fidelity, area_params)
        if out:
            outcome, _ = sweep_to_file(
                [dp],
                inputs,
                out,
                config_to_dict(config),
                [weights_path, images, labels, area_params],
                argv=sys.argv,
            )
            if outcome.failures:
                f = outcome.failures[0]
                _emit(ctx, {"design_key": key, "failures": [f.to_dict()]})
                sys.exit(1)
            result = outcome.repo.get(design_key(dp)) or next(iter(outcome.repo))
        else:
            result = evaluate_design(
                dp,
                inputs.weights,
                inputs.images,
                params=inputs.params,
                fidelity=inputs.fidelity,
                catalog=inputs.catalog,
                vdd=inputs.vdd,
                tol=config.circuit.tol,
            )
    except XbarError as e:
        _output_error(e)
        return
    row = result_to_row(result)
    _emit(ctx, {"design_key": design_key(result.design), **row, "meta": result.meta})


@cli.command("sweep")
@click.option("--grid", "grid_path", default=None, help="Grid TOML (default: bundled grid)")
@_common_eval_options
@click.option("--out", required=True, help="Repository output (.csv or .jsonl)")
@click.pass_context
def sweep_cmd(
    ctx: click.Context,
    grid_path: str | None,
    weights_path: str | None,
    images: str | None,
    labels: str | None,
    n_images: int | None,
    fidelity: str | None,
    area_params: str | None,
    out: str,
) -> None:
    """Evaluate every grid point; exit 1 if any point failed."""
    config: XbarConfig = ctx.obj["config"]
    try:
        inputs = _sweep_inputs(ctx, weights_path, images, labels, n_images, fidelity, area_params)
        grid_file = grid_path or config.paths.grid or None
        points = enumerate_grid(load_grid(grid_file), inputs.catalog)
        with _progress() as progress:
            task = progress.add_task("sweep", total=len(points))
            outcome, manifest = sweep_to_file(
                points,
                inputs,
                out,
                config_to_dict(config),
                [grid_file, config.paths.devices, weights_path, images, labels, area_params],
                parallel=ctx.obj["parallel"],
                on_done=lambda _key: progress.advance(task),
                argv=sys.argv,
            )
    except XbarError as e:
        _output_error(e)
        return

    _emit(
        ctx,
        {
            "out": out,
            "points": outcome.points,
            "entries": len(outcome.repo),
            "duration_s": manifest.duration_s,
            "failures": [f.to_dict() for f in outcome.failures],
        },
    )
    if outcome.failures:
        sys.exit(1)


@cli.command("calibrate")
@click.option("--repo", "repo_path", default=None, help="Reference repository (default: embedded)")
@click.option("--out", default=None, help="Write fitted params JSON here")
@click.pass_context
def calibrate_cmd(ctx: click.Context, repo_path: str | None, out: str | None) -> None:
    """Fit the area model to reference areas and report relative errors."""
    config: XbarConfig = ctx.obj["config"]
    try:
        repo = _repository(repo_path)
        catalog = _catalog(config)
        reference = [(r.design, r.area_um2) for r in repo]
        params = calibrate_area_model(reference, catalog=catalog)
        errors = area_residuals(reference, params, catalog=catalog)
    except XbarError as e:
        _output_error(e)
        return

    if out:
        p = Path(out)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(params.to_dict(), indent=2) + "\n", encoding="utf-8")
    worst = int(np.argmax(np.abs(errors)))
    _emit(
        ctx,
        {
            "params": params.to_dict(),
            "rows": len(reference),
            "max_abs_rel_error": float(abs(errors[worst])),
            "worst": design_key(reference[worst][0]),
            "results": [
                {"design_key": design_key(dp), "reference": area, "rel_error": err}
                for (dp, area), err in zip(reference, errors, strict=True)
            ],
        },
    )


# ── Exploration ───────────────────────────────────────────────────────────────


@cli.command("seed-paper")
@click.option("--out", required=True, help="Destination repository file")
@click.pass_context
def seed_paper_cmd(ctx: click.Context, out: str) -> None:
    """Write the embedded 60-row reference table as a repository file."""
    try:
        repo = seed_paper_table()
        path = save_repository(repo, out)
    except XbarError as e:
        _output_error(e)
        return
    _emit(ctx, {"status": "written", "out": str(path), "entries": len(repo)})


@cli.command("query")
@click.option("--repo", "repo_path", default=None, help="Repository file (default: embedded table)")
@click.option("--dsl", default=None, help="Constraint DSL text")
@click.option("--dsl-file", default=None, help="Read the DSL from a file")
@click.option("--limit", type=int, default=10, show_default=True, help="Ranked entries to show")
@click.pass_context
def query_cmd(
    ctx: click.Context, repo_path: str | None, dsl: str | None, dsl_file: str | None, limit: int
) -> None:
    """Rank the repository under a constraint query; exit 1 when nothing is feasible."""
    try:
        q = parse_query(_dsl_text(dsl, dsl_file))
        ranked = rank(_repository(repo_path), q)
    except XbarError as e:
        _output_error(e)
        return
    _emit(ctx, {"dsl": format_query(q), "top": ranked.top.key, **ranked.to_dict(limit)})


@cli.command("pareto")
@click.option("--repo", "repo_path", default=None, help="Repository file (default: embedded table)")
@click.option(
    "--objectives", default="min:power,max:accuracy", show_default=True, help="min:/max: metrics"
)
@click.pass_context
def pareto_cmd(ctx: click.Context, repo_path: str | None, objectives: str) -> None:
    """Non-dominated entries under the given objectives."""
    try:
        repo = _repository(repo_path)
        parsed = parse_objectives(objectives)
        keys = pareto_front(repo, parsed)
    except XbarError as e:
        _output_error(e)
        return
    front = [
        {"design_key": key, **result_to_row(r)} for key, r in repo.entries.items() if key in keys
    ]
    _emit(ctx, {"objectives": objectives, "count": len(front), "front": front})


@cli.command("report")
@click.option("--repo", "repo_path", default=None, help="Repository file (default: embedded table)")
@click.option("--csv", "csv_out", default=None, help="Also write the long-format summary CSV")
@click.option(
    "--objectives", default="min:power,max:accuracy", show_default=True, help="Pareto objectives"
)
@click.pass_context
def report_cmd(
    ctx: click.Context, repo_path: str | None, csv_out: str | None, objectives: str
) -> None:
    """Per-axis min/median/max of power, area and accuracy, plus the Pareto front."""
    try:
        summary = summarize(_repository(repo_path), objectives=parse_objectives(objectives))
    except XbarError as e:
        _output_error(e)
        return
    if csv_out:
        p = Path(csv_out)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(summary_csv(summary), encoding="utf-8")
    _emit(ctx, summary)


# ── LLM bridge ────────────────────────────────────────────────────────────────


def _endpoint(ctx: click.Context, endpoint_path: str | None) -> EndpointConfig:
    config: XbarConfig = ctx.obj["config"]
    if endpoint_path:
        return load_endpoint(endpoint_path, config.llm)
    return EndpointConfig.from_llm_config(config.llm)


@cli.command("llm-query")
@click.option("--prompt", required=True, help="Natural-language requirement")
@click.option("--endpoint", "endpoint_path", default=None, help="Endpoint TOML")
@click.option("--repo", "repo_path", default=None, help="Repository file (default: embedded table)")
@click.option("--limit", type=int, default=10, show_default=True)
@click.pass_context
def llm_query_cmd(
    ctx: click.Context, prompt: str, endpoint_path: str | None, repo_path: str | None, limit: int
) -> None:
    """Extract a constraint query with the chat endpoint, then rank."""
    config: XbarConfig = ctx.obj["config"]
    try:
        cfg = _endpoint(ctx, endpoint_path)
        repo = _repository(repo_path)
        extraction = asyncio.run(
            extract_query(prompt, cfg, repo_stats(repo), audit=AuditLog(config.llm.audit_log))
        )
        ranked = rank(repo, extraction.query)
    except XbarError as e:
        _output_error(e)
        return
    _emit(
        ctx,
        {
            "dsl": format_query(extraction.query),
            "attempts": extraction.attempts,
            "top": ranked.top.key,
            **ranked.to_dict(limit),
        },
    )


@cli.command("passk")
@click.option("--tasks", "tasks_path", default=None, help="Task file (default: bundled 30 tasks)")
@click.option("--k", type=int, default=3, show_default=True, help="Attempts per task")
@click.option("--endpoint", "endpoint_path", default=None, help="Endpoint TOML (live model)")
@click.option("--dsl", "use_dsl", is_flag=True, help="Answer with each task's reference DSL")
@click.option("--script", "script_path", default=None, help="Scripted replies JSON (offline)")
@click.option("--repo", "repo_path", default=None, help="Repository file (default: embedded table)")
@click.pass_context
def passk_cmd(
    ctx: click.Context,
    tasks_path: str | None,
    k: int,
    endpoint_path: str | None,
    use_dsl: bool,
    script_path: str | None,
    repo_path: str | None,
) -> None:
    """Pass@1 and pass@k of query extraction; exit 1 below 100%."""
    config: XbarConfig = ctx.obj["config"]
    chosen = sum(bool(x) for x in (endpoint_path, use_dsl, script_path))
    if chosen != 1:
        _output_error(InputError("choose exactly one of --endpoint, --dsl or --script"))
        return

    async def _run() -> Any:
        repo = _repository(repo_path)
        tasks = load_tasks(tasks_path)
        stats = repo_stats(repo)
        audit = AuditLog(config.llm.audit_log)
        backend: Backend
        if use_dsl:
            backend = DslBackend()
        elif script_path:
            backend = ScriptedBackend.from_file(script_path, stats=stats, audit=audit)
        else:
            assert endpoint_path is not None
            live = EndpointBackend(_endpoint(ctx, endpoint_path), stats=stats, audit=audit)
            try:
                return await passk_harness(tasks, live, repo, k, config.llm.max_in_flight)
            finally:
                await live.close()
        return await passk_harness(tasks, backend, repo, k, config.llm.max_in_flight)

    try:
        report = asyncio.run(_run())
    except XbarError as e:
        _output_error(e)
        return
    _emit(ctx, report.to_dict())
    if not report.all_passed:
        sys.exit(1)


# ── Config commands ───────────────────────────────────────────────────────────


@cli.group("config", cls=XbarGroup)
def config_group() -> None:
    """Manage xbarcli configuration."""


@config_group.command("init")
@click.option("--force", is_flag=True, help="Overwrite existing config")
@click.pass_context
def config_init(ctx: click.Context, force: bool) -> None:
    """Initialize default config at ~/.xbarcli/config.toml."""
    provided = ctx.obj.get("config_path")
    config_path = Path(provided) if provided else get_default_config_path()

    if config_path.exists() and not force:
        click.echo(
            json.dumps(
                {
                    "status": "already_exists",
                    "config_path": str(config_path),
                    "hint": "Use --force to reinitialize",
                }
            )
        )
        return

    status = "initialized"
    backup = None
    if config_path.exists() and force:
        backup = str(config_path) + ".bak"
        shutil.copy2(config_path, backup)
        status = "reinitialized"

    save_config(XbarConfig(), str(config_path))
    result: dict[str, Any] = {"status": status, "config_path": str(config_path)}
    if backup:
        result["backup"] = backup
    click.echo(json.dumps(result))


@config_group.command("show")
@click.pass_context
def config_show(ctx: click.Context) -> None:
    """Show the resolved configuration (API key masked)."""
    config: XbarConfig = ctx.obj["config"]
    data = config_to_dict(config, include_secrets=False)
    data["llm"]["api_key"] = mask_secret(config.llm.api_key) if config.llm.api_key else ""
    data["config_path"] = str(config_path_in_use(ctx.obj.get("config_path")))
    _emit(ctx, data)


def main() -> None:
    cli(obj={})


if __name__ == "__main__":
    main()
