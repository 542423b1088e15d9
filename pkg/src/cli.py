"""Click CLI — the main entry point for sitr-sim.

Commands:
  sitr gen             Generate a sensor-aligned synthetic dataset
  sitr pretrain        Pre-train the encoder on a generated dataset
  sitr eval-transfer   Train task heads per sensor, emit the transfer matrix
  sitr render          Render one press on one sensor configuration
  sitr reconstruct     Integrate a normal map into a height map
  sitr ablate          Sweep calibration count, temperature or loss terms
  sitr verify          Check a dataset manifest's referential integrity
  sitr config          Show or change the user defaults in ~/.sitr/config.yaml
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from . import tnsr
from .config import RunConfig, encoder_defaults, load_config, save_config, set_value
from .dataset import LAYOUTS, DatasetManifest, DatasetReader, find_problems, generate_dataset
from .encoder import EncoderConfig, checkpoint_digest, load_checkpoint
from .errors import ConfigError, ContractError, SitrError, StoreError, UsageError
from .exporters import (
    export_ablation_csv,
    export_matrix_csv,
    to_json,
    write_height_png,
    write_png,
    write_signal_png,
)
from .indenters import Primitive
from .logs import LEVELS, setup_logging
from .objectives import DEFAULT_TAU, LossWeights
from .optics import CALIB_MODES, ContactScene, SensorConfig, render_background, render_contact
from .pretrain import TrainConfig, pretrain as run_pretrain, save_run
from .reconstruct import reconstruct_height
from .transfer import (
    ABLATION_AXES,
    TASKS,
    AblationConfig,
    ablation_sweep,
    dump_reconstructions,
    export_embeddings,
    run_scratch_transfer,
    run_transfer,
    transfer_performance,
)

logger = logging.getLogger(__name__)
console = Console()
err_console = Console(stderr=True)

VERSION = "0.1.0"


class SitrGroup(click.Group):
    """Maps SitrError to a red message and the error's exit code."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except SitrError as e:
            err_console.print(f"[red]Error:[/] {e}", highlight=False)
            sys.exit(e.exit_code)


def _settings(ctx: click.Context) -> dict:
    return ctx.ensure_object(dict)


def _seed(ctx: click.Context, seed: int | None) -> int:
    return seed if seed is not None else int(_settings(ctx)["config"]["defaults"].get("seed", 0))


def _record(ctx: click.Context, out_dir: Path, seed: int, **flags) -> Path:
    """Write run_config.json before the command touches anything else."""
    s = _settings(ctx)
    run = RunConfig(
        command=ctx.info_name,
        flags=flags,
        global_seed=seed,
        out_dir=str(out_dir),
        log_level=s["log_level"],
        threads=s["threads"],
    )
    return run.write(out_dir)


def _parse_floats(text: str, count: int, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"{flag} expects {count} comma-separated numbers, got {text!r}") from None
    if len(values) != count:
        raise ConfigError(f"{flag} expects {count} comma-separated numbers, got {text!r}")
    return values


@click.group(cls=SitrGroup)
@click.version_option(version=VERSION, prog_name="sitr-sim")
@click.option("--log-level", type=click.Choice(sorted(LEVELS)), default=None,
              help="Log level (default: env SITR_LOG, then config, then warn)")
@click.option("--threads", type=int, default=None, help="Worker threads for generation and transfer cells")
@click.pass_context
def cli(ctx: click.Context, log_level: str | None, threads: int | None):
    """Sensor-invariant tactile representation: simulate, pre-train, transfer."""
    config = load_config()
    defaults = config.get("defaults") or {}
    setup_logging(log_level, defaults.get("log_level"))
    threads = threads if threads is not None else int(defaults.get("threads", 1))
    if threads < 1:
        raise click.BadParameter(f"must be ≥ 1, got {threads}", param_hint="--threads")
    ctx.obj = {
        "config": config,
        "log_level": log_level or defaults.get("log_level") or "warn",
        "threads": threads,
    }


@cli.command()
@click.option("--sensors", "n_sensors", type=int, required=True, help="Number of sensor configurations")
@click.option("--contacts", "n_contacts", type=int, required=True, help="Number of contact geometries")
@click.option("--seed", type=int, default=None, help="Global seed")
@click.option("--calib", type=click.Choice(CALIB_MODES), default="k18", help="Calibration set per sensor")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Dataset directory")
@click.option("--resolution", type=int, default=64, help="Image side in pixels")
@click.option("--classes", type=str, default=None, help="Comma-separated primitive classes")
@click.option("--layout", type=click.Choice(LAYOUTS), default="random",
              help="random: independent sensors; family: one optical design, varied gels")
@click.option("--sensor-offset", type=int, default=0, help="First sensor index (held-out draws)")
@click.option("--gel-area", type=float, default=4.0, help="Gel sensing area in cm²")
@click.option("--presses-per-indenter", type=int, default=1, help="Presses per indenter (≥ 2 for pose labels)")
@click.pass_context
def gen(ctx, n_sensors, n_contacts, seed, calib, out_dir, resolution, classes, layout,
        sensor_offset, gel_area, presses_per_indenter):
    """Generate a sensor-aligned synthetic dataset.

    \b
    Examples:
      sitr gen --sensors 8 --contacts 600 --seed 0 --out data/train
      sitr gen --sensors 4 --contacts 200 --seed 0 --sensor-offset 8 --out data/heldout
    """
    seed = _seed(ctx, seed)
    out = Path(out_dir)
    class_list = [c.strip() for c in classes.split(",") if c.strip()] if classes else None
    _record(ctx, out, seed, sensors=n_sensors, contacts=n_contacts, calib=calib, resolution=resolution,
            classes=class_list, layout=layout, sensor_offset=sensor_offset, gel_area=gel_area,
            presses_per_indenter=presses_per_indenter)
    manifest = generate_dataset(
        n_sensors, n_contacts, seed, out,
        calib_mode=calib, resolution=resolution, classes=class_list,
        threads=_settings(ctx)["threads"], layout=layout, sensor_offset=sensor_offset,
        gel_area_cm2=gel_area, presses_per_indenter=presses_per_indenter,
    )
    _print_manifest_summary(manifest, out)


@cli.command()
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--epochs", type=int, default=3)
@click.option("--dim", type=int, default=None, help="Embedding dimension D")
@click.option("--depth", type=int, default=None, help="Transformer blocks")
@click.option("--heads", type=int, default=None, help="Attention heads")
@click.option("--patch", type=int, default=None, help="Patch size P")
@click.option("--image-size", type=int, default=None, help="Model input side H")
@click.option("--tau", type=float, default=DEFAULT_TAU, help="SCL temperature")
@click.option("--lambda-scl", type=float, default=1.0)
@click.option("--lambda-normal", type=float, default=1.0)
@click.option("--seed", type=int, default=None)
@click.option("--lr", type=float, default=1e-4)
@click.option("--batch-contacts", type=int, default=8, help="Contacts per batch (two views each)")
@click.option("--calib", type=click.Choice(CALIB_MODES), default=None,
              help="Calibration mode (default: the dataset's)")
@click.option("--samples-per-sensor", type=int, default=None, help="Use only the first N contacts")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Checkpoint directory")
@click.pass_context
def pretrain(ctx, data_dir, epochs, dim, depth, heads, patch, image_size, tau, lambda_scl,
             lambda_normal, seed, lr, batch_contacts, calib, samples_per_sensor, out_dir):
    """Pre-train the encoder with normal-map and supervised contrastive losses."""
    seed = _seed(ctx, seed)
    out = Path(out_dir)
    arch = encoder_defaults(_settings(ctx)["config"])
    for key, val in (("embed_dim", dim), ("depth", depth), ("num_heads", heads),
                     ("patch_size", patch), ("image_size", image_size)):
        if val is not None:
            arch[key] = val
    reader = DatasetReader(data_dir)
    calib = calib or reader.manifest.calib_mode
    _record(ctx, out, seed, data=str(data_dir), epochs=epochs, tau=tau, lambda_scl=lambda_scl,
            lambda_normal=lambda_normal, lr=lr, batch_contacts=batch_contacts, calib=calib,
            samples_per_sensor=samples_per_sensor, **arch)

    encoder_config = EncoderConfig.for_calib_mode(calib, **arch)
    train_config = TrainConfig(
        epochs=epochs, batch_contacts=batch_contacts, lr=lr, seed=seed,
        weights=LossWeights(lambda_normal, lambda_scl, tau), calib_mode=calib,
        samples_per_sensor=samples_per_sensor,
    )
    result = run_pretrain(reader, encoder_config, train_config)
    save_run(result, reader, train_config, out)

    console.print(f"[bold]Checkpoint:[/] {out}")
    console.print(f"  Parameters: {result.state.num_parameters():,}")
    console.print(f"  Steps: {len(result.history)}")
    console.print(f"  Loss: {result.initial_loss:.5f} → {result.final_loss:.5f}")


@cli.command("eval-transfer")
@click.option("--task", type=click.Choice(TASKS), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--ckpt", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--epochs", type=int, default=10, help="Head training epochs")
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--baseline", type=click.Choice(["scratch"]), default=None,
              help="Fill the matrix with a from-scratch encoder instead")
@click.option("--dump-recon", type=int, default=0, help="Write predicted normals/heights for K test samples")
@click.pass_context
def eval_transfer(ctx, task, data_dir, ckpt, epochs, seed, out_dir, baseline, dump_recon):
    """Train a head per sensor, evaluate on every sensor, summarize transfer."""
    seed = _seed(ctx, seed)
    out = Path(out_dir)
    threads = _settings(ctx)["threads"]
    _record(ctx, out, seed, task=task, data=str(data_dir), ckpt=str(ckpt), epochs=epochs,
            baseline=baseline, dump_recon=dump_recon)

    digest = checkpoint_digest(ckpt)
    checkpoint = load_checkpoint(ckpt)
    manifest = DatasetManifest.load(data_dir)
    if not manifest.has_labels(task):
        raise ContractError(f"dataset {data_dir} has no {task} labels")
    reader = DatasetReader(data_dir, manifest, stats=checkpoint.stats)
    calib = checkpoint.calib_mode
    if baseline == "scratch":
        matrix = run_scratch_transfer(task, checkpoint.state.config, reader, epochs, seed, calib, threads)
    else:
        matrix = run_transfer(task, checkpoint.state, reader, epochs, seed, calib, threads)
    summary = transfer_performance(matrix)
    try:
        pretrain_flags = RunConfig.read(ckpt).flags
    except StoreError:
        logger.info("no run record in %s; summary will not list pre-training flags", ckpt)
        pretrain_flags = None

    # matrix before summary: a summary never exists without its matrix
    export_matrix_csv(matrix.scores, matrix.sensor_ids, out / "transfer_matrix.csv")
    to_json(
        {**summary.to_dict(), "task": task, "baseline": baseline, "pretrain": pretrain_flags},
        out / "summary.json",
    )
    export_embeddings(checkpoint.state, reader, out / "embeddings.csv", calib)
    if dump_recon > 0:
        dump_reconstructions(checkpoint.state, reader, out / "recon", dump_recon, calib)
    if checkpoint_digest(ckpt) != digest:
        raise ContractError(f"checkpoint {ckpt} changed during evaluation")

    _print_matrix(matrix.sensor_ids, matrix.scores, f"Transfer matrix ({summary.metric_kind}, {matrix.units})")
    console.print(f"  Transfer: {summary.transfer:.4f} ± {summary.transfer_std:.4f}")
    console.print(f"  No transfer: {summary.no_transfer:.4f} ± {summary.no_transfer_std:.4f}")


@cli.command()
@click.option("--sensor-config", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--object", "obj", type=str, required=True, help="Indenter spec, e.g. sphere:2.0 or cone:2,4")
@click.option("--depth", type=float, default=0.5, help="Press depth in mm")
@click.option("--pos", type=str, default="0,0", help="x,y position in mm")
@click.option("--rotation", type=str, default="0,0,0", help="Euler angles in degrees (xyz)")
@click.option("--out", "prefix", type=str, required=True, help="Output prefix")
@click.pass_context
def render(ctx, sensor_config, obj, depth, pos, rotation, prefix):
    """Render one press: image, ground-truth normals and background-subtracted signal."""
    stem = Path(prefix)
    _record(ctx, stem.parent, _seed(ctx, None), sensor_config=str(sensor_config), object=obj,
            depth=depth, pos=pos, rotation=rotation, out=prefix)
    try:
        text = Path(sensor_config).read_text()
    except OSError as e:
        raise StoreError(f"Cannot read {sensor_config}: {e.strerror or e}") from None
    cfg = SensorConfig.from_json(text)
    scene = ContactScene(
        contact_id="render",
        primitive=Primitive.parse(obj),
        rotation_deg=_parse_floats(rotation, 3, "--rotation"),
        translation_mm=_parse_floats(pos, 2, "--pos"),
        press_depth_mm=depth,
    )
    image, _, normals = render_contact(scene, cfg)
    signal = image.subtract(render_background(cfg)).values

    write_png(f"{prefix}_image.png", image.values)
    tnsr.write(f"{prefix}_normal.tnsr", normals.values.astype(np.float32))
    write_signal_png(f"{prefix}_signal.png", signal)
    console.print(f"Rendered {obj} on {cfg.sensor_id} ({cfg.resolution}²) → {prefix}_*")


@cli.command()
@click.option("--normal", "normal_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--pitch-mm", type=float, default=1.0, help="Pixel pitch in mm")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True, help="Height TNSR path")
@click.pass_context
def reconstruct(ctx, normal_path, pitch_mm, out_path):
    """Integrate a normal map (H×W×3 TNSR) into a height map."""
    out = Path(out_path)
    _record(ctx, out.parent, _seed(ctx, None), normal=str(normal_path), pitch_mm=pitch_mm, out=str(out))
    normals = tnsr.read(normal_path)
    if normals.ndim != 3 or normals.shape[-1] != 3:
        raise StoreError(f"{normal_path}: expected an H×W×3 normal map, got dims {list(normals.shape)}")
    height = reconstruct_height(normals, pitch_mm)
    tnsr.write(out, height.values.astype(np.float32))
    write_height_png(out.with_suffix(".png"), height.values)
    console.print(
        f"Height {height.values.shape[0]}×{height.values.shape[1]}, "
        f"range {np.ptp(height.values):.4f} mm → {out}"
    )


@cli.command()
@click.option("--axis", type=click.Choice(ABLATION_AXES), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), required=True,
              help="Pre-training dataset")
@click.option("--eval-data", type=click.Path(exists=True, file_okay=False), default=None,
              help="Held-out sensors for transfer (default: --data)")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--task", type=click.Choice(TASKS), default="classification")
@click.option("--epochs", type=int, default=3, help="Pre-training epochs per cell")
@click.option("--head-epochs", type=int, default=10)
@click.option("--dim", type=int, default=None)
@click.option("--depth", type=int, default=None)
@click.option("--heads", type=int, default=None)
@click.option("--patch", type=int, default=None)
@click.option("--image-size", type=int, default=None)
@click.option("--tau", type=float, default=DEFAULT_TAU)
@click.option("--lr", type=float, default=1e-4)
@click.option("--batch-contacts", type=int, default=8)
@click.option("--calib", type=click.Choice(CALIB_MODES), default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
def ablate(ctx, axis, data_dir, eval_data, out_dir, task, epochs, head_epochs, dim, depth, heads,
           patch, image_size, tau, lr, batch_contacts, calib, seed):
    """Pre-train and evaluate once per value of the swept axis."""
    if axis == "calib" and calib is not None:
        raise UsageError("--calib fixes the calibration mode, which --axis calib sweeps; drop one of them")
    seed = _seed(ctx, seed)
    out = Path(out_dir)
    arch = encoder_defaults(_settings(ctx)["config"])
    for key, val in (("embed_dim", dim), ("depth", depth), ("num_heads", heads),
                     ("patch_size", patch), ("image_size", image_size)):
        if val is not None:
            arch[key] = val
    reader = DatasetReader(data_dir)
    calib = calib or reader.manifest.calib_mode
    _record(ctx, out, seed, axis=axis, data=str(data_dir), eval_data=eval_data, task=task,
            epochs=epochs, head_epochs=head_epochs, tau=tau, lr=lr, batch_contacts=batch_contacts,
            calib=calib, **arch)

    config = AblationConfig(
        train=TrainConfig(epochs=epochs, batch_contacts=batch_contacts, lr=lr, seed=seed,
                          weights=LossWeights(tau=tau), calib_mode=calib),
        task=task, head_epochs=head_epochs, seed=seed, threads=_settings(ctx)["threads"], **arch,
    )
    rows = ablation_sweep(axis, reader, config, eval_root=eval_data, out_dir=out)
    export_ablation_csv(rows, out / "ablation.csv")

    table = Table(title=f"Ablation: {axis} ({task})")
    table.add_column("Value", style="cyan")
    table.add_column("Transfer", justify="right")
    table.add_column("No transfer", justify="right")
    for row in rows:
        table.add_row(
            row["value"],
            f"{row['transfer']:.4f} ± {row['transfer_std']:.4f}",
            f"{row['no_transfer']:.4f} ± {row['no_transfer_std']:.4f}",
        )
    console.print(table)


@cli.command()
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), required=True)
def verify(data_dir):
    """Check that every path and id the manifest references resolves."""
    manifest = DatasetManifest.load(data_dir)
    problems = find_problems(manifest, data_dir)
    if problems:
        for p in problems:
            err_console.print(f"  [red]✗[/] {p}", highlight=False)
        err_console.print(f"[red]{len(problems)} problem(s) in {data_dir}[/]")
        sys.exit(StoreError.exit_code)
    console.print(
        f"[green]✓[/] {data_dir}: {len(manifest.sensors)} sensors, "
        f"{len(manifest.contacts)} contacts, {len(manifest.samples)} samples"
    )


@cli.command("config")
@click.option("--set", "assignments", multiple=True, metavar="SECTION.KEY=VALUE",
              help="Change one setting (repeatable), e.g. --set encoder.depth=6")
@click.pass_context
def config_cmd(ctx, assignments):
    """Show the user defaults, or change them with --set."""
    config = _settings(ctx)["config"]
    if assignments:
        for assignment in assignments:
            set_value(config, assignment)
        encoder_defaults(config)
        level = config["defaults"].get("log_level")
        if level is not None and level not in LEVELS:
            raise ConfigError(f"defaults.log_level must be one of {sorted(LEVELS)}, got {level!r}")
        path = save_config(config)
        console.print(f"[bold]Config saved:[/] {path}")

    table = Table(title="sitr configuration")
    table.add_column("Key", style="cyan")
    table.add_column("Value", justify="right")
    for section, values in config.items():
        if isinstance(values, dict):
            for key, val in values.items():
                table.add_row(f"{section}.{key}", str(val))
        else:
            table.add_row(section, str(values))
    console.print(table)


def _print_manifest_summary(manifest: DatasetManifest, root: Path):
    table = Table(title=f"Dataset {root}")
    table.add_column("Sensor", style="cyan")
    table.add_column("Lights")
    table.add_column("Angle°", justify="right")
    table.add_column("Stiffness", justify="right")
    table.add_column("FOV°", justify="right")
    table.add_column("Calib", justify="right")
    for entry in manifest.sensors:
        cfg = entry.config
        table.add_row(
            entry.sensor_id,
            f"{cfg.num_lights} {cfg.light_shape}/{cfg.light_orientation}",
            f"{cfg.light_angle_deg:.1f}",
            f"{cfg.gel_stiffness:.2f}",
            f"{cfg.camera_fov_deg:.1f}",
            str(len(entry.calibration_paths)),
        )
    console.print(table)
    train = len(manifest.contacts_in("train"))
    console.print(f"\n[bold]Summary:[/]")
    console.print(f"  Sensors: {len(manifest.sensors)}")
    console.print(f"  Contacts: {len(manifest.contacts)} ({train} train, {len(manifest.contacts) - train} test)")
    console.print(f"  Samples: {len(manifest.samples)}")
    console.print(f"  Classes: {', '.join(manifest.classes)}")


def _print_matrix(sensor_ids: list[str], scores: np.ndarray, title: str):
    table = Table(title=title)
    table.add_column("Train \\ Eval", style="cyan")
    for sid in sensor_ids:
        table.add_column(sid, justify="right")
    for sid, row in zip(sensor_ids, scores):
        table.add_row(sid, *(f"{v:.4f}" for v in row))
    console.print(table)
