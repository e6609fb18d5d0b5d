"""
lincrack CLI - Main Command Line Interface

Subcommands for the whole inspection workflow: build a corpus (``synth``),
partition it (``split``), train both stages (``train-cls``, ``train-seg``),
run the two-stage inspection (``run``), score it (``eval``) and explain it
(``explain``). Every subcommand reads the pipeline YAML config given with
``--config``; ``--set dotted.key=value`` overrides any key.
"""

import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import click
import yaml
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from lincrack import __version__
from lincrack.constants import BANNER, CLASS_NAMES, CRACK, DEFAULT_SEED, DEFAULT_SPLIT_RATIOS
from lincrack.core.exceptions import ConfigurationError, LinCrackError
from lincrack.data.manifest import SampleManifest, SampleRecord, stratified_split
from lincrack.data.synth import MANIFEST_NAME, synth_dataset
from lincrack.pipeline.commands import eval_command, eval_summary, explain_command
from lincrack.pipeline.config import PipelineConfig
from lincrack.pipeline.runner import run_pipeline
from lincrack.pipeline.training import TrainingResult, train_classifier, train_segmenter
from lincrack.utils.config import ConfigManager
from lincrack.utils.error_logger import describe_error
from lincrack.utils.logger import configure_from_config, get_logger, log_config_info

console = Console()
logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _load_config(ctx: click.Context, values: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """Config file, then ``--set`` overrides, then dedicated flags (None values skipped)."""
    config = PipelineConfig.load(ctx.obj.get('config'), ctx.obj.get('overrides', ()))
    values = {k: v for k, v in (values or {}).items() if v is not None}
    if values:
        manager = ConfigManager.from_dict(config.to_dict())
        for key, value in values.items():
            manager.set(key, value)
        config = PipelineConfig.from_dict(manager.to_dict())

    logging_config = dict(config.logging)
    if ctx.obj.get('verbose'):
        logging_config['level'] = 'DEBUG'
    if ctx.obj.get('log_file'):
        logging_config['file'] = ctx.obj['log_file']
    configure_from_config(logging_config)
    log_config_info(config.to_dict())
    return config


def _epoch_progress(description: str, total: int):
    progress = Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        TimeElapsedColumn(),
        console=console,
    )
    task = progress.add_task(description, total=total)

    def advance(record) -> None:
        progress.update(task, advance=1,
                        description=f"{description} loss={record.train_loss:.4f} val={record.val_loss:.4f}")

    return progress, advance


def _training_table(result: TrainingResult) -> Table:
    table = Table(title=f"{result.name} training")
    table.add_column("Item", style="cyan")
    table.add_column("Value")
    table.add_row("epochs run", str(result.epochs_run))
    table.add_row("best epoch", str(result.best_epoch + 1))
    table.add_row("best val loss", f"{result.best_val_loss:.4f}")
    table.add_row("final train metric", f"{result.final_train_metric:.4f}")
    table.add_row("weights", str(result.weights_path))
    table.add_row("loss curves", f"{result.train_curve_path}, {result.val_curve_path}")
    return table


@click.group()
@click.version_option(version=__version__, prog_name="lincrack")
@click.option('--verbose', '-v', is_flag=True, help='Enable debug logging')
@click.option('--config', '-c', type=click.Path(dir_okay=False), help='Pipeline configuration file')
@click.option('--set', 'overrides', multiple=True, metavar='KEY=VALUE',
              help='Override a config key (dotted path, YAML value); repeatable')
@click.option('--log-file', type=click.Path(dir_okay=False), help='Also write logs to this file')
@click.pass_context
def cli(ctx, verbose, config, overrides, log_file):
    """
    lincrack - tunnel lining crack inspection

    Classify images, segment the cracked ones and explain the segmenter.
    """
    ctx.ensure_object(dict)
    ctx.obj['verbose'] = verbose
    ctx.obj['config'] = config
    ctx.obj['overrides'] = overrides
    ctx.obj['log_file'] = log_file


@cli.command('config')
@click.option('--output', '-o', type=click.Path(dir_okay=False), help='Write the config here instead of stdout')
@click.pass_context
def show_config(ctx, output):
    """Print the effective configuration (defaults, file and overrides merged)"""
    config = _load_config(ctx)
    if output:
        path = config.save(output)
        console.print(f"[green]Configuration written to {path}[/green]")
    else:
        click.echo(yaml.safe_dump(config.to_dict(), default_flow_style=False, sort_keys=False))


@cli.command()
@click.argument('output_dir', type=click.Path(file_okay=False))
@click.option('--images', '-n', 'n_images', type=int, default=20, show_default=True, help='Number of images')
@click.option('--size', type=(int, int), default=(64, 64), show_default=True, help='Image height and width')
@click.option('--seed', type=int, default=DEFAULT_SEED, show_default=True)
@click.option('--crack-fraction', type=float, default=0.5, show_default=True)
@click.option('--split/--no-split', 'do_split', default=True, show_default=True,
              help='Assign train/val/test with the default ratios')
@click.pass_context
def synth(ctx, output_dir, n_images, size, seed, crack_fraction, do_split):
    """Generate a synthetic crack corpus with masks and a manifest"""
    _load_config(ctx)
    console.print(BANNER)
    manifest = synth_dataset(output_dir, n_images, tuple(size), seed, crack_fraction)
    if do_split:
        manifest = stratified_split(manifest.records, DEFAULT_SPLIT_RATIOS, seed, metadata=manifest.metadata)
        manifest.save(Path(output_dir) / MANIFEST_NAME)
    console.print(f"[green]{n_images} images written to {output_dir}[/green]")
    _print_split_counts(manifest)


def _print_split_counts(manifest: SampleManifest) -> None:
    table = Table(title="Records per split")
    table.add_column("Split", style="cyan")
    for name in CLASS_NAMES:
        table.add_column(name, justify="right")
    for split, counts in manifest.split_counts().items():
        table.add_row(split, *(str(counts[name]) for name in CLASS_NAMES))
    console.print(table)


@cli.command()
@click.argument('manifest_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--output', '-o', type=click.Path(dir_okay=False), help='Output manifest (default: overwrite input)')
@click.option('--ratios', type=(float, float, float), default=DEFAULT_SPLIT_RATIOS, show_default=True,
              help='Train, val and test fractions')
@click.option('--seed', type=int, default=DEFAULT_SEED, show_default=True)
@click.option('--crack-only', is_flag=True, help='Split only the crack records (segmentation corpus)')
@click.pass_context
def split(ctx, manifest_path, output, ratios, seed, crack_only):
    """Assign a stratified train/val/test split to a manifest"""
    _load_config(ctx)
    source = SampleManifest.load(manifest_path)
    records = source.with_label(CRACK) if crack_only else source.records
    output = Path(output) if output else Path(manifest_path)
    if output.resolve().parent != Path(manifest_path).resolve().parent:
        records = [SampleRecord(str(source.resolve(r.image_path).resolve()), r.label,
                                str(source.resolve(r.mask_path).resolve()) if r.mask_path else None)
                   for r in records]
    classes = (CRACK,) if crack_only else tuple(range(len(CLASS_NAMES)))
    manifest = stratified_split(records, ratios, seed, classes=classes, metadata=source.metadata)
    manifest.save(output)
    console.print(f"[green]Split manifest written to {output}[/green]")
    _print_split_counts(manifest)


def _train_stage(ctx, stage: str, manifest_path: str, values: Dict[str, Any], output_dir: Optional[str]):
    config = _load_config(ctx, values)
    manifest = SampleManifest.load(manifest_path)
    if stage == 'classifier':
        model_config, training, train = config.classifier.model_config(), config.train_classifier, train_classifier
    else:
        model_config, training, train = config.segmenter.model_config(), config.train_segmenter, train_segmenter
    output_dir = Path(output_dir) if output_dir else Path(config.output_dir) / "train"

    console.print(BANNER)
    progress, advance = _epoch_progress(f"Training {stage}", training.epochs)
    with progress:
        result = train(manifest, model_config, training, output_dir, name=stage,
                       workers=config.workers, on_epoch=advance)
    console.print(_training_table(result))
    console.print(f"[dim]Use --set {stage}.weights={result.weights_path} to run with these weights[/dim]")


@cli.command('train-cls')
@click.argument('manifest_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--epochs', type=int, help='Training epochs')
@click.option('--batch-size', type=int, help='Mini-batch size')
@click.option('--preset', help='Classifier preset (densenet121/169/201, toy)')
@click.option('--seed', type=int, help='Shuffle seed')
@click.option('--output-dir', '-o', type=click.Path(file_okay=False), help='Where weights and curves go')
@click.pass_context
def train_cls(ctx, manifest_path, epochs, batch_size, preset, seed, output_dir):
    """Train the crack/background classifier"""
    _train_stage(ctx, 'classifier', manifest_path, {
        'training.classifier.epochs': epochs,
        'training.classifier.batch_size': batch_size,
        'training.classifier.seed': seed,
        'classifier.preset': preset,
    }, output_dir)


@cli.command('train-seg')
@click.argument('manifest_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--epochs', type=int, help='Training epochs')
@click.option('--batch-size', type=int, help='Mini-batch size')
@click.option('--preset', help='Segmenter preset (default, toy)')
@click.option('--seed', type=int, help='Shuffle seed')
@click.option('--output-dir', '-o', type=click.Path(file_okay=False), help='Where weights and curves go')
@click.pass_context
def train_seg(ctx, manifest_path, epochs, batch_size, preset, seed, output_dir):
    """Train the crack segmenter on crack images with masks"""
    _train_stage(ctx, 'segmenter', manifest_path, {
        'training.segmenter.epochs': epochs,
        'training.segmenter.batch_size': batch_size,
        'training.segmenter.seed': seed,
        'segmenter.preset': preset,
    }, output_dir)


@cli.command()
@click.argument('manifest_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--classifier-weights', type=click.Path(dir_okay=False), help='Classifier weight bundle')
@click.option('--segmenter-weights', type=click.Path(dir_okay=False), help='Segmenter weight bundle')
@click.option('--output-dir', '-o', type=click.Path(file_okay=False), help='Run output directory')
@click.option('--scorecam/--no-scorecam', default=None, help='Emit heatmaps for routed images')
@click.option('--workers', type=int, help='Worker threads for per-image work')
@click.pass_context
def run(ctx, manifest_path, classifier_weights, segmenter_weights, output_dir, scorecam, workers):
    """Classify every image and segment the ones labelled crack"""
    config = _load_config(ctx, {
        'classifier.weights': classifier_weights,
        'segmenter.weights': segmenter_weights,
        'output_dir': output_dir,
        'scorecam.enabled': scorecam,
        'workers': workers,
    })
    manifest = SampleManifest.load(manifest_path)
    console.print(BANNER)
    with console.status(f"Inspecting {len(manifest)} images..."):
        report = run_pipeline(config, manifest)
    report.render_table(console)
    if report.metrics is not None:
        report.metrics.render_table(console)
    console.print(f"[green]{len(report.routed)}/{len(report.records)} routed to segmentation; "
                  f"report in {report.output_dir}[/green]")
    if report.failures:
        console.print(f"[yellow]{len(report.failures)} records failed; see the report[/yellow]")


@cli.command('eval')
@click.argument('manifest_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--classifier-weights', type=click.Path(dir_okay=False), help='Classifier weight bundle')
@click.option('--segmenter-weights', type=click.Path(dir_okay=False), help='Segmenter weight bundle')
@click.option('--output', '-o', type=click.Path(dir_okay=False), help='Metrics report path (.yaml)')
@click.pass_context
def evaluate(ctx, manifest_path, classifier_weights, segmenter_weights, output):
    """Score both stages on the test split"""
    config = _load_config(ctx, {
        'classifier.weights': classifier_weights,
        'segmenter.weights': segmenter_weights,
    })
    manifest = SampleManifest.load(manifest_path)
    with console.status("Evaluating on the test split..."):
        report = eval_command(config, manifest, output)

    table = Table(title="Evaluation")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right")
    for name, value in eval_summary(report).items():
        table.add_row(name, f"{value:.4f}" if isinstance(value, float) else str(value))
    for name in CLASS_NAMES:
        table.add_row(f"support {name}", str(report.classification[f'support_{name}']))
    console.print(table)
    report.render_table(console)


@cli.command()
@click.argument('image_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--tap', 'taps', multiple=True, help='Tap to explain; repeatable (default: scorecam.taps)')
@click.option('--class-index', type=click.IntRange(0, len(CLASS_NAMES) - 1), help='Target class')
@click.option('--stage', type=click.Choice(['segmenter', 'classifier']), default='segmenter', show_default=True)
@click.option('--weights', type=click.Path(dir_okay=False), help='Weight bundle of the explained stage')
@click.option('--output-dir', '-o', type=click.Path(file_okay=False), help='Heatmap output directory')
@click.pass_context
def explain(ctx, image_path, taps, class_index, stage, weights, output_dir):
    """Write Score-CAM heatmaps and overlays for one image"""
    config = _load_config(ctx, {f'{stage}.weights': weights})
    with console.status("Computing Score-CAM heatmaps..."):
        paths = explain_command(config, image_path, taps or None, class_index, output_dir, stage)
    for path in paths:
        console.print(f"[green]✅ {path}[/green]")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point: 0 on success, 1 on usage or configuration errors, 2 on runtime failures"""
    try:
        cli.main(args=argv, prog_name="lincrack", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        console.print("[yellow]Aborted[/yellow]")
        return EXIT_RUNTIME
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except ConfigurationError as e:
        console.print(f"[red]Configuration error: {e}[/red]")
        return EXIT_USAGE
    except LinCrackError as e:
        console.print(f"[red]{describe_error(e)}[/red]")
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("unexpected failure")
        console.print(f"[red]Unexpected error: {describe_error(e)}[/red]")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
