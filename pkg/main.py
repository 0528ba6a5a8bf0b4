import functools
import logging
import os
from typing import Optional

import click
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from core.dataset import apply_preset, load_csv, load_presets, load_raw_cube, save_csv, stratified_split
from core.errors import BandselError
from core.metrics import write_report_csv
from core.svm import KernelKind, KernelSpec, save_classifier, train_ovr
from harness.config import ExperimentConfig, load_config, sweep_preset
from harness.runner import LeakageGuard, check_output_dir, evaluate_point, load_experiment_dataset, load_report, run
from harness.tables import emit_tables
from rankers import build_registry

# --- Load Environment Variables ---
load_dotenv()
LOG_FILE_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - [%(module)s.%(funcName)s:%(lineno)d] %(message)s'

logger = logging.getLogger('bandsel.main')
console = Console()


# --- Logging Setup ---
def setup_logging(verbose: bool, log_file: Optional[str]):
    level = logging.DEBUG if verbose else os.getenv("BANDSEL_LOG_LEVEL", "INFO").upper()
    handlers = [RichHandler(console=Console(stderr=True), show_path=False)]
    if log_file:
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(LOG_FILE_FORMAT, datefmt='%Y-%m-%d %H:%M:%S'))
        handlers.append(file_handler)
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]", handlers=handlers, force=True)


def reports_errors(command):
    """Turn library errors into one-line CLI messages."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except BandselError as e:
            raise click.ClickException(str(e)) from e
    return wrapper


def dataset_options(command):
    for option in reversed([
        click.option('--dataset', required=True, help='Sample CSV, or raw cube data file with --format cube.'),
        click.option('--format', 'data_format', type=click.Choice(['csv', 'cube']), default='csv', show_default=True),
        click.option('--header', default=None, help='Cube header file (key=value lines).'),
        click.option('--preset', default=None, help='Scene preset: class names and water-band removal.'),
        click.option('--normalize/--no-normalize', default=True, show_default=True),
        click.option('--ratio', type=float, default=0.9, show_default=True, help='Test/train ratio.'),
        click.option('--seed', type=int, default=0, show_default=True),
    ]):
        command = option(command)
    return command


def _point_config(dataset, data_format, header, preset, normalize, **extra) -> ExperimentConfig:
    overrides = dict(dataset=dataset, format=data_format, header=header, preset=preset, normalize=normalize)
    overrides.update(extra)
    config = load_config(overrides=overrides)
    config.validate()
    return config


@click.group()
@click.option('-v', '--verbose', is_flag=True, help='Debug logging.')
@click.option('--log-file', default=None, help='Also write the log to this file.')
def cli(verbose, log_file):
    """Hyperspectral band selection and SVM benchmarking."""
    setup_logging(verbose, log_file)


@cli.command()
@click.option('--dataset', required=True)
@click.option('--format', 'data_format', type=click.Choice(['csv', 'cube']), default='cube', show_default=True)
@click.option('--header', default=None)
@click.option('--preset', default=None)
@click.option('--out', 'out_path', required=True, help='Destination sample CSV.')
@reports_errors
def ingest(dataset, data_format, header, preset, out_path):
    """Convert a scene to the sample CSV, optionally applying a preset."""
    if data_format == 'cube':
        if not header:
            raise click.UsageError("--header is required for a raw cube")
        d = load_raw_cube(dataset, header)
    else:
        d = load_csv(dataset)
    if preset:
        d = apply_preset(d, preset)
    save_csv(d, out_path)
    for class_id, count in d.class_counts().items():
        logger.info(f"class {class_id:>3} {d.class_name(class_id):<32} {count:>6}")
    console.print(f"{d.n_samples} samples, {d.band_count} bands, {d.class_count} classes written to {out_path}")


@cli.command()
@dataset_options
@click.option('--method', required=True)
@click.option('--c', 'mcm_c', default=None, help='MCM C, or "grid".')
@click.option('--bins', type=int, default=None)
@click.option('--iters', 'relief_iters', type=int, default=None)
@click.option('--k', 'band_count', type=int, default=None, help='Prefix length for greedy selectors.')
@click.option('--dump-lp', 'dump_lp_dir', default=None, help='Write each one-vs-rest MCM LP to this directory.')
@click.option('--out', 'out_path', default=None, help='Ranking CSV (rank, band_index, score).')
@reports_errors
def rank(dataset, data_format, header, preset, normalize, ratio, seed, method, mcm_c, bins, relief_iters,
         band_count, dump_lp_dir, out_path):
    """Rank bands on the training part of one split."""
    config = _point_config(dataset, data_format, header, preset, normalize, mcm_c=mcm_c, bins=bins,
                           relief_iters=relief_iters)
    registry = build_registry()
    ranker = registry.get(method)
    d = load_experiment_dataset(config)
    split = stratified_split(d, ratio, seed)
    train = d.subset(split.train_indices)
    LeakageGuard().check(train, d.subset(split.test_indices), f"ranker {method}")
    if dump_lp_dir:
        check_output_dir(dump_lp_dir)
    ranking = ranker.rank(train, band_count or d.band_count, config.ranker_settings(seed, dump_lp_dir=dump_lp_dir))
    if "mcm_c" in ranking.parameters:
        logger.info(f"MCM ranking fitted with C={ranking.parameters['mcm_c']:g}")

    lines = ["rank,band_index,score"] + [f"{i + 1},{b},{s:.10g}" for i, (b, s) in
                                          enumerate(zip(ranking.band_numbers(), ranking.scores))]
    if out_path:
        with open(out_path, 'w', encoding='utf-8') as f:
            f.write("\n".join(lines) + "\n")
        logger.info(f"Wrote {method} ranking of {len(ranking)} bands to {out_path}")
    else:
        click.echo("\n".join(lines))


@cli.command(name='eval')
@dataset_options
@click.option('--method', required=True)
@click.option('--k', 'band_count', type=int, required=True)
@click.option('--c', 'mcm_c', default=None, help='MCM C, or "grid".')
@click.option('--svm-c', type=float, default=None)
@click.option('--gamma', default=None, help='RBF gamma, or "grid".')
@click.option('--weighting', type=click.Choice(['test', 'train', 'total']), default=None)
@click.option('--out', 'out_path', required=True, help='Per-class MCC report CSV.')
@click.option('--save-model', default=None, help='Write the trained one-vs-rest classifier here.')
@reports_errors
def evaluate(dataset, data_format, header, preset, normalize, ratio, seed, method, band_count, mcm_c, svm_c, gamma,
             weighting, out_path, save_model):
    """Evaluate one (method, k, ratio, seed) point."""
    config = _point_config(dataset, data_format, header, preset, normalize, mcm_c=mcm_c, svm_c=svm_c,
                           gamma=gamma, weighting=weighting, band_counts=[band_count], ratios=[ratio],
                           seeds=[seed])
    ranker = build_registry().get(method)
    d = load_experiment_dataset(config)
    config.validate(d.band_count)
    split = stratified_split(d, ratio, seed)
    train, test = d.subset(split.train_indices), d.subset(split.test_indices)
    LeakageGuard().check(train, test, f"ranker {method}")
    bands = ranker.rank(train, band_count, config.ranker_settings(seed)).top(band_count)
    report, chosen_gamma = evaluate_point(train, test, bands, config, seed)
    write_report_csv(report, out_path)
    if save_model:
        save_classifier(train_ovr(train, bands, KernelSpec(KernelKind.RBF, chosen_gamma), config.svm_c), save_model)
    console.print(f"{method} k={band_count}: weighted MCC {report.weighted:.4f} (gamma {chosen_gamma:.4g})")


def _sweep_options(command):
    for option in reversed([
        click.option('--config', 'config_path', default=None, help='INI experiment config.'),
        click.option('--kind', type=click.Choice(['bands', 'ratios']), default=None,
                     help='Band-count sweep at ratio 0.90 or ratio sweep at 15 bands.'),
        click.option('--dataset', default=None),
        click.option('--format', 'data_format', type=click.Choice(['csv', 'cube']), default=None),
        click.option('--header', default=None),
        click.option('--preset', default=None),
        click.option('--normalize/--no-normalize', default=None),
        click.option('--methods', default=None, help='Comma-separated.'),
        click.option('--band-counts', default=None),
        click.option('--ratios', default=None),
        click.option('--seeds', default=None),
        click.option('--mcm-c', default=None),
        click.option('--mcm-c-grid', default=None),
        click.option('--mcm-max-negatives', default=None),
        click.option('--lp-pricing', type=click.Choice(['dantzig', 'bland']), default=None,
                     help='Simplex pricing; dantzig hands over to bland after degenerate pivots.'),
        click.option('--bins', default=None),
        click.option('--relief-iters', default=None),
        click.option('--svm-c', default=None),
        click.option('--gamma', default=None),
        click.option('--gamma-grid', default=None),
        click.option('--cv-folds', default=None),
        click.option('--weighting', default=None),
        click.option('--output-dir', default=None),
        click.option('--threads', default=None),
        click.option('--focus-band-count', default=None),
    ]):
        command = option(command)
    return command


@cli.command()
@_sweep_options
@click.pass_context
@reports_errors
def sweep(ctx, config_path, kind, data_format, **options):
    """Run the experiment grid, resuming completed points, then write the tables."""
    overrides = sweep_preset(kind) if kind else {}
    overrides.update({k: v for k, v in options.items() if v is not None})
    if data_format:
        overrides['format'] = data_format
    config = load_config(config_path, overrides)
    report = run(config)
    emit_tables(report, config.output_dir, config.focus_band_count)
    failed = report.failed_records()
    console.print(f"{len(report.records)} records, {len(failed)} failed, tables in {config.output_dir}")
    if failed:
        ctx.exit(1)


@cli.command()
@click.option('--output-dir', required=True)
@click.option('--config', 'config_path', default=None, help='Restrict the report to this config\'s grid.')
@click.option('--focus-band-count', type=int, default=15, show_default=True)
@click.pass_context
@reports_errors
def report(ctx, output_dir, config_path, focus_band_count):
    """Rewrite the tables from a results directory."""
    config = load_config(config_path) if config_path else None
    experiment_report = load_report(output_dir, config)
    emit_tables(experiment_report, output_dir, focus_band_count)
    if experiment_report.failed_records():
        ctx.exit(1)


@cli.command()
def presets():
    """List the scene presets."""
    table = Table(title="Dataset presets")
    for column in ("name", "raw bands", "removed bands", "classes", "labeled samples"):
        table.add_column(column)
    for name, preset in sorted(load_presets().items()):
        removed = ", ".join(f"{a}-{b}" if a != b else f"{a}" for a, b in preset.get('removed_bands', [])) or "-"
        table.add_row(name, str(preset.get('raw_band_count', '?')), removed, str(len(preset['class_names'])),
                      str(sum(preset.get('class_counts', []))))
    console.print(table)


if __name__ == '__main__':
    cli()
