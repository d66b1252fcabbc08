"""
Command-line surface of specforce-diffusion.

Every subcommand loads the run configuration, builds a PipelineManager,
runs one operation and prints its summary as JSON on stdout. Failures are
reported as a single JSON line on stderr:

- exit 2: a SpecforceError (bad input, bad configuration, failed validation)
- exit 1: anything unexpected (``error_code`` is ``INTERNAL``)
- exit 3: ``roundtrip-check`` ran but the audit failed

A run manifest (``run_manifest.json``) is written into ``--out`` by a
lifecycle cleanup callback, on success, on failure and on interruption.
"""

import json
import logging
import sys
from typing import Any, Callable, Dict, Optional

import click

from .config.config_manager import RunConfigManager
from .gen_tools.core.exceptions import SpecforceError
from .gen_tools.core.pipeline_manager import PipelineManager
from .gen_tools.models.classifiers import VARIANTS
from .gen_tools.utils.log_manager import get_log_manager
from .run_lifecycle import RunLifecycleManager

logger = logging.getLogger(__name__)

EXIT_ERROR = 2
EXIT_INTERNAL = 1
EXIT_AUDIT_FAILED = 3


def _emit_error(payload: Dict[str, Any], code: int) -> None:
    click.echo(json.dumps(payload, ensure_ascii=False, default=str), err=True)
    sys.exit(code)


def _execute(command: str, config_file: Optional[str], out_dir: str, seed: Optional[int],
             action: Callable[[PipelineManager], Any]) -> Any:
    """Run one pipeline operation under a lifecycle manager; returns whatever ``action`` returns."""
    overrides = {"run": {"seed": str(seed)}} if seed is not None else None
    try:
        config = RunConfigManager(config_file, overrides)
        get_log_manager().configure_logging(config.run.log_level)
        with RunLifecycleManager() as lifecycle:
            pipeline = PipelineManager(config, command, out_dir, lifecycle.should_stop)
            lifecycle.add_cleanup_callback(pipeline.write_manifest)
            return action(pipeline)
    except SpecforceError as e:
        _emit_error(e.to_dict(), EXIT_ERROR)
    except Exception as e:
        logger.exception(f"Unexpected failure in '{command}'")
        _emit_error({"error_type": type(e).__name__, "message": str(e), "error_code": "INTERNAL",
                     "details": {"command": command}}, EXIT_INTERNAL)


def _print_summary(summary: Dict[str, Any]) -> None:
    click.echo(json.dumps(summary, indent=2, ensure_ascii=False, default=str))


config_option = click.option("--config", "config_file", type=click.Path(dir_okay=False),
                             help="Run configuration (INI); packaged defaults fill the gaps.")
out_option = click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
                          help="Output directory (created if missing).")
seed_option = click.option("--seed", type=int, default=None, help="Override [run] seed.")


@click.group()
@click.version_option(package_name="specforce-diffusion")
def cli():
    """Class-conditional synthetic specific-force windows via delay-embedded image diffusion."""


@cli.command("ingest")
@click.option("--data-root", type=click.Path(file_okay=False), default=None,
              help="Directory the manifest paths are relative to (default: the manifest's directory).")
@click.option("--manifest", type=click.Path(dir_okay=False), default=None,
              help="Manifest CSV with columns file,label,subject.")
@config_option
@out_option
@seed_option
def ingest(data_root, manifest, config_file, out_dir, seed):
    """Window, split and normalize CSV recordings into a dataset container."""
    _print_summary(_execute("ingest", config_file, out_dir, seed, lambda p: p.ingest(data_root, manifest)))


@cli.command("toy-data")
@click.option("--per-class", type=click.IntRange(min=1), default=None,
              help="Windows per class (default: [data] toy_per_class).")
@click.option("--write-csv", is_flag=True, help="Also write the recordings as CSV files plus a manifest.")
@config_option
@out_option
@seed_option
def toy_data(per_class, write_csv, config_file, out_dir, seed):
    """Write a deterministic four-class toy dataset."""
    _print_summary(_execute("toy-data", config_file, out_dir, seed, lambda p: p.toy_data(per_class, write_csv)))


@cli.command("train-diffusion")
@click.option("--dataset", required=True, type=click.Path(dir_okay=False), help="Dataset container.")
@click.option("--resume", type=click.Path(dir_okay=False), default=None,
              help="Denoiser checkpoint to continue from.")
@config_option
@out_option
@seed_option
def train_diffusion(dataset, resume, config_file, out_dir, seed):
    """Train the class-conditional denoiser on the training split."""
    _print_summary(_execute("train-diffusion", config_file, out_dir, seed,
                            lambda p: p.train_diffusion(dataset, resume)))


@cli.command("train-classifier")
@click.option("--dataset", required=True, type=click.Path(dir_okay=False), help="Dataset container.")
@click.option("--variant", required=True, type=click.Choice(VARIANTS), help="Classifier input domain.")
@config_option
@out_option
@seed_option
def train_classifier(dataset, variant, config_file, out_dir, seed):
    """Train an image-based or signal-based classifier with early stopping."""
    _print_summary(_execute("train-classifier", config_file, out_dir, seed,
                            lambda p: p.train_classifier(dataset, variant)))


@cli.command("generate")
@click.option("--model", required=True, type=click.Path(dir_okay=False), help="Denoiser checkpoint.")
@click.option("--label", required=True,
              help="Class name, 'all' (round-robin over classes) or 'random' (uniform draw).")
@click.option("--count", required=True, type=click.IntRange(min=0),
              help="Number of windows; 0 writes an empty split.")
@click.option("--export-csv", is_flag=True, help="Also write each window as a CSV recording.")
@config_option
@out_option
@seed_option
def generate(model, label, count, export_csv, config_file, out_dir, seed):
    """Sample synthetic windows from a trained denoiser."""
    _print_summary(_execute("generate", config_file, out_dir, seed,
                            lambda p: p.generate(model, label, count, seed, export_csv)))


@cli.command("evaluate")
@click.option("--real", required=True, type=click.Path(dir_okay=False), help="Real dataset container.")
@click.option("--synthetic", required=True, type=click.Path(dir_okay=False),
              help="Synthetic container (or any dataset container; its test split is used).")
@click.option("--image-model", required=True, type=click.Path(dir_okay=False), help="Image classifier.")
@click.option("--signal-model", required=True, type=click.Path(dir_okay=False), help="Signal classifier.")
@config_option
@out_option
@seed_option
def evaluate(real, synthetic, image_model, signal_model, config_file, out_dir, seed):
    """Cross-evaluate real and synthetic data and write the report bundle."""
    _print_summary(_execute("evaluate", config_file, out_dir, seed,
                            lambda p: p.evaluate(real, synthetic, image_model, signal_model)))


@cli.command("roundtrip-check")
@click.option("--dataset", type=click.Path(dir_okay=False), default=None,
              help="Audit every window of a dataset container.")
@click.option("--length", type=click.IntRange(min=1), default=None, help="Random-signal length L.")
@click.option("--m", "m", type=click.IntRange(min=1), default=None, help="Delay-embedding skip m.")
@click.option("--n", "n", type=click.IntRange(min=1), default=None, help="Delay-embedding rows n.")
@click.option("--count", type=click.IntRange(min=1), default=1000, help="Random signals to audit.")
@click.option("--corrupt", is_flag=True, help="Perturb one pixel to check that the audit detects it.")
@config_option
@out_option
@seed_option
def roundtrip_check(dataset, length, m, n, count, corrupt, config_file, out_dir, seed):
    """Audit that inverting the delay embedding restores every signal bit for bit."""
    audit = _execute("roundtrip-check", config_file, out_dir, seed,
                     lambda p: p.roundtrip_check(dataset, length, m, n, count, corrupt))
    _print_summary(audit.to_dict())
    if not audit.passed:
        sys.exit(EXIT_AUDIT_FAILED)


def main():
    cli()
