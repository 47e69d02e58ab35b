#!/usr/bin/env python3
"""
OISA CLI
Synthesize data, train, infer, evaluate and report referring audio-visual segmentation runs
"""

import click
import json
import sys
from pathlib import Path

# Add src directory to path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from src.evaluation.evaluator import DatasetEvaluator
from src.evaluation.report_builder import ReportBuilder, read_timing, write_report, render_report
from src.experiments.ablations import AblationRunner, KINDS
from src.inference.inference import Predictor
from src.manifest_store.dataset_card import dataset_stats, format_stats
from src.manifest_store.manifest_store import ManifestStore, validate_manifest
from src.mask_head.mask_head import REGIMES
from src.oisa_model.oisa_model import OISAModel, load_checkpoint, save_checkpoint
from src.sequence_assembly.sequence_assembly import LAYOUTS
from src.synth_service.dataset_synthesizer import DatasetSynthesizer
from src.training.trainer import Trainer, write_loss_curve
from src.utils.config import ConfigManager, setup_logging
from src.utils.errors import ConfigError, DataError, OISAError
from src.utils.reproducibility import seed_everything

RESOLVED_CONFIG = "resolved_config.yaml"
DATASET_CARD = "dataset_card.json"


def _fail(e: Exception):
    """Print the error and exit with its code: 2 config, 3 data or file, 4 numeric, 1 anything else"""
    click.echo(f"Error: {e}", err=True)
    if isinstance(e, OISAError):
        sys.exit(e.exit_code)
    sys.exit(DataError.exit_code if isinstance(e, OSError) else 1)


def _prepare(ctx, seed, out_dir: Path):
    """Apply the seed override, seed every generator and snapshot the resolved config beside the outputs"""
    config = ctx.obj['config']
    if seed is not None:
        config.runtime.seed = seed
    seed_everything(config.runtime.seed)
    ctx.obj['manager'].save_config(config, Path(out_dir) / RESOLVED_CONFIG)
    return config


@click.group()
@click.option('--config', default='config.yaml', help='Configuration file path')
@click.pass_context
def cli(ctx, config):
    """OISA referring audio-visual segmentation CLI"""
    ctx.ensure_object(dict)

    try:
        # Load configuration
        config_manager = ConfigManager(config)
        ctx.obj['manager'] = config_manager
        ctx.obj['config'] = config_manager.load_config()
    except Exception as e:
        _fail(e)

    # Setup logging
    setup_logging(ctx.obj['config'].logging)


@cli.command()
@click.option('--out', 'out_dir', required=True, type=click.Path(), help='Dataset directory to create')
@click.option('--samples', '--num-samples', 'samples', default=20, help='Number of videos')
@click.option('--split', type=click.Choice(['train', 'test']), default='train')
@click.option('--preset', type=click.Choice(['random', 'crossing', 'sync']), default=None,
              help='Scene preset (defaults to synth.preset)')
@click.option('--fps-range', default=None, help='Frame rate range as MIN:MAX, within 3:15')
@click.option('--no-target-frac', type=float, default=None, help='Fraction of no-target expressions')
@click.option('--multi-target-frac', type=float, default=None, help='Fraction of multi-target expressions')
@click.option('--seed', type=int, default=None, help='Generator seed')
@click.pass_context
def synth(ctx, out_dir, samples, split, preset, seed, fps_range, no_target_frac, multi_target_frac):
    """Generate a synthetic dataset with ground truth masks and expressions"""
    try:
        synth_cfg = ctx.obj['config'].synth
        if fps_range:
            try:
                synth_cfg.fps_min, synth_cfg.fps_max = (int(v) for v in fps_range.split(":"))
            except ValueError as e:
                raise ConfigError(f"--fps-range expects MIN:MAX, got {fps_range}") from e
        if no_target_frac is not None:
            synth_cfg.no_target_frac = no_target_frac
        if multi_target_frac is not None:
            synth_cfg.multi_target_frac = multi_target_frac
        ctx.obj['config'].validate()

        config = _prepare(ctx, seed, out_dir)
        synthesizer = DatasetSynthesizer(config.synth)
        manifest = synthesizer.synthesize(samples, config.runtime.seed, split, preset)
        path = ManifestStore(Path(out_dir)).save(manifest)

        violations = validate_manifest(manifest)
        if violations:
            for violation in violations[:20]:
                click.echo(f"  {violation}", err=True)
            raise DataError(f"{len(violations)} schema violations in generated manifest")

        n_expr = sum(len(s.expressions) for s in manifest.samples)
        click.echo(f"✓ Wrote {len(manifest.samples)} samples and {n_expr} expressions to {path}")

    except Exception as e:
        _fail(e)


@cli.command()
@click.option('--stage', type=click.Choice(['align', 'tune']), default=None, help='Training stage')
@click.option('--data', 'data_dir', type=click.Path(), default=None, help='Training dataset directory (tune)')
@click.option('--steps', type=int, default=None, help='Optimizer steps')
@click.option('--seed', type=int, default=None, help='Run seed')
@click.option('--ckpt', required=True, type=click.Path(), help='Checkpoint to write')
@click.option('--init', 'init_ckpt', type=click.Path(exists=True), default=None,
              help='Checkpoint to start from (e.g. the align stage output)')
@click.pass_context
def train(ctx, stage, data_dir, steps, seed, ckpt, init_ckpt):
    """Run the audio alignment stage or the instruct segmentation tuning stage"""
    try:
        ckpt = Path(ckpt)
        config = _prepare(ctx, seed, ckpt.parent)
        stage = stage or config.train.stage
        model = load_checkpoint(Path(init_ckpt), config) if init_ckpt else OISAModel(config)
        trainer = Trainer(model, config)

        if stage == "align":
            pairs = DatasetSynthesizer(config.synth, model.tokenizer).alignment_pairs(
                config.train.align_pairs, config.runtime.seed)
            losses = trainer.align_audio_stage(pairs, steps)
            click.echo(f"Alignment CE: {losses[0]:.4f} -> {losses[-1]:.4f}")
        else:
            if data_dir is None:
                raise DataError("the tune stage needs --data")
            manifest = ManifestStore(Path(data_dir)).load(load_media=True)
            history = trainer.fit(manifest, steps, config.runtime.seed)
            curve = write_loss_curve(history, ckpt.with_suffix(".loss.csv"))
            click.echo(f"Loss: {history[0].total:.4f} -> {history[-1].total:.4f} (curve: {curve})")

        save_checkpoint(model, ckpt)
        click.echo(f"✓ Saved {stage} checkpoint to {ckpt}")

    except Exception as e:
        _fail(e)


@cli.command()
@click.option('--manifest', 'manifest_dir', required=True, type=click.Path(exists=True), help='Dataset directory')
@click.option('--ckpt', required=True, type=click.Path(exists=True), help='Trained checkpoint')
@click.option('--out', 'out_dir', required=True, type=click.Path(), help='Predictions directory')
@click.option('--regime', type=click.Choice(list(REGIMES)), default='QP', help='Mask decoding regime')
@click.option('--fusion', type=click.Choice(list(LAYOUTS)), default=None, help='Content token layout')
@click.option('--seed', type=int, default=None, help='Run seed')
@click.pass_context
def infer(ctx, manifest_dir, ckpt, out_dir, regime, fusion, seed):
    """Generate answers, explanations and per-frame masks for every expression"""
    try:
        config = _prepare(ctx, seed, out_dir)
        model = load_checkpoint(Path(ckpt), config)
        manifest = ManifestStore(Path(manifest_dir)).load(load_media=True)
        Predictor(model, config).predict_manifest(manifest, Path(out_dir), regime, fusion)
        click.echo(f"✓ Wrote predictions to {out_dir}")

    except Exception as e:
        _fail(e)


@cli.command(name='eval')
@click.option('--manifest', 'manifest_dir', required=True, type=click.Path(exists=True), help='Dataset directory')
@click.option('--pred', 'pred_dir', required=True, type=click.Path(exists=True), help='Predictions directory')
@click.option('--out', 'out_dir', default=None, type=click.Path(), help='Report directory (defaults to <pred>/eval)')
@click.option('--tolerance', type=float, default=None, help='Boundary tolerance in pixels')
@click.pass_context
def evaluate(ctx, manifest_dir, pred_dir, out_dir, tolerance):
    """Score predictions: J, F, J&F per split and METEOR for explanations"""
    try:
        out_dir = Path(out_dir) if out_dir else Path(pred_dir) / "eval"
        config = _prepare(ctx, None, out_dir)
        manifest = ManifestStore(Path(manifest_dir)).load()
        report = DatasetEvaluator(config.eval).evaluate_dataset(manifest, Path(pred_dir), tolerance)
        write_report(report, out_dir, timing=read_timing(Path(pred_dir)))
        click.echo(render_report(report))

    except Exception as e:
        _fail(e)


@cli.command()
@click.argument('eval_dirs', nargs=-1, type=click.Path())
@click.option('--out', 'out_dir', required=True, type=click.Path(), help='Report output directory')
@click.pass_context
def report(ctx, eval_dirs, out_dir):
    """Render split tables and query/fusion comparisons from evaluated runs"""
    try:
        _prepare(ctx, None, Path(out_dir))
        builder = ReportBuilder().add_runs([Path(d) for d in eval_dirs])
        summary = builder.write(Path(out_dir))
        click.echo(summary.read_text().rstrip())

    except Exception as e:
        _fail(e)


@cli.command()
@click.option('--manifest', 'manifest_dir', required=True, type=click.Path(exists=True), help='Dataset directory')
@click.option('--json', 'as_json', is_flag=True, help='Print the statistics as JSON')
@click.option('--out', 'out_dir', type=click.Path(), default=None,
              help='Also write dataset_card.json and the resolved config here')
@click.pass_context
def stats(ctx, manifest_dir, as_json, out_dir):
    """Show dataset statistics"""
    try:
        manifest = ManifestStore(Path(manifest_dir)).load()
        figures = dataset_stats(manifest)
        if out_dir is not None:
            _prepare(ctx, None, Path(out_dir))
            (Path(out_dir) / DATASET_CARD).write_text(json.dumps(figures, indent=1))
        click.echo(json.dumps(figures, indent=1) if as_json else format_stats(figures))

    except Exception as e:
        _fail(e)


@cli.command()
@click.option('--kind', type=click.Choice(list(KINDS)), required=True, help='Which ablation to run')
@click.option('--seeds', default='0,1,2', help='Comma separated seeds')
@click.option('--out', 'out_dir', required=True, type=click.Path(), help='Ablation output directory')
@click.option('--train-samples', default=10, help='Training videos per seed')
@click.option('--test-samples', default=50, help='Test videos per seed')
@click.option('--steps', type=int, default=None, help='Tuning steps per model')
@click.pass_context
def ablate(ctx, kind, seeds, out_dir, train_samples, test_samples, steps):
    """Train and evaluate the query-type or fusion-type ablation over several seeds"""
    try:
        seed_list = [int(s) for s in seeds.split(",") if s.strip()]
        runner = AblationRunner(ctx.obj['config'], train_samples, test_samples, steps)
        summary = runner.run(kind, seed_list, Path(out_dir))
        click.echo(summary.read_text().rstrip())

    except Exception as e:
        _fail(e)


if __name__ == '__main__':
    cli()
