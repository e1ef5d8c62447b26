"""
Command line entry point.

``run(argv)`` returns the process exit code: 0 on success, 2 for usage
errors, 3 for data and configuration errors and 4 for anything else. Errors
are reported as one JSON line on stderr.
"""

import json
import logging
import logging.config
import sys

import click
import yaml

from gaitdata.files import atomic_write
from gaitset.models import ModelConfig
from silhouettes.models import PartSubset, PipelineConfig, SilhouetteSource
from synthgait.models import CameraSpec
from trainer.models import BatchSpec, LossConfig, TrainConfig

from . import settings, workflows
from .exceptions import GaitReidError, InvalidConfig

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


def configure_logging(level=None):
    logging.config.dictConfig(settings.LOGGING)
    if level:
        logging.getLogger().setLevel(level.upper())


def load_config(path):
    """YAML file whose top-level keys are subcommand names."""
    with open(path, encoding='utf-8') as handle:
        data = yaml.safe_load(handle) or {}
    if not isinstance(data, dict):
        raise InvalidConfig(f'{path}: expected a mapping of subcommand names')
    unknown = set(data) - set(cli.commands)
    if unknown:
        raise InvalidConfig(f'{path}: unknown sections {sorted(unknown)}')
    return {
        command: {key.replace('-', '_'): value for key, value in (options or {}).items()}
        for command, options in data.items()
    }


def n_jobs_for(n_jobs, deterministic):
    return 1 if deterministic else n_jobs


def split_list(text, cast=str):
    return tuple(cast(item.strip()) for item in str(text).split(',') if item.strip())


def resolve_model_config(path, preset, seed):
    """Model config and its preset; a YAML file names its own preset (desk if absent)."""
    if not path:
        return ModelConfig.from_dict({'preset': preset, 'seed': seed}), preset
    with open(path, encoding='utf-8') as handle:
        data = yaml.safe_load(handle) or {}
    if not isinstance(data, dict):
        raise InvalidConfig(f'{path}: expected a mapping of model settings')
    return ModelConfig.from_dict(data), data.get('preset', 'desk')


def checkpoint_cadence(preset, checkpoint_every=None):
    if checkpoint_every is not None:
        return checkpoint_every
    if preset == 'large':
        return settings.LARGE_CHECKPOINT_EVERY
    return settings.CHECKPOINT_EVERY


def emit(text, json_out=None):
    if json_out:
        atomic_write(json_out, (text + '\n').encode('utf-8'))
    return text


root_option = click.option(
    '--root', envvar=settings.DATA_ROOT_ENV, required=True,
    type=click.Path(exists=True, file_okay=False),
    help=f'Dataset root (or ${settings.DATA_ROOT_ENV}).')
manifest_option = click.option(
    '--manifest', type=click.Path(exists=True, dir_okay=False),
    help='Manifest file; defaults to <root>/manifest.jsonl.')
jobs_option = click.option('--n-jobs', default=settings.N_JOBS, show_default=True, type=int)
deterministic_option = click.option(
    '--deterministic', is_flag=True, help='Run every parallel step in one process.')
json_option = click.option('--json', 'as_json', is_flag=True, help='Print the report as JSON.')
json_out_option = click.option('--json-out', type=click.Path(dir_okay=False),
                               help='Also write the JSON report to this file.')


@click.group()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='YAML file with per-subcommand defaults.')
@click.option('--log-level', default=None,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
@click.pass_context
def cli(ctx, config_path, log_level):
    """Partial-silhouette gait re-identification toolkit."""
    configure_logging(log_level)
    if config_path:
        ctx.default_map = load_config(config_path)


@cli.command()
@click.option('--out', required=True, type=click.Path(file_okay=False))
@click.option('--identities', default=16, show_default=True, type=int)
@click.option('--views', default='frontal,frontal', show_default=True,
              help='One camera per comma separated view.')
@click.option('--tracklets-per-camera', default=2, show_default=True, type=int)
@click.option('--frames', default=30, show_default=True, type=int)
@click.option('--scale', default=1.0, show_default=True, type=float)
@click.option('--dropout', default=0.0, show_default=True, type=float)
@click.option('--splits', default='0.5,0.25,0.25', show_default=True,
              help='Train, val and test identity fractions.')
@click.option('--seed', default=0, show_default=True, type=int)
@jobs_option
@deterministic_option
def synth(out, identities, views, tracklets_per_camera, frames, scale, dropout, splits, seed,
          n_jobs, deterministic):
    """Render a synthetic label-map dataset."""
    from synthgait.dataset import gen_dataset

    cameras = [CameraSpec(view=view, scale=scale, dropout=dropout, seed=index)
               for index, view in enumerate(split_list(views))]
    records = gen_dataset(out, identities, cameras, tracklets_per_camera, frames, seed,
                          split_list(splits, float), n_jobs=n_jobs_for(n_jobs, deterministic))
    click.echo(f'{len(records)} tracklets written to {out}')


@cli.command()
@root_option
@manifest_option
@click.option('--out', required=True, type=click.Path(file_okay=False))
@click.option('--parts', default='full', show_default=True,
              help='full, partial or a comma separated list of labels 1..6.')
@click.option('--source', default='parsing', show_default=True,
              type=click.Choice([s.value for s in SilhouetteSource]))
@click.option('--connected-components', is_flag=True,
              help='Gate frames by their largest 4-connected component.')
@click.option('--instances', 'instances_dir', type=click.Path(exists=True, file_okay=False),
              help='Directory of external instance masks.')
@click.option('--subtract-torso', 'torso_dir', type=click.Path(exists=True, file_okay=False),
              help='Remove torso masks from existing silhouettes instead of composing.')
@click.option('--min-foreground', default=settings.MIN_FOREGROUND, show_default=True, type=int)
@jobs_option
@deterministic_option
def prep(root, manifest, out, parts, source, connected_components, instances_dir, torso_dir,
         min_foreground, n_jobs, deterministic):
    """Turn label maps into aligned silhouettes."""
    if torso_dir:
        report = workflows.subtract_torso_dataset(root, torso_dir, out, min_foreground, manifest)
    else:
        config = PipelineConfig(min_foreground=min_foreground,
                                connected_components=connected_components,
                                source=SilhouetteSource(source),
                                n_jobs=n_jobs_for(n_jobs, deterministic))
        report = workflows.prepare_silhouettes(root, out, PartSubset.parse(parts), config,
                                               manifest, instances_dir)
    click.echo(f"{report['tracklets']} tracklets prepared, {len(report['skipped'])} skipped")


@cli.command('train')
@root_option
@manifest_option
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Checkpoint path.')
@click.option('--history', type=click.Path(dir_okay=False), help='Loss history CSV.')
@click.option('--model-config', type=click.Path(exists=True, dir_okay=False))
@click.option('--preset', default='desk', show_default=True, type=click.Choice(['desk', 'large']))
@click.option('--iterations', default=200, show_default=True, type=int)
@click.option('--lr', default=settings.LEARNING_RATE, show_default=True, type=float)
@click.option('--p', 'p', default=4, show_default=True, type=int)
@click.option('--k', 'k', default=2, show_default=True, type=int)
@click.option('--c', 'c', default=8, show_default=True, type=int)
@click.option('--flip-prob', default=0.5, show_default=True, type=float)
@click.option('--margin', default=settings.TRIPLET_MARGIN, show_default=True, type=float)
@click.option('--averaging', default='all-triplets', show_default=True,
              type=click.Choice(['all-triplets', 'nonzero-only']))
@click.option('--checkpoint-every', type=int,
              help='Validation cadence; 100 for desk, 1000 for large by default.')
@click.option('--train-fraction', default=0.6, show_default=True, type=float,
              help='Identity share kept for training when the manifest has no val split.')
@click.option('--seed', default=0, show_default=True, type=int)
@jobs_option
@deterministic_option
def train_command(root, manifest, out, history, model_config, preset, iterations, lr, p, k, c,
                  flip_prob, margin, averaging, checkpoint_every, train_fraction, seed, n_jobs,
                  deterministic):
    """Train the embedder with the Batch-All triplet loss."""
    config, preset = resolve_model_config(model_config, preset, seed)
    checkpoint_every = checkpoint_cadence(preset, checkpoint_every)
    result = workflows.train_model(
        root, config, BatchSpec(p, k, c, flip_prob, seed), LossConfig(margin, averaging),
        TrainConfig(iterations, lr, checkpoint_every=checkpoint_every, seed=seed),
        checkpoint=out, history=history, manifest=manifest, train_fraction=train_fraction,
        n_jobs=n_jobs_for(n_jobs, deterministic))
    final = result.history[-1]
    click.echo(f"iterations {final['iteration']}, final loss {final['loss']:.4f}, "
               f"best val mAP {result.best_map:.4f} at {result.best_iteration}")


@cli.command()
@root_option
@manifest_option
@click.option('--checkpoint', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Embedding store.')
@click.option('--split', 'splits', multiple=True, type=click.Choice(['train', 'val', 'test']))
@jobs_option
@deterministic_option
def embed(root, manifest, checkpoint, out, splits, n_jobs, deterministic):
    """Embed every tracklet with all of its frames."""
    entries = workflows.embed_dataset(root, checkpoint, out, splits, manifest,
                                      n_jobs_for(n_jobs, deterministic))
    click.echo(f'{len(entries)} embeddings written to {out}')


@cli.command('eval')
@click.option('--manifest', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--store', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--split', 'splits', multiple=True, type=click.Choice(['train', 'val', 'test']))
@click.option('--per-query', is_flag=True, help='Include per-query APs in the JSON report.')
@click.option('--matches', default=0, show_default=True, type=int,
              help='List the top-5 cross-camera matches of the first N queries.')
@json_option
@json_out_option
def eval_command(manifest, store, splits, per_query, matches, as_json, json_out):
    """Cross-camera mAP and rank-k report."""
    from retrieval.metrics import top_matches
    from retrieval.reports import metrics_json, metrics_text

    gallery, report = workflows.evaluate_store(manifest, store, splits)
    listed = {
        gallery.entries[q].tracklet_id: top_matches(gallery, q)
        for q in range(min(matches, len(gallery)))
    }
    text = emit(metrics_json(report, per_query, listed), json_out)
    click.echo(text if as_json else metrics_text(report))


@cli.command('casia-eval')
@click.option('--manifest', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--store', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--conditions', default='NM,BG,CL', show_default=True)
@click.option('--split', 'splits', multiple=True, default=('test',), show_default=True,
              type=click.Choice(['train', 'val', 'test']))
@json_option
@json_out_option
def casia_eval(manifest, store, conditions, splits, as_json, json_out):
    """CASIA-B cross-view rank-1 report."""
    from retrieval.reports import casia_json, casia_text

    reports = workflows.evaluate_casia(manifest, store, split_list(conditions), splits)
    text = emit(casia_json(reports), json_out)
    click.echo(text if as_json else casia_text(reports))


@cli.command()
@click.option('--first', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--second', required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--out', required=True, type=click.Path(dir_okay=False))
def fuse(first, second, out):
    """Concatenate two l2-normalized embedding stores."""
    entries = workflows.fuse_embedding_stores(first, second, out)
    click.echo(f'{len(entries)} fused embeddings written to {out}')


@cli.command()
@click.option('--features', required=True, type=click.Path(exists=True, dir_okay=False),
              help='CSV with tracklet_id, frame and feature columns.')
@click.option('--out', required=True, type=click.Path(dir_okay=False))
@click.option('--mode', default='frame-mean', show_default=True,
              type=click.Choice(['frame-mean', 'chunk-mean']))
@click.option('--chunk-size', type=int)
def aggregate(features, out, mode, chunk_size):
    """Pool external per-frame features into tracklet vectors."""
    entries = workflows.aggregate_feature_table(features, out, mode, chunk_size)
    click.echo(f'{len(entries)} tracklet vectors written to {out}')


@cli.command()
@click.option('--out', required=True, type=click.Path(file_okay=False))
@click.option('--seeds', default='0,1,2,3,4', show_default=True)
@click.option('--identities', default=16, show_default=True, type=int)
@click.option('--tracklets-per-camera', default=2, show_default=True, type=int)
@click.option('--frames', default=30, show_default=True, type=int)
@click.option('--iterations', default=300, show_default=True, type=int)
@click.option('--lr', default=1e-3, show_default=True, type=float)
@click.option('--p', 'p', default=4, show_default=True, type=int)
@click.option('--k', 'k', default=2, show_default=True, type=int)
@click.option('--c', 'c', default=8, show_default=True, type=int)
@click.option('--data-seed', default=0, show_default=True, type=int)
@jobs_option
@deterministic_option
@json_option
def experiment(out, seeds, identities, tracklets_per_camera, frames, iterations, lr, p, k, c,
               data_seed, n_jobs, deterministic, as_json):
    """Compare full-body and partial silhouettes over several seeds."""
    from .experiments import run_experiment, summarize

    table = run_experiment(
        out, ModelConfig.desk(), BatchSpec(p, k, c), LossConfig(),
        TrainConfig(iterations, lr, checkpoint_every=max(iterations // 3, 1)),
        seeds=split_list(seeds, int), identities=identities,
        tracklets_per_camera=tracklets_per_camera, frames=frames, data_seed=data_seed,
        n_jobs=n_jobs_for(n_jobs, deterministic))
    if as_json:
        click.echo(table.to_json(orient='records'))
    else:
        click.echo(table.to_string(index=False, float_format=lambda v: f'{v:.4f}'))
        click.echo(summarize(table).to_string(float_format=lambda v: f'{v:.4f}'))


def _error_line(payload):
    click.echo(json.dumps(payload, sort_keys=True), err=True)


def run(argv=None):
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        result = cli.main(args=args, prog_name='manage.py', standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        _error_line({'error': 'UsageError', 'message': exc.format_message()})
        return EXIT_USAGE
    except click.exceptions.Abort:
        _error_line({'error': 'Aborted', 'message': 'aborted'})
        return EXIT_USAGE
    except GaitReidError as exc:
        _error_line(exc.as_dict())
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        logger.exception('internal error')
        _error_line({'error': 'InternalError', 'message': f'{type(exc).__name__}: {exc}'})
        return EXIT_INTERNAL
    return result if isinstance(result, int) else EXIT_OK
