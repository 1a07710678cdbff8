"""
metaimpute exposes a command-line interface that prepares datasets,
meta-trains the imputation model, and evaluates it against the baselines.
"""

import functools
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import pydantic
from click import Context, HelpFormatter
from typing_extensions import ParamSpec, TypeVar

from metaimpute.data.episodes import DatasetSplit, make_meta_test_suite, partition_and_normalize
from metaimpute.data.fetch import DATASETS, fetch_dataset
from metaimpute.data.formats import FORMATS, load_triplets
from metaimpute.data.manifest import read_manifest, write_manifest
from metaimpute.data.splits import MANIFEST_FILE, load_split, save_split
from metaimpute.data.synthetic import generate_task_family, make_synthetic_split
from metaimpute.exceptions import (
    IncompatibleArtifactsError,
    MetaImputeError,
    TrainingDivergedError,
)
from metaimpute.models import MFConfig, TrainConfig
from metaimpute.training.checkpoint import (
    Checkpoint,
    TrainingLog,
    load_checkpoint,
    save_checkpoint,
)
from metaimpute.training.evaluate import METHODS, Report, ReportRow, evaluate_methods, summary_table
from metaimpute.training.metatrain import meta_train
from metaimpute.utils import STREAM_SUITE, resolve_seed, rng_stream

try:
    import click
except ImportError:  # pragma: no cover
    print(
        "You are missing the 'click' library, which means you did not install\n"
        "the optional dependencies required for the metaimpute command line.\n"
        "Try again after running:\n\n"
        "   % pip install 'metaimpute[cli]'",
        "\n",
        file=sys.stderr,
    )
    raise


T = TypeVar("T")
P = ParamSpec("P")

logger = logging.getLogger(__name__)

SIZE_SWEEP = (10, 20, 30, 40, 50)
INNER_STEPS_SWEEP = (0, 1, 2, 5, 10, 20)


@dataclass
class CliContext:
    verbose: bool = False
    click_context: Optional["click.Context"] = None


def needs_context(func: Callable[P, T]) -> Callable[P, T]:
    @functools.wraps(func)
    @click.pass_context
    def _wrapped(click_ctx: click.Context, /, *args: P.args, **kwargs: P.kwargs) -> T:
        obj = click_ctx.ensure_object(CliContext)
        obj.click_context = click_ctx
        try:
            return click_ctx.invoke(func, obj, *args, **kwargs)
        except pydantic.ValidationError as exc:
            raise click.UsageError(_describe_validation(exc)) from exc
        except MetaImputeError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc

    return _wrapped


def _describe_validation(exc: pydantic.ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in error['loc']) or 'config'}: {error['msg']}"
        for error in exc.errors()
    )


class ShortcutGroup(click.Group):
    """
    A command group that will accept partial command names and complete them.
    """

    def get_command(self, ctx: click.Context, cmd_name: str) -> Optional[click.Command]:
        if exact := super().get_command(ctx, cmd_name):
            return exact
        # If exactly one subcommand starts with the given name, use that.
        existing = [cmd for cmd in self.list_commands(ctx) if cmd.startswith(cmd_name)]
        if len(existing) == 1:
            return super().get_command(ctx, existing[0])
        return None

    def format_commands(self, ctx: Context, formatter: HelpFormatter) -> None:
        from gettext import gettext as _

        rows = [
            (name, (command.short_help or command.help or "").strip())
            for name, command in CLI_COMMANDS.items()
        ]
        col_max = max(len(row[0]) for row in rows)

        with formatter.section(_("Commands")):
            formatter.write_dl(rows, col_max=col_max)


def _parse_assignments(pairs: Sequence[str]) -> Dict[str, str]:
    data: Dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise click.UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        data[key.strip()] = value.strip()
    return data


def _fractions(value: str) -> Tuple[float, float, float]:
    try:
        parts = tuple(float(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected three comma-separated numbers, got {value!r}")
    if len(parts) != 3:
        raise click.BadParameter(f"expected three comma-separated numbers, got {value!r}")
    return parts  # type: ignore[return-value]


# fmt: off
@click.group(cls=ShortcutGroup)
@click.option("-v", "--verbose", is_flag=True, help="Print debug logs.")
@needs_context
# fmt: on
def cli(ctx: CliContext, verbose: bool = False) -> None:
    ctx.verbose = verbose
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@cli.command()
@needs_context
@click.argument("name", type=click.Choice(sorted(DATASETS)))
@click.option("-d", "--dir", "directory", default="data", show_default=True, type=click.Path(file_okay=False), help="Download directory.")
@click.option("--force", is_flag=True, help="Download again even if present.")
def fetch(ctx: CliContext, name: str, directory: str, force: bool = False) -> None:
    """
    Download a MovieLens dataset.
    """
    path, fmt = fetch_dataset(name, directory, force=force)
    click.echo(f"{path}\t{fmt}")


def _write_prepared(
    output: Path,
    split: DatasetSplit,
    seed: int,
    fractions: Tuple[float, float, float],
    episodes: int,
    rows: int,
    cols: int,
    holdout: float,
) -> None:
    suite = make_meta_test_suite(
        split.test_blocks,
        count=episodes,
        n_rows=rows,
        n_cols=cols,
        holdout=holdout,
        rng=rng_stream(seed, STREAM_SUITE),
    )
    save_split(output, split, split.info(seed=seed, fractions=fractions))
    write_manifest(output / MANIFEST_FILE, suite, split.norm_mean, split.norm_std)
    mean_train = sum(ep.n_train for ep in suite) / len(suite)
    click.echo(f"episodes\t{len(suite)}\t{rows}x{cols}\tmean observed {mean_train:.1f}")


@cli.command()
@needs_context
# fmt: off
@click.option("-i", "--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Ratings file.")
@click.option("-f", "--format", "fmt", default="movielens_tab", show_default=True, type=click.Choice(sorted(FORMATS)), help="Ratings file format.")
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False), help="Split directory to write.")
@click.option("--name", default="", help="Dataset name (defaults to the output directory name).")
@click.option("--seed", type=click.IntRange(min=0), help="Random seed (MMF_SEED overrides).")
@click.option("--fractions", default="0.7,0.1,0.2", show_default=True, help="User/item shares of train,valid,test.")
@click.option("--episodes", default=10, show_default=True, type=click.IntRange(min=1), help="Evaluation episodes in the manifest.")
@click.option("--rows", default=30, show_default=True, type=click.IntRange(min=1), help="Rows per evaluation episode.")
@click.option("--cols", default=30, show_default=True, type=click.IntRange(min=1), help="Columns per evaluation episode.")
@click.option("--holdout", default=0.5, show_default=True, type=click.FloatRange(0, 1, min_open=True, max_open=True), help="Share of observed entries held out.")
# fmt: on
def prepare(
    ctx: CliContext,
    input_path: str,
    fmt: str,
    output: str,
    name: str,
    seed: Optional[int],
    fractions: str,
    episodes: int,
    rows: int,
    cols: int,
    holdout: float,
) -> None:
    """
    Partition a ratings file and write the evaluation manifest.
    """
    seed = resolve_seed(seed)
    shares = _fractions(fractions)
    triplets = load_triplets(input_path, fmt)  # type: ignore[arg-type]
    users = {user for user, _, _ in triplets}
    items = {item for _, item, _ in triplets}
    click.echo(f"ratings\t{len(triplets)}\tusers\t{len(users)}\titems\t{len(items)}")

    out = Path(output)
    split = partition_and_normalize(triplets, shares, seed=seed, name=name or out.name)
    for role in ("train", "valid", "test"):
        block = split.blocks(role)[0]
        click.echo(f"{role}\t{block.n_rows}\t{block.n_cols}\t{block.n_observed}")
    _write_prepared(out, split, seed, shares, episodes, rows, cols, holdout)


@cli.command()
@needs_context
# fmt: off
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False), help="Split directory to write.")
@click.option("--tasks", default=200, show_default=True, type=click.IntRange(min=3), help="Number of matrices.")
@click.option("--rows", default=30, show_default=True, type=click.IntRange(min=1), help="Rows per matrix.")
@click.option("--cols", default=30, show_default=True, type=click.IntRange(min=1), help="Columns per matrix.")
@click.option("--rank", default=3, show_default=True, type=click.IntRange(min=1), help="Rank of the generating factors.")
@click.option("--noise", default=0.1, show_default=True, type=click.FloatRange(min=0), help="Noise standard deviation.")
@click.option("--observed", default=0.3, show_default=True, type=click.FloatRange(0, 1, min_open=True), help="Share of observed entries.")
@click.option("--seed", type=click.IntRange(min=0), help="Random seed (MMF_SEED overrides).")
@click.option("--fractions", default="0.7,0.1,0.2", show_default=True, help="Task shares of train,valid,test.")
@click.option("--episodes", default=10, show_default=True, type=click.IntRange(min=1), help="Evaluation episodes in the manifest.")
@click.option("--holdout", default=0.5, show_default=True, type=click.FloatRange(0, 1, min_open=True, max_open=True), help="Share of observed entries held out.")
# fmt: on
def synth(
    ctx: CliContext,
    output: str,
    tasks: int,
    rows: int,
    cols: int,
    rank: int,
    noise: float,
    observed: float,
    seed: Optional[int],
    fractions: str,
    episodes: int,
    holdout: float,
) -> None:
    """
    Write a split of synthetic low-rank matrices.
    """
    seed = resolve_seed(seed)
    shares = _fractions(fractions)
    family = generate_task_family(tasks, rows, cols, rank=rank, noise=noise, observed=observed, seed=seed)
    split = make_synthetic_split(family, shares, name=Path(output).name)
    click.echo(
        f"tasks\t{len(split.train_blocks)}\t{len(split.valid_blocks)}\t{len(split.test_blocks)}"
    )
    _write_prepared(Path(output), split, seed, shares, episodes, rows, cols, holdout)


#: ``train`` options that map onto :class:`TrainConfig` fields.
TRAIN_FLAGS = {
    "epochs": "epochs",
    "batches_per_epoch": "batches_per_epoch",
    "batch_size": "batch_size",
    "lr": "outer_lr",
    "rows": "n_rows",
    "cols": "n_cols",
    "train_ratio": "train_ratio",
    "channels": "channels",
    "layers": "exml_layers",
    "hidden": "hidden_units",
    "rank": "rank",
    "eta": "eta",
    "inner_steps": "inner_steps",
    "dropout": "dropout",
    "patience": "patience",
    "valid_episodes": "valid_episodes",
    "vary_size": "vary_size",
    "min_size": "min_size",
    "workers": "workers",
}


def resolve_train_config(
    config_path: Optional[str],
    assignments: Sequence[str],
    flags: Dict[str, Any],
    seed: Optional[int],
) -> TrainConfig:
    """
    Defaults, then the config file, then ``--set`` pairs, then explicit flags.
    """
    base = (
        TrainConfig.from_text(Path(config_path).read_text(encoding="utf-8"), path=config_path)
        if config_path
        else TrainConfig()
    )
    data: Dict[str, Any] = base.model_dump()
    for key, value in _parse_assignments(assignments).items():
        data[key.replace("-", "_")] = value
    for flag, value in flags.items():
        if value is not None:
            data[TRAIN_FLAGS[flag]] = value
    data["seed"] = resolve_seed(seed if seed is not None else data["seed"])
    return TrainConfig.model_validate(data)


@cli.command()
@needs_context
# fmt: off
@click.option("-s", "--split", "splits", required=True, multiple=True, type=click.Path(exists=True, file_okay=False), help="Prepared split directory (repeatable).")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False), help="Checkpoint file to write.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), help="Epoch log (default: OUTPUT.log.tsv).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="key=value training config file.")
@click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE", help="Set any training config field.")
@click.option("--seed", type=click.IntRange(min=0), help="Random seed (MMF_SEED overrides).")
@click.option("--epochs", type=click.IntRange(min=0))
@click.option("--batches-per-epoch", type=click.IntRange(min=1))
@click.option("--batch-size", type=click.IntRange(min=1))
@click.option("--lr", type=float, help="Outer (Adam) learning rate.")
@click.option("--rows", type=click.IntRange(min=1), help="Episode rows N.")
@click.option("--cols", type=click.IntRange(min=1), help="Episode columns M.")
@click.option("--train-ratio", type=float, help="Share of observed entries used for adaptation.")
@click.option("--channels", type=click.IntRange(min=1))
@click.option("--layers", type=click.IntRange(min=1), help="Exchangeable layers.")
@click.option("--hidden", type=click.IntRange(min=1), help="Hidden units of the prior networks.")
@click.option("--rank", type=click.IntRange(min=1), help="Rank K of the factors.")
@click.option("--eta", type=float, help="Inner learning rate.")
@click.option("--inner-steps", type=click.IntRange(min=0), help="Inner gradient steps T.")
@click.option("--dropout", type=float)
@click.option("--patience", type=click.IntRange(min=1))
@click.option("--valid-episodes", type=click.IntRange(min=1))
@click.option("--vary-size/--fixed-size", default=None, help="Draw episode sizes per batch.")
@click.option("--min-size", type=click.IntRange(min=1))
@click.option("--workers", type=click.IntRange(min=1), help="Threads per batch.")
# fmt: on
def train(
    ctx: CliContext,
    splits: Sequence[str],
    output: str,
    log_path: Optional[str],
    config_path: Optional[str],
    assignments: Sequence[str],
    seed: Optional[int],
    **flags: Any,
) -> None:
    """
    Meta-train on one or more prepared splits.
    """
    cfg = resolve_train_config(config_path, assignments, flags, seed)
    loaded = [load_split(directory)[0] for directory in splits]
    log = TrainingLog()
    log_file = Path(log_path) if log_path else Path(output + ".log.tsv")

    try:
        ckpt = meta_train(loaded, cfg, log=log)
    except TrainingDivergedError as exc:
        log.write(log_file)
        if isinstance(exc.checkpoint, Checkpoint):
            path = save_checkpoint(exc.checkpoint, output + ".last")
            click.echo(f"last finite parameters written to {path}", err=True)
        raise

    save_checkpoint(ckpt, output)
    log.write(log_file)
    click.echo(f"best valid loss\t{ckpt.best_valid_loss:.6f}\tepochs\t{ckpt.epochs_run}\tseconds\t{ckpt.train_seconds:.1f}")


def _check_compatible(ckpt: Checkpoint, norm_mean: float, norm_std: float) -> None:
    if not (
        math.isclose(ckpt.norm_mean, norm_mean, rel_tol=1e-12, abs_tol=1e-12)
        and math.isclose(ckpt.norm_std, norm_std, rel_tol=1e-12, abs_tol=1e-12)
    ):
        raise IncompatibleArtifactsError(
            f"checkpoint was trained with mean {ckpt.norm_mean:g} / std {ckpt.norm_std:g}, "
            f"episodes use mean {norm_mean:g} / std {norm_std:g}; pass --cross-dataset to allow"
        )


@cli.command("eval")
@needs_context
# fmt: off
@click.option("-c", "--checkpoint", "checkpoint_path", type=click.Path(exists=True, dir_okay=False), help="Meta-trained checkpoint.")
@click.option("-s", "--split", "split_dir", type=click.Path(exists=True, file_okay=False), help="Prepared split directory.")
@click.option("-m", "--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False), help="Episode manifest (default: SPLIT/manifest.txt).")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Report file to write (default: print).")
@click.option("--method", "methods", multiple=True, type=click.Choice(METHODS), help="Methods to score (default: all available).")
@click.option("--sweep", type=click.Choice(["size", "inner-steps"]), help="Also sweep episode size or inner steps.")
@click.option("--dataset", default="", help="Dataset label for the report.")
@click.option("--cross-dataset", is_flag=True, help="Allow a checkpoint trained on another dataset.")
@click.option("--workers", default=1, show_default=True, type=click.IntRange(min=1), help="Threads across episodes.")
@click.option("--seed", type=click.IntRange(min=0), help="Seed for regenerated sweep episodes (MMF_SEED overrides).")
@click.option("--mf-rank", type=click.IntRange(min=1), help="Rank of the MF baseline.")
@click.option("--mf-iterations", type=click.IntRange(min=1), help="Iterations per MF fit.")
# fmt: on
def evaluate_command(
    ctx: CliContext,
    checkpoint_path: Optional[str],
    split_dir: Optional[str],
    manifest_path: Optional[str],
    output: Optional[str],
    methods: Sequence[str],
    sweep: Optional[str],
    dataset: str,
    cross_dataset: bool,
    workers: int,
    seed: Optional[int],
    mf_rank: Optional[int],
    mf_iterations: Optional[int],
) -> None:
    """
    Score the model and the baselines on a manifest.
    """
    if not manifest_path:
        if not split_dir:
            raise click.UsageError("--split or --manifest required")
        manifest_path = str(Path(split_dir) / MANIFEST_FILE)
    if sweep == "size" and not split_dir:
        raise click.UsageError("--sweep size needs --split")
    if sweep == "inner-steps" and not checkpoint_path:
        raise click.UsageError("--sweep inner-steps needs --checkpoint")

    manifest = read_manifest(manifest_path)
    ckpt = load_checkpoint(checkpoint_path) if checkpoint_path else None
    if ckpt is not None and not cross_dataset:
        _check_compatible(ckpt, manifest.norm_mean, manifest.norm_std)

    methods = list(methods) or [m for m in METHODS if ckpt is not None or m in ("mean", "mf")]
    mf_changes = {"rank": mf_rank, "max_iterations": mf_iterations}
    mf_config = MFConfig().replace(**{k: v for k, v in mf_changes.items() if v is not None})
    dataset = dataset or (Path(split_dir).name if split_dir else Path(manifest_path).parent.name)
    report = Report()
    report.extend(
        evaluate_methods(ckpt, manifest.episodes, methods, mf_config, dataset=dataset, setting="default", workers=workers)
    )

    if sweep == "inner-steps":
        assert ckpt is not None
        for steps in INNER_STEPS_SWEEP:
            adapt = ckpt.config.adapt_settings().replace(inner_steps=steps)
            report.extend(
                evaluate_methods(ckpt, manifest.episodes, ["ours"], adapt=adapt, dataset=dataset, setting=f"inner-steps={steps}", workers=workers)
            )
    elif sweep == "size":
        assert split_dir is not None
        split, info = load_split(split_dir)
        sweep_seed = resolve_seed(seed if seed is not None else info.seed)
        largest = min(min(block.shape) for block in split.test_blocks)
        for size in SIZE_SWEEP:
            if size > largest:
                logger.warning("Skipping size=%d: smallest test block is %d wide", size, largest)
                continue
            suite = make_meta_test_suite(
                split.test_blocks,
                count=len(manifest.episodes),
                n_rows=size,
                n_cols=size,
                rng=rng_stream(sweep_seed, STREAM_SUITE, size),
            )
            report.extend(
                evaluate_methods(ckpt, suite, methods, mf_config, dataset=dataset, setting=f"size={size}", workers=workers)
            )

    if output:
        report.write(output)
        click.echo(summary_table(report.rows), nl=False)
    else:
        click.echo(report.to_text(), nl=False)


@cli.command()
@needs_context
@click.argument("paths", metavar="REPORT...", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-p", "--precision", default=3, show_default=True, type=click.IntRange(min=0))
def report(ctx: CliContext, paths: Sequence[str], precision: int) -> None:
    """
    Tabulate mean ± standard error from report files.
    """
    rows: List[ReportRow] = []
    for path in paths:
        rows.extend(Report.read(path).rows)
    click.echo(summary_table(rows, precision=precision), nl=False)


def _gather_commands(
    command: Union[click.Command, click.Group] = cli,
    prefix: str = "",
) -> Iterator[Tuple[str, Union[click.Command, click.Group]]]:
    """
    Enumerate through all commands, yielding a 2-tuple of a human-readable
    command line and the associated function.
    """
    if command.name != cli.name:
        prefix = f"{prefix} {command.name}".strip()

    if not isinstance(command, click.Group):
        yield (prefix, command)
        return

    for subcommand in command.commands.values():
        yield from _gather_commands(subcommand, prefix=prefix)


CLI_COMMANDS = dict(_gather_commands())


if __name__ == "__main__":
    cli()  # pragma: no cover
