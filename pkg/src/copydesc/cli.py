"""Command-line entry point.

Eight subcommands cover the full workflow: ``augment`` builds a synthetic
copy corpus, ``fuse``/``stretch``/``search``/``eval`` run individual
stages over descriptor files, ``schedule`` prints the learning-rate plan,
``pipeline`` chains the retrieval stages end to end, and ``selfcheck``
verifies the install against embedded oracles.

Exit codes: 0 success, 1 selfcheck failure, 2 usage error, 3 data/format
error, 4 numeric precondition violation.  Diagnostics go to stderr as
``level key=value`` lines; results go to files (and a short stdout
summary where useful).
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable

import click

from .augment import (
    AssetLibrary,
    AugmentConfig,
    CorpusPlan,
    emit_detection_labels,
    generate_corpus,
)
from .descriptors import Role, fuse_multiscale
from .exceptions import FormatError, ValidationError
from .io import (
    read_descriptors,
    read_truth,
    read_candidates,
    write_candidates,
    write_descriptors,
)
from .metrics import evaluate
from .pipeline import load_pipeline_config, run_pipeline, selfcheck
from .search import knn_search
from .stretch import StretchConfig, stretch
from .trainmath import ScheduleConfig, schedule_rows

EXIT_OK = 0
EXIT_SELFCHECK = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class _KeyValueFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        return f"{record.levelname.lower()} {record.getMessage()}"


def _setup_logging() -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_KeyValueFormatter())
    root = logging.getLogger("copydesc")
    root.handlers.clear()
    root.addHandler(handler)
    root.setLevel(logging.INFO)


def log(level: str, **fields: Any) -> None:
    """Emit one ``level key=value`` diagnostic line on stderr."""
    parts = " ".join(f"{k}={v}" for k, v in fields.items())
    click.echo(f"{level} {parts}", err=True)


def _mapped_errors(fn: Callable) -> Callable:
    """Translate library exceptions into the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except FormatError as exc:
            log("error", kind="format", detail=f"\"{exc}\"")
            raise SystemExit(EXIT_DATA)
        except ValidationError as exc:
            log("error", kind="validation", detail=f"\"{exc}\"")
            raise SystemExit(EXIT_NUMERIC)
        except OSError as exc:
            log("error", kind="io", detail=f"\"{exc}\"")
            raise SystemExit(EXIT_DATA)

    return wrapper


@click.group()
@click.option("--threads", type=int, default=0, show_default=True,
              help="Worker threads for parallel stages (0 = auto).")
@click.version_option(package_name="copydesc")
@click.pass_context
def main(ctx: click.Context, threads: int) -> None:
    """Copy-detection descriptor pipeline tools."""
    if threads < 0:
        raise click.UsageError("--threads must be >= 0")
    _setup_logging()
    ctx.obj = {"threads": threads}


@main.command()
@click.option("--src", "src_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of source images (png/jpg).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory for copies/, manifest.json, truth.csv, labels/.")
@click.option("--copies", type=int, default=19, show_default=True,
              help="Edited copies per source image.")
@click.option("--size", type=int, default=256, show_default=True,
              help="Output image side length.")
@click.option("--seed", type=int, default=0, show_default=True, help="Master seed.")
@click.option("--stride", type=int, default=1, show_default=True,
              help="Use every stride-th source image.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="TOML file overriding augmentation ranges.")
@click.pass_context
@_mapped_errors
def augment(ctx: click.Context, src_dir: str, out_dir: str, copies: int, size: int,
            seed: int, stride: int, config_path: str | None) -> None:
    """Generate an edited-copy corpus with ground truth and box labels."""
    cfg = AugmentConfig.from_toml(config_path) if config_path else AugmentConfig()
    plan = CorpusPlan(copies_per_source=copies, output_size=size, source_stride=stride)
    result = generate_corpus(
        src_dir, out_dir, plan, seed, config=cfg, threads=ctx.obj["threads"]
    )
    labels = emit_detection_labels(result.records, Path(out_dir) / "labels")
    log("info", stage="augment", copies=len(result.records),
        labels=labels, skipped=len(result.skipped), out=out_dir)
    click.echo(f"wrote {len(result.records)} copies to {result.copies_dir}")


@main.command()
@click.option("--inputs", "inputs", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Per-scale descriptor files (repeatable).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Fused descriptor file.")
@_mapped_errors
def fuse(inputs: tuple[str, ...], out_path: str) -> None:
    """Fuse per-scale descriptor files into one set."""
    fused = fuse_multiscale([read_descriptors(p) for p in inputs])
    write_descriptors(fused, out_path)
    log("info", stage="fuse", scales=len(inputs), count=len(fused), dim=fused.dim)


@main.command("stretch")
@click.option("--queries", "query_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--training", "training_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Stretched query descriptor file.")
@click.option("--alpha", type=float, default=2.5, show_default=True)
@click.option("--n-top", type=int, default=5, show_default=True,
              help="Top inner products averaged into the stretch factor.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Optional JSON report of per-query factors.")
@click.pass_context
@_mapped_errors
def stretch_cmd(ctx: click.Context, query_path: str, training_path: str, out_path: str,
                alpha: float, n_top: int, report_path: str | None) -> None:
    """Rescale query descriptors for cross-query score comparability."""
    queries = read_descriptors(query_path)
    training = read_descriptors(training_path)
    stretched, report = stretch(
        queries, training, StretchConfig(alpha=alpha, n=n_top),
        n_workers=max(1, ctx.obj["threads"]),
    )
    write_descriptors(stretched, out_path)
    if report_path:
        Path(report_path).write_text(
            json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    log("info", stage="stretch", queries=len(stretched), alpha=alpha, n=n_top,
        nonpositive=len(report.nonpositive_ids))


@main.command()
@click.option("--queries", "query_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--references", "reference_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", type=int, default=10, show_default=True, help="Neighbors per query.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Candidate pairs CSV.")
@click.pass_context
@_mapped_errors
def search(ctx: click.Context, query_path: str, reference_path: str, k: int, out_path: str) -> None:
    """Exact k-nearest-neighbor search by Euclidean distance."""
    queries = read_descriptors(query_path)
    references = read_descriptors(reference_path)
    candidates = knn_search(queries, references, k, n_workers=max(1, ctx.obj["threads"]))
    write_candidates(candidates, out_path)
    log("info", stage="search", queries=len(queries), references=len(references), k=k)


@main.command("eval")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ranks", default="1,10", show_default=True,
              help="Comma-separated ranks for Recall@Rank.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Optional JSON report path.")
@_mapped_errors
def eval_cmd(pairs_path: str, truth_path: str, ranks: str, out_path: str | None) -> None:
    """Score candidate pairs against ground truth."""
    try:
        rank_list = [int(r) for r in ranks.split(",") if r.strip()]
    except ValueError:
        raise click.UsageError(f"--ranks must be comma-separated integers, got {ranks!r}")
    candidates = read_candidates(pairs_path)
    truth = read_truth(truth_path)
    report = evaluate(candidates, truth, ranks=rank_list)
    payload = report.as_dict()
    if out_path:
        Path(out_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
    click.echo(f"micro_ap {report.micro_ap:.9g}")
    click.echo(f"recall_at_p90 {report.recall_at_p90:.9g}")
    for rank, value in sorted(report.recall_at_rank.items()):
        click.echo(f"recall_at_rank_{rank} {value:.9g}")


@main.command()
@click.option("--total", type=int, default=25, show_default=True, help="Total epochs.")
@click.option("--warmup", type=int, default=5, show_default=True, help="Warmup epochs.")
@click.option("--plateau-end", type=int, default=10, show_default=True,
              help="Epoch where cosine decay begins.")
@click.option("--base-lr", type=float, default=3.5e-4, show_default=True)
@click.option("--start-ratio", type=float, default=0.01, show_default=True,
              help="Warmup starting fraction of base-lr.")
@click.option("--iters-per-epoch", type=int, default=1, show_default=True,
              help="Rows per epoch in the emitted table.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Optional CSV output; default prints to stdout.")
@_mapped_errors
def schedule(total: int, warmup: int, plateau_end: int, base_lr: float,
             start_ratio: float, iters_per_epoch: int, out_path: str | None) -> None:
    """Print the warmup / plateau / cosine learning-rate plan."""
    cfg = ScheduleConfig(
        warmup_epochs=warmup, plateau_end=plateau_end, total_epochs=total,
        base_lr=base_lr, start_ratio=start_ratio,
    )
    lines = ["iteration,epoch,ratio,lr"]
    for iteration, epoch, ratio, lr in schedule_rows(cfg, iters_per_epoch):
        lines.append(f"{iteration},{epoch:.9g},{ratio:.9g},{lr:.9g}")
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        log("info", stage="schedule", rows=len(lines) - 1, out=out_path)
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Pipeline TOML config.")
@click.option("--queries", "query_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False), help="Per-scale query files.")
@click.option("--references", "reference_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False), help="Per-scale reference files.")
@click.option("--training", "training_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False), help="Per-scale training files.")
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--n-top", type=int, default=None)
@click.option("--k", type=int, default=None)
@click.option("--ranks", default=None, help="Comma-separated ranks, e.g. 1,10.")
@click.option("--stretch", "stretch_mode", type=click.Choice(["on", "off"]), default=None,
              help="Enable or disable descriptor stretching.")
@click.pass_context
@_mapped_errors
def pipeline(ctx: click.Context, config_path: str | None, query_paths: tuple[str, ...],
             reference_paths: tuple[str, ...], training_paths: tuple[str, ...],
             truth_path: str | None, out_dir: str | None, alpha: float | None,
             n_top: int | None, k: int | None, ranks: str | None,
             stretch_mode: str | None) -> None:
    """Run fuse -> stretch -> search -> eval and write a report."""
    overrides: dict[str, Any] = {
        "query_paths": query_paths or None,
        "reference_paths": reference_paths or None,
        "training_paths": training_paths or None,
        "truth_path": truth_path,
        "out_dir": out_dir,
        "alpha": alpha,
        "n_top": n_top,
        "k": k,
        "stretch": None if stretch_mode is None else stretch_mode == "on",
        "threads": ctx.obj["threads"] or None,
    }
    if ranks is not None:
        try:
            overrides["ranks"] = tuple(int(r) for r in ranks.split(",") if r.strip())
        except ValueError:
            raise click.UsageError(f"--ranks must be comma-separated integers, got {ranks!r}")
    cfg = load_pipeline_config(config_path, overrides)
    report = run_pipeline(cfg)
    click.echo(f"micro_ap {report.micro_ap:.9g}")
    click.echo(f"recall_at_p90 {report.recall_at_p90:.9g}")
    for rank, value in sorted(report.recall_at_rank.items()):
        click.echo(f"recall_at_rank_{rank} {value:.9g}")
    log("info", stage="pipeline", out=cfg.out_dir)


@main.command("selfcheck")
@click.pass_context
@_mapped_errors
def selfcheck_cmd(ctx: click.Context) -> None:
    """Verify the install against embedded micro-oracles."""
    results = selfcheck(threads=ctx.obj["threads"])
    failed = [r for r in results if not r.ok]
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        suffix = f" {r.detail}" if r.detail else ""
        click.echo(f"{status} {r.name}{suffix}")
    click.echo(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        raise SystemExit(EXIT_SELFCHECK)


if __name__ == "__main__":
    main()
