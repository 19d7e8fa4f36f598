"""End-to-end orchestration: fuse, stretch, search, evaluate.

``run_pipeline`` wires the library stages together over descriptor files
and writes each artifact under a ``.partial`` suffix, promoting all of
them to their final names only after the whole run succeeds.  A failed
run therefore leaves its partial artifacts clearly marked on disk.

``selfcheck`` re-derives a table of frozen micro-oracle constants
(:data:`SELFCHECK_EXPECTED`) from live code and compares; it is the
install-time smoke test and the fault-injection hook for the test suite.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .descriptors import DescriptorSet, Role, euclidean_distance, fuse_multiscale
from .exceptions import FormatError, ValidationError
from .io import read_descriptors, read_truth, write_candidates, write_descriptors
from .metrics import EvalReport, GroundTruth, evaluate, micro_ap
from .search import CandidateList, MatchCandidate, knn_search
from .stretch import StretchConfig, stretch
from .trainmath import ScheduleConfig, batch_hard_triplet, gem_pool, lr_ratio, soft_cross_entropy

logger = logging.getLogger("copydesc.pipeline")


@dataclass(frozen=True)
class PipelineConfig:
    """Paths and parameters for one end-to-end run.

    Path fields hold one descriptor file per scale; a single-element tuple
    means no multi-scale fusion beyond re-normalization.
    """

    query_paths: tuple[str, ...] = ()
    reference_paths: tuple[str, ...] = ()
    training_paths: tuple[str, ...] = ()
    truth_path: str = ""
    out_dir: str = "pipeline_out"
    alpha: float = 2.5
    n_top: int = 5
    k: int = 10
    ranks: tuple[int, ...] = (1, 10)
    stretch: bool = True
    threads: int = 0

    def __post_init__(self) -> None:
        if self.alpha <= 0.0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha}")
        if self.n_top < 1:
            raise ValidationError(f"n_top must be >= 1, got {self.n_top}")
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.threads < 0:
            raise ValidationError(f"threads must be >= 0, got {self.threads}")
        if not self.ranks or any(r < 1 for r in self.ranks):
            raise ValidationError(f"ranks must be positive, got {self.ranks}")

    def as_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for key in ("query_paths", "reference_paths", "training_paths", "ranks"):
            out[key] = list(out[key])
        return out


_TOML_KEYS = {
    "queries": "query_paths",
    "references": "reference_paths",
    "training": "training_paths",
    "truth": "truth_path",
    "out_dir": "out_dir",
    "alpha": "alpha",
    "n_top": "n_top",
    "k": "k",
    "ranks": "ranks",
    "stretch": "stretch",
    "threads": "threads",
}


def load_pipeline_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> PipelineConfig:
    """Defaults < TOML file < explicit overrides.

    The file may put keys at top level or under a ``[pipeline]`` table;
    `overrides` uses PipelineConfig field names and skips ``None`` values.
    """
    kwargs: dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise FormatError(f"invalid TOML in {path}: {exc}") from exc
        table = data.get("pipeline", data)
        if not isinstance(table, Mapping):
            raise FormatError(f"[pipeline] section in {path} must be a table")
        unknown = sorted(set(table) - set(_TOML_KEYS))
        if unknown:
            raise FormatError(f"unknown pipeline config keys: {', '.join(unknown)}")
        for key, value in table.items():
            kwargs[_TOML_KEYS[key]] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            kwargs[key] = value
    for key in ("query_paths", "reference_paths", "training_paths", "ranks"):
        if key in kwargs:
            value = kwargs[key]
            if isinstance(value, (str, int)):
                value = [value]
            kwargs[key] = tuple(value)
    return PipelineConfig(**kwargs)


def _read_role(paths: Sequence[str], role: Role, label: str) -> list[DescriptorSet]:
    sets = []
    for p in paths:
        dset = read_descriptors(p)
        if dset.role != role:
            raise ValidationError(
                f"{label} file {p} has role {dset.role.name}, expected {role.name}"
            )
        sets.append(dset)
    return sets


def run_pipeline(cfg: PipelineConfig) -> EvalReport:
    """Execute fuse -> stretch -> search -> evaluate and write artifacts.

    Artifacts: ``fused_queries.iscd``, ``fused_references.iscd``,
    ``stretched_queries.iscd`` (when stretching), ``pairs.csv``,
    ``report.json``.  On error every artifact written so far keeps its
    ``.partial`` suffix.
    """
    if not cfg.query_paths or not cfg.reference_paths:
        raise ValidationError("pipeline needs at least one query and one reference file")
    if cfg.stretch and not cfg.training_paths:
        raise ValidationError("stretching requires training descriptor files")
    if not cfg.truth_path:
        raise ValidationError("pipeline needs a truth file for evaluation")
    workers = cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged: list[tuple[Path, Path]] = []

    def artifact(name: str) -> Path:
        partial = out / f"{name}.partial"
        staged.append((partial, out / name))
        return partial

    fused_q = fuse_multiscale(_read_role(cfg.query_paths, Role.QUERY, "query"))
    fused_r = fuse_multiscale(_read_role(cfg.reference_paths, Role.REFERENCE, "reference"))
    logger.info("fused queries=%d references=%d dim=%d", len(fused_q), len(fused_r), fused_q.dim)
    write_descriptors(fused_q, artifact("fused_queries.iscd"))
    write_descriptors(fused_r, artifact("fused_references.iscd"))

    stretch_summary: dict[str, Any] | None = None
    search_queries = fused_q
    if cfg.stretch:
        fused_t = fuse_multiscale(_read_role(cfg.training_paths, Role.TRAINING, "training"))
        search_queries, stretch_report = stretch(
            fused_q, fused_t, StretchConfig(alpha=cfg.alpha, n=cfg.n_top), n_workers=workers
        )
        stretch_summary = stretch_report.as_dict()
        logger.info(
            "stretched queries=%d s_mean=%.6g nonpositive=%d",
            len(search_queries), stretch_report.s_mean, len(stretch_report.nonpositive_ids),
        )
        write_descriptors(search_queries, artifact("stretched_queries.iscd"))

    candidates = knn_search(search_queries, fused_r, cfg.k, n_workers=workers)
    write_candidates(candidates, artifact("pairs.csv"))

    truth = read_truth(cfg.truth_path)
    report = evaluate(candidates, truth, ranks=cfg.ranks)
    logger.info("evaluated micro_ap=%.6g recall_at_p90=%.6g", report.micro_ap, report.recall_at_p90)

    payload = {
        "config": cfg.as_dict(),
        "counts": {
            "queries": len(fused_q),
            "references": len(fused_r),
            "truth_pairs": len(truth),
        },
        "metrics": report.as_dict(),
        "stretch": stretch_summary,
    }
    artifact("report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    for partial, final in staged:
        os.replace(partial, final)
    return report


# Frozen expectations for the embedded micro-oracles.  Values are exact or
# correct to well under the comparison tolerance; the test suite injects
# faults here to prove a mismatch is reported.
SELFCHECK_EXPECTED: dict[str, float] = {
    "distance_345": 5.0,
    "micro_ap_small": 5.0 / 6.0,
    "gem_p1_mean": 2.0,
    "gem_p2": 2.1602468994692867,
    "lr_warmup_start": 0.01,
    "lr_plateau": 1.0,
    "lr_cosine_mid": 0.5,
    "stretch_factor": 0.5,
    "triplet_small": 1.2999999999999998,
    "soft_ce_uniform": 0.6931471805599453,
    # sqrt(1/2) after float32 storage, the on-disk descriptor precision
    "fusion_component": 0.7071067690849304,
}

_SELFCHECK_TOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _numeric_checks() -> list[CheckResult]:
    actual: dict[str, float] = {}
    actual["distance_345"] = euclidean_distance([3.0, 4.0], [0.0, 0.0])

    cands = CandidateList(
        entries=(
            MatchCandidate("q1", "r1", 0.1),
            MatchCandidate("q1", "r2", 0.5),
            MatchCandidate("q2", "r1", 0.3),
            MatchCandidate("q2", "r2", 0.4),
        ),
        k=2,
    )
    truth = GroundTruth.from_pairs([("q1", "r1"), ("q2", "r2")])
    actual["micro_ap_small"] = micro_ap(cands, truth)

    acts = np.array([[1.0, 2.0, 3.0]])
    actual["gem_p1_mean"] = float(gem_pool(acts, p=1.0)[0])
    actual["gem_p2"] = float(gem_pool(acts, p=2.0)[0])

    sched = ScheduleConfig()
    actual["lr_warmup_start"] = lr_ratio(0.0, sched)
    actual["lr_plateau"] = lr_ratio(7.0, sched)
    actual["lr_cosine_mid"] = lr_ratio(17.5, sched)

    queries = DescriptorSet(Role.QUERY, ("q",), np.array([[1.0, 0.0]], dtype=np.float32))
    training = DescriptorSet(
        Role.TRAINING, ("t1", "t2"), np.eye(2, dtype=np.float32)
    )
    _, rep = stretch(queries, training, StretchConfig(alpha=2.5, n=2))
    actual["stretch_factor"] = rep.s_values[0]

    feats = np.array([[0.0, 0.0], [0.0, 2.0], [1.0, 0.0], [1.0, 2.0]])
    actual["triplet_small"] = batch_hard_triplet(feats, [0, 0, 1, 1], margin=0.3)

    actual["soft_ce_uniform"] = soft_cross_entropy([0.0, 0.0], [0.5, 0.5])

    one = np.array([[1.0, 0.0]], dtype=np.float32)
    other = np.array([[0.0, 1.0]], dtype=np.float32)
    fused = fuse_multiscale([
        DescriptorSet(Role.QUERY, ("a",), one),
        DescriptorSet(Role.QUERY, ("a",), other),
    ])
    actual["fusion_component"] = float(fused.vectors[0, 0])

    results = []
    for name, expected in SELFCHECK_EXPECTED.items():
        got = actual.get(name)
        if got is None:
            results.append(CheckResult(name, False, "no oracle computed"))
            continue
        ok = abs(got - expected) <= _SELFCHECK_TOL
        detail = "" if ok else f"expected={expected!r} got={got!r}"
        results.append(CheckResult(name, ok, detail))
    return results


def _thread_determinism_check(threads: int) -> CheckResult:
    rng = np.random.Generator(np.random.PCG64(20240717))
    q = rng.standard_normal((12, 16)).astype(np.float32)
    r = rng.standard_normal((40, 16)).astype(np.float32)
    queries = DescriptorSet(Role.QUERY, tuple(f"q{i:02d}" for i in range(12)), q)
    references = DescriptorSet(Role.REFERENCE, tuple(f"r{i:02d}" for i in range(40)), r)
    serial = knn_search(queries, references, k=5, n_workers=1)
    other = knn_search(queries, references, k=5, n_workers=max(2, threads))
    ok = serial.entries == other.entries
    return CheckResult("search_thread_identity", ok, "" if ok else "parallel run diverged")


def _format_roundtrip_check() -> CheckResult:
    rng = np.random.Generator(np.random.PCG64(7))
    vecs = rng.standard_normal((5, 8)).astype(np.float32)
    dset = DescriptorSet(Role.REFERENCE, tuple(f"r{i}" for i in range(5)), vecs)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "check.iscd"
        write_descriptors(dset, path)
        back = read_descriptors(path)
    ok = back == dset
    return CheckResult("format_roundtrip", ok, "" if ok else "round-trip mismatch")


def selfcheck(threads: int = 0) -> list[CheckResult]:
    """Run every embedded micro-oracle; all-pass means a healthy install."""
    workers = threads if threads > 0 else (os.cpu_count() or 1)
    results = _numeric_checks()
    results.append(_format_roundtrip_check())
    results.append(_thread_determinism_check(workers))
    return results


__all__ = [
    "CheckResult",
    "PipelineConfig",
    "SELFCHECK_EXPECTED",
    "load_pipeline_config",
    "run_pipeline",
    "selfcheck",
]
