"""k-fold cross-boosting: per-fold surrogate, generation, filtering, union.

Iteration ``i`` trains a surrogate on the ``k - 2`` training folds of the fold
plan (checkpoint selection on the validation fold) and uses it to filter
candidates generated for the examples of fold ``i``, so no example is judged
by a surrogate that saw it. ``mode="mono"`` is the ablation that trains one
surrogate on everything.
"""

from __future__ import annotations

import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

from .backends import AugmentationCandidate, TransformConfig, generate
from .corpus import ConfigError, Dataset, from_records, make_fold_plan
from .filters import FilterConfig, run_stages, score_candidates
from .surrogate import (
    CooccurrenceNeighbors,
    ScorerError,
    SurrogateTrainConfig,
    connect_external_scorer,
    normalize_tokens,
    train_lightweight,
)

log = logging.getLogger(__name__)

COUNT_KEYS = ("removed_by_label", "removed_by_perplexity", "removed_by_rank",
              "removed_by_threshold", "removed_by_truncation")
_STAGE_TO_KEY = {"label": "removed_by_label", "perplexity": "removed_by_perplexity",
                 "confidence_rank": "removed_by_rank", "confidence_threshold": "removed_by_threshold",
                 "truncate": "removed_by_truncation"}


class BoostError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoostRunConfig:
    k: int = 5
    seed: int = 0
    transform: TransformConfig = field(default_factory=TransformConfig)
    filters: FilterConfig = field(default_factory=FilterConfig)
    surrogate: SurrogateTrainConfig = field(default_factory=SurrogateTrainConfig)
    mode: str = "cross"
    pool_multiplier: int = 2
    include_originals: bool = True

    def __post_init__(self):
        if self.mode not in ("cross", "mono"):
            raise ConfigError(f"mode must be cross or mono, got {self.mode!r}")
        if self.mode == "cross" and self.k <= 3:
            raise ConfigError(f"k must be > 3 for cross-boosting, got {self.k}")
        if self.pool_multiplier < 1:
            raise ConfigError(f"pool_multiplier must be >= 1, got {self.pool_multiplier}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filters"]["enabled"] = sorted(self.filters.enabled)
        d["transform"]["eda_op_weights"] = list(self.transform.eda_op_weights)
        return d


@dataclass(frozen=True)
class LightweightScorerFactory:
    config: SurrogateTrainConfig = field(default_factory=SurrogateTrainConfig)

    def __call__(self, iteration: int, train: Dataset, valid: Dataset, seed: int, train_ids: Sequence[int]):
        return train_lightweight(train, valid, self.config, seed, iteration, train_ids)


@dataclass(frozen=True)
class ExternalScorerFactory:
    """Connects to an external scorer; ``{fold}`` in the spec is replaced by the iteration index."""

    spec: str
    timeout: float = 30.0

    def __call__(self, iteration: int, train: Dataset, valid: Dataset, seed: int, train_ids: Sequence[int]):
        model = connect_external_scorer(self.spec.replace("{fold}", str(iteration)), train.labels, self.timeout)
        model.provenance.update({"fold_iteration": iteration, "train_ids": list(train_ids)})
        return model


@dataclass(frozen=True)
class ProvenanceRecord:
    origin_id: int
    draw_index: int
    text: str
    backend: str
    fold_iteration: int
    perplexity: float
    confidence: tuple[float, ...]
    predicted_label: str
    survived: bool


@dataclass
class AugmentedDataset:
    dataset: Dataset
    provenance: list[ProvenanceRecord]
    report: dict
    train_ids: dict[int, frozenset]

    @property
    def survivors(self) -> list[ProvenanceRecord]:
        return [p for p in self.provenance if p.survived]


@dataclass
class _IterationResult:
    iteration: int
    survivors: list[AugmentationCandidate]
    records: list[ProvenanceRecord]
    per_example: list[dict]
    summary: dict
    train_ids: list[int]


def _iteration_roles(dataset: Dataset, config: BoostRunConfig):
    """Yield (iteration, train_ids, valid_ids, boost_ids, extra report fields)."""
    if config.mode == "mono":
        ids = list(range(len(dataset)))
        return None, [(0, ids, [], ids, {"boost_fold": None, "valid_fold": None, "train_folds": None})]
    plan = make_fold_plan(dataset, config.k, config.seed)
    roles = []
    for i, it in enumerate(plan.iterations):
        roles.append((i, plan.train_ids(i), plan.fold_ids(it.valid_fold), plan.fold_ids(it.boost_fold),
                      {"boost_fold": it.boost_fold, "valid_fold": it.valid_fold,
                       "train_folds": list(it.train_folds)}))
    return plan, roles


def _run_iteration(dataset: Dataset, config: BoostRunConfig, factory, role) -> _IterationResult:
    i, train_ids, valid_ids, boost_ids, fold_info = role
    train = dataset.subset(train_ids)
    present = {ex.label for ex in train}
    for lab in dataset.labels:
        if lab not in present:
            raise BoostError(f"iteration {i}: training folds {fold_info['train_folds']} contain no example of label {lab!r}")
    valid = dataset.subset(valid_ids)
    fc = config.filters
    try:
        model = factory(i, train, valid, config.seed, train_ids)
    except ScorerError as e:
        raise BoostError(f"iteration {i}: could not build surrogate: {e}") from e
    try:
        proposer = None
        if config.transform.strategy == "embed_sub":
            proposer = model if hasattr(model, "propose") else CooccurrenceNeighbors().fit(
                [normalize_tokens(t) for t in train.texts])
        median = None
        if fc.perplexity_mode == "relative" and "perplexity" in fc.enabled:
            median = statistics.median(model.score(ex.text, ex.aspect).perplexity for ex in train)
        survivors, records, per_example = [], [], []
        keep = fc.keep_per_example
        for oid in sorted(boost_ids):
            ex = dataset.examples[oid]
            cands = generate(ex, config.pool_multiplier * keep, config.transform, proposer, config.seed)
            cands = [replace(c, fold_iteration=i) for c in cands]
            scored = score_candidates(cands, model)
            kept, removed = run_stages(scored, ex.label, fc, median)
            kept_draws = {c.draw_index for c in kept}
            survivors.extend(kept)
            records.extend(
                ProvenanceRecord(c.origin_id, c.draw_index, c.text, c.backend, i, c.perplexity,
                                 c.confidence, c.predicted_label, c.draw_index in kept_draws)
                for c in scored
            )
            row = {"origin_id": oid, "iteration": i, "generated": len(cands)}
            row.update({_STAGE_TO_KEY[k]: v for k, v in removed.items()})
            row["survived"] = len(kept)
            per_example.append(row)
    except ScorerError as e:
        raise BoostError(f"iteration {i}: scorer failure: {e}") from e
    finally:
        model.close()

    summary = {"iteration": i, **fold_info, "n_train": len(train_ids), "n_valid": len(valid_ids),
               "n_boost": len(boost_ids), "generated": sum(r["generated"] for r in per_example)}
    for key in COUNT_KEYS:
        summary[key] = sum(r[key] for r in per_example)
    summary["survived"] = sum(r["survived"] for r in per_example)
    summary["perplexity_median"] = median
    prov = dict(getattr(model, "provenance", {}))
    prov.pop("train_ids", None)
    summary["surrogate"] = prov
    summary["valid_metric"] = prov.get("valid_metric")
    return _IterationResult(i, survivors, records, per_example, summary, list(train_ids))


def _call(args):
    return _run_iteration(*args)


def boost_augment(
    dataset: Dataset,
    config: BoostRunConfig,
    scorer_factory: Callable | None = None,
    jobs: int = 1,
) -> AugmentedDataset:
    """Run the augment-then-filter pipeline; output is canonical and independent of ``jobs``."""
    factory = scorer_factory or LightweightScorerFactory(config.surrogate)
    warnings = []
    if config.mode == "mono":
        msg = f"mono mode trains a single surrogate on the full dataset; k={config.k} is ignored"
        log.warning(msg)
        warnings.append(msg)
    if "perplexity" in config.filters.enabled and config.filters.perplexity_mode == "absolute" \
            and isinstance(factory, LightweightScorerFactory):
        msg = ("absolute perplexity limit %g is calibrated for transformer scorers; "
               "the lightweight n-gram scorer usually needs perplexity_mode=relative" % config.filters.perplexity_limit)
        log.warning(msg)
        warnings.append(msg)
    plan, roles = _iteration_roles(dataset, config)
    tasks = [(dataset, config, factory, role) for role in roles]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_call, tasks))
    else:
        results = [_call(t) for t in tasks]
    return _assemble(dataset, config, plan, results, warnings)


def mono_augment(dataset: Dataset, config: BoostRunConfig, scorer_factory: Callable | None = None,
                 jobs: int = 1) -> AugmentedDataset:
    return boost_augment(dataset, replace(config, mode="mono"), scorer_factory, jobs)


def _assemble(dataset, config, plan, results, warnings) -> AugmentedDataset:
    survivors = [c for r in results for c in r.survivors]
    survivors.sort(key=lambda c: (c.origin_id, c.draw_index))
    rows = []
    by_origin: dict[int, list[AugmentationCandidate]] = {}
    for c in survivors:
        by_origin.setdefault(c.origin_id, []).append(c)
    for ex in dataset.examples:
        if config.include_originals:
            rows.append((ex.text, ex.label, ex.aspect, ex.aspect_span))
        for c in by_origin.get(ex.id, []):
            rows.append((c.text, ex.label, c.aspect, c.aspect_span))
    out = from_records(rows, labels=dataset.labels, task=dataset.task, require_two_labels=False)

    records = sorted((p for r in results for p in r.records), key=lambda p: (p.origin_id, p.draw_index))
    per_example = sorted((row for r in results for row in r.per_example), key=lambda row: row["origin_id"])
    per_iteration = [r.summary for r in sorted(results, key=lambda r: r.iteration)]
    generated = sum(r["generated"] for r in per_example)
    totals = {"n_original": len(dataset), "n_output": len(out), "generated": generated}
    for key in COUNT_KEYS:
        totals[key] = sum(r[key] for r in per_example)
    totals["survived"] = len(survivors)
    totals["removed_total"] = generated - len(survivors)
    totals["survivor_rate"] = len(survivors) / generated if generated else 0.0
    report = {
        "config_echo": config.to_dict(),
        "mode": config.mode,
        "fold_plan": plan.to_dict() if plan is not None else None,
        "per_iteration": per_iteration,
        "per_example": per_example,
        "totals": totals,
        "warnings": warnings,
    }
    train_ids = {r.iteration: frozenset(r.train_ids) for r in results}
    return AugmentedDataset(out, records, report, train_ids)


def run_report(run: AugmentedDataset) -> dict:
    return run.report


def overlap_violations(run: AugmentedDataset) -> list[ProvenanceRecord]:
    """Candidates scored by a surrogate whose training data included their origin."""
    if run.report["mode"] == "mono":
        return []
    return [p for p in run.provenance if p.origin_id in run.train_ids[p.fold_iteration]]


def survivor_rate_difference(mono_report: dict, cross_report: dict) -> float:
    return mono_report["totals"]["survivor_rate"] - cross_report["totals"]["survivor_rate"]


def matched_unfiltered(run: AugmentedDataset) -> list[ProvenanceRecord]:
    """Size-matched unfiltered baseline drawn from the same candidate pools.

    For each origin with ``c`` survivors, the first ``c`` pool candidates in
    draw order are returned, so the baseline differs from the survivors only
    in how candidates were picked (draw order vs. the filter chain).
    """
    by_origin: dict[int, list[ProvenanceRecord]] = {}
    for p in run.provenance:
        by_origin.setdefault(p.origin_id, []).append(p)
    out = []
    for oid in sorted(by_origin):
        pool = sorted(by_origin[oid], key=lambda p: p.draw_index)
        out.extend(pool[: sum(p.survived for p in pool)])
    return out
