"""Command-line entry point orchestrating the pipeline from config files.

Usage model: reproducible runs live in a TOML (or JSON) config; quick
experiments override individual values with flags. Every command that
produces artifacts also writes a run manifest with content hashes of its
inputs and resolved parameters, so a run can be reproduced or audited later.

Exit codes: 0 success, 1 operational failure (including failed validation),
2 usage or config error.
"""

from __future__ import annotations

import functools
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import click

from .augment import AugPolicy, build_pool, export_pool, load_pool
from .dataset import (
    CapsConfig,
    Dataset,
    export_dataset,
    load_dataset,
    validate_caps,
    write_atomic,
)
from .dedupe import DuplicateReport, default_threshold, find_duplicates
from .embedder import EmbedderSpec, embed_samples, export_embeddings, import_embeddings
from .journal import DecisionJournal, apply_decisions
from .rebalance import (
    QuotaPlan,
    classification_report,
    compute_quotas,
    favor_difficult,
    read_predictions_csv,
)
from .sampler import SamplerConfig, iterative_sample
from .seeds import derive_seed

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


@dataclass
class PipelineConfig:
    train: str | None = None
    val: str | None = None
    pool: str | None = None
    embeddings: str | None = None
    predictions: str | None = None
    output: str | None = None
    policy: str | None = None
    mode: str = "even"
    seed: int = 0
    caps: CapsConfig = field(default_factory=CapsConfig)
    # sampler
    iterations: int = 10
    metric: str = "euclidean"
    threshold: str | float = "auto"
    or_semantics: bool = False
    max_sizes: dict = field(default_factory=dict)
    # pool building
    target_per_class: int = 100
    # quotas
    budget: int = 9000
    floor: int = 0
    epsilon: float = 0.05
    # embedder
    embedder_kind: str = "baseline"
    l2_normalize: bool = True

    @classmethod
    def from_file(cls, path: Path) -> "PipelineConfig":
        text = path.read_bytes()
        if path.suffix == ".json" or text.lstrip()[:1] == b"{":
            data = json.loads(text)
        else:
            data = tomllib.loads(text.decode())
        return cls.from_mapping(data, source=str(path))

    @classmethod
    def from_mapping(cls, data: dict, source: str = "<config>") -> "PipelineConfig":
        cfg = cls()
        paths = data.get("paths", {})
        for key in ("train", "val", "pool", "embeddings", "predictions", "output", "policy"):
            if key in paths:
                setattr(cfg, key, str(paths[key]))
        caps = data.get("caps", {})
        try:
            cfg.caps = CapsConfig(**{f.name: caps.get(f.name, getattr(cfg.caps, f.name)) for f in fields(CapsConfig)})
        except (TypeError, ValueError) as exc:
            raise click.UsageError(f"{source}: caps: {exc}") from exc
        sampler = data.get("sampler", {})
        cfg.iterations = int(sampler.get("iterations", cfg.iterations))
        cfg.metric = sampler.get("metric", cfg.metric)
        cfg.threshold = sampler.get("threshold", cfg.threshold)
        cfg.or_semantics = bool(sampler.get("or_semantics", cfg.or_semantics))
        cfg.max_sizes = dict(sampler.get("max_sizes", {}))
        pool = data.get("pool", {})
        cfg.target_per_class = int(pool.get("target_per_class", cfg.target_per_class))
        quota = data.get("quota", {})
        cfg.budget = int(quota.get("budget", cfg.budget))
        cfg.floor = int(quota.get("floor", cfg.floor))
        cfg.epsilon = float(quota.get("epsilon", cfg.epsilon))
        emb = data.get("embedder", {})
        cfg.embedder_kind = emb.get("kind", cfg.embedder_kind)
        cfg.l2_normalize = bool(emb.get("l2_normalize", cfg.l2_normalize))
        if "embeddings" in emb:
            cfg.embeddings = str(emb["embeddings"])
        for key in ("seed", "mode"):
            if key in data:
                setattr(cfg, key, data[key])
        cfg.seed = int(cfg.seed)
        if cfg.mode not in ("even", "uneven"):
            raise click.UsageError(f"{source}: mode must be even or uneven, got {cfg.mode!r}")
        return cfg

    def embedder_spec(self) -> EmbedderSpec:
        return EmbedderSpec(
            kind=self.embedder_kind,
            l2_normalize=self.l2_normalize,
            path=self.embeddings if self.embedder_kind == "imported" else None,
        )


class Ctx:
    def __init__(self):
        self.config = PipelineConfig()
        self.json_output = False
        self.trace_path: Path | None = None
        self.run_manifest: Path | None = None


pass_ctx = click.make_pass_decorator(Ctx, ensure=True)


def operational(fn):
    """Map module errors to exit 1, keeping click usage errors at exit 2."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except (ValueError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_path(path: Path) -> str:
    if path.is_file():
        return _hash_file(path)
    h = hashlib.sha256()
    for p in sorted(path.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(path)).encode())
            h.update(_hash_file(p).encode())
    return h.hexdigest()


def write_run_manifest(ctx: Ctx, command: str, params: dict, inputs: dict, outputs: list) -> None:
    manifest = {
        "command": command,
        "params": params,
        "config_hash": hashlib.sha256(
            json.dumps(params, sort_keys=True, default=str).encode()
        ).hexdigest(),
        "inputs": {
            name: {"path": str(p), "sha256": _hash_path(Path(p))}
            for name, p in inputs.items()
            if p is not None
        },
        "outputs": [str(p) for p in outputs],
    }
    target = ctx.run_manifest
    if target is None:
        for out in outputs:
            if Path(out).is_dir():
                target = Path(out) / "run-manifest.json"
                break
        else:
            return
    write_atomic(Path(target), json.dumps(manifest, indent=2, sort_keys=True).encode())


def _emit(ctx: Ctx, payload: dict, text: str) -> None:
    if ctx.json_output:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    elif text:
        click.echo(text)


def _load_policy(path: str | None) -> AugPolicy:
    return AugPolicy.load(path) if path else AugPolicy()


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--trace", "trace_path", type=click.Path(path_type=Path), default=None)
@click.option("--json", "json_output", is_flag=True, help="Machine-readable stdout.")
@click.option("--run-manifest", type=click.Path(path_type=Path), default=None)
@click.pass_context
def main(click_ctx, config_path, seed, trace_path, json_output, run_manifest):
    """Dataset curation pipeline: validate, embed, dedupe, pool, sample, rebalance, review."""
    ctx = click_ctx.ensure_object(Ctx)
    if config_path is not None:
        try:
            ctx.config = PipelineConfig.from_file(config_path)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise click.UsageError(f"cannot parse config {config_path}: {exc}") from exc
    if seed is not None:
        ctx.config.seed = seed
    ctx.json_output = json_output
    ctx.trace_path = trace_path
    ctx.run_manifest = run_manifest


@main.command()
@click.option("--train", "train_path", type=click.Path(path_type=Path), default=None)
@click.option("--val", "val_path", type=click.Path(path_type=Path), default=None)
@click.option("--mode", type=click.Choice(["even", "uneven"]), default=None)
@pass_ctx
@operational
def validate(ctx, train_path, val_path, mode):
    """Check competition caps; exits 1 when violations exist."""
    cfg = ctx.config
    train_path = train_path or cfg.train
    val_path = val_path or cfg.val
    if not train_path or not val_path:
        raise click.UsageError("validate needs --train and --val (or config paths)")
    train = load_dataset(train_path)
    val = load_dataset(val_path, split="val")
    report = validate_caps(train, val, cfg.caps, mode=mode or cfg.mode)
    lines = [str(v) for v in report.violations]
    _emit(ctx, report.to_json(), "\n".join(lines) if lines else "caps ok")
    if not report.ok:
        sys.exit(1)


@main.command()
@click.option("--input", "input_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--no-normalize", is_flag=True, help="Skip L2 normalization.")
@pass_ctx
@operational
def embed(ctx, input_path, out_path, no_normalize):
    """Embed a dataset tree into a 256-wide embeddings file."""
    spec = EmbedderSpec(l2_normalize=not no_normalize)
    dataset = load_dataset(input_path)
    matrix = embed_samples(list(dataset.iter_samples()), spec)
    export_embeddings(matrix, out_path)
    write_run_manifest(
        ctx, "embed", {"l2_normalize": not no_normalize}, {"input": input_path}, [out_path]
    )
    _emit(ctx, {"rows": len(matrix), "path": str(out_path)}, f"wrote {len(matrix)} embeddings to {out_path}")


@main.command()
@click.option("--embeddings", "emb_path", type=click.Path(path_type=Path), default=None)
@click.option("--threshold", default=None, help="Distance cutoff or 'auto'.")
@click.option("--metric", type=click.Choice(["euclidean", "cosine"]), default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@pass_ctx
@operational
def dedupe(ctx, emb_path, threshold, metric, out_path):
    """Group near-duplicates in an embeddings file into a JSON report."""
    cfg = ctx.config
    emb_path = emb_path or cfg.embeddings
    if not emb_path:
        raise click.UsageError("dedupe needs --embeddings (or config paths.embeddings)")
    matrix = import_embeddings(emb_path)
    metric = metric or cfg.metric
    raw = threshold if threshold is not None else cfg.threshold
    cutoff = default_threshold(matrix, metric) if raw == "auto" else float(raw)
    report = find_duplicates(matrix, cutoff, metric)
    report.save(out_path)
    write_run_manifest(
        ctx,
        "dedupe",
        {"threshold": cutoff, "metric": metric},
        {"embeddings": emb_path},
        [out_path],
    )
    _emit(
        ctx,
        {"groups": len(report.groups), "marked": len(report.marked), "threshold": cutoff},
        f"{len(report.groups)} groups, {len(report.marked)} marked at threshold {cutoff:.6g}",
    )


@main.command()
@click.option("--base", "base_paths", type=click.Path(path_type=Path), multiple=True, required=True)
@click.option("--policy", "policy_path", type=click.Path(path_type=Path), default=None)
@click.option("--target", "target", type=int, default=None, help="Samples per class.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@pass_ctx
@operational
def pool(ctx, base_paths, policy_path, target, out_path):
    """Build the augmented sample pool from base datasets."""
    cfg = ctx.config
    bases = [load_dataset(p) for p in base_paths]
    policy = _load_policy(policy_path or cfg.policy)
    target = target if target is not None else cfg.target_per_class
    built = build_pool(bases, policy, target, derive_seed(cfg.seed, "pool"))
    export_pool(built, out_path)
    write_run_manifest(
        ctx,
        "pool",
        {"target_per_class": target, "seed": cfg.seed},
        {f"base{i}": p for i, p in enumerate(base_paths)},
        [out_path],
    )
    _emit(
        ctx,
        {"per_class": built.class_sizes(), "shortfalls": dict(built.shortfalls)},
        f"pool of {built.total} samples ({target}/class target)",
    )


@main.command()
@click.option("--train", "train_path", type=click.Path(path_type=Path), default=None)
@click.option("--pool", "pool_path", type=click.Path(path_type=Path), default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--pool-out", "pool_out", type=click.Path(path_type=Path), default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--metric", type=click.Choice(["euclidean", "cosine"]), default=None)
@click.option("--threshold", default=None)
@click.option("--max-size", "max_size", type=int, default=None, help="Uniform per-class target.")
@click.option("--or-semantics", is_flag=True, default=None)
@pass_ctx
@operational
def sample(ctx, train_path, pool_path, out_path, pool_out, iterations, metric, threshold, max_size, or_semantics):
    """Iteratively replace near-duplicates with fresh pool draws."""
    cfg = ctx.config
    train_path = train_path or cfg.train
    pool_path = pool_path or cfg.pool
    if not train_path or not pool_path:
        raise click.UsageError("sample needs --train and --pool (or config paths)")
    train = load_dataset(train_path)
    pool_data = load_pool(pool_path)
    sizes = dict(cfg.max_sizes)
    if max_size is not None:
        sizes = {c: max_size for c, n in train.class_sizes().items() if n}
    if not sizes:
        sizes = {c: n for c, n in train.class_sizes().items() if n}
    raw = threshold if threshold is not None else cfg.threshold
    scfg = SamplerConfig(
        max_sizes=sizes,
        iterations=iterations if iterations is not None else cfg.iterations,
        metric=metric or cfg.metric,
        threshold="auto" if raw == "auto" else float(raw),
        seed=derive_seed(cfg.seed, "sampler"),
        embedder=ctx.config.embedder_spec(),
        or_semantics=cfg.or_semantics if or_semantics is None else or_semantics,
    )
    result = iterative_sample(train, pool_data, scfg)
    export_dataset(result.dataset, out_path)
    outputs = [out_path]
    if pool_out:
        export_pool(result.pool, pool_out)
        outputs.append(pool_out)
    if ctx.trace_path:
        result.trace.write_jsonl(ctx.trace_path)
        outputs.append(ctx.trace_path)
    write_run_manifest(
        ctx,
        "sample",
        {
            "iterations": scfg.iterations,
            "metric": scfg.metric,
            "threshold": scfg.threshold,
            "seed": cfg.seed,
            "max_sizes": sizes,
            "or_semantics": scfg.or_semantics,
        },
        {"train": train_path, "pool": pool_path},
        outputs,
    )
    shortfalls = sorted({r.label for r in result.trace.records if r.shortfall})
    _emit(
        ctx,
        {
            "per_class": result.dataset.class_sizes(),
            "iterations": len(result.trace.records),
            "shortfall_classes": shortfalls,
        },
        f"resampled dataset of {result.dataset.total} samples, "
        f"{len(result.trace.records)} replacement iterations",
    )


@main.command()
@click.option("--predictions", "preds_path", type=click.Path(path_type=Path), default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
@pass_ctx
@operational
def report(ctx, preds_path, out_path):
    """Per-class precision/recall/f1 from a predictions CSV."""
    preds_path = preds_path or ctx.config.predictions
    if not preds_path:
        raise click.UsageError("report needs --predictions (or config paths.predictions)")
    rep = classification_report(read_predictions_csv(preds_path))
    if out_path:
        write_atomic(Path(out_path), json.dumps(rep.to_json(), indent=2).encode())
    _emit(ctx, rep.to_json(), rep.to_text())


@main.command()
@click.option("--predictions", "preds_path", type=click.Path(path_type=Path), default=None)
@click.option("--budget", type=int, default=None)
@click.option("--floor", type=int, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
@pass_ctx
@operational
def quota(ctx, preds_path, budget, floor, epsilon, out_path):
    """Derive per-class train size targets from class f1."""
    cfg = ctx.config
    preds_path = preds_path or cfg.predictions
    if not preds_path:
        raise click.UsageError("quota needs --predictions (or config paths.predictions)")
    rep = classification_report(read_predictions_csv(preds_path))
    plan = compute_quotas(
        rep,
        budget if budget is not None else cfg.budget,
        floor if floor is not None else cfg.floor,
        epsilon if epsilon is not None else cfg.epsilon,
    )
    if out_path:
        write_atomic(Path(out_path), json.dumps(plan.to_json(), indent=2).encode())
    text = "\n".join(f"{c}: {n}" for c, n in plan.targets.items())
    _emit(ctx, plan.to_json(), text)


@main.command()
@click.option("--train", "train_path", type=click.Path(path_type=Path), default=None)
@click.option("--pool", "pool_path", type=click.Path(path_type=Path), default=None)
@click.option("--val", "val_path", type=click.Path(path_type=Path), default=None)
@click.option("--predictions", "preds_path", type=click.Path(path_type=Path), default=None)
@click.option("--plan", "plan_path", type=click.Path(path_type=Path), default=None)
@click.option("--budget", type=int, default=None)
@click.option("--floor", type=int, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--threshold", type=float, default=0.0, help="Duplicate guard distance.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@pass_ctx
@operational
def rebalance(ctx, train_path, pool_path, val_path, preds_path, plan_path, budget, floor, epsilon, threshold, out_path):
    """Resize classes toward a quota plan, favoring difficult classes."""
    cfg = ctx.config
    train_path = train_path or cfg.train
    pool_path = pool_path or cfg.pool
    val_path = val_path or cfg.val
    preds_path = preds_path or cfg.predictions
    missing = [n for n, v in [("--train", train_path), ("--pool", pool_path), ("--val", val_path), ("--predictions", preds_path)] if not v]
    if missing:
        raise click.UsageError(f"rebalance needs {', '.join(missing)}")
    train = load_dataset(train_path)
    pool_data = load_pool(pool_path)
    val = load_dataset(val_path, split="val")
    preds = read_predictions_csv(preds_path)
    if plan_path:
        plan = QuotaPlan.from_json(json.loads(Path(plan_path).read_text()))
    else:
        plan = compute_quotas(
            classification_report(preds),
            budget if budget is not None else cfg.budget,
            floor if floor is not None else cfg.floor,
            epsilon if epsilon is not None else cfg.epsilon,
        )
    result = favor_difficult(
        train,
        pool_data,
        plan,
        preds,
        val,
        spec=cfg.embedder_spec(),
        threshold=threshold,
        seed=derive_seed(cfg.seed, "rebalance"),
    )
    export_dataset(result, out_path)
    write_run_manifest(
        ctx,
        "rebalance",
        {"threshold": threshold, "seed": cfg.seed, "targets": dict(plan.targets)},
        {"train": train_path, "pool": pool_path, "val": val_path, "predictions": preds_path},
        [out_path],
    )
    _emit(
        ctx,
        {"per_class": result.class_sizes(), "total": result.total},
        f"rebalanced dataset of {result.total} samples",
    )


@main.command()
@click.option("--input", "input_path", type=click.Path(path_type=Path), required=True)
@click.option("--journal", "journal_path", type=click.Path(path_type=Path), default=None)
@click.option("--pool", "pool_path", type=click.Path(path_type=Path), default=None)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@pass_ctx
@operational
def export(ctx, input_path, journal_path, pool_path, out_path):
    """Re-export a dataset (optionally applying a decision journal)."""
    dataset = load_dataset(input_path)
    pool_data = load_pool(pool_path) if pool_path else None
    if journal_path:
        journal = DecisionJournal(journal_path)
        dataset = apply_decisions(journal.records, dataset, pool_data)
    export_dataset(dataset, out_path)
    inputs = {"input": input_path}
    if journal_path:
        inputs["journal"] = journal_path
    if pool_path:
        inputs["pool"] = pool_path
    write_run_manifest(ctx, "export", {}, inputs, [out_path])
    _emit(ctx, {"total": dataset.total, "path": str(out_path)}, f"exported {dataset.total} samples to {out_path}")


@main.command()
@click.option("--train", "train_path", type=click.Path(path_type=Path), default=None)
@click.option("--val", "val_path", type=click.Path(path_type=Path), default=None)
@click.option("--pool", "pool_path", type=click.Path(path_type=Path), default=None)
@click.option("--duplicates", "dup_path", type=click.Path(path_type=Path), default=None)
@click.option("--predictions", "preds_path", type=click.Path(path_type=Path), default=None)
@click.option("--journal", "journal_path", type=click.Path(path_type=Path), default=None)
@click.option("--output", "output_dir", type=click.Path(path_type=Path), default=None)
@click.option("--ui", "ui_dir", type=click.Path(path_type=Path), default=None)
@click.option("--quota-budget", type=int, default=None, help="Quota budget; defaults to the train total.")
@click.option("--quota-floor", type=int, default=0)
@click.option("--quota-epsilon", type=float, default=0.05)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8765)
@pass_ctx
@operational
def serve(ctx, train_path, val_path, pool_path, dup_path, preds_path, journal_path, output_dir, ui_dir, quota_budget, quota_floor, quota_epsilon, host, port):
    """Run the human-in-the-loop review service."""
    import uvicorn

    from .service import SessionState, create_app

    cfg = ctx.config
    train_path = train_path or cfg.train
    if not train_path:
        raise click.UsageError("serve needs --train (or config paths.train)")
    val_path = val_path or cfg.val
    pool_path = pool_path or cfg.pool
    preds_path = preds_path or cfg.predictions
    output_dir = output_dir or cfg.output
    state = SessionState(
        train=load_dataset(train_path),
        val=load_dataset(val_path, split="val") if val_path else None,
        pool=load_pool(pool_path) if pool_path else None,
        duplicate_report=DuplicateReport.load(dup_path) if dup_path else None,
        predictions=read_predictions_csv(preds_path) if preds_path else None,
        embedder=cfg.embedder_spec(),
        caps=cfg.caps,
        caps_mode=cfg.mode,
        journal=DecisionJournal(journal_path) if journal_path else None,
        output_dir=Path(output_dir) if output_dir else None,
        ui_dir=Path(ui_dir) if ui_dir else None,
        quota_budget=quota_budget,
        quota_floor=quota_floor,
        quota_epsilon=quota_epsilon,
    )
    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
