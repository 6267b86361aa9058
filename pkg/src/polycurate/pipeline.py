"""Config-driven pipeline runner.

A pipeline config is a JSON document with a versioned schema, a global
seed, and an ordered stage list; each stage names an operation and its
parameters. Runs are reproducible: identical config + seed + inputs give
byte-identical outputs and run report. Wall-clock timings go to the log,
never into the report.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable

import jsonschema

from . import analytics, corpus, embeddings, langid, mixture, quality, similarity, translation

log = logging.getLogger("polycurate")


class ConfigError(Exception):
    """Invalid pipeline config; carries the offending key path."""

    def __init__(self, message: str, key_path: str = ""):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r}: {message}")
        self.stage = stage


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["version", "stages"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": 1},
        "seed": {"type": "integer"},
        "strict": {"type": "boolean"},
        "stages": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "op"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "op": {"type": "string"},
                    "params": {"type": "object"},
                },
            },
        },
    },
}


@dataclass
class PipelineConfig:
    version: int
    stages: list[dict]
    seed: int = 0
    strict: bool = False

    @classmethod
    def from_obj(cls, obj: dict) -> "PipelineConfig":
        try:
            jsonschema.validate(obj, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(exc.message, key_path=exc.json_path) from exc
        return cls(
            version=obj["version"],
            stages=list(obj["stages"]),
            seed=int(obj.get("seed", 0)),
            strict=bool(obj.get("strict", False)),
        )


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class StageContext:
    workdir: str
    seed: int
    strict: bool
    base_dir: str = "."
    produced: set[str] = field(default_factory=set)

    def resolve(self, rel: str) -> str:
        """Workdir-relative unless the path is absolute or refers to a
        pre-existing input beside the config file."""
        if os.path.isabs(rel):
            return rel
        in_work = os.path.join(self.workdir, rel)
        if rel in self.produced or os.path.exists(in_work):
            return in_work
        in_base = os.path.join(self.base_dir, rel)
        if os.path.exists(in_base):
            return in_base
        return in_work


StageFn = Callable[[StageContext, dict], dict]
_REGISTRY: dict[str, StageFn] = {}


def stage_op(name: str):
    def deco(fn: StageFn) -> StageFn:
        _REGISTRY[name] = fn
        return fn
    return deco


def known_ops() -> list[str]:
    return sorted(_REGISTRY)


def _read_docs(ctx: StageContext, path: str) -> list[corpus.Document]:
    return list(corpus.ingest([ctx.resolve(path)], strict=ctx.strict))


def _write_docs(ctx: StageContext, docs, path: str) -> int:
    out = ctx.resolve(path)
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        return corpus.write_jsonl(docs, fh)


@stage_op("ingest")
def _op_ingest(ctx: StageContext, params: dict) -> dict:
    errors: list = []
    docs = list(
        corpus.ingest(
            [ctx.resolve(p) for p in params["inputs"]],
            lang_default=params.get("lang_default"),
            strict=ctx.strict,
            error_log=errors,
        )
    )
    n = _write_docs(ctx, docs, params["output"])
    return {"documents": n, "skipped_records": len(errors)}


@stage_op("inventory")
def _op_inventory(ctx: StageContext, params: dict) -> dict:
    tok = corpus.TokenizerSpec(**params.get("tokenizer", {}))
    inv = corpus.CorpusInventory(tok.kind)
    for path in params["inputs"]:
        inv = inv.merge(corpus.build_inventory(_read_docs(ctx, path), tok))
    with open(ctx.resolve(params["output"]), "w", encoding="utf-8") as fh:
        fh.write(inv.to_json())
    return {"entries": sum(1 for _ in inv.entries())}


@stage_op("langid-train")
def _op_langid_train(ctx: StageContext, params: dict) -> dict:
    seeds: dict[str, list[corpus.Document]] = {}
    for doc in _read_docs(ctx, params["seeds"]):
        seeds.setdefault(doc.lang or "", []).append(doc)
    profiles = langid.train_profiles(
        seeds,
        n_range=tuple(params.get("n_range", langid.DEFAULT_N_RANGE)),
        top_k=params.get("top_k", langid.DEFAULT_TOP_K),
    )
    with open(ctx.resolve(params["output"]), "w", encoding="utf-8") as fh:
        fh.write(profiles.to_json())
    return {"languages": len(profiles.profiles)}


@stage_op("langid-predict")
def _op_langid_predict(ctx: StageContext, params: dict) -> dict:
    with open(ctx.resolve(params["profiles"]), encoding="utf-8") as fh:
        profiles = langid.ProfileSet.from_json(fh.read())
    min_chars = params.get("min_chars", 20)
    out_docs = []
    for doc in _read_docs(ctx, params["input"]):
        lang, conf = langid.classify(doc, profiles, min_chars=min_chars)
        doc.lang = None if lang == langid.UNKNOWN else lang
        doc.meta["langid_confidence"] = f"{conf:.6f}"
        out_docs.append(doc.with_provenance("langid"))
    n = _write_docs(ctx, out_docs, params["output"])
    return {"documents": n}


@stage_op("quality-train")
def _op_quality_train(ctx: StageContext, params: dict) -> dict:
    cfg = quality.TrainingMeta(
        seed=params.get("seed", ctx.seed),
        epochs=params.get("epochs", 10),
        learning_rate=params.get("learning_rate", 0.5),
        holdout_fraction=params.get("holdout_fraction", 0.1),
    )
    model = quality.train_quality(
        _read_docs(ctx, params["pos"]),
        _read_docs(ctx, params["neg"]),
        cfg,
        lang=params.get("lang", "en"),
        hash_dim=params.get("hash_dim", quality.DEFAULT_HASH_DIM),
    )
    with open(ctx.resolve(params["model"]), "w", encoding="utf-8") as fh:
        fh.write(model.to_json())
    return {"holdout_accuracy": model.holdout_accuracy}


def _load_model(ctx: StageContext, path: str) -> quality.QualityModel:
    with open(ctx.resolve(path), encoding="utf-8") as fh:
        return quality.QualityModel.from_json(fh.read())


def _load_scores(ctx: StageContext, path: str) -> list[quality.ScoreRecord]:
    records = []
    with open(ctx.resolve(path), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                records.append(quality.ScoreRecord(obj["doc_id"], obj["score"]))
    return records


@stage_op("quality-score")
def _op_quality_score(ctx: StageContext, params: dict) -> dict:
    model = _load_model(ctx, params["model"])
    n = 0
    with open(ctx.resolve(params["output"]), "w", encoding="utf-8") as fh:
        for rec in quality.score(_read_docs(ctx, params["input"]), model):
            fh.write(json.dumps({"doc_id": rec.doc_id, "score": rec.score}) + "\n")
            n += 1
    return {"scored": n}


@stage_op("quality-filter")
def _op_quality_filter(ctx: StageContext, params: dict) -> dict:
    docs = _read_docs(ctx, params["input"])
    scores = _load_scores(ctx, params["scores"])
    kept = quality.filter_top(
        docs,
        scores,
        keep_fraction=params.get("keep_fraction"),
        keep_threshold=params.get("keep_threshold"),
    )
    n = _write_docs(ctx, kept, params["output"])
    return {"input": len(docs), "kept": n}


@stage_op("dedup")
def _op_dedup(ctx: StageContext, params: dict) -> dict:
    with open(ctx.resolve(params["embeddings"]), encoding="utf-8") as fh:
        embs = embeddings.load_embeddings(fh)
    kept_ids = set(embeddings.dedup_near(embs, params["tau"]))
    result = {"input": len(embs), "kept": len(kept_ids)}
    if "input" in params and "output" in params:
        docs = [
            d.with_provenance("embed-dedup")
            for d in _read_docs(ctx, params["input"])
            if d.id in kept_ids
        ]
        _write_docs(ctx, docs, params["output"])
    if "ids_output" in params:
        with open(ctx.resolve(params["ids_output"]), "w", encoding="utf-8") as fh:
            json.dump(sorted(kept_ids), fh)
    return result


@stage_op("select-diverse")
def _op_select(ctx: StageContext, params: dict) -> dict:
    with open(ctx.resolve(params["embeddings"]), encoding="utf-8") as fh:
        embs = embeddings.load_embeddings(fh)
    ids = embeddings.select_diverse(embs, params["k"])
    with open(ctx.resolve(params["output"]), "w", encoding="utf-8") as fh:
        json.dump(ids, fh)
    return {"selected": len(ids)}


@stage_op("translate-select")
def _op_translate_select(ctx: StageContext, params: dict) -> dict:
    docs = _read_docs(ctx, params["input"])
    scores = _load_scores(ctx, params["scores"]) if "scores" in params else None
    jobs = translation.select_sources(
        docs,
        strategy=params["strategy"],
        fraction=params.get("fraction", 1.0),
        target_lang=params["target_lang"],
        scores=scores,
        seed=params.get("seed", ctx.seed),
    )
    with open(ctx.resolve(params["output"]), "w", encoding="utf-8") as fh:
        for job in jobs:
            fh.write(
                json.dumps(
                    {
                        "source_doc_id": job.source_doc_id,
                        "source_lang": job.source_lang,
                        "target_lang": job.target_lang,
                        "strategy": job.strategy,
                        "score": job.score,
                    }
                )
                + "\n"
            )
    return {"jobs": len(jobs)}


def _make_translator(spec: dict):
    kind = spec.get("kind", "mock")
    if kind == "mock":
        return translation.MockTranslator(
            prefix=spec.get("prefix", ""), fail_ids=set(spec.get("fail_ids", []))
        )
    if kind == "subprocess":
        return translation.SubprocessTranslator(spec["argv"])
    if kind == "http":
        return translation.HttpTranslator(spec["url"])
    raise ConfigError(f"unknown translator kind {kind!r}")


@stage_op("translate-run")
def _op_translate_run(ctx: StageContext, params: dict) -> dict:
    docs_by_id = {d.id: d for d in _read_docs(ctx, params["input"])}
    jobs = []
    with open(ctx.resolve(params["jobs"]), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                jobs.append(translation.TranslationJob(**obj))
    report = translation.TranslationReport()
    translator = _make_translator(params.get("translator", {"kind": "mock"}))
    out = translation.translate(
        jobs, docs_by_id, translator, strict=ctx.strict, report=report, log=log.warning
    )
    n = _write_docs(ctx, out, params["output"])
    return {"jobs": report.attempted, "translated": n, "failed": len(report.failed_ids)}


def _load_inventory(ctx: StageContext, params: dict) -> corpus.CorpusInventory:
    if "inventory_inline" in params:
        return corpus.CorpusInventory.from_json(json.dumps(params["inventory_inline"]))
    with open(ctx.resolve(params["inventory"]), encoding="utf-8") as fh:
        return corpus.CorpusInventory.from_json(fh.read())


@stage_op("mixture-plan")
def _op_mixture_plan(ctx: StageContext, params: dict) -> dict:
    plan_obj = dict(params["plan"])
    plan_obj.setdefault("seed", ctx.seed)
    mix = mixture.MixturePlan.from_config(plan_obj)
    inv = _load_inventory(ctx, params)
    manifest = mixture.plan(mix, inv, strict=ctx.strict)
    with open(ctx.resolve(params["output"]), "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())
    return {
        "entries": len(manifest.entries),
        "overall_multilingual_fraction": mixture.overall_fraction(mix),
        "deficit": sum(manifest.deficits.values()),
    }


@stage_op("mixture-build")
def _op_mixture_build(ctx: StageContext, params: dict) -> dict:
    with open(ctx.resolve(params["manifest"]), encoding="utf-8") as fh:
        manifest = mixture.SamplingManifest.from_json(fh.read())
    store_paths = {key: ctx.resolve(p) for key, p in params["stores"].items()}
    cache: dict[str, list[corpus.Document]] = {}

    def store(source: str, lang: str):
        key = f"{source}/{lang}"
        if key not in store_paths:
            raise mixture.MixtureError(f"no store configured for {key!r}")
        if key not in cache:
            cache[key] = list(corpus.ingest([store_paths[key]], strict=ctx.strict))
        return cache[key]

    tok = corpus.TokenizerSpec(**params.get("tokenizer", {}))
    build_report = mixture.BuildReport()
    n = _write_docs(ctx, mixture.build(manifest, store, tok, build_report), params["output"])
    if "report" in params:
        with open(ctx.resolve(params["report"]), "w", encoding="utf-8") as fh:
            fh.write(build_report.to_json())
    return {"documents": n}


@stage_op("analyze-pareto")
def _op_analyze_pareto(ctx: StageContext, params: dict) -> dict:
    with open(ctx.resolve(params["model_cards"]), encoding="utf-8") as fh:
        cards = analytics.load_model_cards(fh)
    with open(ctx.resolve(params["evals"]), encoding="utf-8") as fh:
        records = analytics.load_eval_records(fh)
    points = analytics.eval_points(cards, records, params.get("langs"))
    frontier = analytics.pareto_frontier(points)
    with open(ctx.resolve(params["output"]), "w", encoding="utf-8") as fh:
        json.dump(
            [{"model_id": p.model_id, "flops": p.x, "error_rate": p.y} for p in frontier],
            fh,
            indent=2,
        )
    if "figure" in params:
        from . import plotting

        plotting.render_pareto(points, ctx.resolve(params["figure"]), frontier)
    return {"points": len(points), "frontier": len(frontier)}


# ----- stage param validation (cross-reference checks) -----

_STAGE_INPUT_KEYS = {
    "ingest": ["inputs"],
    "inventory": ["inputs"],
    "langid-train": ["seeds"],
    "langid-predict": ["input", "profiles"],
    "quality-train": ["pos", "neg"],
    "quality-score": ["input", "model"],
    "quality-filter": ["input", "scores"],
    "dedup": ["embeddings", "input"],
    "select-diverse": ["embeddings"],
    "translate-select": ["input", "scores"],
    "translate-run": ["input", "jobs"],
    "mixture-plan": ["inventory"],
    "mixture-build": ["manifest"],
    "analyze-pareto": ["model_cards", "evals"],
}

_STAGE_OUTPUT_KEYS = {
    "ingest": ["output"],
    "inventory": ["output"],
    "langid-train": ["output"],
    "langid-predict": ["output"],
    "quality-train": ["model"],
    "quality-score": ["output"],
    "quality-filter": ["output"],
    "dedup": ["output", "ids_output"],
    "select-diverse": ["output"],
    "translate-select": ["output"],
    "translate-run": ["output"],
    "mixture-plan": ["output"],
    "mixture-build": ["output", "report"],
    "analyze-pareto": ["output", "figure"],
}


def _stage_inputs(stage: dict) -> list[str]:
    params = stage.get("params", {})
    paths = []
    for key in _STAGE_INPUT_KEYS.get(stage["op"], []):
        val = params.get(key)
        if isinstance(val, str):
            paths.append(val)
        elif isinstance(val, list):
            paths.extend(v for v in val if isinstance(v, str))
    if stage["op"] == "mixture-build":
        paths.extend(params.get("stores", {}).values())
    return paths


def _stage_outputs(stage: dict) -> list[str]:
    params = stage.get("params", {})
    return [
        params[key]
        for key in _STAGE_OUTPUT_KEYS.get(stage["op"], [])
        if isinstance(params.get(key), str)
    ]


def _validate_plan_params(idx: int, params: dict, diagnostics: list[str]) -> None:
    plan_obj = params.get("plan")
    if not isinstance(plan_obj, dict):
        diagnostics.append(f"stages[{idx}].params.plan: missing plan object")
        return
    for p_idx, phase in enumerate(plan_obj.get("phases", [])):
        where = f"stages[{idx}].params.plan.phases[{p_idx}]"
        name = phase.get("name", f"#{p_idx}")
        if phase.get("tokens", 1) <= 0:
            diagnostics.append(f"{where}: phase {name!r} has non-positive tokens")
        frac = phase.get("multilingual_fraction", 0)
        if not (0 <= frac <= 1):
            diagnostics.append(
                f"{where}: phase {name!r} multilingual_fraction {frac} outside [0, 1]"
            )
    if "inventory" not in params and "inventory_inline" not in params:
        diagnostics.append(f"stages[{idx}].params: needs inventory or inventory_inline")


def validate_config(obj: dict, base_dir: str = ".") -> list[str]:
    """Full schema plus cross-reference check; returns diagnostics (empty
    means ok). Does not execute anything."""
    try:
        cfg = PipelineConfig.from_obj(obj)
    except ConfigError as exc:
        return [str(exc)]

    diagnostics: list[str] = []
    seen_names: set[str] = set()
    produced: set[str] = set()
    for idx, stage in enumerate(cfg.stages):
        where = f"stages[{idx}]"
        if stage["name"] in seen_names:
            diagnostics.append(f"{where}: duplicate stage name {stage['name']!r}")
        seen_names.add(stage["name"])
        if stage["op"] not in _REGISTRY:
            diagnostics.append(f"{where}: unknown op {stage['op']!r}")
            continue
        for path in _stage_inputs(stage):
            if path in produced:
                continue
            resolved = path if os.path.isabs(path) else os.path.join(base_dir, path)
            if not os.path.exists(resolved):
                diagnostics.append(
                    f"{where}: input {path!r} neither exists nor is produced upstream"
                )
        if stage["op"] == "mixture-plan":
            _validate_plan_params(idx, stage.get("params", {}), diagnostics)
        produced.update(_stage_outputs(stage))
    return diagnostics


def run(config: PipelineConfig, workdir: str, base_dir: str = ".") -> dict:
    """Execute stages in order; returns the run report (deterministic)."""
    os.makedirs(workdir, exist_ok=True)
    ctx = StageContext(workdir=workdir, seed=config.seed, strict=config.strict, base_dir=base_dir)
    report = {"version": config.version, "seed": config.seed, "stages": []}
    for stage in config.stages:
        name, op = stage["name"], stage["op"]
        if op not in _REGISTRY:
            raise ConfigError(f"unknown op {op!r}", key_path=f"stages.{name}.op")
        params = stage.get("params", {})
        input_digests = {}
        for rel in _stage_inputs(stage):
            path = ctx.resolve(rel)
            if os.path.exists(path):
                input_digests[rel] = _sha256_file(path)
        started = time.monotonic()
        try:
            counts = _REGISTRY[op](ctx, params)
        except Exception as exc:
            raise StageError(name, str(exc)) from exc
        elapsed = time.monotonic() - started
        log.info("stage %s (%s) finished in %.3fs", name, op, elapsed)
        output_digests = {}
        for rel in _stage_outputs(stage):
            path = ctx.resolve(rel)
            if os.path.exists(path):
                output_digests[rel] = _sha256_file(path)
        ctx.produced.update(_stage_outputs(stage))
        report["stages"].append(
            {
                "name": name,
                "op": op,
                "params": params,
                "input_digests": input_digests,
                "output_digests": output_digests,
                "counts": counts,
            }
        )
    report_path = os.path.join(workdir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report
