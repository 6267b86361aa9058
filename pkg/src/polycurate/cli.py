"""Single entry point exposing every pipeline stage as a subcommand."""

from __future__ import annotations

import functools
import json
import logging
import os
import sys

import click

from . import analytics, corpus, pipeline, quality, similarity, translation
from .pipeline import ConfigError, StageContext, StageError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

log = logging.getLogger("polycurate")


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _runtime_errors(fn):
    """Map package exceptions to exit code 1 (2 for config problems)."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except (
            StageError,
            corpus.CorpusError,
            quality.QualityError,
            translation.TranslationError,
            similarity.SimilarityError,
            analytics.AnalyticsError,
            OSError,
            ValueError,
        ) as exc:
            _fail(EXIT_RUNTIME, str(exc))

    return wrapper


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="Global RNG seed.")
@click.option("--strict", is_flag=True, help="Abort on record-level errors.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads for parallelizable stages.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Pipeline config (for run/validate).")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, seed, strict, threads, config_path, verbose):
    """Multilingual pretraining-data curation toolkit."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    ctx.obj = {"seed": seed, "strict": strict, "threads": threads, "config": config_path}


def _stage_ctx(obj, workdir: str = ".") -> StageContext:
    return StageContext(workdir=workdir, seed=obj["seed"], strict=obj["strict"])


def _run_op(obj, op: str, params: dict) -> dict:
    counts = pipeline._REGISTRY[op](_stage_ctx(obj), params)
    click.echo(json.dumps(counts))
    return counts


# ---------- corpus ----------

@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.option("--lang-default", default=None)
@click.pass_obj
@_runtime_errors
def ingest(obj, inputs, output, lang_default):
    """Normalize JSONL corpora into canonical document form."""
    _run_op(obj, "ingest", {"inputs": list(inputs), "output": output,
                            "lang_default": lang_default})


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.option("--tokenizer", default="whitespace-punct", show_default=True)
@click.pass_obj
@_runtime_errors
def inventory(obj, inputs, output, tokenizer):
    """Per-(source, lang) document and token counts."""
    _run_op(obj, "inventory", {"inputs": list(inputs), "output": output,
                               "tokenizer": {"kind": tokenizer}})


# ---------- langid ----------

@main.group()
def langid():
    """Character n-gram language identification."""


@langid.command("train")
@click.option("--seeds", required=True, type=click.Path(exists=True),
              help="JSONL seed docs with lang labels.")
@click.option("--output", required=True, type=click.Path())
@click.option("--top-k", type=int, default=3000, show_default=True)
@click.pass_obj
@_runtime_errors
def langid_train(obj, seeds, output, top_k):
    _run_op(obj, "langid-train", {"seeds": seeds, "output": output, "top_k": top_k})


@langid.command("predict")
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--profiles", required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.option("--min-chars", type=int, default=20, show_default=True)
@click.pass_obj
@_runtime_errors
def langid_predict(obj, input_, profiles, output, min_chars):
    _run_op(obj, "langid-predict", {"input": input_, "profiles": profiles,
                                    "output": output, "min_chars": min_chars})


# ---------- quality ----------

@main.group()
def quality_cmd():
    """Quality-classifier training, scoring, and filtering."""


# click group name must match the spec surface: `quality train|score|filter`
main.add_command(quality_cmd, name="quality")


@quality_cmd.command("train")
@click.option("--pos", required=True, type=click.Path(exists=True))
@click.option("--neg", required=True, type=click.Path(exists=True))
@click.option("--model", required=True, type=click.Path())
@click.option("--lang", default="en", show_default=True)
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--learning-rate", type=float, default=0.5, show_default=True)
@click.option("--hash-dim", type=int, default=quality.DEFAULT_HASH_DIM, show_default=True)
@click.pass_obj
@_runtime_errors
def quality_train(obj, pos, neg, model, lang, epochs, learning_rate, hash_dim):
    _run_op(obj, "quality-train", {
        "pos": pos, "neg": neg, "model": model, "lang": lang, "epochs": epochs,
        "learning_rate": learning_rate, "hash_dim": hash_dim, "seed": obj["seed"],
    })


@quality_cmd.command("score")
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.pass_obj
@_runtime_errors
def quality_score(obj, input_, model, output):
    _run_op(obj, "quality-score", {"input": input_, "model": model, "output": output})


@quality_cmd.command("filter")
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--scores", required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.option("--keep-fraction", type=float, default=None)
@click.option("--keep-threshold", type=float, default=None)
@click.pass_obj
@_runtime_errors
def quality_filter(obj, input_, scores, output, keep_fraction, keep_threshold):
    params = {"input": input_, "scores": scores, "output": output}
    if keep_fraction is not None:
        params["keep_fraction"] = keep_fraction
    if keep_threshold is not None:
        params["keep_threshold"] = keep_threshold
    _run_op(obj, "quality-filter", params)


# ---------- embeddings ----------

@main.command()
@click.option("--embeddings", required=True, type=click.Path(exists=True))
@click.option("--tau", type=float, required=True)
@click.option("--input", "input_", type=click.Path(exists=True), default=None)
@click.option("--output", type=click.Path(), default=None)
@click.option("--ids-output", type=click.Path(), default=None)
@click.pass_obj
@_runtime_errors
def dedup(obj, embeddings, tau, input_, output, ids_output):
    """Near-duplicate removal by embedding distance."""
    params = {"embeddings": embeddings, "tau": tau}
    if input_:
        params["input"] = input_
    if output:
        params["output"] = output
    if ids_output:
        params["ids_output"] = ids_output
    _run_op(obj, "dedup", params)


@main.command()
@click.option("--embeddings", required=True, type=click.Path(exists=True))
@click.option("-k", type=int, required=True)
@click.option("--output", required=True, type=click.Path())
@click.pass_obj
@_runtime_errors
def select(obj, embeddings, k, output):
    """Diversity-aware selection (farthest-point traversal)."""
    _run_op(obj, "select-diverse", {"embeddings": embeddings, "k": k, "output": output})


# ---------- translate ----------

@main.group()
def translate():
    """Translation-augmentation pipeline."""


@translate.command("select")
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--strategy", type=click.Choice(["random", "scored"]), required=True)
@click.option("--fraction", type=float, default=1.0, show_default=True)
@click.option("--target-lang", required=True)
@click.option("--scores", type=click.Path(exists=True), default=None)
@click.option("--output", required=True, type=click.Path())
@click.pass_obj
@_runtime_errors
def translate_select(obj, input_, strategy, fraction, target_lang, scores, output):
    params = {"input": input_, "strategy": strategy, "fraction": fraction,
              "target_lang": target_lang, "output": output, "seed": obj["seed"]}
    if scores:
        params["scores"] = scores
    _run_op(obj, "translate-select", params)


@translate.command("run")
@click.option("--jobs", required=True, type=click.Path(exists=True))
@click.option("--input", "input_", required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.option("--translator", "translator_spec", default="mock", show_default=True,
              help="mock | mock:PREFIX | subprocess:CMD | http:URL")
@click.pass_obj
@_runtime_errors
def translate_run(obj, jobs, input_, output, translator_spec):
    kind, _, rest = translator_spec.partition(":")
    if kind == "mock":
        spec = {"kind": "mock", "prefix": rest}
    elif kind == "subprocess":
        spec = {"kind": "subprocess", "argv": rest.split()}
    elif kind == "http":
        spec = {"kind": "http", "url": rest}
    else:
        raise ConfigError(f"unknown translator spec {translator_spec!r}")
    _run_op(obj, "translate-run", {"jobs": jobs, "input": input_, "output": output,
                                   "translator": spec})


# ---------- mixture ----------

@main.group()
def mixture():
    """Curriculum mixture planning and materialization."""


@mixture.command("plan")
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True),
              help="Plan config JSON.")
@click.option("--inventory", "inventory_path", required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.pass_obj
@_runtime_errors
def mixture_plan(obj, plan_path, inventory_path, output):
    with open(plan_path, encoding="utf-8") as fh:
        plan_obj = json.load(fh)
    _run_op(obj, "mixture-plan", {"plan": plan_obj, "inventory": inventory_path,
                                  "output": output})


@mixture.command("build")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--stores", required=True, type=click.Path(exists=True),
              help='JSON map {"source/lang": docs.jsonl}.')
@click.option("--output", required=True, type=click.Path())
@click.option("--report", type=click.Path(), default=None)
@click.pass_obj
@_runtime_errors
def mixture_build(obj, manifest, stores, output, report):
    with open(stores, encoding="utf-8") as fh:
        store_map = json.load(fh)
    params = {"manifest": manifest, "stores": store_map, "output": output}
    if report:
        params["report"] = report
    _run_op(obj, "mixture-build", params)


# ---------- similarity ----------

def _make_embedder(spec: str):
    from .embeddings import HttpEmbedder, SubprocessEmbedder

    kind, _, rest = spec.partition(":")
    if kind == "subprocess":
        return SubprocessEmbedder(rest.split(), embedder_id=rest.split()[0])
    if kind == "http":
        return HttpEmbedder(rest, embedder_id=rest)
    raise ConfigError(f"unknown embedder spec {spec!r}")


@main.group()
def similarity_cmd():
    """Language-similarity proxies and correlation."""


main.add_command(similarity_cmd, name="similarity")


@similarity_cmd.command("embed-dist")
@click.option("--pairs", required=True, type=click.Path(exists=True),
              help="TSV: tgt_lang, sentence_en, sentence_tgt.")
@click.option("--embedder", "embedder_specs", multiple=True, required=True,
              help="subprocess:CMD or http:URL; repeatable.")
@click.option("--output", required=True, type=click.Path())
@click.pass_obj
@_runtime_errors
def similarity_embed_dist(obj, pairs, embedder_specs, output):
    with open(pairs, encoding="utf-8") as fh:
        pair_list = similarity.load_parallel_tsv(fh)
    embedders = [_make_embedder(s) for s in embedder_specs]
    result = similarity.embed_distance(pair_list, embedders)
    with open(output, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    click.echo(json.dumps(result, sort_keys=True))


@similarity_cmd.command("ppl")
@click.option("--train", "train_path", required=True, type=click.Path(exists=True),
              help="English training docs (JSONL).")
@click.option("--target", "target_paths", multiple=True, required=True,
              type=click.Path(exists=True))
@click.option("--order", type=int, default=5, show_default=True)
@click.option("--no-normalize", is_flag=True,
              help="Report raw negative total log probability.")
@click.option("--output", required=True, type=click.Path())
@click.pass_obj
@_runtime_errors
def similarity_ppl(obj, train_path, target_paths, order, no_normalize, output):
    lm = similarity.train_char_lm(corpus.ingest([train_path], strict=obj["strict"]), order)
    result = {}
    for path in target_paths:
        docs = list(corpus.ingest([path], strict=obj["strict"]))
        langs = {d.lang for d in docs if d.lang}
        label = langs.pop() if len(langs) == 1 else os.path.basename(path)
        result[label] = similarity.log_ppl_per_word(lm, docs, normalize=not no_normalize)
    with open(output, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    click.echo(json.dumps(result, sort_keys=True))


@similarity_cmd.command("correlate")
@click.option("--metric", "metric_path", required=True, type=click.Path(exists=True),
              help="JSON map lang -> proxy value.")
@click.option("--uplift", "uplift_path", required=True, type=click.Path(exists=True),
              help="JSON map lang -> relative improvement.")
@click.option("--output", required=True, type=click.Path())
@click.option("--figure", type=click.Path(), default=None)
@click.pass_obj
@_runtime_errors
def similarity_correlate(obj, metric_path, uplift_path, output, figure):
    with open(metric_path, encoding="utf-8") as fh:
        metric = json.load(fh)
    with open(uplift_path, encoding="utf-8") as fh:
        uplift = json.load(fh)
    langs = sorted(set(metric) & set(uplift))
    r, p, n = similarity.pearson([metric[l] for l in langs], [uplift[l] for l in langs])
    result = {"r": r, "p": p, "n": n, "languages": langs}
    with open(output, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    if figure:
        from .plotting import render_similarity

        render_similarity(metric, uplift, figure)
    click.echo(json.dumps({"r": r, "p": p, "n": n}))


# ---------- analyze ----------

@main.group()
def analyze():
    """Compute-efficiency and evaluation analytics."""


@analyze.command("flops")
@click.option("--params", "n_params", type=float, default=None, help="Parameter count.")
@click.option("--tokens", "n_tokens", type=float, default=None, help="Training tokens.")
@click.option("--model-cards", type=click.Path(exists=True), default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@_runtime_errors
def analyze_flops(n_params, n_tokens, model_cards, csv_path):
    if model_cards:
        with open(model_cards, encoding="utf-8") as fh:
            cards = analytics.load_model_cards(fh)
        rows = [(c.model_id, c.params, c.tokens, c.flops) for c in cards]
        if csv_path:
            import csv as _csv

            with open(csv_path, "w", newline="", encoding="utf-8") as fh:
                w = _csv.writer(fh)
                w.writerow(["model_id", "params", "tokens", "flops"])
                w.writerows(rows)
        for row in rows:
            click.echo(f"{row[0]}\t{row[3]:.4g}")
    elif n_params is not None and n_tokens is not None:
        click.echo(f"{analytics.flops(n_params, n_tokens):.6g}")
    else:
        raise ConfigError("provide --params/--tokens or --model-cards")


@analyze.command("aggregate")
@click.option("--evals", required=True, type=click.Path(exists=True))
@click.option("--model", "model_id", required=True)
@click.option("--lang", default=None, help="One language; omit for all.")
@_runtime_errors
def analyze_aggregate(evals, model_id, lang):
    with open(evals, encoding="utf-8") as fh:
        records = analytics.load_eval_records(fh)
    langs = [lang] if lang else sorted({r.lang for r in records if r.model_id == model_id})
    for l in langs:
        click.echo(f"{model_id}\t{l}\t{analytics.aggregate(records, model_id, l):.6f}")


@analyze.command("pareto")
@click.option("--model-cards", required=True, type=click.Path(exists=True))
@click.option("--evals", required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path())
@click.option("--figure", type=click.Path(), default=None)
@click.pass_obj
@_runtime_errors
def analyze_pareto(obj, model_cards, evals, output, figure):
    params = {"model_cards": model_cards, "evals": evals, "output": output}
    if figure:
        params["figure"] = figure
    _run_op(obj, "analyze-pareto", params)


@analyze.command("improve")
@click.option("--evals", required=True, type=click.Path(exists=True))
@click.option("--base", "base_model", required=True)
@click.option("--new", "new_model", required=True)
@click.option("--langs", default=None, help="Comma-separated; default all shared.")
@_runtime_errors
def analyze_improve(evals, base_model, new_model, langs):
    with open(evals, encoding="utf-8") as fh:
        records = analytics.load_eval_records(fh)
    if langs:
        lang_list = langs.split(",")
    else:
        lang_list = sorted(
            {r.lang for r in records if r.model_id == base_model}
            & {r.lang for r in records if r.model_id == new_model}
        )
    table = analytics.improvement_table(records, base_model, new_model, lang_list)
    for lang, delta in sorted(table["per_lang"].items()):
        click.echo(f"{lang}\t{delta:+.4%}")
    click.echo(f"mean\t{table['mean']:+.4%}")


@analyze.command("efficiency")
@click.option("--input", "input_", required=True, type=click.Path(exists=True),
              help="JSONL {model_id, lang, lang_tokens, score}.")
@click.option("--csv", "csv_path", required=True, type=click.Path())
@click.option("--figure", type=click.Path(), default=None)
@_runtime_errors
def analyze_efficiency(input_, csv_path, figure):
    records = []
    with open(input_, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                records.append(analytics.DataEfficiencyRecord(
                    obj["model_id"], obj["lang"], float(obj["lang_tokens"]),
                    float(obj["score"])))
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        analytics.write_efficiency_csv(records, fh)
    if figure:
        from .plotting import render_efficiency

        render_efficiency(records, figure)
    click.echo(f"rows: {len(records)}")


# ---------- run / validate ----------

def _load_config(path: str | None, obj) -> tuple[dict, str]:
    path = path or obj.get("config")
    if not path:
        _fail(EXIT_CONFIG, "no config given (use --config or an argument)")
    if not os.path.exists(path):
        _fail(EXIT_CONFIG, f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh), os.path.dirname(os.path.abspath(path))
        except json.JSONDecodeError as exc:
            _fail(EXIT_CONFIG, f"config is not valid JSON: {exc}")


@main.command()
@click.argument("config_path", required=False, type=click.Path())
@click.option("--workdir", default="polycurate-run", show_default=True, type=click.Path())
@click.pass_obj
def run(obj, config_path, workdir):
    """Execute a pipeline config; writes outputs and report.json to WORKDIR."""
    raw, base_dir = _load_config(config_path, obj)
    diagnostics = pipeline.validate_config(raw, base_dir)
    if diagnostics:
        for d in diagnostics:
            click.echo(f"config error: {d}", err=True)
        sys.exit(EXIT_CONFIG)
    cfg = pipeline.PipelineConfig.from_obj(raw)
    if obj["seed"]:
        cfg.seed = obj["seed"]
    if obj["strict"]:
        cfg.strict = True
    try:
        report = pipeline.run(cfg, workdir, base_dir)
    except StageError as exc:
        _fail(EXIT_RUNTIME, str(exc))
    click.echo(f"ok: {len(report['stages'])} stages, report at {workdir}/report.json")


@main.command()
@click.argument("config_path", required=False, type=click.Path())
@click.pass_obj
def validate(obj, config_path):
    """Schema and cross-reference check of a pipeline config."""
    raw, base_dir = _load_config(config_path, obj)
    diagnostics = pipeline.validate_config(raw, base_dir)
    if diagnostics:
        for d in diagnostics:
            click.echo(d, err=True)
        sys.exit(EXIT_CONFIG)
    click.echo("ok")


if __name__ == "__main__":
    main()
