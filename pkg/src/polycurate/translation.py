"""Translation-augmentation pipeline.

Selects English source documents (randomly or by quality score) and
drives an external translator to emit target-language documents with
full provenance. The translator itself is a pluggable contract; a mock
ships for tests.
"""

from __future__ import annotations

import json
import math
import random
import subprocess
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import requests

from .corpus import Document
from .quality import ScoreRecord, filter_top

STRATEGY_RANDOM = "random"
STRATEGY_SCORED = "scored"


class TranslationError(Exception):
    pass


@dataclass(frozen=True)
class TranslationJob:
    source_doc_id: str
    source_lang: str
    target_lang: str
    strategy: str
    score: float | None = None

    def __post_init__(self):
        if self.strategy == STRATEGY_SCORED and self.score is None:
            raise TranslationError("scored strategy requires a score")


def select_sources(
    docs: Iterable[Document],
    strategy: str,
    fraction: float,
    target_lang: str,
    scores: Iterable[ScoreRecord] | None = None,
    seed: int = 0,
) -> list[TranslationJob]:
    """Build translation jobs for ceil(f*N) English source documents.

    Random mode samples uniformly without replacement (seeded); scored
    mode keeps the top fraction by quality score, sharing the
    quality-filter code path.
    """
    doc_list = list(docs)
    if strategy == STRATEGY_SCORED:
        if scores is None:
            raise TranslationError("scored strategy requires scores")
        score_list = list(scores)
        by_id = {r.doc_id: r.score for r in score_list}
        kept = filter_top(doc_list, score_list, keep_fraction=fraction)
        return [
            TranslationJob(d.id, "en", target_lang, STRATEGY_SCORED, score=by_id[d.id])
            for d in kept
        ]
    if strategy == STRATEGY_RANDOM:
        n_keep = math.ceil(fraction * len(doc_list))
        rng = random.Random(seed)
        chosen = set(rng.sample(range(len(doc_list)), n_keep))
        return [
            TranslationJob(d.id, "en", target_lang, STRATEGY_RANDOM)
            for i, d in enumerate(doc_list)
            if i in chosen
        ]
    raise TranslationError(f"unknown strategy {strategy!r}")


class MockTranslator:
    """Identity translator with an optional marker prefix; test double.

    ``fail_ids`` simulates per-document translator failures by returning
    an empty string for those source ids.
    """

    def __init__(self, prefix: str = "", fail_ids: set[str] | None = None):
        self.prefix = prefix
        self.fail_ids = fail_ids or set()

    def translate(self, doc_id: str, text: str, source_lang: str, target_lang: str) -> str:
        if doc_id in self.fail_ids:
            return ""
        return self.prefix + text


class SubprocessTranslator:
    """JSONL request per line {"id","text","source_lang","target_lang"}
    -> JSONL {"id","text"} on stdout."""

    def __init__(self, argv: Sequence[str]):
        self.argv = list(argv)

    def translate_batch(self, jobs: list[tuple[str, str, str, str]]) -> dict[str, str]:
        payload = "".join(
            json.dumps(
                {"id": i, "text": t, "source_lang": s, "target_lang": g},
                ensure_ascii=False,
            )
            + "\n"
            for i, t, s, g in jobs
        )
        proc = subprocess.run(self.argv, input=payload, capture_output=True, text=True)
        if proc.returncode != 0:
            raise TranslationError(f"translator exited {proc.returncode}: {proc.stderr[:500]}")
        out = {}
        for line in proc.stdout.splitlines():
            if line.strip():
                obj = json.loads(line)
                out[obj["id"]] = obj["text"]
        return out

    def translate(self, doc_id: str, text: str, source_lang: str, target_lang: str) -> str:
        result = self.translate_batch([(doc_id, text, source_lang, target_lang)])
        if doc_id not in result:
            raise TranslationError(f"translator omitted job {doc_id!r}")
        return result[doc_id]


class HttpTranslator:
    """POST /translate {"text","source_lang","target_lang"} -> {"text"}."""

    def __init__(self, base_url: str, timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def translate(self, doc_id: str, text: str, source_lang: str, target_lang: str) -> str:
        resp = requests.post(
            f"{self.base_url}/translate",
            json={"text": text, "source_lang": source_lang, "target_lang": target_lang},
            timeout=self.timeout,
        )
        if not resp.ok:
            raise TranslationError(f"translator HTTP {resp.status_code} for job {doc_id!r}")
        return resp.json()["text"]


@dataclass
class TranslationReport:
    attempted: int = 0
    succeeded: int = 0
    failed_ids: list[str] = None

    def __post_init__(self):
        if self.failed_ids is None:
            self.failed_ids = []


def translate(
    jobs: Iterable[TranslationJob],
    docs_by_id: dict[str, Document],
    translator,
    strict: bool = False,
    retries: int = 2,
    report: TranslationReport | None = None,
    log: Callable[[str], None] | None = None,
) -> Iterator[Document]:
    """Run translation jobs in order, emitting target-language documents.

    Empty translations count as failures; failures are skipped and
    summarized (strict mode aborts instead). Retries are safe because a
    job is a pure request.
    """
    for job in jobs:
        if report is not None:
            report.attempted += 1
        src = docs_by_id.get(job.source_doc_id)
        if src is None:
            raise TranslationError(f"source doc {job.source_doc_id!r} not resolvable")
        translated = ""
        last_err = None
        for _ in range(retries + 1):
            try:
                translated = translator.translate(
                    job.source_doc_id, src.text, job.source_lang, job.target_lang
                )
                last_err = None
            except TranslationError as exc:
                last_err = exc
                continue
            break
        if last_err is not None or not translated:
            if strict:
                raise last_err or TranslationError(
                    f"empty translation for job {job.source_doc_id!r}"
                )
            if report is not None:
                report.failed_ids.append(job.source_doc_id)
            if log is not None:
                log(f"translation failed for {job.source_doc_id}")
            continue
        if report is not None:
            report.succeeded += 1
        yield Document(
            id=f"{job.source_doc_id}::tr::{job.target_lang}",
            text=translated,
            lang=job.target_lang,
            source=src.source,
            provenance=src.provenance
            + [f"translated-from:{job.source_lang}", f"strategy:{job.strategy}"],
            meta=dict(src.meta),
        )
