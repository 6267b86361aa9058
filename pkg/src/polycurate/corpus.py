"""Canonical JSONL corpus I/O, token counting, and inventory statistics."""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator


class CorpusError(Exception):
    """Raised on malformed corpus input in strict mode."""


class RecordError(CorpusError):
    """A single malformed record, with file/line context."""

    def __init__(self, message: str, path: str = "", line_no: int = 0):
        super().__init__(f"{path}:{line_no}: {message}" if path else message)
        self.path = path
        self.line_no = line_no


@dataclass
class Document:
    """One text record with identity, language label, and provenance."""

    id: str
    text: str
    lang: str | None = None
    source: str = ""
    provenance: list[str] = field(default_factory=list)
    meta: dict[str, str] = field(default_factory=dict)

    def with_provenance(self, *tags: str) -> "Document":
        return Document(
            id=self.id,
            text=self.text,
            lang=self.lang,
            source=self.source,
            provenance=self.provenance + list(tags),
            meta=dict(self.meta),
        )

    def to_json(self) -> str:
        # Canonical form: fixed key order, compact separators, raw unicode.
        obj = {
            "id": self.id,
            "text": self.text,
            "lang": self.lang,
            "source": self.source,
            "provenance": self.provenance,
            "meta": self.meta,
        }
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_obj(cls, obj: dict, lang_default: str | None = None) -> "Document":
        doc_id = obj.get("id")
        text = obj.get("text")
        if not isinstance(doc_id, str) or not doc_id:
            raise ValueError("missing or empty 'id'")
        if not isinstance(text, str):
            raise ValueError("missing 'text'")
        lang = obj.get("lang")
        if lang is None:
            lang = lang_default
        return cls(
            id=doc_id,
            text=text,
            lang=lang,
            source=obj.get("source", ""),
            provenance=list(obj.get("provenance", [])),
            meta=dict(obj.get("meta", {})),
        )


@dataclass(frozen=True)
class TokenizerSpec:
    """Deterministic, pluggable token counting.

    kind: "whitespace-punct" (default), "unicode-word", or
    "external-count-field" (reads a precomputed count from doc.meta).
    """

    kind: str = "whitespace-punct"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("whitespace-punct", "unicode-word", "external-count-field"):
            raise ValueError(f"unknown tokenizer kind: {self.kind}")
        if self.kind == "external-count-field" and "field" not in self.params:
            raise ValueError("external-count-field tokenizer requires params['field']")


def _is_punct_only(fragment: str) -> bool:
    return all(unicodedata.category(c).startswith("P") for c in fragment)


# CJK ideographs, kana, and hangul syllables each count as one token.
_CJK_RANGES = (
    (0x3040, 0x30FF),    # hiragana + katakana
    (0x31F0, 0x31FF),    # katakana phonetic extensions
    (0x3400, 0x4DBF),    # CJK ext A
    (0x4E00, 0x9FFF),    # CJK unified
    (0xAC00, 0xD7AF),    # hangul syllables
    (0xF900, 0xFAFF),    # CJK compatibility
    (0x20000, 0x2A6DF),  # CJK ext B
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def count_tokens(doc: Document, tok: TokenizerSpec = TokenizerSpec()) -> int:
    """Deterministic token count for one document under the given tokenizer."""
    if tok.kind == "external-count-field":
        key = tok.params["field"]
        if key not in doc.meta:
            raise CorpusError(f"doc {doc.id!r}: meta key {key!r} absent for external-count-field")
        return int(doc.meta[key])
    text = doc.text
    if tok.kind == "whitespace-punct":
        return sum(1 for frag in text.split() if not _is_punct_only(frag))
    # unicode-word: word runs split on non-word chars; CJK chars one token each
    count = 0
    in_word = False
    for ch in text:
        if _is_cjk(ch):
            count += 1
            in_word = False
        elif ch.isalnum() or ch == "_":
            if not in_word:
                count += 1
                in_word = True
        else:
            in_word = False
    return count


class CorpusInventory:
    """Document and token counts per (source, lang) under one tokenizer."""

    def __init__(self, tokenizer_id: str = "whitespace-punct"):
        self.tokenizer_id = tokenizer_id
        self._entries: dict[tuple[str, str], dict[str, int]] = {}

    def add(self, source: str, lang: str | None, doc_count: int, token_count: int) -> None:
        key = (source, lang or "")
        entry = self._entries.setdefault(key, {"document_count": 0, "token_count": 0})
        entry["document_count"] += doc_count
        entry["token_count"] += token_count

    def get(self, source: str, lang: str | None) -> dict[str, int]:
        return dict(self._entries.get((source, lang or ""), {"document_count": 0, "token_count": 0}))

    def entries(self) -> Iterator[tuple[str, str, int, int]]:
        for (source, lang) in sorted(self._entries):
            e = self._entries[(source, lang)]
            yield source, lang, e["document_count"], e["token_count"]

    def tokens_for_lang(self, lang: str) -> int:
        return sum(e["token_count"] for (s, l), e in self._entries.items() if l == lang)

    def sources_for_lang(self, lang: str) -> list[tuple[str, int]]:
        """(source, token_count) pairs for one language, sorted by source."""
        out = [(s, e["token_count"]) for (s, l), e in sorted(self._entries.items()) if l == lang]
        return out

    def merge(self, other: "CorpusInventory") -> "CorpusInventory":
        if other.tokenizer_id != self.tokenizer_id:
            raise CorpusError("cannot merge inventories built with different tokenizers")
        merged = CorpusInventory(self.tokenizer_id)
        for inv in (self, other):
            for source, lang, dc, tc in inv.entries():
                merged.add(source, lang, dc, tc)
        return merged

    def to_json(self) -> str:
        obj = {
            "tokenizer_id": self.tokenizer_id,
            "entries": {
                f"{source}/{lang}": {"document_count": dc, "token_count": tc}
                for source, lang, dc, tc in self.entries()
            },
        }
        return json.dumps(obj, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CorpusInventory":
        obj = json.loads(text)
        inv = cls(obj.get("tokenizer_id", "whitespace-punct"))
        for key, e in obj.get("entries", {}).items():
            source, _, lang = key.partition("/")
            inv.add(source, lang or None, e["document_count"], e["token_count"])
        return inv

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CorpusInventory)
            and self.tokenizer_id == other.tokenizer_id
            and self._entries == other._entries
        )


def ingest(
    paths: Iterable[str],
    lang_default: str | None = None,
    strict: bool = False,
    error_log: list | None = None,
) -> Iterator[Document]:
    """Stream Documents from JSONL files in file order.

    Malformed lines are skipped and counted (``error_log`` collects
    RecordErrors) unless ``strict``, in which case the first one aborts.
    Duplicate ids within one run are always an error.
    """
    seen: set[str] = set()
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            yield from _ingest_file(fh, path, lang_default, strict, error_log, seen)


def _ingest_file(fh: IO[str], path: str, lang_default, strict, error_log, seen) -> Iterator[Document]:
    for line_no, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("line is not a JSON object")
            doc = Document.from_obj(obj, lang_default)
        except (json.JSONDecodeError, ValueError) as exc:
            err = RecordError(str(exc), path, line_no)
            if strict:
                raise err from exc
            if error_log is not None:
                error_log.append(err)
            continue
        if doc.id in seen:
            raise RecordError(f"duplicate id {doc.id!r}", path, line_no)
        seen.add(doc.id)
        yield doc


def write_jsonl(docs: Iterable[Document], fh: IO[str]) -> int:
    """Write documents in canonical JSONL form; returns count written."""
    n = 0
    for doc in docs:
        fh.write(doc.to_json())
        fh.write("\n")
        n += 1
    return n


def build_inventory(docs: Iterable[Document], tok: TokenizerSpec = TokenizerSpec()) -> CorpusInventory:
    """Aggregate per-(source, lang) counts; result is order-independent."""
    inv = CorpusInventory(tok.kind)
    for doc in docs:
        inv.add(doc.source, doc.lang, 1, count_tokens(doc, tok))
    return inv
