"""Phase-curriculum mixture planning and materialization.

Turns a phase-structured plan (token budget + multilingual fraction per
phase) plus a corpus inventory into exact integer token allocations per
(phase, source, lang), with largest-remainder rounding, repetition
capping with proportional redistribution, and seeded deterministic
sampling.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

from .corpus import CorpusInventory, Document, TokenizerSpec, count_tokens

GENERAL_STREAM = "general"


class MixtureError(Exception):
    pass


@dataclass(frozen=True)
class PhaseSpec:
    name: str
    tokens: int
    multilingual_fraction: float

    def __post_init__(self):
        if self.tokens <= 0:
            raise MixtureError(f"phase {self.name!r}: tokens must be positive")
        if not (0.0 <= self.multilingual_fraction <= 1.0):
            raise MixtureError(f"phase {self.name!r}: multilingual_fraction outside [0, 1]")


@dataclass
class MixturePlan:
    phases: list[PhaseSpec]
    languages: list[str]
    language_weights: dict[str, float]
    repetition_cap: float = 4.0
    seed: int = 0
    general_lang: str = "en"

    def __post_init__(self):
        if not self.phases:
            raise MixtureError("plan needs at least one phase")
        total_w = sum(self.language_weights.get(l, 0.0) for l in self.languages)
        if abs(total_w - 1.0) > 1e-9:
            raise MixtureError(f"language weights sum to {total_w}, expected 1")
        if self.repetition_cap < 1:
            raise MixtureError("repetition_cap must be >= 1")

    @classmethod
    def uniform(cls, phases: Sequence[PhaseSpec], languages: Sequence[str], **kw) -> "MixturePlan":
        n = len(languages)
        weights = {l: 1.0 / n for l in languages}
        # nudge the last weight so the sum is exactly 1
        weights[languages[-1]] = 1.0 - sum(weights[l] for l in languages[:-1])
        return cls(phases=list(phases), languages=list(languages), language_weights=weights, **kw)

    @classmethod
    def from_config(cls, obj: dict) -> "MixturePlan":
        phases = [
            PhaseSpec(p["name"], int(p["tokens"]), float(p["multilingual_fraction"]))
            for p in obj["phases"]
        ]
        languages = list(obj["languages"])
        weights = obj.get("language_weights")
        kw = dict(
            repetition_cap=float(obj.get("repetition_cap", 4.0)),
            seed=int(obj.get("seed", 0)),
            general_lang=obj.get("general_lang", "en"),
        )
        if weights is None:
            return cls.uniform(phases, languages, **kw)
        return cls(phases=phases, languages=languages,
                   language_weights={k: float(v) for k, v in weights.items()}, **kw)


def overall_fraction(plan: MixturePlan) -> float:
    """Token-weighted mean multilingual fraction across phases."""
    total = sum(p.tokens for p in plan.phases)
    return sum(p.tokens * p.multilingual_fraction for p in plan.phases) / total


def bilingual_plan(total: int, ratio: float, target_lang: str, seed: int = 0) -> MixturePlan:
    """Single-phase two-stream plan: (1-ratio) general + ratio target."""
    if not (0.0 < ratio < 1.0):
        raise MixtureError("ratio must be in (0, 1)")
    return MixturePlan(
        phases=[PhaseSpec("bilingual", total, ratio)],
        languages=[target_lang],
        language_weights={target_lang: 1.0},
        seed=seed,
    )


def largest_remainder(total: int, weights: dict[str, float]) -> dict[str, int]:
    """Apportion ``total`` integer units by weight; exact conservation.

    Each allocation differs from its exact real share by < 1 unit.
    Remainder ties break by ascending key.
    """
    wsum = sum(weights.values())
    if total < 0 or wsum <= 0:
        raise MixtureError("invalid apportionment input")
    quotas = {k: total * w / wsum for k, w in weights.items()}
    alloc = {k: math.floor(q) for k, q in quotas.items()}
    short = total - sum(alloc.values())
    by_frac = sorted(weights, key=lambda k: (-(quotas[k] - alloc[k]), k))
    for k in by_frac[:short]:
        alloc[k] += 1
    return alloc


@dataclass
class ManifestEntry:
    phase: str
    source: str
    lang: str
    target_tokens: int
    epochs_used: float
    sample_seed: int


@dataclass
class SamplingManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    deficits: dict[str, int] = field(default_factory=dict)  # phase -> unassignable tokens
    seed: int = 0
    repetition_cap: float = 4.0

    def phase_total(self, phase: str) -> int:
        return sum(e.target_tokens for e in self.entries if e.phase == phase)

    def lang_total(self, lang: str) -> int:
        return sum(e.target_tokens for e in self.entries if e.lang == lang)

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "repetition_cap": self.repetition_cap,
                "deficits": dict(sorted(self.deficits.items())),
                "entries": [
                    {
                        "phase": e.phase,
                        "source": e.source,
                        "lang": e.lang,
                        "target_tokens": e.target_tokens,
                        "epochs_used": e.epochs_used,
                        "sample_seed": e.sample_seed,
                    }
                    for e in self.entries
                ],
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SamplingManifest":
        obj = json.loads(text)
        m = cls(seed=obj["seed"], repetition_cap=obj["repetition_cap"],
                deficits=dict(obj.get("deficits", {})))
        for e in obj["entries"]:
            m.entries.append(ManifestEntry(**e))
        return m


def _entry_seed(global_seed: int, phase: str, source: str, lang: str) -> int:
    digest = hashlib.sha256(f"{global_seed}|{phase}|{source}|{lang}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _apportion_capped(
    budget: int,
    weights: dict[str, float],
    cap_tokens: dict[str, int],
) -> tuple[dict[str, int], int]:
    """Largest-remainder apportionment under per-key token caps.

    Capped keys are fixed at their cap and the shortfall is redistributed
    proportionally among uncapped keys, iterating to a fixpoint. Returns
    (allocations, unassignable deficit).
    """
    active = {k: w for k, w in weights.items() if w > 0}
    fixed: dict[str, int] = {k: 0 for k in weights if weights[k] <= 0}
    remaining = budget
    while active and remaining > 0:
        alloc = largest_remainder(remaining, active)
        over = [k for k in active if alloc[k] > cap_tokens[k]]
        if not over:
            fixed.update(alloc)
            remaining = 0
            break
        for k in over:
            fixed[k] = cap_tokens[k]
            remaining -= cap_tokens[k]
            del active[k]
    else:
        for k in active:
            fixed.setdefault(k, 0)
    deficit = budget - sum(fixed.values())
    return fixed, deficit


def plan(mix: MixturePlan, inventory: CorpusInventory, strict: bool = False) -> SamplingManifest:
    """Resolve a plan against an inventory into a concrete manifest."""
    for lang in mix.languages + [mix.general_lang]:
        if inventory.tokens_for_lang(lang) <= 0:
            raise MixtureError(f"inventory has no tokens for language {lang!r}")

    manifest = SamplingManifest(seed=mix.seed, repetition_cap=mix.repetition_cap)
    cap = mix.repetition_cap
    weights = {l: mix.language_weights.get(l, 0.0) for l in mix.languages}
    # Cumulative apportionment keeps every language's running total within
    # one token of its exact share across the whole curriculum; rounding
    # phases independently would let remainder ties drift by one token per
    # phase for the same language.
    cum_budget = 0
    cum_alloc = {l: 0 for l in mix.languages}
    for phase in mix.phases:
        multi = int(round(phase.tokens * phase.multilingual_fraction))
        general = phase.tokens - multi

        caps = {l: math.floor(cap * inventory.tokens_for_lang(l)) for l in mix.languages}
        cum_next = largest_remainder(cum_budget + multi, weights) if sum(weights.values()) > 0 else dict(cum_alloc)
        ideal = {l: cum_next[l] - cum_alloc[l] for l in mix.languages}
        if all(0 <= ideal[l] <= caps[l] for l in mix.languages):
            lang_alloc, deficit = ideal, 0
            cum_alloc = cum_next
        else:
            lang_alloc, deficit = _apportion_capped(multi, weights, caps)
            for l in mix.languages:
                cum_alloc[l] += lang_alloc.get(l, 0)
        cum_budget += multi

        general_cap = math.floor(cap * inventory.tokens_for_lang(mix.general_lang))
        general_assigned = min(general, general_cap)
        deficit += general - general_assigned

        if deficit > 0 and strict:
            capped = sorted(l for l in mix.languages if lang_alloc.get(l, 0) >= caps[l] > 0)
            raise MixtureError(
                f"phase {phase.name!r}: deficit of {deficit} tokens; capped languages: {capped}"
            )
        if deficit > 0:
            manifest.deficits[phase.name] = deficit

        stream_alloc = dict(lang_alloc)
        stream_alloc[mix.general_lang] = stream_alloc.get(mix.general_lang, 0) + general_assigned
        for lang in sorted(stream_alloc):
            lang_tokens = stream_alloc[lang]
            if lang_tokens <= 0:
                continue
            sources = inventory.sources_for_lang(lang)
            avail = sum(t for _, t in sources)
            per_source = largest_remainder(lang_tokens, {s: float(t) for s, t in sources})
            for source, source_avail in sources:
                target = per_source[source]
                if target <= 0:
                    continue
                manifest.entries.append(
                    ManifestEntry(
                        phase=phase.name,
                        source=source,
                        lang=lang,
                        target_tokens=target,
                        epochs_used=target / source_avail,
                        sample_seed=_entry_seed(mix.seed, phase.name, source, lang),
                    )
                )
            assert sum(per_source.values()) == lang_tokens
            assert avail > 0
    return manifest


@dataclass
class BuildReport:
    rows: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows}, indent=2, sort_keys=True)


StoreFn = Callable[[str, str], Sequence[Document]]


def build(
    manifest: SamplingManifest,
    store: StoreFn,
    tok: TokenizerSpec = TokenizerSpec(),
    report: BuildReport | None = None,
) -> Iterator[Document]:
    """Materialize a manifest into a document stream.

    Entries are emitted in manifest order; within an entry documents are
    drawn in a seeded shuffled order, re-shuffled per epoch, until the
    realized token count first reaches the target (last doc may
    overshoot). Docs past the first epoch carry provenance "epoch:k".
    """
    for entry in manifest.entries:
        docs = list(store(entry.source, entry.lang))
        if not docs:
            raise MixtureError(f"store empty for ({entry.source!r}, {entry.lang!r})")
        rng = random.Random(entry.sample_seed)
        realized = 0
        emitted = 0
        epoch = 1
        done = entry.target_tokens <= 0
        while not done:
            order = list(range(len(docs)))
            rng.shuffle(order)
            for i in order:
                doc = docs[i]
                doc_out = doc.with_provenance(f"epoch:{epoch}") if epoch > 1 else doc
                realized += count_tokens(doc, tok)
                emitted += 1
                yield doc_out
                if realized >= entry.target_tokens:
                    done = True
                    break
            if done:
                break
            epoch += 1
            if epoch > math.ceil(manifest.repetition_cap) + 1:
                # safety valve: zero-token stores would loop forever
                raise MixtureError(
                    f"cannot reach target for ({entry.source!r}, {entry.lang!r}); "
                    "store yields no tokens"
                )
        if report is not None:
            report.rows.append(
                {
                    "phase": entry.phase,
                    "source": entry.source,
                    "lang": entry.lang,
                    "target_tokens": entry.target_tokens,
                    "realized_tokens": realized,
                    "overshoot": max(0, realized - entry.target_tokens),
                    "docs_emitted": emitted,
                    "epochs_used": epoch if entry.target_tokens > 0 else 0,
                }
            )
