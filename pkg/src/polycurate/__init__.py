"""Multilingual pretraining-data curation toolkit.

Streams JSONL corpora through quality filtering, language identification,
embedding-based curation, translation augmentation, and phase-curriculum
mixture planning, with analytics for compute efficiency and language
similarity.
"""

__version__ = "0.1.0"

SUPPORTED_LANGUAGES = (
    "ar", "bn", "de", "es", "fr", "hi", "id",
    "ja", "ko", "pt", "ru", "vi", "zh",
)
"""The 13 non-English target languages."""

ALL_LANGUAGES = ("en",) + SUPPORTED_LANGUAGES
"""Targets plus English."""
