import random

import pytest

from polycurate.corpus import Document

# Disjoint-alphabet synthetic "languages" for separability tests.
LATIN = "abcdefghijklmnopqrstuvwxyz"
CYRILLIC = "абвгдежзийклмнопрстуфхцчшщэюя"
GREEK = "αβγδεζηθικλμνξοπρστυφχψω"


def synth_text(alphabet: str, rng: random.Random, n_words: int = 40,
               word_len: tuple[int, int] = (2, 8)) -> str:
    words = []
    for _ in range(n_words):
        k = rng.randint(*word_len)
        words.append("".join(rng.choice(alphabet) for _ in range(k)))
    return " ".join(words)


def make_docs(alphabet: str, n: int, prefix: str, lang: str, seed: int = 0,
              n_words: int = 40) -> list[Document]:
    rng = random.Random(seed)
    return [
        Document(id=f"{prefix}-{i:04d}", text=synth_text(alphabet, rng, n_words), lang=lang)
        for i in range(n)
    ]


@pytest.fixture
def rng():
    return random.Random(12345)
