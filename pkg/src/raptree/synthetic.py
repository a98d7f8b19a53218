"""Deterministic topical text corpora for offline runs and benchmarks."""

from __future__ import annotations

from pathlib import Path

import numpy as np

TOPICS: dict[str, list[str]] = {
    "astronomy": "galaxy nebula telescope orbit comet planet asteroid quasar stellar redshift "
    "supernova eclipse meteor cosmic gravity observatory spectrum photon lunar solar".split(),
    "cooking": "recipe saucepan garlic simmer oven butter flour dough roast spice "
    "marinade skillet pastry onion vinegar kitchen broth braise yeast caramel".split(),
    "finance": "portfolio dividend equity bond inflation interest market broker hedge "
    "liquidity credit mortgage yield capital revenue audit ledger asset pension".split(),
    "medicine": "patient diagnosis therapy vaccine clinical surgery antibody dosage symptom "
    "cardiac neuron tumor pharmacy immune infection hospital nurse chronic".split(),
    "sailing": "harbor mast keel rudder anchor voyage sailor tide compass hull "
    "starboard galley regatta mooring nautical squall buoy jib".split(),
    "music": "melody chord rhythm violin orchestra tempo harmony soprano concerto "
    "guitar piano lyric symphony drummer opera ballad acoustic choir".split(),
    "geology": "basalt granite volcano sediment fossil tectonic magma erosion quartz "
    "glacier canyon mineral fault crystal strata lava boulder".split(),
    "software": "compiler database algorithm kernel debugger python server module "
    "function variable thread network protocol cache runtime syntax".split(),
}

FILLER = (
    "the a of and to in that is was for with as on by this from which also "
    "their has had were been into more most some such these those about"
).split()


SYLLABLES = "ka lo mi ren tor vash qui zel bran dor fex gim hul jor nax pyr sol tev".split()


def _entity_words(rng: np.random.Generator, count: int) -> list[str]:
    return [
        "".join(SYLLABLES[int(rng.integers(len(SYLLABLES)))] for _ in range(3))
        for _ in range(count)
    ]


def _sentence(rng: np.random.Generator, vocab: list[str], entities: list[str]) -> str:
    length = int(rng.integers(8, 17))
    words = []
    for _ in range(length):
        r = rng.random()
        if r < 0.2 and entities:
            pool = entities
        elif r < 0.6:
            pool = vocab
        else:
            pool = FILLER
        words.append(pool[int(rng.integers(len(pool)))])
    words[0] = words[0].capitalize()
    tail = "." if rng.random() < 0.85 else "!"
    return " ".join(words) + tail


def synthetic_document(topic: str, n_sentences: int, seed: int) -> str:
    """Paragraphs of topic words, filler, and a handful of document-specific names."""
    rng = np.random.default_rng([seed, sum(map(ord, topic))])
    vocab = TOPICS[topic]
    entities = _entity_words(rng, 6)
    paragraphs = []
    remaining = n_sentences
    while remaining > 0:
        k = min(remaining, int(rng.integers(3, 7)))
        paragraphs.append(" ".join(_sentence(rng, vocab, entities) for _ in range(k)))
        remaining -= k
    return "\n\n".join(paragraphs) + "\n"


def synthetic_corpus(
    n_docs: int, sentences_per_doc: int = 60, seed: int = 0
) -> list[tuple[str, str]]:
    """(doc_id, text) pairs; documents cycle through the topics in order."""
    topics = sorted(TOPICS)
    docs = []
    for i in range(n_docs):
        topic = topics[i % len(topics)]
        docs.append((f"doc{i:03d}_{topic}.txt", synthetic_document(topic, sentences_per_doc, seed * 100003 + i)))
    return docs


def write_corpus(docs: list[tuple[str, str]], root: str | Path) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for doc_id, text in docs:
        path = root / doc_id
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return root
