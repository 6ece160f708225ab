"""Synthetic corpus with planted lexical patterns.

Every sentence mentions two or three gene placeholders. The verb
``activates`` between two of them plants a directed Activation event
(left entity -> right entity); other verbs plant nothing. The patterns are
deterministic functions of a 3-token context around each entity, so a
context-window classifier can learn them. Useful for end-to-end checks and
for demoing the CLI without external data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import Corpus, TaskSchema, corpus_from_documents

SYNTH_SCHEMA = TaskSchema("synth", {"Activation": ("Activator", "Target")})

_FILLERS = [
    "the", "a", "in", "during", "growth", "phase", "cells", "we", "observed",
    "that", "protein", "levels", "were", "measured", "under", "stress",
    "conditions", "and", "also", "expression", "was", "clearly", "culture",
    "samples", "showed",
]

_NEGATIVE_VERBS = ["precedes", "follows", "resembles"]

_GENES = [f"gene{i:02d}" for i in range(40)]


def _sentence_words(rng: np.random.Generator) -> tuple[list[str], list[int], list[tuple[int, int]]]:
    """Word list, indices of entity words, and (source, target) event word pairs."""
    kind = rng.choice(["pos", "pos3", "neg"], p=[0.55, 0.15, 0.30])
    genes = [_GENES[i] for i in rng.choice(len(_GENES), size=3, replace=False)]
    lead = [_FILLERS[i] for i in rng.choice(len(_FILLERS), size=int(rng.integers(1, 5)))]
    tail = [_FILLERS[i] for i in rng.choice(len(_FILLERS), size=int(rng.integers(0, 4)))]

    words = list(lead)
    entity_at: list[int] = []
    events: list[tuple[int, int]] = []
    if kind in ("pos", "pos3"):
        a = len(words)
        words += [genes[0], "activates", genes[1]]
        b = len(words) - 1
        entity_at += [a, b]
        events.append((a, b))
        if kind == "pos3":
            words.append("near")
            entity_at.append(len(words))
            words.append(genes[2])
    else:
        a = len(words)
        verb = _NEGATIVE_VERBS[int(rng.integers(0, len(_NEGATIVE_VERBS)))]
        words += [genes[0], verb, genes[1]]
        entity_at += [a, len(words) - 1]
    words += tail
    return words, entity_at, events


def generate_documents(n_sentences: int = 500, seed: int = 0):
    """(doc_id, text, a1, a2) tuples, one single-sentence document each."""
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n_sentences):
        words, entity_at, events = _sentence_words(rng)
        offsets = []
        pos = 0
        pieces = []
        for j, word in enumerate(words):
            pieces.append(word)
            offsets.append((pos, pos + len(word)))
            pos += len(word) + 1
        text = " ".join(pieces).rstrip() + "."

        a1_lines = []
        tid_of = {}
        for n, widx in enumerate(entity_at, start=1):
            s, e = offsets[widx]
            tid_of[widx] = f"T{n}"
            a1_lines.append(f"T{n}\tGene {s} {e}\t{words[widx]}")
        a2_lines = []
        for n, (src, tgt) in enumerate(events, start=1):
            a2_lines.append(
                f"R{n}\tActivation Activator:{tid_of[src]} Target:{tid_of[tgt]}"
            )
        docs.append(
            (
                f"SYN{i:04d}",
                text,
                "".join(line + "\n" for line in a1_lines),
                "".join(line + "\n" for line in a2_lines),
            )
        )
    return docs


def make_synthetic_corpus(n_sentences: int = 500, seed: int = 0) -> Corpus:
    items = [
        (doc_id, text, a1, a2, None, None)
        for doc_id, text, a1, a2 in generate_documents(n_sentences, seed)
    ]
    return corpus_from_documents(items, SYNTH_SCHEMA)


def write_synthetic_corpus(directory, n_sentences: int = 500, seed: int = 0) -> Path:
    """Materialize the synthetic corpus as .txt/.a1/.a2 files plus schema.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for doc_id, text, a1, a2 in generate_documents(n_sentences, seed):
        (directory / f"{doc_id}.txt").write_text(text, encoding="utf-8")
        (directory / f"{doc_id}.a1").write_text(a1, encoding="utf-8")
        (directory / f"{doc_id}.a2").write_text(a2, encoding="utf-8")
    schema_path = directory / "schema.json"
    schema_path.write_text(
        '{"name": "synth", "events": {"Activation": ["Activator", "Target"]}}\n',
        encoding="utf-8",
    )
    return schema_path
