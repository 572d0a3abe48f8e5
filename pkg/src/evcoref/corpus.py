"""Mention-annotated corpus: documents, gold chains, topic splits, training labels.

The on-disk format is line-delimited UTF-8 with tab-separated fields:

    DOC <doc_id> <topic_id>
    TOK <index> <sentence_id> <word> <lemma>
    MEN <mention_id> <chain_id> <idx1[,idx2,...]>

Tokens and mentions attach to the most recent DOC line; lines starting
with ``#`` are comments. Chain ids are opaque strings, and a chain id
shared across documents denotes cross-document identity.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import ConfigError, IntegrityError, ParseError

CORPUS_FORMAT = "tsv"


@dataclass(frozen=True)
class Token:
    index: int
    word: str
    lemma: str
    sentence_id: int


@dataclass(frozen=True)
class Mention:
    """An action span inside one document plus its gold chain id."""

    id: str
    doc_id: str
    token_indices: tuple[int, ...]
    gold_chain: str

    @property
    def first_index(self) -> int:
        return self.token_indices[0]

    @property
    def last_index(self) -> int:
        return self.token_indices[-1]


@dataclass(frozen=True)
class Document:
    doc_id: str
    topic_id: str
    tokens: tuple[Token, ...]
    mentions: tuple[Mention, ...]

    def sentence_token_indices(self, sentence_id: int) -> list[int]:
        return [t.index for t in self.tokens if t.sentence_id == sentence_id]


@dataclass(frozen=True)
class Corpus:
    """Immutable document collection; safe to share across threads."""

    documents: tuple[Document, ...]

    def __post_init__(self):
        seen = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise IntegrityError(f"duplicate document id {doc.doc_id!r}")
            seen.add(doc.doc_id)

    def doc(self, doc_id: str) -> Document:
        return self._doc_index[doc_id]

    @property
    def _doc_index(self) -> dict:
        idx = self.__dict__.get("_doc_index_cache")
        if idx is None:
            idx = {d.doc_id: d for d in self.documents}
            object.__setattr__(self, "_doc_index_cache", idx)
        return idx

    def mentions(self) -> Iterator[Mention]:
        for doc in self.documents:
            yield from doc.mentions

    def mention_doc_map(self) -> dict[str, str]:
        return {m.id: m.doc_id for m in self.mentions()}

    def topic_ids(self) -> set[str]:
        return {d.topic_id for d in self.documents}

    def summary(self) -> dict:
        mentions = list(self.mentions())
        return {
            "documents": len(self.documents),
            "topics": len(self.topic_ids()),
            "tokens": sum(len(d.tokens) for d in self.documents),
            "mentions": len(mentions),
            "chains": len({m.gold_chain for m in mentions}),
        }


@dataclass(frozen=True)
class Clustering:
    """A partition of a mention set into chains (mention-id sets)."""

    chains: tuple[frozenset[str], ...]

    def __post_init__(self):
        seen: set[str] = set()
        for chain in self.chains:
            if not chain:
                raise IntegrityError("empty chain in clustering")
            if seen & chain:
                raise IntegrityError(
                    f"chains overlap on {sorted(seen & chain)[:3]}"
                )
            seen |= chain

    @classmethod
    def from_sets(cls, chains: Iterable[Iterable[str]]) -> "Clustering":
        return cls(tuple(frozenset(c) for c in chains))

    def mention_ids(self) -> frozenset[str]:
        out: set[str] = set()
        for chain in self.chains:
            out |= chain
        return frozenset(out)

    def chain_of(self) -> dict[str, frozenset[str]]:
        return {m: chain for chain in self.chains for m in chain}

    def sorted_chains(self) -> list[list[str]]:
        """Chains ordered by smallest member id, members sorted."""
        return sorted((sorted(c) for c in self.chains), key=lambda c: c[0])


@dataclass(frozen=True)
class LabelScheme:
    """Training classes: one per multi-mention train chain, plus one shared
    class for all singletons."""

    class_of_chain: dict[str, int]
    singleton_class: int

    @property
    def n_classes(self) -> int:
        return self.singleton_class + 1

    def class_of(self, mention: Mention) -> int:
        return self.class_of_chain.get(mention.gold_chain, self.singleton_class)


class _DocBuilder:
    def __init__(self, doc_id: str, topic_id: str):
        self.doc_id = doc_id
        self.topic_id = topic_id
        self.tokens: list[Token] = []
        self.mentions: list[Mention] = []

    def finish(self) -> Document:
        tokens = sorted(self.tokens, key=lambda t: t.index)
        indices = [t.index for t in tokens]
        if indices != list(range(len(tokens))):
            raise IntegrityError(
                f"document {self.doc_id!r}: token indices not contiguous from 0"
            )
        for m in self.mentions:
            bad = [i for i in m.token_indices if i < 0 or i >= len(tokens)]
            if bad:
                raise IntegrityError(
                    f"mention {m.id!r} references missing token index {bad[0]} "
                    f"in document {self.doc_id!r} ({len(tokens)} tokens)"
                )
        mentions = sorted(self.mentions, key=lambda m: m.first_index)
        return Document(self.doc_id, self.topic_id, tuple(tokens), tuple(mentions))


def load_corpus(path, fmt: str = CORPUS_FORMAT) -> Corpus:
    """Parse a corpus file. Deterministic; raises ParseError with the line
    number for malformed records and IntegrityError for invariant breaks."""
    if fmt != CORPUS_FORMAT:
        raise ConfigError(f"unknown corpus format {fmt!r}")
    with open(path, encoding="utf-8") as handle:
        return _parse(handle, path)


def loads_corpus(text: str, name: str = "<string>") -> Corpus:
    return _parse(io.StringIO(text), name)


def _parse(handle, path) -> Corpus:
    docs: list[Document] = []
    builder: _DocBuilder | None = None
    mention_ids: set[str] = set()

    for line_no, raw in enumerate(handle, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        kind = fields[0]

        if kind == "DOC":
            if len(fields) != 3:
                raise ParseError(path, line_no, "DOC record needs doc_id and topic_id")
            if builder is not None:
                docs.append(builder.finish())
            doc_id, topic_id = fields[1], fields[2]
            if not doc_id or not topic_id:
                raise ParseError(path, line_no, "empty doc_id or topic_id")
            builder = _DocBuilder(doc_id, topic_id)

        elif kind == "TOK":
            if builder is None:
                raise ParseError(path, line_no, "TOK record before any DOC")
            if len(fields) != 5:
                raise ParseError(path, line_no, "TOK record needs index, sentence_id, word, lemma")
            try:
                index = int(fields[1])
                sentence_id = int(fields[2])
            except ValueError:
                raise ParseError(path, line_no, "non-integer token index or sentence id")
            word, lemma = fields[3], fields[4]
            if not lemma:
                raise ParseError(path, line_no, "empty lemma")
            builder.tokens.append(Token(index, word, lemma, sentence_id))

        elif kind == "MEN":
            if builder is None:
                raise ParseError(path, line_no, "MEN record before any DOC")
            if len(fields) != 4:
                raise ParseError(path, line_no, "MEN record needs mention_id, chain_id, indices")
            mention_id, chain_id, idx_field = fields[1], fields[2], fields[3]
            if not mention_id or not chain_id:
                raise ParseError(path, line_no, "empty mention_id or chain_id")
            try:
                indices = tuple(int(p) for p in idx_field.split(","))
            except ValueError:
                raise ParseError(path, line_no, f"bad token index list {idx_field!r}")
            if not indices or any(b <= a for a, b in zip(indices, indices[1:])):
                raise ParseError(path, line_no, "token indices must be nonempty and ascending")
            if mention_id in mention_ids:
                raise IntegrityError(f"duplicate mention id {mention_id!r}")
            mention_ids.add(mention_id)
            builder.mentions.append(
                Mention(mention_id, builder.doc_id, indices, chain_id)
            )

        else:
            raise ParseError(path, line_no, f"unknown record kind {kind!r}")

    if builder is not None:
        docs.append(builder.finish())
    return Corpus(tuple(docs))


def save_corpus(corpus: Corpus, path) -> None:
    """Inverse of load_corpus: a saved corpus reloads identically."""
    with open(path, "w", encoding="utf-8") as out:
        for doc in corpus.documents:
            out.write(f"DOC\t{doc.doc_id}\t{doc.topic_id}\n")
            for t in doc.tokens:
                out.write(f"TOK\t{t.index}\t{t.sentence_id}\t{t.word}\t{t.lemma}\n")
            for m in doc.mentions:
                idx = ",".join(str(i) for i in m.token_indices)
                out.write(f"MEN\t{m.id}\t{m.gold_chain}\t{idx}\n")


def split_by_topics(
    corpus: Corpus,
    train: Iterable[str],
    validation: Iterable[str],
    test: Iterable[str],
) -> tuple[Corpus, Corpus, Corpus]:
    """Partition documents by topic id. Documents in none of the sets are
    dropped; overlapping sets are a configuration error."""
    train, validation, test = set(train), set(validation), set(test)
    overlap = (train & validation) | (train & test) | (validation & test)
    if overlap:
        raise ConfigError(f"topic sets overlap on {sorted(overlap)}")

    def pick(topics: set[str]) -> Corpus:
        return Corpus(tuple(d for d in corpus.documents if d.topic_id in topics))

    return pick(train), pick(validation), pick(test)


def ecbplus_default_split() -> tuple[set[str], set[str], set[str]]:
    """Standard ECB+ configuration: topics 1-35 train (minus the 8
    validation topics), 36-45 test."""
    validation = {"2", "5", "12", "18", "21", "23", "34", "35"}
    train = {str(t) for t in range(1, 36)} - validation
    test = {str(t) for t in range(36, 46)}
    return train, validation, test


def build_label_scheme(train: Corpus) -> LabelScheme:
    """Map every multi-mention train chain to its own class (sorted by chain
    id) and all singletons to one merged trailing class."""
    sizes: dict[str, int] = {}
    for m in train.mentions():
        sizes[m.gold_chain] = sizes.get(m.gold_chain, 0) + 1
    if not sizes:
        raise IntegrityError("cannot build a label scheme from a corpus with no mentions")
    multi = sorted(chain for chain, n in sizes.items() if n >= 2)
    class_of_chain = {chain: i for i, chain in enumerate(multi)}
    return LabelScheme(class_of_chain=class_of_chain, singleton_class=len(multi))


def gold_clustering(corpus: Corpus) -> Clustering:
    """One chain per distinct gold chain id; singletons stay singleton."""
    chains: dict[str, set[str]] = {}
    for m in corpus.mentions():
        chains.setdefault(m.gold_chain, set()).add(m.id)
    return Clustering.from_sets(chains[k] for k in sorted(chains))
