"""Synthetic desk-scale corpus generator for end-to-end tests.

Every chain lives inside one topic and owns a signal word drawn from a global
pool that is shared across topics, so held-out-topic mentions still carry
in-vocabulary evidence. A mention's span token is its chain's signal word
with probability `p_signal`, otherwise a globally shared confuser; context
tokens mix topic words and fillers. Chain identity is therefore a
combination of span word and document context: raw feature cosine clusters
it imperfectly (the bulk of the vector is context noise), while a trained
reweighting can do substantially better. Signal words are unique within each
of the train/validation/test topic bands, so clustering a band never has to
split two same-signal chains.
"""

from __future__ import annotations

import numpy as np


def _chain_counts(n_topics: int, n_chains: int) -> list[int]:
    base = n_chains // n_topics
    extra = n_chains - base * n_topics
    return [base + (1 if t < extra else 0) for t in range(n_topics)]


def generate(
    seed: int = 0,
    band_topics: tuple[int, int, int] = (9, 3, 3),
    docs_per_topic: int = 4,
    mentions_per_doc: int = 5,
    n_chains: int = 40,
    wv_dim: int = 8,
    p_signal: float = 0.95,
    p_two_token: float = 0.7,
    n_signals: int = 24,
    n_confusers: int = 3,
    n_context: int = 6,
    ctx_before: int = 4,
    ctx_after: int = 4,
):
    """Return (corpus_text, wordvec_text, stats). Topic ids are "1".."N" with
    the first band_topics[0] topics intended as train, then validation, then
    test."""
    rng = np.random.default_rng(seed)
    n_topics = sum(band_topics)
    counts = _chain_counts(n_topics, n_chains)
    signals = [f"sig{j}" for j in range(n_signals)]

    bands = []
    start = 0
    for width in band_topics:
        bands.append(list(range(start, start + width)))
        start += width

    chains_of_topic: dict[int, list] = {t: [] for t in range(n_topics)}
    chain_idx = 0
    for b, band in enumerate(bands):
        if b == 0:
            # train band: signals reused across topics (distinct within one),
            # teaching that chain identity combines span word and document
            band_signals = np.concatenate(
                [rng.choice(n_signals, size=counts[t], replace=False) for t in band]
            )
        else:
            # held-out bands: unique signals so clustering the band never has
            # to split two same-signal chains
            band_chains = sum(counts[t] for t in band)
            if band_chains > n_signals:
                raise ValueError("signal pool too small for band uniqueness")
            band_signals = rng.choice(n_signals, size=band_chains, replace=False)
        k = 0
        for t in band:
            for _ in range(counts[t]):
                chain_id = f"ch{chain_idx:03d}"
                chains_of_topic[t].append((chain_id, signals[band_signals[k]]))
                chain_idx += 1
                k += 1

    confusers = [f"conf{j}" for j in range(n_confusers)]
    # context/filler pools are global: informative for nothing, so a good
    # representation learns to suppress them on any topic
    context = [f"ctx{j}" for j in range(n_context)]
    fillers = [f"fill{j}" for j in range(12)]

    lines = []
    mention_counter = 0
    chain_sizes: dict[str, int] = {}
    for t in range(n_topics):
        topic_chains = chains_of_topic[t]
        for d in range(docs_per_topic):
            doc_id = f"t{t}d{d}"
            lines.append(f"DOC\t{doc_id}\t{t + 1}")
            tok_lines = []
            men_lines = []
            idx = 0
            for s in range(mentions_per_doc):
                chain_id, signal = topic_chains[int(rng.integers(len(topic_chains)))]
                if rng.random() < p_signal:
                    head_word = signal
                else:
                    head_word = confusers[int(rng.integers(n_confusers))]
                # the head (last span token) carries the signal; a generic
                # confuser prefix half the time splits the span evidence
                span_words = [head_word]
                if rng.random() < p_two_token:
                    span_words = [confusers[int(rng.integers(n_confusers))], head_word]

                def noise_word():
                    if rng.random() < 0.75:
                        return context[int(rng.integers(n_context))]
                    return fillers[int(rng.integers(len(fillers)))]

                words = [noise_word() for _ in range(ctx_before)]
                span_idx = list(range(idx + ctx_before, idx + ctx_before + len(span_words)))
                words.extend(span_words)
                words.extend(noise_word() for _ in range(ctx_after))
                for w in words:
                    tok_lines.append(f"TOK\t{idx}\t{s}\t{w}\t{w}")
                    idx += 1
                men_lines.append(
                    f"MEN\tm{mention_counter:04d}\t{chain_id}\t"
                    + ",".join(str(i) for i in span_idx)
                )
                chain_sizes[chain_id] = chain_sizes.get(chain_id, 0) + 1
                mention_counter += 1
            lines.extend(tok_lines)
            lines.extend(men_lines)

    vocab = sorted({line.split("\t")[3] for line in lines if line.startswith("TOK")})
    vec_lines = [f"{len(vocab)} {wv_dim}"]
    for word in vocab:
        vec = rng.normal(size=wv_dim)
        vec_lines.append(word + " " + " ".join(f"{v:.6f}" for v in vec))

    stats = {
        "documents": n_topics * docs_per_topic,
        "mentions": mention_counter,
        "chains": len(chain_sizes),
        "multi_chains": sum(1 for n in chain_sizes.values() if n >= 2),
    }
    return "\n".join(lines) + "\n", "\n".join(vec_lines) + "\n", stats


def band_topic_sets(band_topics=(9, 3, 3)):
    """Topic-id sets matching generate()'s train/validation/test bands."""
    start = 1
    out = []
    for width in band_topics:
        out.append({str(t) for t in range(start, start + width)})
        start += width
    return tuple(out)


def write_corpus(tmp_path, seed=0, **kw):
    """Materialize a generated corpus and vector file under tmp_path."""
    corpus_text, vec_text, stats = generate(seed=seed, **kw)
    corpus_path = tmp_path / "corpus.tsv"
    vec_path = tmp_path / "vectors.txt"
    corpus_path.write_text(corpus_text)
    vec_path.write_text(vec_text)
    return corpus_path, vec_path, stats
