"""Coreference chain scorers: MUC, B3, mention- and entity-based CEAF, BLANC,
and their CoNLL average, plus within-document link projection.

All scorers require gold and system clusterings over the identical mention
set (mentions are pre-annotated here, so twinless-mention extensions are not
needed). Empty denominators score 0; BLANC omits a link type from its average
only when neither side has links of that type.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Clustering
from .errors import IntegrityError, ScoringMismatchError
from .kernels import lsap_min


@dataclass(frozen=True)
class MetricScore:
    recall: float
    precision: float
    f1: float


@dataclass(frozen=True)
class MetricReport:
    muc: MetricScore
    b3: MetricScore
    ceaf_m: MetricScore
    ceaf_e: MetricScore
    blanc: MetricScore
    conll: float


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _score(r_num, r_den, p_num, p_den) -> MetricScore:
    r = _ratio(r_num, r_den)
    p = _ratio(p_num, p_den)
    return MetricScore(recall=r, precision=p, f1=_f1(p, r))


def _check_mentions(gold: Clustering, sys: Clustering) -> None:
    g, s = gold.mention_ids(), sys.mention_ids()
    if g != s:
        missing = sorted(g - s)[:5]
        extra = sorted(s - g)[:5]
        raise ScoringMismatchError(
            f"mention sets differ: missing from system {missing}, unexpected {extra}"
        )


def _intersection_counts(gold: Clustering, sys: Clustering) -> dict:
    """(gold chain index, sys chain index) -> shared mention count."""
    sys_idx = {m: j for j, chain in enumerate(sys.chains) for m in chain}
    counts: dict[tuple[int, int], int] = {}
    for i, chain in enumerate(gold.chains):
        for m in chain:
            key = (i, sys_idx[m])
            counts[key] = counts.get(key, 0) + 1
    return counts


# ---------------------------------------------------------------------------
# MUC (link-based)
# ---------------------------------------------------------------------------


def _muc_half(base: Clustering, other: Clustering) -> tuple[int, int]:
    other_of = other.chain_of()
    num = den = 0
    for chain in base.chains:
        partitions = {other_of[m] for m in chain}
        num += len(chain) - len(partitions)
        den += len(chain) - 1
    return num, den


def score_muc(gold: Clustering, sys: Clustering) -> MetricScore:
    """Minimum-link-edit measure; singleton chains contribute nothing, and an
    all-singleton side yields 0 for the affected ratio."""
    _check_mentions(gold, sys)
    r_num, r_den = _muc_half(gold, sys)
    p_num, p_den = _muc_half(sys, gold)
    return _score(r_num, r_den, p_num, p_den)


# ---------------------------------------------------------------------------
# B3 (mention-based)
# ---------------------------------------------------------------------------


def score_b3(gold: Clustering, sys: Clustering) -> MetricScore:
    _check_mentions(gold, sys)
    n = len(gold.mention_ids())
    if n == 0:
        return MetricScore(0.0, 0.0, 0.0)
    gold_of = gold.chain_of()
    sys_of = sys.chain_of()
    recall = precision = 0.0
    for m in gold_of:
        inter = len(gold_of[m] & sys_of[m])
        recall += inter / len(gold_of[m])
        precision += inter / len(sys_of[m])
    return _score(recall, n, precision, n)


# ---------------------------------------------------------------------------
# CEAF (aligned chains via optimal assignment)
# ---------------------------------------------------------------------------


def score_ceaf(gold: Clustering, sys: Clustering, phi: str = "mention") -> MetricScore:
    """phi="mention" scores |K & S| per aligned pair; phi="entity" scores the
    Dice value 2|K & S| / (|K| + |S|). The one-to-one alignment maximizing the
    total is found with the Kuhn-Munkres kernel."""
    if phi not in ("mention", "entity"):
        raise ValueError(f"unknown CEAF variant {phi!r}")
    _check_mentions(gold, sys)
    ng, ns = len(gold.chains), len(sys.chains)
    if ng == 0 or ns == 0:
        return MetricScore(0.0, 0.0, 0.0)
    size = max(ng, ns)
    scores = np.zeros((size, size))
    for (i, j), inter in _intersection_counts(gold, sys).items():
        if phi == "mention":
            scores[i, j] = inter
        else:
            scores[i, j] = 2.0 * inter / (len(gold.chains[i]) + len(sys.chains[j]))
    assignment = lsap_min(-scores)
    best = float(scores[np.arange(size), assignment].sum())
    if phi == "mention":
        r_den = float(sum(len(c) for c in gold.chains))
        p_den = float(sum(len(c) for c in sys.chains))
    else:
        r_den, p_den = float(ng), float(ns)
    return _score(best, r_den, best, p_den)


# ---------------------------------------------------------------------------
# BLANC (pair-based, coreferent and non-coreferent link types)
# ---------------------------------------------------------------------------


def _pair_count(n: int) -> int:
    return n * (n - 1) // 2


def score_blanc(gold: Clustering, sys: Clustering) -> MetricScore:
    _check_mentions(gold, sys)
    n = len(gold.mention_ids())
    total = _pair_count(n)
    coref_gold = sum(_pair_count(len(c)) for c in gold.chains)
    coref_sys = sum(_pair_count(len(c)) for c in sys.chains)
    coref_both = sum(
        _pair_count(k) for k in _intersection_counts(gold, sys).values()
    )
    noncoref_gold = total - coref_gold
    noncoref_sys = total - coref_sys
    noncoref_both = total - coref_gold - coref_sys + coref_both

    coref = _score(coref_both, coref_gold, coref_both, coref_sys)
    noncoref = _score(noncoref_both, noncoref_gold, noncoref_both, noncoref_sys)

    have_coref = coref_gold > 0 or coref_sys > 0
    have_noncoref = noncoref_gold > 0 or noncoref_sys > 0
    if have_coref and have_noncoref:
        return MetricScore(
            recall=(coref.recall + noncoref.recall) / 2.0,
            precision=(coref.precision + noncoref.precision) / 2.0,
            f1=(coref.f1 + noncoref.f1) / 2.0,
        )
    if have_coref:
        return coref
    if have_noncoref:
        return noncoref
    return MetricScore(0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# Within-document projection and the full report
# ---------------------------------------------------------------------------


def within_doc_projection(clustering: Clustering, docs) -> Clustering:
    """Cut every cross-document link: each chain splits into its per-document
    parts. `docs` is a Corpus or a mention-id -> doc-id mapping."""
    if hasattr(docs, "mention_doc_map"):
        doc_of = docs.mention_doc_map()
    else:
        doc_of = dict(docs)
    chains = []
    for chain in clustering.chains:
        groups: dict[str, set[str]] = {}
        for m in chain:
            if m not in doc_of:
                raise IntegrityError(f"no document known for mention {m!r}")
            groups.setdefault(doc_of[m], set()).add(m)
        chains.extend(groups[k] for k in sorted(groups))
    return Clustering.from_sets(chains)


def report(gold: Clustering, sys: Clustering) -> MetricReport:
    """All six measures; CoNLL is the mean of the MUC, B3, and CEAF-entity
    F-scores."""
    muc = score_muc(gold, sys)
    b3 = score_b3(gold, sys)
    ceaf_m = score_ceaf(gold, sys, phi="mention")
    ceaf_e = score_ceaf(gold, sys, phi="entity")
    blanc = score_blanc(gold, sys)
    conll = (muc.f1 + b3.f1 + ceaf_e.f1) / 3.0
    return MetricReport(
        muc=muc, b3=b3, ceaf_m=ceaf_m, ceaf_e=ceaf_e, blanc=blanc, conll=conll
    )


_MEASURES = ("muc", "b3", "ceaf_m", "ceaf_e", "blanc")


def format_report(rep: MetricReport, percent: bool = False) -> str:
    """Tab-separated rows (measure, R, P, F) plus the CoNLL line. The machine
    form keeps 4 decimals; percent=True gives paper-style whole percentages."""
    lines = ["measure\tR\tP\tF"]
    for name in _MEASURES:
        s: MetricScore = getattr(rep, name)
        if percent:
            lines.append(
                f"{name}\t{100 * s.recall:.0f}\t{100 * s.precision:.0f}\t{100 * s.f1:.0f}"
            )
        else:
            lines.append(
                f"{name}\t{s.recall:.4f}\t{s.precision:.4f}\t{s.f1:.4f}"
            )
    if percent:
        lines.append(f"conll\t\t\t{100 * rep.conll:.0f}")
    else:
        lines.append(f"conll\t\t\t{rep.conll:.4f}")
    return "\n".join(lines) + "\n"


def write_report(rep: MetricReport, path) -> None:
    with open(path, "w", encoding="utf-8") as out:
        out.write(format_report(rep))
