"""Command-line pipeline: features -> train -> cluster -> score.

Each stage reads its predecessors' files from the configured output
directory, so stages are independently re-runnable and cacheable. Exit codes:
0 success, 2 input/configuration error, 3 training failure, 4 model/feature
mismatch, 5 scoring mismatch.
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import clustering as clus
from . import features as feat
from . import network as net
from . import scoring
from .config import LEARNED_VARIANTS, RunConfig, load_config, normalize_variant
from .corpus import Clustering, Corpus, load_corpus, split_by_topics
from .errors import (
    ConfigError,
    EvcorefError,
    ModelMismatchError,
    ParseError,
    SamplerError,
    ScoringMismatchError,
    TrainingDivergedError,
)
from .matio import read_matrix, write_matrix
from .train import train

SPLITS = ("train", "validation", "test")


# ---------------------------------------------------------------------------
# Small text artifacts
# ---------------------------------------------------------------------------


def _write_mentions_tsv(path: Path, corpus: Corpus, mentions, run: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as out:
        out.write(f"# config_hash={run.config_hash} seed={run.training.seed}\n")
        out.write("# mention_id\tchain_id\tdoc_id\ttopic_id\n")
        for m in mentions:
            topic = corpus.doc(m.doc_id).topic_id
            out.write(f"{m.id}\t{m.gold_chain}\t{m.doc_id}\t{topic}\n")


def _read_mentions_tsv(path: Path) -> list[tuple[str, str, str, str]]:
    rows = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(path, 0, f"bad mention row {line!r}")
            rows.append(tuple(parts))
    return rows


def _write_kv(path: Path, entries: dict) -> None:
    with open(path, "w", encoding="utf-8") as out:
        for key, value in entries.items():
            out.write(f"{key}={value}\n")


def _read_kv(path: Path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line and "=" in line:
                key, value = line.split("=", 1)
                out[key] = value
    return out


def _write_tfidf(path: Path, model: feat.TfidfModel) -> None:
    with open(path, "w", encoding="utf-8") as out:
        out.write(f"# n_docs={model.n_docs}\n")
        for lemma, col in sorted(model.lemma_index.items(), key=lambda kv: kv[1]):
            out.write(f"{lemma}\t{col}\t{float(model.idf[col])!r}\n")


def _read_tfidf(path: Path) -> feat.TfidfModel:
    lemma_index: dict[str, int] = {}
    idf_entries: dict[int, float] = {}
    n_docs = 0
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if line.startswith("#"):
                if "n_docs=" in line:
                    n_docs = int(line.split("n_docs=")[1])
                continue
            if not line:
                continue
            lemma, col, idf = line.split("\t")
            lemma_index[lemma] = int(col)
            idf_entries[int(col)] = float(idf)
    idf = np.array([idf_entries[i] for i in range(len(idf_entries))])
    return feat.TfidfModel(lemma_index=lemma_index, idf=idf, n_docs=n_docs)


def _split_corpora(run: RunConfig) -> dict[str, Corpus]:
    corpus = load_corpus(run.corpus)
    train_c, val_c, test_c = split_by_topics(
        corpus, run.train_topics, run.val_topics, run.test_topics
    )
    return {"train": train_c, "validation": val_c, "test": test_c}


def _gold_from_rows(rows) -> Clustering:
    chains: dict[str, set[str]] = {}
    for mention_id, chain_id, _, _ in rows:
        chains.setdefault(chain_id, set()).add(mention_id)
    return Clustering.from_sets(chains[k] for k in sorted(chains))


def _scheme_from_rows(rows) -> tuple[np.ndarray, int]:
    """Class labels per row: one class per multi-mention chain (sorted by
    chain id), singletons merged into the trailing class."""
    counts = Counter(chain_id for _, chain_id, _, _ in rows)
    multi = sorted(c for c, n in counts.items() if n >= 2)
    class_of = {c: i for i, c in enumerate(multi)}
    singleton = len(multi)
    labels = np.array(
        [class_of.get(chain_id, singleton) for _, chain_id, _, _ in rows],
        dtype=np.int64,
    )
    return labels, singleton + 1


# ---------------------------------------------------------------------------
# Stage commands
# ---------------------------------------------------------------------------


def cmd_features(run: RunConfig) -> None:
    wv = feat.load_word_vectors(run.require_word_vectors())
    corpora = _split_corpora(run)
    for name in SPLITS:
        summary = corpora[name].summary()
        print(f"{name}: " + " ".join(f"{k}={v}" for k, v in summary.items()))
    models = feat.fit_feature_models(corpora["train"], wv)

    out = run.output / "features"
    (out / "models").mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        matrix, mentions = feat.extract_split(corpora[name], models, pool=run.pool)
        write_matrix(out / f"{name}.mat", matrix)
        _write_mentions_tsv(out / f"{name}.mentions.tsv", corpora[name], mentions, run)

    with open(out / "models" / "lemma_vocab.tsv", "w", encoding="utf-8") as fh:
        for lemma, slot in sorted(models.lemma_vocab.index_of.items(), key=lambda kv: kv[1]):
            fh.write(f"{lemma}\t{slot}\n")
    _write_tfidf(out / "models" / "tfidf.tsv", models.tfidf)
    write_matrix(out / "models" / "pca_mean.mat", models.pca.mean)
    write_matrix(out / "models" / "pca_components.mat", models.pca.components)
    _write_kv(
        out / "models" / "meta.tsv",
        {
            "wordvec_dim": wv.dimension,
            "feature_dim": models.dim,
            "pool": run.pool,
            "config_hash": run.config_hash,
            "seed": run.training.seed,
        },
    )
    print(f"features written to {out}")


def _load_split(run: RunConfig, name: str):
    out = run.output / "features"
    matrix_path = out / f"{name}.mat"
    if not matrix_path.exists():
        raise ConfigError(f"missing {matrix_path}; run the features stage first")
    return read_matrix(matrix_path), _read_mentions_tsv(out / f"{name}.mentions.tsv")


def cmd_train(run: RunConfig) -> None:
    if run.variant not in LEARNED_VARIANTS:
        raise ConfigError(f"variant {run.variant} has no training stage")
    train_x, train_rows = _load_split(run, "train")
    val_x, val_rows = _load_split(run, "validation")
    labels, n_classes = _scheme_from_rows(train_rows)
    chain_ids = [chain_id for _, chain_id, _, _ in train_rows]
    val_gold = _gold_from_rows(val_rows)
    val_ids = [mention_id for mention_id, _, _, _ in val_rows]

    out = run.output / "train"
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.tsv"
    log_file = open(log_path, "w", encoding="utf-8")
    log_file.write(f"# config_hash={run.config_hash} seed={run.training.seed}\n")
    log_file.write("epoch\ttotal\tcce\tattract\trepulse\tval_b3\ttau\n")

    def progress(entry):
        loss = entry.loss
        log_file.write(
            f"{entry.epoch}\t{loss.total:.6f}\t{loss.cce:.6f}\t{loss.attract:.6f}"
            f"\t{loss.repulse:.6f}\t{entry.val_b3:.6f}\t{entry.tau:.6f}\n"
        )
        print(
            f"epoch {entry.epoch:3d} loss {loss.total:.4f} "
            f"val B3 {entry.val_b3:.4f} tau {entry.tau:.3f}"
        )

    try:
        result = train(
            train_x,
            labels,
            chain_ids,
            n_classes,
            run.training,
            val_features=val_x,
            val_mention_ids=val_ids,
            val_gold=val_gold,
            progress=progress,
        )
    finally:
        log_file.close()

    net.save_checkpoint(
        out / "checkpoint.ckpt",
        result.best_params,
        result.best_adam,
        result.best_epoch,
        run.training.seed,
        run.config_hash,
    )
    print(
        f"best epoch {result.best_epoch}: val B3 {result.best_b3:.4f} "
        f"tau {result.best_tau:.4f} -> {out / 'checkpoint.ckpt'}"
    )


def _embeddings_for(run: RunConfig, params: net.NetParams, name: str):
    matrix, rows = _load_split(run, name)
    return net.embed(params, matrix), rows


def cmd_cluster(run: RunConfig) -> None:
    out = run.output / "cluster"
    out.mkdir(parents=True, exist_ok=True)
    eval_name = run.eval_split
    eval_x, eval_rows = _load_split(run, eval_name)
    eval_ids = [r[0] for r in eval_rows]
    meta: dict = {"variant": run.variant, "split": eval_name}

    corpora = None
    tfidf = None
    if run.variant in ("LEMMA", "LEMMA-DELTA", "CORE+CCE+LEMMA"):
        corpora = _split_corpora(run)
        tfidf = _read_tfidf(run.output / "features" / "models" / "tfidf.tsv")

    if run.variant == "LEMMA":
        sys_clustering = clus.lemma_partition(corpora[eval_name])

    elif run.variant == "LEMMA-DELTA":
        delta = run.delta
        if delta is None:
            _, val_rows = _load_split(run, "validation")
            delta, _, score = clus.tune_delta(
                corpora["validation"], tfidf, _gold_from_rows(val_rows)
            )
            print(f"tuned delta {delta:.4f} (validation B3 {score:.4f})")
        meta["delta"] = delta
        sys_clustering = clus.lemma_delta_init(corpora[eval_name], tfidf, delta)

    elif run.variant == "UNSUPERVISED":
        tau = run.tau
        if tau is None:
            val_x, val_rows = _load_split(run, "validation")
            tau, score = clus.tune_tau(
                val_x, [r[0] for r in val_rows], _gold_from_rows(val_rows)
            )
            print(f"tuned tau {tau:.4f} (validation B3 {score:.4f})")
        meta["tau"] = tau
        sys_clustering = clus.agglomerate(eval_ids, tau, embeddings=eval_x)

    else:  # learned variants embed with the trained checkpoint
        ckpt = run.output / "train" / "checkpoint.ckpt"
        if not ckpt.exists():
            raise ConfigError(f"missing {ckpt}; run the train stage first")
        params, _, ckpt_meta = net.load_checkpoint(ckpt)
        if params.dims[0] != eval_x.shape[1]:
            raise ModelMismatchError(
                f"checkpoint input width {params.dims[0]} != features {eval_x.shape[1]}"
            )
        eval_emb, _ = _embeddings_for(run, params, eval_name)
        val_emb, val_rows = _embeddings_for(run, params, "validation")
        val_ids = [r[0] for r in val_rows]
        val_gold = _gold_from_rows(val_rows)

        if run.variant == "CORE+CCE+LEMMA":
            delta, tau = run.delta, run.tau
            if delta is None:
                delta, tuned_tau, score = clus.tune_delta(
                    corpora["validation"], tfidf, val_gold, val_emb, val_ids
                )
                print(f"tuned delta {delta:.4f} tau {tuned_tau:.4f} (val B3 {score:.4f})")
                if tau is None:
                    tau = tuned_tau
            elif tau is None:
                init = clus.lemma_delta_init(corpora["validation"], tfidf, delta)
                tau, score = clus.tune_tau(val_emb, val_ids, val_gold, init=init)
                print(f"tuned tau {tau:.4f} (validation B3 {score:.4f})")
            meta["delta"] = delta
            meta["tau"] = tau
            init = clus.lemma_delta_init(corpora[eval_name], tfidf, delta)
            sys_clustering = clus.agglomerate(
                eval_ids, tau, embeddings=eval_emb, init=init
            )
        else:
            tau = run.tau
            if tau is None:
                tau, score = clus.tune_tau(val_emb, val_ids, val_gold)
                print(f"tuned tau {tau:.4f} (validation B3 {score:.4f})")
            meta["tau"] = tau
            sys_clustering = clus.agglomerate(eval_ids, tau, embeddings=eval_emb)

    gold = _gold_from_rows(eval_rows)
    meta.update({"config_hash": run.config_hash, "seed": run.training.seed})
    clus.write_chains(sys_clustering, out / f"{eval_name}.sys.chains", meta)
    clus.write_chains(gold, out / f"{eval_name}.gold.chains", meta)
    print(
        f"{eval_name}: {len(sys_clustering.chains)} system chains, "
        f"{len(gold.chains)} gold chains -> {out}"
    )


def cmd_score(
    run: RunConfig,
    gold_path: Path | None = None,
    sys_path: Path | None = None,
    mode: str | None = None,
) -> scoring.MetricReport:
    mode = mode or run.mode
    out = run.output / "cluster"
    gold_path = gold_path or out / f"{run.eval_split}.gold.chains"
    sys_path = sys_path or out / f"{run.eval_split}.sys.chains"
    for p in (gold_path, sys_path):
        if not Path(p).exists():
            raise ConfigError(f"missing chains file {p}")
    gold = clus.read_chains(gold_path)
    sys_clustering = clus.read_chains(sys_path)
    if mode == "within-doc":
        corpus = load_corpus(run.corpus)
        gold = scoring.within_doc_projection(gold, corpus)
        sys_clustering = scoring.within_doc_projection(sys_clustering, corpus)

    rep = scoring.report(gold, sys_clustering)
    score_dir = run.output / "score"
    score_dir.mkdir(parents=True, exist_ok=True)
    name = "report_within.tsv" if mode == "within-doc" else "report.tsv"
    scoring.write_report(rep, score_dir / name)
    print(f"[{mode}]")
    print(scoring.format_report(rep), end="")
    return rep


def cmd_pipeline(run: RunConfig) -> None:
    cmd_features(run)
    if run.variant in LEARNED_VARIANTS:
        cmd_train(run)
    cmd_cluster(run)
    cmd_score(run, mode="combined")
    cmd_score(run, mode="within-doc")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evcoref",
        description="Event coreference chains from learned clustering-friendly embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("features", "train", "cluster", "score", "pipeline"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration (INI)")
        p.add_argument("--seed", type=int, help="override [model] seed")
        p.add_argument("--variant", help="override [model] variant")
        p.add_argument("--tau", type=float, help="override clustering threshold")
        p.add_argument("--delta", type=float, help="override lemma-delta threshold")
        if name in ("score",):
            p.add_argument("--gold", help="gold chains file")
            p.add_argument("--sys", help="system chains file")
            p.add_argument("--mode", choices=["combined", "within-doc"])
    return parser


def _apply_overrides(run: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.seed is not None:
        run.training.seed = args.seed
    if args.variant is not None:
        run.variant = normalize_variant(args.variant)
        run.training.use_cce = run.variant != "CORE"
    if args.tau is not None:
        run.tau = args.tau
    if args.delta is not None:
        run.delta = args.delta
    return run


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = _apply_overrides(load_config(args.config), args)
        if args.command == "features":
            cmd_features(run)
        elif args.command == "train":
            cmd_train(run)
        elif args.command == "cluster":
            cmd_cluster(run)
        elif args.command == "score":
            cmd_score(
                run,
                gold_path=Path(args.gold) if args.gold else None,
                sys_path=Path(args.sys) if args.sys else None,
                mode=args.mode,
            )
        elif args.command == "pipeline":
            cmd_pipeline(run)
    except (ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDivergedError, SamplerError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 3
    except ModelMismatchError as exc:
        print(f"model/feature mismatch: {exc}", file=sys.stderr)
        return 4
    except ScoringMismatchError as exc:
        print(f"scoring mismatch: {exc}", file=sys.stderr)
        return 5
    except EvcorefError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
