"""Run configuration: INI-style file with one section per pipeline stage.

Topic lists accept comma-separated ids and inclusive numeric ranges
("1-35,40"); `preset = ecbplus` in [split] selects the standard topic
assignment. Model variants cover the three deterministic baselines and the
four learned configurations.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import ecbplus_default_split
from .errors import ConfigError
from .train import TrainConfig

VARIANTS = (
    "CCE",
    "CORE",
    "CORE+CCE",
    "CORE+CCE+LEMMA",
    "LEMMA",
    "LEMMA-DELTA",
    "UNSUPERVISED",
)
LEARNED_VARIANTS = ("CCE", "CORE", "CORE+CCE", "CORE+CCE+LEMMA")


def parse_topic_list(text: str) -> set[str]:
    out: set[str] = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            try:
                lo, hi = part.split("-")
                lo_i, hi_i = int(lo), int(hi)
            except ValueError:
                raise ConfigError(f"bad topic range {part!r}")
            if hi_i < lo_i:
                raise ConfigError(f"bad topic range {part!r}")
            out.update(str(t) for t in range(lo_i, hi_i + 1))
        else:
            out.add(part)
    return out


def normalize_variant(text: str) -> str:
    v = text.strip().upper().replace("_", "-").replace(" ", "")
    aliases = {"LEMMA-D": "LEMMA-DELTA", "LEMMADELTA": "LEMMA-DELTA"}
    v = aliases.get(v, v)
    if v not in VARIANTS:
        raise ConfigError(f"unknown variant {text!r}; choose from {', '.join(VARIANTS)}")
    return v


@dataclass
class RunConfig:
    corpus: Path
    output: Path
    word_vectors: Path | None
    train_topics: set[str]
    val_topics: set[str]
    test_topics: set[str]
    variant: str = "CORE+CCE"
    training: TrainConfig = field(default_factory=TrainConfig)
    tau: float | None = None
    delta: float | None = None
    pool: str = "global"
    eval_split: str = "test"
    mode: str = "combined"
    config_hash: int = 0

    def require_word_vectors(self) -> Path:
        if self.word_vectors is None:
            raise ConfigError("this command needs paths.word_vectors")
        return self.word_vectors


def _get(cfg: configparser.ConfigParser, section: str, key: str, default=None):
    if cfg.has_option(section, key):
        value = cfg.get(section, key).strip()
        return value if value else default
    return default


def config_text_hash(text: str) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cfg.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")

    corpus = _get(cfg, "paths", "corpus")
    if corpus is None:
        raise ConfigError("missing [paths] corpus")
    output = _get(cfg, "paths", "output", "out")
    word_vectors = _get(cfg, "paths", "word_vectors")

    preset = _get(cfg, "split", "preset")
    if preset is not None:
        if preset != "ecbplus":
            raise ConfigError(f"unknown split preset {preset!r}")
        train_topics, val_topics, test_topics = ecbplus_default_split()
    else:
        train_topics = parse_topic_list(_get(cfg, "split", "train", "") or "")
        val_topics = parse_topic_list(_get(cfg, "split", "validation", "") or "")
        test_topics = parse_topic_list(_get(cfg, "split", "test", "") or "")
        if not train_topics or not test_topics:
            raise ConfigError("[split] needs train and test topics (or preset = ecbplus)")

    def f(section, key, default):
        raw = _get(cfg, section, key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}")

    def i(section, key, default):
        raw = _get(cfg, section, key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}")

    variant = normalize_variant(_get(cfg, "model", "variant", "CORE+CCE"))
    base = TrainConfig()
    lr = f("model", "lr", base.lr)
    if variant == "CORE" and _get(cfg, "model", "lr") is None:
        lr = base.lr * 0.1  # CORE-only default runs ten times slower
    training = TrainConfig(
        lr=lr,
        epochs=i("model", "epochs", base.epochs),
        batch_size=i("model", "batch_size", base.batch_size),
        lambda1=f("model", "lambda1", 0.0),
        lambda2=f("model", "lambda2", 0.0),
        dropout=f("model", "dropout", base.dropout),
        seed=i("model", "seed", base.seed),
        hidden1=i("model", "hidden1", base.hidden1),
        embed=i("model", "embed", base.embed),
        hidden3=i("model", "hidden3", base.hidden3),
        use_cce=variant not in ("CORE",),
    )

    tau_raw = _get(cfg, "cluster", "tau")
    delta_raw = _get(cfg, "cluster", "delta")
    pool = _get(cfg, "cluster", "pool", "global")
    if pool not in ("global", "topic"):
        raise ConfigError(f"[cluster] pool must be global or topic, got {pool!r}")
    eval_split = _get(cfg, "cluster", "eval_split", "test")
    if eval_split not in ("test", "validation"):
        raise ConfigError(f"[cluster] eval_split must be test or validation")
    mode = _get(cfg, "score", "mode", "combined")
    if mode not in ("combined", "within-doc"):
        raise ConfigError(f"[score] mode must be combined or within-doc")

    run = RunConfig(
        corpus=Path(corpus),
        output=Path(output),
        word_vectors=Path(word_vectors) if word_vectors else None,
        train_topics=train_topics,
        val_topics=val_topics,
        test_topics=test_topics,
        variant=variant,
        training=training,
        tau=float(tau_raw) if tau_raw is not None else None,
        delta=float(delta_raw) if delta_raw is not None else None,
        pool=pool,
        eval_split=eval_split,
        mode=mode,
        config_hash=config_text_hash(text),
    )
    _validate_lambdas(run)
    return run


def _validate_lambdas(run: RunConfig) -> None:
    if run.variant == "CORE" and run.training.lambda1 == 0.0 and run.training.lambda2 == 0.0:
        raise ConfigError("CORE variant needs a nonzero lambda1 or lambda2")
    if run.variant == "CCE" and (run.training.lambda1 or run.training.lambda2):
        raise ConfigError("CCE variant must not set lambda1/lambda2")
