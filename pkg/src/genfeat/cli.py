"""Command-line pipeline: corpus -> features -> classifiers -> statistics.

Every command reads and writes files in the output directory (``--out``):

==================  ==========================================================
command             primary artifacts
==================  ==========================================================
corpus-ingest       corpus.jsonl (deduplicated, long documents split)
corpus-split        split.json (document id -> partition)
preprocess          vocab.json, encoded.jsonl, embedding.npy
train-extractor     extractor-<kind>.gft (+ .json); acgan writes -gen / -disc
extract             features-<kind>.feat (+ .ids.jsonl)
train-classifier    classifier-<kind>-<clf>.gft (+ .json), history-<kind>-<clf>.json
evaluate            eval-<kind>-<clf>.json
stats-anova         anova.json (table printed)
stats-tukey         tukey.json (table printed)
report              report.txt, curves-<kind>-<clf>.csv
==================  ==========================================================

Each primary artifact gets a ``<name>.meta.json`` sidecar with the tool
version, config hash and input hashes.  Timestamps go only to ``run.log``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import difflib
import hashlib
import io
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, baselines, corpus, preprocess, stats
from .corpus import DEFAULT_MAX_WORDS
from .modelio import load_model, read_features, save_model, stage_seed, write_features
from .nn import tensor as T

log = logging.getLogger("genfeat")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("corpus-ingest", "corpus-split", "preprocess", "train-extractor", "extract",
            "train-classifier", "evaluate", "stats-anova", "stats-tukey", "report")
EXTRACTORS = ("vae", "acgan", "aae", "pca", "none")
CLASSIFIERS = {"lstm": "lstm", "bilstm": "bilstm", "bilstm-attn": "bilstm-attention",
               "cnn": "cnn", "clstm": "clstm"}
MAX_SEED = 2 ** 64


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericError(Exception):
    pass


@dataclass
class RunConfig:
    out: str = "."
    corpus: str = ""
    stopwords: str = ""
    stems: str = ""
    scores: str = ""
    seed: int = 0
    extractor: str = "aae"
    classifier: str = "cnn"
    deterministic: bool = False
    precision: str = "float64"
    # corpus
    max_words: int = DEFAULT_MAX_WORDS
    train_fraction: float = 0.7
    validation_fraction: float = 0.1
    test_fraction: float = 0.2
    # preprocessing
    seq_len: int = preprocess.DEFAULT_SEQ_LEN
    embed_dim: int = preprocess.DEFAULT_EMBED_DIM
    vocab_cap: int = preprocess.DEFAULT_VOCAB_CAP
    # extractors
    latent: int = 32
    hidden: int = 64
    pca_components: int = 32
    extractor_epochs: int = 100
    extractor_batch_size: int = 200
    extractor_lr: float = 0.002
    fake_count: int = 100
    real_count: int = 100
    # classifiers
    n_layers: int = 4
    units: int = 64
    heads: int = 4
    dropout: float = 0.4
    classifier_epochs: int = 50
    classifier_batch_size: int = 32
    classifier_lr: float = 0.001
    patience: int = 10
    # statistics
    alpha: float = 0.05

    def validate(self, command: str | None = None) -> "RunConfig":
        if not 0 <= self.seed < MAX_SEED:
            raise UsageError(f"seed must be a 64-bit unsigned value, got {self.seed}")
        if self.extractor not in EXTRACTORS:
            raise UsageError(f"unknown extractor {self.extractor!r}; choose from {EXTRACTORS}")
        if self.classifier not in CLASSIFIERS:
            raise UsageError(f"unknown classifier {self.classifier!r}; "
                             f"choose from {tuple(CLASSIFIERS)}")
        if self.precision not in ("float64", "float32"):
            raise UsageError("precision must be float64 or float32")
        fractions = (self.train_fraction, self.validation_fraction, self.test_fraction)
        if abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
            raise UsageError("split fractions must be non-negative and sum to 1")
        required = {"corpus-ingest": ("corpus",), "stats-anova": ("scores",),
                    "stats-tukey": ("scores",)}.get(command, ())
        for key in required:
            if not getattr(self, key):
                raise UsageError(f"command {command} requires the {key} path")
        for key in ("corpus", "stopwords", "stems", "scores"):
            value = getattr(self, key)
            if value and not Path(value).is_file():
                raise DataError(f"{key} path {value!r} does not exist")
        return self

    def digest(self) -> str:
        """Hash of every setting except the output location."""
        settings = dataclasses.asdict(self)
        settings.pop("out")
        blob = json.dumps(settings, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, raw):
    kind = type(getattr(RunConfig(), key))
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise UsageError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def _check_key(key: str) -> None:
    if key not in _FIELDS:
        close = difflib.get_close_matches(key, list(_FIELDS), n=1)
        hint = f"; did you mean {close[0]!r}?" if close else ""
        raise UsageError(f"unknown config key {key!r}{hint}")


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        _check_key(key)
        values[key] = value
    return values


def parse_config(config_path=None, overrides: dict | None = None, env=None,
                 command: str | None = None) -> RunConfig:
    """Defaults < config file < GENFEAT_SEED < explicit overrides."""
    env = os.environ if env is None else env
    values = read_config_file(config_path) if config_path else {}
    if env.get("GENFEAT_SEED"):
        values["seed"] = env["GENFEAT_SEED"]
    for key, value in (overrides or {}).items():
        _check_key(key)
        if value is not None:
            values[key] = value
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in values.items()})
    return cfg.validate(command)


# ---------------------------------------------------------------------------
# artifact bookkeeping


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Tracks inputs and outputs of one command; removes outputs on failure."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command, self.cfg = command, cfg
        self.out = Path(cfg.out)
        self.inputs: list = []
        self.outputs: list = []

    def input(self, name, external: bool = False) -> Path:
        """Register an input; pipeline files resolve inside the output directory."""
        path = Path(name) if external else self.out / name
        if not path.is_file():
            raise DataError(f"missing input {path}; run the earlier pipeline step first")
        self.inputs.append(path)
        return path

    def output(self, name) -> Path:
        path = self.out / name
        self.outputs.append(path)
        return path

    def finish(self, primary) -> None:
        meta_inputs = {str(p.name): file_hash(p) for p in self.inputs}
        for path in primary:
            meta = {"tool": "genfeat", "version": __version__, "command": self.command,
                    "config_hash": self.cfg.digest(), "seed": self.cfg.seed,
                    "inputs": meta_inputs, "sha256": file_hash(path)}
            side = self.output(path.name + ".meta.json")
            side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def cleanup(self) -> None:
        for path in self.outputs:
            try:
                path.unlink()
            except FileNotFoundError:
                pass


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8")


def _check_finite(values, what: str) -> None:
    if not np.all(np.isfinite(np.asarray(values, dtype=float))):
        raise NumericError(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# shared loaders


def _load_split(run: Run) -> dict:
    return json.loads(run.input("split.json").read_text(encoding="utf-8"))


def _class_names(records) -> list:
    present = {r["label"] for r in records}
    return [c for c in corpus.CATEGORIES if c in present]


def _load_embedded(run: Run):
    """(ids, labels as names, partitions, embedded docs [N, L, D])."""
    split = _load_split(run)
    records = preprocess.read_encoded(run.input("encoded.jsonl"))
    table = preprocess.EmbeddingTable(np.load(run.input("embedding.npy")))
    ids = [r["id"] for r in records]
    docs = np.stack([table.embed(r["indices"]) for r in records]) if records else np.empty(0)
    parts = np.array([split[i] for i in ids])
    return ids, [r["label"] for r in records], parts, docs


def _label_indices(labels, names) -> np.ndarray:
    index = {n: i for i, n in enumerate(names)}
    return np.array([index[label] for label in labels], dtype=np.int64)


# ---------------------------------------------------------------------------
# commands


def cmd_corpus_ingest(run: Run) -> str:
    src = run.input(run.cfg.corpus, external=True)
    try:
        loaded = corpus.ingest(src)
    except corpus.IngestError as exc:
        raise DataError(str(exc)) from None
    cleaned = corpus.split_long_documents(corpus.dedupe(loaded), run.cfg.max_words)
    out = run.output("corpus.jsonl")
    corpus.write_documents(out, cleaned.documents)
    flagged = run.output("flagged.json")
    _write_json(flagged, {"flagged": cleaned.flagged,
                          "rejected": [list(r) for r in cleaned.rejected]})
    run.finish([out, flagged])
    return (f"{len(cleaned)} documents ({len(cleaned.flagged)} flagged, "
            f"{len(cleaned.rejected)} rejected)\n" + cleaned.stats_table())


def cmd_corpus_split(run: Run) -> str:
    docs = [d for d in corpus.read_documents(run.input("corpus.jsonl")) if d.label is not None]
    c = run.cfg
    fractions = (c.train_fraction, c.validation_fraction, c.test_fraction)
    assignment = corpus.stratified_split(docs, fractions, stage_seed(c.seed, "split"))
    out = run.output("split.json")
    _write_json(out, assignment)
    run.finish([out])
    counts = {p: sum(v == p for v in assignment.values()) for p in corpus.PARTITIONS}
    return " ".join(f"{p}={n}" for p, n in counts.items()) + "\n"


def cmd_preprocess(run: Run) -> str:
    c = run.cfg
    docs = corpus.read_documents(run.input("corpus.jsonl"))
    split = _load_split(run)
    stop_path = run.input(c.stopwords, external=True) if c.stopwords else None
    stem_path = run.input(c.stems, external=True) if c.stems else None
    stopwords = preprocess.load_stopwords(stop_path)
    rules = preprocess.load_stem_rules(stem_path)
    docs = [d for d in docs if d.id in split]
    tokens = {d.id: preprocess.preprocess_text(d.text, stopwords, rules) for d in docs}
    vocab = preprocess.build_vocab([tokens[d.id] for d in docs if split[d.id] == "train"],
                                   c.vocab_cap)
    records = [{"id": d.id, "label": d.label,
                "indices": preprocess.encode_document(tokens[d.id], vocab, c.seq_len)}
               for d in docs]
    table = preprocess.EmbeddingTable.create(len(vocab), c.embed_dim,
                                             stage_seed(c.seed, "embedding"))
    vocab_path, enc_path, emb_path = (run.output(n) for n in
                                      ("vocab.json", "encoded.jsonl", "embedding.npy"))
    vocab_path.write_text(vocab.to_json() + "\n", encoding="utf-8")
    preprocess.write_encoded(enc_path, records)
    with emb_path.open("wb") as f:
        np.save(f, table.table)
    run.finish([vocab_path, enc_path, emb_path])
    return f"vocabulary {len(vocab)} tokens, {len(records)} documents encoded\n"


def _extractor_files(kind: str) -> list:
    if kind == "acgan":
        return ["extractor-acgan-gen.gft", "extractor-acgan-disc.gft"]
    if kind == "pca":
        return ["extractor-pca.npz"]
    return [f"extractor-{kind}.gft"]


def cmd_train_extractor(run: Run) -> str:
    from . import aae, acgan, vae

    c = run.cfg
    kind = c.extractor
    if kind == "none":
        return "extractor 'none' needs no training\n"
    _, labels, parts, docs = _load_embedded(run)
    train = docs[parts == "train"]
    if len(train) == 0:
        raise DataError("no training documents")
    init_seed, train_seed = stage_seed(c.seed, f"{kind}-init"), stage_seed(c.seed, f"{kind}-train")
    paths = [run.output(n) for n in _extractor_files(kind)]
    if kind == "pca":
        model = baselines.pca_fit(train, c.pca_components)
        with paths[0].open("wb") as f:
            np.savez(f, mean=model.mean, axes=model.axes, explained=model.explained)
        summary = f"pca explained variance {model.explained.sum():.4f}"
    elif kind == "vae":
        cfg = vae.VaeConfig(seq_len=c.seq_len, embed_dim=c.embed_dim, hidden=c.hidden,
                            latent=c.latent, epochs=c.extractor_epochs,
                            batch_size=c.extractor_batch_size, lr=c.extractor_lr)
        model, history = vae.train_vae(vae.VaeModel(cfg, init_seed), train, seed=train_seed)
        _check_finite(history, "VAE loss")
        save_model(model, paths[0])
        summary = f"vae final loss {history[-1]:.6f}"
    elif kind == "aae":
        cfg = aae.AaeConfig(seq_len=c.seq_len, embed_dim=c.embed_dim, hidden=c.hidden,
                            latent=c.latent, epochs=c.extractor_epochs,
                            batch_size=c.extractor_batch_size, fake_count=c.fake_count,
                            real_count=c.real_count, lr=c.extractor_lr)
        model, history = aae.train_aae(aae.AaeModel(cfg, init_seed), train, seed=train_seed)
        _check_finite(history["epoch_reconstruction"], "AAE reconstruction")
        save_model(model, paths[0])
        summary = f"aae final reconstruction {history['epoch_reconstruction'][-1]:.6f}"
    else:
        names = _class_names([{"label": l} for l in labels])
        y = _label_indices(labels, names)[parts == "train"]
        cfg = acgan.GanConfig(seq_len=c.seq_len, embed_dim=c.embed_dim, epochs=c.extractor_epochs,
                              batch_size=c.extractor_batch_size, lr=c.extractor_lr,
                              n_classes=len(names))
        weights = corpus.class_weights(np.bincount(y, minlength=len(names)))
        g, d, history = acgan.train_acgan(acgan.GeneratorModel(cfg, init_seed),
                                          acgan.DiscriminatorModel(cfg, init_seed + 1),
                                          train, y, weights, seed=train_seed)
        _check_finite(history["discriminator"] + history["generator"], "AC-GAN losses")
        save_model(g, paths[0])
        save_model(d, paths[1])
        summary = f"acgan final real realness {history['real_realness'][-1]:.4f}"
    for p in paths:
        if p.suffix == ".gft":
            run.outputs.append(p.with_suffix(".json"))
    run.finish(paths)
    return summary + "\n"


def _extract(run: Run, docs: np.ndarray) -> np.ndarray:
    from . import aae, acgan, vae

    c = run.cfg
    kind = c.extractor
    if kind == "none":
        return docs
    files = [run.input(n) for n in _extractor_files(kind)]
    if kind == "pca":
        with np.load(files[0]) as z:
            model = baselines.PcaModel(z["mean"], z["axes"], z["explained"])
        return baselines.pca_project(model, docs)
    if kind == "acgan":
        run.input(files[1].with_suffix(".json").name)
        return acgan.extract_features_acgan(load_model(files[1]), docs)
    run.input(files[0].with_suffix(".json").name)
    model = load_model(files[0])
    extract = vae.extract_features_vae if kind == "vae" else aae.extract_features_aae
    return extract(model, docs, deterministic=c.deterministic,
                   seed=stage_seed(c.seed, f"{kind}-extract"))


def cmd_extract(run: Run) -> str:
    ids, _, _, docs = _load_embedded(run)
    if len(ids) == 0:
        raise DataError("no documents to extract")
    features = _extract(run, docs)
    _check_finite(features, "features")
    out = run.output(f"features-{run.cfg.extractor}.feat")
    run.outputs.append(Path(str(out) + ".ids.jsonl"))
    write_features(out, ids, features)
    run.finish([out])
    return f"features {features.shape} -> {out.name}\n"


def _classifier_spec(c: RunConfig, shape, n_classes: int):
    from .classifiers import ClassifierSpec

    return ClassifierSpec(kind=CLASSIFIERS[c.classifier], seq_len=shape[0], n_features=shape[1],
                          n_classes=n_classes, n_layers=c.n_layers, units=c.units, heads=c.heads,
                          dropout=c.dropout, lr=c.classifier_lr,
                          batch_size=c.classifier_batch_size, epochs=c.classifier_epochs,
                          patience=c.patience)


def _feature_dataset(run: Run):
    split = _load_split(run)
    feat_path = run.input(f"features-{run.cfg.extractor}.feat")
    run.input(feat_path.name + ".ids.jsonl")
    ids, features = read_features(feat_path)
    labels = {r["id"]: r["label"] for r in preprocess.read_encoded(run.input("encoded.jsonl"))}
    names = _class_names([{"label": labels[i]} for i in ids])
    y = _label_indices([labels[i] for i in ids], names)
    parts = np.array([split[i] for i in ids])
    return names, features, y, parts


def _tag(c: RunConfig) -> str:
    return f"{c.extractor}-{c.classifier}"


def cmd_train_classifier(run: Run) -> str:
    from . import classifiers

    c = run.cfg
    names, x, y, parts = _feature_dataset(run)
    tr, va = parts == "train", parts == "validation"
    if not va.any():
        raise DataError("validation partition is empty")
    spec = _classifier_spec(c, x.shape[1:], len(names))
    model = classifiers.ClassifierModel(spec, stage_seed(c.seed, f"classifier-{_tag(c)}-init"))
    weights = corpus.class_weights(np.bincount(y[tr], minlength=len(names)))
    try:
        tc = classifiers.train_classifier(model, x[tr], y[tr], x[va], y[va], weights,
                                          seed=stage_seed(c.seed, f"classifier-{_tag(c)}-train"))
    except ValueError as exc:
        raise DataError(str(exc)) from None
    _check_finite(tc.history["loss"], "classifier loss")
    model_path = run.output(f"classifier-{_tag(c)}.gft")
    run.outputs.append(model_path.with_suffix(".json"))
    save_model(tc.model, model_path)
    hist_path = run.output(f"history-{_tag(c)}.json")
    _write_json(hist_path, {"classes": names, "spec": dataclasses.asdict(spec),
                            "history": tc.history, "selected_epoch": tc.best_epoch,
                            "val_recall": tc.val_recall, "parameters": tc.param_count()})
    run.finish([model_path, hist_path])
    return f"best epoch {tc.best_epoch} macro validation recall {tc.val_recall:.4f}\n"


def cmd_evaluate(run: Run) -> str:
    from . import classifiers

    c = run.cfg
    names, x, y, parts = _feature_dataset(run)
    model_path = run.input(f"classifier-{_tag(c)}.gft")
    run.input(model_path.with_suffix(".json").name)
    model = load_model(model_path)
    test = parts == "test"
    if not test.any():
        raise DataError("test partition is empty")
    _, pred = classifiers.predict(model, x[test])
    cm = stats.confusion_matrix(y[test], pred, len(names))
    p, r, f = stats.macro_prf(cm)
    out = run.output(f"eval-{_tag(c)}.json")
    _write_json(out, {"extractor": c.extractor, "classifier": c.classifier, "classes": names,
                      "confusion": cm.tolist(), "precision": p, "recall": r, "f1": f,
                      "documents": int(test.sum())})
    run.finish([out])
    return f"macro precision {p:.4f} recall {r:.4f} F1 {f:.4f}\n"


def read_scores(path) -> dict:
    """CSV with header ``group,value``; groups keep first-appearance order."""
    groups = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"group", "value"} <= set(reader.fieldnames):
            raise DataError(f"{path}: header must contain group and value columns")
        for row in reader:
            try:
                groups.setdefault(row["group"].strip(), []).append(float(row["value"]))
            except ValueError:
                raise DataError(f"{path}:{reader.line_num}: bad value {row['value']!r}") from None
    return groups


def cmd_stats_anova(run: Run) -> str:
    groups = read_scores(run.input(run.cfg.scores, external=True))
    try:
        rows = stats.one_way_anova(groups)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    out = run.output("anova.json")
    out.write_text(stats.StatReport(rows, []).to_json() + "\n", encoding="utf-8")
    run.finish([out])
    return stats.format_anova(rows)


def cmd_stats_tukey(run: Run) -> str:
    groups = read_scores(run.input(run.cfg.scores, external=True))
    try:
        rows = stats.tukey_hsd(groups, run.cfg.alpha)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    out = run.output("tukey.json")
    out.write_text(stats.StatReport([], rows).to_json() + "\n", encoding="utf-8")
    run.finish([out])
    return stats.format_tukey(rows)


def cmd_report(run: Run) -> str:
    evals = sorted(p for p in run.out.glob("eval-*.json") if not p.name.endswith(".meta.json"))
    if not evals:
        raise DataError(f"no eval-*.json files in {run.out}; run evaluate first")
    lines = [f"{'extractor':<10} {'classifier':<12} {'precision':>9} {'recall':>9} {'F1':>9}"]
    primary = []
    for path in evals:
        run.input(path.name)
        e = json.loads(path.read_text(encoding="utf-8"))
        lines.append(f"{e['extractor']:<10} {e['classifier']:<12} {100 * e['precision']:>9.2f} "
                     f"{100 * e['recall']:>9.2f} {100 * e['f1']:>9.2f}")
        hist_path = run.out / f"history-{e['extractor']}-{e['classifier']}.json"
        if hist_path.is_file():
            run.input(hist_path.name)
            hist = json.loads(hist_path.read_text(encoding="utf-8"))["history"]
            curve = run.output(f"curves-{e['extractor']}-{e['classifier']}.csv")
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(["epoch", "loss", "val_recall"])
            for i, (loss, rec) in enumerate(zip(hist["loss"], hist["val_recall"]), start=1):
                writer.writerow([i, f"{loss:.8f}", f"{rec:.8f}"])
            curve.write_text(buf.getvalue(), encoding="utf-8")
            primary.append(curve)
    table = "\n".join(lines) + "\n"
    out = run.output("report.txt")
    out.write_text(table, encoding="utf-8")
    run.finish([out] + primary)
    return table


HANDLERS = {
    "corpus-ingest": cmd_corpus_ingest, "corpus-split": cmd_corpus_split,
    "preprocess": cmd_preprocess, "train-extractor": cmd_train_extractor,
    "extract": cmd_extract, "train-classifier": cmd_train_classifier,
    "evaluate": cmd_evaluate, "stats-anova": cmd_stats_anova,
    "stats-tukey": cmd_stats_tukey, "report": cmd_report,
}


def run_command(command: str, cfg: RunConfig) -> str:
    """Execute one pipeline command; returns its console summary."""
    if command not in HANDLERS:
        raise UsageError(f"unknown command {command!r}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(command, cfg)
    previous = T.default_dtype()
    T.set_default_dtype(np.dtype(cfg.precision))
    started = time.time()
    try:
        with np.errstate(over="ignore", under="ignore"):
            summary = HANDLERS[command](run)
    except BaseException:
        run.cleanup()
        raise
    finally:
        T.set_default_dtype(previous)
    with open(out / "run.log", "a", encoding="utf-8") as f:
        f.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {command} seed={cfg.seed} "
                f"config={cfg.digest()[:12]} {time.time() - started:.2f}s\n")
    return summary


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genfeat", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key=value configuration file")
    parser.add_argument("--seed", type=int, help="master seed (fallback: GENFEAT_SEED)")
    parser.add_argument("--extractor", choices=EXTRACTORS)
    parser.add_argument("--classifier", choices=tuple(CLASSIFIERS))
    parser.add_argument("--deterministic", action="store_true", default=None,
                        help="extract posterior means instead of sampled codes")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "extractor": args.extractor, "classifier": args.classifier,
                 "deterministic": args.deterministic, "out": args.out}
    try:
        for item in args.set:
            if "=" not in item:
                raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = (part.strip() for part in item.split("=", 1))
            overrides[key.replace("-", "_")] = value
        cfg = parse_config(args.config, overrides, command=args.command)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            sys.stdout.write(run_command(args.command, cfg))
        return EXIT_OK
    except UsageError as exc:
        _report_error("usage", exc)
        return EXIT_USAGE
    except NumericError as exc:
        _report_error("numeric", exc)
        return EXIT_NUMERIC
    except (DataError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        _report_error("data", exc)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        _report_error("numeric", exc)
        return EXIT_NUMERIC


def _report_error(kind: str, exc: Exception) -> None:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__,
                                 "message": str(exc)}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
