"""Experiment orchestration shared by the CLI subcommands."""

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, field
import json
import logging
from pathlib import Path

import numpy as np

from . import _accel
from .classify import knn_predict, rfc_scores
from .datasets import (
    SynthConfig,
    accuracy,
    load_manifest,
    si_folds,
    spid_folds,
    ssd_folds,
    synth_generate,
    trim_repetitions,
)
from .errors import ConfigError, InputError
from .features import LbpConfig
from .io import load_param, save_param
from .kernels import KINDS, KernelSpec, gram_matrix, kernel_block
from .kpls import embed, fit_task, truncate
from .manifold import BasisConfig, diff_parameterization, fit_parameterization

__all__ = [
    "Item",
    "ExperimentConfig",
    "parameterize",
    "save_params_dir",
    "load_params_dir",
    "inspect_param",
    "write_inspect_csv",
    "run_eval",
    "write_report",
]

log = logging.getLogger(__name__)

DEFAULT_M = (10, 30, 50, 80, 100, 130, 200)
PROTOCOLS = ("ssd", "si", "spid")
CLASSIFIERS = ("rfc", "knn")
PARAMS_INDEX = "params.csv"
PARAMS_INDEX_FIELDS = ("id", "speech_class", "speaker", "repetition", "param", "diff_param")


@dataclass
class Item:
    """A visual unit reduced to its parameterization(s)."""

    id: str
    speech_class: str
    speaker: str
    repetition: int
    C: np.ndarray
    C_diff: np.ndarray = None

    def label(self, target):
        return self.speech_class if target == "speech" else self.speaker


def _pool_map(fn, items, threads):
    items = list(items)
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def parameterize(units, basis, diff=False, threads=1):
    def one(u):
        C = fit_parameterization(u.features, basis)
        Cd = diff_parameterization(u.features, basis) if diff else None
        return Item(u.id, u.speech_class, u.speaker, u.repetition, C, Cd)

    return _pool_map(one, units, threads)


def save_params_dir(items, outdir, basis):
    outdir = Path(outdir)
    (outdir / "params").mkdir(parents=True, exist_ok=True)
    diff = any(it.C_diff is not None for it in items)
    with open(outdir / PARAMS_INDEX, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARAMS_INDEX_FIELDS)
        for it in items:
            rel = f"params/{it.id}.bin"
            save_param(outdir / rel, it.C)
            drel = ""
            if it.C_diff is not None:
                drel = f"params/{it.id}.diff.bin"
                save_param(outdir / drel, it.C_diff)
            w.writerow((it.id, it.speech_class, it.speaker, it.repetition, rel, drel))
    meta = {"basis": basis.to_dict(), "diff": diff, "count": len(items)}
    (outdir / "basis.json").write_text(json.dumps(meta, indent=2))
    return outdir / PARAMS_INDEX


def load_params_dir(path):
    """Read a directory written by :func:`save_params_dir`; returns ``(items, meta)``."""
    path = Path(path)
    index = path / PARAMS_INDEX
    if not index.is_file():
        raise InputError(f"{path}: missing {PARAMS_INDEX}")
    meta_path = path / "basis.json"
    meta = json.loads(meta_path.read_text()) if meta_path.is_file() else {}
    items = []
    with open(index, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != PARAMS_INDEX_FIELDS:
            raise InputError(f"{index}: unexpected header {reader.fieldnames}")
        for row_no, row in enumerate(reader, start=2):
            try:
                C = load_param(path / row["param"])
                Cd = load_param(path / row["diff_param"]) if row["diff_param"] else None
                rep = int(row["repetition"])
            except (InputError, ValueError) as exc:
                raise InputError(f"{index}:{row_no}: {exc}") from exc
            items.append(Item(row["id"], row["speech_class"], row["speaker"], rep, C, Cd))
    return items, meta


def inspect_param(X, lams, ns, sigma=None):
    """Parameterizations of one sequence over a (lambda, n) grid.

    Returns a list of ``(lam, n, C)`` in lambda-major order.
    """
    out = []
    for lam in lams:
        for n in ns:
            basis = BasisConfig(n=int(n), lam=float(lam), sigma=sigma)
            out.append((float(lam), int(n), fit_parameterization(X, basis)))
    return out


def write_inspect_csv(fh, blocks, unit_id=""):
    """One block per grid cell: a ``# unit=.. lambda=.. n=..`` line, then D rows of C."""
    w = csv.writer(fh, lineterminator="\n")
    for k, (lam, n, C) in enumerate(blocks):
        if k:
            fh.write("\n")
        fh.write(f"# unit={unit_id} lambda={lam:g} n={n}\n")
        for row in C:
            w.writerow([f"{v:.17g}" for v in row])


@dataclass
class ExperimentConfig:
    manifest: str = None
    synth: SynthConfig = None
    params_dir: str = None
    lbp: LbpConfig = None
    basis: BasisConfig = field(default_factory=BasisConfig)
    kernels: tuple = ("Cosine", "Euclid", "EditDist", "Frechet", "Grassm", "GrassmCC")
    omega: float = None
    a1: float = 0.5
    a2: float = 0.5
    m: tuple = DEFAULT_M
    protocols: tuple = PROTOCOLS
    classifiers: tuple = ("rfc",)
    knn_k: int = 1
    out: str = None
    seed: int = None
    threads: int = 1

    def validate(self):
        sources = [x is not None for x in (self.manifest, self.synth, self.params_dir)]
        if sum(sources) != 1:
            raise ConfigError("give exactly one data source: manifest, synth or params_dir")
        if not self.m or any(int(m) < 1 for m in self.m):
            raise ConfigError(f"m values must be >= 1, got {list(self.m)}")
        if not self.protocols:
            raise ConfigError("at least one protocol is required")
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ConfigError(f"unknown protocol {p!r}; choose from {', '.join(PROTOCOLS)}")
        for c in self.classifiers:
            if c not in CLASSIFIERS:
                raise ConfigError(f"unknown classifier {c!r}; choose from {', '.join(CLASSIFIERS)}")
        if not self.kernels:
            raise ConfigError("at least one kernel is required")
        for k in self.kernels:
            if k not in KINDS:
                raise ConfigError(f"unknown kernel {k!r}; choose from {', '.join(KINDS)}")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")

    def to_dict(self):
        return {
            "manifest": self.manifest,
            "synth": None if self.synth is None else self.synth.__dict__,
            "params_dir": self.params_dir,
            "lbp": None if self.lbp is None else self.lbp.to_dict(),
            "basis": self.basis.to_dict(),
            "kernels": list(self.kernels),
            "omega": self.omega,
            "a1": self.a1,
            "a2": self.a2,
            "m": [int(m) for m in self.m],
            "protocols": list(self.protocols),
            "classifiers": list(self.classifiers),
            "knn_k": self.knn_k,
            "seed": self.seed,
        }


def _load_items(cfg, notes):
    if cfg.params_dir is not None:
        items, meta = load_params_dir(cfg.params_dir)
        if "GrassmDiff" in cfg.kernels and any(it.C_diff is None for it in items):
            raise ConfigError(
                "GrassmDiff needs difference parameterizations; rerun `mkpls param --diff` "
                "or drop GrassmDiff from the kernel list"
            )
        if meta.get("basis"):
            notes["basis"] = meta["basis"]
        return items
    if cfg.synth is not None:
        synth = cfg.synth
        if cfg.seed is not None and cfg.seed != synth.seed:
            synth = SynthConfig.from_dict({**synth.__dict__, "seed": cfg.seed})
        units = synth_generate(synth)
    else:
        units = load_manifest(cfg.manifest, cfg.lbp)
    return parameterize(units, cfg.basis, diff="GrassmDiff" in cfg.kernels, threads=cfg.threads)


def _spec(cfg, kind):
    return KernelSpec(kind=kind, omega=cfg.omega, a1=cfg.a1, a2=cfg.a2)


def _evaluate_fold(task, cfg, by_id, vocab):
    protocol, fold = task
    train = [by_id[i] for i in fold.train]
    test = [by_id[i] for i in fold.test]
    target = fold.target
    labels = [it.label(target) for it in train]
    truth = [it.label(target) for it in test]
    N = len(train)
    m_top = min(max(int(m) for m in cfg.m), N - 1)
    rows = []
    for kind in cfg.kernels:
        spec = _spec(cfg, kind)
        pick = (lambda it: it.C_diff) if kind == "GrassmDiff" else (lambda it: it.C)
        train_p = [pick(it) for it in train]
        test_p = [pick(it) for it in test]
        gram = gram_matrix(train_p, spec)
        V = kernel_block(test_p, train_p, spec, gram.omega)
        full = fit_task(gram, labels, vocab[target], m_top, task=target)
        for m in cfg.m:
            m = int(m)
            model = truncate(full, min(m, N - 1))
            warns = list(model.warnings)
            if m > N - 1:
                warns.append(f"m={m} exceeds N-1={N - 1}; clamped")
            t_test = embed(model, V)
            for clf in cfg.classifiers:
                if clf == "rfc":
                    idx = np.argmax(rfc_scores(model, t_test), axis=1)
                    pred = [model.vocabulary[q] for q in idx]
                else:
                    k = min(cfg.knn_k, N)
                    pred = [knn_predict(model.T, labels, t, k, vocab[target]).label for t in t_test]
                rows.append(
                    {
                        "protocol": protocol,
                        "fold": fold.name,
                        "kernel": kind,
                        "m": m,
                        "m_effective": model.m,
                        "classifier": clf,
                        "accuracy": accuracy(pred, truth),
                        "n_train": N,
                        "n_test": len(test),
                        "omega": gram.omega,
                        "warnings": warns,
                    }
                )
    return rows


def run_eval(cfg):
    """Run every (protocol, fold, kernel, m, classifier) cell.

    Returns ``(table, log)``: ``table`` maps ``(protocol, classifier, kernel,
    m)`` to the mean fold accuracy; ``log`` is a JSON-ready dict with
    per-fold detail.
    """
    cfg.validate()
    notes = {}
    items = _load_items(cfg, notes)
    if not items:
        raise InputError("dataset is empty")
    trimmed = []
    if {"ssd", "spid"} & set(cfg.protocols):
        items, trimmed = trim_repetitions(items)
        if trimmed:
            log.warning("dropped %d units to equalise repetition counts", len(trimmed))
    by_id = {it.id: it for it in items}
    vocab = {
        "speech": tuple(sorted({it.speech_class for it in items})),
        "speaker": tuple(sorted({it.speaker for it in items})),
    }
    makers = {"ssd": ssd_folds, "si": si_folds, "spid": spid_folds}
    tasks = [(p, f) for p in cfg.protocols for f in makers[p](items)]
    results = _pool_map(lambda t: _evaluate_fold(t, cfg, by_id, vocab), tasks, cfg.threads)
    fold_rows = [r for rows in results for r in rows]
    table = {}
    for p in cfg.protocols:
        for clf in cfg.classifiers:
            for kind in cfg.kernels:
                for m in cfg.m:
                    accs = [
                        r["accuracy"]
                        for r in fold_rows
                        if r["protocol"] == p and r["classifier"] == clf and r["kernel"] == kind and r["m"] == int(m)
                    ]
                    table[(p, clf, kind, int(m))] = float(np.mean(accs))
    summary = [
        {"protocol": p, "classifier": c, "kernel": k, "m": m, "accuracy": a} for (p, c, k, m), a in table.items()
    ]
    run_log = {
        "config": cfg.to_dict(),
        "backend": _accel.backend(),
        "n_units": len(items),
        "trimmed_units": trimmed,
        "vocabulary": {k: list(v) for k, v in vocab.items()},
        "summary": summary,
        "folds": fold_rows,
        **notes,
    }
    return table, run_log


def write_report(path, table, cfg):
    """Paper-shaped accuracy grid: one row per (protocol, classifier, kernel), one column per m.

    Cells are percentages with two decimals.
    """
    ms = [int(m) for m in cfg.m]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["protocol", "classifier", "kernel"] + [f"m={m}" for m in ms])
        for p in cfg.protocols:
            for clf in cfg.classifiers:
                for kind in cfg.kernels:
                    w.writerow([p, clf, kind] + [f"{100 * table[(p, clf, kind, m)]:.2f}" for m in ms])
