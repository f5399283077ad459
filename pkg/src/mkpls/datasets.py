"""Labelled visual units: manifest loading, synthetic data, evaluation folds."""

from collections import Counter, defaultdict
import csv
from dataclasses import dataclass
import logging
from pathlib import Path

import numpy as np

from .errors import InputError
from .features import LbpConfig, extract_sequence_features
from .io import read_matrix_csv, read_pgm, write_matrix_csv

__all__ = [
    "MANIFEST_FIELDS",
    "VisualUnit",
    "Fold",
    "SynthConfig",
    "load_manifest",
    "write_manifest",
    "export_dataset",
    "synth_generate",
    "ssd_folds",
    "si_folds",
    "spid_folds",
    "trim_repetitions",
    "accuracy",
]

log = logging.getLogger(__name__)

MANIFEST_FIELDS = ("id", "path", "speech_class", "speaker", "repetition")


@dataclass
class VisualUnit:
    id: str
    features: np.ndarray  # n_k x D
    speech_class: str
    speaker: str
    repetition: int

    @property
    def n_frames(self):
        return self.features.shape[0]

    def label(self, target):
        return self.speech_class if target == "speech" else self.speaker


@dataclass(frozen=True)
class Fold:
    train: tuple
    test: tuple
    target: str = "speech"
    name: str = ""


@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale surrogate for a lipreading corpus.

    Every class owns a smooth random curve ``[0, 1] -> R^dim`` (a
    trigonometric polynomial of order ``order``) added, scaled by
    ``separation``, to a curve shared by all classes. Each speaker applies a
    fixed affine map whose distance from the identity is ``deformation``.
    Repetitions draw a frame count in ``[frames_min, frames_max]`` and add
    i.i.d. Gaussian noise of std ``noise``.
    """

    classes: int = 4
    speakers: int = 5
    repetitions: int = 3
    frames_min: int = 12
    frames_max: int = 20
    dim: int = 16
    separation: float = 1.0
    deformation: float = 0.1
    noise: float = 0.0
    seed: int = 0
    order: int = 3

    def __post_init__(self):
        for name in ("classes", "speakers", "repetitions", "dim"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        if not 2 <= self.frames_min <= self.frames_max:
            raise InputError("need 2 <= frames_min <= frames_max")
        for name in ("separation", "deformation", "noise"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


def _trig_curve(rng, order, dim):
    coef = rng.standard_normal((2 * order + 1, dim)) / np.sqrt(order + 1)

    def curve(s):
        s = np.asarray(s)[:, None]
        out = np.repeat(coef[0][None, :], s.shape[0], axis=0)
        for h in range(1, order + 1):
            out = out + coef[2 * h - 1] * np.cos(2 * np.pi * h * s) + coef[2 * h] * np.sin(2 * np.pi * h * s)
        return out

    return curve


def synth_generate(config):
    rng = np.random.default_rng(config.seed)
    D = config.dim
    base = _trig_curve(rng, config.order, D)
    protos = [_trig_curve(rng, config.order, D) for _ in range(config.classes)]
    maps = []
    for _ in range(config.speakers):
        M = np.eye(D) + config.deformation * rng.standard_normal((D, D)) / np.sqrt(D)
        b = config.deformation * rng.standard_normal(D)
        maps.append((M, b))
    units = []
    for p, (M, b) in enumerate(maps):
        for c, proto in enumerate(protos):
            for r in range(config.repetitions):
                n = int(rng.integers(config.frames_min, config.frames_max + 1))
                s = np.linspace(0.0, 1.0, n)
                X = (base(s) + config.separation * proto(s)) @ M.T + b
                X = X + config.noise * rng.standard_normal(X.shape)
                units.append(
                    VisualUnit(
                        id=f"p{p + 1:02d}_c{c + 1:02d}_r{r + 1}",
                        features=X,
                        speech_class=f"c{c + 1:02d}",
                        speaker=f"p{p + 1:02d}",
                        repetition=r + 1,
                    )
                )
    return units


def _frame_dir(path, lbp_config):
    frames = sorted(path.glob("frame_*.pgm"))
    if not frames:
        raise InputError(f"{path}: no frame_*.pgm files")
    return extract_sequence_features([read_pgm(f) for f in frames], lbp_config or LbpConfig())


def load_manifest(path, lbp_config=None):
    """Read a manifest CSV (``id,path,speech_class,speaker,repetition``).

    ``path`` entries are relative to the manifest's directory and name either
    a feature CSV (frames x D) or a directory of ``frame_NNNN.pgm`` images,
    which are converted with ``lbp_config``.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: manifest not found")
    root = path.parent
    units = []
    seen = {}
    dim = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
            raise InputError(f"{path}: header must be {','.join(MANIFEST_FIELDS)}, got {reader.fieldnames}")
        for row_no, row in enumerate(reader, start=2):
            uid = row["id"]
            if uid in seen:
                raise InputError(f"{path}:{row_no}: duplicate id {uid!r} (first on row {seen[uid]})")
            seen[uid] = row_no
            target = root / row["path"]
            try:
                if target.is_dir():
                    X = _frame_dir(target, lbp_config)
                else:
                    X = read_matrix_csv(target)
                rep = int(row["repetition"])
            except (InputError, ValueError) as exc:
                raise InputError(f"{path}:{row_no}: {exc}") from exc
            if X.shape[0] < 2:
                raise InputError(f"{path}:{row_no}: unit {uid!r} has {X.shape[0]} frame(s), need >= 2")
            if dim is None:
                dim = X.shape[1]
            elif X.shape[1] != dim:
                raise InputError(f"{path}:{row_no}: unit {uid!r} has D={X.shape[1]}, dataset has D={dim}")
            units.append(VisualUnit(uid, X, row["speech_class"], row["speaker"], rep))
    return units


def write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for r in rows:
            w.writerow(r)


def export_dataset(units, outdir):
    """Write ``manifest.csv`` plus one feature CSV per unit under ``features/``."""
    outdir = Path(outdir)
    (outdir / "features").mkdir(parents=True, exist_ok=True)
    rows = []
    for u in units:
        rel = f"features/{u.id}.csv"
        write_matrix_csv(outdir / rel, u.features)
        rows.append((u.id, rel, u.speech_class, u.speaker, u.repetition))
    manifest = outdir / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest


def _groups(units):
    groups = defaultdict(list)
    for u in units:
        groups[(u.speaker, u.speech_class)].append(u)
    for g in groups.values():
        g.sort(key=lambda u: u.repetition)
    return groups


def _rep_folds(units, target, prefix):
    groups = _groups(units)
    if not groups:
        return []
    counts = {k: len(v) for k, v in groups.items()}
    R = min(counts.values())
    modal = Counter(counts.values()).most_common(1)[0][0]
    ragged = sorted(k for k, c in counts.items() if c != modal)
    if ragged:
        listing = ", ".join(f"{p}/{c}={counts[(p, c)]}" for p, c in ragged[:10])
        raise InputError(f"repetition counts differ (most pairs have {modal}): {listing}")
    if R < 2:
        raise InputError("need at least 2 repetitions per (speaker, class) pair")
    folds = []
    for r in range(R):
        test_ids = {g[r].id for g in groups.values()}
        folds.append(
            Fold(
                train=tuple(u.id for u in units if u.id not in test_ids),
                test=tuple(u.id for u in units if u.id in test_ids),
                target=target,
                name=f"{prefix}-rep{r + 1}",
            )
        )
    return folds


def ssd_folds(units):
    """Speaker semi-dependent: fold ``r`` tests the r-th repetition of every pair."""
    return _rep_folds(units, "speech", "ssd")


def spid_folds(units):
    """Speaker identification: SSD split structure, speaker label as target."""
    return _rep_folds(units, "speaker", "spid")


def si_folds(units):
    """Speaker independent: leave one speaker out."""
    speakers = sorted({u.speaker for u in units})
    if len(speakers) < 2:
        raise InputError("leave-one-speaker-out needs at least 2 speakers")
    return [
        Fold(
            train=tuple(u.id for u in units if u.speaker != s),
            test=tuple(u.id for u in units if u.speaker == s),
            target="speech",
            name=f"si-{s}",
        )
        for s in speakers
    ]


def trim_repetitions(units):
    """Keep the first ``R_min`` repetitions of every (speaker, class) pair.

    Returns ``(kept_units, dropped_ids)``; dataset order is preserved.
    """
    groups = _groups(units)
    if not groups:
        return list(units), []
    R = min(len(g) for g in groups.values())
    keep = {u.id for g in groups.values() for u in g[:R]}
    dropped = [u.id for u in units if u.id not in keep]
    if dropped:
        log.info("trimmed %d units to a common %d repetitions", len(dropped), R)
    return [u for u in units if u.id in keep], dropped


def accuracy(predictions, truth):
    """Fraction of correctly recognised clips."""
    predictions, truth = list(predictions), list(truth)
    if len(predictions) != len(truth):
        raise InputError(f"{len(predictions)} predictions for {len(truth)} labels")
    if not truth:
        raise InputError("accuracy of an empty evaluation is undefined")
    return sum(p == t for p, t in zip(predictions, truth)) / len(truth)
