"""On-disk formats: feature/parameterization/Gram CSVs, binary containers, PGM frames.

All binary containers are little-endian with float64 payloads.

* parameterization: ``b"MKPLSPAR"``, uint32 D, uint32 n (16 bytes), then D*n values
* Gram matrix: ``b"MKPLSGRM"``, uint32 N, uint32 kind tag, float64 omega
  (NaN when unresolved), float64 a1, float64 a2 (40 bytes), then N*N values
* KPLS model: ``b"MKPLSMDL"``, uint32 version, N, m, q, kind tag, reserved,
  float64 omega, a1, a2, grand mean (64 bytes), then T, U, R (N*m each),
  TKU (m*m), Y (N*q), y_means (q), col_means (N); a ``.json`` sidecar next to
  it carries the vocabulary, task and warnings
"""

import json
from pathlib import Path
import struct

import numpy as np

from .errors import InputError
from .kernels import KINDS, GramMatrix, KernelSpec
from .kpls import CenteringStats, KplsModel

__all__ = [
    "read_pgm",
    "write_pgm",
    "read_matrix_csv",
    "write_matrix_csv",
    "save_param",
    "load_param",
    "save_gram",
    "load_gram",
    "save_model",
    "load_model",
]

PARAM_MAGIC = b"MKPLSPAR"
GRAM_MAGIC = b"MKPLSGRM"
MODEL_MAGIC = b"MKPLSMDL"
MODEL_VERSION = 1

_PARAM_HEAD = struct.Struct("<8sII")
_GRAM_HEAD = struct.Struct("<8sIIddd")
_MODEL_HEAD = struct.Struct("<8sIIIIIIdddd")
_F8 = np.dtype("<f8")


def read_pgm(path):
    """Grayscale frame from a binary PGM (P5) file as a float64 array."""
    from PIL import Image

    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(2) != b"P5":
            raise InputError(f"{path}: not a binary PGM (P5) file")
    with Image.open(path) as im:
        return np.asarray(im, dtype=np.float64)


def write_pgm(path, image):
    from PIL import Image

    arr = np.clip(np.rint(np.asarray(image)), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PPM")


def write_matrix_csv(path, M):
    """Comma-separated rows, no header, full round-trip precision."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    np.savetxt(path, M, delimiter=",", fmt="%.17g")


def read_matrix_csv(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return M


def _payload(buf, offset, count, what, path):
    end = offset + 8 * count
    if len(buf) < end:
        raise InputError(f"{path}: truncated {what} block")
    return np.frombuffer(buf, dtype=_F8, count=count, offset=offset).astype(np.float64), end


def _read(path, magic):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    buf = path.read_bytes()
    if buf[:8] != magic:
        raise InputError(f"{path}: bad magic {buf[:8]!r}, expected {magic!r}")
    return buf


def save_param(path, C):
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2:
        raise InputError(f"parameterization must be 2-D, got {C.shape}")
    with open(path, "wb") as fh:
        fh.write(_PARAM_HEAD.pack(PARAM_MAGIC, *C.shape))
        fh.write(np.ascontiguousarray(C, dtype=_F8).tobytes())


def load_param(path):
    buf = _read(path, PARAM_MAGIC)
    _, D, n = _PARAM_HEAD.unpack_from(buf)
    vals, end = _payload(buf, _PARAM_HEAD.size, D * n, "parameterization", path)
    if end != len(buf):
        raise InputError(f"{path}: {len(buf) - end} trailing bytes")
    return vals.reshape(D, n)


def _nan_if_none(x):
    return float("nan") if x is None else float(x)


def _none_if_nan(x):
    return None if np.isnan(x) else float(x)


def save_gram(path, gram):
    K = np.asarray(gram.K, dtype=np.float64)
    spec = gram.spec
    with open(path, "wb") as fh:
        fh.write(_GRAM_HEAD.pack(GRAM_MAGIC, K.shape[0], spec.tag, _nan_if_none(gram.omega), spec.a1, spec.a2))
        fh.write(np.ascontiguousarray(K, dtype=_F8).tobytes())


def _kind(tag, path):
    if not 1 <= tag <= len(KINDS):
        raise InputError(f"{path}: unknown kernel tag {tag}")
    return KINDS[tag - 1]


def load_gram(path):
    buf = _read(path, GRAM_MAGIC)
    _, N, tag, omega, a1, a2 = _GRAM_HEAD.unpack_from(buf)
    vals, _ = _payload(buf, _GRAM_HEAD.size, N * N, "Gram", path)
    omega = _none_if_nan(omega)
    spec = KernelSpec(kind=_kind(tag, path), omega=None, a1=a1, a2=a2)
    return GramMatrix(K=vals.reshape(N, N), spec=spec, omega=omega)


def save_model(path, model):
    path = Path(path)
    N, m, q = model.n_train, model.m, model.n_classes
    spec = model.spec or KernelSpec()
    head = _MODEL_HEAD.pack(
        MODEL_MAGIC, MODEL_VERSION, N, m, q, spec.tag, 0,
        _nan_if_none(model.omega), spec.a1, spec.a2, model.stats.grand_mean,
    )
    blocks = [model.T, model.U, model.R, model.TKU, model.Y, model.y_means, model.stats.col_means]
    with open(path, "wb") as fh:
        fh.write(head)
        for b in blocks:
            fh.write(np.ascontiguousarray(b, dtype=_F8).tobytes())
    sidecar = {
        "task": model.task,
        "vocabulary": list(model.vocabulary),
        "m_requested": model.m_requested,
        "spec": spec.to_dict(),
        "warnings": list(model.warnings),
    }
    path.with_name(path.name + ".json").write_text(json.dumps(sidecar, indent=2))


def load_model(path):
    path = Path(path)
    buf = _read(path, MODEL_MAGIC)
    _, version, N, m, q, tag, _, omega, a1, a2, grand = _MODEL_HEAD.unpack_from(buf)
    if version != MODEL_VERSION:
        raise InputError(f"{path}: unsupported model version {version}")
    off = _MODEL_HEAD.size
    shapes = [(N, m), (N, m), (N, m), (m, m), (N, q), (q,), (N,)]
    arrays = []
    for shape in shapes:
        vals, off = _payload(buf, off, int(np.prod(shape)), "model", path)
        arrays.append(vals.reshape(shape))
    T, U, R, TKU, Y, y_means, col_means = arrays
    side_path = path.with_name(path.name + ".json")
    side = json.loads(side_path.read_text()) if side_path.is_file() else {}
    spec_d = side.get("spec", {})
    spec = KernelSpec(kind=_kind(tag, path), omega=spec_d.get("omega"), a1=a1, a2=a2)
    vocab = side.get("vocabulary", list(range(q)))
    return KplsModel(
        T=T, U=U, R=R, TKU=TKU, Y=Y, y_means=y_means,
        stats=CenteringStats(col_means=col_means, grand_mean=grand),
        vocabulary=tuple(vocab), task=side.get("task", "speech"), spec=spec,
        omega=_none_if_nan(omega), m_requested=side.get("m_requested", m),
        warnings=list(side.get("warnings", [])),
    )
