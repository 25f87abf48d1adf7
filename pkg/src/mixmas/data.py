"""Dataset manifests, the MXT1 tensor file format, patchification, splits and
the planted-signal synthetic dataset generator.

MXT1 layout (little-endian)::

    b"MXT1" | u8 dtype (0 = float32) | u32 ndim | u32 dims[ndim] | payload

Manifest (JSON)::

    {"format_version": 1, "name": ..., "task": "multiclass" | "multilabel",
     "num_classes": K,
     "modalities": [{"name", "kind": "sequence" | "image" | "tabular",
                     "shape": [...], "path", "patch": p (image only)}],
     "labels": path,
     "split": {"train": f, "val": f, "test": f, "seed": s}}

Paths are relative to the manifest's directory.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (BadMagicError, DanglingPathError, DataIOError, TruncatedPayloadError,
                     ValidationError)
from .tensor import Tensor

MAGIC = b"MXT1"
DTYPE_F32 = 0
MANIFEST_VERSION = 1
TASKS = ("multiclass", "multilabel")
MODALITY_KINDS = ("sequence", "image", "tabular")
SIGNALS = ("token_order", "pooled_mean", "disjoint_bits")


# ---------------------------------------------------------------------------
# MXT1


def encode_tensor(array) -> bytes:
    a = np.asarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<BI", DTYPE_F32, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return header + np.ascontiguousarray(a).tobytes()


def decode_tensor(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    if buf[:4] != MAGIC:
        raise BadMagicError(f"{source}: bad magic {buf[:4]!r}, expected {MAGIC!r}")
    if len(buf) < 9:
        raise TruncatedPayloadError(f"{source}: header truncated")
    dtype, ndim = struct.unpack_from("<BI", buf, 4)
    if dtype != DTYPE_F32:
        raise DataIOError(f"{source}: unsupported dtype tag {dtype}")
    offset = 9 + 4 * ndim
    if len(buf) < offset:
        raise TruncatedPayloadError(f"{source}: header truncated")
    dims = struct.unpack_from(f"<{ndim}I", buf, 9)
    expected = 4 * math.prod(dims)
    if len(buf) - offset != expected:
        raise TruncatedPayloadError(
            f"{source}: payload has {len(buf) - offset} bytes, expected {expected}")
    return np.frombuffer(buf, dtype="<f4", offset=offset).reshape(dims).astype(np.float64)


def write_tensor(path, tensor):
    data = tensor.data if isinstance(tensor, Tensor) else tensor
    try:
        Path(path).write_bytes(encode_tensor(data))
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def read_array(path) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise DanglingPathError(f"missing tensor file {path}") from exc
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    return decode_tensor(buf, str(path))


def read_tensor(path) -> Tensor:
    return Tensor(read_array(path))


# ---------------------------------------------------------------------------
# patches


def patchify(image, patch: int) -> np.ndarray:
    """(..., H, W, C) -> (..., (H/p)(W/p), p*p*C), patches in row-major order."""
    image = np.asarray(image)
    *lead, h, w, c = image.shape
    if patch < 1 or h % patch or w % patch:
        raise ValidationError(f"patch size {patch} does not divide image {h}x{w}")
    gh, gw = h // patch, w // patch
    x = image.reshape(*lead, gh, patch, gw, patch, c)
    x = np.moveaxis(x, len(lead) + 2, len(lead) + 1)  # (..., gh, gw, p, p, c)
    return x.reshape(*lead, gh * gw, patch * patch * c)


def unpatchify(tokens, patch: int, height: int, width: int) -> np.ndarray:
    tokens = np.asarray(tokens)
    *lead, n, d = tokens.shape
    gh, gw = height // patch, width // patch
    c = d // (patch * patch)
    if gh * gw != n or patch * patch * c != d:
        raise ValidationError(f"tokens {tokens.shape} do not tile a {height}x{width} image")
    x = tokens.reshape(*lead, gh, gw, patch, patch, c)
    x = np.moveaxis(x, len(lead) + 1, len(lead) + 2)
    return x.reshape(*lead, height, width, c)


# ---------------------------------------------------------------------------
# manifest


@dataclass
class ModalitySpec:
    name: str
    kind: str
    shape: list[int]
    path: str
    patch: int | None = None

    def token_shape(self) -> tuple[int, int]:
        if self.kind == "image":
            h, w, c = self.shape
            p = self.patch
            return (h // p) * (w // p), p * p * c
        if self.kind == "tabular":
            return 1, self.shape[-1]
        n, d = self.shape
        return n, d


@dataclass
class SplitSpec:
    train: float = 0.7
    val: float = 0.15
    test: float = 0.15
    seed: int = 0


@dataclass
class Manifest:
    name: str
    task: str
    num_classes: int
    modalities: list[ModalitySpec]
    labels: str
    split: SplitSpec = field(default_factory=SplitSpec)
    base_dir: Path = field(default=Path("."), compare=False)
    format_version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        for m in d["modalities"]:
            if m["patch"] is None:
                del m["patch"]
        return {"format_version": d.pop("format_version"), **d}

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel

    def modality(self, name: str) -> ModalitySpec:
        for m in self.modalities:
            if m.name == name:
                return m
        raise ValidationError(f"no modality named {name!r}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ValidationError(f"{where}: missing key {key!r}")
    return d[key]


def parse_manifest(data: dict, base_dir: Path) -> Manifest:
    task = _require(data, "task", "manifest")
    if task not in TASKS:
        raise ValidationError(f"manifest: task must be one of {TASKS}, got {task!r}")
    num_classes = int(_require(data, "num_classes", "manifest"))
    if num_classes < 2 and task == "multiclass" or num_classes < 1:
        raise ValidationError(f"manifest: invalid num_classes {num_classes}")
    mods = []
    for i, m in enumerate(_require(data, "modalities", "manifest")):
        where = f"manifest modality {i}"
        spec = ModalitySpec(name=_require(m, "name", where), kind=_require(m, "kind", where),
                            shape=[int(s) for s in _require(m, "shape", where)],
                            path=_require(m, "path", where), patch=m.get("patch"))
        if spec.kind not in MODALITY_KINDS:
            raise ValidationError(f"{where}: kind must be one of {MODALITY_KINDS}")
        expected_rank = {"sequence": 2, "image": 3, "tabular": 1}[spec.kind]
        if len(spec.shape) != expected_rank or min(spec.shape) < 1:
            raise ValidationError(f"{where}: {spec.kind} shape must have rank {expected_rank}")
        if spec.kind == "image":
            if not spec.patch:
                raise ValidationError(f"{where}: image modality needs a patch size")
            h, w, _ = spec.shape
            if h % spec.patch or w % spec.patch:
                raise ValidationError(f"{where}: patch {spec.patch} does not divide {h}x{w}")
        mods.append(spec)
    names = [m.name for m in mods]
    if len(set(names)) != len(names):
        raise ValidationError(f"manifest: duplicate modality names {names}")
    if not mods:
        raise ValidationError("manifest: no modalities")
    sp = data.get("split", {})
    split = SplitSpec(**{k: sp[k] for k in ("train", "val", "test", "seed") if k in sp})
    fractions = (split.train, split.val, split.test)
    if min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"manifest: split fractions {fractions} must be >= 0 and sum to 1")
    return Manifest(name=data.get("name", "dataset"), task=task, num_classes=num_classes,
                    modalities=mods, labels=_require(data, "labels", "manifest"), split=split,
                    base_dir=base_dir, format_version=data.get("format_version", MANIFEST_VERSION))


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DanglingPathError(f"manifest {path} not found") from exc
    except OSError as exc:
        raise DataIOError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path} is not valid JSON: {exc}") from exc
    manifest = parse_manifest(data, path.parent)
    for rel in [manifest.labels] + [m.path for m in manifest.modalities]:
        if not manifest.resolve(rel).is_file():
            raise DanglingPathError(f"manifest {path} references missing file {rel}")
    return manifest


def save_manifest(manifest: Manifest, path):
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# datasets and splits


def split_of(seed: int, index: int, split: SplitSpec) -> str:
    """Split membership as a function of (seed, index) only."""
    digest = hashlib.blake2b(f"{seed}:{index}".encode(), digest_size=8).digest()
    u = int.from_bytes(digest, "little") / 2.0**64
    if u < split.train:
        return "train"
    if u < split.train + split.val:
        return "val"
    return "test"


@dataclass
class Dataset:
    manifest: Manifest
    inputs: dict[str, np.ndarray]  # name -> (N, n_tokens, d), float64
    labels: np.ndarray  # (N,) class indices or (N, L) binary
    fingerprint: str

    def __len__(self):
        return len(self.labels)

    @property
    def modality_names(self) -> list[str]:
        return [m.name for m in self.manifest.modalities]

    def take(self, indices) -> tuple[dict[str, np.ndarray], np.ndarray]:
        idx = np.asarray(indices, dtype=np.int64)
        return {k: v[idx] for k, v in self.inputs.items()}, self.labels[idx]

    def splits(self) -> dict[str, np.ndarray]:
        sp = self.manifest.split
        names = [split_of(sp.seed, i, sp) for i in range(len(self))]
        return {s: np.array([i for i, n in enumerate(names) if n == s], dtype=np.int64)
                for s in ("train", "val", "test")}


def load_dataset(manifest: Manifest) -> Dataset:
    h = hashlib.sha256()
    labels = read_array(manifest.resolve(manifest.labels))
    h.update(encode_tensor(labels))
    n = labels.shape[0]
    if manifest.task == "multiclass":
        if labels.ndim != 1:
            raise ValidationError(f"multiclass labels must be 1-D, got {labels.shape}")
        if labels.min() < 0 or labels.max() >= manifest.num_classes or np.any(labels % 1):
            raise ValidationError("labels must be integer class indices < num_classes")
        labels = labels.astype(np.int64)
    else:
        if labels.shape != (n, manifest.num_classes) or not np.all((labels == 0) | (labels == 1)):
            raise ValidationError(f"multilabel labels must be binary (N, {manifest.num_classes})")
        labels = labels.astype(np.int64)
    inputs = {}
    for m in manifest.modalities:
        arr = read_array(manifest.resolve(m.path))
        h.update(m.name.encode())
        h.update(encode_tensor(arr))
        if arr.shape != (n, *m.shape):
            raise ValidationError(f"modality {m.name!r} file has shape {arr.shape}, "
                                  f"manifest says {(n, *m.shape)}")
        if m.kind == "image":
            arr = patchify(arr, m.patch)
        elif m.kind == "tabular":
            arr = arr[:, None, :]
        inputs[m.name] = arr
    return Dataset(manifest, inputs, labels, h.hexdigest()[:16])


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticModality:
    name: str
    signal: str
    kind: str = "sequence"
    n_tokens: int = 4
    d: int = 8
    image: list[int] | None = None  # [H, W, C] for kind == "image"
    patch: int | None = None


@dataclass
class SyntheticSpec:
    """Planted-signal dataset description.

    Signals: ``token_order`` puts the class in the cyclic order of a fixed set
    of prototype tokens (the token mean carries nothing); ``pooled_mean`` puts
    it in a class centroid shared by all tokens; ``disjoint_bits`` gives each
    such modality its own share of the class bits, one signed direction per
    bit.
    """

    seed: int = 0
    num_samples: int = 1000
    num_classes: int = 4
    modalities: list[SyntheticModality] = field(default_factory=list)
    noise: float = 0.5
    task: str = "multiclass"
    name: str = "synthetic"
    split: SplitSpec = field(default_factory=SplitSpec)

    @classmethod
    def from_dict(cls, data: dict) -> SyntheticSpec:
        data = dict(data)
        data["modalities"] = [SyntheticModality(**m) for m in data.get("modalities", [])]
        if "split" in data:
            data["split"] = SplitSpec(**data["split"])
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        if len(self.modalities) < 2:
            raise ValidationError("synthetic spec needs at least 2 modalities")
        if self.noise < 0:
            raise ValidationError("noise must be >= 0")
        if self.task not in TASKS:
            raise ValidationError(f"task must be one of {TASKS}")
        if self.num_samples < 1 or self.num_classes < 2:
            raise ValidationError("need num_samples >= 1 and num_classes >= 2")
        for m in self.modalities:
            if m.signal not in SIGNALS:
                raise ValidationError(f"modality {m.name}: unknown signal {m.signal!r}")
            if m.kind == "image":
                if not m.image or not m.patch:
                    raise ValidationError(f"modality {m.name}: image needs 'image' and 'patch'")
                h, w, c = m.image
                if h % m.patch or w % m.patch:
                    raise ValidationError(f"modality {m.name}: patch does not divide image")
            elif m.kind == "tabular" and m.n_tokens != 1:
                raise ValidationError(f"modality {m.name}: tabular data has one token")

    def code_count(self) -> int:
        return self.num_classes if self.task == "multiclass" else 2**self.num_classes


def _token_shape(m: SyntheticModality) -> tuple[int, int]:
    if m.kind == "image":
        h, w, c = m.image
        return (h // m.patch) * (w // m.patch), m.patch * m.patch * c
    return m.n_tokens, m.d


def _bit_groups(spec: SyntheticSpec) -> dict[str, list[int]]:
    owners = [m.name for m in spec.modalities if m.signal == "disjoint_bits"]
    nbits = max(1, math.ceil(math.log2(spec.code_count())))
    if not owners:
        return {}
    groups = {name: [] for name in owners}
    for b in range(nbits):
        groups[owners[b % len(owners)]].append(b)
    return groups


def _plant(m: SyntheticModality, values: np.ndarray, n_values: int, nbits: int,
           noise: float, rng: np.random.Generator) -> np.ndarray:
    n, d = _token_shape(m)
    size = len(values)
    eps = noise * rng.standard_normal((size, n, d))
    if m.signal == "token_order":
        if n_values > n:
            raise ValidationError(f"modality {m.name}: token_order needs >= {n_values} tokens")
        protos = rng.standard_normal((n, d))
        order = (np.arange(n)[None, :] + values[:, None]) % n
        return protos[order] + eps
    if m.signal == "pooled_mean":
        centroids = rng.standard_normal((n_values, d))
        return centroids[values][:, None, :] + eps
    if nbits > d:
        raise ValidationError(f"modality {m.name}: {nbits} bits need width >= {nbits}")
    dirs, _ = np.linalg.qr(rng.standard_normal((d, nbits)))
    bits = (values[:, None] >> np.arange(nbits)[None, :]) & 1
    signal = (2.0 * bits - 1.0) @ dirs.T
    return signal[:, None, :] + eps


def generate_synthetic(spec: SyntheticSpec, out_dir) -> Manifest:
    """Write a manifest plus MXT1 files; byte-identical for a fixed spec."""
    spec.validate()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create {out}: {exc}") from exc
    rng = np.random.default_rng(spec.seed)
    k = spec.code_count()
    if spec.task == "multiclass":
        codes = rng.permutation(np.arange(spec.num_samples) % k)
        labels = codes.astype(np.float64)
    else:
        codes = rng.integers(0, k, size=spec.num_samples)
        labels = ((codes[:, None] >> np.arange(spec.num_classes)[None, :]) & 1).astype(np.float64)
    groups = _bit_groups(spec)
    mods = []
    for m in spec.modalities:
        if m.signal == "disjoint_bits":
            bits = groups[m.name]
            values = sum(((codes >> b) & 1) << j for j, b in enumerate(bits))
            tokens = _plant(m, values, 2 ** len(bits), len(bits), spec.noise, rng)
        else:
            tokens = _plant(m, codes, k, 0, spec.noise, rng)
        if m.kind == "image":
            h, w, c = m.image
            arr, shape = unpatchify(tokens, m.patch, h, w), [h, w, c]
        elif m.kind == "tabular":
            arr, shape = tokens[:, 0, :], [tokens.shape[-1]]
        else:
            arr, shape = tokens, list(tokens.shape[1:])
        fname = f"{m.name}.mxt"
        write_tensor(out / fname, arr)
        mods.append(ModalitySpec(m.name, m.kind, shape, fname,
                                 m.patch if m.kind == "image" else None))
    write_tensor(out / "labels.mxt", labels)
    manifest = Manifest(spec.name, spec.task, spec.num_classes, mods, "labels.mxt",
                        spec.split, base_dir=out)
    save_manifest(manifest, out / "manifest.json")
    return manifest
