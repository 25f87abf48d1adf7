"""Greedy four-stage architecture search with a content-addressed ledger.

Stages run in a fixed order: sampling, encoder selection per modality,
fusion-function selection, fusion-network selection. Each candidate is
micro-benchmarked (short training on the sample, scored on a held-out 20%
slice of it) unless the ledger already holds a record with the same key.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .data import Dataset, load_dataset, load_manifest
from .errors import (DataIOError, NonFiniteError, ProvenanceError, StageError,
                     ValidationError)
from .fusion import FUSION_KINDS
from .metrics import EvalReport, metric_for_task
from .sampling import DEFAULT_EPSILON, DEFAULT_P_HAT, DEFAULT_Z, SamplePlan, validated_sample
from .training import ModelDesc, MultimodalModel, TrainConfig, predict, train_model
from .zoo import EncoderConfig, block_kind

SPEC_FORMAT_VERSION = 1
TIE_BREAK = "registry_order"
STAGES = ("encoder", "fusion_function", "fusion_network")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ModelDefaults:
    d: int = 16
    depth: int = 1
    token_hidden_mult: float = 2.0
    channel_hidden_mult: float = 2.0
    hyper_hidden: int = 8
    fusion_depth: int = 1

    def encoder(self, kind: str, depth: int | None = None) -> EncoderConfig:
        return EncoderConfig(kind=kind, depth=self.depth if depth is None else depth, d=self.d,
                             token_hidden_mult=self.token_hidden_mult,
                             channel_hidden_mult=self.channel_hidden_mult,
                             hyper_hidden=self.hyper_hidden)


@dataclass
class SamplingConfig:
    z: float = DEFAULT_Z
    p_hat: float = DEFAULT_P_HAT
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0
    max_attempts: int = 32


DEFAULT_ENCODERS = ["mlp_mixer", "hyper_mixer", "monarch_mixer"]
DEFAULT_FUSION_NETWORKS = ["hyper_mixer", "mlp_mixer"]


@dataclass
class SearchConfig:
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelDefaults = field(default_factory=ModelDefaults)
    # modality name -> candidate kinds; "default" applies to unlisted ones
    encoders: dict[str, list[str]] = field(default_factory=dict)
    fixed_encoders: dict[str, str] = field(default_factory=dict)
    fusion_functions: list[str] = field(default_factory=lambda: list(FUSION_KINDS))
    fusion_networks: list[str] = field(default_factory=lambda: list(DEFAULT_FUSION_NETWORKS))
    metric: str | None = None

    REQUIRED = ("sampling", "train", "model")

    @classmethod
    def from_dict(cls, data: dict) -> SearchConfig:
        for key in cls.REQUIRED:
            if key not in data:
                raise ValidationError(f"search config: missing key {key!r}")
        known = {"sampling", "train", "model", "encoders", "fixed_encoders", "fusion_functions",
                 "fusion_networks", "metric"}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"search config: unknown keys {sorted(unknown)}")

        def section(kind, name):
            try:
                return kind(**data[name])
            except TypeError as exc:
                raise ValidationError(f"search config [{name}]: {exc}") from None

        cfg = cls(sampling=section(SamplingConfig, "sampling"), train=section(TrainConfig, "train"),
                  model=section(ModelDefaults, "model"),
                  encoders={k: list(v) for k, v in data.get("encoders", {}).items()},
                  fixed_encoders=dict(data.get("fixed_encoders", {})),
                  fusion_functions=list(data.get("fusion_functions", FUSION_KINDS)),
                  fusion_networks=list(data.get("fusion_networks", DEFAULT_FUSION_NETWORKS)),
                  metric=data.get("metric"))
        for kind in cfg.fusion_functions:
            if kind not in FUSION_KINDS:
                raise ValidationError(f"search config: unknown fusion function {kind!r}")
        for kinds in list(cfg.encoders.values()) + [cfg.fusion_networks,
                                                     list(cfg.fixed_encoders.values())]:
            for kind in kinds:
                block_kind(kind)
        return cfg

    @classmethod
    def load(cls, path) -> SearchConfig:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise DataIOError(f"config {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def encoder_candidates(self, modality: str, modality_kind: str) -> list[str]:
        if modality in self.encoders:
            return self.encoders[modality]
        if "default" in self.encoders:
            return self.encoders["default"]
        return list(DEFAULT_ENCODERS)

    def fixed_encoder(self, modality: str, modality_kind: str) -> str | None:
        if modality in self.fixed_encoders:
            return self.fixed_encoders[modality]
        if modality_kind == "tabular" and modality not in self.encoders:
            return "plain_mlp"
        return None


# ---------------------------------------------------------------------------
# ledger


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def make_key(stage: str, module: str, config: dict, sample: str, train: dict, metric: str) -> str:
    payload = canonical({"stage": stage, "module": module, "config": config, "sample": sample,
                         "train": train, "metric": metric})
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class BenchmarkRecord:
    key: str
    stage: str
    module: str
    config: dict
    score: float
    report: dict
    wall_time: float
    timestamp: str
    sample: str = ""
    train: dict = field(default_factory=dict)
    metric: str = ""
    diverged: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


class Ledger:
    """Append-only JSON-lines store of benchmark records.

    ``path=None`` keeps records in memory only. Appends go through one lock.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.records: dict[str, BenchmarkRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            try:
                lines = self.path.read_text().splitlines()
            except OSError as exc:
                raise DataIOError(f"cannot read ledger {self.path}: {exc}") from exc
            for i, line in enumerate(lines, 1):
                if not line.strip():
                    continue
                try:
                    rec = BenchmarkRecord(**json.loads(line))
                except (json.JSONDecodeError, TypeError) as exc:
                    raise ValidationError(f"ledger {self.path}:{i}: malformed record") from exc
                self.records.setdefault(rec.key, rec)

    def __contains__(self, key: str) -> bool:
        return key in self.records

    def __len__(self) -> int:
        return len(self.records)

    def get(self, key: str) -> BenchmarkRecord | None:
        return self.records.get(key)

    def append(self, rec: BenchmarkRecord):
        with self._lock:
            if rec.key in self.records:
                return
            if self.path is not None:
                try:
                    self.path.parent.mkdir(parents=True, exist_ok=True)
                    with self.path.open("a") as fh:
                        fh.write(json.dumps(rec.to_dict()) + "\n")
                except OSError as exc:
                    raise DataIOError(f"cannot append to ledger {self.path}: {exc}") from exc
            self.records[rec.key] = rec


# ---------------------------------------------------------------------------
# micro-benchmarks


@dataclass
class SearchStats:
    trainings: int = 0
    param_updates: int = 0
    cache_hits: int = 0


@dataclass
class SampleData:
    inputs: dict[str, np.ndarray]
    labels: np.ndarray
    task: str
    num_classes: int
    fingerprint: str

    @property
    def input_shapes(self) -> dict[str, tuple[int, int]]:
        return {k: v.shape[1:] for k, v in self.inputs.items()}


def eval_split(labels: np.ndarray, task: str, seed: int, eval_fraction: float = 0.2):
    """80/20 train/eval index split; stratified by class for multiclass."""
    rng = np.random.default_rng(seed)
    n = len(labels)
    if task == "multiclass":
        held = []
        for c in np.unique(labels):
            members = rng.permutation(np.flatnonzero(labels == c))
            held.extend(members[:int(round(eval_fraction * len(members)))])
        held = np.sort(np.array(held, dtype=np.int64))
    else:
        held = np.sort(rng.permutation(n)[:int(round(eval_fraction * n))])
    mask = np.ones(n, dtype=bool)
    mask[held] = False
    return np.flatnonzero(mask), held


def _seed_from_key(key: str) -> int:
    return int(key[:16], 16)


def micro_benchmark(stage: str, module: str, config: dict, desc: ModelDesc, data: SampleData,
                    cfg: TrainConfig, metric: str | None, ledger: Ledger,
                    stats: SearchStats | None = None) -> BenchmarkRecord:
    """Train ``desc`` briefly on the sample and score it, or return the cached
    record for the same key. Divergence yields score 0 with ``diverged``."""
    stats = stats if stats is not None else SearchStats()
    metric_name, metric_fn = metric_for_task(data.task, metric)
    train_dict = cfg.to_dict()
    key = make_key(stage, module, config, data.fingerprint, train_dict, metric_name)
    cached = ledger.get(key)
    if cached is not None:
        stats.cache_hits += 1
        return cached
    seed = _seed_from_key(key)
    tr, ev = eval_split(data.labels, data.task, cfg.seed)
    start = time.perf_counter()
    stats.trainings += 1
    model = MultimodalModel(desc, data.input_shapes, data.num_classes, np.random.default_rng(seed))
    try:
        result = train_model(model, {k: v[tr] for k, v in data.inputs.items()}, data.labels[tr],
                             data.task, cfg, seed)
        stats.param_updates += result.steps
        preds = predict(model, {k: v[ev] for k, v in data.inputs.items()}, data.task, cfg.threshold)
        report = metric_fn(preds, data.labels[ev], num_classes=data.num_classes)
        diverged = False
    except NonFiniteError:
        report = EvalReport(metric_name, 0.0, len(ev))
        diverged = True
    rec = BenchmarkRecord(
        key=key, stage=stage, module=module, config=config, score=float(report.score),
        report=report.to_dict(), wall_time=time.perf_counter() - start,
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        sample=data.fingerprint, train=train_dict, metric=metric_name, diverged=diverged)
    ledger.append(rec)
    return rec


def select_best(records: list[BenchmarkRecord]) -> int:
    """Index of the highest-scoring non-diverged record; first wins ties."""
    best = None
    for i, rec in enumerate(records):
        if rec.diverged:
            continue
        if best is None or rec.score > records[best].score:
            best = i
    if best is None:
        raise StageError("every candidate diverged")
    return best


@dataclass
class StageResult:
    stage: str
    choice: str
    winner: str | None
    records: list[BenchmarkRecord]
    fixed: bool = False


# ---------------------------------------------------------------------------
# stages


def select_encoders(data: SampleData, modality_kinds: dict[str, str], cfg: SearchConfig,
                    ledger: Ledger, stats: SearchStats) -> dict[str, StageResult]:
    """Benchmark each candidate encoder with a linear head on its modality alone."""
    out = {}
    for name, mkind in modality_kinds.items():
        fixed = cfg.fixed_encoder(name, mkind)
        if fixed is not None:
            out[name] = StageResult("encoder", fixed, None, [], fixed=True)
            continue
        candidates = cfg.encoder_candidates(name, mkind)
        if not candidates:
            raise StageError(f"no encoder candidates for modality {name!r}")
        records = []
        n_tokens, d_raw = data.input_shapes[name]
        for kind in candidates:
            enc = cfg.model.encoder(kind)
            config = {"modality": name, "input": [int(n_tokens), int(d_raw)],
                      "encoder": enc.to_dict()}
            sub = SampleData({name: data.inputs[name]}, data.labels, data.task, data.num_classes,
                             data.fingerprint)
            records.append(micro_benchmark("encoder", kind, config, ModelDesc({name: enc}), sub,
                                           cfg.train, cfg.metric, ledger, stats))
        try:
            best = select_best(records)
        except StageError:
            raise StageError(f"every encoder candidate diverged for modality {name!r}") from None
        out[name] = StageResult("encoder", candidates[best], records[best].key, records)
    return out


def _encoder_configs(choices: dict[str, StageResult], cfg: SearchConfig) -> dict[str, EncoderConfig]:
    return {name: cfg.model.encoder(res.choice) for name, res in choices.items()}


def _stage_input(data: SampleData) -> list:
    return [[name, [int(s) for s in shape]] for name, shape in data.input_shapes.items()]


def select_fusion_function(encoders: dict[str, StageResult], data: SampleData, cfg: SearchConfig,
                           ledger: Ledger, stats: SearchStats) -> StageResult:
    """Benchmark each fusion function with a linear head on the flat fused vector."""
    if not cfg.fusion_functions:
        raise StageError("no fusion function candidates")
    encs = _encoder_configs(encoders, cfg)
    records = []
    for kind in cfg.fusion_functions:
        config = {"inputs": _stage_input(data),
                  "encoders": {k: v.to_dict() for k, v in encs.items()}, "fusion": kind}
        records.append(micro_benchmark("fusion_function", kind, config, ModelDesc(encs, kind),
                                       data, cfg.train, cfg.metric, ledger, stats))
    try:
        best = select_best(records)
    except StageError:
        raise StageError("every fusion function diverged") from None
    return StageResult("fusion_function", cfg.fusion_functions[best], records[best].key, records)


def select_fusion_network(encoders: dict[str, StageResult], fusion: StageResult, data: SampleData,
                          cfg: SearchConfig, ledger: Ledger, stats: SearchStats) -> StageResult:
    """Benchmark each fusion network end to end with the chosen encoders and fusion."""
    if not cfg.fusion_networks:
        raise StageError("no fusion network candidates")
    encs = _encoder_configs(encoders, cfg)
    records = []
    for kind in cfg.fusion_networks:
        net = cfg.model.encoder(kind, cfg.model.fusion_depth)
        config = {"inputs": _stage_input(data),
                  "encoders": {k: v.to_dict() for k, v in encs.items()},
                  "fusion": fusion.choice, "network": net.to_dict()}
        records.append(micro_benchmark("fusion_network", kind, config,
                                       ModelDesc(encs, fusion.choice, net), data, cfg.train,
                                       cfg.metric, ledger, stats))
    try:
        best = select_best(records)
    except StageError:
        raise StageError("every fusion network diverged") from None
    return StageResult("fusion_network", cfg.fusion_networks[best], records[best].key, records)


# ---------------------------------------------------------------------------
# architecture spec


def _provenance(res: StageResult) -> dict:
    return {"winner": res.winner, "candidates": [r.key for r in res.records],
            "modules": [r.module for r in res.records]}


def build_spec(dataset: Dataset, plan: SamplePlan, fingerprint: str, cfg: SearchConfig,
               metric: str, encoders: dict[str, StageResult], fusion: StageResult,
               network: StageResult) -> dict:
    encs = _encoder_configs(encoders, cfg)
    net = cfg.model.encoder(network.choice, cfg.model.fusion_depth)
    return {
        "format_version": SPEC_FORMAT_VERSION,
        "dataset": dataset.manifest.name,
        "task": dataset.manifest.task,
        "num_classes": dataset.manifest.num_classes,
        "sample": {"N": plan.N, "N_prime": plan.N_prime, "seed": plan.seed,
                   "distance": plan.distance, "fingerprint": fingerprint},
        "encoders": {name: {"kind": res.choice, "fixed": res.fixed, "config": encs[name].to_dict()}
                     for name, res in encoders.items()},
        "fusion": fusion.choice,
        "fusion_network": {"kind": network.choice, "config": net.to_dict()},
        "head": {"d_in": cfg.model.d, "num_classes": dataset.manifest.num_classes},
        "train": cfg.train.to_dict(),
        "metric": metric,
        "tie_break": TIE_BREAK,
        "provenance": {
            "encoders": {name: _provenance(res) for name, res in encoders.items()},
            "fusion_function": _provenance(fusion),
            "fusion_network": _provenance(network),
        },
    }


def spec_model_desc(spec: dict) -> ModelDesc:
    encs = {name: EncoderConfig.from_dict(e["config"]) for name, e in spec["encoders"].items()}
    return ModelDesc(encs, spec["fusion"], EncoderConfig.from_dict(spec["fusion_network"]["config"]))


def provenance_keys(spec: dict) -> list[str]:
    prov = spec["provenance"]
    keys = []
    for section in list(prov["encoders"].values()) + [prov["fusion_function"],
                                                       prov["fusion_network"]]:
        keys.extend(section["candidates"])
    return keys


def check_provenance(spec: dict, ledger: Ledger):
    missing = [k for k in provenance_keys(spec) if k not in ledger]
    if missing:
        raise ProvenanceError(f"{len(missing)} provenance keys missing from the ledger, "
                              f"e.g. {missing[0][:12]}")


def save_spec(spec: dict, path):
    try:
        Path(path).write_text(json.dumps(spec, indent=2) + "\n")
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def load_spec(path) -> dict:
    try:
        spec = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataIOError(f"architecture file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"architecture file {path} is not valid JSON") from exc
    if spec.get("format_version") != SPEC_FORMAT_VERSION:
        raise ValidationError(f"unsupported architecture format {spec.get('format_version')!r}")
    return spec


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class SearchResult:
    spec: dict
    plan: SamplePlan
    stages: dict[str, object]
    stats: SearchStats


def sample_dataset(dataset: Dataset, cfg: SamplingConfig) -> tuple[SamplePlan, SampleData]:
    plan = validated_sample(dataset.labels, cfg.z, cfg.p_hat, cfg.epsilon, cfg.seed,
                            cfg.max_attempts, num_classes=dataset.manifest.num_classes
                            if dataset.manifest.task == "multiclass" else None)
    fp = hashlib.sha256(canonical({"dataset": dataset.fingerprint,
                                   "indices": plan.indices}).encode()).hexdigest()[:16]
    inputs, labels = dataset.take(plan.indices)
    return plan, SampleData(inputs, labels, dataset.manifest.task, dataset.manifest.num_classes, fp)


def run_search(dataset: Dataset | str | Path, cfg: SearchConfig, ledger: Ledger | str | Path | None,
               out=None, progress: Callable[[str], None] | None = None) -> SearchResult:
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(load_manifest(dataset))
    if not isinstance(ledger, Ledger):
        ledger = Ledger(ledger)
    say = progress or (lambda msg: None)
    stats = SearchStats()
    metric_name, _ = metric_for_task(dataset.manifest.task, cfg.metric)

    plan, data = sample_dataset(dataset, cfg.sampling)
    say(f"sampling: N={plan.N} N'={plan.N_prime} distance={plan.distance:.4f}")
    kinds = {m.name: m.kind for m in dataset.manifest.modalities}
    encoders = select_encoders(data, kinds, cfg, ledger, stats)
    say("encoders: " + ", ".join(f"{k}={v.choice}" for k, v in encoders.items()))
    fusion = select_fusion_function(encoders, data, cfg, ledger, stats)
    say(f"fusion function: {fusion.choice}")
    network = select_fusion_network(encoders, fusion, data, cfg, ledger, stats)
    say(f"fusion network: {network.choice}")

    spec = build_spec(dataset, plan, data.fingerprint, cfg, metric_name, encoders, fusion, network)
    if out is not None:
        save_spec(spec, out)
    return SearchResult(spec, plan, {"encoder": encoders, "fusion_function": fusion,
                                     "fusion_network": network}, stats)


def full_train(spec: dict, dataset: Dataset, cfg: TrainConfig, ledger: Ledger | None = None,
               metric: str | None = None):
    """Train the searched architecture on the train split (plateau scheduler on
    the validation split) and score it on the test split."""
    if ledger is not None:
        check_provenance(spec, ledger)
    task = dataset.manifest.task
    metric_name, metric_fn = metric_for_task(task, metric or spec.get("metric"))
    splits = dataset.splits()
    shapes = {k: v.shape[1:] for k, v in dataset.inputs.items()}
    model = MultimodalModel(spec_model_desc(spec), shapes, dataset.manifest.num_classes,
                            np.random.default_rng(cfg.seed))
    tr_x, tr_y = dataset.take(splits["train"])
    val = dataset.take(splits["val"]) if len(splits["val"]) else None
    result = train_model(model, tr_x, tr_y, task, cfg, cfg.seed, val=val)
    te_x, te_y = dataset.take(splits["test"])
    preds = predict(model, te_x, task, cfg.threshold)
    report = metric_fn(preds, te_y, num_classes=dataset.manifest.num_classes)
    return model, report, result
