"""Attack-labelled datasets, ranking metrics, and experiment reports.

A dataset directory is self-contained:

    base.bench            the unlocked circuit
    manifest.json         generation parameters and instance ids
    instances/<id>.json   one locked instance + its runtime labels
    attacks.log.jsonl     one solver-effort record per attack

Instances are stored as replayable descriptions (kind, location names,
seed); loading re-applies the locking and cross-checks key/mask, so a
dataset can never drift from its ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .attack import (
    LABEL_KINDS,
    AttackStatus,
    attack_log_record,
    make_label,
    sat_attack,
)
from .icnet import (
    GraphSample,
    Model,
    ModelConfig,
    fit_linear,
    forward,
    sample_from_instance,
    target_value,
)
from .netlist import Circuit, GateType, emit_bench, parse_bench
from .obfuscate import (
    ObfuscationInstance,
    ObfuscationKind,
    eligible_gates,
    instance_from_json,
    instance_to_json,
    random_obfuscate,
)

DATASET_FORMAT = "locktime-dataset"
DATASET_VERSION = 1


# --- ranking metrics ---

def mse(pred, true) -> float:
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(true, dtype=np.float64).ravel()
    if p.shape != t.shape or p.size == 0:
        raise ValueError(f"bad shapes: {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two same-length sequences of >= 2 values")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt((xc * xc).sum()), np.sqrt((yc * yc).sum())
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for zero-variance input")
    return float((xc * yc).sum() / (sx * sy))


def average_ranks(v) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    v = np.asarray(v, dtype=np.float64).ravel()
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    return pearson(average_ranks(x), average_ranks(y))


# --- dataset records ---

@dataclass
class DatasetRecord:
    instance_id: str
    instance: ObfuscationInstance
    labels: dict  # label kind -> value
    censored: bool
    iterations: int
    status: str

    @property
    def n_locations(self) -> int:
        return len(self.instance.locations)


def records_to_samples(records, config: ModelConfig,
                       label_kind: str) -> list:
    """Graph samples carrying the chosen raw label.

    Pick a raw kind ("wall_seconds", "conflicts") with the exp head —
    its target transform applies the log itself; the pre-logged
    "log1p_*" kinds suit the linear head.
    """
    out = []
    for rec in records:
        out.append(sample_from_instance(rec.instance, config,
                                        rec.labels[label_kind],
                                        rec.instance_id, rec.censored))
    return out


# --- generation ---

def _generate_one(task):
    (bench_text, kind_text, n_locations, obf_seed, timeout, index,
     id_prefix) = task
    base = parse_bench(bench_text)
    kind = ObfuscationKind.parse(kind_text)
    inst = random_obfuscate(base, n_locations, kind, obf_seed)
    r = sat_attack(inst, timeout_seconds=timeout)
    rec_id = f"{id_prefix}{index:05d}"
    labels = {k: make_label(r, k, rec_id).label_value for k in LABEL_KINDS}
    return (index, instance_to_json(inst, "base.bench"), labels,
            r.status == AttackStatus.TIMEOUT, r.iterations, r.status,
            attack_log_record(rec_id, inst, r))


def generate_records(base: Circuit, count: int, kind: ObfuscationKind,
                     location_range, seed: int,
                     timeout_seconds: float | None = None, workers: int = 1,
                     id_prefix: str = "inst-"):
    """Lock, attack, and label ``count`` instances; returns (records, logs).

    Each instance draws its location count and locking seed from an
    independent child of one seed sequence, so results do not depend on
    worker scheduling.
    """
    lo, hi = int(location_range[0]), int(location_range[1])
    n_eligible = len(eligible_gates(base, kind))
    if not 1 <= lo <= hi:
        raise ValueError(f"bad location range [{lo}, {hi}]")
    if hi > n_eligible:
        raise ValueError(f"location range up to {hi} exceeds the "
                         f"{n_eligible} eligible gates for {kind}")
    if count < 1:
        raise ValueError("count must be >= 1")
    bench_text = emit_bench(base)
    tasks = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(count)):
        rng = np.random.default_rng(child)
        n_loc = int(rng.integers(lo, hi + 1))
        obf_seed = int(rng.integers(0, 2**31 - 1))
        tasks.append((bench_text, str(kind), n_loc, obf_seed,
                      timeout_seconds, i, id_prefix))
    if workers > 1:
        with get_context("spawn").Pool(workers) as pool:
            raw = pool.map(_generate_one, tasks)
    else:
        raw = [_generate_one(t) for t in tasks]
    raw.sort(key=lambda item: item[0])
    records, logs = [], []
    for index, doc, labels, censored, iterations, status, log in raw:
        inst = instance_from_json(doc, base)
        records.append(DatasetRecord(f"{id_prefix}{index:05d}", inst, labels,
                                     censored, iterations, status))
        logs.append(log)
    return records, logs


def write_dataset(out_dir, base: Circuit, records, logs,
                  manifest_extra: dict | None = None) -> dict:
    out = Path(out_dir)
    (out / "instances").mkdir(parents=True, exist_ok=True)
    (out / "base.bench").write_text(emit_bench(base))
    ids = []
    for rec in records:
        doc = {
            "id": rec.instance_id,
            "obfuscation": instance_to_json(rec.instance, "base.bench"),
            "labels": rec.labels,
            "censored": rec.censored,
            "iterations": rec.iterations,
            "status": rec.status,
        }
        (out / "instances" / f"{rec.instance_id}.json").write_text(
            json.dumps(doc, sort_keys=True, indent=1) + "\n")
        ids.append(rec.instance_id)
    with (out / "attacks.log.jsonl").open("w") as fh:
        for log in logs:
            fh.write(json.dumps(log, sort_keys=True) + "\n")
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "base": "base.bench",
        "count": len(records),
        "label_kinds": list(LABEL_KINDS),
        "instances": ids,
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


def generate_dataset(base: Circuit, out_dir, count: int,
                     kind: ObfuscationKind, location_range, seed: int,
                     timeout_seconds: float | None = None,
                     workers: int = 1):
    """generate_records + write_dataset; returns (records, manifest)."""
    records, logs = generate_records(base, count, kind, location_range, seed,
                                     timeout_seconds, workers)
    manifest = write_dataset(out_dir, base, records, logs, {
        "kind": str(kind),
        "location_range": [int(location_range[0]), int(location_range[1])],
        "seed": seed,
        "timeout_seconds": timeout_seconds,
    })
    return records, manifest


def load_dataset(dataset_dir):
    """Read a dataset directory; returns (base, records, manifest)."""
    root = Path(dataset_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest.get("format") != DATASET_FORMAT:
        raise ValueError(f"not a dataset directory: {dataset_dir}")
    if manifest.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {manifest.get('version')}")
    base = parse_bench((root / manifest["base"]).read_text())
    records = []
    for rec_id in manifest["instances"]:
        doc = json.loads((root / "instances" / f"{rec_id}.json").read_text())
        inst = instance_from_json(doc["obfuscation"], base)
        records.append(DatasetRecord(doc["id"], inst, doc["labels"],
                                     doc["censored"], doc["iterations"],
                                     doc["status"]))
    return base, records, manifest


# --- model evaluation ---

@dataclass
class MetricsReport:
    n: int
    mse: float
    pearson: float
    spearman: float
    slope: float
    intercept: float

    def to_dict(self) -> dict:
        return {"n": self.n, "mse": self.mse, "pearson": self.pearson,
                "spearman": self.spearman, "slope": self.slope,
                "intercept": self.intercept}


def evaluate(model: Model, samples) -> MetricsReport:
    """Latent-vs-target metrics on the model's training scale.

    Zero-variance predictions or targets make the correlations NaN
    rather than failing the whole report.
    """
    if not samples:
        raise ValueError("no samples to evaluate")
    zs, ts = [], []
    for smp in samples:
        zs.append(forward(model, smp.a, smp.x).z)
        ts.append(target_value(model.config, smp.label))
    z = np.asarray(zs)
    t = np.asarray(ts)
    try:
        pr = pearson(z, t)
        sr = spearman(z, t)
    except ValueError:
        pr = sr = float("nan")
    if z.size >= 2 and np.ptp(z) > 0:
        w = fit_linear(z[:, None], t)
        slope, intercept = float(w[0]), float(w[1])
    else:
        slope, intercept = float("nan"), float(t.mean() - z.mean())
    return MetricsReport(len(samples), mse(z, t), pr, sr, slope, intercept)


def mean_predictor_mse(train_targets, test_targets) -> float:
    """MSE of always predicting the training-set mean target."""
    tr = np.asarray(train_targets, dtype=np.float64)
    te = np.asarray(test_targets, dtype=np.float64)
    if tr.size == 0 or te.size == 0:
        raise ValueError("empty target list")
    return float(np.mean((te - tr.mean()) ** 2))


# --- attention / attribution reports ---

@dataclass
class AttentionReport:
    input_shares: dict  # feature name -> share of input attribution
    feat_attention: tuple | None  # mean feature attention (attention mode)
    gate_entropy: float | None  # mean normalized gate-attention entropy

    def to_dict(self) -> dict:
        return {"input_shares": self.input_shares,
                "feat_attention": (list(self.feat_attention)
                                   if self.feat_attention is not None else None),
                "gate_entropy": self.gate_entropy}


def _one_hot_type_names():
    from .netlist import ONE_HOT_INDEX
    pairs = sorted(ONE_HOT_INDEX.items(), key=lambda kv: kv[1])
    return [gt.name for gt, _ in pairs]


def attention_report(model: Model, samples) -> AttentionReport:
    """How much each input feature drives the prediction.

    Input attribution chains the absolute conv weights |W0|·|W1|·…,
    weights the hidden columns by the mean feature attention (uniform
    for sum/mean aggregation), and normalizes to shares.  Gate entropy
    is the mean normalized entropy of the gate attention, 1.0 meaning
    uniform spread (only defined in attention mode).
    """
    if not samples:
        raise ValueError("no samples to report on")
    cfg = model.config
    a_feats, entropies = [], []
    for smp in samples:
        pred = forward(model, smp.a, smp.x)
        if pred.a_feat is not None:
            a_feats.append(pred.a_feat)
        if pred.a_gate is not None and pred.a_gate.size > 1:
            b = np.clip(pred.a_gate, 1e-300, None)
            entropies.append(float(-(b * np.log(b)).sum() / np.log(b.size)))
    if a_feats:
        hidden_w = np.mean(a_feats, axis=0)
        feat_attention = tuple(float(v) for v in hidden_w)
    else:
        hidden_w = np.full(cfg.hidden_dims[-1], 1.0 / cfg.hidden_dims[-1])
        feat_attention = None
    chain = np.abs(model.params["conv0"])
    for l in range(1, cfg.conv_layers):
        chain = chain @ np.abs(model.params[f"conv{l}"])
    attribution = chain @ hidden_w
    total = attribution.sum()
    shares = attribution / total if total > 0 else np.full_like(attribution,
                                                                1.0 / attribution.size)
    if cfg.feature_set == "location_only":
        input_shares = {"mask": float(shares[0])}
    else:
        input_shares = {"mask": float(shares[0])}
        for i, name in enumerate(_one_hot_type_names()):
            input_shares[f"type:{name}"] = float(shares[1 + i])
    gate_entropy = float(np.mean(entropies)) if entropies else None
    return AttentionReport(input_shares, feat_attention, gate_entropy)


def dataset_report(records) -> dict:
    """Effort summary of an attack dataset (JSON-safe)."""
    if not records:
        raise ValueError("empty dataset")
    locs = [rec.n_locations for rec in records]
    conflicts = [rec.labels["conflicts"] for rec in records]
    seconds = [rec.labels["wall_seconds"] for rec in records]
    report = {
        "count": len(records),
        "censored": sum(1 for rec in records if rec.censored),
        "locations": {"min": int(min(locs)), "max": int(max(locs)),
                      "mean": float(np.mean(locs))},
        "conflicts": {"min": float(min(conflicts)), "max": float(max(conflicts)),
                      "median": float(np.median(conflicts))},
        "wall_seconds": {"min": float(min(seconds)), "max": float(max(seconds)),
                         "median": float(np.median(seconds))},
    }
    try:
        report["spearman_locations_conflicts"] = spearman(locs, conflicts)
    except ValueError:
        report["spearman_locations_conflicts"] = float("nan")
    return report


# --- synthetic circuits and datasets ---

def chain_circuit(n_gates: int = 120) -> Circuit:
    """An inverter chain: src -> n0 -> ... -> n<k-1> (output)."""
    if n_gates < 1:
        raise ValueError("need at least one gate")
    lines = ["INPUT(src)"]
    prev = "src"
    for i in range(n_gates):
        lines.append(f"n{i} = NOT({prev})")
        prev = f"n{i}"
    lines.append(f"OUTPUT({prev})")
    return parse_bench("\n".join(lines) + "\n")


def synthetic_mask_records(count: int = 300, seed: int = 0,
                           n_gates: int = 120, coeff: float = 0.05,
                           noise: float = 0.01, m_range=(1, 8)):
    """Inverter-chain instances whose log label is linear in the mask count.

    Each instance replaces m random chain gates with 1-input LUTs and
    gets the label expm1(coeff * m + N(0, noise^2)), i.e. a log1p-scale
    label of coeff * m plus Gaussian noise.  Returns (base, records).
    """
    base = chain_circuit(n_gates)
    kind = ObfuscationKind.parse("lut1")
    rng = np.random.default_rng(seed)
    lo, hi = m_range
    records = []
    for i in range(count):
        m = int(rng.integers(lo, hi + 1))
        inst = random_obfuscate(base, m, kind, int(rng.integers(0, 2**31 - 1)))
        g = coeff * m + rng.normal(0.0, noise)
        labels = {"synthetic": float(np.expm1(g))}
        records.append(DatasetRecord(f"syn-{i:05d}", inst, labels, False, 0,
                                     "SYNTHETIC"))
    return base, records
