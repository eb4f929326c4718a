"""Campaign orchestration: sweep definition, execution, result tables.

A campaign evaluates (design point x BER x target x mitigation x seed) runs
against per-point golden baselines. The golden model is built (and, for the
CTR experiment, trained) once per design point; each run derives its seed
as hash(base seed, point index, run index), draws an error map, applies it,
measures, and restores the model by re-applying the map (bit-flip
involution). Restoration is verified against the golden parameter checksum,
so runs are order-independent.

Inputs are fixed per design point; only the error map is re-randomized
across the repeated runs of a sweep cell.
"""

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .datagen import gen_batch, gen_labeled, split_indices, subset
from .errors import ConfigError
from .inject import InjectionConfig, apply_error_map, build_error_map, sbp_mask
from .metrics import (
    DEFAULT_INVALID_THRESHOLD,
    DISPLAY_ZERO_BELOW,
    INVALID_INF,
    INVALID_NAN,
    NUMERIC,
    aggregate_runs,
    auc_roc,
    rmse_with_validity,
    sanitize_scores,
)
from .mitigate import MitigationPolicy
from .model import (
    AbftContext,
    DummyModelConfig,
    TrainConfig,
    build_ctr,
    build_dummy,
    forward_batch,
    train_ctr,
)
from .seeding import mix

EXPERIMENTS = ("dummy_rmse", "ctr_auc")
TARGETS = ("entire_model", "mlp", "embedding")
MITIGATIONS = ("none", "abft", "clip", "sbp")
FORMATS = ("csv", "jsonl")

DEFAULT_BERS = [10.0**-k for k in range(9, 1, -1)]  # 1e-9 .. 1e-2, decade steps

# seed-derivation domain tags; run indices stay far below 2**40
_TAG_MODEL = 2**40
_TAG_DATA = 2**40 + 1
_TAG_TRAIN = 2**40 + 2

CSV_COLUMNS = [
    "experiment",
    "mlp_depth",
    "mlp_hidden",
    "embed_dim",
    "dense_dim",
    "sparse_dim",
    "sparsity",
    "target",
    "mitigation",
    "clip_mode",
    "clip_T",
    "ber",
    "run_seed",
    "metric",
    "value",
    "n_inf",
    "n_nan",
    "classification",
]


@dataclass
class CampaignSpec:
    """A full sweep definition with documented defaults."""

    experiment: str = "dummy_rmse"
    mlp_depth: list[int] = field(default_factory=lambda: [1, 2])
    mlp_hidden: list[int] = field(default_factory=lambda: [64, 128, 256, 512])
    embed_dim: list[int] = field(default_factory=lambda: [64, 128, 256, 512])
    dense_dim: int = 128
    sparse_dim: int = 8192
    sparsity: list[float] = field(default_factory=lambda: [0.001, 0.01])
    n_samples: int = 256
    train_samples: int = 20000
    noise: float = 1.0
    use_fm: bool = False
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 256
    patience: int = 3
    ber: list[float] = field(default_factory=lambda: list(DEFAULT_BERS))
    targets: list[str] = field(default_factory=lambda: ["entire_model"])
    mitigation: list[str] = field(default_factory=lambda: ["none"])
    clip_mode: str = "clamp"
    clip_threshold: float = 6.0
    clip_range: float = 6.0
    sbp_fields: list[str] = field(default_factory=lambda: ["sign", "exponent"])
    abft_tolerance: float = 1e-4
    abft_max_retries: int = 3
    invalid_threshold: int = DEFAULT_INVALID_THRESHOLD
    runs: int = 10
    seed: int = 0
    workers: int = 1
    output: str = "results.csv"
    format: str = "csv"

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        for name in ("mlp_depth", "mlp_hidden", "embed_dim", "sparsity", "ber"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be a non-empty list")
        for b in self.ber:
            if not 0.0 <= b <= 1.0:
                raise ConfigError(f"ber values must be within [0, 1], got {b}")
        for s in self.sparsity:
            if not 0.0 < s < 1.0:
                raise ConfigError(f"sparsity values must be in (0, 1), got {s}")
        for t in self.targets:
            if t not in TARGETS:
                raise ConfigError(f"targets entries must be one of {TARGETS}")
        for m in self.mitigation:
            if m not in MITIGATIONS:
                raise ConfigError(f"mitigation entries must be one of {MITIGATIONS}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if self.invalid_threshold < 1:
            raise ConfigError("invalid_threshold must be >= 1")
        if self.clip_range <= 0 or self.clip_threshold <= 0:
            raise ConfigError("clip_range and clip_threshold must be positive")
        for grid_field in ("mlp_depth", "mlp_hidden", "embed_dim"):
            for v in getattr(self, grid_field):
                if v < 1:
                    raise ConfigError(f"{grid_field} entries must be >= 1")

    def points(self) -> list["DesignPoint"]:
        combos = itertools.product(
            self.mlp_depth, self.mlp_hidden, self.embed_dim, self.sparsity
        )
        return [
            DesignPoint(
                index=i,
                model_cfg=DummyModelConfig(
                    mlp_depth=d,
                    mlp_hidden=h,
                    embed_dim=e,
                    dense_dim=self.dense_dim,
                    sparse_dim=self.sparse_dim,
                ),
                sparsity=s,
            )
            for i, (d, h, e, s) in enumerate(combos)
        ]

    def clip_policy(self) -> MitigationPolicy:
        return MitigationPolicy(
            kind="clip",
            clip_mode=self.clip_mode,
            clip_threshold=self.clip_threshold,
            clip_range=(-self.clip_range, self.clip_range),
        )

    def abft_policy(self) -> MitigationPolicy:
        return MitigationPolicy(
            kind="abft",
            abft_tolerance=self.abft_tolerance,
            abft_max_retries=self.abft_max_retries,
        )


@dataclass(frozen=True)
class DesignPoint:
    index: int
    model_cfg: DummyModelConfig
    sparsity: float


@dataclass
class RunRecord:
    """One measured run; round-trips losslessly through csv/jsonl."""

    experiment: str
    mlp_depth: int
    mlp_hidden: int
    embed_dim: int
    dense_dim: int
    sparse_dim: int
    sparsity: float
    target: str
    mitigation: str
    clip_mode: str
    clip_T: str
    ber: float
    run_seed: int
    metric: str
    value: float
    n_inf: int
    n_nan: int
    classification: str
    wall_time: float = 0.0


def run_seed_for(base_seed: int, point_index: int, run_index: int) -> int:
    """Stable per-run seed; shared across bers/targets/mitigations."""
    return mix(base_seed, point_index, run_index)


def _golden_outputs(model, batch, clip_policy):
    return forward_batch(model, batch.dense, batch.sparse_indices, clip_policy)


def _run_point(spec: CampaignSpec, point: DesignPoint) -> list[RunRecord]:
    cfg = point.model_cfg
    model_seed = mix(spec.seed, point.index, _TAG_MODEL)
    data_seed = mix(spec.seed, point.index, _TAG_DATA)

    if spec.experiment == "dummy_rmse":
        model = build_dummy(cfg, model_seed)
        batch = gen_batch(
            spec.n_samples, cfg.dense_dim, cfg.sparse_dim, point.sparsity, data_seed
        )
        labels = None
        metric = "rmse"
    else:
        model = build_ctr(cfg, spec.use_fm, model_seed)
        full, _ = gen_labeled(
            spec.train_samples, cfg, point.sparsity, spec.noise, data_seed
        )
        tcfg = TrainConfig(
            learning_rate=spec.learning_rate,
            epochs=spec.epochs,
            batch_size=spec.batch_size,
            patience=spec.patience,
            seed=mix(spec.seed, point.index, _TAG_TRAIN),
        )
        model, _ = train_ctr(model, full, tcfg)
        _, _, test_idx = split_indices(full.n)
        batch = subset(full, test_idx)
        labels = batch.labels
        metric = "auc"

    golden_crc = model.crc32()
    clip_policy = spec.clip_policy()
    golden_plain = _golden_outputs(model, batch, None)
    golden_clip = (
        _golden_outputs(model, batch, clip_policy)
        if "clip" in spec.mitigation
        else None
    )
    abft_ctx_proto = AbftContext(model, spec.abft_policy()) if "abft" in spec.mitigation else None
    sbp_protect = sbp_mask(spec.sbp_fields)

    records: list[RunRecord] = []
    for ber, target, mitig in itertools.product(spec.ber, spec.targets, spec.mitigation):
        for run in range(spec.runs):
            seed = run_seed_for(spec.seed, point.index, run)
            started = time.perf_counter()
            try:
                rec = _one_run(
                    spec, point, model, batch, labels, metric,
                    golden_plain, golden_clip, clip_policy, abft_ctx_proto,
                    sbp_protect, ber, target, mitig, seed,
                )
            except Exception as exc:  # record the failure, keep sweeping
                rec = _record_for(
                    spec, point, target, mitig, ber, seed, metric,
                    value=math.nan, n_inf=0, n_nan=0, classification=f"error:{type(exc).__name__}",
                )
            rec.wall_time = time.perf_counter() - started
            records.append(rec)
            if model.crc32() != golden_crc:
                raise RuntimeError(
                    "model failed to restore to golden state after a run"
                )
    return records


def _record_for(spec, point, target, mitig, ber, seed, metric, value, n_inf, n_nan, classification):
    cfg = point.model_cfg
    is_clip = mitig == "clip"
    return RunRecord(
        experiment=spec.experiment,
        mlp_depth=cfg.mlp_depth,
        mlp_hidden=cfg.mlp_hidden,
        embed_dim=cfg.embed_dim,
        dense_dim=cfg.dense_dim,
        sparse_dim=cfg.sparse_dim,
        sparsity=point.sparsity,
        target=target,
        mitigation=mitig,
        clip_mode=spec.clip_mode if is_clip else "",
        clip_T=repr(float(spec.clip_threshold)) if is_clip else "",
        ber=ber,
        run_seed=seed,
        metric=metric,
        value=value,
        n_inf=n_inf,
        n_nan=n_nan,
        classification=classification,
    )


def _one_run(
    spec, point, model, batch, labels, metric, golden_plain, golden_clip,
    clip_policy, abft_ctx_proto, sbp_protect, ber, target, mitig, seed,
) -> RunRecord:
    protect = sbp_protect if mitig == "sbp" else 0
    icfg = InjectionConfig(ber=ber, targets=target, protected_bits=protect, seed=seed)
    emap = build_error_map(model, icfg)
    apply_error_map(model, emap)
    try:
        clip = clip_policy if mitig == "clip" else None
        ctx = None
        if mitig == "abft":
            ctx = abft_ctx_proto  # golden checksums, per-run counters
            ctx.reset_counters()
        observed = forward_batch(model, batch.dense, batch.sparse_indices, clip, ctx)
    finally:
        apply_error_map(model, emap)  # involution restores golden bits

    if metric == "rmse":
        golden = golden_clip if mitig == "clip" else golden_plain
        rep = rmse_with_validity(golden, observed, spec.invalid_threshold)
        return _record_for(
            spec, point, target, mitig, ber, seed, metric,
            value=rep.rmse, n_inf=rep.n_inf, n_nan=rep.n_nan,
            classification=rep.classification,
        )
    n_nan = int(np.count_nonzero(np.isnan(observed)))
    n_inf = int(np.count_nonzero(np.isinf(observed)))
    value = auc_roc(sanitize_scores(observed), labels)
    if n_nan >= spec.invalid_threshold:
        cls = INVALID_NAN
    elif n_inf >= spec.invalid_threshold:
        cls = INVALID_INF
    else:
        cls = NUMERIC
    return _record_for(
        spec, point, target, mitig, ber, seed, metric,
        value=value, n_inf=n_inf, n_nan=n_nan, classification=cls,
    )


def _point_task(args):
    spec, point = args
    return point.index, _run_point(spec, point)


def run_campaign(spec: CampaignSpec) -> list[RunRecord]:
    """Execute the sweep; records come back in canonical order."""
    spec.validate()
    points = spec.points()
    if spec.workers == 1 or len(points) == 1:
        chunks = [(p.index, _run_point(spec, p)) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(_point_task, [(spec, p) for p in points]))
    chunks.sort(key=lambda c: c[0])
    return [rec for _, recs in chunks for rec in recs]


# --- result emission --------------------------------------------------------


def _fmt_float(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _parse_float(s: str) -> float:
    return float(s)


def emit_results(records, fmt: str, path, include_timing: bool = False) -> None:
    """Write records as csv or jsonl; identical records give identical bytes.

    Wall times live in a separate optional column enabled by include_timing,
    so default output is deterministic for a deterministic campaign.
    """
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    columns = CSV_COLUMNS + (["wall_time"] if include_timing else [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for r in records:
                writer.writerow([_cell(r, c) for c in columns])
        else:
            for r in records:
                obj = {c: _json_cell(r, c) for c in columns}
                fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def _cell(r: RunRecord, column: str) -> str:
    v = getattr(r, column)
    if column in ("sparsity", "ber", "value", "wall_time"):
        return _fmt_float(v)
    return str(v)


def _json_cell(r: RunRecord, column: str):
    v = getattr(r, column)
    if column in ("sparsity", "ber", "value", "wall_time"):
        v = float(v)
        return _fmt_float(v) if not math.isfinite(v) else v
    return v


_INT_COLUMNS = {"mlp_depth", "mlp_hidden", "embed_dim", "dense_dim", "sparse_dim",
                "run_seed", "n_inf", "n_nan"}
_FLOAT_COLUMNS = {"sparsity", "ber", "value", "wall_time"}


def read_results(path, fmt: str | None = None) -> list[RunRecord]:
    """Load a results file back into records (inverse of emit_results)."""
    if fmt is None:
        fmt = "jsonl" if str(path).endswith(".jsonl") else "csv"
    rows: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        if fmt == "csv":
            rows = list(csv.DictReader(fh))
        else:
            rows = [json.loads(line) for line in fh if line.strip()]
    records = []
    for row in rows:
        kwargs = {}
        for f in dc_fields(RunRecord):
            if f.name not in row:
                kwargs[f.name] = 0.0 if f.name == "wall_time" else ""
                continue
            raw = row[f.name]
            if f.name in _INT_COLUMNS:
                kwargs[f.name] = int(raw)
            elif f.name in _FLOAT_COLUMNS:
                kwargs[f.name] = _parse_float(raw) if isinstance(raw, str) else float(raw)
            else:
                kwargs[f.name] = str(raw)
        records.append(RunRecord(**kwargs))
    return records


_GROUP_KEY = [
    "experiment", "mlp_depth", "mlp_hidden", "embed_dim", "dense_dim",
    "sparse_dim", "sparsity", "target", "mitigation", "ber",
]


def aggregate_table(records, figure_rule: bool = False) -> str:
    """Aggregate runs per sweep cell into a CSV table.

    With figure_rule=True the headline cell mirrors the published heatmaps:
    a cell is marked inf/nan when at least half its runs are so classified
    (nan takes precedence), and numeric means below 0.005 display as 0.0.
    """
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        key = tuple(getattr(r, k) for k in _GROUP_KEY)
        groups.setdefault(key, []).append(r)
    out = io.StringIO()
    columns = _GROUP_KEY + ["runs", "invalid_inf", "invalid_nan", "mean", "min", "max"]
    if figure_rule:
        columns.append("cell")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for key in sorted(groups, key=_group_sort_key):
        runs = groups[key]
        n_inf_runs = sum(1 for r in runs if r.classification == INVALID_INF)
        n_nan_runs = sum(1 for r in runs if r.classification == INVALID_NAN)
        numeric_values = [r.value for r in runs if r.classification == NUMERIC]
        agg = aggregate_runs(numeric_values if numeric_values else [math.nan])
        row = [
            _fmt_float(v) if isinstance(v, float) else str(v) for v in key
        ] + [
            str(len(runs)),
            str(n_inf_runs),
            str(n_nan_runs),
            _fmt_float(agg.mean) if agg.mean is not None else "nan",
            _fmt_float(agg.min) if agg.min is not None else "nan",
            _fmt_float(agg.max) if agg.max is not None else "nan",
        ]
        if figure_rule:
            row.append(_figure_cell(runs, n_inf_runs, n_nan_runs, agg))
        writer.writerow(row)
    return out.getvalue()


def _group_sort_key(key: tuple):
    return tuple(str(v) if isinstance(v, str) else v for v in key)


def _figure_cell(runs, n_inf_runs, n_nan_runs, agg) -> str:
    invalid = n_inf_runs + n_nan_runs
    if invalid * 2 >= len(runs):
        return INVALID_NAN if n_nan_runs >= n_inf_runs else INVALID_INF
    if agg.mean is None:
        return "nan"
    if runs[0].metric == "rmse" and agg.mean < DISPLAY_ZERO_BELOW:
        return "0.0"
    return _fmt_float(agg.mean)


# --- config files -----------------------------------------------------------
#
# Flat UTF-8 key/value files: `key = value`, one per line, `#` starts a
# comment, lists in brackets `[a, b, c]`. The key set matches CampaignSpec
# exactly; unknown or duplicate keys are rejected.

_LIST_FIELDS = {
    "mlp_depth": int,
    "mlp_hidden": int,
    "embed_dim": int,
    "sparsity": float,
    "ber": float,
    "targets": str,
    "mitigation": str,
    "sbp_fields": str,
}
_SCALAR_FIELDS = {
    "experiment": str,
    "dense_dim": int,
    "sparse_dim": int,
    "n_samples": int,
    "train_samples": int,
    "noise": float,
    "use_fm": bool,
    "learning_rate": float,
    "epochs": int,
    "batch_size": int,
    "patience": int,
    "clip_mode": str,
    "clip_threshold": float,
    "clip_range": float,
    "abft_tolerance": float,
    "abft_max_retries": int,
    "invalid_threshold": int,
    "runs": int,
    "seed": int,
    "workers": int,
    "output": str,
    "format": str,
}


def _parse_scalar(raw: str, kind, where: str):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("true", "yes", "1"):
            return True
        if raw.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected {kind.__name__}, got {raw!r}") from None
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    return raw


def parse_config(path) -> CampaignSpec:
    """Parse and validate a campaign config file, filling defaults."""
    spec = CampaignSpec()
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            where = f"{path}:{lineno}"
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{where}: expected 'key = value'")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key in seen:
                raise ConfigError(f"{where}: duplicate key {key!r}")
            seen.add(key)
            if key in _LIST_FIELDS:
                kind = _LIST_FIELDS[key]
                if raw.startswith("["):
                    if not raw.endswith("]"):
                        raise ConfigError(f"{where}: unterminated list")
                    body = raw[1:-1].strip()
                    items = [s for s in (p.strip() for p in body.split(",")) if s]
                    value = [_parse_scalar(s, kind, where) for s in items]
                else:
                    value = [_parse_scalar(raw, kind, where)]
                setattr(spec, key, value)
            elif key in _SCALAR_FIELDS:
                setattr(spec, key, _parse_scalar(raw, _SCALAR_FIELDS[key], where))
            else:
                raise ConfigError(f"{where}: unknown key {key!r}")
    try:
        spec.validate()
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return spec
