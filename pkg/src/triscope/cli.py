"""Command-line pipeline: ingest -> decompose -> rank -> trajectories ->
cluster -> events, plus the synthetic-log generator.

Every stage persists its result as text (CSV / JSON / the tensor and model
formats), so stages compose across processes and any stage can be re-run
from the previous stage's files. All outputs are byte-deterministic for a
fixed config and seed.

Exit codes: 0 ok, 2 config/usage, 3 ingest, 4 decomposition (incl. rank and
trajectories, which consume the model), 5 clustering/events, 6 I/O (missing
intermediates, unwritable outputs).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, backends
from .anomaly import user_scores
from .clustering import center_trajectory, cut, detect_events, ward_cluster
from .errors import DegenerateInputError, InvalidInputError, NumericalError, TriscopeError
from .ingest import (
    FeatureTensor,
    HmmConfig,
    build_feature_tensor,
    compute_deltas,
    parse_log,
    preprocess,
    write_log,
)
from .synth import RNG_NAME, EventSpec, GroundTruth, SynthConfig, generate
from .tensor import read_tensor_text, write_tensor_text
from .trajectory import Trajectory, build_trajectories
from .tucker import anova_interaction, hooi, load_model, save_model, scree_select

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_DECOMPOSITION = 4
EXIT_CLUSTERING = 5
EXIT_IO = 6

_STAGE_EXIT = {
    "synth": EXIT_CONFIG,
    "ingest": EXIT_INGEST,
    "decompose": EXIT_DECOMPOSITION,
    "rank": EXIT_DECOMPOSITION,
    "trajectories": EXIT_DECOMPOSITION,
    "cluster": EXIT_CLUSTERING,
    "events": EXIT_CLUSTERING,
}


class StageError(Exception):
    """Wraps a stage failure with its exit code."""

    def __init__(self, stage: str, message: str, code: int):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.code = code


@dataclass(frozen=True)
class PipelineConfig:
    log: str | None = None
    out_dir: str = "out"
    window_start: int | None = None
    window_hours: int = 720
    min_obs: int = 6
    hmm_seed: int = 0
    hmm_tol: float = 1e-6
    hmm_max_iter: int = 200
    max_p: int = 3
    max_q: int = 3
    max_r: int = 3
    sweep_budget: int = 27
    tucker_tol: float = 1e-6
    tucker_max_iter: int = 50
    n_components: int | None = None
    cutoff: float = 0.7
    k_mad: float = 3.0
    min_duration: int = 5
    gap_hours: int = 2


def parse_window_start(value) -> int | None:
    """Accept integer Unix seconds or an ISO-8601 instant (UTC assumed)."""
    if value is None:
        return None
    if isinstance(value, int):
        return value
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text)
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse window start {value!r}: {exc}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _fr(x) -> str:
    """Deterministic shortest-roundtrip float formatting."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# config assembly
# ---------------------------------------------------------------------------


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise InvalidInputError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidInputError(f"config file {p} must hold a JSON object")
    return data


def build_pipeline_config(args: argparse.Namespace) -> tuple[PipelineConfig, dict | None]:
    """Merge defaults < config file < CLI flags; returns (config, synth section)."""
    data = _load_config_file(getattr(args, "config", None))
    synth_section = data.pop("synth", None)

    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
    cfg = PipelineConfig(**data)

    overrides = {}
    for name in known:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if "window_start" in overrides or cfg.window_start is not None:
        ws = overrides.get("window_start", cfg.window_start)
        overrides["window_start"] = parse_window_start(ws)
    cfg = replace(cfg, **overrides)

    if cfg.window_hours < 1:
        raise InvalidInputError("window_hours must be >= 1")
    if cfg.cutoff <= 0:
        raise InvalidInputError("cutoff must be positive")
    if min(cfg.max_p, cfg.max_q, cfg.max_r) < 1:
        raise InvalidInputError("grid bounds must be >= 1")
    if cfg.min_obs < 4:
        raise InvalidInputError("min_obs must be >= 4 (two observations per state)")
    return cfg, synth_section


def build_synth_config(args: argparse.Namespace, section: dict | None) -> SynthConfig:
    data = dict(section or {})
    events = data.pop("events", None)
    if events is not None:
        data["event_specs"] = tuple(
            EventSpec(int(e["start_hour"]), int(e["end_hour"]), float(e["affected_fraction"]))
            for e in events
        )
    if "persistent_anomalous" in data:
        data["persistent_anomalous"] = tuple(int(u) for u in data["persistent_anomalous"])

    if getattr(args, "users", None) is not None:
        data["n_users"] = args.users
    if getattr(args, "hours", None) is not None:
        data["window_hours"] = args.hours
    if getattr(args, "base_rate", None) is not None:
        data["base_rate"] = args.base_rate
    if getattr(args, "burst_rate", None) is not None:
        data["burst_rate"] = args.burst_rate
    if getattr(args, "anomalous", None):
        data["persistent_anomalous"] = tuple(
            int(tok) for tok in args.anomalous.split(",") if tok.strip() != ""
        )
    if getattr(args, "event", None):
        specs = []
        for text in args.event:
            parts = text.split(":")
            if len(parts) != 3:
                raise InvalidInputError(f"event spec must be start:end:fraction, got {text!r}")
            specs.append(EventSpec(int(parts[0]), int(parts[1]), float(parts[2])))
        data["event_specs"] = tuple(specs)
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if "n_users" not in data:
        raise InvalidInputError("synth needs --users or a config 'synth' section with n_users")
    return SynthConfig(**data)


# ---------------------------------------------------------------------------
# stage I/O helpers
# ---------------------------------------------------------------------------


def _out(cfg: PipelineConfig) -> Path:
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _need(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageError(stage, f"required intermediate missing: {path}", EXIT_IO)
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_meta(out_dir: Path, stage: str) -> dict:
    return json.loads(_need(out_dir / "tensor_meta.json", stage).read_text(encoding="utf-8"))


def _load_trajectories(path: Path) -> list[Trajectory]:
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",") if lines else []
    if len(header) < 3 or header[1] != "t" or header[2] != "c1":
        raise InvalidInputError(f"{path} is not a trajectories CSV")
    order: list[str] = []
    rows: dict[str, list[tuple[int, list[float]]]] = {}
    for line in lines[1:]:
        parts = line.split(",")
        uid, t = parts[0], int(parts[1])
        if uid not in rows:
            rows[uid] = []
            order.append(uid)
        rows[uid].append((t, [float(v) for v in parts[2:]]))
    out = []
    for uid in order:
        pts = sorted(rows[uid])
        out.append(Trajectory(uid, np.array([c for _, c in pts])))
    return out


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_synth(cfg: PipelineConfig, synth_cfg: SynthConfig) -> GroundTruth:
    out = _out(cfg)
    log, truth = generate(synth_cfg)
    write_log(log, out / "log.csv")
    _write_json(
        out / "ground_truth.json",
        {
            "anomalous_user_ids": list(truth.anomalous_user_ids),
            "events": [dict(e) for e in truth.events],
            "rng": RNG_NAME,
            "seed": synth_cfg.seed,
        },
    )
    return truth


def stage_ingest(cfg: PipelineConfig) -> FeatureTensor:
    out = _out(cfg)
    log_path = cfg.log if cfg.log is not None else str(out / "log.csv")
    if not Path(log_path).exists():
        raise StageError("ingest", f"input log not found: {log_path}", EXIT_IO)
    log = parse_log(log_path, cfg.window_start, cfg.window_hours)
    hourly = compute_deltas(log)
    ft = build_feature_tensor(
        hourly,
        HmmConfig(seed=cfg.hmm_seed, min_obs=cfg.min_obs, tol=cfg.hmm_tol, max_iter=cfg.hmm_max_iter),
    )
    ft = preprocess(ft)
    write_tensor_text(ft.tensor, out / "tensor.txt")
    prov = ft.provenance
    _write_json(
        out / "tensor_meta.json",
        {
            "user_ids": list(ft.user_ids),
            "feature_names": list(ft.feature_names),
            "window_start": int(log.window_start),
            "window_hours": int(log.window_hours),
            "scale_mean": [float(v) for v in ft.scale_mean],
            "scale_sd": [float(v) for v in ft.scale_sd],
            "provenance_counts": {
                "hour_fit": int((prov == 2).sum()),
                "fallback": int((prov == 1).sum()),
                "zero": int((prov == 0).sum()),
            },
            "hmm": {
                "seed": cfg.hmm_seed,
                "min_obs": cfg.min_obs,
                "tol": cfg.hmm_tol,
                "max_iter": cfg.hmm_max_iter,
            },
        },
    )
    return ft


def stage_decompose(cfg: PipelineConfig):
    out = _out(cfg)
    x = read_tensor_text(_need(out / "tensor.txt", "decompose"))
    i, j, k = x.shape

    report = anova_interaction(x)
    _write_json(out / "anova.json", report.as_dict())

    result = scree_select(
        x,
        min(cfg.max_p, i),
        min(cfg.max_q, j),
        min(cfg.max_r, k),
        sweep_budget=cfg.sweep_budget,
        tol=cfg.tucker_tol,
        max_iter=cfg.tucker_max_iter,
    )
    with open(out / "scree.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("p,q,r,fit_percent,selected\n")
        for p, q, r, fit in result.grid:
            sel = 1 if (p, q, r) == result.selected else 0
            f.write(f"{p},{q},{r},{_fr(fit)},{sel}\n")

    p, q, r = result.selected
    model = hooi(x, p, q, r, tol=cfg.tucker_tol, max_iter=cfg.tucker_max_iter)
    save_model(model, out / "model.txt")
    return model


def stage_rank(cfg: PipelineConfig):
    out = _out(cfg)
    model = load_model(_need(out / "model.txt", "rank"))
    meta = _read_meta(out, "rank")
    ranking = user_scores(model, meta["user_ids"], cfg.n_components)
    with open(out / "ranking.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("rank,user_id,distance,score\n")
        for pos, (uid, dist, score) in enumerate(
            zip(ranking.user_ids, ranking.distances, ranking.scores), start=1
        ):
            f.write(f"{pos},{uid},{_fr(dist)},{_fr(score)}\n")
    return ranking


def stage_trajectories(cfg: PipelineConfig):
    out = _out(cfg)
    x = read_tensor_text(_need(out / "tensor.txt", "trajectories"))
    model = load_model(_need(out / "model.txt", "trajectories"))
    meta = _read_meta(out, "trajectories")
    ft = FeatureTensor(x, tuple(meta["user_ids"]), tuple(meta["feature_names"]))
    trajectories = build_trajectories(ft, model)
    q = model.q
    with open(out / "trajectories.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("user_id,t," + ",".join(f"c{i + 1}" for i in range(q)) + "\n")
        for trj in trajectories:
            for t in range(trj.n_hours):
                coords = ",".join(_fr(v) for v in trj.coords[t])
                f.write(f"{trj.user_id},{t},{coords}\n")
    return trajectories


def stage_cluster(cfg: PipelineConfig):
    out = _out(cfg)
    trajectories = _load_trajectories(_need(out / "trajectories.csv", "cluster"))
    dendrogram = ward_cluster(trajectories)
    labels = cut(dendrogram, cfg.cutoff)
    with open(out / "clusters.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("user_id,cluster\n")
        for trj, lab in zip(trajectories, labels):
            f.write(f"{trj.user_id},{int(lab)}\n")

    q = trajectories[0].n_components
    centers = []
    for lab in range(int(labels.max()) + 1):
        members = [t for t, l in zip(trajectories, labels) if l == lab]
        centers.append(center_trajectory(members, label=str(lab)))
    with open(out / "centers.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("cluster,t," + ",".join(f"c{i + 1}" for i in range(q)) + "\n")
        for ctr in centers:
            for t in range(ctr.n_hours):
                coords = ",".join(_fr(v) for v in ctr.coords[t])
                f.write(f"{ctr.user_id},{t},{coords}\n")
    return centers


def stage_events(cfg: PipelineConfig):
    out = _out(cfg)
    centers = _load_trajectories(_need(out / "centers.csv", "events"))
    windows = []
    for ctr in centers:
        scan = detect_events(ctr, k_mad=cfg.k_mad, min_duration=cfg.min_duration, gap_hours=cfg.gap_hours)
        if scan.degenerate:
            print(f"events: cluster {ctr.user_id} center is constant; skipped", file=sys.stderr)
        windows.extend(scan.windows)
    windows.sort(key=lambda w: (int(w.cluster_id), w.start_hour))
    with open(out / "events.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("cluster,start_hour,end_hour,severity\n")
        for w in windows:
            f.write(f"{w.cluster_id},{w.start_hour},{w.end_hour},{_fr(w.severity)}\n")
    return windows


def _write_manifest(cfg: PipelineConfig, command: str, out: Path) -> None:
    numba_state = "enabled" if backends.NUMBA_ENABLED else (
        "disabled" if backends.HAVE_NUMBA else "missing"
    )
    _write_json(
        out / "manifest.json",
        {
            "command": command,
            "config": asdict(cfg),
            "rng": RNG_NAME,
            "backend": backends.backend_name(),
            "versions": {
                "triscope": __version__,
                "numpy": np.__version__,
                "numba": numba_state,
                "python": ".".join(str(v) for v in sys.version_info[:3]),
            },
        },
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _run_stage(stage: str, fn, *args):
    try:
        return fn(*args)
    except StageError:
        raise
    except FileNotFoundError as exc:
        raise StageError(stage, f"file not found: {exc}", EXIT_IO) from exc
    except OSError as exc:
        raise StageError(stage, f"I/O failure: {exc}", EXIT_IO) from exc
    except (InvalidInputError, DegenerateInputError, NumericalError, TriscopeError) as exc:
        raise StageError(stage, str(exc), _STAGE_EXIT[stage]) from exc


def cmd_synth(args) -> int:
    cfg, synth_section = build_pipeline_config(args)
    synth_cfg = build_synth_config(args, synth_section)
    _run_stage("synth", stage_synth, cfg, synth_cfg)
    print(f"synth: wrote {Path(cfg.out_dir) / 'log.csv'} and ground_truth.json")
    return EXIT_OK


def cmd_single_stage(args) -> int:
    cfg, _ = build_pipeline_config(args)
    stage = args.stage_name
    fn = {
        "ingest": stage_ingest,
        "decompose": stage_decompose,
        "rank": stage_rank,
        "trajectories": stage_trajectories,
        "cluster": stage_cluster,
        "events": stage_events,
    }[stage]
    _run_stage(stage, fn, cfg)
    print(f"{stage}: ok ({cfg.out_dir})")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg, synth_section = build_pipeline_config(args)
    if cfg.log is None and synth_section is not None:
        synth_cfg = build_synth_config(args, synth_section)
        _run_stage("synth", stage_synth, cfg, synth_cfg)
    _run_stage("ingest", stage_ingest, cfg)
    _run_stage("decompose", stage_decompose, cfg)
    _run_stage("rank", stage_rank, cfg)
    _run_stage("trajectories", stage_trajectories, cfg)
    _run_stage("cluster", stage_cluster, cfg)
    _run_stage("events", stage_events, cfg)
    _write_manifest(cfg, "pipeline", _out(cfg))
    print(f"pipeline: ok ({cfg.out_dir})")
    return EXIT_OK


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--log", help="input notification log CSV")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default: out)")
    p.add_argument("--window-start", dest="window_start", help="ISO-8601 instant or Unix seconds")
    p.add_argument("--window-hours", dest="window_hours", type=int, help="window length in hours")
    p.add_argument("--min-obs", dest="min_obs", type=int, help="min inter-arrivals for an hourly HMM fit")
    p.add_argument("--hmm-seed", dest="hmm_seed", type=int, help="seed for HMM initialization")
    p.add_argument("--max-p", dest="max_p", type=int, help="scree grid bound, user mode")
    p.add_argument("--max-q", dest="max_q", type=int, help="scree grid bound, feature mode")
    p.add_argument("--max-r", dest="max_r", type=int, help="scree grid bound, hour mode")
    p.add_argument("--sweep-budget", dest="sweep_budget", type=int, help="max scree grid points")
    p.add_argument("--n-components", dest="n_components", type=int, help="components used for ranking (default: all)")
    p.add_argument("--cutoff", type=float, help="normalized dendrogram cutoff (0, 1]")
    p.add_argument("--k-mad", dest="k_mad", type=float, help="MAD multiplier for event flagging")
    p.add_argument("--min-duration", dest="min_duration", type=int, help="shortest reported event (hours)")
    p.add_argument("--gap-hours", dest="gap_hours", type=int, help="quiet hours bridged inside an event")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triscope",
        description="Abnormal-user and network-event detection on notification logs "
        "via three-way tensor decomposition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic log with planted ground truth")
    _add_pipeline_flags(p_synth)
    p_synth.add_argument("--users", type=int, help="number of users")
    p_synth.add_argument("--hours", type=int, help="window length in hours")
    p_synth.add_argument("--base-rate", dest="base_rate", type=float, help="normal messages/hour")
    p_synth.add_argument("--burst-rate", dest="burst_rate", type=float, help="anomalous messages/hour")
    p_synth.add_argument("--anomalous", help="comma-separated persistent-anomalous user indices")
    p_synth.add_argument("--event", action="append", help="planted event start:end:fraction (repeatable)")
    p_synth.add_argument("--seed", type=int, help="master seed")
    p_synth.set_defaults(func=cmd_synth)

    p_pipe = sub.add_parser("pipeline", help="run every stage end to end")
    _add_pipeline_flags(p_pipe)
    p_pipe.set_defaults(func=cmd_pipeline)

    for name, help_text in (
        ("ingest", "parse the log and build the preprocessed feature tensor"),
        ("decompose", "ANOVA, scree model selection and Tucker3 fit"),
        ("rank", "rank users by distance in the user-component space"),
        ("trajectories", "project per-hour feature vectors into trajectories"),
        ("cluster", "Ward-cluster trajectories and export cluster centers"),
        ("events", "detect event windows on cluster-center trajectories"),
    ):
        p_stage = sub.add_parser(name, help=help_text)
        _add_pipeline_flags(p_stage)
        p_stage.set_defaults(func=cmd_single_stage, stage_name=name)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (InvalidInputError, DegenerateInputError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
