"""Training and evaluation drivers, metric rows and figure-data emission."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .agent import DDQNAgent
from .bridge import DeepEdgeOrchestrator
from .engine import RngStream
from .orchestration import BASELINES, RandomOrchestrator, RuleOrchestrator
from .scenario import InvalidConfig, ScenarioConfig
from .simulation import EdgeSimulation, RunResult
from .workload import Outcome

log = logging.getLogger(__name__)

WORKERS_ENV = "EDGESIM_WORKERS"

REPORT_COLUMNS = [
    "orchestrator", "device_count", "seed", "app",
    "generated", "completed", "in_flight", "failed", "failed_task_pct",
    "fail_capacity", "fail_deadline", "fail_mobility",
    "avg_service_time", "avg_processing_time_edge", "avg_processing_time_cloud",
    "avg_vm_utilization", "cumulative_reward",
]
INT_COLUMNS = {"device_count", "seed", "generated", "completed", "in_flight", "failed",
               "fail_capacity", "fail_deadline", "fail_mobility", "cumulative_reward"}
TEXT_COLUMNS = {"orchestrator", "app"}

TRAINING_COLUMNS = ["episode", "seed", "epsilon", "generated", "completed", "failed_task_pct",
                    "cumulative_reward", "mean_td_error", "train_steps"]


class MissingCheckpoint(FileNotFoundError):
    pass


class EmptyReport(ValueError):
    pass


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.6f}"


def _mean(values) -> float:
    return float(np.mean(values)) if len(values) else float("nan")


def make_orchestrator(name: str, seed: int, agent: DDQNAgent | None = None):
    if name in BASELINES:
        return RuleOrchestrator(name, BASELINES[name])
    if name == "random":
        return RandomOrchestrator(RngStream("random-orchestrator", seed))
    if name == "deepedge":
        if agent is None:
            raise MissingCheckpoint("the deepedge orchestrator needs a trained checkpoint")
        return DeepEdgeOrchestrator(agent, learn=False)
    raise InvalidConfig(f"unknown orchestrator {name!r}")


def new_agent(config: ScenarioConfig, seed: int) -> DDQNAgent:
    return DDQNAgent(
        config.edge_server_count, config.agent_config(),
        init_rng=RngStream("network-init", seed),
        explore_rng=RngStream("agent-exploration", seed),
        replay_rng=RngStream("agent-replay", seed),
    )


def load_agent(checkpoint, seed: int) -> DDQNAgent:
    path = Path(checkpoint)
    if not (path / "manifest.json").exists():
        raise MissingCheckpoint(f"no checkpoint manifest under {path}")
    agent = DDQNAgent.load(path, explore_rng=RngStream("agent-exploration", seed),
                           replay_rng=RngStream("agent-replay", seed))
    agent.frozen_epsilon = 0.0
    return agent


# training

def run_training(config: ScenarioConfig, episodes: int | None = None, out_dir=None,
                 device_count: int | None = None, progress=None) -> dict:
    """Train the agent online for `episodes` episodes; returns the paths and the per-episode log."""
    episodes = int(config.training["episodes"] if episodes is None else episodes)
    if episodes < 1:
        raise InvalidConfig("training needs at least one episode")
    device_count = int(device_count or config.training["device_count"])
    base_seed = int(config.training["seed"])
    agent = new_agent(config, base_seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    best = None
    for ep in range(episodes):
        seed = base_seed + ep
        eps = agent.epsilon.current
        orch = DeepEdgeOrchestrator(agent, learn=True)
        result = EdgeSimulation(config, device_count, seed, orch).run()
        td = orch.bridge.td_errors
        row = {
            "episode": ep, "seed": seed, "epsilon": eps,
            "generated": result.generated, "completed": result.completed,
            "failed_task_pct": result.failed_task_pct,
            "cumulative_reward": result.cumulative_reward,
            "mean_td_error": _mean(td), "train_steps": agent.train_steps,
        }
        rows.append(row)
        agent.end_episode()
        log.info("episode %d: failed %.2f%% eps %.3f", ep, result.failed_task_pct, eps)
        if progress:
            progress(row)
        if out is not None:
            if best is None or result.failed_task_pct < best:
                best = result.failed_task_pct
                agent.save(out / "checkpoint")
            agent.save(out / "last")
    log_path = None
    if out is not None:
        log_path = out / "training_log.csv"
        _write_csv(log_path, TRAINING_COLUMNS, rows)
    return {"agent": agent, "log": rows,
            "checkpoint": None if out is None else out / "checkpoint",
            "log_path": log_path}


# evaluation

def result_rows(result: RunResult, app_ids) -> list[dict]:
    """One overall row plus one row per application for a single run."""
    rows = []
    groups = [("all", result.records)] + [
        (app, [r for r in result.records if r.app_id == app]) for app in app_ids]
    for app, records in groups:
        generated = result.generated if app == "all" else result.per_app_generated[app]
        in_flight = result.in_flight if app == "all" else result.per_app_in_flight[app]
        counts = {o: 0 for o in Outcome}
        for rec in records:
            counts[rec.outcome] += 1
        completed = len(records)
        failed = completed - counts[Outcome.Success]
        ok = [r for r in records if r.outcome is Outcome.Success]
        rows.append({
            "orchestrator": result.orchestrator,
            "device_count": result.device_count,
            "seed": result.seed,
            "app": app,
            "generated": generated,
            "completed": completed,
            "in_flight": in_flight,
            "failed": failed,
            "failed_task_pct": 100.0 * failed / completed if completed else 0.0,
            "fail_capacity": counts[Outcome.FailCapacity],
            "fail_deadline": counts[Outcome.FailDeadline],
            "fail_mobility": counts[Outcome.FailMobility],
            "avg_service_time": _mean([r.service_time for r in ok]),
            "avg_processing_time_edge": _mean([r.processing_time for r in ok if r.processed_at == "edge"]),
            "avg_processing_time_cloud": _mean([r.processing_time for r in ok if r.processed_at == "cloud"]),
            "avg_vm_utilization": result.avg_vm_utilization,
            "cumulative_reward": 2 * counts[Outcome.Success] - completed,
        })
    return rows


def _run_cell(args) -> list[dict]:
    config, name, device_count, seed, checkpoint = args
    agent = load_agent(checkpoint, seed) if name == "deepedge" else None
    orch = make_orchestrator(name, seed, agent)
    result = EdgeSimulation(config, device_count, seed, orch).run()
    return result_rows(result, list(config.applications))


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise InvalidConfig(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise InvalidConfig(f"{WORKERS_ENV} must be >= 1")
    return n


class MetricsReport:
    """Raw per-(orchestrator, device_count, seed, app) rows plus aggregation helpers."""

    def __init__(self, rows: list[dict]):
        self.rows = rows

    def __len__(self) -> int:
        return len(self.rows)

    def select(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def aggregate(self, metric: str, app: str = "all") -> list[dict]:
        """Mean, standard error, min and max of `metric` over seeds per (orchestrator, device_count)."""
        groups: dict = {}
        for r in self.rows:
            if r["app"] != app:
                continue
            groups.setdefault((r["orchestrator"], r["device_count"]), []).append(r[metric])
        out = []
        for (name, n), values in groups.items():
            v = np.array([x for x in values if not (isinstance(x, float) and math.isnan(x))], dtype=float)
            k = len(v)
            out.append({
                "orchestrator": name, "device_count": n, "app": app, "n_seeds": len(values),
                "mean": float(v.mean()) if k else float("nan"),
                "stderr": float(v.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0,
                "min": float(v.min()) if k else float("nan"),
                "max": float(v.max()) if k else float("nan"),
            })
        return out

    def to_csv(self, path) -> None:
        _write_csv(path, REPORT_COLUMNS, self.rows)

    @classmethod
    def from_csv(cls, path) -> "MetricsReport":
        rows = []
        with open(path, newline="") as fh:
            for raw in csv.DictReader(fh):
                row = {}
                for k, v in raw.items():
                    if k in TEXT_COLUMNS:
                        row[k] = v
                    elif k in INT_COLUMNS:
                        row[k] = int(v)
                    else:
                        row[k] = float(v) if v != "" else float("nan")
                rows.append(row)
        return cls(rows)


def run_evaluation(config: ScenarioConfig, checkpoint=None, out_dir=None) -> MetricsReport:
    names = list(config.orchestrators)
    if "deepedge" in names:
        if checkpoint is None:
            raise MissingCheckpoint("evaluating deepedge requires --checkpoint")
        if not (Path(checkpoint) / "manifest.json").exists():
            raise MissingCheckpoint(f"no checkpoint manifest under {checkpoint}")
    cells = [(config, name, int(n), seed, checkpoint)
             for name in names for n in config.device_counts for seed in config.seed_list]
    workers = _workers()
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, cells))
    else:
        chunks = [_run_cell(c) for c in cells]
    report = MetricsReport([row for chunk in chunks for row in chunk])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / "report.csv")
        emit_plot_data(report, out / "plots")
    return report


# figure data

PLOT_METRICS = {
    "failed_tasks": ("failed_task_pct", "all"),
    "service_time": ("avg_service_time", "all"),
    "processing_time_edge": ("avg_processing_time_edge", "all"),
    "processing_time_cloud": ("avg_processing_time_cloud", "all"),
    "vm_utilization": ("avg_vm_utilization", "all"),
    "cumulative_reward": ("cumulative_reward", "all"),
}
AGG_COLUMNS = ["orchestrator", "device_count", "app", "n_seeds", "mean", "stderr", "min", "max"]


def emit_plot_data(report: MetricsReport, out_dir) -> list[Path]:
    if not len(report):
        raise EmptyReport("nothing to emit: the report has no rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, (metric, app) in PLOT_METRICS.items():
        path = out / f"{stem}.csv"
        _write_csv(path, AGG_COLUMNS, _sorted(report.aggregate(metric, app)))
        written.append(path)
    apps = sorted({r["app"] for r in report.rows} - {"all"})
    by_app = [row for app in apps for row in report.aggregate("failed_task_pct", app)]
    path = out / "failed_tasks_by_app.csv"
    _write_csv(path, AGG_COLUMNS, _sorted(by_app))
    written.append(path)
    causes = []
    for cause in ("fail_capacity", "fail_deadline", "fail_mobility"):
        for row in report.aggregate(cause):
            causes.append({"cause": cause, **row})
    path = out / "failure_causes.csv"
    _write_csv(path, ["cause"] + AGG_COLUMNS,
               sorted(causes, key=lambda r: (r["cause"], r["orchestrator"], r["device_count"])))
    written.append(path)
    manifest = {
        "format": 1,
        "files": [p.name for p in written],
        "orchestrators": sorted({r["orchestrator"] for r in report.rows}),
        "device_counts": sorted({r["device_count"] for r in report.rows}),
        "seeds": sorted({r["seed"] for r in report.rows}),
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append(mpath)
    return written


def _sorted(rows):
    return sorted(rows, key=lambda r: (r["app"], r["orchestrator"], r["device_count"]))


def _write_csv(path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    Path(path).write_text(buf.getvalue())

