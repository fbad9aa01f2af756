"""Delimited trajectory output, run metrics, and the exchange replay log.

All writers are deterministic byte-for-byte for identical mission logs and
write through a temporary file in the destination directory followed by an
atomic rename, so a crashed run never leaves a half-written artifact.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict

from .mission import MissionLog, ReplayRecord

__all__ = [
    "CSV_COLUMNS",
    "write_trajectory_csv",
    "write_metrics",
    "write_replay_log",
    "read_replay_log",
]

CSV_COLUMNS = (
    "time_s",
    "side",
    "id",
    "px_km",
    "py_km",
    "pz_km",
    "vx_km_s",
    "vy_km_s",
    "vz_km_s",
    "assigned_target",
)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", text=True)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g(x: float) -> str:
    """Six-significant-digit rendering used for every float column."""
    return format(float(x), ".6g")


def write_trajectory_csv(log: MissionLog, path: str) -> None:
    """Write the full trajectory table.

    One row per agent per sampled time, sorted by (time, side, id); the
    static defended assets appear at every sampled time so a plot can be
    rebuilt from the file alone. assigned_target is empty for non-
    interceptor rows.
    """
    rows: list[tuple[float, str, int, str]] = []
    times = sorted({s.time for s in log.samples})
    for sample in log.samples:
        assigned = "" if sample.assigned_target is None else str(sample.assigned_target)
        rows.append((sample.time, sample.side, sample.id, assigned, sample.position, sample.velocity))
    for t in times:
        for asset in log.scenario.assets:
            rows.append((t, "asset", asset.id, "", tuple(asset.position), (0.0, 0.0, 0.0)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    lines = [",".join(CSV_COLUMNS)]
    for t, side, agent_id, assigned, pos, vel in rows:
        fields = [_g(t), side, str(agent_id)]
        fields.extend(_g(c) for c in pos)
        fields.extend(_g(c) for c in vel)
        fields.append(assigned)
        lines.append(",".join(fields))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_metrics(log: MissionLog, path: str) -> None:
    """Write the run summary: identity, aggregate metrics, event list."""
    payload = {
        "scenario": log.scenario.name,
        "assigner": log.assigner,
        "seed": log.seed,
        "final_time": log.final_time,
        "metrics": asdict(log.metrics),
        "events": [
            {
                "kind": e.kind,
                "time": e.time,
                "subject_ids": list(e.subject_ids),
                "detail": e.detail,
                "position": list(e.position) if e.position is not None else None,
            }
            for e in log.events
        ],
        "assignments": [
            {
                "epoch": r.epoch,
                "time": r.time,
                "interceptor_ids": r.interceptor_ids,
                "target_ids": r.target_ids,
                "source": r.source,
                "objective": r.objective,
            }
            for r in log.history
        ],
    }
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_replay_log(log: MissionLog, path: str) -> None:
    """Write one JSON object per language-model exchange (JSON lines)."""
    lines = [json.dumps(asdict(r), sort_keys=True) for r in log.replay_records]
    _atomic_write(path, "\n".join(lines) + ("\n" if lines else ""))


def read_replay_log(path: str) -> list[ReplayRecord]:
    records = []
    with open(path) as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(ReplayRecord(**obj))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad replay record: {exc}") from exc
    return records
