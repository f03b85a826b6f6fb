"""Serialization: coefficient dumps, run records, gap reports.

Matrices are stored row-major with explicit dims so the JSON snapshots
are self-describing: {"dims": [r, c], "data": [..]}.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1"


def _enc_array(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"dims": list(a.shape), "data": a.ravel(order="C").tolist()}


def _dec_array(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=float).reshape(d["dims"])


def dump_coeffs(coeffs, kind: str, path) -> None:
    """JSON snapshot of a solver's per-timestep coefficient arrays."""
    payload = {"schema_version": SCHEMA_VERSION, "kind": kind}
    for name, value in vars(coeffs).items():
        if isinstance(value, np.ndarray):
            payload[name] = _enc_array(value)
        elif isinstance(value, tuple):
            payload[name] = list(value)
        else:
            payload[name] = value
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_coeff_arrays(path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        k: _dec_array(v) if isinstance(v, dict) and "dims" in v else v
        for k, v in payload.items()
    }


def export_run_record_json(record, path) -> None:
    summary = {
        "schema_version": SCHEMA_VERSION,
        "policy": record.policy,
        "seed": record.seed,
        "regret": record.regret,
        "rmse_aggregated": record.rmse_aggregated,
        "rmse_worst": record.rmse_worst,
        "rmse_bottom20": record.rmse_bottom20,
        "messages_per_step": record.messages_per_step,
        "runtime_ms": record.runtime_ms,
        "costs": record.costs.tolist(),
        "costs_per_round": record.costs_per_round.tolist(),
        "spawn_events": record.spawn_events,
    }
    Path(path).write_text(json.dumps(summary), encoding="utf-8")


def export_run_record_csv(record, params, path) -> None:
    """Per-timestep table: one row per (round, t, agent) with the stage
    cost split into its tracking / mean-regularization / action parts."""
    rounds, tp1, n_agents, d_y = record.predictions.shape
    T = tp1 - 1
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        head = ["round", "t", "agent"]
        head += [f"pred_{i}" for i in range(d_y)]
        head += [f"action_{i}" for i in range(record.actions.shape[3])]
        head += ["cost_track", "cost_meanreg", "cost_action"]
        writer.writerow(head)
        for r in range(rounds):
            for t in range(T):
                mean = record.predictions[r, t + 1].mean(axis=0)
                y = record.targets[r * T + t + 1]
                disc = params.discount(t)
                for a in range(n_agents):
                    pred = record.predictions[r, t + 1, a]
                    act = record.actions[r, t, a]
                    err = y - pred
                    dev = pred - mean
                    row = [r, t, a]
                    row += [repr(float(v)) for v in pred]
                    row += [repr(float(v)) for v in act]
                    row += [
                        repr(disc * params.kappa * float(err @ err)),
                        repr(disc * params.kappa_bar * float(dev @ dev)),
                        repr(disc * params.gamma * float(act @ act)),
                    ]
                    writer.writerow(row)


def export_gap_report_csv(report, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "t", "lambda_gap", "meanfield_gap", "stderr"])
        for row in report.rows:
            writer.writerow(
                [row.N, row.t, repr(row.lambda_gap), repr(row.meanfield_gap), repr(row.stderr)]
            )


def write_jsonl(events, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev) + "\n")
