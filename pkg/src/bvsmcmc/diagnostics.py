"""Run outputs, PIP error metrics and the on-disk run artifacts."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "RunOutput",
    "pip_mse",
    "relative_log10_mse",
    "write_pips_csv",
    "read_pips_csv",
    "write_trace_jsonl",
    "write_summary_json",
    "write_run",
]

TRACE_FIELDS = ("iteration", "chain", "log_post", "p_gamma", "accepted", "log_accept_prob", "omega", "zeta_or_xi")


@dataclass(eq=False)
class RunOutput:
    """Final estimates and per-step records of one multi-chain run.

    ``pip_estimate`` is the Rao-Blackwellised running mean; ``pip_freq`` the
    raw inclusion frequency over the same draws.  Rates are averaged over the
    post-burn-in iterations.  ``trace`` maps field name to an
    (iterations, L) array and is ``None`` when tracing was switched off.
    """

    sampler: str
    pip_estimate: np.ndarray
    pip_freq: np.ndarray
    acceptance_rate: float
    mean_accept_prob: float
    mean_asjd: float
    trace: dict | None
    wall_time: float
    iterations: int
    burn_in: int
    L: int
    omega_path: np.ndarray = field(default_factory=lambda: np.zeros(0))
    adapt: Any = None

    def trace_records(self):
        if self.trace is None:
            return
        t = self.trace
        for i in range(t["log_post"].shape[0]):
            for l in range(t["log_post"].shape[1]):
                yield {
                    "iteration": i + 1,
                    "chain": l,
                    "log_post": _finite_or_none(t["log_post"][i, l]),
                    "p_gamma": int(t["p_gamma"][i, l]),
                    "accepted": bool(t["accepted"][i, l]),
                    "log_accept_prob": _finite_or_none(t["log_accept_prob"][i, l]),
                    "omega": _finite_or_none(t["omega"][i, l]),
                    "zeta_or_xi": _finite_or_none(t["zeta_or_xi"][i, l]),
                }


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def pip_mse(estimate, reference, threshold: float = 0.01) -> tuple[float | None, float | None]:
    """MSE over variables with reference PIP above ``threshold`` and over the rest.

    A group with no members is reported as ``None``.
    """
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    important = ref > threshold
    sq = (est - ref) ** 2
    mse_imp = float(sq[important].mean()) if important.any() else None
    mse_unimp = float(sq[~important].mean()) if (~important).any() else None
    return mse_imp, mse_unimp


def relative_log10_mse(candidate_mse: float, baseline_mse: float) -> float:
    if baseline_mse is None or baseline_mse <= 0:
        raise ValueError(f"baseline MSE must be positive, got {baseline_mse}")
    if candidate_mse is None or candidate_mse <= 0:
        raise ValueError(f"candidate MSE must be positive, got {candidate_mse}")
    return math.log10(candidate_mse / baseline_mse)


def write_pips_csv(path, run: RunOutput, column_names=None) -> Path:
    path = Path(path)
    p = run.pip_estimate.size
    names = column_names or [f"x{j + 1}" for j in range(p)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "pip_rb", "pip_freq"])
        for name, rb, fq in zip(names, run.pip_estimate, run.pip_freq):
            w.writerow([name, repr(float(rb)), repr(float(fq))])
    return path


def read_pips_csv(path, column: str = "pip_rb") -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or column not in rows[0]:
        raise ValueError(f"{path}: no {column!r} column")
    return np.array([float(r[column]) for r in rows])


def write_trace_jsonl(path, run: RunOutput) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in run.trace_records():
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")
    return path


def write_summary_json(path, run: RunOutput, meta: dict) -> Path:
    summary = {
        "sampler": run.sampler,
        **meta,
        "L": run.L,
        "iterations": run.iterations,
        "burn_in": run.burn_in,
        "acceptance_rate": run.acceptance_rate,
        "mean_accept_prob": run.mean_accept_prob,
        "mean_asjd": run.mean_asjd,
        "wall_time_s": run.wall_time,
    }
    if run.adapt is not None:
        summary["final_omega"] = run.adapt.omega
    path = Path(path)
    path.write_text(json.dumps(summary, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def write_run(output_dir, run: RunOutput, meta: dict, column_names=None) -> dict:
    """Write pips.csv, trace.jsonl and summary.json into ``output_dir``."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return {
        "pips": write_pips_csv(out / "pips.csv", run, column_names),
        "trace": write_trace_jsonl(out / "trace.jsonl", run),
        "summary": write_summary_json(out / "summary.json", run, meta),
    }
