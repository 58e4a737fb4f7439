"""Evaluation metrics over complex channel vectors, reports, and grid search."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation


def assemble_complex(re_part, im_part):
    """Recombine per-feature real/imag predictions into complex vectors."""
    re_part = np.asarray(re_part, dtype=float)
    im_part = np.asarray(im_part, dtype=float)
    if re_part.shape != im_part.shape:
        raise ContractViolation("real/imag shapes differ")
    return re_part + 1j * im_part


def _as_windows(x):
    x = np.asarray(x, dtype=complex)
    return x[None, :] if x.ndim == 1 else x


def nmse(predicted, truth, return_excluded=False):
    """Mean over windows of ||pred - truth||^2 / ||truth||^2.

    Zero-norm truth windows are excluded; their count is available via
    `return_excluded`.
    """
    pred = _as_windows(predicted)
    tru = _as_windows(truth)
    if pred.shape != tru.shape:
        raise ContractViolation(f"shape mismatch {pred.shape} vs {tru.shape}")
    err = np.sum(np.abs(pred - tru) ** 2, axis=1)
    pw = np.sum(np.abs(tru) ** 2, axis=1)
    ok = pw > 0
    excluded = int((~ok).sum())
    if not ok.any():
        raise ContractViolation("all truth windows have zero norm")
    value = float(np.mean(err[ok] / pw[ok]))
    return (value, excluded) if return_excluded else value


def cosine_similarity(predicted, truth, return_excluded=False):
    """Mean over windows of |pred^H truth| / (||pred|| ||truth||), in [0, 1]."""
    pred = _as_windows(predicted)
    tru = _as_windows(truth)
    if pred.shape != tru.shape:
        raise ContractViolation(f"shape mismatch {pred.shape} vs {tru.shape}")
    inner = np.abs(np.sum(np.conj(pred) * tru, axis=1))
    np_norm = np.sqrt(np.sum(np.abs(pred) ** 2, axis=1))
    nt_norm = np.sqrt(np.sum(np.abs(tru) ** 2, axis=1))
    ok = (np_norm > 0) & (nt_norm > 0)
    excluded = int((~ok).sum())
    if not ok.any():
        raise ContractViolation("all window pairs have a zero-norm vector")
    value = float(np.mean(inner[ok] / (np_norm[ok] * nt_norm[ok])))
    return (value, excluded) if return_excluded else value


def to_db(linear):
    return 10.0 * math.log10(linear) if linear > 0 else -math.inf


@dataclass
class MetricReport:
    model_id: str
    track: str
    seed: int
    nmse: float
    cosine: float
    window_count: int
    config_digest: str = ""
    antenna: str = "all"

    @property
    def nmse_db(self) -> float:
        return to_db(self.nmse)

    CSV_HEADER = "model,track,antenna,seed,nmse,nmse_db,cosine_similarity,windows,config_digest"

    def csv_row(self) -> str:
        return (f"{self.model_id},{self.track},{self.antenna},{self.seed},"
                f"{self.nmse!r},{self.nmse_db!r},{self.cosine!r},"
                f"{self.window_count},{self.config_digest}")

    def to_json_dict(self):
        return {"model": self.model_id, "track": self.track,
                "antenna": self.antenna, "seed": self.seed,
                "nmse": self.nmse, "nmse_db": self.nmse_db,
                "cosine_similarity": self.cosine,
                "windows": self.window_count,
                "config_digest": self.config_digest}


def aggregate_nmse(parts):
    """Window-count-weighted mean of per-set NMSEs; `parts` is [(nmse, count)]."""
    total = sum(c for _, c in parts)
    if total == 0:
        raise ContractViolation("no windows to aggregate")
    return sum(v * c for v, c in parts) / total


def write_reports(reports, csv_path, json_path=None):
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MetricReport.CSV_HEADER + "\n")
        for r in reports:
            fh.write(r.csv_row() + "\n")
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump([r.to_json_dict() for r in reports], fh, indent=2,
                      sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Grid search


def _config_key(config: dict) -> str:
    return json.dumps(config, sort_keys=True)


def grid_search(grid: dict, evaluate):
    """Exhaustive search over the Cartesian product of `grid` axes.

    `evaluate(config)` must return a dict with a "nmse" entry (validation
    NMSE) and may include "param_count". Cells that raise are recorded as
    failed and excluded from selection. Ties break by fewer parameters, then
    lexicographic config order; the result is independent of axis order.
    Returns (best config, trial table sorted by config).
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ContractViolation("grid must have non-empty axes")
    axes = sorted(grid)
    trials = []
    for combo in itertools.product(*(grid[a] for a in axes)):
        config = dict(zip(axes, combo))
        trial = {"config": config}
        try:
            result = evaluate(dict(config))
            trial.update(status="ok", nmse=float(result["nmse"]),
                         param_count=int(result.get("param_count", 0)))
            for k, v in result.items():
                if k not in trial:
                    trial[k] = v
        except Exception as exc:  # noqa: BLE001 - failures become table rows
            trial.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        trials.append(trial)
    trials.sort(key=lambda tr: _config_key(tr["config"]))
    ok = [tr for tr in trials if tr["status"] == "ok"]
    if not ok:
        raise RuntimeError("all grid cells failed")
    best = min(ok, key=lambda tr: (tr["nmse"], tr["param_count"],
                                   _config_key(tr["config"])))
    return dict(best["config"]), trials


def write_trials(trials, path):
    cols = ["status", "nmse", "param_count", "error"]
    axes = sorted({k for tr in trials for k in tr["config"]})
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(axes + cols) + "\n")
        for tr in trials:
            row = [repr(tr["config"].get(a, "")) for a in axes]
            row.append(tr["status"])
            row.append(repr(tr.get("nmse", "")))
            row.append(str(tr.get("param_count", "")))
            row.append('"' + tr.get("error", "").replace('"', "'") + '"')
            fh.write(",".join(row) + "\n")
