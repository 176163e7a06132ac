"""Ablation sweeps: rerun caption+evaluate across one axis and plot the trend."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from recap.config import RunConfig
from recap.errors import InputError
from recap.pipeline import DatasetManifest, run_caption, run_evaluate

logger = logging.getLogger(__name__)

__all__ = ["ABLATION_AXES", "LOSS_MODES", "run_ablation"]

# Loss-granularity modes: which retrieval losses stay on, or prefix injection.
LOSS_MODES = ("none", "S", "W", "S+W", "prefix")

ABLATION_AXES = ("K", "L", "P", "corpus", "losses", "clip_threshold")


def _config_for(cfg: RunConfig, axis: str, value) -> RunConfig:
    if axis == "K":
        return cfg.replace(num_sentences=int(value))
    if axis == "L":
        return cfg.replace(num_words=int(value))
    if axis == "P":
        return cfg.replace(num_soft_tokens=int(value))
    if axis == "corpus":
        return cfg.replace(corpus_path=str(value), corpus_id=Path(str(value)).stem)
    if axis == "clip_threshold":
        return cfg.replace(keyframe_threshold=float(value))
    if axis == "losses":
        mode = str(value)
        if mode not in LOSS_MODES:
            raise InputError(f"loss mode must be one of {LOSS_MODES}, got {mode!r}")
        weights = cfg.weights
        use_s = mode in ("S", "S+W")
        use_w = mode in ("W", "S+W")
        return cfg.replace(
            weights=type(weights)(
                language=weights.language,
                vision=weights.vision,
                sentence=weights.sentence if use_s else 0.0,
                word=weights.word if use_w else 0.0,
            ),
            prefix_mode=(mode == "prefix"),
        )
    raise InputError(f"unknown ablation axis {axis!r}; expected one of {ABLATION_AXES}")


def _plot(axis: str, values: list, rows: list[dict], metric: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ys = [row[metric] for row in rows]
    xs = list(range(len(values)))
    ax.plot(xs, ys, marker="o")
    ax.set_xticks(xs)
    ax.set_xticklabels([str(v) for v in values])
    ax.set_xlabel(axis)
    ax.set_ylabel(metric)
    ax.set_title(f"{metric} vs {axis}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def format_ablation_table(axis: str, rows: list[dict]) -> str:
    header = f"{'#':>2}  {axis:<14} {'B@4':>8} {'M':>8} {'R':>8} {'C':>8}"
    lines = [header, "-" * len(header)]
    for i, row in enumerate(rows, start=1):
        lines.append(
            f"{i:>2}  {str(row['value']):<14} {row['B4']:>8.4f} {'-':>8} "
            f"{row['R']:>8.4f} {row['C']:>8.4f}"
        )
    return "\n".join(lines) + "\n"


def run_ablation(
    cfg: RunConfig,
    manifest: DatasetManifest,
    axis: str,
    values: list,
    out_dir: Path | str,
) -> list[dict]:
    """One caption+evaluate run per axis value; emits table, JSON and plots.

    Output layout: <out_dir>/<axis>_<value>/results.json per run, plus
    ablation.json, ablation_table.txt and <axis>_{cider,bleu4}.png.
    """
    if axis not in ABLATION_AXES:
        raise InputError(f"unknown ablation axis {axis!r}; expected one of {ABLATION_AXES}")
    if len(values) < 2:
        raise InputError("an ablation sweep needs at least 2 values")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    for value in values:
        run_cfg = _config_for(cfg, axis, value)
        run_dir = out_dir / f"{axis}_{str(value).replace('/', '_')}"
        summary = run_caption(run_cfg, manifest, run_dir / "results.json")
        metrics = run_evaluate(run_dir / "results.json", manifest, run_dir / "metrics")
        rows.append(
            {
                "value": value,
                "B4": metrics["B4"],
                "M": None,
                "R": metrics["R"],
                "C": metrics["C"],
                "failed": summary["failed"],
                "fingerprint": metrics["fingerprint"],
            }
        )
        logger.info("ablation %s=%s: C=%.4f B4=%.4f", axis, value, metrics["C"], metrics["B4"])

    (out_dir / "ablation.json").write_text(
        json.dumps({"axis": axis, "rows": rows}, indent=2, sort_keys=True) + "\n"
    )
    (out_dir / "ablation_table.txt").write_text(format_ablation_table(axis, rows))
    _plot(axis, values, rows, "C", out_dir / f"{axis}_cider.png")
    _plot(axis, values, rows, "B4", out_dir / f"{axis}_bleu4.png")
    return rows
