"""Dataset manifests and run orchestration: index -> retrieve -> keyframes ->
generate -> evaluate, with deterministic JSON artifacts."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from recap.backends import make_backend_suite
from recap.backends.base import BackendSuite
from recap.config import RunConfig
from recap.decoder import generate_caption, stable_seed
from recap.errors import DataError, ManifestError
from recap.keyframes import load_video_source, sample_frames, select_keyframes
from recap.metrics import EvalCorpus, bleu4, cider_d, rouge_l
from recap.retrieval import (
    CorpusIndex,
    build_index,
    load_corpus,
    load_index,
    make_retrieval_context,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ManifestEntry",
    "DatasetManifest",
    "load_manifest",
    "manifest_from_msrvtt",
    "resolve_corpus_index",
    "run_caption",
    "run_evaluate",
    "run_prefix_baseline",
]


@dataclass
class ManifestEntry:
    video_id: str
    references: list[str]
    frames_dir: Path | None = None
    embeddings_path: Path | None = None
    native_fps: float = 3.0


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]

    def __len__(self) -> int:
        return len(self.entries)

    def references_by_id(self) -> dict[str, list[str]]:
        return {e.video_id: list(e.references) for e in self.entries}

    def validate(self) -> None:
        """Total validation: every problem in the manifest is reported at once."""
        problems: list[str] = []
        seen: set[str] = set()
        if not self.entries:
            problems.append("manifest has no entries")
        for i, entry in enumerate(self.entries):
            where = f"entry {i} ({entry.video_id!r})"
            if not entry.video_id:
                problems.append(f"entry {i}: empty video_id")
            elif entry.video_id in seen:
                problems.append(f"{where}: duplicate video_id")
            seen.add(entry.video_id)
            if entry.frames_dir is None and entry.embeddings_path is None:
                problems.append(f"{where}: needs 'frames' or 'embeddings'")
            if entry.frames_dir is not None and not Path(entry.frames_dir).is_dir():
                problems.append(f"{where}: frames dir not found: {entry.frames_dir}")
            if entry.embeddings_path is not None and not Path(entry.embeddings_path).is_file():
                problems.append(f"{where}: embeddings blob not found: {entry.embeddings_path}")
            if not entry.references or all(not r.strip() for r in entry.references):
                problems.append(f"{where}: no non-empty references")
            if entry.native_fps <= 0:
                problems.append(f"{where}: native_fps must be positive")
        if problems:
            raise ManifestError(problems)


def _entry_from_record(record: dict, base: Path, where: str) -> ManifestEntry:
    if "video_id" not in record:
        raise ManifestError([f"{where}: missing video_id"])

    def respath(key: str) -> Path | None:
        if key not in record or record[key] is None:
            return None
        p = Path(record[key])
        return p if p.is_absolute() else base / p

    return ManifestEntry(
        video_id=str(record["video_id"]),
        references=[str(r) for r in record.get("references", [])],
        frames_dir=respath("frames"),
        embeddings_path=respath("embeddings"),
        native_fps=float(record.get("native_fps", 3.0)),
    )


def load_manifest(path: Path | str) -> DatasetManifest:
    """JSON-lines manifest (one entry per line) or JSON {"entries": [...]};
    relative paths resolve against the manifest's directory."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    text = path.read_text(encoding="utf-8")
    entries: list[ManifestEntry] = []
    if path.suffix == ".jsonl":
        for i, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            entries.append(_entry_from_record(json.loads(line), base, f"line {i + 1}"))
    else:
        data = json.loads(text)
        records = data["entries"] if isinstance(data, dict) else data
        for i, record in enumerate(records):
            entries.append(_entry_from_record(record, base, f"entry {i}"))
    manifest = DatasetManifest(entries)
    manifest.validate()
    return manifest


def manifest_from_msrvtt(annotations_path: Path | str, frames_root: Path | str,
                         suffix: str = "") -> DatasetManifest:
    """Adapter for MSR-VTT-style annotation JSON: {"videos": [{"video_id"}],
    "sentences": [{"video_id", "caption"}]}. Each video's frames live at
    frames_root/<video_id> (a directory) or <video_id>.f32 when ``suffix``
    is ".f32" (an embedding blob)."""
    data = json.loads(Path(annotations_path).read_text())
    frames_root = Path(frames_root)
    captions: dict[str, list[str]] = {}
    for sentence in data.get("sentences", []):
        captions.setdefault(str(sentence["video_id"]), []).append(str(sentence["caption"]))
    entries = []
    for video in data.get("videos", []):
        vid = str(video["video_id"])
        location = frames_root / f"{vid}{suffix}"
        entries.append(
            ManifestEntry(
                video_id=vid,
                references=captions.get(vid, []),
                frames_dir=None if suffix else location,
                embeddings_path=location if suffix else None,
            )
        )
    manifest = DatasetManifest(entries)
    manifest.validate()
    return manifest


# --------------------------------------------------------------------------
# Caption runs
# --------------------------------------------------------------------------


def resolve_corpus_index(cfg: RunConfig, suite: BackendSuite) -> CorpusIndex:
    """Load a persisted index directory or embed a corpus text file."""
    if cfg.corpus_path is None:
        raise DataError("config has no corpus_path")
    path = Path(cfg.corpus_path)
    if path.is_dir():
        index = load_index(path)
        if index.dim != suite.text_encoder.dim:
            raise DataError(
                f"persisted index dim {index.dim} != backend text dim {suite.text_encoder.dim}"
            )
        return index
    return build_index(load_corpus(path), suite.text_encoder, corpus_id=cfg.corpus_id)


def _caption_one(entry: ManifestEntry, suite: BackendSuite, index: CorpusIndex, cfg: RunConfig) -> dict:
    video = load_video_source(
        entry.video_id,
        frames_dir=entry.frames_dir,
        embeddings_path=entry.embeddings_path,
        native_fps=entry.native_fps,
    )
    video_emb = suite.video_encoder.encode_video(video.frames, cfg.retrieval_frames)
    ctx = make_retrieval_context(video_emb, index, cfg.num_sentences, cfg.num_words)
    frames = sample_frames(video, cfg.frame_rate)
    keys = select_keyframes(frames, suite.image_text_scorer, cfg.keyframe_threshold)
    result = generate_caption(entry.video_id, suite, ctx, keys, cfg)
    record = {
        "video_id": entry.video_id,
        "best_caption": result.best_caption,
        "best_index": result.best_index,
        "captions": result.captions,
        "selection_scores": result.selection_scores,
        "retrieved": [[s, score] for s, score in ctx.sentences],
        "words": [[w, c] for w, c in ctx.words],
        "keyframes": len(keys.frames),
        "skipped_losses": result.skipped_losses,
        "fingerprint": cfg.fingerprint(),
        "seeds": {
            "master": cfg.seed,
            "soft_init": stable_seed(cfg.seed, entry.video_id, "soft-init"),
            "prompts": stable_seed(cfg.seed, entry.video_id, "prompts"),
            "emission": stable_seed(cfg.seed, entry.video_id, "emission"),
        },
    }
    if cfg.record_traces:
        record["loss_traces"] = [
            [list(step.losses) for step in trace] for trace in result.traces
        ]
    return record


def run_caption(cfg: RunConfig, manifest: DatasetManifest, out_path: Path | str) -> dict:
    """Caption every manifest video; write one results JSON.

    Per-video failures are recorded and skipped. The summary reports the
    failure fraction; callers treat > 10% as a partial-failure exit.
    """
    cfg.validate()
    manifest.validate()
    suite = make_backend_suite(cfg.backend, cfg.backend_options)
    index = resolve_corpus_index(cfg, suite)

    records: list[dict] = []
    failures: list[dict] = []

    def work(entry: ManifestEntry):
        return _caption_one(entry, suite, index, cfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(lambda e: _safe(work, e), manifest.entries))
    else:
        outcomes = [_safe(work, e) for e in manifest.entries]
    for entry, (record, error) in zip(manifest.entries, outcomes):
        if error is not None:
            logger.error("video %s failed: %s", entry.video_id, error)
            failures.append({"video_id": entry.video_id, "error": error})
        else:
            records.append(record)

    records.sort(key=lambda r: r["video_id"])
    failures.sort(key=lambda f: f["video_id"])
    payload = {
        "fingerprint": cfg.fingerprint(),
        "config": cfg.to_dict(),
        "backend": suite.name,
        "results": records,
        "failures": failures,
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return {
        "total": len(manifest),
        "completed": len(records),
        "failed": len(failures),
        "failure_rate": len(failures) / len(manifest),
        "out_path": str(out_path),
    }


def _safe(fn, entry) -> tuple[dict | None, str | None]:
    try:
        return fn(entry), None
    except Exception as exc:  # noqa: BLE001 - per-video isolation is the contract
        return None, f"{type(exc).__name__}: {exc}"


def run_prefix_baseline(cfg: RunConfig, manifest: DatasetManifest, out_path: Path | str) -> dict:
    """Comparison mode: retrieved sentences become a literal text prefix and
    both retrieval losses are disabled."""
    return run_caption(cfg.replace(prefix_mode=True), manifest, out_path)


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


def run_evaluate(results_path: Path | str, manifest: DatasetManifest,
                 out_prefix: Path | str | None = None) -> dict:
    """Score a results file against manifest references.

    Emits metrics JSON {B4, M: null, R, C} plus a plain-text table when
    ``out_prefix`` is given. METEOR needs external linguistic resources and
    is reported as null; use external tooling for it.
    """
    results_path = Path(results_path)
    if not results_path.exists():
        raise DataError(f"results file not found: {results_path}")
    payload = json.loads(results_path.read_text())
    records = payload.get("results", [])
    if not records:
        raise DataError(f"results file {results_path} contains no results")
    references = manifest.references_by_id()
    missing = sorted(r["video_id"] for r in records if r["video_id"] not in references)
    if missing:
        raise DataError(f"results reference unknown video ids: {', '.join(missing)}")
    corpus = EvalCorpus(
        {r["video_id"]: (r["best_caption"], references[r["video_id"]]) for r in records}
    )
    metrics = {
        "B4": bleu4(corpus),
        "M": None,
        "R": rouge_l(corpus),
        "C": cider_d(corpus),
        "items": len(corpus),
        "fingerprint": payload.get("fingerprint"),
    }
    if out_prefix is not None:
        out_prefix = Path(out_prefix)
        out_prefix.parent.mkdir(parents=True, exist_ok=True)
        out_prefix.with_suffix(".json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
        out_prefix.with_suffix(".txt").write_text(format_metrics_table(metrics))
    return metrics


def format_metrics_table(metrics: dict) -> str:
    def fmt(value) -> str:
        return "-" if value is None else f"{value:.4f}"

    lines = [
        "metric    value",
        "------    -----",
        f"B@4       {fmt(metrics['B4'])}",
        f"M         {fmt(metrics['M'])}",
        f"R         {fmt(metrics['R'])}",
        f"C         {fmt(metrics['C'])}",
    ]
    return "\n".join(lines) + "\n"
