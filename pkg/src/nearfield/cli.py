"""Pipeline command-line interface.

Batch subcommands over one YAML config: synth, split, align, filter,
train-detector, tune, detect, transcribe, evaluate. Every subcommand is
idempotent given identical inputs and seed; primary artifacts are
JSON/JSONL with deterministic key order, each accompanied by a meta record
carrying the config hash and seed. Report-producing stages also render a
PNG figure next to their delimited output unless figures are disabled.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import report
from .align import align_manifest
from .audio import read_wav
from .config import EngineRegistry, PipelineConfig, build_engines, derive_seed, load_config
from .corpus import Manifest, Segment, SpeakerRole, SplitConfig, StopRecord, load_manifest, partition_splits, save_manifest
from .detect import (
    DetectorThresholds,
    LinearChunkScorer,
    TrainingDataConfig,
    apply_thresholds,
    build_training_chunks,
    chunk_feature_matrix,
    score_chunks,
    train_chunk_scorer,
)
from .errors import ConfigError, NearfieldError
from .evaluation import (
    build_eval_rows,
    fit_mixed_effects,
    format_regression_table,
    format_subgroup_table,
    load_eval_rows,
    save_eval_rows,
    subgroup_table,
)
from .filtering import FilterCriterion, filter_manifest
from .metrics import cer, wer
from .synthgen import CorpusSpec, SpeakerSpec, generate_corpus
from .tune import TuneSpec, tune_detector


def _write_json(path: Path, payload: dict, config: PipelineConfig) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"meta": config.meta()}
    body.update(payload)
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_jsonl(path: Path, rows: list[dict], config: PipelineConfig) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _write_json(path.with_suffix(".meta.json"), {}, config)
    return path


def _manifest_sidecar(path: Path, config: PipelineConfig) -> None:
    _write_json(path.with_suffix(".meta.json"), {}, config)


class _AudioStore:
    """Per-run cache resolving stop audio against the audio root."""

    def __init__(self, root: Path):
        self.root = root
        self._cache: dict[str, np.ndarray] = {}

    def path(self, stop: StopRecord) -> Path:
        p = Path(stop.audio_path)
        return p if p.is_absolute() else self.root / p

    def samples(self, stop: StopRecord) -> np.ndarray:
        key = stop.stop_id
        if key not in self._cache:
            self._cache[key] = read_wav(self.path(stop))
        return self._cache[key]


def _figures_enabled(config: PipelineConfig) -> bool:
    if config.overrides.get("no_figures"):
        return False
    return bool(config.section("report").get("figures", True))


def _stage_manifest(config: PipelineConfig, args, default: Path) -> Manifest:
    path = Path(args.manifest) if getattr(args, "manifest", None) else default
    if not path.exists():
        raise ConfigError(f"input manifest not found: {path} "
                          "(run the earlier pipeline stage or pass --manifest)")
    return load_manifest(path)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(config: PipelineConfig, args, registry: EngineRegistry) -> dict:
    section = config.section("synth")
    speakers = []
    for spec in section.get("speakers", []):
        speakers.append(SpeakerSpec(
            role=SpeakerRole(spec["role"]),
            gain=float(spec.get("gain", 1.0)),
            utterance_count=int(spec.get("utterance_count", 5)),
            min_words=int(spec.get("min_words", 2)),
            max_words=int(spec.get("max_words", 6))))
    corpus_spec = CorpusSpec(
        n_stops=int(section.get("n_stops", 8)),
        duration_s=float(section.get("duration_s", 40.0)),
        speakers=tuple(speakers) or CorpusSpec.__dataclass_fields__["speakers"].default,
        noise_floor=float(section.get("noise_floor", 0.01)),
        overlap_probability=float(section.get("overlap_probability", 0.0)),
        officer_pool_size=int(section.get("officer_pool_size", 12)),
        secondary_officer_probability=float(
            section.get("secondary_officer_probability", 0.3)),
        seed=derive_seed(config.seed, "synth"),
    )
    out = config.out_dir / "corpus"
    generate_corpus(corpus_spec, out)
    _manifest_sidecar(out / "manifest.jsonl", config)
    return {"manifest": str(out / "manifest.jsonl"), "audio_dir": str(out / "audio")}


def cmd_split(config: PipelineConfig, args, registry: EngineRegistry) -> dict:
    manifest = _stage_manifest(config, args, config.manifest_path())
    section = config.section("split")
    split_config = SplitConfig(
        test_stops=int(section.get("test_stops", 2)),
        validation_stops=int(section.get("validation_stops", 2)),
        max_test_utterances=int(section.get("max_test_utterances", 60)),
        race_balance=bool(section.get("race_balance", True)),
        seed=derive_seed(config.seed, "split"),
    )
    result = partition_splits(manifest, split_config)
    out = config.out_dir / "splits"
    artifacts = {}
    for name, part in (("train", result.train), ("validation", result.validation),
                       ("test", result.test), ("withheld", result.withheld)):
        path = out / f"{name}.jsonl"
        save_manifest(part, path)
        _manifest_sidecar(path, config)
        artifacts[name] = str(path)
    return artifacts


def cmd_align(config: PipelineConfig, args, registry: EngineRegistry) -> dict:
    section = config.section("align")
    manifest = _stage_manifest(config, args, config.out_dir / "splits" / "train.jsonl")
    aligner_a = registry.aligner(section.get("aligner_a", "uniform"))
    aligner_b = registry.aligner(section.get("aligner_b", "uniform"))
    names = section.get("transcribers") or registry.transcriber_names
    transcribers = {name: registry.transcriber(name) for name in names}
    audio = _AudioStore(config.audio_root())

    def resolve(stop: StopRecord):
        samples = audio.samples(stop)
        return audio.path(stop), len(samples) / 16000.0

    result = align_manifest(
        manifest, aligner_a, aligner_b, transcribers, resolve,
        chunk_max_s=float(section.get("chunk_max_s", 20.0)),
        jobs=int(config.overrides.get("jobs", 1)))

    out = config.out_dir / "align"
    aligned_path = out / "aligned.jsonl"
    save_manifest(result.manifest, aligned_path)
    _manifest_sidecar(aligned_path, config)

    rows = []
    for stop_alignment in result.stops:
        for utt_id in stop_alignment.skipped_no_marks:
            rows.append({"stop_id": stop_alignment.stop_id, "utterance_id": utt_id,
                         "status": "skipped_no_marks"})
        for utt_id in stop_alignment.unalignable:
            rows.append({"stop_id": stop_alignment.stop_id, "utterance_id": utt_id,
                         "status": "unalignable"})
        for utt_id, aligned in stop_alignment.aligned.items():
            rows.append({
                "stop_id": stop_alignment.stop_id,
                "utterance_id": utt_id,
                "status": "aligned",
                "method": aligned.chosen.method.value,
                "start_s": aligned.chosen.segment.start,
                "end_s": aligned.chosen.segment.end,
                "min_wer": aligned.min_wer,
                "min_wer_no_subs": aligned.min_wer_no_subs,
                "candidates": [
                    {"method": c.method.value, "start_s": c.segment.start,
                     "end_s": c.segment.end, "wer": c.per_engine_wer,
                     "min_wer": c.min_wer}
                    for c in aligned.candidates],
            })
    report_path = _write_jsonl(out / "report.jsonl", rows, config)
    summary_path = _write_json(out / "summary.json", {
        "method_frequencies": result.method_frequencies(),
        "failure_counts": result.failures.counts(),
        "aligned_utterances": sum(len(s.aligned) for s in result.stops),
        "unalignable": sum(len(s.unalignable) for s in result.stops),
        "skipped_no_marks": sum(len(s.skipped_no_marks) for s in result.stops),
    }, config)
    return {"aligned": str(aligned_path), "report": str(report_path),
            "summary": str(summary_path)}


def _load_alignment_scores(path: Path) -> dict[tuple[str, str], tuple[float, float]]:
    scores = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            if row.get("status") != "aligned":
                continue
            scores[(row["stop_id"], row["utterance_id"])] = (
                float(row["min_wer"]), float(row["min_wer_no_subs"]))
    return scores


def cmd_filter(config: PipelineConfig, args, registry: EngineRegistry) -> dict:
    manifest = _stage_manifest(config, args, config.out_dir / "align" / "aligned.jsonl")
    scores_path = (Path(args.scores) if getattr(args, "scores", None)
                   else config.out_dir / "align" / "report.jsonl")
    if not scores_path.exists():
        raise ConfigError(f"alignment report not found: {scores_path}")
    score_map = _load_alignment_scores(scores_path)
    criterion = FilterCriterion(id=config.criterion())
    kept, dropped, stats = filter_manifest(manifest, score_map, criterion)

    out = config.out_dir / "filter"
    kept_path = out / "kept.jsonl"
    dropped_path = out / "dropped.jsonl"
    save_manifest(kept, kept_path)
    save_manifest(dropped, dropped_path)
    _manifest_sidecar(kept_path, config)
    _manifest_sidecar(dropped_path, config)
    stats_path = _write_json(out / "stats.json", stats.to_json(), config)
    artifacts = {"kept": str(kept_path), "dropped": str(dropped_path),
                 "stats": str(stats_path)}
    if _figures_enabled(config):
        fig = report.render_filter_stats(
            stats.per_criterion_kept, stats.input_utterances, out / "stats.png")
        artifacts["figure"] = str(fig)
    return artifacts


def _vad_engine(config: PipelineConfig, registry: EngineRegistry):
    name = config.section("detector").get("vad", "energy")
    try:
        return registry.scorer(name)
    except ConfigError:
        if name == "energy":
            from .engines.mocks import EnergyVad
            return EnergyVad()
        raise


def cmd_train_detector(config: PipelineConfig, args, registry: EngineRegistry) -> dict:
    manifest = _stage_manifest(config, args, config.out_dir / "filter" / "kept.jsonl")
    section = config.section("detector")
    audio = _AudioStore(config.audio_root())
    vad = _vad_engine(config, registry)
    data_config = TrainingDataConfig(
        per_class=int(section.get("per_class", 150_000)),
        seed=derive_seed(config.seed, "sampling"))
    chunks = build_training_chunks(manifest, audio.samples, vad, data_config)
    by_stop = {s.stop_id: s for s in manifest.stops}
    features, labels = chunk_feature_matrix(
        chunks, lambda stop_id: audio.samples(by_stop[stop_id]))
    scorer, history = train_chunk_scorer(features, labels)

    out = config.out_dir / "detector"
    out.mkdir(parents=True, exist_ok=True)
    weights_path = out / "weights.json"
    scorer.save(weights_path)
    _write_json(out / "training.json", {
        "chunks": len(chunks),
        "positive": int(labels.sum()),
        "negative": int(len(labels) - labels.sum()),
        "final_loss": history[-1],
        "epochs": len(history),
    }, config)
    artifacts = {"weights": str(weights_path), "training": str(out / "training.json")}
    if _figures_enabled(config):
        artifacts["figure"] = str(report.render_training_loss(history, out / "training_loss.png"))
    return artifacts


def _load_scorer(config: PipelineConfig, registry: EngineRegistry):
    section = config.section("detector")
    name = section.get("officer_scorer")
    if name:
        return registry.scorer(name)
    weights = Path(section.get("scorer_path", config.out_dir / "detector" / "weights.json"))
    if not weights.exists():
        raise ConfigError(f"officer scorer weights not found: {weights} "
                          "(run train-detector first)")
    return LinearChunkScorer.load(weights)


def cmd_tune(config: PipelineConfig, args, registry: EngineRegistry) -> dict:
    validation = _stage_manifest(config, args,
                                 config.out_dir / "splits" / "validation.jsonl")
    section = config.section("tune")
    audio = _AudioStore(config.audio_root())
    vad = _vad_engine(config, registry)
    scorer = _load_scorer(config, registry)
    transcriber = registry.transcriber(
        section.get("transcriber", (registry.transcriber_names or [""])[0]))
    spec = TuneSpec(
        budget=int(section.get("budget", 20)),
        init_samples=int(section.get("init_samples", 5)),
        seed=derive_seed(config.seed, "tuning"),
        mode=section.get("mode", "gp"))
    thresholds, result = tune_detector(
        validation, audio.samples, lambda s: str(audio.path(s)),
        vad, scorer, transcriber, spec)

    out = config.out_dir / "detector"
    thresholds_path = _write_json(out / "thresholds.json", {
        "t_vad": thresholds.t_vad,
        "t_officer": thresholds.t_officer,
        "t_smooth": thresholds.t_smooth,
        "cost": result.best_cost,
        "mode": spec.mode,
    }, config)
    trace_rows = [{"point": {"t_vad": t.point[0], "t_officer": t.point[1],
                             "t_smooth": t.point[2]},
                   "cost": t.cost, "iteration": t.iteration}
                  for t in result.trace]
    trace_path = _write_jsonl(out / "trace.jsonl", trace_rows, config)
    artifacts = {"thresholds": str(thresholds_path), "trace": str(trace_path)}
    if _figures_enabled(config):
        artifacts["figure"] = str(report.render_tune_trace(
            [t.cost for t in result.trace], out / "trace.png"))
    return artifacts


def _load_thresholds(config: PipelineConfig) -> DetectorThresholds:
    section = config.section("detector")
    inline = section.get("thresholds")
    if inline:
        return DetectorThresholds(float(inline["t_vad"]), float(inline["t_officer"]),
                                  float(inline["t_smooth"]))
    path = Path(section.get("thresholds_path",
                            config.out_dir / "detector" / "thresholds.json"))
    if not path.exists():
        raise ConfigError(f"thresholds not found: {path} (run tune first)")
    payload = json.loads(path.read_text(encoding="utf-8"))
    return DetectorThresholds(payload["t_vad"], payload["t_officer"], payload["t_smooth"])


def cmd_detect(config: PipelineConfig, args, registry: EngineRegistry) -> dict:
    manifest = _stage_manifest(config, args, config.out_dir / "splits" / "test.jsonl")
    audio = _AudioStore(config.audio_root())
    vad = _vad_engine(config, registry)
    scorer = _load_scorer(config, registry)
    thresholds = _load_thresholds(config)

    rows = []
    timeline = {}
    for stop in manifest.stops:
        chunk_scores = score_chunks(audio.samples(stop), vad, scorer)
        detected = apply_thresholds(chunk_scores, thresholds)
        for d in detected:
            rows.append({"stop_id": stop.stop_id,
                         "start_s": d.segment.start, "end_s": d.segment.end,
                         "vad": round(d.vad, 6), "officer": round(d.officer, 6)})
        truth = [u.segment for u in stop.utterances
                 if u.segment is not None
                 and u.speaker_role is SpeakerRole.PRIMARY_OFFICER]
        timeline[stop.stop_id] = (truth, [d.segment for d in detected])

    out = config.out_dir / "detect"
    segments_path = _write_jsonl(out / "segments.jsonl", rows, config)
    artifacts = {"segments": str(segments_path)}
    if _figures_enabled(config):
        artifacts["figure"] = str(report.render_detection_timeline(
            timeline, out / "timeline.png"))
    return artifacts


def cmd_transcribe(config: PipelineConfig, args, registry: EngineRegistry) -> dict:
    manifest = _stage_manifest(config, args, config.out_dir / "splits" / "test.jsonl")
    name = (getattr(args, "transcriber", None)
            or config.section("evaluate").get("transcriber")
            or (registry.transcriber_names or [""])[0])
    transcriber = registry.transcriber(name)
    audio = _AudioStore(config.audio_root())

    rows, skipped = [], 0
    for stop in manifest.stops:
        path = audio.path(stop)
        for utt in stop.utterances:
            if utt.segment is None:
                skipped += 1
                continue
            text = transcriber.transcribe(path, utt.segment)
            rows.append({"stop_id": stop.stop_id, "utt_id": utt.id,
                         "start_s": utt.segment.start, "end_s": utt.segment.end,
                         "text": text})
    out = config.out_dir / "transcribe"
    hyp_path = _write_jsonl(out / "hypotheses.jsonl", rows, config)
    return {"hypotheses": str(hyp_path), "transcribed": len(rows),
            "skipped_unaligned": skipped}


def _load_hypotheses(path: Path) -> dict[tuple[str, str], str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out[(row["stop_id"], row["utt_id"])] = row["text"]
    return out


def cmd_evaluate(config: PipelineConfig, args, registry: EngineRegistry) -> dict:
    out = config.out_dir / "evaluate"
    section = config.section("evaluate")

    if getattr(args, "rows", None):
        rows = load_eval_rows(Path(args.rows))
        overall: dict[str, Any] = {
            "mean_wer": float(np.mean([r.wer_value for r in rows])) if rows else 0.0,
            "utterances": len(rows),
            "source": "precomputed-rows",
        }
    else:
        manifest = _stage_manifest(config, args, config.out_dir / "splits" / "test.jsonl")
        hyp_path = (Path(args.hypotheses) if getattr(args, "hypotheses", None)
                    else config.out_dir / "transcribe" / "hypotheses.jsonl")
        if not hyp_path.exists():
            raise ConfigError(f"hypotheses not found: {hyp_path} (run transcribe first)")
        hypotheses = _load_hypotheses(hyp_path)
        rows = build_eval_rows(manifest, hypotheses)

        word_errors = word_count = 0
        char_errors = char_count = 0
        scored = 0
        for stop in manifest.stops:
            for utt in stop.utterances:
                key = (stop.stop_id, utt.id)
                if key not in hypotheses:
                    continue
                scored += 1
                w = wer(utt.raw_text, hypotheses[key])
                c = cer(utt.raw_text, hypotheses[key])
                word_errors += w.counts.distance
                word_count += w.counts.reference_length
                char_errors += c.counts.distance
                char_count += c.counts.reference_length
        overall = {
            "wer": word_errors / word_count if word_count else 0.0,
            "cer": char_errors / char_count if char_count else 0.0,
            "utterances": scored,
            "words": word_count,
            "source": "manifest+hypotheses",
        }

    cells = subgroup_table(rows, ("role", "race"))
    subgroup_json = [
        {"group": dict(c.group), "count": c.count, "mean_wer": c.mean_wer}
        for c in cells]
    regression_json: dict[str, Any]
    regression_text = ""
    if section.get("regression", True):
        try:
            regression = fit_mixed_effects(rows)
            regression_json = regression.to_json()
            regression_text = format_regression_table(regression)
        except NearfieldError as exc:
            regression_json = {"error": str(exc)}
    else:
        regression_json = {"skipped": True}

    rows_path = out / "rows.jsonl"
    save_eval_rows(rows, rows_path)
    _write_json(rows_path.with_suffix(".meta.json"), {}, config)
    report_path = _write_json(out / "report.json", {
        "overall": overall,
        "subgroups": subgroup_json,
        "regression": regression_json,
    }, config)
    text = "\n".join([
        "== overall ==",
        json.dumps(overall, sort_keys=True),
        "",
        "== subgroup WER ==",
        format_subgroup_table(cells),
        "",
        "== mixed-effects regression ==",
        regression_text or json.dumps(regression_json, sort_keys=True),
        "",
    ])
    (out / "report.txt").write_text(text, encoding="utf-8")
    artifacts = {"report": str(report_path), "report_text": str(out / "report.txt"),
                 "rows": str(rows_path)}
    if _figures_enabled(config) and cells:
        artifacts["subgroup_figure"] = str(
            report.render_subgroup_wer(cells, out / "subgroup_wer.png"))
        artifacts["histogram_figure"] = str(report.render_wer_histogram(
            [r.wer_value for r in rows], out / "wer_hist.png"))
    return artifacts


# ---------------------------------------------------------------------------
# Entry point

_COMMANDS: dict[str, Callable] = {
    "synth": cmd_synth,
    "split": cmd_split,
    "align": cmd_align,
    "filter": cmd_filter,
    "train-detector": cmd_train_detector,
    "tune": cmd_tune,
    "detect": cmd_detect,
    "transcribe": cmd_transcribe,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nearfield",
        description="Corpus preparation, near-field speaker detection, and evaluation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline YAML config")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--manifest", default=None, help="override stage input manifest")
        p.add_argument("--no-figures", action="store_true")
        if name == "filter":
            p.add_argument("--criterion", choices=["c1", "c2", "c3", "c4"], default=None)
            p.add_argument("--scores", default=None, help="alignment report JSONL")
        if name == "transcribe":
            p.add_argument("--transcriber", default=None)
        if name == "evaluate":
            p.add_argument("--hypotheses", default=None)
            p.add_argument("--rows", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict[str, Any] = {"jobs": args.jobs}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if getattr(args, "criterion", None):
        overrides["criterion"] = args.criterion
    if args.no_figures:
        overrides["no_figures"] = True

    registry = None
    try:
        config = load_config(args.config, overrides)
        registry = build_engines(config)
        artifacts = _COMMANDS[args.command](config, args, registry)
    except (NearfieldError, OSError) as exc:
        print(json.dumps({"ok": False, "error": {
            "type": type(exc).__name__, "message": str(exc)}}, sort_keys=True))
        return 1
    finally:
        if registry is not None:
            registry.close()
    print(json.dumps({"ok": True, "command": args.command, "artifacts": artifacts},
                     sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
