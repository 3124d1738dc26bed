"""Dataset ingestion, scoring, evaluation runs, ablations, and statistics.

Open-ended answers are scored by normalized string match (credit
min(matches/2, 1)); summaries label this metric `string-match` rather than
claiming equivalence with any judge-based protocol.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from .baselines import BaselineOutcome, JcefConfig, run_jcef, run_llm_only, run_single_stage
from .core import QAItem, RunConfig, VideoMeta
from .pipeline import RuleBasedPlanner, RunOutcome, run_morevqa
from .text import normalize_text
from .tools import RemoteBackend, ToolRequest, ToolSession, WorldFixture


class BackendUnreachable(Exception):
    pass


def _probe_remote(backend) -> None:
    """A deliberately invalid request: any non-transport reply proves the
    wire works."""
    resp = backend.dispatch(ToolRequest(0, "caption", None, None))
    if not resp.ok and (resp.error or "").startswith("transport:"):
        raise BackendUnreachable(resp.error)


SYSTEMS = ("morevqa", "jcef", "llm_only", "single_stage")

ABLATION_MASKS = (
    (False, False, False),
    (True, False, True),
    (True, True, False),
    (True, True, True),
)


class DatasetError(Exception):
    pass


@dataclass
class EvalItem:
    """One dataset row: a question bound to a video."""

    video_id: str
    qa: QAItem
    qtype_label: str | None = None
    subset: str | None = None
    program_path: str | None = None


@dataclass
class EvalResult:
    item: EvalItem
    predicted_answer: str
    mc_index: int | None
    correct: float
    pred_window_s: tuple[float, float] | None
    timings_ms: dict[str, float] = field(default_factory=dict)
    failure: dict[str, Any] | None = None
    trace: dict[str, Any] = field(default_factory=dict)

    def to_json_dict(self) -> dict[str, Any]:
        # timings are deliberately excluded: result files must be
        # byte-identical across reruns
        return {
            "video_id": self.item.video_id,
            "question": self.item.qa.question,
            "predicted_answer": self.predicted_answer,
            "mc_index": self.mc_index,
            "correct": self.correct,
            "pred_window_s": list(self.pred_window_s) if self.pred_window_s else None,
            "failure": self.failure,
        }


_ITEM_FIELDS = {
    "video_id", "question", "candidates", "answer_mc", "answer_open",
    "gt_window_s", "qtype", "subset", "program_path",
}


def _parse_item(obj: dict[str, Any], lineno: int) -> EvalItem:
    unknown = set(obj) - _ITEM_FIELDS
    if unknown:
        raise DatasetError(f"line {lineno}: unknown fields {sorted(unknown)}")
    if "video_id" not in obj or "question" not in obj:
        raise DatasetError(f"line {lineno}: video_id and question are required")
    has_mc = obj.get("answer_mc") is not None
    has_open = obj.get("answer_open") is not None
    if has_mc == has_open:
        raise DatasetError(f"line {lineno}: exactly one of answer_mc/answer_open is required")
    try:
        qa = QAItem(
            question=obj["question"],
            candidates=tuple(obj["candidates"]) if obj.get("candidates") else None,
            answer_mc=obj.get("answer_mc"),
            answer_open=tuple(obj["answer_open"]) if obj.get("answer_open") else None,
            gt_window_s=tuple(obj["gt_window_s"]) if obj.get("gt_window_s") else None,
        )
    except (ValueError, TypeError) as exc:
        raise DatasetError(f"line {lineno}: {exc}") from exc
    return EvalItem(
        video_id=obj["video_id"],
        qa=qa,
        qtype_label=obj.get("qtype"),
        subset=obj.get("subset"),
        program_path=obj.get("program_path"),
    )


def load_dataset(path: str | Path, lenient: bool = False) -> list[EvalItem]:
    """Parse a JSONL dataset. Malformed lines are fatal unless lenient."""
    items: list[EvalItem] = []
    skipped: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise DatasetError(f"line {lineno}: expected a JSON object")
                items.append(_parse_item(obj, lineno))
            except (json.JSONDecodeError, DatasetError) as exc:
                message = str(exc) if isinstance(exc, DatasetError) else f"line {lineno}: {exc}"
                if lenient:
                    skipped.append(message)
                else:
                    raise DatasetError(message) from exc
    if skipped:
        for message in skipped:
            print(f"skipping malformed dataset line: {message}")
    return items


# --- scoring ---

def score_mc(pred_index: int | None, gt_index: int) -> int:
    return int(pred_index == gt_index)


def score_open_ended(pred_text: str, gt_answers: Iterable[str]) -> float:
    """Credit min(matches/2, 1) over normalized exact matches."""
    gt = list(gt_answers)
    if not gt:
        raise ValueError("gt_answers must be non-empty")
    pred = normalize_text(pred_text)
    matches = sum(1 for answer in gt if normalize_text(answer) == pred)
    return min(matches / 2.0, 1.0)


def interval_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Intersection over union of two seconds intervals (set measure)."""
    (a0, a1), (b0, b1) = a, b
    if a0 > a1 or b0 > b1:
        raise ValueError("intervals must satisfy start <= end")
    inter = max(0.0, min(a1, b1) - max(a0, b0))
    union = (a1 - a0) + (b1 - b0) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def interval_iop(pred: tuple[float, float], gt: tuple[float, float]) -> float:
    """Intersection over the prediction's own length."""
    (p0, p1), (g0, g1) = pred, gt
    if p0 > p1 or g0 > g1:
        raise ValueError("intervals must satisfy start <= end")
    length = p1 - p0
    if length <= 0.0:
        return 0.0
    inter = max(0.0, min(p1, g1) - max(p0, g0))
    return inter / length


@dataclass(frozen=True)
class GroundedMetrics:
    m_iop: float
    iop_at_05: float
    m_iou: float
    iou_at_05: float
    acc_at_gqa: float

    def to_json_dict(self) -> dict[str, float]:
        return {
            "mIoP": self.m_iop,
            "IoP@0.5": self.iop_at_05,
            "mIoU": self.m_iou,
            "IoU@0.5": self.iou_at_05,
            "Acc@GQA": self.acc_at_gqa,
        }


def grounded_qa_metrics(results: list[EvalResult]) -> GroundedMetrics:
    """Aggregate grounding quality; every result needs both windows."""
    if not results:
        raise ValueError("no results to aggregate")
    iops: list[float] = []
    ious: list[float] = []
    gqa: list[float] = []
    for res in results:
        if res.pred_window_s is None or res.item.qa.gt_window_s is None:
            raise ValueError(
                f"missing prediction or ground-truth window for {res.item.video_id}"
            )
        iop = interval_iop(res.pred_window_s, res.item.qa.gt_window_s)
        iou = interval_iou(res.pred_window_s, res.item.qa.gt_window_s)
        iops.append(iop)
        ious.append(iou)
        gqa.append(res.correct if iop >= 0.5 else 0.0)
    n = len(results)
    return GroundedMetrics(
        m_iop=sum(iops) / n,
        iop_at_05=sum(1 for v in iops if v >= 0.5) / n,
        m_iou=sum(ious) / n,
        iou_at_05=sum(1 for v in ious if v >= 0.5) / n,
        acc_at_gqa=sum(gqa) / n,
    )


# --- per-item execution ---

def _score_item(item: EvalItem, answer: str, mc_index: int | None) -> float:
    if item.qa.answer_mc is not None:
        return float(score_mc(mc_index, item.qa.answer_mc))
    if item.qa.answer_open is not None:
        return score_open_ended(answer, item.qa.answer_open)
    return 0.0


def _resolve_program_text(item: EvalItem, dataset_dir: Path | None) -> str | None:
    if item.program_path is None:
        return None
    path = Path(item.program_path)
    if not path.is_absolute() and dataset_dir is not None:
        path = dataset_dir / path
    return path.read_text(encoding="utf-8")


def run_item(
    system: str,
    item: EvalItem,
    video: VideoMeta | None,
    backend,
    run_config: RunConfig,
    jcef_config: JcefConfig,
    dataset_dir: Path | None = None,
    planner=None,
) -> EvalResult:
    """Evaluate one item with a fresh tool session."""
    if video is None and system != "llm_only":
        raise ValueError(f"system {system!r} needs video metadata")
    session = ToolSession(backend)
    started = time.perf_counter()
    timings: dict[str, float] = {}
    if system == "morevqa":
        outcome: RunOutcome = run_morevqa(
            video, item.qa, run_config, planner or RuleBasedPlanner(), session
        )
        answer, mc_index = outcome.answer, outcome.mc_index
        failure = outcome.failure
        pred_window = outcome.grounded_window_s
        trace = outcome.trace_dict(item.video_id, item.qa.question)
        if outcome.stage_timings_ms:
            timings.update(outcome.stage_timings_ms)
    elif system == "jcef":
        base = run_jcef(video, item.qa, jcef_config, session)
        answer, mc_index, failure, pred_window = base.answer, base.mc_index, base.failure, None
        trace = base.trace_dict(system, item.video_id, item.qa.question)
    elif system == "llm_only":
        base = run_llm_only(item.qa, session)
        answer, mc_index, failure, pred_window = base.answer, base.mc_index, base.failure, None
        trace = base.trace_dict(system, item.video_id, item.qa.question)
    elif system == "single_stage":
        try:
            program_text = _resolve_program_text(item, dataset_dir)
        except OSError as exc:
            program_text = None
            base = BaselineOutcome(
                "", None, failure={"kind": "missing_program", "message": str(exc)}
            )
        else:
            base = run_single_stage(video, item.qa, session, program_text)
        answer, mc_index, failure, pred_window = base.answer, base.mc_index, base.failure, None
        trace = base.trace_dict(system, item.video_id, item.qa.question)
    else:
        raise ValueError(f"unknown system {system!r}")
    timings["total"] = (time.perf_counter() - started) * 1000.0
    correct = 0.0 if failure else _score_item(item, answer, mc_index)
    return EvalResult(
        item=item,
        predicted_answer=answer,
        mc_index=mc_index,
        correct=correct,
        pred_window_s=pred_window,
        timings_ms=timings,
        failure=failure,
        trace=trace,
    )


def _video_meta_for(item: EvalItem, fixtures: Mapping[str, WorldFixture]) -> VideoMeta:
    if item.video_id not in fixtures:
        raise DatasetError(f"video {item.video_id!r} not found in the fixture corpus")
    return fixtures[item.video_id].video_meta()


def summarize(system: str, results: list[EvalResult]) -> dict[str, Any]:
    n = len(results)
    accuracy = sum(r.correct for r in results) / n if n else 0.0
    per_subset: dict[str, list[float]] = {}
    for res in results:
        if res.item.subset:
            per_subset.setdefault(res.item.subset, []).append(res.correct)
    failures = [r for r in results if r.failure]
    failures_by_kind: dict[str, int] = {}
    for res in failures:
        kind = res.failure.get("kind", "unknown")
        failures_by_kind[kind] = failures_by_kind.get(kind, 0) + 1
    summary: dict[str, Any] = {
        "system": system,
        "items": n,
        "accuracy": accuracy,
        "per_subset": {
            name: sum(vals) / len(vals) for name, vals in sorted(per_subset.items())
        },
        "failure_rate": len(failures) / n if n else 0.0,
        "failures_by_kind": dict(sorted(failures_by_kind.items())),
    }
    if any(r.item.qa.answer_open is not None for r in results):
        summary["open_ended_metric"] = "string-match"
    groundable = [
        r for r in results if r.pred_window_s is not None and r.item.qa.gt_window_s is not None
    ]
    if groundable:
        summary["grounded"] = grounded_qa_metrics(groundable).to_json_dict()
    return summary


def run_eval(
    items: list[EvalItem],
    system: str,
    backend,
    fixtures: Mapping[str, WorldFixture],
    run_config: RunConfig | None = None,
    jcef_config: JcefConfig | None = None,
    out_dir: str | Path | None = None,
    workers: int = 1,
    dataset_dir: str | Path | None = None,
    planner=None,
) -> tuple[list[EvalResult], dict[str, Any]]:
    """Evaluate every item; write results, summary, traces, timings."""
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}; expected one of {SYSTEMS}")
    run_config = run_config or RunConfig()
    jcef_config = jcef_config or JcefConfig()
    dataset_dir = Path(dataset_dir) if dataset_dir is not None else None
    if isinstance(backend, RemoteBackend):
        _probe_remote(backend)

    def one(item: EvalItem) -> EvalResult:
        try:
            video = None if system == "llm_only" else _video_meta_for(item, fixtures)
            return run_item(
                system, item, video, backend, run_config, jcef_config, dataset_dir, planner
            )
        except Exception as exc:  # per-item failures are recorded, not fatal
            return EvalResult(
                item=item,
                predicted_answer="",
                mc_index=None,
                correct=0.0,
                pred_window_s=None,
                failure={"kind": "item_error", "message": str(exc)},
                trace={"system": system, "video_id": item.video_id,
                       "question": item.qa.question, "failure": str(exc)},
            )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(item) for item in items]

    summary = summarize(system, results)
    if out_dir is not None:
        write_eval_outputs(Path(out_dir), results, summary)
    return results, summary


def write_eval_outputs(out_dir: Path, results: list[EvalResult], summary: dict[str, Any]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "results.jsonl", "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(json.dumps(res.to_json_dict()) + "\n")
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    with open(out_dir / "timings.jsonl", "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(
                json.dumps({"video_id": res.item.video_id, "timings_ms": res.timings_ms}) + "\n"
            )
    traces = out_dir / "traces"
    traces.mkdir(exist_ok=True)
    for idx, res in enumerate(results):
        with open(traces / f"{idx:04d}_{res.item.video_id}.json", "w", encoding="utf-8") as fh:
            json.dump(res.trace, fh, indent=2)
            fh.write("\n")


def run_ablation(
    items: list[EvalItem],
    backend,
    fixtures: Mapping[str, WorldFixture],
    run_config: RunConfig | None = None,
    out_path: str | Path | None = None,
    workers: int = 1,
) -> list[tuple[tuple[bool, bool, bool], float]]:
    """Evaluate the stage grid and emit (mask, accuracy) rows."""
    run_config = run_config or RunConfig()
    rows: list[tuple[tuple[bool, bool, bool], float]] = []
    for mask in ABLATION_MASKS:
        config = replace(run_config, stage_mask=mask)
        _, summary = run_eval(
            items, "morevqa", backend, fixtures, run_config=config, workers=workers
        )
        rows.append((mask, summary["accuracy"]))
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("m1,m2,m3,accuracy\n")
            for mask, accuracy in rows:
                bits = ",".join(str(int(b)) for b in mask)
                fh.write(f"{bits},{accuracy:.6f}\n")
    return rows


# --- statistics ---

def qtype_stats(
    traces: list[dict[str, Any]], labels: list[str] | None = None
) -> dict[str, Any]:
    """Distributions of parsed question types and conjunction presence.

    Reads the event-parsing stage's memory from run traces. With dataset
    labels, also emits a label-against-prediction agreement table.
    """
    if not traces:
        raise ValueError("no traces given")
    qa_counts: dict[str, int] = {}
    conj_present = 0
    predictions: list[str] = []
    for trace in traces:
        records = trace.get("stage_records") or []
        if not records:
            raise ValueError("trace lacks stage records")
        memory = records[0]["memory_after"]
        qa_type = memory.get("qa_type", "other")
        predictions.append(qa_type)
        qa_counts[qa_type] = qa_counts.get(qa_type, 0) + 1
        if memory.get("conjunction", "none") != "none":
            conj_present += 1
    n = len(traces)
    stats: dict[str, Any] = {
        "count": n,
        "qa_type": {name: count / n for name, count in sorted(qa_counts.items())},
        "conjunction": {"present": conj_present / n, "absent": (n - conj_present) / n},
    }
    if labels is not None:
        if len(labels) != n:
            raise ValueError("labels and traces must align")
        matrix: dict[str, dict[str, int]] = {}
        agree = 0
        for label, pred in zip(labels, predictions):
            row = matrix.setdefault(label, {})
            row[pred] = row.get(pred, 0) + 1
            if label == pred:
                agree += 1
        stats["agreement"] = {
            "diagonal": agree / n,
            "matrix": {k: dict(sorted(v.items())) for k, v in sorted(matrix.items())},
        }
    return stats
