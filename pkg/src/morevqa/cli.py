"""Operator entry points: eval runs, single-question traces, ablations,
statistics, replay, and serving the mock backend."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

from .baselines import JcefConfig
from .core import QAItem, RunConfig
from .harness import (
    SYSTEMS,
    BackendUnreachable,
    DatasetError,
    load_dataset,
    qtype_stats,
    run_ablation,
    run_eval,
)
from .pipeline import RuleBasedPlanner, run_morevqa
from .server import parse_listen_address, start_server
from .tools import (
    MockBackend,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    ToolSession,
    load_corpus,
)

EXIT_OK = 0
EXIT_ITEM_FAILURES = 1
EXIT_FATAL = 2


class CliError(Exception):
    pass


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _coerce(text: str, kind: type):
    if kind is bool:
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise CliError(f"cannot read boolean from {text!r}")
    return kind(text)


def _build_configs(config_path: str | None) -> tuple[RunConfig, JcefConfig, int]:
    """Config file keys mirror the RunConfig/JcefConfig fields."""
    run_config = RunConfig()
    jcef_config = JcefConfig()
    workers = 1
    if config_path is None:
        return run_config, jcef_config, workers
    values = _parse_config_file(config_path)
    run_fields = {f.name: f for f in fields(RunConfig)}
    jcef_fields = {f.name: f for f in fields(JcefConfig)}
    for key, raw in values.items():
        if key == "workers":
            workers = int(raw)
        elif key == "stage_mask":
            bits = [b.strip() for b in raw.split(",")]
            if len(bits) != 3:
                raise CliError("stage_mask must be three comma-separated flags")
            run_config = replace(
                run_config, stage_mask=tuple(_coerce(b, bool) for b in bits)
            )
        else:
            known = False
            if key in run_fields:
                hint = type(getattr(run_config, key))
                run_config = replace(run_config, **{key: _coerce(raw, hint)})
                known = True
            if key in jcef_fields:  # fps_caption lives on both configs
                hint = type(getattr(jcef_config, key))
                jcef_config = replace(jcef_config, **{key: _coerce(raw, hint)})
                known = True
            if not known:
                raise CliError(f"unknown config key {key!r}")
    return run_config, jcef_config, workers


def _resolve_backend(spec: str, fixtures_dir: str | None):
    """Backend spec is mock:DIR, remote:HOST:PORT, or replay:FILE."""
    kind, _, rest = spec.partition(":")
    if kind == "mock":
        if not rest:
            raise CliError("mock backend needs a fixtures directory: mock:DIR")
        corpus = load_corpus(rest)
        if not corpus:
            raise CliError(f"no fixtures found in {rest}")
        return MockBackend(corpus), corpus
    if kind == "remote":
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise CliError("remote backend needs remote:HOST:PORT")
        corpus = load_corpus(fixtures_dir) if fixtures_dir else {}
        return RemoteBackend(host, int(port)), corpus
    if kind == "replay":
        if not rest:
            raise CliError("replay backend needs a recording file: replay:FILE")
        if not Path(rest).exists():
            raise CliError(f"recording {rest} does not exist")
        corpus = load_corpus(fixtures_dir) if fixtures_dir else {}
        return ReplayBackend(rest), corpus
    raise CliError(f"unknown backend spec {spec!r}")


def _require_fixtures(corpus, system: str) -> None:
    if system != "llm_only" and not corpus:
        raise CliError(
            "this backend does not carry video metadata; pass --fixtures DIR"
        )


def _cmd_eval(args: argparse.Namespace) -> int:
    run_config, jcef_config, workers = _build_configs(args.config)
    if args.workers is not None:
        workers = args.workers
    backend, corpus = _resolve_backend(args.backend, args.fixtures)
    _require_fixtures(corpus, args.system)
    recording = None
    if args.record:
        recording = RecordingBackend(backend, args.record)
        backend = recording
    try:
        items = load_dataset(args.dataset, lenient=args.lenient)
    except (OSError, DatasetError) as exc:
        raise CliError(str(exc)) from exc
    if not items:
        raise CliError("dataset is empty")
    results, summary = run_eval(
        items,
        args.system,
        backend,
        corpus,
        run_config=run_config,
        jcef_config=jcef_config,
        out_dir=args.out,
        workers=workers,
        dataset_dir=Path(args.dataset).parent,
    )
    if recording is not None:
        recording.close()
    print(json.dumps(summary, indent=2))
    failures = sum(1 for r in results if r.failure)
    return EXIT_ITEM_FAILURES if failures else EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    run_config, _, _ = _build_configs(args.config)
    backend, corpus = _resolve_backend(args.backend, args.fixtures)
    if args.video not in corpus:
        raise CliError(f"video {args.video!r} not found in the fixture corpus")
    video = corpus[args.video].video_meta()
    candidates = tuple(args.candidates) if args.candidates else None
    qa = QAItem(question=args.question, candidates=candidates)
    session = ToolSession(backend)
    outcome = run_morevqa(video, qa, run_config, RuleBasedPlanner(), session)
    if outcome.failure:
        print(f"failure: {outcome.failure}")
        return EXIT_ITEM_FAILURES
    if outcome.mc_index is not None:
        print(f"answer: {outcome.mc_index}: {outcome.answer}")
    else:
        print(f"answer: {outcome.answer}")
    if outcome.grounded_window is not None:
        start_s, end_s = outcome.grounded_window_s
        print(
            f"grounded frames: {outcome.grounded_window.to_list()}"
            f" ({start_s:.1f}s..{end_s:.1f}s)"
        )
    for record in outcome.stage_records:
        print(f"-- stage {record.stage_name} --")
        if record.emitted_program and record.stage_name != "prediction":
            print("program:")
            for line in record.emitted_program.split("\n"):
                print(f"  {line}")
        print(f"tool calls: {len(record.tool_calls)}")
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    run_config, _, workers = _build_configs(args.config)
    if args.workers is not None:
        workers = args.workers
    backend, corpus = _resolve_backend(args.backend, args.fixtures)
    _require_fixtures(corpus, "morevqa")
    items = load_dataset(args.dataset, lenient=args.lenient)
    out_path = Path(args.out) / "ablation.csv" if args.out else None
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = run_ablation(
        items, backend, corpus, run_config=run_config, out_path=out_path, workers=workers
    )
    print("m1,m2,m3,accuracy")
    for mask, accuracy in rows:
        bits = ",".join(str(int(b)) for b in mask)
        print(f"{bits},{accuracy:.6f}")
    return EXIT_OK


def _cmd_stats(args: argparse.Namespace) -> int:
    traces_dir = Path(args.traces)
    if not traces_dir.is_dir():
        raise CliError(f"{args.traces} is not a directory")
    traces = []
    for path in sorted(traces_dir.glob("*.json")):
        with open(path, "r", encoding="utf-8") as fh:
            traces.append(json.load(fh))
    if not traces:
        raise CliError(f"no trace files under {args.traces}")
    labels = None
    if args.dataset:
        items = load_dataset(args.dataset)
        if len(items) == len(traces) and all(i.qtype_label for i in items):
            labels = [i.qtype_label for i in items]
    try:
        stats = qtype_stats(traces, labels)
    except ValueError as exc:
        raise CliError(f"cannot compute stats from these traces: {exc}") from exc
    print(json.dumps(stats, indent=2))
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    args.backend = f"replay:{args.recording}"
    args.record = None
    return _cmd_eval(args)


def _cmd_serve_mock(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.fixtures)
    if not corpus:
        raise CliError(f"no fixtures found in {args.fixtures}")
    host, port = parse_listen_address(args.listen)
    server = start_server(MockBackend(corpus), host, port)
    bound_host, bound_port = server.server_address[:2]
    print(f"serving {len(corpus)} fixtures on {bound_host}:{bound_port}")
    try:
        import threading

        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morevqa")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_eval_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--dataset", required=True)
        p.add_argument("--config")
        p.add_argument("--out")
        p.add_argument("--fixtures")
        p.add_argument("--lenient", action="store_true")
        p.add_argument("--workers", type=int)

    p_eval = sub.add_parser("eval", help="evaluate one system over a dataset")
    common_eval_flags(p_eval)
    p_eval.add_argument("--system", required=True, choices=SYSTEMS)
    p_eval.add_argument("--backend", required=True)
    p_eval.add_argument("--record", help="record every tool call to this file")
    p_eval.set_defaults(func=_cmd_eval)

    p_run = sub.add_parser("run", help="run one question with a full trace")
    p_run.add_argument("--video", required=True)
    p_run.add_argument("--question", required=True)
    p_run.add_argument("--candidates", nargs="*")
    p_run.add_argument("--backend", required=True)
    p_run.add_argument("--config")
    p_run.add_argument("--fixtures")
    p_run.set_defaults(func=_cmd_run)

    p_ablate = sub.add_parser("ablate", help="run the stage ablation grid")
    common_eval_flags(p_ablate)
    p_ablate.add_argument("--backend", required=True)
    p_ablate.set_defaults(func=_cmd_ablate)

    p_stats = sub.add_parser("stats", help="question-type statistics from traces")
    p_stats.add_argument("--traces", required=True)
    p_stats.add_argument("--dataset")
    p_stats.set_defaults(func=_cmd_stats)

    p_replay = sub.add_parser("replay", help="re-evaluate against a recording")
    common_eval_flags(p_replay)
    p_replay.add_argument("--recording", required=True)
    p_replay.add_argument("--system", required=True, choices=SYSTEMS)
    p_replay.set_defaults(func=_cmd_replay)

    p_serve = sub.add_parser("serve-mock", help="serve fixtures over the wire protocol")
    p_serve.add_argument("--fixtures", required=True)
    p_serve.add_argument("--listen", default="127.0.0.1:7385")
    p_serve.set_defaults(func=_cmd_serve_mock)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, BackendUnreachable, OSError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
