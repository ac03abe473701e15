"""Command-line front end and pipeline orchestration.

Subcommands:

* ``gen``    -- generate problem instances to a JSONL file.
* ``solve``  -- run the exact solver over instances; write trace JSONL.
* ``render`` -- write the prompt text for each instance in one mode.
* ``run``    -- the full pipeline: generate, render, execute the scaling
  matrix against a backend, verify, aggregate, and emit reports.
* ``verify`` -- judge externally produced answer texts against instances.
* ``report`` -- re-aggregate a previous run's outcome log into reports.

``run`` is resumable: every backend call is identified by a content digest
and cached, so an interrupted run repeated with the same config replays
finished calls from the cache and only pays for the remainder.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from . import __version__
from .answers import evaluate
from .gateway import (
    HttpBackend,
    MockBackend,
    ModelGateway,
    OracleBackend,
    RateLimiter,
    ResponseCache,
)
from .generate import GenSpec, generate
from .prompts import (
    PromptMode,
    bundle_text,
    default_exemplars,
    estimate_tokens,
    render,
)
from .reporting import RunReport, aggregate, emit
from .scaling import RunOutcome, ScalingKind, ScalingStrategy, default_matrix, execute
from .solver import SearchMode, solve, trace_to_records
from .tasks import (
    ProblemInstance,
    TaskError,
    TaskKind,
    Verdict,
    VerdictStatus,
    read_instances,
    write_instances,
)


class ConfigError(TaskError):
    """A config document that cannot be turned into a valid run plan."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

DEFAULT_LEVEL = 10
DEFAULT_COUNT = 100
DEFAULT_PARALLEL_N = 3
DEFAULT_REFINE_ROUNDS = 1
DEFAULT_CONCURRENCY = 4
DEFAULT_MAX_TOKENS = 4096

_MODEL_KEYS = {
    "name",
    "backend",
    "model",
    "url",
    "dialect",
    "api_key_env",
    "timeout_s",
    "requests_per_second",
    "script",
}

_CONFIG_KEYS = {
    "tasks",
    "levels",
    "instance_count",
    "seed",
    "models",
    "matrix",
    "parallel_n",
    "refine_rounds",
    "thinking_budget",
    "concurrency",
    "cache_path",
    "out_dir",
    "max_tokens",
    "token_budget",
}

_BACKEND_KINDS = ("oracle", "mock", "http")


@dataclass(frozen=True)
class ModelConfig:
    name: str
    backend: str
    model: str
    url: str = ""
    dialect: str = "anthropic"
    api_key_env: str = "ANTHROPIC_API_KEY"
    timeout_s: float = 120.0
    requests_per_second: float = 0.0
    script: tuple[str, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    tasks: tuple[TaskKind, ...]
    levels: tuple[int, ...]
    instance_count: int
    seed: int
    models: tuple[ModelConfig, ...]
    matrix: tuple[tuple[PromptMode, ScalingStrategy], ...]
    concurrency: int = DEFAULT_CONCURRENCY
    cache_path: str | None = None
    out_dir: str = "out"
    max_tokens: int = DEFAULT_MAX_TOKENS
    token_budget: int | None = None


def _reject_unknown(doc: Mapping, allowed: set[str], where: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{where}{key}: unknown key")


def _model_config(doc: Mapping, where: str) -> ModelConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{where}: expected an object")
    _reject_unknown(doc, _MODEL_KEYS, where + ".")
    name = doc.get("name")
    if not name or not isinstance(name, str):
        raise ConfigError(f"{where}.name: required string")
    backend = doc.get("backend", "http")
    if backend not in _BACKEND_KINDS:
        raise ConfigError(f"{where}.backend: must be one of {_BACKEND_KINDS}")
    if backend == "http" and not doc.get("url"):
        raise ConfigError(f"{where}.url: required for http backends")
    script = doc.get("script", ())
    if script and not all(isinstance(s, str) for s in script):
        raise ConfigError(f"{where}.script: must be a list of strings")
    return ModelConfig(
        name=name,
        backend=backend,
        model=doc.get("model", name),
        url=doc.get("url", ""),
        dialect=doc.get("dialect", "anthropic"),
        api_key_env=doc.get("api_key_env", "ANTHROPIC_API_KEY"),
        timeout_s=float(doc.get("timeout_s", 120.0)),
        requests_per_second=float(doc.get("requests_per_second", 0.0)),
        script=tuple(script),
    )


def config_from_dict(doc: Mapping) -> RunConfig:
    """Validate a parsed config document; unknown keys are errors."""
    if not isinstance(doc, Mapping):
        raise ConfigError("config root: expected an object")
    _reject_unknown(doc, _CONFIG_KEYS, "")

    try:
        tasks = tuple(TaskKind(t) for t in doc.get("tasks", [k.value for k in TaskKind]))
    except ValueError as err:
        raise ConfigError(f"tasks: {err}") from err
    if not tasks:
        raise ConfigError("tasks: must name at least one task")

    levels = tuple(doc.get("levels", [DEFAULT_LEVEL]))
    if not levels or not all(isinstance(l, int) and l > 0 for l in levels):
        raise ConfigError("levels: must be a non-empty list of positive integers")

    count = doc.get("instance_count", DEFAULT_COUNT)
    if not isinstance(count, int) or count < 1:
        raise ConfigError("instance_count: must be an integer >= 1")

    models_doc = doc.get("models")
    if not models_doc:
        raise ConfigError("models: must configure at least one model")
    models = tuple(
        _model_config(m, f"models[{i}]") for i, m in enumerate(models_doc)
    )

    thinking_budget = doc.get("thinking_budget")
    if thinking_budget is not None and (
        not isinstance(thinking_budget, int) or thinking_budget < 1
    ):
        raise ConfigError("thinking_budget: must be a positive integer or null")

    if "matrix" in doc:
        matrix = []
        for i, pair in enumerate(doc["matrix"]):
            try:
                mode_name, strategy_spec = pair
                matrix.append(
                    (PromptMode(mode_name), ScalingStrategy.parse(strategy_spec))
                )
            except (ValueError, TaskError) as err:
                raise ConfigError(f"matrix[{i}]: {err}") from err
        matrix = tuple(matrix)
    else:
        matrix = tuple(
            default_matrix(
                n=doc.get("parallel_n", DEFAULT_PARALLEL_N),
                rounds=doc.get("refine_rounds", DEFAULT_REFINE_ROUNDS),
                thinking_budget=thinking_budget,
            )
        )
    if not matrix:
        raise ConfigError("matrix: must not be empty")

    concurrency = doc.get("concurrency", DEFAULT_CONCURRENCY)
    if not isinstance(concurrency, int) or concurrency < 1:
        raise ConfigError("concurrency: must be an integer >= 1")

    return RunConfig(
        tasks=tasks,
        levels=levels,
        instance_count=count,
        seed=doc.get("seed", 0),
        models=models,
        matrix=matrix,
        concurrency=concurrency,
        cache_path=doc.get("cache_path"),
        out_dir=doc.get("out_dir", "out"),
        max_tokens=doc.get("max_tokens", DEFAULT_MAX_TOKENS),
        token_budget=doc.get("token_budget"),
    )


def validate_config(path: str | Path) -> RunConfig:
    """Load and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from err
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def generate_instances(config: RunConfig) -> list[ProblemInstance]:
    instances = []
    for kind in config.tasks:
        for level in config.levels:
            for i in range(config.instance_count):
                instances.append(
                    generate(GenSpec(kind=kind, level=level, seed=config.seed + i))
                )
    return instances


def build_backend(model: ModelConfig, instances: Sequence[ProblemInstance]):
    if model.backend == "oracle":
        return OracleBackend(instances)
    if model.backend == "mock":
        return MockBackend(model.script or ("",))
    return HttpBackend(
        url=model.url,
        dialect=model.dialect,
        api_key_env=model.api_key_env,
        timeout_s=model.timeout_s,
    )


def _outcome_record(model: str, outcome: RunOutcome) -> dict:
    return {
        "model": model,
        "instance_id": outcome.instance_id,
        "task": outcome.task.value,
        "mode": outcome.mode.value,
        "strategy": outcome.strategy,
        "final": {
            "status": outcome.final.status.value,
            "reason": outcome.final.reason,
        },
        "attempts": [
            {
                "round": a.round_index,
                "sample": a.sample_index,
                "digest": a.request_digest,
                "status": a.verdict.status.value,
                "reason": a.verdict.reason,
            }
            for a in outcome.attempts
        ],
    }


def _outcome_from_record(record: dict) -> tuple[str, RunOutcome]:
    final = Verdict(
        status=VerdictStatus(record["final"]["status"]),
        reason=record["final"].get("reason", ""),
    )
    outcome = RunOutcome(
        instance_id=record["instance_id"],
        task=TaskKind(record["task"]),
        mode=PromptMode(record["mode"]),
        strategy=record["strategy"],
        attempts=(),
        final=final,
    )
    return record["model"], outcome


def _aggregate_models(
    per_model: Mapping[str, list[RunOutcome]],
    run_meta: Mapping[str, object],
    expected_per_cell: int | None,
) -> RunReport:
    cells: list = []
    incomplete: list[str] = []
    for model in sorted(per_model):
        part = aggregate(
            per_model[model], model=model, expected_per_cell=expected_per_cell
        )
        cells.extend(part.cells)
        incomplete.extend(part.incomplete)
    cells.sort(key=lambda c: c.sort_key())
    return RunReport(
        cells=tuple(cells), run_meta=dict(run_meta), incomplete=tuple(incomplete)
    )


def run(config: RunConfig, echo: Callable[[str], None] = print) -> RunReport:
    """Execute the full pipeline described by ``config``."""
    started = time.time()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    echo(f"generating {len(config.tasks)} task(s) x {len(config.levels)} level(s) "
         f"x {config.instance_count} instance(s) ...")
    instances = generate_instances(config)

    cache = ResponseCache(config.cache_path)
    gateways = {}
    for model in config.models:
        backend = build_backend(model, instances)
        gateways[model.name] = ModelGateway(
            backend,
            cache=cache,
            rate_limiter=RateLimiter(model.requests_per_second),
        )

    bundles = {}
    for instance in instances:
        for mode in {mode for mode, _ in config.matrix}:
            bundles[(instance.id, mode)] = render(
                instance,
                mode,
                default_exemplars(instance.kind, mode),
                token_budget=config.token_budget,
            )

    units = [
        (model, instance, mode, strategy)
        for model in config.models
        for instance in instances
        for mode, strategy in config.matrix
    ]
    echo(f"executing {len(units)} cell-instance unit(s) "
         f"with concurrency {config.concurrency} ...")

    def work(unit) -> tuple[str, RunOutcome]:
        model, instance, mode, strategy = unit
        bundle = bundles[(instance.id, mode)]
        try:
            outcome = execute(
                gateways[model.name],
                instance,
                bundle,
                strategy,
                model=model.model,
                max_tokens=config.max_tokens,
            )
        except TaskError as err:
            outcome = RunOutcome(
                instance_id=instance.id,
                task=instance.kind,
                mode=mode,
                strategy=strategy.format(),
                attempts=(),
                final=Verdict(status=VerdictStatus.BACKEND_ERROR, reason=str(err)),
            )
        return model.name, outcome

    per_model: dict[str, list[RunOutcome]] = {m.name: [] for m in config.models}
    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        for model_name, outcome in pool.map(work, units):
            per_model[model_name].append(outcome)

    log_path = out_dir / "outcomes.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for model_name in sorted(per_model):
            for outcome in sorted(
                per_model[model_name],
                key=lambda o: (o.task.value, o.mode.value, o.strategy, o.instance_id),
            ):
                fh.write(json.dumps(_outcome_record(model_name, outcome),
                                    sort_keys=True) + "\n")

    cache_stats = {
        name: gw.cache_stats for name, gw in sorted(gateways.items())
    }
    run_meta = {
        "version": __version__,
        "level": config.levels[0] if len(config.levels) == 1 else "mixed",
        "config": {
            "tasks": [k.value for k in config.tasks],
            "levels": list(config.levels),
            "instance_count": config.instance_count,
            "seed": config.seed,
            "models": [
                {"name": m.name, "backend": m.backend, "dialect": m.dialect}
                for m in config.models
            ],
            "matrix": [[mode.value, s.format()] for mode, s in config.matrix],
            "max_tokens": config.max_tokens,
            "token_budget": config.token_budget,
        },
        "cache_stats": cache_stats,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "duration_s": round(time.time() - started, 3),
    }
    report = _aggregate_models(
        per_model, run_meta, expected_per_cell=config.instance_count
    )
    paths = emit(report, out_dir)
    echo(f"report written to {paths['report']}")
    return report


def dry_run(config: RunConfig, echo: Callable[[str], None] = print) -> dict:
    """Render everything and estimate cost without touching any backend."""
    instances = generate_instances(config)
    modes = sorted({mode for mode, _ in config.matrix}, key=lambda m: m.value)
    prompt_tokens = 0
    for instance in instances:
        for mode in modes:
            bundle = render(
                instance,
                mode,
                default_exemplars(instance.kind, mode),
                token_budget=config.token_budget,
            )
            prompt_tokens += estimate_tokens(bundle.system_text) + estimate_tokens(
                bundle.body
            )

    calls_per_strategy = {
        ScalingKind.NO_SCALING: lambda s: 1,
        ScalingKind.PARALLEL: lambda s: s.n,
        ScalingKind.SEQUENTIAL: lambda s: s.rounds + 1,
        ScalingKind.INTERNAL: lambda s: 1,
    }
    calls = sum(
        calls_per_strategy[strategy.kind](strategy)
        for _, strategy in config.matrix
    ) * len(instances) * len(config.models)

    plan = {
        "instances": len(instances),
        "models": len(config.models),
        "matrix_cells": len(config.matrix),
        "max_backend_calls": calls,
        "prompt_tokens_estimate": prompt_tokens,
    }
    for key, value in plan.items():
        echo(f"{key}: {value}")
    return plan


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_gen(args: argparse.Namespace) -> int:
    kinds = list(TaskKind) if args.task == "all" else [TaskKind(args.task)]
    base_seed = args.seed if args.seed is not None else 0
    instances = [
        generate(GenSpec(kind=kind, level=args.level, seed=base_seed + i))
        for kind in kinds
        for i in range(args.count)
    ]
    out = Path(args.out or "instances.jsonl")
    count = write_instances(out, instances)
    print(f"wrote {count} instance(s) to {out}")
    return 0


def _cmd_solve(args: argparse.Namespace) -> int:
    mode = SearchMode(args.search)
    out = Path(args.out or "traces.jsonl")
    written = 0
    with open(out, "w", encoding="utf-8") as fh:
        for instance in read_instances(args.instances):
            trace = solve(instance, mode)
            record = {
                "instance_id": instance.id,
                "search": mode.value,
                "succeeded": trace.succeeded,
                "explored": trace.explored_count,
                "events": trace_to_records(trace),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            written += 1
    print(f"wrote {written} trace(s) to {out}")
    return 0


def _cmd_render(args: argparse.Namespace) -> int:
    mode = PromptMode(args.mode)
    out_dir = Path(args.out or "prompts")
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for instance in read_instances(args.instances):
        bundle = render(
            instance,
            mode,
            default_exemplars(instance.kind, mode),
            token_budget=args.budget,
        )
        path = out_dir / f"{instance.id}.{mode.value}.txt"
        path.write_text(bundle_text(bundle), encoding="utf-8")
        count += 1
    print(f"wrote {count} prompt(s) to {out_dir}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = validate_config(args.config)
    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.cache:
        overrides["cache_path"] = args.cache
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = dataclasses.replace(config, **overrides)
    if args.dry_run:
        dry_run(config)
        return 0
    run(config)
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    instances = {inst.id: inst for inst in read_instances(args.instances)}
    failures = 0
    with open(args.answers, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            instance = instances.get(record["instance_id"])
            if instance is None:
                print(f"{record['instance_id']}: unknown instance")
                failures += 1
                continue
            _, verdict = evaluate(instance, record["text"])
            tail = f" ({verdict.reason})" if verdict.reason else ""
            print(f"{instance.id}: {verdict.status.value}{tail}")
            if verdict.status is not VerdictStatus.SUCCESS:
                failures += 1
    return 1 if failures else 0


def _cmd_report(args: argparse.Namespace) -> int:
    per_model: dict[str, list[RunOutcome]] = {}
    with open(args.outcomes, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            model, outcome = _outcome_from_record(json.loads(line))
            per_model.setdefault(model, []).append(outcome)
    run_meta: dict[str, object] = {}
    if args.level is not None:
        run_meta["level"] = args.level
    report = _aggregate_models(per_model, run_meta, expected_per_cell=None)
    paths = emit(report, args.out or "out")
    print(f"report written to {paths['report']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--cache", help="response cache path (JSONL)")
    common.add_argument("--seed", type=int, default=None, help="base RNG seed")
    common.add_argument(
        "--dry-run",
        action="store_true",
        help="render prompts and estimate cost without backend calls",
    )

    parser = argparse.ArgumentParser(
        prog="searchbench",
        description="Benchmark harness for search-guided prompting under "
        "test-time scaling.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", parents=[common], help="generate instances")
    p_gen.add_argument(
        "--task",
        default="all",
        choices=["all"] + [k.value for k in TaskKind],
    )
    p_gen.add_argument("--level", type=int, default=DEFAULT_LEVEL)
    p_gen.add_argument("--count", type=int, default=DEFAULT_COUNT)
    p_gen.set_defaults(func=_cmd_gen)

    p_solve = sub.add_parser("solve", parents=[common], help="trace the exact solver")
    p_solve.add_argument("--instances", required=True, help="instances JSONL")
    p_solve.add_argument(
        "--search", default=SearchMode.DFS.value,
        choices=[m.value for m in SearchMode],
    )
    p_solve.set_defaults(func=_cmd_solve)

    p_render = sub.add_parser("render", parents=[common], help="write prompt texts")
    p_render.add_argument("--instances", required=True, help="instances JSONL")
    p_render.add_argument(
        "--mode", required=True, choices=[m.value for m in PromptMode]
    )
    p_render.add_argument("--budget", type=int, default=None,
                          help="context token budget")
    p_render.set_defaults(func=_cmd_render)

    p_run = sub.add_parser("run", parents=[common], help="full pipeline")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", parents=[common], help="judge answer texts")
    p_verify.add_argument("--instances", required=True, help="instances JSONL")
    p_verify.add_argument(
        "--answers", required=True,
        help='JSONL of {"instance_id": ..., "text": ...}',
    )
    p_verify.set_defaults(func=_cmd_verify)

    p_report = sub.add_parser("report", parents=[common], help="re-emit reports")
    p_report.add_argument("--outcomes", required=True, help="outcomes JSONL")
    p_report.add_argument("--level", type=int, default=None,
                          help="difficulty level for table captions")
    p_report.set_defaults(func=_cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and not args.config:
        parser.error("run requires --config")
    try:
        return args.func(args)
    except TaskError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
