"""Command-line entry point orchestrating the whole pipeline."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .backtracking import (
    BacktrackConfig,
    accuracy_sweep,
    run_backtracking_experiment,
    summary_table,
    sweep_table,
    write_outcome_records,
)
from .errors import MistakeLabError
from .generation import GenerationConfig, backend_from_spec, generate_trace
from .locators import locator_from_spec
from .manifest import RunManifest
from .metrics import MetricReport, build_table, correctness_proxy_f1, mistake_accuracy
from .model import (
    TaskKind,
    Trace,
    dataset_stats,
    load_dataset,
    save_dataset,
)
from .annotation import AnnotationStore
from .tasks import is_correct_ans

DEFAULT_SEED = 0


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


@click.group()
def main() -> None:
    """Trace generation, mistake finding, backtracking, and scoring."""


def _write_manifest(outdir: Path, manifest: RunManifest) -> None:
    manifest.write(outdir)


@main.command()
@click.option("--questions", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", "backend_spec", required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--temperature", default=0.0, show_default=True)
@click.option("--max-steps", default=40, show_default=True)
@click.option("--parallel", default=1, show_default=True, help="max in-flight backend calls")
@click.option("--prompt-dir", type=click.Path(exists=True, file_okay=False), default=None)
def generate(questions, backend_spec, out, temperature, max_steps, parallel, prompt_dir):
    """Generate CoT traces for a question file (jsonl: id, task, question, target)."""
    from concurrent.futures import ThreadPoolExecutor

    backend = backend_from_spec(backend_spec)
    config = GenerationConfig(temperature=temperature, max_steps=max_steps)
    rows = [
        json.loads(line)
        for line in Path(questions).read_text().splitlines()
        if line.strip()
    ]

    def build(row: dict) -> Trace:
        return generate_trace(
            backend,
            TaskKind(row["task"]),
            row["question"],
            config,
            target=row.get("target", ""),
            trace_id=str(row.get("id", "")) or None,
            prompt_dir=prompt_dir,
        )

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            traces = list(pool.map(build, rows))
    else:
        traces = [build(row) for row in rows]
    out = Path(out)
    save_dataset(traces, out)
    _write_manifest(
        out.parent,
        RunManifest(
            command="generate",
            flags={"temperature": temperature, "max_steps": max_steps, "parallel": parallel},
            backend_spec=backend_spec,
            inputs=[str(questions)],
            outputs=[str(out)],
        ),
    )
    click.echo(f"wrote {len(traces)} traces to {out}")


@main.command()
@click.option("--method", "locator_spec", required=True)
@click.option("--backend", "backend_spec", default=None)
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mapping", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--prompt-dir", type=click.Path(exists=True, file_okay=False), default=None)
def find(locator_spec, backend_spec, dataset, mapping, out, seed, prompt_dir):
    """Run a mistake locator over a dataset and emit predictions."""
    traces = load_dataset(dataset, mapping)
    try:
        locator = locator_from_spec(
            locator_spec,
            dataset=traces,
            backend_spec=backend_spec,
            prompt_dir=prompt_dir,
        )
    except MistakeLabError as exc:
        raise _fail(str(exc))
    out = Path(out)
    n_failed = 0
    with out.open("w") as fh:
        for trace in traces:
            record: dict = {"id": trace.id}
            try:
                location = locator(trace)
                record["predicted_index"] = location.step
            except MistakeLabError as exc:
                record["predicted_index"] = None
                record["failed"] = True
                record["error"] = str(exc)
                n_failed += 1
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    _write_manifest(
        out.parent,
        RunManifest(
            command="find",
            flags={"seed": seed},
            backend_spec=backend_spec,
            locator_spec=locator_spec,
            seeds={"seed": seed},
            inputs=[str(dataset)],
            outputs=[str(out)],
        ),
    )
    click.echo(f"wrote {len(traces)} predictions to {out} ({n_failed} failed)")


def _backtrack_config(max_regen, batch_size, regen_temperature, continue_temperature, max_steps):
    return BacktrackConfig(
        max_regenerations=max_regen,
        batch_size=batch_size,
        regen_temperature=regen_temperature,
        continue_temperature=continue_temperature,
        max_steps=max_steps,
    )


@main.command()
@click.option("--locator", "locator_spec", required=True)
@click.option("--backend", "backend_spec", required=True)
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mapping", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
@click.option("--max-regen", default=8, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--regen-temperature", default=1.0, show_default=True)
@click.option("--continue-temperature", default=0.0, show_default=True)
@click.option("--max-steps", default=40, show_default=True)
@click.option("--prompt-dir", type=click.Path(exists=True, file_okay=False), default=None)
def backtrack(locator_spec, backend_spec, dataset, mapping, outdir, max_regen, batch_size,
              regen_temperature, continue_temperature, max_steps, prompt_dir):
    """Run the backtracking correction experiment and emit delta reports."""
    traces = load_dataset(dataset, mapping)
    backend = backend_from_spec(backend_spec)
    try:
        locator = locator_from_spec(
            locator_spec, dataset=traces, backend=backend, prompt_dir=prompt_dir
        )
    except MistakeLabError as exc:
        raise _fail(str(exc))
    config = _backtrack_config(
        max_regen, batch_size, regen_temperature, continue_temperature, max_steps
    )
    report = run_backtracking_experiment(
        traces, locator, backend, config, prompt_dir=prompt_dir
    )
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_outcome_records(report, outdir / "outcomes.jsonl")
    table = summary_table([report])
    (outdir / "summary.csv").write_text(table)
    _write_manifest(
        outdir,
        RunManifest(
            command="backtrack",
            flags={
                "max_regen": max_regen,
                "batch_size": batch_size,
                "regen_temperature": regen_temperature,
                "continue_temperature": continue_temperature,
                "max_steps": max_steps,
            },
            backend_spec=backend_spec,
            locator_spec=locator_spec,
            inputs=[str(dataset)],
            outputs=[str(outdir / "outcomes.jsonl"), str(outdir / "summary.csv")],
        ),
    )
    click.echo(table, nl=False)


def _parse_accuracies(spec: str) -> list[float]:
    """"start:stop:step" in percentage points, or a comma list of fractions."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise _fail(f"bad accuracy range {spec!r} (want start:stop:step)")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise _fail("accuracy range step must be positive")
        values = []
        value = start
        while value <= stop + 1e-9:
            values.append(round(value, 10) / 100.0)
            value += step
        return values
    return [float(p) for p in spec.split(",") if p.strip()]


@main.command()
@click.option("--accuracies", required=True,
              help='comma list of fractions ("0.0,0.5,1.0") or "start:stop:step" in percent')
@click.option("--backend", "backend_spec", required=True)
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mapping", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--outdir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--max-regen", default=8, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--regen-temperature", default=1.0, show_default=True)
@click.option("--continue-temperature", default=0.0, show_default=True)
@click.option("--max-steps", default=40, show_default=True)
@click.option("--prompt-dir", type=click.Path(exists=True, file_okay=False), default=None)
def sweep(accuracies, backend_spec, dataset, mapping, outdir, seed, max_regen, batch_size,
          regen_temperature, continue_temperature, max_steps, prompt_dir):
    """Backtracking with simulated locators across accuracy levels."""
    traces = load_dataset(dataset, mapping)
    backend = backend_from_spec(backend_spec)
    levels = _parse_accuracies(accuracies)
    config = _backtrack_config(
        max_regen, batch_size, regen_temperature, continue_temperature, max_steps
    )
    results = accuracy_sweep(
        traces, backend, levels, seed, config, prompt_dir=prompt_dir
    )
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    table = sweep_table(results)
    (outdir / "sweep.csv").write_text(table)
    _write_manifest(
        outdir,
        RunManifest(
            command="sweep",
            flags={"accuracies": accuracies, "max_regen": max_regen},
            backend_spec=backend_spec,
            locator_spec=f"simulated:<level>:{seed}",
            seeds={"seed": seed},
            inputs=[str(dataset)],
            outputs=[str(outdir / "sweep.csv")],
        ),
    )
    click.echo(table, nl=False)


@main.command()
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mapping", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--method-name", default=None, help="method label for the report rows")
def score(pred, gold, mapping, report_path, method_name):
    """Score predictions against gold labels: accuracy splits and proxy F1."""
    from .model import MistakeLocation, NO_MISTAKE

    golds = load_dataset(gold, mapping)
    predictions: dict[str, MistakeLocation | None] = {}
    for line in Path(pred).read_text().splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        if record.get("failed"):
            predictions[record["id"]] = None
        else:
            idx = record.get("predicted_index")
            predictions[record["id"]] = NO_MISTAKE if idx is None else MistakeLocation.at_step(idx)
    method = method_name or Path(pred).stem
    reports = []
    for task in TaskKind:
        group = [t for t in golds if t.task == task and t.mistake is not None]
        if not group:
            continue
        missing = [t.id for t in group if t.id not in predictions]
        if missing:
            raise _fail(f"predictions missing for {len(missing)} traces (first: {missing[0]})")
        preds = [predictions[t.id] for t in group]
        accuracy = mistake_accuracy(preds, [t.mistake for t in group])
        f1 = correctness_proxy_f1(
            preds, [is_correct_ans(t.answer, t.target) for t in group]
        )
        reports.append(MetricReport(task.value, method, accuracy, f1))
    if not reports:
        raise _fail("gold dataset has no annotated traces to score")
    table = build_table(reports)
    report_path = Path(report_path)
    report_path.write_text(table)
    _write_manifest(
        report_path.parent,
        RunManifest(
            command="score",
            inputs=[str(pred), str(gold)],
            outputs=[str(report_path)],
        ),
    )
    click.echo(table, nl=False)


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mapping", type=click.Path(exists=True, dir_okay=False), default=None)
def alpha(log_path, dataset, mapping):
    """Krippendorff's alpha over an annotation log."""
    traces = load_dataset(dataset, mapping)
    store = AnnotationStore(traces, log_path)
    try:
        value = store.alpha()
    except MistakeLabError as exc:
        raise _fail(str(exc))
    click.echo(f"alpha: {value:.6f}")


@main.command()
@click.option("--dataset", "datasets", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--mapping", type=click.Path(exists=True, dir_okay=False), default=None)
def stats(datasets, mapping):
    """Dataset composition: correctness counts and average steps per task."""
    traces = []
    for path in datasets:
        traces.extend(load_dataset(path, mapping))
    report = dataset_stats(traces)
    click.echo(
        "task,total,correct_ans,incorrect_ans,correct_mis,incorrect_mis,unannotated,avg_steps"
    )
    for row in report.per_task:
        click.echo(
            f"{row.task.value},{row.total},{row.correct_ans},{row.incorrect_ans},"
            f"{row.correct_mis},{row.incorrect_mis},{row.unannotated},{row.avg_steps:.1f}"
        )
    click.echo(f"total,{report.total},,,,,,")


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mapping", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--log", "log_path", default="annotations.jsonl", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
def serve(dataset, mapping, log_path, ui_dir, host, port):
    """Serve the annotation API (and UI bundle, if built)."""
    import uvicorn

    from .service import create_app

    traces = load_dataset(dataset, mapping)
    store = AnnotationStore(traces, log_path)
    app = create_app(store, ui_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
