"""Command line entry point: ``cs3vm prepare | solve | evaluate | report | oracle``.

Every command prints a JSON summary on success.  On failure it prints
``{"error": <kind>, "message": <text>}`` on stderr and exits with status 1.
"""

from __future__ import annotations

import functools
import json
import sys
import warnings
from pathlib import Path

import click

from . import pipeline
from .config import RangeWarning, load_config
from .evaluation import read_records_jsonl, write_records_jsonl


def _emit(payload) -> None:
    click.echo(json.dumps(payload, sort_keys=True, indent=1))


def _json_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", RangeWarning)
                result = fn(*args, **kwargs)
            for w in caught:
                click.echo(json.dumps({"warning": str(w.message)}), err=True)
            return result
        except (click.exceptions.Exit, click.ClickException):
            raise
        except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error
            click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
            sys.exit(1)
    return wrapper


def _config(path, **overrides):
    return load_config(path, overrides)


config_option = click.option("--config", "config_path", type=click.Path(), default=None,
                             help="YAML run configuration; flags override its values.")
out_option = click.option("--out-dir", type=click.Path(file_okay=False), default="out", show_default=True)


@click.group()
def main():
    """Cardinality-constrained semi-supervised SVMs."""


@main.command()
@click.argument("paths", nargs=-1, required=True)
@config_option
@click.option("--seed", type=int, default=None, help="Base seed; sample s uses seed + s.")
@click.option("--label-column", default=None, help="Name of the class column (default: target).")
@out_option
@_json_errors
def prepare(paths, config_path, seed, label_column, out_dir):
    """Preprocess CSV files and draw labeled samples."""
    cfg = _config(config_path, seed=seed, label_column=label_column)
    manifests = pipeline.prepare(list(paths), cfg, out_dir)
    _emit({"manifests": [str(p) for p in manifests]})


@main.command()
@click.argument("manifests", nargs=-1, required=True)
@config_option
@click.option("--method", "methods", multiple=True, help="svm, cs3vm, rcm, ircm or wircm; repeatable.")
@click.option("--jobs", type=int, default=None)
@click.option("--time-limit", type=float, default=None, help="Seconds per solve.")
@click.option("--trace", is_flag=True, help="Write per-iteration traces of rcm/ircm as JSONL.")
@out_option
@_json_errors
def solve(manifests, config_path, methods, jobs, time_limit, trace, out_dir):
    """Solve every sample of the manifests with the chosen methods."""
    cfg = _config(config_path, jobs=jobs, time_limit=time_limit, methods=list(methods) or None)
    rows = pipeline.solve(list(manifests), list(cfg.methods), cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = []
    for row in rows:
        steps = row.pop("trace", None)
        if trace and steps is not None:
            name = row["instance_id"].replace(":", "_") + f"-{row['method']}.trace.jsonl"
            pipeline.write_jsonl(steps, out / name)
            traces.append(str(out / name))
    pipeline.write_jsonl(rows, out / "solutions.jsonl")
    _emit({"solutions": str(out / "solutions.jsonl"), "cells": len(rows), "traces": traces})


@main.command()
@click.argument("manifests", nargs=-1, required=True)
@click.option("--solutions", type=click.Path(), required=True)
@config_option
@out_option
@_json_errors
def evaluate(manifests, solutions, config_path, out_dir):
    """Compute metrics, ratios and gaps for solved cells."""
    cfg = _config(config_path)
    records = pipeline.evaluate(list(manifests), pipeline.read_jsonl(solutions), cfg.C1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records_jsonl(records, out / "records.jsonl")
    _emit({"records": str(out / "records.jsonl"), "count": len(records)})


@main.command()
@click.argument("records", type=click.Path())
@config_option
@click.option("--time-limit", type=float, default=None, help="Censoring limit for the ECDF.")
@out_option
@_json_errors
def report(records, config_path, time_limit, out_dir):
    """Write ECDF curves, boxplot data and a summary table."""
    cfg = _config(config_path, time_limit=time_limit)
    path = Path(records)
    if not path.is_file():
        raise pipeline.PipelineError(f"no such file: {path}")
    _emit(pipeline.report(read_records_jsonl(path), out_dir, cfg.time_limit))


@main.command()
@click.argument("manifests", nargs=-1, required=True)
@config_option
@click.option("--time-limit", type=float, default=None)
@out_option
@_json_errors
def oracle(manifests, config_path, time_limit, out_dir):
    """Check branch-and-bound against exhaustive side enumeration on small samples."""
    cfg = _config(config_path, time_limit=time_limit)
    rows = pipeline.oracle_check(list(manifests), cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "oracle.json").write_text(json.dumps(rows, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    disagree = [r["instance_id"] for r in rows if r.get("checked") and not r["agree"]]
    _emit({"checked": sum(bool(r.get("checked")) for r in rows), "disagreements": disagree})
    if disagree:
        raise pipeline.PipelineError(f"oracle disagreement on {disagree}")


if __name__ == "__main__":
    main()
