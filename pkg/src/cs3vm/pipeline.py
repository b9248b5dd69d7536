"""prepare -> solve -> evaluate -> report, plus the brute-force oracle check."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from .bb import BbOptions, BbStatus, solve_miqp
from .config import RunConfig
from .dataset import (Dataset, Instance, Sample, draw_biased_sample, draw_srs_sample, load_csv,
                      load_dataset_json, preprocess, rescale, save_json)
from .evaluation import (METHODS, BenchmarkRecord, classify, confusion, deltas_vs_svm, ecdf, gap,
                         metrics, ratios_vs_true, true_hyperplane, truth_vector, write_boxplot_csv, write_ecdf_csv)
from .models import FeasiblePoint, Hyperplane, big_m_initial, build_cs3vm, lift_svm_solution, solve_svm
from .oracle import MAX_FREE, brute_force_sides
from .rcm import ircm, rcm
from .wircm import wircm

MANIFEST_SUFFIX = ".manifest.json"


class PipelineError(RuntimeError):
    pass


# ----------------------------------------------------------------------------- prepare

def prepare(paths: list[str | Path], cfg: RunConfig, out_dir: str | Path) -> list[Path]:
    """Preprocess every CSV and draw ``cfg.samples`` samples; one manifest per input."""
    manifests = []
    for path in paths:
        ds = rescale(preprocess(load_csv(path, cfg.label_column), cfg.positive_label))
        samples = [_draw(ds, cfg, cfg.seed + s) for s in range(cfg.samples)]
        manifests.append(write_manifest(ds, samples, out_dir))
    return manifests


def _draw(ds: Dataset, cfg: RunConfig, seed: int) -> Sample:
    if cfg.sampling == "biased":
        return draw_biased_sample(ds, cfg.fraction, cfg.p_pos, seed)
    return draw_srs_sample(ds, cfg.fraction, seed)


def write_manifest(ds: Dataset, samples: list[Sample], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds_file = out / f"{ds.name}.dataset.json"
    save_json(ds, ds_file)
    target = out / f"{ds.name}{MANIFEST_SUFFIX}"
    manifest = {"dataset": ds_file.name, "name": ds.name, "samples": [s.to_dict() for s in samples]}
    target.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return target


def load_manifest(path: str | Path) -> tuple[Dataset, list[Sample]]:
    path = Path(path)
    if not path.is_file():
        raise PipelineError(f"no such manifest: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    ds = load_dataset_json(path.parent / data["dataset"])
    samples = [Sample.from_dict(s) for s in data["samples"]]
    for s in samples:
        s.validate(ds)
    return ds, samples


def instance_id(ds: Dataset, sample: Sample) -> str:
    return f"{ds.name}:{sample.kind}:{sample.seed}"


# ----------------------------------------------------------------------------- solve

def _point_payload(point: FeasiblePoint) -> dict:
    return {"omega": point.hyperplane.omega.tolist(), "b": point.hyperplane.b, "z": point.z.tolist()}


def run_method(inst: Instance, method: str, cfg: RunConfig, seed: int) -> dict[str, Any]:
    """Solve one cell; returns objective, status and everything classification needs."""
    pen = cfg.penalties
    tau = inst.tau
    if method == "svm":
        res = solve_svm(inst, pen.C1)
        lifted = lift_svm_solution(res.hyperplane, inst, pen, tau)
        return {"objective": res.objective, "status": res.status.value, "omega": res.hyperplane.omega.tolist(),
                "b": res.hyperplane.b, "extra": {"lifted_objective": lifted.objective}}
    if method == "cs3vm":
        M = big_m_initial(inst, pen.C1, pen.C2, tau)
        prob = build_cs3vm(inst, pen, tau, M)
        sol = solve_miqp(prob, BbOptions(time_limit=cfg.time_limit))
        extra = {"big_m": M, "nodes": sol.nodes_explored, "best_bound": sol.best_bound}
        if sol.incumbent is None:
            # nothing found in time: the SVM point is the best available
            point = lift_svm_solution(solve_svm(inst, pen.C1).hyperplane, inst, pen, tau)
            extra["fallback"] = "svm"
        else:
            v = sol.incumbent
            point = FeasiblePoint.from_vector(v, prob.layout, pen)
        return {"objective": point.objective, "status": sol.status.value, **_point_payload(point), "extra": extra}
    if method in ("rcm", "ircm"):
        rc = cfg.rcm_config(inst.m, seed)
        res = (rcm if method == "rcm" else ircm)(inst, rc)
        out = {"objective": res.objective, "status": "TimeLimit" if res.hit_time_limit else "Feasible",
               **_point_payload(res.lifted), "cluster_z": res.point.z.tolist(), "owner": res.owner.tolist(),
               "extra": {"iterations": res.iterations, "solves": res.solves, "final_k": res.final_k,
                         "final_M": res.final_M, "k1": rc.k1}}
        out["trace"] = [row.as_dict() for row in res.trace]
        return out
    if method == "wircm":
        res = wircm(inst, cfg.wircm_config(inst.m, seed))
        return {"objective": res.objective, "status": res.status.value, **_point_payload(res.point),
                "extra": {"big_m": res.big_m, "B_max": res.B_max, "beta": res.beta,
                          "fixes": res.ledger.to_dict(), "f_bar_history": res.f_bar_history,
                          "ircm_objective": res.ircm_result.objective, "warm_start_used": res.warm_start_used}}
    raise PipelineError(f"unknown method {method!r}; choose from {list(METHODS)}")


def _cell(args) -> dict:
    ds_dict, sample_dict, method, cfg_dict = args
    from .config import config_from_dict
    ds, sample = Dataset.from_dict(ds_dict), Sample.from_dict(sample_dict)
    cfg = config_from_dict(cfg_dict)
    inst = Instance.from_sample(ds, sample)
    start = time.monotonic()
    out = run_method(inst, method, cfg, sample.seed)
    out["wall_time"] = time.monotonic() - start
    out["instance_id"] = instance_id(ds, sample)
    out["method"] = method
    return out


def solve(manifests: list[str | Path], methods: list[str], cfg: RunConfig) -> list[dict]:
    """Run every (sample, method) cell; output order does not depend on ``cfg.jobs``."""
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise PipelineError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
    cells = []
    for path in manifests:
        ds, samples = load_manifest(path)
        for s in samples:
            cfg.check_ranges(s.m)
            for method in methods:
                cells.append((ds.to_dict(), s.to_dict(), method, cfg.to_dict()))
    if cfg.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = [_cell(c) for c in cells]
    return results


def write_jsonl(rows: list[dict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise PipelineError(f"no such file: {path}")
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


# ----------------------------------------------------------------------------- evaluate

def _metric_sets(inst: Instance, pred: np.ndarray):
    truth = truth_vector(inst)
    n = inst.n
    return metrics(confusion(pred, truth)), metrics(confusion(pred[n:], truth[n:]))


def _predict(inst: Instance, sol: dict) -> np.ndarray:
    h = Hyperplane(np.asarray(sol["omega"], dtype=float), float(sol["b"]))
    method = sol["method"]
    if method in ("rcm", "ircm"):
        return classify(h, inst, method, cluster_z=sol["cluster_z"], owner=sol["owner"])
    return classify(h, inst, method, z=sol.get("z"))


def evaluate(manifests: list[str | Path], solutions: list[dict], C1: float = 1.0) -> list[BenchmarkRecord]:
    """Attach metrics, ratios to the true hyperplane, deltas to the SVM and gaps to a proven optimum."""
    instances = {}
    for path in manifests:
        ds, samples = load_manifest(path)
        for s in samples:
            instances[instance_id(ds, s)] = Instance.from_sample(ds, s)
    by_inst: dict[str, list[dict]] = {}
    for sol in solutions:
        if sol["instance_id"] not in instances:
            raise PipelineError(f"solution for unknown instance {sol['instance_id']!r}")
        by_inst.setdefault(sol["instance_id"], []).append(sol)
    records = []
    for iid in sorted(by_inst):
        inst = instances[iid]
        sols = by_inst[iid]
        h_true = true_hyperplane(inst, C1)
        true_all, _ = _metric_sets(inst, classify(h_true, inst, "svm"))
        svm_sol = next((s for s in sols if s["method"] == "svm"), None)
        svm_all = _metric_sets(inst, _predict(inst, svm_sol))[0] if svm_sol else None
        proven = [s["objective"] for s in sols if s["method"] in ("cs3vm", "wircm") and s["status"] == "Optimal"]
        optimum = min(proven) if proven else None
        for sol in sorted(sols, key=lambda s: METHODS.index(s["method"])):
            m_all, m_unl = _metric_sets(inst, _predict(inst, sol))
            cs3vm_objective = sol["method"] != "svm"
            g = gap(sol["objective"], optimum) if (optimum is not None and cs3vm_objective) else None
            extra = {k: v for k, v in sol.get("extra", {}).items()}
            records.append(BenchmarkRecord(iid, sol["method"], sol["wall_time"], sol["objective"], sol["status"],
                                           m_all, m_unl, ratios_vs_true(m_all, true_all),
                                           deltas_vs_svm(m_all, svm_all) if svm_all else None, g, extra))
    return records


# ----------------------------------------------------------------------------- report

def _median(values):
    vals = [v for v in values if v is not None]
    return float(np.median(vals)) if vals else None


def report(records: list[BenchmarkRecord], out_dir: str | Path, time_limit: float, points: int = 50) -> dict:
    if not records:
        raise PipelineError("no records to report on")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    methods = sorted({r.method for r in records}, key=METHODS.index)
    solved_status = {"Optimal", "Feasible"}
    times = {m: [r.wall_time if r.status in solved_status else None for r in records if r.method == m]
             for m in methods}
    finite = [t for ts in times.values() for t in ts if t is not None and t > 0]
    lo = max(min(finite, default=1e-3), 1e-6)
    grid = np.geomspace(lo, time_limit, points).tolist() if lo < time_limit else [time_limit]
    curves = {m: ecdf(ts, time_limit, grid) for m, ts in times.items()}
    write_ecdf_csv(curves, out / "ecdf.csv")
    rows = write_boxplot_csv(records, out / "boxplot.csv")
    summary = {}
    for m in methods:
        rs = [r for r in records if r.method == m]
        summary[m] = {
            "runs": len(rs),
            "solved": sum(r.status in solved_status for r in rs),
            "median_AC_hat": _median([r.ratios_true.AC if r.ratios_true else None for r in rs]),
            "median_PR_hat": _median([r.ratios_true.PR if r.ratios_true else None for r in rs]),
            "median_AC_bar": _median([r.deltas_svm[0] if r.deltas_svm else None for r in rs]),
            "median_gap": _median([r.gap for r in rs]),
        }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return {"ecdf": str(out / "ecdf.csv"), "boxplot": str(out / "boxplot.csv"), "boxplot_rows": rows,
            "summary": summary}


# ----------------------------------------------------------------------------- oracle

def oracle_check(manifests: list[str | Path], cfg: RunConfig, tol: float = 1e-6) -> list[dict]:
    """Compare the big-M branch-and-bound optimum with the side-enumeration oracle on small samples."""
    rows = []
    for path in manifests:
        ds, samples = load_manifest(path)
        for s in samples:
            inst = Instance.from_sample(ds, s)
            iid = instance_id(ds, s)
            if inst.m > MAX_FREE:
                rows.append({"instance_id": iid, "checked": False, "reason": f"m={inst.m} > {MAX_FREE}"})
                continue
            pen = cfg.penalties
            o = brute_force_sides(inst, pen, inst.tau)
            prob = build_cs3vm(inst, pen, inst.tau, big_m_initial(inst, pen.C1, pen.C2, inst.tau))
            sol = solve_miqp(prob, BbOptions(time_limit=cfg.time_limit))
            ok = sol.status is BbStatus.OPTIMAL and abs(sol.objective - o.objective) <= tol
            rows.append({"instance_id": iid, "checked": True, "oracle": o.objective, "miqp": sol.objective,
                         "status": sol.status.value, "agree": bool(ok)})
    return rows


__all__ = ["PipelineError", "evaluate", "instance_id", "load_manifest", "oracle_check", "prepare", "read_jsonl",
           "report", "run_method", "solve", "write_jsonl", "write_manifest"]
