"""Execute an experiment config: one trace CSV per (algorithm, seed)."""

from __future__ import annotations

import functools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..data import KNOWN_DATASETS, load_dataset, make_onehot_surrogate, normalize_rows, read_libsvm, subsample
from ..estimators import BatchPlan, corollary_parameters
from ..objectives import PRESETS, LipschitzEstimates, estimate_lipschitz, make_preset, make_synthetic
from ..optimizers import LiteSvrcConfig, RunTrace, ScrSchedule, SubsolverConfig, run_cr, run_lite_svrc, run_scr, run_svrc_zhou
from .config import AlgorithmSpec, ExperimentConfig, config_hash
from .ledger import ResultsLedger

CSV_COLUMNS = ("iter", "s", "t", "f_value", "f_gap", "cum_hess_samples", "cum_grad_samples", "step_norm", "wall_ns", "mu")


def _load_data(cfg: ExperimentConfig):
    spec = cfg.dataset
    _, ds_name, _ = PRESETS[cfg.objective.preset]
    n_features, threshold = KNOWN_DATASETS.get(ds_name, (None, None))
    if spec.binarize_threshold is not None:
        threshold = spec.binarize_threshold
    if spec.surrogate_n is not None:
        ds = make_onehot_surrogate(spec.surrogate_n, seed=spec.seed)
    elif spec.path is not None:
        ds = read_libsvm(spec.path, n_features=n_features, binarize_threshold=threshold)
    else:
        ds = load_dataset(spec.name, n_features=n_features, binarize_threshold=threshold)
    if spec.subsample is not None:
        ds = subsample(ds, spec.subsample, spec.seed)
    if spec.normalize:
        ds = normalize_rows(ds)
    meta = {
        "dataset": spec.key(),
        "normalized": spec.normalize,
        "binarize_threshold": threshold,
        "n_samples": ds.n_samples,
        "n_features": ds.n_features,
    }
    return ds, meta


@functools.lru_cache(maxsize=4)
def _problem_cached(cfg_json: str):
    return build_problem(ExperimentConfig.model_validate_json(cfg_json))


def build_problem(cfg: ExperimentConfig):
    """Objective, Lipschitz constants used for defaults, and metadata."""
    if cfg.objective.synthetic is not None:
        s = cfg.objective.synthetic
        obj, lip = make_synthetic(s.kind, s.n, s.d, seed=s.seed, **s.params)
        meta = {"synthetic": s.model_dump()}
        source = "exact"
    else:
        ds, meta = _load_data(cfg)
        obj = make_preset(cfg.objective.preset, ds)
        lip = None
        source = "estimated"
    if cfg.lipschitz is not None:
        lip = LipschitzEstimates(cfg.lipschitz.L1, cfg.lipschitz.L2, exact=False)
        source = "config"
    elif lip is None or lip.L2 == 0:
        est = estimate_lipschitz(obj, cfg.lipschitz_probes, cfg.lipschitz_radius, seed=0)
        lip = LipschitzEstimates(est.L1, est.L2 if est.L2 > 0 else 1.0, est.radius, exact=False)
        source = "estimated"
    meta["lipschitz"] = {"L1": lip.L1, "L2": lip.L2, "source": source}
    return obj, lip, meta


def resolve_algorithm(cfg: ExperimentConfig, alg: AlgorithmSpec, n: int, d: int, lip: LipschitzEstimates) -> dict:
    """Fill unset algorithm parameters from the defaults."""
    theory = cfg.mode == "theory"
    cp = corollary_parameters(
        n, max(d, 2), lip, mode=cfg.mode, C_m=None if theory else cfg.M_multiple
    )
    M = alg.M if alg.M is not None else (cp.M if theory else cfg.M_multiple * lip.L2)
    out = {"key": alg.key, "M": M, "mode": cfg.mode}
    budget = None if cfg.hess_budget_per_n is None else int(math.floor(cfg.hess_budget_per_n * n))
    out["hess_budget"] = budget
    if alg.key in ("cr", "scr"):
        out["iters"] = alg.iters if alg.iters is not None else (budget // n if alg.key == "cr" else 100 * max(1, budget // n))
        if alg.key == "scr":
            out["schedule"] = {"grad_scale": alg.grad_scale, "hess_scale": alg.hess_scale, "floor_frac": alg.floor_frac}
    else:
        T = alg.T if alg.T is not None else cp.T
        D_h = alg.D_h if alg.D_h is not None else cp.D_h
        D_g = alg.D_g if alg.D_g is not None else cp.D_g
        if alg.b_max is not None:
            b_max = alg.b_max
        elif theory:
            b_max = 2**62
        else:
            # svrc charges its gradient batch to the Hessian counter
            b_max = n if alg.key == "svrc" else 100 * n
        if alg.S is not None:
            S = alg.S
        elif alg.key == "lite_svrc":
            S = max(1, budget // (n + (T - 1) * D_h))
        else:
            S = max(1, budget // n)
        out.update(S=S, T=T, D_h=int(D_h), D_g=float(D_g), b_max=int(b_max))
    return out


def _run_one(cfg_json: str, alg_index: int, seed: int):
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    obj, lip, meta = _problem_cached(cfg_json)
    alg = cfg.algorithms[alg_index]
    params = resolve_algorithm(cfg, alg, obj.n, obj.d, lip)
    sub = SubsolverConfig(cfg.subsolver.kind, cfg.subsolver.tol, min(cfg.subsolver.max_dim, obj.d))
    x0 = np.full(obj.d, cfg.x0_scale)
    key = alg.key
    if key == "cr":
        trace = run_cr(obj, params["M"], params["iters"], sub, x0, cfg.eval_mu_every, hess_budget=params["hess_budget"])
    elif key == "scr":
        trace = run_scr(
            obj, params["M"], params["iters"], ScrSchedule(**params["schedule"]), x0, seed, sub,
            cfg.eval_mu_every, hess_budget=params["hess_budget"],
        )
    else:
        plan = BatchPlan(params["D_g"], params["D_h"], 1, params["b_max"])
        lcfg = LiteSvrcConfig(
            params["S"], params["T"], params["M"], plan, x0, sub, seed, cfg.eval_mu_every, params["hess_budget"]
        )
        trace = (run_lite_svrc if key == "lite_svrc" else run_svrc_zhou)(obj, lcfg)
    params["krylov_max_dim"] = sub.max_dim
    params["subsolver"] = asdict(sub)
    return alg_index, seed, params, trace


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_trace_csv(path, trace: RunTrace, f_ref: float) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for r in trace.records:
        row = (r.iter, r.s, r.t, r.f_value, r.f_value - f_ref, r.cum_hess_samples, r.cum_grad_samples, r.step_norm, r.wall_ns, r.mu)
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs: int | None = None) -> dict:
    """Run every (algorithm, seed) pair and write traces plus a summary."""
    out = Path(out_dir or cfg.out_dir or Path("runs") / cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    cfg_json = cfg.model_dump_json()
    chash = config_hash(cfg)
    obj, lip, meta = _problem_cached(cfg_json)
    okey = cfg.objective_key()
    tasks = [(cfg_json, i, seed) for i in range(len(cfg.algorithms)) for seed in cfg.seeds]
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(tasks) == 1:
        results = [_run_one(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_run_one, *zip(*tasks)))
    results.sort(key=lambda r: (r[0], r[1]))

    ledger = ResultsLedger(cfg.ledger or out / "ledger.json")
    names = {}
    for alg_index, seed, params, trace in results:
        name = f"{cfg.algorithms[alg_index].key}_a{alg_index}_seed{seed}"
        names[(alg_index, seed)] = name
        best_here = min([trace.f_initial] + [r.f_value for r in trace.records])
        ledger.append(okey, f"{chash[:16]}:{name}", best_here, chash, str(out / f"{name}.csv"))
    f_ref = ledger.best(okey)

    runs = []
    for alg_index, seed, params, trace in results:
        name = names[(alg_index, seed)]
        csv_path = out / f"{name}.csv"
        write_trace_csv(csv_path, trace, f_ref)
        last = trace.records[-1] if trace.records else None
        side = {
            "algorithm": trace.algorithm,
            "seed": seed,
            "objective_key": okey,
            "config_hash": chash,
            "n": obj.n,
            "d": obj.d,
            "f_initial": trace.f_initial,
            "f_ref": f_ref,
            "params": params,
            "objective_meta": meta,
            "error": trace.error,
        }
        (out / f"{name}.meta.json").write_text(json.dumps(side, indent=1, sort_keys=True, default=str))
        runs.append(
            {
                "name": name,
                "csv": csv_path.name,
                "algorithm": trace.algorithm,
                "seed": seed,
                "steps": len(trace.records),
                "final_f_value": last.f_value if last else trace.f_initial,
                "final_f_gap": (last.f_value if last else trace.f_initial) - f_ref,
                "cum_hess_samples": last.cum_hess_samples if last else 0,
                "error": trace.error,
            }
        )
    summary = {
        "name": cfg.name,
        "config_hash": chash,
        "objective_key": okey,
        "mode": cfg.mode,
        "n": obj.n,
        "d": obj.d,
        "lipschitz": meta["lipschitz"],
        "objective_meta": meta,
        "f_ref": f_ref,
        "runs": runs,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True, default=str))
    return summary
