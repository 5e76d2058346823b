"""Config-driven pipelines with deterministic file outputs.

``flowlab run config.cfg`` reads an INI file with exactly two sections,
``[scenario]`` and ``[pipeline]``, validates every key against the tables
below (unknown keys are rejected), runs the pipeline, and writes
``report.json`` and ``series.csv`` (byte-identical across reruns of the
same config and seed) plus ``meta.json`` (versions, timings, seed).

Exit codes: 0 when the analysis verdict is positive, 2 when it is negative
(refuted, nothing found, non-hyperbolic, a failed check), 1 on errors.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .chain_graph import (
    build_chain_graph,
    chain_recurrent_cells,
    is_chain_transitive,
    save_cells_csv,
    save_edge_list,
)
from .chains import (
    equilibrium_segment_chain,
    generate_noisy,
    periodic_family_chain,
    verify_chain,
)
from .poincare import build_cocycle, classify_periodic, classify_singularity
from .scenarios import SCENARIO_PARAMS, builtin, scenario_names
from .shadowing import SearchBudget, refute_by_conservation, search_shadowing
from .splitting import (
    check_domination,
    check_quasi_hyperbolic,
    estimate_splitting,
    fit_hyperbolic,
)

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """A config file failed validation."""


_CHAIN_KEYS = {
    "chain": ("choice", ("noisy", "equilibrium_segment", "periodic_family")),
    "x0": ("floats",),
    "count": ("int", 1, 100000),
    "step": ("float", 1.0, 1000.0),
    "noise": ("float", 1e-12, 10.0),
    "noise_axes": ("ints",),
    "segment_epsilon": ("float", 1e-6, 100.0),
    "delta": ("float", 1e-12, 10.0),
    "p0": ("floats",),
    "v": ("floats",),
    "n_points": ("int", 2, 100000),
    "period_hint": ("float", 1e-3, 1e4),
}

PIPELINE_PARAMS = {
    "shadow-search": {
        **_CHAIN_KEYS,
        "epsilon": ("float", 1e-12, 100.0),
        "candidates": ("int", 1, 10_000_000),
        "refine_evals": ("int", 0, 10_000_000),
        "settle": ("float", 0.0, 1000.0),
        "seed_halfwidth": ("float", 1e-12, 100.0),
        "chain_samples": ("int", 3, 1_000_000),
        "orbit_samples": ("int", 3, 1_000_000),
    },
    "refute": {**_CHAIN_KEYS, "epsilon": ("float", 1e-12, 100.0)},
    "classify": {},
    "splitting": {
        "anchor": ("choice", ("cycle", "point")),
        "x0": ("floats",),
        "p": ("int", 1, 16),
        "dt": ("float", 1e-4, 1.0),
        "window": ("float", 0.1, 100.0),
        "total": ("float", 0.5, 10000.0),
        "l": ("float", 1e-3, 1000.0),
    },
    "quasi-hyperbolic": {
        "x0": ("floats",),
        "tau": ("float", 1e-3, 1e6),
        "eta": ("float", 1e-9, 100.0),
        "big_t": ("float", 1e-3, 1e4),
        "p": ("int", 1, 16),
        "dt": ("float", 1e-4, 1.0),
        "window": ("float", 0.1, 100.0),
    },
    "chain-graph": {
        "region": ("floats",),
        "hgrid": ("float", 1e-6, 100.0),
        "delta": ("float", 1e-12, 10.0),
        "t_max": ("float", 1.0, 1e4),
        "t_samples": ("int", 1, 10000),
    },
}

PIPELINE_SUMMARY = {
    "chain-graph": "cell-transition graph, strong components, recurrent cover",
    "classify": "spectra and hyperbolicity of the scenario's critical elements",
    "quasi-hyperbolic": "partitioned log-norm inequalities along one arc",
    "refute": "conserved-quantity lower bound against shadowing",
    "shadow-search": "search a seed box for a reparametrized shadowing orbit",
    "splitting": "dominated splitting check and hyperbolicity fit on an orbit",
}


def _parse_value(key, raw, spec):
    kind = spec[0]
    try:
        if kind == "float":
            value = float(raw)
            if not spec[1] <= value <= spec[2]:
                raise ConfigError(
                    f"{key} = {raw} outside the allowed range [{spec[1]}, {spec[2]}]"
                )
            return value
        if kind == "int":
            value = int(raw)
            if not spec[1] <= value <= spec[2]:
                raise ConfigError(
                    f"{key} = {raw} outside the allowed range [{spec[1]}, {spec[2]}]"
                )
            return value
        if kind == "choice":
            if raw not in spec[1]:
                raise ConfigError(
                    f"{key} = {raw!r} is not one of: {', '.join(spec[1])}"
                )
            return raw
        if kind == "floats":
            return [float(tok) for tok in raw.replace(",", " ").split()]
        if kind == "ints":
            return [int(tok) for tok in raw.replace(",", " ").split()]
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"{key} = {raw!r} cannot be parsed as {kind}") from None
    raise ConfigError(f"internal: unknown parameter kind {kind}")


def load_config(path):
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    if not cp.read(path):
        raise ConfigError(f"cannot read config file {path}")
    sections = set(cp.sections())
    required = {"scenario", "pipeline"}
    if sections != required:
        missing = sorted(required - sections)
        extra = sorted(sections - required)
        parts = []
        if missing:
            parts.append(f"missing section(s): {', '.join(missing)}")
        if extra:
            parts.append(f"unknown section(s): {', '.join(extra)}")
        raise ConfigError("; ".join(parts))

    sc = dict(cp.items("scenario"))
    if "name" not in sc:
        raise ConfigError("[scenario] needs a 'name' key")
    sc_name = sc.pop("name")
    if sc_name not in SCENARIO_PARAMS:
        raise ConfigError(
            f"unknown scenario {sc_name!r}; available: {', '.join(scenario_names())}"
        )
    sc_params = {}
    for key, raw in sc.items():
        if key not in SCENARIO_PARAMS[sc_name]:
            allowed = ", ".join(sorted(SCENARIO_PARAMS[sc_name])) or "(none)"
            raise ConfigError(
                f"[scenario] unknown key {key!r} for {sc_name}; allowed: {allowed}"
            )
        sc_params[key] = _parse_value(key, raw, SCENARIO_PARAMS[sc_name][key])

    pl = dict(cp.items("pipeline"))
    if "name" not in pl:
        raise ConfigError("[pipeline] needs a 'name' key")
    pl_name = pl.pop("name")
    if pl_name not in PIPELINE_PARAMS:
        raise ConfigError(
            f"unknown pipeline {pl_name!r}; available: {', '.join(sorted(PIPELINE_PARAMS))}"
        )
    pl_params = {}
    for key, raw in pl.items():
        if key not in PIPELINE_PARAMS[pl_name]:
            allowed = ", ".join(sorted(PIPELINE_PARAMS[pl_name])) or "(none)"
            raise ConfigError(
                f"[pipeline] unknown key {key!r} for {pl_name}; allowed: {allowed}"
            )
        pl_params[key] = _parse_value(key, raw, PIPELINE_PARAMS[pl_name][key])
    return sc_name, sc_params, pl_name, pl_params


def _require(params, pipeline, *keys):
    for key in keys:
        if key not in params:
            raise ConfigError(f"pipeline {pipeline!r} requires the key {key!r}")


def _point(params, key, dim, default=None):
    if key not in params:
        if default is None:
            raise ConfigError(f"missing point parameter {key!r}")
        return np.asarray(default, dtype=float)
    value = np.asarray(params[key], dtype=float)
    if value.shape != (dim,):
        raise ConfigError(f"{key} must have {dim} components")
    return value


def _complex_pairs(values):
    return [[float(z.real), float(z.imag)] for z in values]


def _build_chain(scenario, params, pipeline, seed):
    spec = scenario.spec
    _require(params, pipeline, "chain")
    kind = params["chain"]
    if kind == "noisy":
        _require(params, pipeline, "x0", "count", "noise")
        subspace = None
        if "noise_axes" in params:
            axes = params["noise_axes"]
            if not axes or any(not 0 <= a < spec.dim for a in axes):
                raise ConfigError(f"noise_axes must be coordinate indices below {spec.dim}")
            subspace = np.eye(spec.dim)[:, axes]
        return generate_noisy(
            spec,
            _point(params, "x0", spec.dim),
            int(params["count"]),
            noise=params["noise"],
            step=params.get("step", 1.0),
            rng=seed,
            noise_subspace=subspace,
        )
    if kind == "equilibrium_segment":
        _require(params, pipeline, "delta")
        return equilibrium_segment_chain(
            spec, params.get("segment_epsilon", 0.4), params["delta"]
        )
    # periodic_family
    _require(params, pipeline, "v", "n_points")
    cycles = scenario.facts.cycles
    default_p = cycles[0].point if cycles else None
    default_period = cycles[0].period if cycles else None
    p0 = _point(params, "p0", spec.dim, default=default_p)
    period_hint = params.get("period_hint", default_period)
    if period_hint is None:
        raise ConfigError("periodic_family needs period_hint (no cycle on record)")
    return periodic_family_chain(
        spec,
        p0,
        _point(params, "v", spec.dim),
        int(params["n_points"]),
        period_hint=float(period_hint),
        delta=params.get("delta"),
    )


def _chain_series(po, check):
    rows = []
    bt = po.boundary_times
    for i, (label, gap) in enumerate(check.gaps):
        t = bt[min(i, len(bt) - 1)]
        rows.append(("chain_gap", i, float(t), float(gap)))
    return rows


def _run_shadow_search(scenario, params, seed, threads, outdir):
    spec = scenario.spec
    po = _build_chain(scenario, params, "shadow-search", seed)
    _require(params, "shadow-search", "epsilon")
    check = verify_chain(po)
    budget = SearchBudget(
        candidates=int(params.get("candidates", 1000)),
        refine_evals=int(params.get("refine_evals", 200)),
        chain_samples=params.get("chain_samples"),
        orbit_samples=params.get("orbit_samples"),
        settle=float(params.get("settle", 3.0)),
    )
    half = float(params.get("seed_halfwidth", 0.1))
    center = po.points[0]
    seed_region = np.column_stack([center - half, center + half])
    report = search_shadowing(
        spec, po, params["epsilon"], seed_region, budget=budget, threads=threads
    )
    result = {
        "chain": {
            "size": po.size,
            "delta": po.delta,
            "verified": bool(check.ok),
            "max_gap": check.max_gap,
        },
        "search": report.to_dict(),
    }
    rows = _chain_series(po, check)
    if report.reparam_knots_t is not None:
        for i, (kt, ku) in enumerate(zip(report.reparam_knots_t, report.reparam_knots_u)):
            rows.append(("reparam_knot", i, float(kt), float(ku)))
    return (0 if report.verdict == "shadowed" else 2), result, rows


def _run_refute(scenario, params, seed, threads, outdir):
    spec = scenario.spec
    po = _build_chain(scenario, params, "refute", seed)
    _require(params, "refute", "epsilon")
    check = verify_chain(po)
    cert = refute_by_conservation(spec, po, params["epsilon"])
    result = {
        "chain": {
            "size": po.size,
            "delta": po.delta,
            "verified": bool(check.ok),
            "max_gap": check.max_gap,
        },
        "refuted": cert is not None,
        "certificate": cert.to_dict() if cert is not None else None,
    }
    rows = _chain_series(po, check)
    bt = po.boundary_times
    for i in range(po.size):
        rows.append(
            ("conserved", i, float(bt[i]), float(spec.conserved.func(po.points[i])))
        )
    return (2 if cert is not None else 0), result, rows


def _run_classify(scenario, params, seed, threads, outdir):
    spec = scenario.spec
    reports = []
    for fact in scenario.facts.singularities:
        reports.append(classify_singularity(spec, np.asarray(fact.point, dtype=float)))
    for fact in scenario.facts.cycles:
        reports.append(
            classify_periodic(spec, np.asarray(fact.point, dtype=float), fact.period)
        )
    if not reports:
        raise ConfigError(f"scenario {spec.name} records no critical elements to classify")
    result = {"elements": []}
    rows = []
    all_hyperbolic = True
    for k, rep in enumerate(reports):
        all_hyperbolic = all_hyperbolic and rep.hyperbolic
        result["elements"].append(
            {
                "kind": rep.kind,
                "point": [float(c) for c in rep.point],
                "period": rep.period,
                "spectrum": _complex_pairs(rep.spectrum),
                "margins": list(rep.margins),
                "hyperbolic": rep.hyperbolic,
                "index": rep.index,
                "index_with_flow": rep.index_with_flow,
            }
        )
        for j, margin in enumerate(rep.margins):
            rows.append(("margin", k * 16 + j, 0.0, float(margin)))
    result["all_hyperbolic"] = bool(all_hyperbolic)
    return (0 if all_hyperbolic else 2), result, rows


def _splitting_anchor(scenario, params, pipeline):
    spec = scenario.spec
    anchor = params.get("anchor", "cycle" if scenario.facts.cycles else "point")
    if anchor == "cycle":
        if not scenario.facts.cycles:
            raise ConfigError(f"scenario {spec.name} records no cycle to anchor on")
        return np.asarray(scenario.facts.cycles[0].point, dtype=float)
    _require(params, pipeline, "x0")
    return _point(params, "x0", spec.dim)


def _run_splitting(scenario, params, seed, threads, outdir):
    spec = scenario.spec
    x0 = _splitting_anchor(scenario, params, "splitting")
    _require(params, "splitting", "l")
    p = int(params.get("p", 1))
    dt = float(params.get("dt", 0.02))
    window = float(params.get("window", 3.0))
    total = float(params.get("total", 4.0 * window))
    cocycle = build_cocycle(spec, x0, total + 2.0 * window, dt, t_start=-window)
    est = estimate_splitting(cocycle, p, window)
    dom = check_domination(est, params["l"])
    fit = fit_hyperbolic(est)
    result = {
        "anchor": [float(c) for c in x0],
        "stable_rank": p,
        "gap_ratio_min": est.gap_ratio_min,
        "invariance_residual": est.residual,
        "domination": {
            "l": dom.l,
            "ok": dom.ok,
            "worst_product": dom.worst_product,
            "worst_base_time": dom.worst_base_time,
            "worst_t": dom.worst_t,
            "n_bases": dom.n_bases,
        },
        "fit": {
            "ok": fit.ok,
            "lambda_stable": fit.lambda_stable,
            "c_stable": fit.c_stable,
            "lambda_unstable": fit.lambda_unstable,
            "c_unstable": fit.c_unstable,
            "t_range": list(fit.t_range),
            "reason": fit.reason,
        },
    }
    rows = [
        ("domination_product", j, float(t), float(v))
        for j, (t, v) in enumerate(dom.products_per_t)
    ]
    return (0 if (dom.ok and fit.ok) else 2), result, rows


def _run_quasi_hyperbolic(scenario, params, seed, threads, outdir):
    spec = scenario.spec
    _require(params, "quasi-hyperbolic", "x0", "tau", "eta", "big_t")
    x0 = _point(params, "x0", spec.dim)
    tau = float(params["tau"])
    p = int(params.get("p", 1))
    dt = float(params.get("dt", 0.02))
    window = float(params.get("window", 3.0))
    cocycle = build_cocycle(spec, x0, tau + 2.0 * window, dt, t_start=-window)
    est = estimate_splitting(cocycle, p, window)
    cert = check_quasi_hyperbolic(spec, x0, tau, est, params["eta"], params["big_t"])
    result = {
        "arc_start": [float(c) for c in x0],
        "tau": cert.tau,
        "eta": cert.eta,
        "big_t": cert.big_t,
        "ok": cert.ok,
        "worst_slack": cert.worst_slack,
        "boundaries": list(cert.boundaries),
    }
    rows = []
    for j, v in enumerate(cert.slack_leading):
        rows.append(("slack_leading", j, float(cert.boundaries[j + 1]), float(v)))
    for j, v in enumerate(cert.slack_trailing):
        rows.append(("slack_trailing", j, float(cert.boundaries[j]), float(v)))
    for j, v in enumerate(cert.slack_stepwise):
        rows.append(("slack_stepwise", j, float(cert.boundaries[j]), float(v)))
    return (0 if cert.ok else 2), result, rows


def _run_chain_graph(scenario, params, seed, threads, outdir):
    spec = scenario.spec
    _require(params, "chain-graph", "region", "hgrid", "delta", "t_max")
    region = np.asarray(params["region"], dtype=float)
    if region.size != 2 * spec.dim:
        raise ConfigError(f"region needs {2 * spec.dim} numbers (lo hi per axis)")
    region = region.reshape(spec.dim, 2)
    graph = build_chain_graph(
        spec,
        region,
        params["hgrid"],
        params["delta"],
        params["t_max"],
        t_samples=int(params.get("t_samples", 6)),
    )
    recurrent = chain_recurrent_cells(graph)
    labels = graph.scc_labels()
    _, sizes = np.unique(labels, return_counts=True)
    transitive = is_chain_transitive(graph, recurrent) if len(recurrent) else False
    save_edge_list(graph, Path(outdir) / "graph.edges")
    save_cells_csv(graph, Path(outdir) / "cells.csv")
    result = {
        "cells": graph.n_cells,
        "shape": list(graph.shape),
        "edges": graph.edge_count(),
        "reach": graph.reach,
        "recurrent_cells": int(len(recurrent)),
        "components": int(sizes.size),
        "nontrivial_components": int(np.sum(sizes >= 2)),
        "recurrent_transitive": bool(transitive),
        "outputs": ["graph.edges", "cells.csv"],
    }
    big = np.sort(sizes[sizes >= 2])[::-1]
    rows = [("component_size", int(j), 0.0, float(s)) for j, s in enumerate(big)]
    return (0 if len(recurrent) else 2), result, rows


_PIPELINES = {
    "shadow-search": _run_shadow_search,
    "refute": _run_refute,
    "classify": _run_classify,
    "splitting": _run_splitting,
    "quasi-hyperbolic": _run_quasi_hyperbolic,
    "chain-graph": _run_chain_graph,
}


def _write_outputs(outdir, sc_name, sc_params, pl_name, code, result, rows, meta):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report = {
        "schema": "flowlab.report/1",
        "scenario": {"name": sc_name, "params": sc_params},
        "pipeline": pl_name,
        "exit_code": code,
        "result": result,
    }
    (outdir / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n"
    )
    with open(outdir / "series.csv", "w") as fh:
        fh.write("series,index,t,value\n")
        for series, index, t, value in rows:
            fh.write(f"{series},{index},{t!r},{value!r}\n")
    (outdir / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def run_config(config_path, outdir, seed=0, threads=1) -> int:
    sc_name, sc_params, pl_name, pl_params = load_config(config_path)
    scenario = builtin(sc_name, **sc_params)
    # pipelines may drop artifacts of their own into outdir
    Path(outdir).mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    code, result, rows = _PIPELINES[pl_name](scenario, pl_params, seed, threads, outdir)
    elapsed = time.perf_counter() - t0
    import scipy

    meta = {
        "flowlab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
        "seed": seed,
        "threads": threads,
        "config": {
            "scenario": {"name": sc_name, **sc_params},
            "pipeline": {"name": pl_name, **pl_params},
        },
        "elapsed_seconds": elapsed,
    }
    _write_outputs(outdir, sc_name, sc_params, pl_name, code, result, rows, meta)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flowlab",
        description="Pseudo-orbit, shadowing, and hyperbolicity pipelines for built-in flows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a pipeline described by an INI config")
    run_p.add_argument("config", help="path to the config file")
    run_p.add_argument("--out", default="flowlab-out", help="output directory")
    run_p.add_argument("--seed", type=int, default=0, help="seed for stochastic chains")
    run_p.add_argument("--threads", type=int, default=1, help="worker threads for searches")
    list_p = sub.add_parser("list", help="list available scenarios or pipelines")
    list_p.add_argument("what", choices=["scenarios", "pipelines"])

    args = parser.parse_args(argv)
    if args.command == "list":
        if args.what == "scenarios":
            for name in scenario_names():
                keys = ", ".join(sorted(SCENARIO_PARAMS[name])) or "no parameters"
                print(f"{name}: {keys}")
        else:
            for name in sorted(PIPELINE_PARAMS):
                print(f"{name}: {PIPELINE_SUMMARY[name]}")
        return 0

    try:
        return run_config(args.config, args.out, seed=args.seed, threads=args.threads)
    except (ConfigError, ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
