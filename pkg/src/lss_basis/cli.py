"""``lss-basis`` command line.

Usage:
    lss-basis run --config configs/three_mode.json --out out/
    lss-basis simulate --config configs/three_mode.json --seed 7 --out sim/
    lss-basis validate --config configs/three_mode.json --corrected out/corrected_model.json

Every subcommand reads the same JSON config. Failures exit nonzero and print
``{"error": <code>, "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import pipeline
from .errors import LSSError
from .graph import is_connected, spanning_tree
from .model import SwitchedModel
from .pe import check_pe, count_transitions, design_pe_input
from .signals import simulate, write_signals

SUBCOMMANDS = ("run", "simulate", "cluster", "correct", "validate", "pe-design", "graph")


def _config(args) -> pipeline.ExperimentConfig:
    cfg = pipeline.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _emit(summary: dict) -> None:
    print(json.dumps(summary, indent=2))


def do_run(args, cfg, out: Path) -> int:
    t0 = time.perf_counter()
    result = pipeline.cmd_run(cfg, out)
    rep = result.report
    _emit({
        "passed": rep.passed,
        "relative_output_error": rep.output_errors["relative"],
        "tree": [list(e) for e in result.learned.transforms.tree],
        "pe_verdict": rep.pe["verdict"],
        "elapsed_s": round(time.perf_counter() - t0, 3),
        "out": str(out),
    })
    if not rep.passed:
        raise ValidationFailed(
            f"relative output error {rep.output_errors['relative']:.3g} exceeds "
            f"{cfg.validation.tolerance:.3g}"
        )
    return 0


def do_simulate(args, cfg, out: Path) -> int:
    data = pipeline.prepare(cfg)
    pipeline.write_learning(out, cfg, data)
    _emit({"N": data.omega.N, "segments": data.omega.phi.num_segments,
           "min_dwell": data.omega.phi.min_dwell, "out": str(out)})
    return 0


def do_cluster(args, cfg, out: Path) -> int:
    from .local import cluster_estimates, default_eps, synthesize_local

    data = pipeline.prepare(cfg)
    est = synthesize_local(data.model, data.omega.phi, cfg.seed_for("local"), cfg.transform_max_cond)
    eps = cfg.cluster_eps if cfg.cluster_eps is not None else default_eps(data.model)
    clusters = cluster_estimates(est, eps, sigma=data.model.sigma)
    out.mkdir(parents=True, exist_ok=True)
    est.save(out / "local_estimates.json")
    pipeline._dump(out / "clusters.json", clusters.to_dict())
    pipeline.write_feature_trace(out / "feature_trace.csv", est, clusters)
    _emit({"num_clusters": clusters.num_clusters,
           "sizes": {str(k): v for k, v in clusters.sizes().items()}, "out": str(out)})
    return 0


def do_correct(args, cfg, out: Path) -> int:
    data = pipeline.prepare(cfg)
    learned = pipeline.learn(cfg, data)
    pipeline.write_learned(out, learned)
    _emit({"tree": [list(e) for e in learned.transforms.tree],
           "pe_verdict": learned.pe.verdict, "out": str(out)})
    return 0


def do_validate(args, cfg, out: Path) -> int:
    model = pipeline.load_model(cfg)
    corrected_path = args.corrected or cfg.resolve(cfg.corrected_model_path)
    if corrected_path is not None:
        corrected = SwitchedModel.load(corrected_path)
    else:
        corrected = pipeline.learn(cfg, pipeline.prepare(cfg, model)).corrected
    val = pipeline.validate_outputs(cfg, model, corrected)
    out.mkdir(parents=True, exist_ok=True)
    write_signals(out / "validation_signals.csv", val.omega, val.y)
    pipeline.write_validation_trace(out / "validation_outputs.csv", val)
    summary = {
        "per_channel_max": val.errors.max(axis=0).tolist(),
        "max_abs_y": val.max_abs_y,
        "relative": val.relative_error,
        "tolerance": cfg.validation.tolerance,
        "passed": val.relative_error <= cfg.validation.tolerance,
    }
    pipeline._dump(out / "validation.json", summary)
    _emit(summary)
    if not summary["passed"]:
        raise ValidationFailed(f"relative output error {val.relative_error:.3g} too large")
    return 0


def do_pe_design(args, cfg, out: Path) -> int:
    from .local import cluster_estimates, default_eps, synthesize_local

    model = pipeline.load_model(cfg)
    omega = design_pe_input(model, cfg.design.dwell, cfg.design.input_kind,
                            cfg.seed_for("input"), cfg.input.params)
    y = simulate(model, omega, None).y
    est = synthesize_local(model, omega.phi, cfg.seed_for("local"), cfg.transform_max_cond)
    eps = cfg.cluster_eps if cfg.cluster_eps is not None else default_eps(model)
    reps = cluster_estimates(est, eps, sigma=model.sigma).representatives
    report = check_pe(reps, omega, y, cfg.svd_tol)
    out.mkdir(parents=True, exist_ok=True)
    write_signals(out / "designed_input.csv", omega, y)
    counts = count_transitions(omega.phi)
    body = report.to_dict()
    body["N"] = omega.N
    body["transition_counts"] = [{"pair": list(p), "count": c} for p, c in sorted(counts.items())]
    pipeline._dump(out / "pe_report.json", body)
    _emit({"N": omega.N, "verdict": report.verdict, "out": str(out)})
    return 0


def do_graph(args, cfg, out: Path) -> int:
    data = pipeline.prepare(cfg)
    learned = pipeline.learn(cfg, data)
    g = learned.graph
    out.mkdir(parents=True, exist_ok=True)
    tree = spanning_tree(g)
    (out / "graph.dot").write_text(g.to_dot(tree))
    audit = {
        "vertices": g.vertices,
        "edges": [list(k) for k in sorted(g.edges)],
        "connected": is_connected(g),
        "tree": [list(e) for e in tree],
        "anchored": {str(j): U.tolist() for j, U in learned.transforms.anchored.items()},
    }
    pipeline._dump(out / "tree.json", audit)
    _emit({"edges": audit["edges"], "tree": audit["tree"], "out": str(out)})
    return 0


class ValidationFailed(LSSError):
    code = "validation_failed"


HANDLERS = {
    "run": do_run,
    "simulate": do_simulate,
    "cluster": do_cluster,
    "correct": do_correct,
    "validate": do_validate,
    "pe-design": do_pe_design,
    "graph": do_graph,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lss-basis",
        description="Basis correction of locally identified linear switched system submodels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default="out", help="output directory")
        if name == "validate":
            p.add_argument("--corrected", default=None, help="corrected model JSON to validate")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return HANDLERS[args.command](args, cfg, Path(args.out))
    except LSSError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
