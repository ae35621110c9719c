"""End-to-end basis correction experiment: configuration, stages and reporting.

A run has three stages:

1. ``prepare``: load the true model, build the learning hybrid input and
   simulate it.
2. ``learn``: synthesize per-segment local estimates, cluster them, solve the
   pair transforms, anchor them to mode 1 over a spanning tree and correct
   the representatives.
3. ``validate``: compare Markov parameters on the learning switching and
   outputs on a fresh hybrid input that may violate the dwell-time bound.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DwellTimeError
from .graph import UpsilonGraph, build_graph, chain_factorize, spanning_tree
from .local import ClusterResult, LocalEstimateSet, cluster_estimates, default_eps, synthesize_local
from .model import (
    DEFAULT_D1,
    HybridInput,
    SwitchedModel,
    SwitchingSequence,
    example_model,
    markov_parameter,
)
from .pe import PEReport, check_pe, design_pe_input
from .signals import Trajectory, generate_input, generate_switching, read_signals, simulate, write_signals
from .transforms import (
    TransformSet,
    TransitionData,
    assemble_transitions,
    correct_basis,
    estimate_initial_state,
    solve_all,
)

logger = logging.getLogger(__name__)

SEED_NAMES = (
    "switching",
    "input",
    "x0",
    "local",
    "validation_switching",
    "validation_input",
    "validation_x0",
)


def derive_seed(master: int, name: str) -> int:
    index = SEED_NAMES.index(name)
    return int(np.random.SeedSequence([int(master), index]).generate_state(1)[0])


@dataclass
class SwitchingSpec:
    N: int = 2000
    min_dwell: int = 10
    max_dwell: int | None = 60


@dataclass
class InputSpec:
    kind: str = "harmonics"
    params: dict = field(default_factory=dict)


@dataclass
class DesignSpec:
    """When ``enabled``, the learning input is the sweep construction instead of random switching."""

    enabled: bool = False
    dwell: int | None = None
    input_kind: str = "white"


@dataclass
class ValidationSpec:
    N: int = 1000
    min_dwell: int = 1
    max_dwell: int | None = 8
    input: InputSpec = field(default_factory=InputSpec)
    tolerance: float = 1e-9


@dataclass
class ExperimentConfig:
    """All knobs of one experiment; every random draw comes from a named seed."""

    model_path: str | None = None
    d1: list | None = None
    seed: int = 0
    seeds: dict = field(default_factory=dict)
    switching: SwitchingSpec = field(default_factory=SwitchingSpec)
    input: InputSpec = field(default_factory=InputSpec)
    design: DesignSpec = field(default_factory=DesignSpec)
    signals_path: str | None = None
    corrected_model_path: str | None = None
    cluster_eps: float | None = None
    svd_tol: float | None = None
    transform_max_cond: float = 1e3
    markov_window: int = 1000
    validation: ValidationSpec = field(default_factory=ValidationSpec)
    base_dir: str = "."

    def seed_for(self, name: str) -> int:
        if name in self.seeds:
            return int(self.seeds[name])
        return derive_seed(self.seed, name)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def check(self) -> None:
        for key in ("model_path", "signals_path", "corrected_model_path"):
            p = self.resolve(getattr(self, key))
            if p is not None and not p.exists():
                raise ConfigError(f"{key}: file {p} does not exist")
        for name, v in (("cluster_eps", self.cluster_eps), ("svd_tol", self.svd_tol),
                        ("validation.tolerance", self.validation.tolerance)):
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.switching.N < 1 or self.validation.N < 1:
            raise ConfigError("signal lengths must be positive")
        unknown = set(self.seeds) - set(SEED_NAMES)
        if unknown:
            raise ConfigError(f"unknown seed names {sorted(unknown)}; known: {list(SEED_NAMES)}")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        d = dict(d)
        try:
            val = dict(d.pop("validation", {}))
            val_input = InputSpec(**val.pop("input", {}))
            cfg = cls(
                switching=SwitchingSpec(**d.pop("switching", {})),
                input=InputSpec(**d.pop("input", {})),
                design=DesignSpec(**d.pop("design", {})),
                validation=ValidationSpec(input=val_input, **val),
                base_dir=str(base_dir),
                **d,
            )
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, path.parent)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["resolved_seeds"] = {name: self.seed_for(name) for name in SEED_NAMES}
        d["d1_effective"] = self.d1 if self.d1 is not None else [list(r) for r in DEFAULT_D1]
        return d


@dataclass
class LearningData:
    model: SwitchedModel
    omega: HybridInput
    y: np.ndarray
    x0: np.ndarray | None


@dataclass
class LearnResult:
    estimates: LocalEstimateSet
    clusters: ClusterResult
    transitions: TransitionData
    graph: UpsilonGraph
    transforms: TransformSet
    pe: PEReport
    eps: float

    @property
    def corrected(self) -> SwitchedModel:
        return self.transforms.corrected


def load_model(cfg: ExperimentConfig) -> SwitchedModel:
    path = cfg.resolve(cfg.model_path)
    if path is not None:
        return SwitchedModel.load(path)
    return example_model(cfg.d1 if cfg.d1 is not None else DEFAULT_D1)


def prepare(cfg: ExperimentConfig, model: SwitchedModel | None = None) -> LearningData:
    """Learning hybrid input and the true system's response to it."""
    model = model or load_model(cfg)
    signals = cfg.resolve(cfg.signals_path)
    if signals is not None:
        omega, y = read_signals(signals, sigma=model.sigma)
        if y is None:
            x0 = np.random.default_rng(cfg.seed_for("x0")).standard_normal(model.n)
            y = simulate(model, omega, x0).y
            return LearningData(model, omega, y, x0)
        return LearningData(model, omega, y, None)
    if cfg.design.enabled:
        omega = design_pe_input(
            model, cfg.design.dwell, cfg.design.input_kind, cfg.seed_for("input"), cfg.input.params
        )
    else:
        sw = cfg.switching
        if sw.min_dwell < model.n:
            raise DwellTimeError(
                f"switching.min_dwell = {sw.min_dwell} < n = {model.n}; "
                "learning data needs every dwell time >= n"
            )
        phi = generate_switching(model.sigma, sw.N, sw.min_dwell, cfg.seed_for("switching"), sw.max_dwell)
        u = generate_input(cfg.input.kind, model.m, sw.N, cfg.input.params, cfg.seed_for("input"))
        omega = HybridInput(phi, u)
    x0 = np.random.default_rng(cfg.seed_for("x0")).standard_normal(model.n)
    return LearningData(model, omega, simulate(model, omega, x0).y, x0)


def learn(cfg: ExperimentConfig, data: LearningData) -> LearnResult:
    """Cluster, solve the pair transforms, anchor them over a tree, correct."""
    model, omega, y = data.model, data.omega, data.y
    est = synthesize_local(model, omega.phi, cfg.seed_for("local"), cfg.transform_max_cond)
    eps = cfg.cluster_eps if cfg.cluster_eps is not None else default_eps(model)
    clusters = cluster_estimates(est, eps, sigma=model.sigma)
    reps = clusters.representatives
    if model.sigma == 1:
        td = TransitionData(model.n, omega.phi.min_dwell - 1, {})
        g = build_graph({}, 1)
        anchored = {1: np.eye(model.n)}
        ts = TransformSet({}, anchored, correct_basis(reps, anchored), ())
        return LearnResult(est, clusters, td, g, ts, PEReport({}, True, True, "PE"), eps)
    td = assemble_transitions(reps, omega.phi, omega.u, y, cfg.svd_tol)
    sols = solve_all(td, cfg.svd_tol)
    g = build_graph(sols, model.sigma)
    tree = spanning_tree(g)
    anchored = chain_factorize(g, tree)
    corrected = correct_basis(reps, anchored)
    pe = check_pe(reps, omega, y, cfg.svd_tol)
    return LearnResult(est, clusters, td, g, TransformSet(sols, anchored, corrected, tree), pe, eps)


def oracle_anchored_error(est: LocalEstimateSet, clusters: ClusterResult, anchored: dict) -> float:
    """Largest relative gap between ``Upsilon(j, 1)`` and ``T_1^-1 T_j`` from the hidden transforms."""
    if est.hidden_T is None:
        return float("nan")
    T = {v: est.hidden_T[i] for v, i in clusters.representative_index.items()}
    T1inv = np.linalg.inv(T[1])
    worst = 0.0
    for j, U in anchored.items():
        ref = T1inv @ T[j]
        worst = max(worst, float(np.linalg.norm(U - ref) / np.linalg.norm(ref)))
    return worst


def markov_mismatch(
    truth: SwitchedModel,
    other: SwitchedModel,
    phi: SwitchingSequence,
    lags,
    window: int,
) -> dict:
    """Compare ``h(k, k - lag)`` of two models on ``phi`` for ``k <= window``.

    Pairs with both times in one segment are reported separately from pairs
    that straddle a switch.
    """
    K = min(window, phi.N)
    rows, within, cross = [], [], []
    for lag in lags:
        for k in range(max(1, lag + 1), K + 1):
            l = k - lag
            h = markov_parameter(truth, phi, k, l)
            g = markov_parameter(other, phi, k, l)
            err = float(np.abs(h - g).max())
            same = phi.segment_of(k) == phi.segment_of(l)
            (within if same else cross).append(err)
            rows.append((k, lag, float(np.linalg.norm(h)), float(np.linalg.norm(g)), err, same))
    allerr = within + cross
    return {
        "max": max(allerr, default=0.0),
        "mean": float(np.mean(allerr)) if allerr else 0.0,
        "within_segment_max": max(within, default=0.0),
        "cross_switch_max": max(cross, default=0.0),
        "rows": rows,
    }


@dataclass
class ValidationOutcome:
    omega: HybridInput
    y: np.ndarray
    y_check: np.ndarray
    x0_check: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return np.abs(self.y - self.y_check)

    @property
    def max_abs_y(self) -> float:
        return float(np.abs(self.y).max())

    @property
    def relative_error(self) -> float:
        scale = self.max_abs_y
        return float(self.errors.max() / scale) if scale > 0 else float(self.errors.max())


def validation_input(cfg: ExperimentConfig, model: SwitchedModel) -> HybridInput:
    v = cfg.validation
    phi = generate_switching(
        model.sigma, v.N, v.min_dwell, cfg.seed_for("validation_switching"), v.max_dwell
    )
    u = generate_input(v.input.kind, model.m, v.N, v.input.params, cfg.seed_for("validation_input"))
    return HybridInput(phi, u)


def validate_outputs(
    cfg: ExperimentConfig,
    truth: SwitchedModel,
    corrected: SwitchedModel,
    omega: HybridInput | None = None,
) -> ValidationOutcome:
    """Simulate both models on a fresh input; the corrected model's initial
    state is estimated from the start of the true output record."""
    omega = omega or validation_input(cfg, truth)
    x0 = np.random.default_rng(cfg.seed_for("validation_x0")).standard_normal(truth.n)
    y = simulate(truth, omega, x0).y
    x0c = estimate_initial_state(corrected, omega, y, tol=cfg.svd_tol)
    y_check = simulate(corrected, omega, x0c).y
    return ValidationOutcome(omega, y, y_check, x0c)


@dataclass
class RunReport:
    """Everything a run measured; ``to_dict`` is what lands in ``report.json``."""

    markov_before: dict
    markov_after: dict
    markov_after_all_lags: dict
    output_errors: dict
    upsilon: list
    pe: dict
    clustering: dict
    oracle_anchored_error: float
    passed: bool

    def to_dict(self) -> dict:
        strip = lambda m: {k: v for k, v in m.items() if k != "rows"}  # noqa: E731
        return {
            "passed": self.passed,
            "markov_errors": {
                "before": strip(self.markov_before),
                "after": strip(self.markov_after),
                "after_all_lags": strip(self.markov_after_all_lags),
            },
            "output_errors": self.output_errors,
            "upsilon": self.upsilon,
            "pe": self.pe,
            "clustering": self.clustering,
            "oracle_anchored_error": self.oracle_anchored_error,
        }


@dataclass
class RunResult:
    config: ExperimentConfig
    data: LearningData
    learned: LearnResult
    validation: ValidationOutcome
    report: RunReport


def representatives_model(clusters: ClusterResult) -> SwitchedModel:
    return SwitchedModel(tuple(clusters.representatives[v] for v in sorted(clusters.representatives)))


def cmd_run(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Learn the corrected model and validate it; optionally write every artifact."""
    data = prepare(cfg)
    learned = learn(cfg, data)
    model, phi = data.model, data.omega.phi
    hat = representatives_model(learned.clusters)
    lags = (1, 2)
    before = markov_mismatch(model, hat, phi, lags, cfg.markov_window)
    after = markov_mismatch(model, learned.corrected, phi, lags, cfg.markov_window)
    after_all = markov_mismatch(
        model, learned.corrected, phi, range(0, 2 * model.n + 1), cfg.markov_window
    )
    val = validate_outputs(cfg, model, learned.corrected)
    per_channel = val.errors.max(axis=0)
    output_errors = {
        "per_channel_max": per_channel.tolist(),
        "max_abs_y": val.max_abs_y,
        "relative": val.relative_error,
        "tolerance": cfg.validation.tolerance,
        "validation_min_dwell": int(val.omega.phi.min_dwell),
    }
    seg_ok = bool(np.array_equal(learned.clusters.segment_modes, phi.segment_modes))
    clustering = {
        "eps": learned.eps,
        "num_clusters": learned.clusters.num_clusters,
        "sizes": {str(k): v for k, v in learned.clusters.sizes().items()},
        "segments": len(learned.estimates),
        "all_segments_correct": seg_ok,
    }
    report = RunReport(
        markov_before=before,
        markov_after=after,
        markov_after_all_lags=after_all,
        output_errors=output_errors,
        upsilon=[s.summary() for _, s in sorted(learned.transforms.pairwise.items())],
        pe=learned.pe.to_dict(),
        clustering=clustering,
        oracle_anchored_error=oracle_anchored_error(
            learned.estimates, learned.clusters, learned.transforms.anchored
        ),
        passed=val.relative_error <= cfg.validation.tolerance,
    )
    result = RunResult(cfg, data, learned, val, report)
    if out_dir is not None:
        write_run(result, Path(out_dir))
    return result


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _fmt(v) -> str:
    return repr(float(v))


def write_feature_trace(path: Path, est: LocalEstimateSet, clusters: ClusterResult) -> None:
    feats = clusters.features
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "phi", "segment", "feature", "cluster", "assigned_mode"])
        for k in range(1, est.phi.N + 1):
            i = est.phi.segment_of(k)
            w.writerow([k, est.phi(k), i, _fmt(feats[i]), int(clusters.labels[i]),
                        int(clusters.segment_modes[i])])


def write_markov_trace(path: Path, before: dict, after: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "lag", "h_norm", "h_hat_norm", "h_check_norm",
                    "err_hat", "err_check", "within_segment"])
        for b, a in zip(before["rows"], after["rows"]):
            k, lag, h, g, e, same = b
            w.writerow([k, lag, _fmt(h), _fmt(g), _fmt(a[3]), _fmt(e), _fmt(a[4]), int(same)])


def write_validation_trace(path: Path, val: ValidationOutcome) -> None:
    p = val.y.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "phi"] + [f"y{j + 1}" for j in range(p)]
                   + [f"ycheck{j + 1}" for j in range(p)] + [f"e{j + 1}" for j in range(p)])
        err = val.errors
        for k in range(val.y.shape[0]):
            w.writerow([k + 1, int(val.omega.phi.phi[k])]
                       + [_fmt(v) for v in val.y[k]]
                       + [_fmt(v) for v in val.y_check[k]]
                       + [_fmt(v) for v in err[k]])


def write_learning(out: Path, cfg: ExperimentConfig, data: LearningData) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "config_resolved.json", cfg.to_dict())
    data.model.save(out / "model.json")
    write_signals(out / "learning_signals.csv", data.omega, data.y)


def write_learned(out: Path, learned: LearnResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    learned.estimates.save(out / "local_estimates.json")
    _dump(out / "clusters.json", learned.clusters.to_dict())
    write_feature_trace(out / "feature_trace.csv", learned.estimates, learned.clusters)
    _dump(out / "transitions.json", {
        "q": learned.transitions.q,
        "pairs": [pd.summary() for _, pd in sorted(learned.transitions.pairs.items())],
    })
    _dump(out / "transforms.json", learned.transforms.to_dict())
    (out / "graph.dot").write_text(learned.graph.to_dot(learned.transforms.tree))
    learned.corrected.save(out / "corrected_model.json")
    _dump(out / "pe_report.json", learned.pe.to_dict())


def write_run(result: RunResult, out: Path) -> None:
    write_learning(out, result.config, result.data)
    write_learned(out, result.learned)
    write_markov_trace(out / "markov_mismatch.csv", result.report.markov_before,
                       result.report.markov_after)
    write_signals(out / "validation_signals.csv", result.validation.omega, result.validation.y)
    write_validation_trace(out / "validation_outputs.csv", result.validation)
    _dump(out / "report.json", result.report.to_dict())
