"""Command-line entry point.

Subcommands: ``tune``, ``compare``, ``heatmap``, ``bars``, ``report``.
Settings resolve as command-line flags over a JSON config file (``--config``)
over built-in defaults. Every run writes ``manifest.json`` into its output
directory; passing that manifest back as ``--config`` reproduces the run.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import statistics
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .costmodel import CostModelConfig
from .experiment import (
    THRESHOLDS,
    median_budget_ratios,
    run_accuracy_bars,
    run_budget_report,
    run_compare,
    run_heatmap,
    write_bars_csv,
    write_budget_csv,
)
from .family import CLUSTER_ALGORITHMS, construct_family
from .fixtures import BUILTIN_MODELS
from .graph import ModelGraph, load_model
from .scheduler import Policy, TunerConfig, TunerState, tune, write_curve
from .simbackend import LandscapeConfig, SimBackend, SimClock, make_landscape

log = logging.getLogger("familytune")

COMMANDS = ("tune", "compare", "heatmap", "bars", "report")
ALGOS = ("core-op", "op-count", "op-sequence")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str = "tune"
    model: str = "bert_large_like"  # file path or built-in model name
    budget: int | None = None  # None: 900 measurements per subgraph
    policy: str = "foresee"
    foresee_p: float = 0.25
    cluster_algo: str = "core-op"
    truth_algo: str = "core-op"
    potential: str = "greedy"
    seed: int = 0
    seeds: int = 1
    workers: int = 1
    noise: float = 0.02
    t_measure: float = 1.0
    t_train_per_sample: float = 0.0005
    train_speedup: float = 10.0
    cm_trees: int = 50
    cm_depth: int = 3
    cm_lr: float = 0.1
    cm_min_leaf: int = 2
    cm_accelerated: bool = False
    pool_random: int = 512
    pool_evolved: int = 512
    epsilon: float = 0.1
    samples: int = 256
    starve: tuple[tuple[int, int], ...] = ()
    state: str | None = None
    out_dir: str = "results"
    out: str = "curve.csv"
    check: bool = False

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not 0 < self.foresee_p < 1:
            raise ConfigError(f"--foresee-p must satisfy 0 < p < 1, got {self.foresee_p}")
        if self.policy not in ("foresee", "monolithic"):
            raise ConfigError(f"unknown policy {self.policy!r}")
        for name in ("cluster_algo", "truth_algo"):
            if getattr(self, name) not in CLUSTER_ALGORITHMS:
                raise ConfigError(f"unknown {name} {getattr(self, name)!r}")
        if self.potential not in ("greedy", "gradient"):
            raise ConfigError(f"unknown potential {self.potential!r}")
        if self.workers < 1 or self.seeds < 1:
            raise ConfigError("workers and seeds must be >= 1")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be positive")
        if self.noise < 0 or self.t_measure < 0 or self.t_train_per_sample < 0 or self.train_speedup < 1:
            raise ConfigError("noise/clock parameters out of range")
        if self.command == "report" and not self.state:
            raise ConfigError("report needs --state PATH (written by tune)")
        out = Path(self.out)
        if out.is_absolute() or ".." in out.parts:
            raise ConfigError("--out must be a plain file name inside --out-dir")
        try:
            CostModelConfig(self.cm_trees, self.cm_depth, self.cm_lr, self.cm_min_leaf)
            TunerConfig(self.pool_random, self.pool_evolved, self.epsilon)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def cost_model(self) -> CostModelConfig:
        return CostModelConfig(self.cm_trees, self.cm_depth, self.cm_lr, self.cm_min_leaf)

    def tuner(self) -> TunerConfig:
        return TunerConfig(self.pool_random, self.pool_evolved, self.epsilon, cost_model=self.cost_model(), accelerated_training=self.cm_accelerated)

    def landscape(self) -> LandscapeConfig:
        return LandscapeConfig(noise_sigma=self.noise)

    def clock(self) -> SimClock:
        return SimClock(self.t_measure, self.t_train_per_sample, self.train_speedup)

    def policy_obj(self) -> Policy:
        return Policy(self.policy, self.potential, self.cluster_algo)

    def to_json(self) -> dict:
        d = asdict(self)
        d["starve"] = [list(p) for p in self.starve]
        return d


FIELD_TYPES = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    if name == "starve":
        if not isinstance(value, (list, tuple)):
            raise ConfigError("starve must be a list of [subgraph_id, train_samples] pairs")
        return tuple((int(a), int(b)) for a, b in value)
    default = FIELD_TYPES[name].default
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true/false")
        return value
    if isinstance(default, int) or name == "budget":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    return str(value)


def read_config_file(path: str | Path) -> dict:
    """Flat ``{field: value}`` mapping, from a config file or a run manifest."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")
    if "manifest_version" in doc:
        doc = _manifest_config(doc, path)
    unknown = set(doc) - set(FIELD_TYPES)
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s) {sorted(unknown)}")
    return {k: _coerce(k, v) for k, v in doc.items()}


def _starve_arg(text: str) -> tuple[int, int]:
    try:
        sid, n = text.split(":")
        return int(sid), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError("expected SUBGRAPH_ID:TRAIN_SAMPLES") from None


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="JSON config file or run manifest")
    common.add_argument("--model", help="model description file, or a built-in name: " + ", ".join(BUILTIN_MODELS))
    common.add_argument("--seed", type=int)
    common.add_argument("--noise", type=float, help="lognormal measurement noise sigma")
    common.add_argument("--truth-algo", dest="truth_algo", choices=list(CLUSTER_ALGORITHMS), help="grouping that defines landscape archetypes")
    common.add_argument("--cm-trees", dest="cm_trees", type=int)
    common.add_argument("--cm-depth", dest="cm_depth", type=int)
    common.add_argument("--cm-lr", dest="cm_lr", type=float)
    common.add_argument("--cm-min-leaf", dest="cm_min_leaf", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--check", action="store_true", help="exit nonzero if the experiment's property fails")
    common.add_argument("-v", "--verbose", action="store_true", default=False)

    tuning = argparse.ArgumentParser(add_help=False, argument_default=S)
    tuning.add_argument("--budget", type=int, help="total measurements B (default 900 per subgraph)")
    tuning.add_argument("--foresee-p", dest="foresee_p", type=float)
    tuning.add_argument("--cluster-algo", dest="cluster_algo", choices=ALGOS)
    tuning.add_argument("--potential", choices=["greedy", "gradient"])
    tuning.add_argument("--workers", type=int)
    tuning.add_argument("--t-measure", dest="t_measure", type=float)
    tuning.add_argument("--t-train-per-sample", dest="t_train_per_sample", type=float)
    tuning.add_argument("--train-speedup", dest="train_speedup", type=float)
    tuning.add_argument("--cm-accelerated", dest="cm_accelerated", action="store_true")
    tuning.add_argument("--pool-random", dest="pool_random", type=int)
    tuning.add_argument("--pool-evolved", dest="pool_evolved", type=int)
    tuning.add_argument("--epsilon", type=float)

    parser = argparse.ArgumentParser(prog="familytune", description="Family-based auto-tuning on simulated hardware.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("tune", parents=[common, tuning], argument_default=S, help="run one tuning policy")
    p.add_argument("--policy", choices=["foresee", "monolithic"])
    p.add_argument("--out", help="curve CSV file name inside --out-dir")
    p = sub.add_parser("compare", parents=[common, tuning], argument_default=S, help="paired foresee vs monolithic run")
    p.add_argument("--seeds", type=int, help="number of consecutive seeds (medians reported)")
    p = sub.add_parser("heatmap", parents=[common], argument_default=S, help="cross-subgraph cost model accuracy")
    p.add_argument("--samples", type=int)
    p.add_argument("--seeds", type=int)
    p = sub.add_parser("bars", parents=[common], argument_default=S, help="monolithic vs individual vs family accuracy")
    p.add_argument("--samples", type=int)
    p.add_argument("--starve", type=_starve_arg, action="append", help="SUBGRAPH_ID:TRAIN_SAMPLES")
    p = sub.add_parser("report", parents=[common], argument_default=S, help="budget allocation report of a tune run")
    p.add_argument("--state", help="state.json written by tune")
    return parser


def parse_config(argv: Sequence[str], config_file: str | Path | None = None) -> RunConfig:
    """Resolve flags over config-file values over defaults."""
    ns = vars(build_parser().parse_args(list(argv)))
    ns.pop("verbose", None)
    values: dict[str, Any] = {}
    path = ns.pop("config", None) or config_file
    if path is not None:
        values.update(read_config_file(path))
    if "starve" in ns:
        ns["starve"] = tuple(ns["starve"])
    command = ns.pop("command")
    values.update(ns)
    values["command"] = command
    if values.get("policy") == "monolithic" and "foresee_p" in ns:
        raise ConfigError("--foresee-p conflicts with --policy monolithic (p is only used by foresee)")
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def resolve_model(spec: str) -> ModelGraph:
    path = Path(spec)
    if path.exists():
        return load_model(path)
    if spec in BUILTIN_MODELS:
        return BUILTIN_MODELS[spec]()
    raise ConfigError(f"model {spec!r} is neither a readable file nor a built-in ({', '.join(BUILTIN_MODELS)})")


def budget_for(cfg: RunConfig, model: ModelGraph) -> int:
    return cfg.budget if cfg.budget is not None else 900 * len(model)


def landscape_digest(cfg: RunConfig, seed: int | None = None) -> str:
    model = resolve_model(cfg.model)
    truth = construct_family(list(model.subgraphs), cfg.truth_algo)
    return make_landscape(model, truth, cfg.seed if seed is None else seed, cfg.landscape()).digest()


def emit_manifest(cfg: RunConfig, results_dir: str | Path, digest: str | None = None) -> Path:
    out = Path(results_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create {out}: {exc}") from None
    manifest = {
        "manifest_version": 1,
        "tool": "familytune",
        "tool_version": __version__,
        "seed": cfg.seed,
        "landscape_digest": digest or landscape_digest(cfg),
        "config": cfg.to_json(),
    }
    path = out / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None
    return path


def _manifest_config(doc: dict, path) -> dict:
    if "seed" not in doc or "seed" not in doc.get("config", {}):
        raise ConfigError(f"{path}: manifest has no seed")
    if doc["seed"] != doc["config"]["seed"]:
        raise ConfigError(f"{path}: manifest seed disagrees with its config")
    return dict(doc["config"])


def load_manifest(path: str | Path) -> RunConfig:
    values = read_config_file(path)
    return RunConfig(**values).validate()


def _state_json(state: TunerState) -> dict:
    return {
        "B": state.B,
        "g": state.g,
        "p": state.p,
        "b": state.b,
        "weights": state.weights,
        "best_latency": state.best_latency,
        "spent": state.spent,
        "exhausted": state.exhausted,
        "history": state.history,
        "curve": [dataclasses.astuple(pt) for pt in state.curve],
    }


def load_state(path: str | Path) -> TunerState:
    from .scheduler import CurvePoint

    d = json.loads(Path(path).read_text())
    return TunerState(
        B=d["B"],
        g=d["g"],
        p=d["p"],
        best_latency=d["best_latency"],
        weights=d["weights"],
        b=d["b"],
        spent=d["spent"],
        history=[[tuple(h) for h in hs] for hs in d["history"]],
        exhausted=d["exhausted"],
        curve=[CurvePoint(*pt) for pt in d["curve"]],
    )


def cmd_tune(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = resolve_model(cfg.model)
    subs = list(model.subgraphs)
    truth = construct_family(subs, cfg.truth_algo)
    land = make_landscape(model, truth, cfg.seed, cfg.landscape())
    registry = construct_family(subs, cfg.cluster_algo)
    registry.write_csv(out / "families.csv")
    land.write_csv(out / "landscape.csv")
    backend = SimBackend(land, cfg.clock(), cfg.workers, cfg.seed)
    B = budget_for(cfg, model)
    state = tune(model, B, cfg.foresee_p, cfg.policy_obj(), backend, cfg.tuner())
    write_curve(state, out / cfg.out)
    (out / "state.json").write_text(json.dumps(_state_json(state)) + "\n")
    write_budget_csv(run_budget_report(state), out / "budget_report.csv")
    emit_manifest(cfg, out, land.digest())
    last = state.curve[-1]
    print(f"{cfg.policy}: b={state.b}/{B} model_latency={last.model_latency_ms:.4f} ms sim_wall={last.sim_wall_seconds:.1f} s -> {out / cfg.out}")
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    model = resolve_model(cfg.model)
    B = budget_for(cfg, model)
    reports = []
    for seed in range(cfg.seed, cfg.seed + cfg.seeds):
        rep = run_compare(
            model, B, cfg.foresee_p, seed, cfg.workers, cfg.policy_obj(), cfg.truth_algo, cfg.landscape(), cfg.tuner(), cfg.clock()
        )
        rep.write(out / f"seed_{seed}" if cfg.seeds > 1 else out)
        reports.append(rep)
        row = rep.row(1.0)
        print(f"seed {seed}: baseline final {rep.baseline_final:.4f} ms; budget to 100%: baseline {row.baseline_b}, foresee {row.foresee_b}")
    med = median_budget_ratios(reports)
    with open(out / "summary.csv", "w") as fh:
        fh.write("fraction,median_budget_ratio,median_wall_speedup\n")
        for x in THRESHOLDS:
            wall = statistics.median(r.row(x).wall_speedup for r in reports)
            fh.write(f"{x},{med[x]:.4f},{wall:.4f}\n")
            print(f"{int(x * 100)}%: median foresee/baseline budget ratio {med[x]:.3f}, wall speedup {wall:.3f}")
    emit_manifest(cfg, out, reports[0].landscape_digest)
    if cfg.check and not med[1.0] <= 1.0:
        print("check failed: foresee needed more budget than the baseline to reach its final performance", file=sys.stderr)
        return 1
    return 0


def cmd_heatmap(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = resolve_model(cfg.model)
    gaps = []
    for seed in range(cfg.seed, cfg.seed + cfg.seeds):
        res = run_heatmap(model, cfg.samples, seed, cfg.truth_algo, cfg.landscape(), cfg.cost_model())
        res.write_csv(out / (f"heatmap_seed_{seed}.csv" if cfg.seeds > 1 else "heatmap.csv"))
        within, cross = res.within_cross_means()
        gaps.append(within - cross)
        print(f"seed {seed}: within-archetype {within:.3f}, cross-archetype {cross:.3f}, diagonal {res.diagonal_mean():.3f}")
    emit_manifest(cfg, out)
    if cfg.check and not statistics.median(gaps) > 0:
        print("check failed: within-archetype accuracy does not exceed cross-archetype accuracy", file=sys.stderr)
        return 1
    return 0


def cmd_bars(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = resolve_model(cfg.model)
    rows = run_accuracy_bars(
        model, cfg.samples, cfg.seed, cfg.truth_algo, cfg.cluster_algo, dict(cfg.starve), cfg.landscape(), cfg.cost_model()
    )
    write_bars_csv(rows, out / "bars.csv")
    for r in rows:
        print(f"subgraph_{r.subgraph_id}: monolithic {r.monolithic_acc:.3f}  individual {r.individual_acc:.3f}  family {r.family_acc:.3f}")
    emit_manifest(cfg, out)
    return 0


def cmd_report(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = load_state(cfg.state)
    rows = run_budget_report(state)
    write_budget_csv(rows, out / "budget_report.csv")
    with open(out / "curve.dat", "w") as fh:
        fh.write("# b sim_wall_seconds model_latency_ms\n")
        for pt in state.curve:
            fh.write(f"{pt.b} {pt.sim_wall_seconds:.6f} {pt.model_latency_ms:.9g}\n")
    (out / "curve.gp").write_text("set xlabel 'measurements'\nset ylabel 'model latency (ms)'\nplot 'curve.dat' using 1:3 with steps title 'model latency'\n")
    for r in rows:
        flag = "exhausted" if r.exhausted else ("plateau" if r.plateau else "")
        print(f"subgraph_{r.subgraph_id}: {r.measurements:6d} measurements ({r.share:6.1%}) best {r.best_ms:.4f} ms  last improvement at {r.last_improvement_at} {flag}")
    return 0


HANDLERS = {"tune": cmd_tune, "compare": cmd_compare, "heatmap": cmd_heatmap, "bars": cmd_bars, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO if ("-v" in argv or "--verbose" in argv) else logging.WARNING, format="%(message)s")
    try:
        cfg = parse_config(argv)
        return HANDLERS[cfg.command](cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"familytune: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
