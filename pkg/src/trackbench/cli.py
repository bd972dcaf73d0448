"""Command-line front end: dataset tools, experiment runs, analysis, plots.

Every subcommand reads the workspace file (default ``workspace.ini``),
performs one pipeline step and prints a one-line summary.  Exit codes:
0 success, 1 runtime or configuration failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

import numpy as np

from .analysis import (
    ANNOTATION_KINDS,
    REINIT_KINDS,
    AnnotationSimParams,
    ReinitSimParams,
    annotation_moments,
    burnin_curve_all,
    difficulty,
    rank_variance_study,
    reinit_moments,
    simulate_estimators,
    write_burnin_csv,
    write_difficulty_csv,
    write_difficulty_curves,
)
from .attributes import compute_attributes, select_dataset, write_attributes_csv
from .dataset import (
    SynthEvent,
    SynthScript,
    estimate_gamma,
    linear_path,
    load_dataset,
    synthesize,
)
from .errors import ConfigError, EvalError, ParameterError
from .geometry import Absent, PerturbationSpec, perturb_rng
from .measures import Scope, ResultsView, measure_table, write_measures_csv
from .ranking import (
    AGGREGATE_MODES,
    aggregate,
    ar_plot_data,
    evaluate_scope,
    rank_tables,
    write_ar_svg,
    write_rank_csv,
)
from .runner import derive_seed, load_experiment, run_experiment
from .workspace import WorkspaceConfig, load_workspace

__all__ = ["main"]


# --- dataset helpers -------------------------------------------------------


def _canned_scripts(master_seed: int) -> List[SynthScript]:
    """A small mixed suite: motion, lighting, occlusion, zoom, camera pan."""

    def seed(i: int) -> int:
        return master_seed * 101 + i

    length = 40
    return [
        SynthScript(
            name="hold",
            length=length,
            path=linear_path((60.0, 44.0), (26.0, 20.0), (0.0, 0.0), length),
            seed=seed(0),
            gamma=0.04,
        ),
        SynthScript(
            name="walk",
            length=length,
            path=linear_path((12.0, 40.0), (26.0, 20.0), (2.0, 0.0), length),
            seed=seed(1),
            gamma=0.04,
        ),
        SynthScript(
            name="flash",
            length=length,
            path=linear_path((70.0, 30.0), (24.0, 22.0), (0.0, 0.5), length),
            events=[SynthEvent("brighten", 10, 22, magnitude=1.0)],
            seed=seed(2),
            gamma=0.04,
        ),
        SynthScript(
            name="hide",
            length=length,
            path=linear_path((20.0, 60.0), (28.0, 18.0), (1.0, 0.0), length),
            events=[SynthEvent("occlude", 18, 26)],
            seed=seed(3),
            gamma=0.04,
        ),
        SynthScript(
            name="drift",
            length=length,
            path=linear_path((10.0, 10.0), (26.0, 20.0), (1.5, 1.0), length),
            events=[SynthEvent("deform", 20, 30, magnitude=0.5)],
            seed=seed(4),
            gamma=0.04,
        ),
        SynthScript(
            name="pan",
            length=length,
            path=linear_path((90.0, 50.0), (24.0, 20.0), (0.0, 0.0), length),
            events=[SynthEvent("shift_camera", 8, 28, magnitude=1.0)],
            seed=seed(5),
            gamma=0.04,
        ),
    ]


def _scripts_from_json(path: Path, master_seed: int) -> List[SynthScript]:
    """Decode a JSON list of sequence scripts (see README for the schema)."""
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read script file: {exc}", file=path) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON: {exc}", file=path) from exc
    if not isinstance(raw, list) or not raw:
        raise ConfigError("script file must hold a non-empty list", file=path)
    scripts = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigError(f"entry {i} is not an object", file=path)
        try:
            name = item["name"]
            length = int(item["length"])
            start = tuple(float(v) for v in item["start"])
            size = tuple(float(v) for v in item["size"])
            velocity = tuple(float(v) for v in item["velocity"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(
                f"entry {i} needs name, length, start, size, velocity: {exc}",
                file=path,
            ) from exc
        events = []
        for j, ev in enumerate(item.get("events", [])):
            try:
                events.append(
                    SynthEvent(
                        kind=ev["kind"],
                        start=int(ev["start"]),
                        end=int(ev["end"]),
                        magnitude=float(ev.get("magnitude", 1.0)),
                    )
                )
            except (KeyError, TypeError, ValueError, EvalError) as exc:
                raise ConfigError(f"entry {i} event {j}: {exc}", file=path) from exc
        canvas = tuple(int(v) for v in item.get("canvas", (160, 120)))
        try:
            scripts.append(
                SynthScript(
                    name=name,
                    length=length,
                    path=linear_path(start, size, velocity, length),
                    canvas=canvas,  # type: ignore[arg-type]
                    events=events,
                    seed=int(item.get("seed", master_seed * 101 + i)),
                    gamma=float(item.get("gamma", 0.05)),
                )
            )
        except EvalError as exc:
            raise ConfigError(f"entry {i}: {exc}", file=path) from exc
    return scripts


def _load_view(cfg: WorkspaceConfig, experiment: str) -> ResultsView:
    runs = load_experiment(cfg.results_root, experiment)
    records = load_dataset(cfg.dataset_root)
    return ResultsView(runs, records)


def _parse_scope(text: str) -> Scope:
    if text == "pooled":
        return Scope("pooled")
    kind, sep, key = text.partition(":")
    if not sep or not key:
        raise ParameterError(
            f"scope must be 'pooled', 'attribute:<channel>' or 'sequence:<name>', got {text!r}"
        )
    return Scope(kind, key)


# --- subcommands -----------------------------------------------------------


def _cmd_synth(args, cfg: WorkspaceConfig) -> int:
    if args.script:
        scripts = _scripts_from_json(Path(args.script), cfg.master_seed)
    else:
        scripts = _canned_scripts(cfg.master_seed)
    for script in scripts:
        synthesize(script, cfg.dataset_root / script.name)
    print(f"synthesized {len(scripts)} sequences -> {cfg.dataset_root}")
    return 0


def _attribute_vectors(cfg: WorkspaceConfig):
    records = load_dataset(cfg.dataset_root)
    names = sorted(records)
    vectors = [compute_attributes(records[n], seed=cfg.master_seed) for n in names]
    return names, vectors


def _cmd_attributes(args, cfg: WorkspaceConfig) -> int:
    names, vectors = _attribute_vectors(cfg)
    out = Path(args.out) if args.out else cfg.reports_root / "attributes.csv"
    write_attributes_csv(out, names, vectors)
    print(f"attributes for {len(names)} sequences -> {out}")
    return 0


def _cmd_cluster(args, cfg: WorkspaceConfig) -> int:
    names, vectors = _attribute_vectors(cfg)
    result = select_dataset(vectors, args.clusters)
    out = Path(args.out) if args.out else cfg.reports_root / "clusters.csv"
    write_attributes_csv(out, names, vectors, result)
    exemplars = ", ".join(names[e] for e in result.exemplars)
    print(f"{len(result.exemplars)} clusters (exemplars: {exemplars}) -> {out}")
    return 0


def _cmd_gamma(args, cfg: WorkspaceConfig) -> int:
    records = load_dataset(cfg.dataset_root)
    if not records:
        raise ParameterError(f"no sequences under {cfg.dataset_root}")
    jitter = PerturbationSpec(
        position_amplitude=args.amplitude, size_amplitude=args.amplitude
    )
    for name in sorted(records):
        record = records[name]
        boxes = [g for g in record.groundtruth if not isinstance(g, Absent)]
        if not boxes:
            print(f"{name}: skipped (no visible target)")
            continue
        rng = np.random.default_rng(derive_seed(cfg.master_seed, "annotate", name, 0))
        chosen = np.linspace(0, len(boxes) - 1, min(args.frames, len(boxes))).astype(int)
        per_frame = [
            [perturb_rng(boxes[i], jitter, rng) for _ in range(args.boxes)]
            for i in chosen
        ]
        estimate = estimate_gamma(per_frame)
        out = cfg.dataset_root / name / "gamma.txt"
        out.write_text(f"{estimate.value:.6f}\n", encoding="utf-8")
        print(f"{name}: gamma={estimate.value:.4f} ({estimate.samples} samples)")
    return 0


def _cmd_evaluate(args, cfg: WorkspaceConfig) -> int:
    trackers = (
        [cfg.tracker(n) for n in args.tracker] if args.tracker else list(cfg.trackers)
    )
    if not trackers:
        raise ConfigError("no trackers configured", file=cfg.path)
    experiments = (
        [cfg.experiment(n) for n in args.experiment]
        if args.experiment
        else list(cfg.experiments)
    )
    records = load_dataset(cfg.dataset_root)
    if not records:
        raise ParameterError(f"no sequences under {cfg.dataset_root}")
    for spec in experiments:
        config = cfg.runner_config(spec)
        results = run_experiment(
            trackers,
            records,
            config,
            results_root=cfg.results_root,
            experiment=spec.name,
            workers=args.workers,
        )
        failed = sum(
            1
            for per_seq in results.values()
            for trajectories in per_seq.values()
            for t in trajectories
            if not t.ok
        )
        note = f", {failed} crashed runs" if failed else ""
        print(
            f"{spec.name}: {len(trackers)} trackers x {len(records)} sequences "
            f"x {config.n_rep} reps -> {cfg.results_root}{note}"
        )
    return 0


def _cmd_measures(args, cfg: WorkspaceConfig) -> int:
    view = _load_view(cfg, args.experiment)
    rows = measure_table(view, horizon=cfg.horizon)
    out = cfg.reports_root / args.experiment / "measures.csv"
    write_measures_csv(out, rows)
    print(f"{len(rows)} measure rows -> {out}")
    return 0


def _cmd_rank(args, cfg: WorkspaceConfig) -> int:
    view = _load_view(cfg, args.experiment)
    tables = rank_tables(view, alpha=cfg.alpha)
    final = aggregate(tables, args.mode)
    out = cfg.reports_root / args.experiment / f"rank_{args.mode}.csv"
    write_rank_csv(out, [*tables, final])
    combined = dict(zip(final.trackers, final.combined))
    order = ", ".join(f"{name} ({combined[name]:.2f})" for name in final.order())
    print(f"{args.mode} order: {order} -> {out}")
    return 0


def _cmd_difficulty(args, cfg: WorkspaceConfig) -> int:
    runs = load_experiment(cfg.results_root, args.experiment)
    records = load_dataset(cfg.dataset_root)
    reports = difficulty(runs, records)
    out_dir = cfg.reports_root / args.experiment
    out_dir.mkdir(parents=True, exist_ok=True)
    write_difficulty_csv(out_dir / "difficulty.csv", reports)
    write_difficulty_curves(out_dir / "difficulty_curves", reports)
    hard = sum(1 for r in reports.values() if r.level == "hard")
    print(f"{len(reports)} sequences, {hard} hard -> {out_dir / 'difficulty.csv'}")
    return 0


def _cmd_burnin(args, cfg: WorkspaceConfig) -> int:
    runs = load_experiment(cfg.results_root, args.experiment)
    records = load_dataset(cfg.dataset_root)
    names = args.tracker or sorted(runs)
    out_dir = cfg.reports_root / args.experiment
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in names:
        if name not in runs:
            raise ParameterError(f"no stored runs for tracker {name!r}")
        curve, derivative = burnin_curve_all(runs[name], records, horizon=cfg.horizon)
        write_burnin_csv(out_dir / f"burnin_{name}.csv", curve, derivative)
    print(f"burn-in curves for {', '.join(names)} -> {out_dir}")
    return 0


def _cmd_rank_variance(args, cfg: WorkspaceConfig) -> int:
    view = _load_view(cfg, args.experiment)
    common = dict(
        subset_size=args.subset_size,
        n_subsets=args.subsets,
        seed=cfg.master_seed,
        alpha=cfg.alpha,
    )
    with_tests = rank_variance_study(view, with_tests=True, **common)
    without_tests = rank_variance_study(view, with_tests=False, **common)
    out = cfg.reports_root / args.experiment / "rank_variance.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "experiment": args.experiment,
        "subset_size": args.subset_size,
        "subsets": args.subsets,
        "with_tests": with_tests,
        "without_tests": without_tests,
    }
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(
        f"rank variance: with tests {with_tests:.4f}, "
        f"without {without_tests:.4f} -> {out}"
    )
    return 0


def _build(cls, **maybe):
    return cls(**{k: v for k, v in maybe.items() if v is not None})


def _cmd_simulate(args, cfg: WorkspaceConfig) -> int:
    if args.kind in REINIT_KINDS:
        params = _build(
            ReinitSimParams,
            mean_overlap=args.mean_overlap,
            overlap_std=args.overlap_std,
            sequences=args.sequences,
            frames=args.frames,
            failure_prob=args.failure_prob,
            reinit_gap=args.reinit_gap,
        )
        closed = reinit_moments(args.kind, params)
    else:
        params = _build(
            AnnotationSimParams,
            mean_overlap=args.mean_overlap,
            other_mean_overlap=args.other_mean,
            overlap_std=args.overlap_std,
            sequences=args.sequences,
            attribute_frames=args.frames,
            contamination=args.contamination,
            false_rate=args.false_rate,
        )
        closed = annotation_moments(args.kind, params)
    empirical = simulate_estimators(args.kind, params, args.trials, seed=cfg.master_seed)
    payload = {
        "kind": args.kind,
        "trials": args.trials,
        "seed": cfg.master_seed,
        "params": asdict(params),
        "empirical": {
            "mean": empirical.mean,
            "variance": empirical.variance,
            "std": empirical.std,
        },
        "closed_form": {
            "mean": closed.mean,
            "variance": closed.variance,
            "std": closed.std,
        },
    }
    out = cfg.reports_root / f"simulate_{args.kind}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(
        f"{args.kind}: empirical mean {empirical.mean:.4f} vs closed form "
        f"{closed.mean:.4f} over {args.trials} trials -> {out}"
    )
    return 0


def _cmd_plot_ar(args, cfg: WorkspaceConfig) -> int:
    scope = _parse_scope(args.scope)
    view = _load_view(cfg, args.experiment)
    table = evaluate_scope(view, scope, alpha=cfg.alpha)
    if table is None:
        raise ParameterError(f"measures undefined on scope {scope.label!r}")
    rows = measure_table(view, scopes=[scope], horizon=cfg.horizon)
    rank_points, raw_points = ar_plot_data(rows, table)
    out_dir = cfg.reports_root / args.experiment
    safe = scope.label.replace(":", "_")
    rank_path = write_ar_svg(
        out_dir / f"ar_rank_{safe}.svg",
        rank_points,
        "accuracy rank",
        "robustness rank",
        invert_x=True,
        invert_y=True,
        title=f"AR rank ({scope.label})",
    )
    raw_path = write_ar_svg(
        out_dir / f"ar_raw_{safe}.svg",
        raw_points,
        "reliability",
        "accuracy",
        title=f"AR raw ({scope.label})",
    )
    print(f"AR plots for {scope.label} -> {rank_path}, {raw_path}")
    return 0


# --- parser ----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trackbench",
        description="Tracker evaluation workspace: dataset tools, runs, analysis.",
    )
    parser.add_argument(
        "--config", default="workspace.ini", help="workspace file (default: %(default)s)"
    )
    parser.add_argument(
        "--seed", type=int, default=None, help="override the configured master seed"
    )
    commands = parser.add_subparsers(dest="command", metavar="command")

    ds = commands.add_parser("dataset", help="create and describe sequences")
    ds_sub = ds.add_subparsers(dest="subcommand", metavar="subcommand")
    synth = ds_sub.add_parser("synth", help="render synthetic sequences")
    synth.add_argument("--script", help="JSON sequence scripts (default: built-in suite)")
    synth.set_defaults(handler=_cmd_synth)
    attrs = ds_sub.add_parser("attributes", help="compute per-sequence descriptors")
    attrs.add_argument("--out", help="output CSV (default: reports/attributes.csv)")
    attrs.set_defaults(handler=_cmd_attributes)
    cluster = ds_sub.add_parser("cluster", help="cluster sequences by descriptors")
    cluster.add_argument("--clusters", type=int, default=12, help="target cluster count")
    cluster.add_argument("--out", help="output CSV (default: reports/clusters.csv)")
    cluster.set_defaults(handler=_cmd_cluster)
    gamma = ds_sub.add_parser("gamma", help="estimate annotation noise thresholds")
    gamma.add_argument("--frames", type=int, default=4, help="annotated frames per sequence")
    gamma.add_argument("--boxes", type=int, default=5, help="simulated annotations per frame")
    gamma.add_argument(
        "--amplitude", type=float, default=0.05, help="annotator jitter amplitude"
    )
    gamma.set_defaults(handler=_cmd_gamma)

    evaluate = commands.add_parser("evaluate", help="run trackers over the dataset")
    evaluate.add_argument("--tracker", action="append", help="tracker name (repeatable)")
    evaluate.add_argument(
        "--experiment", action="append", help="experiment name (repeatable)"
    )
    evaluate.add_argument("--workers", type=int, default=1, help="parallel sessions")
    evaluate.set_defaults(handler=_cmd_evaluate)

    analyze = commands.add_parser("analyze", help="tables and studies from stored runs")
    an_sub = analyze.add_subparsers(dest="subcommand", metavar="subcommand")
    measures = an_sub.add_parser("measures", help="accuracy/robustness table")
    measures.set_defaults(handler=_cmd_measures)
    rank = an_sub.add_parser("rank", help="corrected ranks and final order")
    rank.add_argument(
        "--mode",
        choices=AGGREGATE_MODES,
        default="attribute_normalized",
        help="aggregation mode (default: %(default)s)",
    )
    rank.set_defaults(handler=_cmd_rank)
    diff = an_sub.add_parser("difficulty", help="per-sequence failure profiles")
    diff.set_defaults(handler=_cmd_difficulty)
    burnin = an_sub.add_parser("burnin", help="post-initialization bias curves")
    burnin.add_argument("--tracker", action="append", help="tracker name (repeatable)")
    burnin.set_defaults(handler=_cmd_burnin)
    rank_var = an_sub.add_parser("rank-variance", help="rank stability over subsets")
    rank_var.add_argument("--subset-size", type=int, default=15)
    rank_var.add_argument("--subsets", type=int, default=50)
    rank_var.set_defaults(handler=_cmd_rank_variance)
    for sub in (measures, rank, diff, burnin, rank_var):
        sub.add_argument("--experiment", default="baseline", help="experiment name")

    simulate = commands.add_parser("simulate", help="idealized estimator studies")
    sim_sub = simulate.add_subparsers(dest="subcommand", metavar="subcommand")
    estimators = sim_sub.add_parser(
        "estimators", help="empirical vs closed-form estimator moments"
    )
    estimators.add_argument(
        "--kind", required=True, choices=REINIT_KINDS + ANNOTATION_KINDS
    )
    estimators.add_argument("--trials", type=int, default=10000)
    estimators.add_argument("--mean-overlap", type=float, default=None)
    estimators.add_argument("--overlap-std", type=float, default=None)
    estimators.add_argument("--sequences", type=int, default=None)
    estimators.add_argument("--frames", type=int, default=None)
    estimators.add_argument("--failure-prob", type=float, default=None)
    estimators.add_argument("--reinit-gap", type=int, default=None)
    estimators.add_argument("--other-mean", type=float, default=None)
    estimators.add_argument("--contamination", type=float, default=None)
    estimators.add_argument("--false-rate", type=float, default=None)
    estimators.set_defaults(handler=_cmd_simulate)

    plot = commands.add_parser("plot", help="emit SVG figures")
    plot_sub = plot.add_subparsers(dest="subcommand", metavar="subcommand")
    ar = plot_sub.add_parser("ar", help="accuracy-robustness scatter plots")
    ar.add_argument("--experiment", default="baseline")
    ar.add_argument(
        "--scope",
        default="pooled",
        help="pooled, attribute:<channel> or sequence:<name>",
    )
    ar.set_defaults(handler=_cmd_plot_ar)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = getattr(args, "handler", None)
    if handler is None:
        parser.print_usage(sys.stderr)
        print("trackbench: a subcommand is required", file=sys.stderr)
        return 2
    try:
        cfg = load_workspace(args.config).with_seed(args.seed)
        return handler(args, cfg)
    except EvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
