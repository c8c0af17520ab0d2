"""Batch command-line front end.

One subcommand per experiment family. Every report embeds the seed and a
config echo, outputs are byte-reproducible for identical seeds, and each
table gets a rendered figure next to it unless --no-figures is given.

Exit codes: 0 success, 1 experiment-level error (degenerate stage,
infeasible stratification, missing stratum), 2 input or parse error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, learners, plots
from .domainshift import cross_domain_eval, mtu_matrix
from .errors import ExperimentError, InputError
from .evaluation import ConfusionMatrix, Metric, learning_curve, nested_cv
from .features import (
    FeatureFamily,
    KGRAM_FAMILIES,
    NFIRST_FAMILIES,
    build_matrix,
    parse_spec,
    write_csv,
)
from .flows import assemble
from .pcapio import read_pcap
from .pipeline import (
    Stage,
    feature_sweep,
    run_pipeline,
    stage_dataset,
    train_pipeline,
)
from .synthgen import (
    GenConfig,
    apply_manifest,
    default_app_profiles,
    default_tunnel_profiles,
    export_corpus,
    generate_corpus,
    load_profiles,
)

OUT_DIR_ENV = "TUNNELSCOPE_OUT"

# dests excluded from the config echo so outputs stay independent of them
_ECHO_SKIP = {"func", "config", "jobs", "no_figures"}


def _echo(args: argparse.Namespace) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in _ECHO_SKIP or callable(value):
            continue
        out[key] = value
    return out


def _meta(args: argparse.Namespace, command: str) -> dict:
    return {
        "tool": "tunnelscope",
        "version": __version__,
        "command": command,
        "seed": args.seed,
        "config": _echo(args),
    }


def _out_dir(args: argparse.Namespace) -> Path:
    path = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")
    print(f"wrote {path}")


def _write_table(path: Path, header: list[str], rows, meta: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path}")


def _load_corpus(pcap_paths, labels_path=None):
    flows = []
    for p in pcap_paths:
        try:
            records, meta = read_pcap(p)
        except InputError as err:
            raise InputError(f"{p}: {err}") from err
        flows.extend(assemble(records))
    if labels_path:
        matched = apply_manifest(flows, labels_path)
        print(f"labeled {matched}/{len(flows)} flows from {labels_path}")
    return flows


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _parse_specs(text: str, default_n: int):
    return [parse_spec(tok, default_n) for tok in text.split(";") if tok.strip()]


def add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0, help="master random seed")
    sub.add_argument("--out-dir", default=None,
                     help=f"output directory (default ${OUT_DIR_ENV} or .)")
    sub.add_argument("--jobs", type=int, default=0,
                     help="worker cap, 0 = all cores; results never depend on it")
    sub.add_argument("--config", default=None,
                     help="JSON file supplying any flag; command line wins")
    sub.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering next to the delimited outputs")


def cmd_synth(args) -> int:
    out = _out_dir(args)
    if args.profiles:
        tunnels, apps = load_profiles(args.profiles)
    else:
        tunnels, apps = default_tunnel_profiles(), default_app_profiles()
    cfg = GenConfig(
        mtu_list=_parse_int_list(args.mtus),
        flows_per_cell=args.flows_per_cell,
        apps=apps,
        tunnels=tunnels,
        include_untunneled=not args.no_untunneled,
        master_seed=args.seed,
        dataset_tag=args.tag,
    )
    corpus = generate_corpus(cfg)
    pcap_path = out / "corpus.pcap"
    manifest_path = out / "corpus-labels.json"
    export_corpus(corpus, pcap_path, manifest_path)
    meta = _meta(args, "synth")
    meta["flows"] = len(corpus)
    meta["packets"] = int(sum(f.n_packets for f in corpus))
    _write_json(out / "synth.meta.json", meta)
    print(f"wrote {pcap_path} and {manifest_path} ({len(corpus)} flows)")
    return 0


def cmd_extract(args) -> int:
    out = _out_dir(args)
    spec = parse_spec(args.spec, args.n)
    flows = _load_corpus(args.pcap, args.labels)
    if not flows:
        raise InputError("no TCP/UDP flows found in the given captures")
    matrix = build_matrix(flows, spec)
    out_path = Path(args.out)
    if not out_path.is_absolute():
        out_path = out / out_path
    write_csv(matrix, out_path)
    print(f"wrote {out_path} ({matrix.n_rows} rows x {matrix.n_cols} features)")
    _write_json(Path(str(out_path) + ".meta.json"), _meta(args, "extract"))
    return 0


def cmd_nestedcv(args) -> int:
    out = _out_dir(args)
    stage = Stage.parse(args.stage)
    spec = parse_spec(args.spec, args.n if args.n else stage.default_n)
    flows = _load_corpus(args.pcap, args.labels)
    matrix = build_matrix(flows, spec)
    X, y = stage_dataset(matrix, stage)
    report = nested_cv(args.alg, learners.default_grid(args.alg), X, y,
                       outer_k=args.outer_k, inner_k=args.inner_k,
                       metric=stage.metric(), seed=args.seed)
    payload = report.to_dict()
    payload["feature_spec"] = spec.describe()
    payload["stage"] = stage.describe()
    payload["meta"] = _meta(args, "nestedcv")
    _write_json(out / "nestedcv.json", payload)
    _write_table(out / "nestedcv.csv",
                 ["algorithm", "feature_spec", "mean", "ci99"],
                 [[args.alg, spec.describe(), f"{report.mean:.6f}",
                   f"{report.ci99:.6f}"]],
                 _meta(args, "nestedcv"))
    if not args.no_figures:
        plots.nestedcv_figure(report, out / "nestedcv.png")
        print(f"wrote {out / 'nestedcv.png'}")
    return 0


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    stage = Stage.parse(args.stage)
    families = []
    for tok in args.families.split(","):
        tok = tok.strip()
        family = FeatureFamily(tok)
        if family not in NFIRST_FAMILIES and family not in KGRAM_FAMILIES:
            raise InputError(f"family {tok!r} has no N to sweep")
        families.append(family)
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    rows = feature_sweep(
        _load_corpus(args.pcap, args.labels), stage, families,
        _parse_int_list(args.n_values), algorithms, seed=args.seed, k=args.k)
    _write_table(out / "sweep.csv",
                 ["family", "n", "algorithm", "mean", "ci99"],
                 [[r.family, r.n, r.algorithm, f"{r.mean:.6f}", f"{r.ci99:.6f}"]
                  for r in rows],
                 _meta(args, "sweep"))
    if not args.no_figures:
        plots.sweep_figure(rows, out / "sweep.png")
        print(f"wrote {out / 'sweep.png'}")
    return 0


def _save_models(models, out: Path) -> None:
    model_dir = out / "models"
    model_dir.mkdir(exist_ok=True)
    manifest = {}
    for name, stage_model in [("detection", models.detection), ("tunnel", models.tunnel)] + [
            (f"app_{kind}", sm) for kind, sm in sorted(models.app.items())]:
        path = model_dir / f"{name}.json"
        learners.save_model(stage_model.model, path)
        manifest[name] = {"file": path.name, "spec": stage_model.spec.describe()}
    _write_json(model_dir / "manifest.json", manifest)


def _load_models(model_dir: Path):
    from .pipeline import PipelineModels, StageModel

    manifest = json.loads((model_dir / "manifest.json").read_text())

    def load(name):
        entry = manifest[name]
        return StageModel(
            learners.load_model(model_dir / entry["file"]),
            parse_spec(entry["spec"]),
        )

    app = {name.removeprefix("app_"): load(name)
           for name in manifest if name.startswith("app_")}
    return PipelineModels(load("detection"), load("tunnel"), app)


def cmd_pipeline(args) -> int:
    out = _out_dir(args)
    train_flows = _load_corpus(args.train_pcap, args.train_labels)

    if args.input_pcap:
        input_flows = _load_corpus(args.input_pcap, args.input_labels)
    else:
        # no separate input: train on 70% of the corpus, classify the rest
        from .evaluation import stratified_holdout

        strata = np.array([
            f"{f.labels.traffic_class}/{f.labels.tunnel_kind}/{f.labels.app_kind}"
            for f in train_flows
        ])
        tr, te = stratified_holdout(strata, 0.3, args.seed)
        input_flows = [train_flows[i] for i in te]
        train_flows = [train_flows[i] for i in tr]

    if args.load_models:
        models = _load_models(Path(args.load_models))
    else:
        models = train_pipeline(train_flows, alg=args.alg, seed=args.seed,
                                detection_n=args.n, app_n=args.app_n)
    if args.save_models:
        _save_models(models, out)

    predictions = run_pipeline(input_flows, models)
    jsonl_path = out / "predictions.jsonl"
    with open(jsonl_path, "w") as fh:
        for pred in predictions:
            fh.write(json.dumps(pred.to_dict()) + "\n")
    print(f"wrote {jsonl_path} ({len(predictions)} flows)")

    payload = {"schema_version": 1, "flows": len(predictions),
               "meta": _meta(args, "pipeline")}
    labeled = [i for i, f in enumerate(input_flows) if f.labels.traffic_class]
    if labeled:
        payload["stage_scores"] = _score_pipeline(
            [input_flows[i] for i in labeled],
            [predictions[i] for i in labeled],
            out, render=not args.no_figures)
    _write_json(out / "pipeline.json", payload)
    return 0


def _score_pipeline(flows, predictions, out: Path, render: bool) -> dict:
    from .flows import TUNNELED

    truth_det = [f.labels.traffic_class for f in flows]
    pred_det = [TUNNELED if p.is_tunnel else "untunneled" for p in predictions]
    scores = {"detection_f1": Metric.binary(TUNNELED).score(truth_det, pred_det)}
    if render:
        plots.confusion_figure(ConfusionMatrix.from_labels(truth_det, pred_det),
                               out / "pipeline_confusion_detection.png",
                               title="detection")

    tun = [(f, p) for f, p in zip(flows, predictions)
           if f.labels.traffic_class == TUNNELED and p.tunnel_kind]
    if tun:
        truth = [f.labels.tunnel_kind for f, _ in tun]
        pred = [p.tunnel_kind for _, p in tun]
        if len(set(truth)) > 1:
            scores["tunnel_macro_f1"] = Metric.macro().score(truth, pred)
            if render:
                plots.confusion_figure(ConfusionMatrix.from_labels(truth, pred),
                                       out / "pipeline_confusion_tunnel.png",
                                       title="tunnel classification")
        app = [(f, p) for f, p in tun if f.labels.app_kind and p.app_kind]
        if app:
            truth = [f.labels.app_kind for f, _ in app]
            pred = [p.app_kind for _, p in app]
            if len(set(truth)) > 1:
                scores["app_macro_f1"] = Metric.macro().score(truth, pred)
                if render:
                    plots.confusion_figure(
                        ConfusionMatrix.from_labels(truth, pred),
                        out / "pipeline_confusion_app.png",
                        title="app classification (routed)")
    return scores


def cmd_dg(args) -> int:
    out = _out_dir(args)
    if args.axis == "dataset":
        specs = _parse_specs(args.specs, 50)
        flows_a = _load_corpus(args.train_pcap, args.train_labels)
        flows_b = _load_corpus(args.test_pcap, args.test_labels)
        report = cross_domain_eval(flows_a, flows_b, specs, alg=args.alg,
                                   seed=args.seed, repeats=args.repeats)
    else:
        stage = Stage.parse(args.stage)
        specs = _parse_specs(args.specs, stage.default_n)
        flows = _load_corpus(args.pcap, args.labels)
        report = mtu_matrix(flows, args.train_mtu,
                            _parse_int_list(args.test_mtus), specs,
                            stage=stage, alg=args.alg, seed=args.seed,
                            repeats=args.repeats)
    payload = report.to_dict()
    payload["meta"] = _meta(args, "dg")
    _write_json(out / "dg.json", payload)
    header, rows = report.pivot_rows()
    _write_table(out / "dg.csv", header, rows, _meta(args, "dg"))
    if not args.no_figures:
        plots.shift_figure(report, out / "dg.png")
        print(f"wrote {out / 'dg.png'}")
    return 0


def cmd_importance(args) -> int:
    out = _out_dir(args)
    stage = Stage.parse(args.stage)
    spec = parse_spec(args.spec, args.n if args.n else stage.default_n)
    flows = _load_corpus(args.pcap, args.labels)
    matrix = build_matrix(flows, spec)
    X, y = stage_dataset(matrix, stage)
    model = learners.fit(args.alg, None, X, y, args.seed)
    importance = learners.mdi_importance(model)
    order = np.argsort(-importance, kind="stable")[: args.top]
    pairs = [(matrix.column_names[i], float(importance[i])) for i in order]
    _write_table(out / "importance.csv", ["feature", "importance"],
                 [[name, f"{value:.9g}"] for name, value in pairs],
                 _meta(args, "importance"))
    if not args.no_figures:
        plots.importance_figure(pairs, out / "importance.png",
                                title=f"{args.alg} MDI, stage {stage.describe()}")
        print(f"wrote {out / 'importance.png'}")
    return 0


def cmd_learncurve(args) -> int:
    out = _out_dir(args)
    stage = Stage.parse(args.stage)
    spec = parse_spec(args.spec, args.n if args.n else stage.default_n)
    flows = _load_corpus(args.pcap, args.labels)
    matrix = build_matrix(flows, spec)
    X, y = stage_dataset(matrix, stage)
    entries = learning_curve(args.alg, learners.default_params(args.alg), X, y,
                             _parse_int_list(args.sizes),
                             test_fraction=args.test_fraction,
                             seed=args.seed, metric=stage.metric(),
                             repeats=args.repeats)
    _write_table(out / "learncurve.csv", ["size", "mean", "ci99"],
                 [[size, f"{mean:.6f}", f"{ci:.6f}"] for size, mean, ci in entries],
                 _meta(args, "learncurve"))
    if not args.no_figures:
        plots.learncurve_figure(entries, out / "learncurve.png",
                                metric_name=stage.metric().name)
        print(f"wrote {out / 'learncurve.png'}")
    return 0


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="tunnelscope",
        description="Tunnel detection and classification experiments on "
                    "packet-capture metadata.")
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)
    subs = {}

    sub = subparsers.add_parser("synth", help="generate a labeled synthetic corpus")
    sub.add_argument("--flows-per-cell", type=int, default=100)
    sub.add_argument("--mtus", default="1500,1472,1420,1400,1300,1200")
    sub.add_argument("--profiles", default=None, help="JSON tunnel/app profile file")
    sub.add_argument("--tag", default="synth", help="dataset tag stamped on labels")
    sub.add_argument("--no-untunneled", action="store_true")
    add_common(sub)
    sub.set_defaults(func=cmd_synth)
    subs["synth"] = sub

    sub = subparsers.add_parser("extract", help="pcap to feature-matrix CSV")
    sub.add_argument("--pcap", nargs="+", required=True)
    sub.add_argument("--labels", default=None, help="label manifest JSON")
    sub.add_argument("--spec", default="fs2")
    sub.add_argument("--n", type=int, default=50)
    sub.add_argument("--out", default="features.csv")
    add_common(sub)
    sub.set_defaults(func=cmd_extract)
    subs["extract"] = sub

    sub = subparsers.add_parser("nestedcv", help="nested cross-validation")
    sub.add_argument("--pcap", nargs="+", required=True)
    sub.add_argument("--labels", required=True)
    sub.add_argument("--stage", default="detection")
    sub.add_argument("--alg", default="rf", choices=learners.ALGORITHM_IDS)
    sub.add_argument("--spec", default="fs2")
    sub.add_argument("--n", type=int, default=0, help="0 = stage default")
    sub.add_argument("--outer-k", type=int, default=5)
    sub.add_argument("--inner-k", type=int, default=3)
    add_common(sub)
    sub.set_defaults(func=cmd_nestedcv)
    subs["nestedcv"] = sub

    sub = subparsers.add_parser("sweep", help="N-first feature sweep")
    sub.add_argument("--pcap", nargs="+", required=True)
    sub.add_argument("--labels", required=True)
    sub.add_argument("--stage", default="detection")
    sub.add_argument("--families", default="signed_size,byte_burst")
    sub.add_argument("--n-values", default="1,2,5,10,20,50")
    sub.add_argument("--algorithms", default="rf,dt")
    sub.add_argument("--k", type=int, default=5)
    add_common(sub)
    sub.set_defaults(func=cmd_sweep)
    subs["sweep"] = sub

    sub = subparsers.add_parser("pipeline", help="train and run the 3-stage chain")
    sub.add_argument("--train-pcap", nargs="+", required=True)
    sub.add_argument("--train-labels", required=True)
    sub.add_argument("--input-pcap", nargs="+", default=None,
                     help="flows to classify; default: held-out 30%% of training")
    sub.add_argument("--input-labels", default=None)
    sub.add_argument("--alg", default="rf", choices=learners.ALGORITHM_IDS)
    sub.add_argument("--n", type=int, default=50)
    sub.add_argument("--app-n", type=int, default=150)
    sub.add_argument("--save-models", action="store_true")
    sub.add_argument("--load-models", default=None, help="models directory")
    add_common(sub)
    sub.set_defaults(func=cmd_pipeline)
    subs["pipeline"] = sub

    sub = subparsers.add_parser("dg", help="domain generalization matrices")
    sub.add_argument("--axis", choices=("dataset", "mtu"), required=True)
    sub.add_argument("--pcap", nargs="+", default=None)
    sub.add_argument("--labels", default=None)
    sub.add_argument("--train-pcap", nargs="+", default=None)
    sub.add_argument("--train-labels", default=None)
    sub.add_argument("--test-pcap", nargs="+", default=None)
    sub.add_argument("--test-labels", default=None)
    sub.add_argument("--train-mtu", type=int, default=1500)
    sub.add_argument("--test-mtus", default="1500,1472,1420,1400,1300,1200")
    sub.add_argument("--stage", default="detection")
    sub.add_argument("--specs",
                     default="signed_size:50;byte_burst:50;netflow_v5:base;netflow_v9:base",
                     help="semicolon-separated feature specs")
    sub.add_argument("--alg", default="rf", choices=learners.ALGORITHM_IDS)
    sub.add_argument("--repeats", type=int, default=5)
    add_common(sub)
    sub.set_defaults(func=cmd_dg)
    subs["dg"] = sub

    sub = subparsers.add_parser("importance", help="MDI feature importance")
    sub.add_argument("--pcap", nargs="+", required=True)
    sub.add_argument("--labels", required=True)
    sub.add_argument("--stage", default="detection")
    sub.add_argument("--alg", default="rf", choices=("rf", "dt"))
    sub.add_argument("--spec", default="fs2")
    sub.add_argument("--n", type=int, default=0, help="0 = stage default")
    sub.add_argument("--top", type=int, default=20)
    add_common(sub)
    sub.set_defaults(func=cmd_importance)
    subs["importance"] = sub

    sub = subparsers.add_parser("learncurve", help="score vs training size")
    sub.add_argument("--pcap", nargs="+", required=True)
    sub.add_argument("--labels", required=True)
    sub.add_argument("--stage", default="detection")
    sub.add_argument("--alg", default="rf", choices=learners.ALGORITHM_IDS)
    sub.add_argument("--sizes", required=True, help="comma-separated training sizes")
    sub.add_argument("--test-fraction", type=float, default=0.3)
    sub.add_argument("--repeats", type=int, default=5)
    sub.add_argument("--spec", default="fs2")
    sub.add_argument("--n", type=int, default=0, help="0 = stage default")
    add_common(sub)
    sub.set_defaults(func=cmd_learncurve)
    subs["learncurve"] = sub

    return parser, subs


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    pre_args, _ = pre.parse_known_args(argv)
    config = {}
    if pre_args.config:
        try:
            config = json.loads(Path(pre_args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            print(f"error: cannot read config {pre_args.config}: {err}",
                  file=sys.stderr)
            return 2

    parser, subs = build_parser()
    if config:
        all_dests = {a.dest for sub in subs.values() for a in sub._actions}
        unknown = set(config) - all_dests
        if unknown:
            print(f"error: unknown config keys {sorted(unknown)}", file=sys.stderr)
            return 2
        for sub in subs.values():
            dests = {a.dest for a in sub._actions}
            sub.set_defaults(**{k: v for k, v in config.items() if k in dests})

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ExperimentError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
