"""Command-line interface: verify | fif | bench | learn-bn | diff.

Every run is replayable: reports depend only on the input files, the
flags and the seed, and are written with fixed key order so two runs can
be diffed byte by byte.  Wall-clock timings are volatile and therefore go
to a ``<out>.timing.json`` sidecar instead of the report itself.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import bayesnet, classifier, fif as fif_mod, metrics, synthbench
from ._dp import current_backend
from .bayesnet import EMPTY_NET
from .errors import FvgmError, InputError
from .metrics import combine_stats

METRIC_NAMES = ("di", "sp", "eo", "pcf")


def _write_json(path, payload) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"malformed JSON in {path}: {e}") from None


def _read_csv(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except pd.errors.ParserError as e:
        raise InputError(f"malformed CSV in {path}: {e}") from None


def _sha256(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _split_names(values) -> list[str]:
    out = []
    for v in values or []:
        out.extend(x.strip() for x in v.split(",") if x.strip())
    return out


def _parse_epsilons(values) -> dict[str, float]:
    out = {}
    for item in values or []:
        if "=" not in item:
            raise InputError(f"--epsilon expects metric=value, got {item!r}")
        name, _, raw = item.partition("=")
        name = name.strip().lower()
        if name not in METRIC_NAMES:
            raise InputError(f"--epsilon metric must be one of {METRIC_NAMES}, got {name!r}")
        try:
            out[name] = float(raw)
        except ValueError:
            raise InputError(f"--epsilon value for {name!r} is not a number: {raw!r}") from None
    return out


def _parse_group(qclf, text: str):
    """Parse "src=1,other=0" into a full sensitive-bit assignment, or
    None for the unconditional "all"."""
    if text.strip().lower() == "all":
        return None
    wanted = {}
    for part in text.split(","):
        if "=" not in part:
            raise InputError(f"--group expects name=value pairs, got {part!r}")
        name, _, raw = part.partition("=")
        try:
            wanted[name.strip()] = float(raw)
        except ValueError:
            raise InputError(f"--group value for {name!r} is not numeric: {raw!r}") from None
    sens = qclf.sensitive_features()
    sources = {f.source for f in sens}
    unknown = sorted(set(wanted) - sources)
    if unknown:
        raise InputError(f"--group names unknown sensitive features: {unknown}")
    missing = sorted(sources - set(wanted))
    if missing:
        raise InputError(f"--group must assign every sensitive feature; missing: {missing}")
    assignment = {}
    for f in sens:
        if f.group is None:
            value = wanted[f.source]
            if value not in (0.0, 1.0):
                raise InputError(f"feature {f.source!r} is Boolean; got {value}")
            assignment[f.name] = int(value)
        else:
            assignment[f.name] = int(f.value == wanted[f.source])
    for source in sources:
        bits = [f for f in sens if f.source == source and f.group is not None]
        if bits and sum(assignment[f.name] for f in bits) != 1:
            raise InputError(
                f"--group value {wanted[source]} is not a category of {source!r}")
    return assignment


@dataclass
class Pipeline:
    """Shared front half of verify/fif: classifier prep, data encoding,
    network selection and marginal estimation."""
    qclf: classifier.QuantizedClassifier
    bool_data: pd.DataFrame | None
    label: str | None
    net: bayesnet.BayesNet
    net_info: dict
    marginals: dict[str, float]
    fidelity: float | None
    classifier_info: dict
    dataset_info: dict | None


def _build_pipeline(args) -> Pipeline:
    clf = classifier.load(args.classifier)
    sensitive = _split_names(getattr(args, "sensitive", None))
    if sensitive:
        names = {f.name for f in clf.features}
        unknown = sorted(set(sensitive) - names)
        if unknown:
            raise InputError(f"--sensitive names unknown features: {unknown}")
        clf = classifier.LinearClassifier(
            tuple(classifier.Feature(f.name,
                                     "sensitive" if f.name in sensitive else "nonsensitive",
                                     f.kind) for f in clf.features),
            clf.weights, clf.bias)
    if not clf.sensitive_features():
        raise InputError("classifier has no sensitive features")

    data = _read_csv(args.data) if args.data else None
    dataset_info = None
    if data is not None:
        dataset_info = {"path": str(args.data), "rows": int(len(data)),
                        "sha256": _sha256(args.data)}

    bins = getattr(args, "bins", "auto")
    multiplier = getattr(args, "multiplier", "auto")
    fidelity = None
    if data is None:
        if any(f.kind != "boolean" for f in clf.features):
            raise InputError("running without --data requires an all-Boolean classifier")
        l = 1 if multiplier == "auto" else int(multiplier)
        bclf = classifier.discretize(
            clf, pd.DataFrame({f.name: [0, 1] for f in clf.features}), 2)[0]
        qclf = classifier.quantize(bclf, l)
        k = None
    else:
        feature_cols = [f.name for f in clf.features]
        missing = sorted(set(feature_cols) - set(data.columns))
        if missing:
            raise InputError(f"dataset is missing feature columns: {missing}")
        if bins == "auto" or multiplier == "auto":
            k_grid = classifier.BIN_GRID if bins == "auto" else [int(bins)]
            l_grid = classifier.MULTIPLIER_GRID if multiplier == "auto" else [int(multiplier)]
            tuned = classifier.tune(clf, data[feature_cols], k_grid=k_grid,
                                    l_grid=l_grid, seed=args.seed)
            k, l, fidelity = tuned.k, tuned.multiplier, tuned.fidelity
        else:
            k, l = int(bins), int(multiplier)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bclf, _ = classifier.discretize(clf, data, k)
        qclf = classifier.quantize(bclf, l)
        agree = (qclf.predict_raw(data) == clf.predict(data)).mean()
        fidelity = float(agree)

    label = getattr(args, "label", None)
    bool_data = None
    if data is not None:
        bool_data = qclf.encode(data)
        if label:
            if label not in data.columns:
                raise InputError(f"dataset has no label column {label!r}")
            bool_data[label] = data[label].to_numpy()

    sensitive_names = [f.name for f in qclf.sensitive_features()]
    feature_names = [f.name for f in qclf.features]
    if getattr(args, "bn", None):
        net = bayesnet.load(args.bn, choice_vars=sensitive_names)
        stray = sorted(net.dag.nodes - set(feature_names))
        if stray:
            raise InputError(f"network nodes are not classifier features: {stray}")
        net_info = {"mode": "loaded", "path": str(args.bn)}
    elif getattr(args, "learn_bn", False):
        if bool_data is None:
            raise InputError("--learn-bn needs --data")
        dag = bayesnet.learn_structure_k2(bool_data[feature_names],
                                          sensitive_names, args.max_parents)
        net = bayesnet.fit_mle(dag, bool_data, args.smoothing)
        net_info = {"mode": "learned", "max_parents": args.max_parents}
    else:
        net = EMPTY_NET
        net_info = {"mode": "independent"}
    net_info["nodes"] = len(net.dag.nodes)
    net_info["edges"] = len(net.dag.edges)

    if bool_data is not None:
        marginals = metrics.estimate_marginals(bool_data, feature_names)
    else:
        marginals = {}

    return Pipeline(
        qclf=qclf, bool_data=bool_data, label=label, net=net, net_info=net_info,
        marginals=marginals, fidelity=fidelity,
        classifier_info={"path": str(args.classifier), "bins": k,
                         "multiplier": qclf.multiplier, "fidelity": fidelity},
        dataset_info=dataset_info,
    )


def _report_to_csv(payload: dict) -> str:
    lines = ["key,value"]

    def walk(prefix, node):
        if isinstance(node, dict):
            for key in sorted(node):
                walk(f"{prefix}.{key}" if prefix else key, node[key])
        elif isinstance(node, list):
            for i, item in enumerate(node):
                walk(f"{prefix}[{i}]", item)
        else:
            lines.append(f"{prefix},{node}")

    walk("", payload)
    return "\n".join(lines) + "\n"


def cmd_verify(args) -> int:
    t_start = time.perf_counter()
    timings = {}
    pipe = _build_pipeline(args)
    timings["prepare_s"] = time.perf_counter() - t_start

    epsilons = _parse_epsilons(args.epsilon)
    mediators = _split_names(args.mediators)
    stats_acc: list = []

    t0 = time.perf_counter()
    mx, mn = metrics.max_min_ppv(pipe.qclf, pipe.net, pipe.marginals,
                                 stats_acc=stats_acc)
    di = metrics.disparate_impact(mx, mn)
    sp = metrics.statistical_parity(mx, mn)

    dag = pipe.net.dag if not pipe.net.is_empty() else None
    eo = None
    if pipe.bool_data is not None and pipe.label:
        eo = metrics.equalized_odds(pipe.qclf, pipe.bool_data, pipe.label,
                                    dag=dag, smoothing=args.smoothing,
                                    stats_acc=stats_acc)
    pcf = None
    if mediators:
        if pipe.bool_data is None:
            raise InputError("--mediators needs --data to refit the mediator law")
        pcf = metrics.path_specific_causal_fairness(
            pipe.qclf, pipe.bool_data, mediators, dag=dag,
            smoothing=args.smoothing, stats_acc=stats_acc)
    timings["solve_s"] = time.perf_counter() - t0

    report = metrics.FairnessReport(
        max_group=mx, min_group=mn, di=di, sp=sp, eo=eo, pcf=pcf,
        epsilon_verdicts={}, stats=combine_stats(stats_acc))
    verdicts = {name: metrics.verify_epsilon(report, name, eps)
                for name, eps in epsilons.items()}

    stats = combine_stats(stats_acc)
    payload = {
        "classifier": pipe.classifier_info,
        "dataset": pipe.dataset_info,
        "network": pipe.net_info,
        "groups": {
            "max": {"assignment": dict(sorted(mx.group.items())), "ppv": mx.ppv},
            "min": {"assignment": dict(sorted(mn.group.items())), "ppv": mn.ppv},
        },
        "metrics": {"di": di, "sp": sp, "eo": eo, "pcf": pcf},
        "epsilon": {name: {"epsilon": epsilons[name], "pass": verdicts[name]}
                    for name in sorted(verdicts)},
        "mediators": sorted(mediators) if mediators else None,
        "solver": {"backend": current_backend(),
                   "memo_entries": stats.memo_entries, "dp_calls": stats.dp_calls},
        "seed": args.seed,
    }
    timings["total_s"] = time.perf_counter() - t_start

    if args.out:
        if args.format == "csv":
            Path(args.out).write_text(_report_to_csv(payload), encoding="utf-8")
        else:
            _write_json(args.out, payload)
        _write_json(str(args.out) + ".timing.json", timings)
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    return 0 if all(verdicts.values()) else 1


def cmd_fif(args) -> int:
    pipe = _build_pipeline(args)
    if args.group is None:
        raise InputError("fif needs --group (a compound group like A=1, or 'all')")
    group = _parse_group(pipe.qclf, args.group)
    subset = _split_names(args.subset)
    if subset:
        results = [fif_mod.fif(pipe.qclf, pipe.net, pipe.marginals, group, subset)]
        base = results[0].base_ppv
    else:
        base, results = fif_mod.fif_all(pipe.qclf, pipe.net, pipe.marginals, group)
    payload = {
        "classifier": pipe.classifier_info,
        "network": pipe.net_info,
        "group": "all" if group is None else dict(sorted(group.items())),
        "base_ppv": base,
        "results": [
            {"subset": list(r.subset), "base_ppv": r.base_ppv,
             "ablated_ppv": r.ablated_ppv, "influence": r.influence}
            for r in results
        ],
        "seed": args.seed,
    }
    if args.out:
        out = Path(args.out)
        if args.format == "csv":
            out.write_text(fif_mod.results_to_csv(results), encoding="utf-8")
        else:
            _write_json(out, payload)
            out.with_suffix(out.suffix + ".csv").write_text(
                fif_mod.results_to_csv(results), encoding="utf-8")
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _bench_classifier(spec: synthbench.SynthSpec) -> classifier.LinearClassifier:
    feats = [classifier.Feature("A", "sensitive", "boolean")]
    feats += [classifier.Feature(f"X{i + 1}", "nonsensitive", "continuous")
              for i in range(spec.n_features - 1)]
    weights = [0.0] + [1.0] * (spec.n_features - 1)
    return classifier.LinearClassifier(tuple(feats), tuple(weights),
                                       spec.label_threshold)


def cmd_bench(args) -> int:
    rows = []
    timing_rows = []
    for trial in range(args.trials):
        t0 = time.perf_counter()
        spec = synthbench.SynthSpec.random(args.features, args.samples,
                                           args.seed + trial)
        data = synthbench.generate(spec)
        clf = _bench_classifier(spec)
        feature_cols = ["A"] + [f"X{i + 1}" for i in range(spec.n_features - 1)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bclf, bool_data = classifier.discretize(clf, data[feature_cols], args.bins)
        qclf = classifier.quantize(bclf, args.multiplier)
        feature_names = [f.name for f in qclf.features]
        marginals = metrics.estimate_marginals(bool_data, feature_names)

        dag = bayesnet.learn_structure_k2(bool_data[feature_names], ["A"],
                                          args.max_parents)
        net = bayesnet.fit_mle(dag, bool_data, args.smoothing)
        stats_acc: list = []
        mx, mn = metrics.max_min_ppv(qclf, net, marginals, stats_acc=stats_acc)
        di_bn = metrics.disparate_impact(mx, mn)
        mx_i, mn_i = metrics.max_min_ppv(qclf, EMPTY_NET, marginals)
        di_ind = metrics.disparate_impact(mx_i, mn_i)
        exact = synthbench.analytic_di([1.0] * (spec.n_features - 1), 0.0,
                                       spec.label_threshold, spec)
        stats = combine_stats(stats_acc)
        rows.append({
            "trial": trial,
            "seed": args.seed + trial,
            "analytic_di": exact,
            "verifier_di": di_bn,
            "independent_di": di_ind,
            "abs_err": abs(di_bn - exact),
            "abs_err_independent": abs(di_ind - exact),
            "bn_edges": len(net.dag.edges),
            "memo_entries": stats.memo_entries,
            "dp_calls": stats.dp_calls,
        })
        timing_rows.append({"trial": trial,
                            "runtime_s": time.perf_counter() - t0})
    agg = {
        "mean_abs_err": float(np.mean([r["abs_err"] for r in rows])),
        "mean_abs_err_independent": float(np.mean([r["abs_err_independent"]
                                                   for r in rows])),
        "trials": args.trials,
    }
    payload = {
        "config": {"features": args.features, "trials": args.trials,
                   "samples": args.samples, "seed": args.seed,
                   "bins": args.bins, "multiplier": args.multiplier,
                   "max_parents": args.max_parents, "smoothing": args.smoothing},
        "trials": rows,
        "aggregate": agg,
    }
    if args.out:
        _write_json(args.out, payload)
        _write_json(str(args.out) + ".timing.json",
                    {"trials": timing_rows,
                     "total_s": sum(t["runtime_s"] for t in timing_rows)})
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def cmd_learn_bn(args) -> int:
    data = _read_csv(args.data)
    sensitive = _split_names(args.sensitive)
    for col in data.columns:
        vals = set(pd.unique(data[col]).tolist())
        if not vals <= {0, 1}:
            raise InputError(
                f"column {col!r} is not Boolean 0/1; encode the dataset first "
                "(e.g. via the verify pipeline)")
    dag = bayesnet.learn_structure_k2(data, sensitive, args.max_parents)
    net = bayesnet.fit_mle(dag, data, args.smoothing)
    bayesnet.save(net, args.out)
    return 0


def _diff_values(a, b, path, out):
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            _diff_values(a.get(key), b.get(key), f"{path}.{key}" if path else key, out)
    elif isinstance(a, (int, float)) and isinstance(b, (int, float)) \
            and not isinstance(a, bool) and not isinstance(b, bool):
        if a != b:
            out[path] = {"a": a, "b": b, "delta": b - a}
    elif a != b:
        out[path] = {"a": a, "b": b}


def cmd_diff(args) -> int:
    a = _read_json(args.report_a)
    b = _read_json(args.report_b)
    out: dict = {}
    _diff_values(a, b, "", out)
    payload = {"report_a": str(args.report_a), "report_b": str(args.report_b),
               "differences": out}
    if args.out:
        _write_json(args.out, payload)
    else:
        print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--classifier", required=True, help="classifier JSON file")
    p.add_argument("--data", help="dataset CSV (raw feature values)")
    p.add_argument("--label", help="ground-truth label column (enables EO)")
    p.add_argument("--sensitive", action="append",
                   help="comma-separated sensitive feature names (overrides file roles)")
    p.add_argument("--bins", default="auto", help="bins per continuous feature, or 'auto'")
    p.add_argument("--multiplier", default="auto", help="integer scale, or 'auto'")
    p.add_argument("--bn", help="load a network JSON instead of assuming independence")
    p.add_argument("--learn-bn", action="store_true", dest="learn_bn",
                   help="learn the network structure and parameters from --data")
    p.add_argument("--max-parents", type=int, default=3, dest="max_parents")
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fvgm",
        description="Exact fairness verification of linear classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="compute fairness metrics and verdicts")
    _add_pipeline_flags(p)
    p.add_argument("--epsilon", action="append",
                   help="metric=value, repeatable (e.g. --epsilon di=0.2)")
    p.add_argument("--mediators", action="append",
                   help="comma-separated mediator features (enables PCF)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fif", help="fairness influence of feature subsets")
    _add_pipeline_flags(p)
    p.add_argument("--group", help="compound group like A=1,race=2, or 'all'")
    p.add_argument("--subset", action="append",
                   help="comma-separated features to ablate together "
                        "(default: per-feature sweep)")
    p.set_defaults(func=cmd_fif)

    p = sub.add_parser("bench", help="synthetic accuracy benchmark")
    p.add_argument("--features", type=int, default=3,
                   help="total features incl. the sensitive bit")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bins", type=int, default=4)
    p.add_argument("--multiplier", type=int, default=50)
    p.add_argument("--max-parents", type=int, default=2, dest="max_parents")
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("learn-bn", help="learn a network from Boolean data")
    p.add_argument("--data", required=True)
    p.add_argument("--sensitive", action="append")
    p.add_argument("--max-parents", type=int, default=3, dest="max_parents")
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn_bn)

    p = sub.add_parser("diff", help="compare two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--out")
    p.set_defaults(func=cmd_diff)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FvgmError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
