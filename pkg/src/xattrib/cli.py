"""Command-line front door.

One subcommand per method plus data generation and a line-oriented
query/revision REPL. Every run resolves its full configuration, writes
it next to the outputs (``resolved_config.json``) and embeds it in the
report, so re-running with ``--config resolved_config.json`` reproduces
the outputs byte for byte (reports carry no timestamps). The env var
``XATTR_SEED`` overrides ``--seed`` when set.

Exit codes: 0 success, 2 usage error, 3 data/model validation error,
4 method-reported failure (e.g. no valid counterfactual).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .counterfactual import CfQuery, generate_cfs
from .data import (barabasi_albert, load_dataset, load_graph, save_dataset,
                   save_graph, synth_credit, synth_recidivism)
from .gradattr import bilinear_upsample, gradcam, integrated_gradients
from .images import overlay, read_pgm, read_ppm, write_pgm, write_ppm
from .lrp import (LrpConfig, check_conservation, gnn_lrp, lrp_propagate,
                  lstm_lrp, perturbation_curve, relevance_map_csv, walks_csv)
from .models import load_model, save_model, tabular_classifier
from .network import predict
from .fuzzy import (CycleConfig, DataColumn, Grounding, KnowledgeBase,
                    ParseError, PredicateHead, eval_formula, parse_formula,
                    parse_kb, parse_kb_line, query_groups, revise, sat,
                    shapley_parity, train_constrained)
from .nle import (MessageHistory, UserModel, Violation, compose_explanation,
                  default_knowledge, default_templates,
                  graph_from_attribution, load_knowledge, load_templates)
from .shapley import (Attribution, BackgroundSet, exact_shapley,
                      sampled_shapley)
from .tensor import ValidationError, XattribError

USAGE_ERROR, DATA_ERROR, METHOD_FAILURE = 2, 3, 4


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value)}")


def _write_json(out_dir, name, payload):
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True,
                  default=_json_default)
        fh.write("\n")
    return path


def _report(args, config, result):
    return {
        "schema": 1,
        "tool": "xattrib",
        "version": __version__,
        "seed": config.get("seed"),
        "command": args.command,
        "config": config,
        "result": result,
    }


def _resolve_config(args, defaults):
    """Precedence: explicit flag > --config file > built-in default.
    Parser defaults are all None so a given flag is distinguishable."""
    config = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            stored = json.load(fh)
        if stored.get("command", args.command) != args.command:
            raise ValidationError(
                f"config file is for {stored.get('command')!r}, not "
                f"{args.command!r}"
            )
        for key, value in stored.get("config", stored).items():
            if key in config or key == "seed":
                config[key] = value
    for key in defaults:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            config[key] = value
    env_seed = os.environ.get("XATTR_SEED")
    if "seed" in config and env_seed is not None:
        config["seed"] = int(env_seed)
    config["command"] = args.command
    return config


def _require(config, *keys):
    for key in keys:
        if config.get(key) in (None, ""):
            raise ValidationError(f"--{key} is required")


def _finish(args, config, result, extra_name=None):
    os.makedirs(args.out, exist_ok=True)
    _write_json(args.out, "resolved_config.json",
                {"command": args.command, "config": config})
    _write_json(args.out, extra_name or "report.json",
                _report(args, config, result))
    return 0


def _load_image(path):
    if path.endswith(".ppm"):
        rgb = read_ppm(path)
        return np.transpose(rgb, (2, 0, 1))
    grid = read_pgm(path)
    return grid[None, :, :]


def _dataset_grounding(net, data):
    """Default symbol bindings: P is the model head, Label the label
    column, capitalized feature names are crisp predicates when their
    values fit in [0, 1]; xpos/xneg index the labeled rows."""
    predicates = {"P": PredicateHead(), "Label": DataColumn("label")}
    for name in data.feature_names:
        col = data.column(name)
        if col.min() >= 0.0 and col.max() <= 1.0:
            predicates[name[:1].upper() + name[1:]] = DataColumn(name)
    variables = {
        "xpos": np.flatnonzero(data.labels == 1.0),
        "xneg": np.flatnonzero(data.labels == 0.0),
    }
    return Grounding(predicates=predicates, variables=variables)


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_gen_data(args):
    config = _resolve_config(args, {"kind": "credit", "rows": 1000,
                                    "bias": 0.0, "n": 30, "m": 2,
                                    "seed": 0})
    kind = config["kind"]
    os.makedirs(args.out, exist_ok=True)
    if kind == "credit":
        ds = synth_credit(config["rows"], seed=config["seed"])
        save_dataset(ds, os.path.join(args.out, "credit.csv"))
        result = {"file": "credit.csv", "rows": ds.n_rows,
                  "positive_rate": float(ds.labels.mean())}
    elif kind == "recidivism":
        ds = synth_recidivism(config["rows"], config["bias"],
                              seed=config["seed"])
        save_dataset(ds, os.path.join(args.out, "recidivism.csv"))
        result = {"file": "recidivism.csv", "rows": ds.n_rows,
                  "positive_rate": float(ds.labels.mean())}
    elif kind == "graph":
        graph = barabasi_albert(config["n"], config["m"],
                                seed=config["seed"])
        save_graph(graph, os.path.join(args.out, "graph.json"))
        result = {"file": "graph.json", "nodes": graph.n_nodes,
                  "edges": graph.n_edges}
    else:
        raise ValidationError(f"unknown data kind {kind!r}")
    return _finish(args, config, result)


def cmd_shap(args):
    config = _resolve_config(args, {"model": None, "data": None,
                                    "row": 0, "background": 50,
                                    "output-index": 0, "exact": False,
                                    "permutations": 200, "seed": 0})
    _require(config, "model", "data")
    net = load_model(config["model"])
    data = load_dataset(config["data"])
    row = data.rows[config["row"]]
    rng = np.random.default_rng(config["seed"])
    bg_idx = rng.choice(data.n_rows,
                        size=min(config["background"], data.n_rows),
                        replace=False)
    bg = BackgroundSet(data.rows[bg_idx])
    if config["exact"]:
        attr = exact_shapley(net, row, bg, out=config["output-index"],
                             feature_names=data.feature_names)
    else:
        attr = sampled_shapley(net, row, bg, out=config["output-index"],
                               n_permutations=config["permutations"],
                               seed=config["seed"],
                               feature_names=data.feature_names)
    return _finish(args, config, attr.to_record(), "attribution.json")


def cmd_cf(args):
    config = _resolve_config(args, {"model": None, "data": None,
                                    "row": 0, "k": 3, "desired": 1,
                                    "immutable": "", "lambda1": 0.5,
                                    "lambda2": 1.0, "learning-rate": 0.05,
                                    "max-iters": 2000, "seed": 0})
    _require(config, "model", "data")
    net = load_model(config["model"])
    data = load_dataset(config["data"])
    row = data.rows[config["row"]]
    immutable = []
    if config["immutable"]:
        immutable = [data.feature_index(name.strip())
                     for name in config["immutable"].split(",")]
    ranges = np.array([data.ranges()[n] for n in data.feature_names])
    spread = np.maximum(ranges[:, 1] - ranges[:, 0], 1e-9)
    ranges = np.column_stack([ranges[:, 0] - 0.05 * spread,
                              ranges[:, 1] + 0.05 * spread])
    integer_features = [i for i, kind in enumerate(data.kinds)
                        if kind in ("integer", "categorical")]
    query = CfQuery(x=row, desired_class=config["desired"],
                    k=config["k"], lambda1=config["lambda1"],
                    lambda2=config["lambda2"], immutable=immutable,
                    ranges=ranges, integer_features=integer_features,
                    learning_rate=config["learning-rate"],
                    max_iters=config["max-iters"], seed=config["seed"])
    cfs = generate_cfs(net, query)
    code = _finish(args, config, cfs.to_record(), "counterfactuals.json")
    if not cfs.valid.any():
        return METHOD_FAILURE
    return code


def cmd_gradcam(args):
    config = _resolve_config(args, {"model": None, "image": None,
                                    "target-class": 0, "upsample": False,
                                    "seed": 0})
    _require(config, "model", "image")
    net = load_model(config["model"])
    image = _load_image(config["image"])
    heatmap = gradcam(net, image, config["target-class"])
    os.makedirs(args.out, exist_ok=True)
    write_pgm(os.path.join(args.out, "heatmap.pgm"), heatmap.grid)
    result = {
        "heatmap": "heatmap.pgm",
        "grid_shape": list(heatmap.grid.shape),
        "layer_index": heatmap.layer_index,
        "target_class": heatmap.target_class,
    }
    if config["upsample"]:
        up = bilinear_upsample(heatmap.grid, image.shape[1], image.shape[2])
        gray = image.mean(axis=0)
        write_ppm(os.path.join(args.out, "overlay.ppm"), overlay(gray, up))
        result["overlay"] = "overlay.ppm"
    return _finish(args, config, result)


def cmd_ig(args):
    config = _resolve_config(args, {"model": None, "data": None,
                                    "row": 0, "baseline-row": None,
                                    "steps": 512, "output-index": 0,
                                    "seed": 0})
    _require(config, "model", "data")
    net = load_model(config["model"])
    data = load_dataset(config["data"])
    row = data.rows[config["row"]]
    baseline = None
    if config["baseline-row"] is not None and config["baseline-row"] >= 0:
        baseline = data.rows[config["baseline-row"]]
    res = integrated_gradients(net, row, baseline,
                               out=config["output-index"],
                               steps=config["steps"])
    result = {
        "attributions": res.attributions.tolist(),
        "baseline": res.baseline.tolist(),
        "feature_names": data.feature_names,
        "steps": res.steps,
        "delta": res.delta,
        "completeness_gap": res.completeness_gap,
    }
    return _finish(args, config, result, "ig.json")


def cmd_lrp(args):
    config = _resolve_config(args, {"model": None, "data": None,
                                    "row": 0, "image": None,
                                    "output-index": 0, "epsilon": 1e-6,
                                    "gamma": 0.25, "rule": "epsilon",
                                    "input-rule": None, "seed": 0})
    _require(config, "model")
    net = load_model(config["model"])
    if config["image"]:
        x = _load_image(config["image"])
    else:
        data = load_dataset(config["data"])
        x = data.rows[config["row"]]
    cfg = LrpConfig(rules={"dense": config["rule"],
                           "conv2d": config["rule"]},
                    input_rule=config["input-rule"] or None,
                    epsilon=config["epsilon"], gamma=config["gamma"])
    rmap = lrp_propagate(net, x, config["output-index"], cfg)
    os.makedirs(args.out, exist_ok=True)
    relevance_map_csv(rmap, os.path.join(args.out, "relevance.csv"))
    conservation = check_conservation(rmap)
    result = {
        "relevance_csv": "relevance.csv",
        "input_relevance": np.asarray(rmap.input_relevance).tolist(),
        "layer_sums": conservation["layer_sums"],
        "max_deviation": conservation["max_deviation"],
        "min_input_relevance": conservation["min_input_relevance"],
    }
    return _finish(args, config, result)


def cmd_gnnlrp(args):
    config = _resolve_config(args, {"model": None, "graph": None,
                                    "output-index": 0, "gamma": 0.0,
                                    "seed": 0})
    _require(config, "model", "graph")
    net = load_model(config["model"])
    graph = load_graph(config["graph"])
    walks = gnn_lrp(net, graph, out=config["output-index"],
                    gamma=config["gamma"])
    os.makedirs(args.out, exist_ok=True)
    walks_csv(walks, os.path.join(args.out, "walks.csv"))
    f = predict(net, graph.features,
                laplacian=graph.laplacian)[config["output-index"]]
    result = {
        "walks_csv": "walks.csv",
        "walk_count": len(walks),
        "walk_sum": float(sum(w.score for w in walks)),
        "model_output": float(f),
        # which propagation matrix the walks were enumerated over
        "laplacian": "symmetric-normalized with self-loops",
    }
    return _finish(args, config, result)


def cmd_perturb(args):
    config = _resolve_config(args, {"model": None, "tokens": None,
                                    "data": None, "row": 0,
                                    "n-remove": 3, "output-index": 0,
                                    "seed": 0})
    _require(config, "model")
    net = load_model(config["model"])
    if config["tokens"]:
        x = np.array([float(t) for t in config["tokens"].split(",")])
        relevances = lstm_lrp(net, x, config["output-index"])
        neutral = 0.0
    else:
        data = load_dataset(config["data"])
        x = data.rows[config["row"]]
        rmap = lrp_propagate(net, x, config["output-index"])
        relevances = np.asarray(rmap.input_relevance)
        neutral = data.rows.mean(axis=0)
    curve = perturbation_curve(net, x, relevances, config["n-remove"],
                               neutral=neutral,
                               out=config["output-index"])
    result = {
        "scores": curve.tolist(),
        "relevances": np.asarray(relevances).tolist(),
    }
    return _finish(args, config, result, "perturbation.json")


def _kb_from_file(path, p):
    with open(path, encoding="utf-8") as fh:
        formulas = parse_kb(fh.read())
    return KnowledgeBase(formulas=formulas, p=p)


def cmd_ltn_train(args):
    config = _resolve_config(args, {"data": None, "kb": None,
                                    "hidden": "", "epochs": 300,
                                    "lr": 1.0, "p": 2.0, "seed": 0})
    _require(config, "data", "kb")
    data = load_dataset(config["data"])
    hidden = tuple(int(h) for h in config["hidden"].split(",")
                   if h.strip()) if config["hidden"] else ()
    net = tabular_classifier(data.rows, hidden=hidden,
                             seed=config["seed"])
    kb = _kb_from_file(config["kb"], config["p"])
    grounding = _dataset_grounding(net, data)
    result = train_constrained(net, kb, grounding, data,
                               epochs=config["epochs"], lr=config["lr"],
                               seed=config["seed"], freeze=(0,))
    os.makedirs(args.out, exist_ok=True)
    save_model(result.net, os.path.join(args.out, "model.txt"))
    payload = {
        "model": "model.txt",
        "diverged": result.diverged,
        "trajectory": [r.to_record() for r in result.trajectory],
    }
    return _finish(args, config, payload, "training.json")


def cmd_ltn_query(args):
    config = _resolve_config(args, {"model": None, "data": None,
                                    "formula": None, "groups": None,
                                    "bins": 3, "p": 2.0, "seed": 0})
    _require(config, "model", "data")
    net = load_model(config["model"])
    data = load_dataset(config["data"])
    grounding = _dataset_grounding(net, data)
    result = {}
    if config["formula"]:
        formula = parse_formula(config["formula"])
        result["formula"] = config["formula"]
        result["degree"] = eval_formula(formula, grounding, data, net,
                                        p=config["p"])
    if config["groups"]:
        report = query_groups(net, data, config["groups"], config["bins"])
        result["groups"] = report.to_record()
    if not result:
        raise ValidationError("nothing to query: pass --formula and/or "
                              "--groups")
    return _finish(args, config, result, "query.json")


def cmd_ltn_revise(args):
    config = _resolve_config(args, {"model": None, "data": None,
                                    "kb": None, "constraint": None,
                                    "constraint-weight": 1.5,
                                    "epochs": 100, "lr": 1.0,
                                    "protected": "protected", "bins": 3,
                                    "p": 2.0, "seed": 0})
    _require(config, "model", "data", "kb")
    net = load_model(config["model"])
    data = load_dataset(config["data"])
    kb = _kb_from_file(config["kb"], config["p"])
    grounding = _dataset_grounding(net, data)
    constraints = [parse_formula(c) for c in (config["constraint"] or [])]
    cycle = CycleConfig(epochs=config["epochs"], lr=config["lr"],
                        constraint_weight=config["constraint-weight"],
                        bins=config["bins"], protected=config["protected"],
                        seed=config["seed"], freeze=(0,))
    result = revise(net, kb, constraints, data, grounding, cycle)
    os.makedirs(args.out, exist_ok=True)
    save_model(result.net, os.path.join(args.out, "model.txt"))
    payload = result.to_record()
    payload["model"] = "model.txt"
    return _finish(args, config, payload, "revision.json")


def cmd_nle(args):
    config = _resolve_config(args, {"attribution": None,
                                    "violation": None, "user": None,
                                    "knowledge": None, "templates": None,
                                    "seed": 0})
    _require(config, "attribution", "violation")
    with open(config["attribution"], encoding="utf-8") as fh:
        record = json.load(fh)
    attr = Attribution.from_record(
        record["result"] if "result" in record else record
    )
    with open(config["violation"], encoding="utf-8") as fh:
        violation = Violation(**json.load(fh))
    user = UserModel()
    if config["user"]:
        with open(config["user"], encoding="utf-8") as fh:
            raw = json.load(fh)
        user = UserModel(age=raw.get("age", 40),
                         vegetarian=raw.get("vegetarian", False),
                         persuasion_goals=raw.get("persuasion_goals", {}),
                         barriers=tuple(raw.get("barriers", ())))
    knowledge = load_knowledge(config["knowledge"]) if config["knowledge"] \
        else default_knowledge()
    templates = load_templates(config["templates"]) if config["templates"] \
        else default_templates()
    graph = graph_from_attribution(attr, knowledge, user)
    history = MessageHistory()
    message = compose_explanation(graph, violation, user, history,
                                  knowledge, templates)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "message.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(message.text + "\n")
    result = {
        "message": message.text,
        "feedback": message.feedback,
        "argument": message.argument,
        "suggestion": message.suggestion,
        "suggestion_omitted": message.suggestion_omitted,
        "graph": graph.to_record(),
    }
    return _finish(args, config, result, "explanation.json")


# ---------------------------------------------------------------------------
# REPL


def _repl_parity(net, data, feature, seed):
    return shapley_parity(net, data, feature, seed=seed)


def cmd_repl(args, stdin=None, stdout=None):
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    config = _resolve_config(args, {"model": None, "data": None,
                                    "kb": None, "p": 2.0, "lr": 1.0,
                                    "seed": 0})
    _require(config, "model", "data")
    net = load_model(config["model"])
    data = load_dataset(config["data"])
    kb = _kb_from_file(config["kb"], config["p"]) if config["kb"] else \
        KnowledgeBase(formulas=[], p=config["p"])
    grounding = _dataset_grounding(net, data)
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "session.log")
    log = open(log_path, "w", encoding="utf-8")

    def emit(text):
        stdout.write(text + "\n")
        log.write(text + "\n")

    emit(f"xattrib repl (model={os.path.basename(config['model'])}, "
         f"rows={data.n_rows})")
    try:
        for raw in stdin:
            line = raw.strip()
            if not line:
                continue
            log.write(f"> {line}\n")
            command, _, rest = line.partition(" ")
            try:
                if command == "quit":
                    emit("bye")
                    return 0
                elif command == "query":
                    formula = parse_formula(rest)
                    degree = eval_formula(formula, grounding, data, net,
                                          p=config["p"])
                    emit(f"degree {degree:.12g}")
                elif command == "groups":
                    parts = rest.split()
                    feature = parts[0]
                    bins = int(parts[1]) if len(parts) > 1 else 3
                    report = query_groups(net, data, feature, bins)
                    for b in report.bins:
                        eq = ("NA" if b.equivalence is None
                              else f"{b.equivalence:.6f}")
                        emit(f"bin {b.index}: n={b.n_protected}/"
                             f"{b.n_unprotected} equivalence={eq}"
                             + (f" [{b.flag}]" if b.flag else ""))
                elif command == "assert":
                    formula, weight = parse_kb_line(rest)
                    kb = KnowledgeBase(
                        formulas=list(kb.formulas) + [(formula, weight)],
                        p=kb.p, p_exists=kb.p_exists,
                    )
                    emit(f"asserted (weight {weight}); kb size "
                         f"{len(kb.formulas)}")
                elif command == "retrain":
                    epochs = int(rest.strip() or "50")
                    result = train_constrained(net, kb, grounding, data,
                                               epochs=epochs,
                                               lr=config.get("lr", 1.0),
                                               seed=config["seed"],
                                               freeze=(0,))
                    net = result.net
                    emit(f"retrained {epochs} epochs; sat "
                         f"{result.trajectory[-1].aggregate:.6f}")
                elif command == "parity":
                    value = _repl_parity(net, data, rest.strip(),
                                         config["seed"])
                    emit(f"parity {value:.6g}")
                elif command == "sat":
                    report = sat(kb, grounding, data, net)
                    emit(f"sat {report.aggregate:.6f}")
                elif command == "save":
                    path = rest.strip()
                    if os.path.isabs(path):
                        raise ValidationError(
                            "save paths are relative to --out"
                        )
                    save_model(net, os.path.join(args.out, path))
                    emit(f"saved {path}")
                else:
                    emit(f"unknown command {command!r}; commands: query, "
                         "groups, assert, retrain, parity, sat, save, quit")
            except ParseError as exc:
                emit(f"parse error: {exc}")
            except XattribError as exc:
                emit(f"error: {exc}")
        return 0
    finally:
        log.close()


# ---------------------------------------------------------------------------
# parser


def _add_common(sub):
    sub.add_argument("--out", required=True,
                     help="output directory (all files go here)")
    sub.add_argument("--config", help="replay a resolved_config.json")
    sub.add_argument("--seed", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="xattrib",
        description="explainability toolkit: attribution, counterfactuals, "
                    "heatmaps, relevance propagation, fuzzy model revision "
                    "and template explanations",
    )
    parser.add_argument("--version", action="version",
                        version=f"xattrib {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-data", help="synthetic datasets and graphs")
    p.add_argument("--kind", choices=["credit", "recidivism", "graph"],
                   default=None)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--bias", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_gen_data)

    p = subs.add_parser("shap", help="Shapley attribution for one row")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--row", type=int, default=None)
    p.add_argument("--background", type=int, default=None)
    p.add_argument("--output-index", type=int, default=None)
    p.add_argument("--exact", action="store_true", default=None)
    p.add_argument("--permutations", type=int, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_shap)

    p = subs.add_parser("cf", help="diverse counterfactuals for one row")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--row", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--desired", type=int, default=None)
    p.add_argument("--immutable", default=None)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_cf)

    p = subs.add_parser("gradcam", help="class activation heatmap")
    p.add_argument("--model")
    p.add_argument("--image", help="PGM or PPM file")
    p.add_argument("--target-class", type=int, default=None)
    p.add_argument("--upsample", action="store_true", default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_gradcam)

    p = subs.add_parser("ig", help="integrated gradients for one row")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--row", type=int, default=None)
    p.add_argument("--baseline-row", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--output-index", type=int, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_ig)

    p = subs.add_parser("lrp", help="layer-wise relevance propagation")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--row", type=int, default=None)
    p.add_argument("--image")
    p.add_argument("--output-index", type=int, default=None)
    p.add_argument("--rule", choices=["epsilon", "gamma"],
                   default=None)
    p.add_argument("--input-rule", choices=["w2"], default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_lrp)

    p = subs.add_parser("gnnlrp", help="walk relevances for a graph net")
    p.add_argument("--model")
    p.add_argument("--graph")
    p.add_argument("--output-index", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_gnnlrp)

    p = subs.add_parser("perturb", help="perturbation curve")
    p.add_argument("--model")
    p.add_argument("--tokens", help="comma-separated token ids")
    p.add_argument("--data")
    p.add_argument("--row", type=int, default=None)
    p.add_argument("--n-remove", type=int, default=None)
    p.add_argument("--output-index", type=int, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_perturb)

    p = subs.add_parser("ltn-train", help="satisfiability training")
    p.add_argument("--data")
    p.add_argument("--kb")
    p.add_argument("--hidden", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--p", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_ltn_train)

    p = subs.add_parser("ltn-query", help="formula degree / group report")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--formula")
    p.add_argument("--groups", help="protected feature name")
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--p", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_ltn_query)

    p = subs.add_parser("ltn-revise", help="constraint revision cycle")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--kb")
    p.add_argument("--constraint", action="append")
    p.add_argument("--constraint-weight", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--protected", default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--p", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_ltn_revise)

    p = subs.add_parser("nle", help="render a natural-language explanation")
    p.add_argument("--attribution",
                   help="attribution.json from the shap subcommand")
    p.add_argument("--violation", help="violation JSON")
    p.add_argument("--user", help="user model JSON")
    p.add_argument("--knowledge", help="knowledge table text file")
    p.add_argument("--templates", help="template tree text file")
    _add_common(p)
    p.set_defaults(handler=cmd_nle)

    p = subs.add_parser("repl", help="interactive query/revision session")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--kb")
    p.add_argument("--p", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_repl)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    try:
        return args.handler(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except XattribError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def main():
    sys.exit(run())
