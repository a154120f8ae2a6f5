"""Command-line interface: ``polynet <subcommand> [flags]``.

Every run writes one JSON manifest (subcommand, resolved configuration,
seed, paths, wall-clock time and a result summary).  Typed failures exit
with status 1 and a JSON error object on stderr; usage errors exit with 2.
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

logger = logging.getLogger("polynet")


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int | None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    started_at: str = ""
    wall_clock_seconds: float = 0.0
    status: str = "ok"
    summary: dict = field(default_factory=dict)

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(obj):
    import numpy as np

    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _load_json(path_or_text):
    text = path_or_text.strip()
    if text.startswith("{") or text.startswith("["):
        return json.loads(text)
    with open(path_or_text) as fh:
        return json.load(fh)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pair(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers, e.g. 1,10")
    return tuple(parts)


def _ints(text):
    return [int(p) for p in text.split(",")]


def _common(parser):
    g = parser.add_argument_group("common")
    g.add_argument("--data", help="labelled CSV (x0..x{d-1},label)")
    g.add_argument("--out", help="main output file")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--eta", type=float, help="step size")
    g.add_argument("--iters", type=int, help="iterations (steps per epoch for search)")
    g.add_argument("--lambda", dest="lambdas", type=_pair, help="class weights lambda0,lambda1")
    g.add_argument("--lambda-scale", type=float, default=2.0)
    g.add_argument("--acc-th", type=float, help="target accuracy")
    g.add_argument("--width", type=_ints, help="hidden width (comma list where several are needed)")
    g.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    g.add_argument("--config", help="JSON file with flag defaults; explicit flags win")
    g.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")


def build_parser():
    parser = _Parser(prog="polynet", description="Polytope-basis covers and ReLU networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a dataset CSV")
    _common(p)
    p.add_argument("--kind", default="swiss_roll", help="synthetic kind, or 'mnist' with --source")
    p.add_argument("--n", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--source", help="MNIST-format directory for --kind mnist")
    p.add_argument("--target-class", type=int, default=0)
    p.add_argument("--label-noise", type=float, default=0.0)

    p = sub.add_parser("construct", help="cover JSON -> network JSON")
    _common(p)
    p.add_argument("--cover", help="cover JSON file")
    p.add_argument("--reference", help="use a built-in cover: two_triangles, hexagon_pentagon, swiss_roll")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--safety", type=float, default=10.0)

    p = sub.add_parser("bounds", help="width-bound profile JSON -> report JSON")
    _common(p)
    p.add_argument("--profile", required=False, help="profile JSON file or inline JSON")

    p = sub.add_parser("train", help="gradient descent on a fresh network")
    _common(p)
    p.add_argument("--arch", choices=["two", "three"], default="two")
    p.add_argument("--subnets", type=int, default=4, help="subnet count for --arch three")
    p.add_argument("--epochs", type=int, default=5, help="compression epochs for --arch three")
    p.add_argument("--loss", choices=["mse", "bce", "weighted_bce"], default="bce")
    p.add_argument("--init-scale", type=float, default=None,
                   help="init weight scale (default 0.5 for random, 1.0 for tangent)")
    p.add_argument("--init", choices=["tangent", "random"], default="tangent",
                   help="three-layer init: polytopes around data points, or balanced random neurons")
    p.add_argument("--prune", action="store_true", help="prune settled subnets to their fixpoint")
    p.add_argument("--trace", help="telemetry CSV path")
    p.add_argument("--figure", help="render the loss trace to this image file")

    p = sub.add_parser("compress", help="prune a constrained network to its fixpoint")
    _common(p)
    p.add_argument("--net", help="network JSON")
    p.add_argument("--report", help="compression report JSON path")
    p.add_argument("--literal", action="store_true", help="flag the covering neuron instead of the covered one")

    p = sub.add_parser("extract", help="network + data -> cover JSON")
    _common(p)
    p.add_argument("--net", help="network JSON")

    p = sub.add_parser("search", help="sequential cover search on a dataset")
    _common(p)
    p.add_argument("--max-polytopes", type=int, default=12)
    p.add_argument("--max-width", type=int, default=12)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--figure", help="render data and cover to this image file")

    p = sub.add_parser("verify", help="check that a cover (or a network's sign) labels a dataset correctly")
    _common(p)
    p.add_argument("--cover", help="cover JSON file")
    p.add_argument("--net", help="network JSON; checked instead of a cover")
    p.add_argument("--reference", help="check a built-in cover instead of a file")

    p = sub.add_parser("grid", help="decision-boundary grid CSV of a network or cover")
    _common(p)
    p.add_argument("--net", help="network JSON")
    p.add_argument("--cover", help="cover JSON file")
    p.add_argument("--bounds", type=lambda s: [float(v) for v in s.split(",")],
                   help="xmin,xmax,ymin,ymax (default: data box padded 10%%)")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--figure", help="render the grid to this image file")

    p = sub.add_parser("guided", help="guided-descent loss trace on the square fixture")
    _common(p)
    p.add_argument("--loss", choices=["mse", "bce"], default="mse")
    p.add_argument("--rho", type=float, default=0.01)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--radius", type=float, default=0.1, help="height cap R")
    p.add_argument("--v0", type=float, help="initial output bias (default: inside the admissible window)")
    p.add_argument("--stop-below", type=float, default=1e-10)
    p.add_argument("--figure", help="render the loss trace to this image file")
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = _load_json(args.config)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(defaults, dict):
            raise UsageError("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(k.replace("-", "_") for k in defaults) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in defaults.items()})
        args = parser.parse_args(argv)
    return args


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required flag(s) " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _load_data(path):
    from polynet.data import load_csv

    return load_csv(path)


def _load_cover(path):
    from polynet.geometry import PolytopeBasisCover

    return PolytopeBasisCover.from_dict(_load_json(path))


def _load_net(path):
    from polynet.networks import network_from_dict

    return network_from_dict(_load_json(path))


def _default_out(args, suffix):
    return args.out or f"polynet-{args.command}{suffix}"


def cmd_gen(args, m):
    from polynet.data import SYNTHETIC_KINDS, binarize, gen_synthetic, load_mnist_dir, save_csv

    if args.kind == "mnist":
        _need(args, "source")
        X, labels = load_mnist_dir(args.source)
        data = binarize(X, labels, args.target_class, noise=args.label_noise, seed=args.seed)
        m.inputs["source"] = args.source
    elif args.kind in SYNTHETIC_KINDS:
        data = gen_synthetic(args.kind, args.n, args.noise, args.seed)
    else:
        raise UsageError(f"unknown --kind {args.kind!r}; choose from {SYNTHETIC_KINDS + ('mnist',)}")
    out = _default_out(args, ".csv")
    save_csv(data, out)
    m.outputs["data"] = out
    m.summary = {"n": data.n, "dim": data.dim, "positives": int(data.y.sum())}


def cmd_construct(args, m):
    from polynet.construction import ConstructionConfig, cover_network
    from polynet.data import reference_cover

    if args.reference:
        cover = reference_cover(args.reference)
        m.inputs["reference"] = args.reference
    else:
        _need(args, "cover")
        cover = _load_cover(args.cover)
        m.inputs["cover"] = args.cover
    data = _load_data(args.data) if args.data else None
    cfg = ConstructionConfig(epsilon=args.epsilon, safety=args.safety, seed=args.seed)
    net = cover_network(cover, cfg, data)
    out = _default_out(args, ".json")
    _dump_json(net.to_dict(), out)
    m.outputs["net"] = out
    m.summary = {"architecture": list(net.architecture), "faces": cover.n_faces}
    if data is not None:
        m.inputs["data"] = args.data
        m.summary["accuracy"] = float(((net.forward(data.X) > 0) == (data.y == 1)).mean())


def cmd_bounds(args, m):
    from polynet.bounds import report_from_profile

    _need(args, "profile")
    report = report_from_profile(_load_json(args.profile))
    out = _default_out(args, ".json")
    _dump_json(report.to_dict(), out)
    m.inputs["profile"] = args.profile
    m.outputs["report"] = out
    m.summary = report.to_dict()


def cmd_train(args, m):
    import numpy as np

    from polynet.networks import ThreeLayerSumNet, TwoLayerNet, init_implicit_bias
    from polynet.training import TrainConfig, init_tangent_sum_net, train, train_with_compression, write_trace_csv

    _need(args, "data")
    data = _load_data(args.data)
    width = (args.width or [20])[0]
    eta = 0.1 if args.eta is None else args.eta
    iters = 1000 if args.iters is None else args.iters
    rng = np.random.default_rng(args.seed)
    if args.arch == "two":
        s = 0.5 if args.init_scale is None else args.init_scale
        net = TwoLayerNet(0.0, rng.normal(0, s, width), rng.normal(0, s, (width, data.dim)),
                          rng.normal(0, s, width))
        lam0, lam1 = args.lambdas or (1.0, 1.0)
        cfg = TrainConfig(eta=eta, iterations=iters, loss=args.loss, lambda0=lam0, lambda1=lam1)
        net, trace = train(net, data, cfg)
        m.summary = {"final_loss": trace[-1].loss, "accuracy": trace[-1].accuracy}
    else:
        if args.init == "tangent":
            scale = 1.0 if args.init_scale is None else args.init_scale
            net = init_tangent_sum_net(data, args.subnets, width, scale, seed=args.seed)
        else:
            scale = 0.5 if args.init_scale is None else args.init_scale
            subnets = [init_implicit_bias(width, data.dim, scale, args.seed + j) for j in range(args.subnets)]
            net = ThreeLayerSumNet([1 if j % 2 == 0 else -1 for j in range(args.subnets)], subnets)
        res = train_with_compression(net, data, args.epochs, iters, eta, args.lambda_scale, prune=args.prune)
        net, trace = res.net, res.trace
        m.summary = {"final_loss": trace[-1].loss, "widths": net.widths, "fixpoint_passes": res.fixpoint_passes,
                     "accuracy": float(((net.forward(data.X) > 0) == (data.y == 1)).mean())}
    out = _default_out(args, ".json")
    _dump_json(net.to_dict(), out)
    m.inputs["data"] = args.data
    m.outputs["net"] = out
    if args.trace:
        write_trace_csv(trace, args.trace)
        m.outputs["trace"] = args.trace
    if args.figure:
        from polynet.plotting import plot_trace

        plot_trace(args.figure, [r.step for r in trace], [r.loss for r in trace], title=f"{args.arch}-layer training")
        m.outputs["figure"] = args.figure


def cmd_compress(args, m):
    from polynet.compression_extraction import compress_to_fixpoint
    from polynet.networks import ConstrainedTwoLayerNet, ThreeLayerSumNet

    _need(args, "net", "data")
    net, data = _load_net(args.net), _load_data(args.data)
    reports = []
    if isinstance(net, ConstrainedTwoLayerNet):
        net, reps = compress_to_fixpoint(net, data, args.lambda_scale, literal=args.literal)
        reports.append([r.to_dict() for r in reps])
    elif isinstance(net, ThreeLayerSumNet) and net.is_constrained:
        for j, T in enumerate(net.subnets):
            if T.width:
                net.subnets[j], reps = compress_to_fixpoint(T, data, args.lambda_scale, literal=args.literal)
                reports.append([r.to_dict() for r in reps])
    else:
        from polynet.errors import ValidationError

        raise ValidationError("compress needs a constrained two-layer or three-layer sum network")
    out = _default_out(args, ".json")
    _dump_json(net.to_dict(), out)
    m.inputs.update(net=args.net, data=args.data)
    m.outputs["net"] = out
    if args.report:
        _dump_json(reports, args.report)
        m.outputs["report"] = args.report
    m.summary = {"passes": [len(r) for r in reports], "width_after": net.width}


def cmd_extract(args, m):
    import numpy as np

    from polynet.compression_extraction import extract_cover_three_layer, extract_cover_two_layer
    from polynet.errors import ValidationError
    from polynet.networks import ThreeLayerSumNet, TwoLayerNet

    _need(args, "net", "data")
    net, data = _load_net(args.net), _load_data(args.data)
    if isinstance(net, ThreeLayerSumNet):
        cover = extract_cover_three_layer(net, data)
        m.summary = {"method": "three_layer"}
    elif isinstance(net, TwoLayerNet):
        cover, rounds = extract_cover_two_layer(net, data)
        m.summary = {"method": "two_layer", "rounds": rounds}
    else:
        raise ValidationError("extract needs a two-layer or three-layer sum network")
    out = _default_out(args, ".json")
    _dump_json(cover.to_dict(), out)
    m.inputs.update(net=args.net, data=args.data)
    m.outputs["cover"] = out
    m.summary.update(polytopes=len(cover), accuracy=cover.accuracy(data.X, data.y),
                     net_accuracy=float(((net.forward(data.X) > 0) == (data.y == 1)).mean()),
                     agreement=float(np.mean((cover.classify(data.X) == 1) == (net.forward(data.X) > 0))))


def cmd_search(args, m):
    from polynet.training import SearchConfig, sequential_cover_search

    _need(args, "data")
    data = _load_data(args.data)
    kw = {"seed": args.seed, "lambda_scale": args.lambda_scale, "max_polytopes": args.max_polytopes,
          "max_width": args.max_width, "epochs": args.epochs}
    if args.eta is not None:
        kw["eta"] = args.eta
    if args.iters is not None:
        kw["steps_per_epoch"] = args.iters
    if args.acc_th is not None:
        kw["acc_th"] = args.acc_th
    if args.width:
        kw["init_width"] = args.width[0]
    if args.lambdas:
        kw["lambda_other"], kw["lambda_target"] = args.lambdas
    result = sequential_cover_search(data, SearchConfig(**kw))
    out = _default_out(args, ".json")
    _dump_json(result.cover.to_dict(), out)
    m.inputs["data"] = args.data
    m.outputs["cover"] = out
    m.summary = result.summary()
    if args.figure:
        from polynet.plotting import decision_grid, data_bounds, plot_decision

        lo, hi = data_bounds(data.X)
        grid = decision_grid(lambda X: result.cover.votes(X) - 0.5, lo, hi, 200)
        plot_decision(args.figure, grid, data, result.cover, title=f"{len(result.cover)} polytopes")
        m.outputs["figure"] = args.figure
    if result.incomplete:
        m.status = "incomplete"


def cmd_verify(args, m):
    import numpy as np

    _need(args, "data")
    data = _load_data(args.data)
    if args.net:
        net = _load_net(args.net)
        wrong = np.flatnonzero((net.forward(data.X) > 0) != (data.y == 1))
        m.inputs["net"] = args.net
        extra = {"architecture": list(net.architecture)}
    else:
        if args.reference:
            from polynet.data import reference_cover

            cover = reference_cover(args.reference)
            m.inputs["reference"] = args.reference
        else:
            _need(args, "cover")
            cover = _load_cover(args.cover)
            m.inputs["cover"] = args.cover
        wrong = cover.misclassified(data.X, data.y)
        extra = {"polytopes": len(cover), "faces": cover.n_faces}
    acc = 1.0 - wrong.size / data.n
    threshold = 1.0 if args.acc_th is None else args.acc_th
    m.inputs["data"] = args.data
    m.summary = {"accuracy": acc, "offenders": [int(i) for i in wrong[:100]], "n_offenders": int(wrong.size), **extra}
    if args.out:
        _dump_json(m.summary, args.out)
        m.outputs["report"] = args.out
    print(json.dumps(m.summary, sort_keys=True))
    if acc < threshold:
        from polynet.errors import ValidationError

        err = ValidationError(f"cover accuracy {acc:.6f} below {threshold}; {wrong.size} offender(s)")
        err.offenders = [int(i) for i in wrong]
        raise err


def cmd_grid(args, m):
    from polynet.plotting import data_bounds, decision_grid, plot_decision, write_grid_csv

    data = _load_data(args.data) if args.data else None
    if args.net:
        net = _load_net(args.net)
        score, cover = net.forward, None
        m.inputs["net"] = args.net
    elif args.cover:
        cover = _load_cover(args.cover)
        score = lambda X: cover.votes(X) - 0.5  # noqa: E731
        m.inputs["cover"] = args.cover
    else:
        raise UsageError("grid: pass --net or --cover")
    if args.bounds:
        if len(args.bounds) != 4:
            raise UsageError("--bounds needs xmin,xmax,ymin,ymax")
        lo, hi = [args.bounds[0], args.bounds[2]], [args.bounds[1], args.bounds[3]]
    elif data is not None:
        lo, hi = data_bounds(data.X)
    else:
        raise UsageError("grid: pass --data or --bounds to fix the frame")
    xs, ys, Z = decision_grid(score, lo, hi, args.resolution)
    out = _default_out(args, ".csv")
    write_grid_csv(out, xs, ys, Z)
    m.outputs["grid"] = out
    m.summary = {"resolution": args.resolution, "lower": lo, "upper": hi, "positive_share": float((Z > 0).mean())}
    if args.figure:
        plot_decision(args.figure, (xs, ys, Z), data, cover)
        m.outputs["figure"] = args.figure


def cmd_guided(args, m):
    from polynet.guided import GuidedDescentConfig, guided_descent, initial_state, square_fixture

    C, data = square_fixture(delta=args.delta)
    default_eta = 1.0 if args.loss == "mse" else 0.9
    cfg = GuidedDescentConfig(C, args.delta, args.rho, args.radius,
                              default_eta if args.eta is None else args.eta, args.loss)
    lo, hi = cfg.v0_window()
    v0 = args.v0 if args.v0 is not None else min(0.5 * (lo + hi), lo + 2.0)
    state = initial_state(cfg, v0, s_offset=0.8 * args.radius, t=0.9 * args.radius)
    trace = guided_descent(state, data, cfg, max_steps=10000 if args.iters is None else args.iters,
                           stop_below=args.stop_below)
    out = _default_out(args, ".csv")
    with open(out, "w") as fh:
        fh.write("step,loss,v0,min_t,max_s\n")
        for r in trace.rows():
            fh.write(f"{r['step']},{r['loss']!r},{r['v0']!r},{r['min_t']!r},{r['max_s_gap']!r}\n")
    diffs = [b - a for a, b in zip(trace.losses, trace.losses[1:])]
    m.outputs["trace"] = out
    m.summary = {"loss": args.loss, "steps": trace.steps, "initial_loss": trace.losses[0],
                 "final_loss": trace.losses[-1], "strictly_decreasing": all(d < 0 for d in diffs),
                 "eta": cfg.eta, "eta_cap": cfg.eta_cap(), "v0": v0, "v0_window": [lo, hi]}
    if args.figure:
        from polynet.plotting import plot_trace

        plot_trace(args.figure, list(range(len(trace.losses))), trace.losses, title=f"guided {args.loss}")
        m.outputs["figure"] = args.figure


COMMANDS = {
    "gen": cmd_gen,
    "construct": cmd_construct,
    "bounds": cmd_bounds,
    "train": cmd_train,
    "compress": cmd_compress,
    "extract": cmd_extract,
    "search": cmd_search,
    "verify": cmd_verify,
    "grid": cmd_grid,
    "guided": cmd_guided,
}


def _error_payload(exc):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    offenders = getattr(exc, "offenders", None)
    if offenders:
        payload["offenders"] = list(offenders)[:100]
    return payload


def run(argv=None):
    """Run one subcommand and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}), file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    level = LOG_LEVELS.get(os.environ.get("POLYNET_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logger.setLevel(level)

    from polynet.errors import PolynetError

    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("command",)}
    m = RunManifest(args.command, config, args.seed,
                    started_at=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    t0 = time.perf_counter()
    code = 0
    try:
        COMMANDS[args.command](args, m)
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}), file=sys.stderr)
        m.status, code = "usage_error", 2
    except (PolynetError, ValueError, OSError) as exc:
        payload = _error_payload(exc)
        print(json.dumps(payload, default=_json_default), file=sys.stderr)
        m.status, code = "error", 1
        m.summary.setdefault("error", payload)
    m.wall_clock_seconds = round(time.perf_counter() - t0, 6)
    manifest = args.manifest or (f"{args.out}.manifest.json" if args.out else f"polynet-{args.command}.manifest.json")
    m.write(manifest)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
