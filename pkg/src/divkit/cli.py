"""Command-line entry point.

One binary, subcommand style; every run emits its fully-resolved
configuration next to the result so outputs are reproducible.  Exit
codes: 0 success, 1 computation error (structured JSON on stdout),
2 usage error (argparse message on stderr).  DIVKIT_SEED overrides
--seed; numeric results are identical for any --threads value.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, bench, infodiv, kinetics
from ._backend import backend_name
from .core import GridDensity, load_samples, save_samples
from .energy import cramer, energy_sq
from .fourier import QuadratureSpec, c_alpha, fourier_metric
from .kinetics import TradeParams
from .transport import wasserstein_1d, wasserstein_lp
from .whitening import apply_whitening, fit_whitening, whitened_divergence

log = logging.getLogger("divkit")


def _build_parser():
    parser = argparse.ArgumentParser(prog="divkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"divkit {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root RNG seed")
    common.add_argument(
        "--threads", type=int, default=os.cpu_count() or 1,
        help="worker threads for independent tasks; results do not depend on it",
    )
    common.add_argument("--format", choices=("json", "table"), default="json")
    common.add_argument("--log-level", default="warning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("energy", parents=[common], help="energy distance between two CSV samples")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--norm", choices=("l1", "l2"), default="l2")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--moment-tol", type=float, default=1e-8)

    p = sub.add_parser("fourier", parents=[common], help="Fourier-based metric F_s")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--rmax", type=float)
    p.add_argument("--radial", type=int)
    p.add_argument("--angular", type=int)
    p.add_argument("--moment-tol", type=float, default=1e-8)

    p = sub.add_parser("wasserstein", parents=[common], help="exact W_p distance")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--emit-plan", dest="emit_plan")
    p.add_argument("--max-support", type=int, default=512)

    p = sub.add_parser("whiten", parents=[common], help="whiten a CSV sample")
    p.add_argument("--method", choices=("cholesky", "zca-cor"), default="zca-cor")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--ridge", type=float, default=0.0)

    p = sub.add_parser("div", parents=[common], help="generic divergence, optionally whitened")
    p.add_argument("--family", choices=("energy", "fourier", "wasserstein", "cramer"), required=True)
    p.add_argument("--alpha", type=float, default=1.0, help="order for energy")
    p.add_argument("--s", type=float, default=2.0, help="order for fourier")
    p.add_argument("--p", type=float, default=1.0, help="order for wasserstein")
    p.add_argument("--whitened", action="store_true")
    p.add_argument("--method", choices=("cholesky", "zca-cor"), default="zca-cor")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)

    p = sub.add_parser("info", parents=[common], help="entropy / Fisher functionals on grids")
    p.add_argument("--what", choices=("kl", "fisher", "relfisher", "entropy"), required=True)
    p.add_argument("--f", dest="f_grid", required=True)
    p.add_argument("--g", dest="g_grid")

    p = sub.add_parser("kinetics", parents=[common], help="wealth-exchange relaxation trace")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--checkpoints", type=int, default=14)
    p.add_argument("--probes", default="energy:1,fourier:2,w1")
    p.add_argument("--eta-law", choices=("two_point", "uniform_symmetric"), default="two_point")
    p.add_argument("--policy", choices=("redraw", "truncate", "allow"), default="redraw")
    p.add_argument("--initial", choices=("delta", "equilibrium"), default="delta")
    p.add_argument("--eq-points", type=int, default=100_000)
    p.add_argument("--out")

    p = sub.add_parser("bench", parents=[common], help="model-comparison benchmark")
    p.add_argument("--synth-seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=600)
    p.add_argument("--regime", choices=("sector_linear", "global_linear", "nonlinear"),
                   default="sector_linear")
    p.add_argument("--alphas", default="0.5,1,1.5")
    p.add_argument("--out")
    p.add_argument("--data", help="user CSV instead of synthetic data")
    p.add_argument("--features", help="comma-separated feature columns of --data")
    p.add_argument("--targets", help="comma-separated target columns of --data")
    p.add_argument("--sector", help="sector column of --data")

    sub.add_parser("selftest", parents=[common], help="run the embedded oracle suite")
    return parser


def _resolved_config(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    cfg["backend"] = backend_name()
    return cfg


def _render(payload, fmt):
    if fmt == "json":
        return json.dumps(payload, indent=2, sort_keys=True)
    lines = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}{k}.", obj[k])
        elif isinstance(obj, (list, tuple)):
            for i, v in enumerate(obj):
                walk(f"{prefix}{i}.", v)
        else:
            lines.append(f"{prefix[:-1]:<40} {obj}")

    walk("", payload)
    return "\n".join(lines)


def _report_payload(report):
    return report.to_dict()


def _cmd_energy(args):
    mu = load_samples(args.mu)
    nu = load_samples(args.nu)
    from .energy import EnergyOrder

    order = EnergyOrder(args.alpha, "l1" if args.norm == "l1" else "euclidean")
    return _report_payload(energy_sq(mu, nu, order, args.moment_tol))


def _cmd_fourier(args):
    mu = load_samples(args.mu)
    nu = load_samples(args.nu)
    quad = None
    if args.rmax or args.radial or args.angular:
        quad = QuadratureSpec(
            truncation_radius=args.rmax or 200.0,
            radial_points=args.radial or 8192,
            angular_points=args.angular or (1 if mu.dim == 1 else 64),
            seed=args.seed,
        )
    rep = fourier_metric(mu, nu, float(args.s), quad, args.moment_tol)
    payload = _report_payload(rep)
    payload["admissible"] = True
    return payload


def _cmd_wasserstein(args):
    mu = load_samples(args.mu)
    nu = load_samples(args.nu)
    if mu.dim == 1 and not args.emit_plan:
        return _report_payload(wasserstein_1d(mu, nu, args.p))
    rep, plan = wasserstein_lp(mu, nu, args.p, args.max_support)
    if args.emit_plan:
        with open(args.emit_plan, "w", encoding="utf-8") as fh:
            json.dump(plan.to_jsonable(), fh)
    return _report_payload(rep)


def _cmd_whiten(args):
    data = load_samples(args.infile)
    wmap = fit_whitening(data, args.method, args.ridge)
    save_samples(apply_whitening(wmap, data), args.outfile)
    return {
        "method": args.method,
        "matrix": [[float(v) for v in row] for row in wmap.matrix],
        "diagnostics": wmap.diagnostics,
        "out": args.outfile,
    }


def _cmd_div(args):
    mu = load_samples(args.mu)
    nu = load_samples(args.nu)
    if args.family == "energy":
        div = lambda a, b: energy_sq(a, b, args.alpha)
    elif args.family == "fourier":
        div = lambda a, b: fourier_metric(a, b, args.s)
    elif args.family == "cramer":
        div = cramer
    else:
        div = lambda a, b: (
            wasserstein_1d(a, b, args.p) if a.dim == 1 else wasserstein_lp(a, b, args.p)[0]
        )
    if args.whitened:
        rep = whitened_divergence(div, mu, nu, args.method)
    else:
        rep = div(mu, nu)
    return _report_payload(rep)


def _load_grid(path):
    with open(path, encoding="utf-8") as fh:
        return GridDensity.from_dict(json.load(fh))


def _cmd_info(args):
    f = _load_grid(args.f_grid)
    if args.what in ("kl", "relfisher") and not args.g_grid:
        raise ValueError(f"--what {args.what} needs --g")
    if args.what == "entropy":
        return {"what": "entropy", "value": infodiv.entropy(f)}
    if args.what == "fisher":
        return {"what": "fisher", "value": infodiv.fisher(f)}
    g = _load_grid(args.g_grid)
    rep = infodiv.kl(f, g) if args.what == "kl" else infodiv.relative_fisher(f, g)
    return _report_payload(rep)


def _cmd_kinetics(args):
    params = TradeParams(
        lam=args.lam, sigma=args.sigma, eta_law=args.eta_law, clamp_negative=args.policy
    )
    probes = tuple(p.strip() for p in args.probes.split(",") if p.strip())
    trace = kinetics.relaxation_trace(
        params,
        args.n,
        args.horizon,
        probes=probes,
        checkpoints=args.checkpoints,
        seed=args.seed,
        initial=args.initial,
        eq_points=args.eq_points,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(trace["records"], fh, indent=1)
    return {"metadata": trace["metadata"], "records": trace["records"], "out": args.out}


def _cmd_bench(args):
    alphas = tuple(float(a) for a in args.alphas.split(","))
    if args.data:
        if not (args.features and args.targets and args.sector):
            raise ValueError("--data needs --features, --targets, and --sector")
        data = _load_user_dataset(args)
    else:
        data = bench.synth_dataset(args.synth_seed, args.rows, args.regime)
    train, test = data.split()
    specs = {k: bench.ModelSpec(k, seed=args.seed) for k in bench.MODEL_KINDS}
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        futures = {k: pool.submit(bench.fit_model, s, train) for k, s in specs.items()}
        models = {k: futures[k].result() for k in bench.MODEL_KINDS}
    board = bench.score_models(models, test, alphas)
    payload_json, text = bench.report(
        board, json_path=args.out, text_path=(args.out + ".txt") if args.out else None
    )
    board["table"] = text
    return board


def _load_user_dataset(args):
    import csv

    feats = [c.strip() for c in args.features.split(",")]
    targs = [c.strip() for c in args.targets.split(",")]
    with open(args.data, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{args.data}: no data rows")
    sectors = sorted({r[args.sector] for r in rows})
    if len(sectors) > len(bench.SECTORS):
        raise ValueError("more sector labels than supported")
    code = {s: i for i, s in enumerate(sectors)}
    f = np.array([[float(r[c]) for c in feats] for r in rows])
    t = np.array([[float(r[c]) for c in targs] for r in rows])
    s = np.array([code[r[args.sector]] for r in rows])
    return bench.Dataset(f, t, s, split_seed=args.seed)


def _cmd_selftest(args):
    from .core import WeightedSampleSet
    from .infodiv import entropy as grid_entropy, fisher as grid_fisher
    from .core import ReferenceDensity
    from .whitening import check_scale_stability
    from .kinetics import initial_state, step

    rng = np.random.default_rng(args.seed)
    checks = []

    def check(name, ok, detail):
        checks.append({"name": name, "ok": bool(ok), "detail": detail})

    d0 = WeightedSampleSet([[0.0]])
    d1 = WeightedSampleSet([[1.0]])
    e2 = energy_sq(d0, d1, 1.0).value
    check("energy_delta_pair", abs(e2 - 2.0) < 1e-12, f"E_1^2 = {e2}")

    quad = QuadratureSpec(truncation_radius=4000.0, radial_points=32000)
    rep = fourier_metric(d0, d1, 2.0, quad)
    gap = abs(rep.value**2 - 2.0 * np.pi)
    check("fourier_delta_pair", gap <= rep.error_estimate, f"|F2^2 - 2pi| = {gap:.2e}")
    ident = abs(c_alpha(1, 1) * rep.value**2 - e2)
    check("energy_fourier_identity", ident <= rep.error_estimate, f"gap = {ident:.2e}")

    pts = rng.normal(size=(80, 3)) @ np.diag([1.0, 2.0, 0.5]) + [0.3, -0.2, 1.0]
    sample = WeightedSampleSet(pts)
    for method in ("cholesky", "zca-cor"):
        wmap = fit_whitening(sample, method)
        check(
            f"whitening_residual_{method}",
            wmap.diagnostics["identity_residual"] <= 1e-8,
            f"residual = {wmap.diagnostics['identity_residual']:.2e}",
        )
        dev = check_scale_stability(method, sample, rng.uniform(0.2, 5.0, 3))
        check(f"scale_stability_{method}", dev <= 1e-9, f"max deviation = {dev:.2e}")

    x = WeightedSampleSet(rng.normal(size=(30, 1)), rng.random(30) + 0.1)
    y = WeightedSampleSet(rng.normal(size=(25, 1)) + 0.5, rng.random(25) + 0.1)
    gap = abs(wasserstein_1d(x, y, 1.0).value - wasserstein_lp(x, y, 1.0)[0].value)
    check("wasserstein_quantile_vs_lp", gap <= 1e-10, f"gap = {gap:.2e}")
    check("wasserstein_delta_edge", wasserstein_1d(d0, d1, 1.0).value == 1.0, "W1 = 1")

    crep = cramer(x, y)
    resid = abs(crep.diagnostics["expectation_form"] - 2.0 * crep.value**2)
    check("cramer_two_forms", resid <= 1e-12, f"residual = {resid:.2e}")

    ref = ReferenceDensity("gaussian", dim=1, T=1.0)
    grid = ref.tabulate([-10.0], [20.0 / 2048], (2049,))
    check(
        "gaussian_entropy_grid",
        abs(grid_entropy(grid) - ref.entropy()) < 1e-10,
        f"entropy = {grid_entropy(grid)}",
    )
    check(
        "gaussian_fisher_grid",
        abs(grid_fisher(grid) - 1.0) < 1e-6,
        f"fisher = {grid_fisher(grid)}",
    )

    params = TradeParams(lam=0.1, sigma=0.1)
    s1 = step(initial_state(params, 500, args.seed), 20_000)
    s2 = step(initial_state(params, 500, args.seed), 20_000)
    check(
        "kinetics_determinism",
        np.array_equal(s1.wealths, s2.wealths),
        f"time = {s1.time}",
    )

    ok = all(c["ok"] for c in checks)
    return {"ok": ok, "checks": checks, "backend": backend_name()}


_COMMANDS = {
    "energy": _cmd_energy,
    "fourier": _cmd_fourier,
    "wasserstein": _cmd_wasserstein,
    "whiten": _cmd_whiten,
    "div": _cmd_div,
    "info": _cmd_info,
    "kinetics": _cmd_kinetics,
    "bench": _cmd_bench,
    "selftest": _cmd_selftest,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))
    env_seed = os.environ.get("DIVKIT_SEED")
    if env_seed is not None:
        args.seed = int(env_seed)
    config = _resolved_config(args)
    try:
        result = _COMMANDS[args.command](args)
    except Exception as exc:  # computation error -> structured JSON, exit 1
        payload = {
            "config": config,
            "error": {"type": type(exc).__name__, "message": str(exc)},
        }
        print(_render(payload, args.format))
        return 1
    payload = {"config": config, "result": result}
    print(_render(payload, args.format))
    if args.command == "selftest" and not result["ok"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
