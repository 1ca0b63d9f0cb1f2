"""Command-line front end.

Exit codes: 0 success, 1 other package error, 2 config error,
3 quadrature budget exceeded, 4 no invariant state, 5 conflicting criteria.
"""

import argparse
import concurrent.futures as cf
import os
import sys

import numpy as np

from . import criteria, solver
from .errors import (
    CriterionNotApplicable, InvalidParamsError, NoInvariantState, QbdcError,
    QuadratureBudgetError,
)
from .io import (
    ConfigError, convergence_csv, dumps, fmt, load_json, parse_model, rates_csv, state_json,
    table_csv,
)
from .svg import region_svg

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_BUDGET, EXIT_NO_STATE, EXIT_CONFLICT = 0, 1, 2, 3, 4, 5


def _emit(args, name, text):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, name)
        with open(path, "w") as fh:
            fh.write(text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)


def _model(args):
    raw = load_json(args.config)
    if args.dim is not None:
        raw = {**raw, "dim": args.dim}
    if args.tail_fraction is not None:
        raw = {**raw, "tail_fraction": args.tail_fraction}
    return raw, parse_model(raw)


def _classify(model):
    if model.random is not None:
        return criteria.classify_rates(model.rates(), model.tail_fraction)
    return criteria.classify_maser_point(model.params, model.tail_fraction)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_rates(args):
    _, model = _model(args)
    cutoff = args.n_max if args.n_max is not None else model.rate_cutoff()
    quad = model.quad(cutoff)
    rates = model.rates(cutoff) if quad is None else model.random.rates(cutoff, quad)
    _emit(args, "rates.csv", rates_csv(rates, quad.report() if quad is not None else None))
    return EXIT_OK


def cmd_classify(args):
    _, model = _model(args)
    v = _classify(model)
    rec = v.record(model.lam, model.zeta, model.kind)
    rec.update(conflict=v.conflict, diagnostics=v.diagnostics, tail_fraction=model.tail_fraction)
    _emit(args, "verdict.json", dumps(rec))
    return EXIT_CONFLICT if v.conflict else EXIT_OK


def _grid(spec, key, default):
    v = spec.get(key, default)
    if isinstance(v, dict):
        try:
            return list(np.linspace(float(v["start"]), float(v["stop"]), int(v["num"])))
        except KeyError as e:
            raise ConfigError(f"grid {key!r} needs start, stop, num (missing {e.args[0]!r})",
                              f"{key}.{e.args[0]}") from None
    if not isinstance(v, list) or not v:
        raise ConfigError(f"grid {key!r} must be a nonempty list or {{start, stop, num}}", key)
    return [float(x) for x in v]


def _sweep_point(task):
    base, lam, zabs, zarg = task
    zeta = complex(zabs * np.exp(1j * zarg))
    try:
        model = parse_model({**base, "lambda": lam, "zeta": [zeta.real, zeta.imag]})
        v = _classify(model)
        return (lam, zarg, zabs, zeta, v.verdict, v.criterion, v.margin, v.conflict, "")
    except QbdcError as e:
        return (lam, zarg, zabs, zeta, "unknown", None, float("nan"), False,
                f"{type(e).__name__}: {e}")


def cmd_sweep(args):
    spec = load_json(args.config)
    if not isinstance(spec, dict) or not isinstance(spec.get("model"), dict):
        raise ConfigError("sweep config needs a 'model' object", "model")
    base = dict(spec["model"])
    base.setdefault("lambda", 0.0)
    if args.dim is not None:
        base["dim"] = args.dim
    if args.tail_fraction is not None:
        base["tail_fraction"] = args.tail_fraction
    elif "tail_fraction" in spec:
        base["tail_fraction"] = spec["tail_fraction"]
    parse_model(base)  # fail fast on a broken template
    lams = _grid(spec, "lambda", {"start": 0.0, "stop": 1.0, "num": 101})
    if any(not 0.0 <= x <= 1.0 for x in lams):
        raise ConfigError("lambda grid must lie in [0, 1]", "lambda")
    zabs = _grid(spec, "zeta_abs", [1.0])
    if any(not 0.0 <= x <= 1.0 for x in zabs):
        raise ConfigError("zeta_abs grid must lie in [0, 1]", "zeta_abs")
    zarg = _grid(spec, "zeta_arg", [0.0])
    tasks = [(base, l, a, p) for l in lams for p in zarg for a in zabs]
    threads = args.threads or int(os.environ.get("THREADS", "1") or 1)
    if threads > 1:
        with cf.ProcessPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_sweep_point, tasks, chunksize=8))
    else:
        rows = [_sweep_point(t) for t in tasks]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    header = ("lambda", "zeta_arg", "zeta_abs", "zeta_re", "zeta_im", "verdict", "criterion",
              "margin", "conflict", "error")
    table = [(float(l), float(p), float(a), float(z.real), float(z.imag), v, c or "",
              float(m), int(k), e) for l, p, a, z, v, c, m, k, e in rows]
    records = [{"lambda": r[0], "zeta_re": r[3], "zeta_im": r[4], "verdict": r[5]} for r in table]
    _emit(args, "sweep.csv", table_csv(header, table))
    title = f"verdicts: {base.get('coupling', {}).get('kind', '?')} model"
    if args.out:
        _emit(args, "sweep.svg", region_svg(records, title))
    counts = {k: sum(r[5] == k for r in table) for k in ("exists", "not_exists", "unknown")}
    print(" ".join(f"{k}={v}" for k, v in counts.items()), file=sys.stderr)
    return EXIT_CONFLICT if any(r[8] for r in table) else EXIT_OK


def _certificate_rates(model, dim):
    cutoff = max(model.rate_cutoff(), 4 * dim)
    return model.rates(cutoff)


def cmd_certify(args):
    raw, model = _model(args)
    mode = args.mode
    out = {"mode": mode, "model": model.describe()}
    if mode == "toy-observable":
        if model.params is None or model.params.kind != "toy":
            raise ConfigError("toy-observable mode needs a toy coupling", "coupling.kind")
        obs = raw.get("observable", {})
        C = float(obs.get("C", 1.0))
        K = int(obs.get("K", 40))
        res = criteria.toy_conserved_observable(model.params, C, K)
        out.update(C=C, K=K, verified=bool(res.residual < 1e-10), **res.to_dict())
    else:
        dim = model.dim
        channel = model.channel(dim)
        rates = _certificate_rates(model, dim)
        if mode == "lyapunov":
            cert = criteria.search_lyapunov_certificate(rates, channel, model.tail_fraction)
        elif mode == "drift":
            cert = criteria.verify_drift(
                channel, criteria.build_drift_certificate(rates, model.tail_fraction))
        else:
            raise ConfigError(f"unknown certify mode {mode!r}", "mode")
        out.update(cert.to_dict())
    _emit(args, f"certificate-{mode}.json", dumps(out))
    return EXIT_OK


def cmd_solve(args):
    raw, model = _model(args)
    tol = float(raw.get("tol", 1e-8))
    channel = model.channel()
    try:
        rho = solver.solve_invariant_direct(channel, tol)
    except NoInvariantState:
        raise
    except (QbdcError, RuntimeError) as e:
        print(f"direct solver failed ({e}); falling back to averaged iteration", file=sys.stderr)
        seed = solver.DensityMatrix.vacuum(channel.dim)
        rho = solver.solve_invariant_cesaro(channel, seed, int(raw.get("max_iter", 100000)), tol)
    fit = solver.falloff_fit(rho)
    extra = {"model": model.describe(), "solver": rho.info, "falloff": fit.to_dict(),
             "residual": solver.residual_norm(channel, rho, channel.dim - 2)}
    _emit(args, "state.json", dumps(state_json(rho, extra)))
    return EXIT_OK


def _theta(spec, dim):
    kind, _, arg = spec.partition(":")
    if kind == "vacuum":
        return solver.DensityMatrix.vacuum(dim)
    if kind == "basis":
        return solver.DensityMatrix.basis_state(int(arg), dim)
    if kind == "mixed":
        m = int(arg)
        d = np.zeros(dim)
        d[:m + 1] = 1.0
        return solver.DensityMatrix.from_diag(d)
    raise ConfigError(f"unknown theta spec {spec!r} (vacuum | basis:m | mixed:m)", "theta")


def cmd_converge(args):
    raw, model = _model(args)
    n_max = args.n_max if args.n_max is not None else int(raw.get("n_max", 1000))
    channel = model.channel()
    phi = solver.solve_invariant_direct(channel, float(raw.get("tol", 1e-8)))
    theta = _theta(args.theta, channel.dim)
    gp = raw.get("gamma_params")
    gp = None if gp is None else tuple(float(gp[k]) for k in
                                       ("gamma0", "gamma1", "gamma2", "lambda", "a"))
    tr = solver.convergence_trace(channel, theta, phi, n_max, gp)
    _emit(args, "convergence.csv", convergence_csv(tr.distances))
    best = tr.fitted_rate
    summary = {
        "n_max": n_max,
        "final_distance": float(tr.distances[-1]),
        "max_increase": tr.max_increase(),
        "fit": None if best is None else vars(best),
        "gamma_bound": tr.gamma_bound,
    }
    if args.out:
        _emit(args, "convergence-summary.json", dumps(summary))
    else:
        print(dumps(summary), end="", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="model or sweep JSON file")
    common.add_argument("--out", default=None, help="output directory (default: stdout)")
    common.add_argument("--dim", type=int, default=None, help="truncation dimension N+1")
    common.add_argument("--tail-fraction", type=float, default=None,
                        help="fraction of the cutoff used for lim inf/lim sup estimates")
    common.add_argument("--n-max", type=int, default=None,
                        help="rate cutoff (rates) or number of steps (converge)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes for sweeps (env THREADS)")

    ap = argparse.ArgumentParser(prog="qbdc", description="Invariant states of maser channels.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("rates", parents=[common], help="transition-rate table (CSV)")
    sub.add_parser("classify", parents=[common], help="verdict for one atomic state (JSON)")
    sub.add_parser("sweep", parents=[common], help="verdict grid (CSV + SVG)")
    p = sub.add_parser("certify", parents=[common], help="build and verify a certificate (JSON)")
    p.add_argument("--mode", required=True, choices=("lyapunov", "drift", "toy-observable"))
    sub.add_parser("solve", parents=[common], help="invariant state (JSON)")
    p = sub.add_parser("converge", parents=[common], help="distance to equilibrium (CSV)")
    p.add_argument("--theta", default="vacuum", help="initial state: vacuum | basis:m | mixed:m")
    return ap


COMMANDS = {"rates": cmd_rates, "classify": cmd_classify, "sweep": cmd_sweep,
            "certify": cmd_certify, "solve": cmd_solve, "converge": cmd_converge}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        where = f" [field: {e.field}]" if e.field else ""
        print(f"config error{where}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParamsError as e:
        where = f" [index {e.index}]" if e.index is not None else ""
        print(f"invalid parameters{where}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureBudgetError as e:
        print(f"quadrature budget exceeded (est_error={fmt(e.est_error)}): {e}", file=sys.stderr)
        return EXIT_BUDGET
    except NoInvariantState as e:
        lam = complex(e.closest_eigenvalue)
        print(f"no invariant state: closest eigenvalue {fmt(lam.real)}{lam.imag:+.3e}j",
              file=sys.stderr)
        return EXIT_NO_STATE
    except CriterionNotApplicable as e:
        print(f"criterion not applicable: {e}", file=sys.stderr)
        return EXIT_OTHER
    except QbdcError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
