"""Command-line entry point: ``mero-asian {price,density,roots,mellin,compare}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

import numpy as np

from .errors import MeroError
from .expfunc import KINDS, mellin_eval
from .model import hyperexp_from_theta, model_from_config
from .pricing import MCConfig, PROFILES, PricingRequest, density, price
from .quad import InversionConfig
from .roots import solve_complex, solve_real

ALGOS = {"mellin": "algo1", "hyperexp": "algo2", "mc": "mc"}
CSV_HEADERS = {
    "density": ["x", "p", "imag_residual"],
    "roots": ["n", "zeta_re", "zeta_im", "zeta_hat_re", "zeta_hat_im", "residual"],
    "compare": ["N", "algo1_price", "algo1_time", "algo2_price", "algo2_time"],
}


class UsageError(Exception):
    """Bad command line; carries the offending flag."""

    def __init__(self, flag: str, msg: str):
        super().__init__(f"{flag}: {msg}")
        self.flag = flag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(_flag_in(message), message)


def _flag_in(message: str) -> str:
    for word in message.replace(",", " ").replace("/", " ").split():
        if word.startswith("--"):
            return word.strip("'\":")
    return "arguments"


def fmt(x) -> float | None:
    """Round to 9 significant digits for output."""
    if x is None:
        return None
    x = float(x)
    return float(f"{x:.9g}") if np.isfinite(x) else x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, complex):
        return {"re": fmt(obj.real), "im": fmt(obj.imag)}
    return obj


def emit_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=True)


def emit_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.9g}" if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def result_json(res) -> str:
    return emit_json({"price": res.price, "stderr": res.stderr, "method": res.method,
                      "N": res.N, "runtime_seconds": res.runtime_seconds,
                      "diagnostics": res.diagnostics})


def _positive_int(flag):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise UsageError(flag, f"expected an integer, got {text!r}") from None
        if v < 1:
            raise UsageError(flag, "must be >= 1")
        return v
    return conv


def _int_list(text):
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError("--N", f"expected comma separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise UsageError("--N", "orders must be >= 1")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mero-asian", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--output", help="write to this file instead of stdout")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", help="model config JSON")
        return sp

    sp = with_config(sub.add_parser("price", help="price an Asian call"))
    sp.add_argument("--S0", type=float, default=100.0)
    sp.add_argument("--K", type=float, default=105.0)
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--r", type=float, default=None)
    sp.add_argument("--algo", choices=sorted(ALGOS), default="hyperexp")
    sp.add_argument("--N", type=_positive_int("--N"), default=None)
    sp.add_argument("--profile", choices=sorted(PROFILES), default="table")
    sp.add_argument("--paths", type=_positive_int("--paths"), default=None)
    sp.add_argument("--steps", type=_positive_int("--steps"), default=None)
    sp.add_argument("--seed", type=int, default=None)

    sp = with_config(sub.add_parser("density", help="density of the exponential functional"))
    sp.add_argument("--q", type=float, default=1.0)
    sp.add_argument("--N", type=_positive_int("--N"), default=20)
    sp.add_argument("--correction", choices=["on", "off"], default="on")
    sp.add_argument("--x-min", type=float, default=0.05)
    sp.add_argument("--x-max", type=float, default=6.0)
    sp.add_argument("--x-steps", type=_positive_int("--x-steps"), default=200)
    sp.add_argument("--contour-c", type=float, default=None)

    sp = with_config(sub.add_parser("roots", help="solutions of psi(z) = q"))
    sp.add_argument("--q-re", type=float, default=1.0)
    sp.add_argument("--q-im", type=float, default=0.0)
    sp.add_argument("--N", type=_positive_int("--N"), default=10)

    sp = with_config(sub.add_parser("mellin", help="Mellin transform of I_q at one s"))
    sp.add_argument("--q-re", type=float, default=1.0)
    sp.add_argument("--q-im", type=float, default=0.0)
    sp.add_argument("--s-re", type=float, default=1.5)
    sp.add_argument("--s-im", type=float, default=0.0)
    sp.add_argument("--N", type=_positive_int("--N"), default=20)
    sp.add_argument("--kind", choices=list(KINDS), default="corrected")

    sp = with_config(sub.add_parser("compare", help="table of algo1/algo2 prices over N"))
    sp.add_argument("--N", type=_int_list, default=[10, 20, 40, 80])
    sp.add_argument("--S0", type=float, default=100.0)
    sp.add_argument("--K", type=float, default=105.0)
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--r", type=float, default=None)
    sp.add_argument("--profile", choices=sorted(PROFILES), default="table")
    return p


def load_config(path) -> dict:
    if path is None:
        raise UsageError("--config", "a model config file is required")
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError("--config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError("--config", f"{path} is not valid JSON: {exc}") from None


def pricing_model(cfg: dict, r: float | None):
    """Model and rate for pricing; a risk-neutral config is recalibrated to --r."""
    mu = cfg.get("mu", {})
    if mu.get("mode") == "riskneutral":
        r = float(mu["r"]) if r is None else r
        cfg = dict(cfg, mu={"mode": "riskneutral", "r": r})
    elif r is None:
        raise UsageError("--r", "required when the config fixes mu")
    return model_from_config(cfg), r


def _validate(args):
    """Flag checks that argparse cannot express; run before any computation."""
    cmd = args.command
    if cmd in ("price", "compare"):
        for flag in ("S0", "T"):
            if not getattr(args, flag) > 0:
                raise UsageError(f"--{flag}", "must be positive")
        if args.K < 0:
            raise UsageError("--K", "must be nonnegative")
        if args.r is not None and args.r < 0:
            raise UsageError("--r", "must be nonnegative")
    if cmd == "price" and args.algo != "mc":
        for flag in ("paths", "steps", "seed"):
            if getattr(args, flag) is not None:
                raise UsageError(f"--{flag}", "only valid with --algo mc")
    if cmd == "density":
        if not args.q > 0:
            raise UsageError("--q", "must be positive")
        if not 0 < args.x_min < args.x_max:
            raise UsageError("--x-min", "need 0 < x-min < x-max")
        if args.contour_c is not None and not args.contour_c > 0:
            raise UsageError("--contour-c", "must be positive")


def run_price(args, cfg):
    model, r = pricing_model(cfg, args.r)
    method = ALGOS[args.algo]
    kw = dict(S0=args.S0, K=args.K, T=args.T, r=r, method=method)
    if args.N is not None:
        kw["N"] = args.N
    if method == "mc":
        base = MCConfig()
        kw["mc_cfg"] = MCConfig(paths=args.paths or base.paths, steps=args.steps or base.steps,
                                seed=base.seed if args.seed is None else args.seed)
    req = PricingRequest.from_profile(args.profile, **kw)
    return result_json(price(model, req))


def run_density(args, cfg):
    model = model_from_config(cfg)
    x = np.linspace(args.x_min, args.x_max, args.x_steps)
    res = density(model, args.q, args.N, x, InversionConfig(v_max=100.0, n_mellin=2000),
                  correction=args.correction == "on", c=args.contour_c)
    return emit_csv(CSV_HEADERS["density"], zip(res.x, res.p, res.imag_residual))


def run_roots(args, cfg):
    model = model_from_config(cfg)
    q = complex(args.q_re, args.q_im)
    rs = solve_real(model, q.real, args.N) if q.imag == 0 else solve_complex(model, q, args.N)
    zeta, zhat = np.asarray(rs.zeta), np.asarray(rs.zeta_hat)
    res = np.maximum(rs.res_zeta, rs.res_zeta_hat)
    rows = [(n + 1, zeta[n].real, zeta[n].imag, zhat[n].real, zhat[n].imag, float(res[n]))
            for n in range(len(zeta))]
    return emit_csv(CSV_HEADERS["roots"], rows)


def run_mellin(args, cfg):
    model = model_from_config(cfg)
    q = complex(args.q_re, args.q_im)
    s = complex(args.s_re, args.s_im)
    if args.kind == "hyperexp":
        # a fixed-mu model keeps its drift: psi(1) plays the role of r
        model = hyperexp_from_theta(model, float(np.real(model.psi(1.0))), args.N)
        M = args.N + 1
    else:
        M = args.N
    roots = solve_real(model, q.real, M) if q.imag == 0 else solve_complex(model, q, M)
    ev = mellin_eval(model, q, args.N, args.kind, roots)
    val = complex(ev(s))
    corr = None if ev.corr is None else {"a": ev.corr[0], "b": ev.corr[1]}
    return emit_json({"re": val.real, "im": val.imag, "aN_log": ev.log_aN,
                      "bN_log": ev.log_bN, "corr": corr})


def run_compare(args, cfg):
    model, r = pricing_model(cfg, args.r)
    rows = []
    for N in args.N:
        row = [N]
        for method in ("algo1", "algo2"):
            req = PricingRequest.from_profile(args.profile, S0=args.S0, K=args.K, T=args.T,
                                              r=r, method=method, N=N)
            res = price(model, req)
            row += [res.price, round(res.runtime_seconds, 2)]
        rows.append(row)
    return emit_csv(CSV_HEADERS["compare"], rows)


COMMANDS = {"price": run_price, "density": run_density, "roots": run_roots,
            "mellin": run_mellin, "compare": run_compare}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("command", "choose one of " + ", ".join(COMMANDS))
        _validate(args)
        cfg = load_config(args.config)
    except UsageError as exc:
        print(f"mero-asian: usage error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        text = COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"mero-asian: usage error: {exc}", file=sys.stderr)
        return 2
    except (MeroError, ValueError, KeyError) as exc:
        kind = getattr(exc, "kind", type(exc).__name__)
        print(f"mero-asian: {kind} error: {exc}", file=sys.stderr)
        return 1
    if args.verbose:
        print(f"{args.command} took {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
