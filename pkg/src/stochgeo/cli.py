"""Command-line front end: closed-form tables, Monte Carlo runs, identity checks, convergence data.

Exit status: 0 success, 1 usage error, 2 identity failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
import time

import numpy as np

from . import __version__
from . import closed_forms as cf
from . import double_forms as dfm
from . import field_sim as fs
from . import gaussian_core as gc
from .kac_rice import ModelSpec, convergence_report, expected_euler_kr, expected_volume_kr
from .kernels import gamma_constants
from .montecarlo import McEstimate, summarize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2

TOOL = "stochgeo"
CLOSED_FORM_COLUMNS = ["tool", "version", "command", "model", "n", "r", "lambda", "d", "vol_m",
                       "value", "provenance"]
MC_COLUMNS = ["tool", "version", "command", "engine", "model", "quantity", "n", "r", "lambda", "d",
              "samples", "seed", "streams", "grid", "mean", "stderr", "rejected", "exact", "zscore",
              "provenance", "note"]
VERIFY_COLUMNS = ["tool", "version", "command", "samples", "seed", "identity", "residual", "threshold", "passed"]
CONVERGENCE_COLUMNS = MC_COLUMNS + ["schedule", "stderr_ratio"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# Output


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if v is None:
        return ""
    return str(v)


def _json_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v if math.isfinite(v) else "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return "null"
    return json.dumps(str(v))


def render(rows: list[dict], columns: list[str], fmt: str) -> str:
    """CSV or JSON text with every float written at 17 significant digits."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        lines = []
        for row in rows:
            body = ", ".join(f"{json.dumps(c)}: {_json_value(row.get(c))}" for c in columns)
            lines.append("  {" + body + "}")
        return "[\n" + ",\n".join(lines) + "\n]\n"
    raise UsageError(f"unknown format {fmt!r}")


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _base(command: str) -> dict:
    return {"tool": TOOL, "version": __version__, "command": command}


# --------------------------------------------------------------------------
# closed-form


EULER_MODELS = {"burgisser", "torus-euler", "thm2", "thm4"}
DEGREE_MODELS = {"kostlan", "burgisser", "thm3", "thm4"}


def _grid(args, need_scale: str):
    scales = args.d if need_scale == "d" else args.lam
    if scales is None:
        flag = "-d" if need_scale == "d" else "--lambda"
        raise UsageError(f"model {args.model} needs {flag}")
    combos = [(n, r, s) for n, r, s in itertools.product(args.n, args.r, scales) if 1 <= r <= n]
    if not combos:
        raise UsageError("no parameter combination satisfies 1 <= r <= n")
    return combos


def cmd_closed_form(args) -> list[dict]:
    need = "d" if args.model in DEGREE_MODELS else "lambda"
    rows = []
    for n, r, s in _grid(args, need):
        if args.model in EULER_MODELS and (n - r) % 2:
            raise UsageError(f"model {args.model} needs n - r even (got n={n}, r={r}); "
                             "odd-dimensional closed zero sets have Euler characteristic 0")
        vol_m = None
        if args.model == "kostlan":
            res = cf.kostlan_expected_volume(n, r, int(s))
        elif args.model == "burgisser":
            res = cf.burgisser_expected_euler(n, r, int(s))
        elif args.model == "torus-volume":
            res = cf.torus_expected_volume(n, r, s)
        elif args.model == "torus-euler":
            res = cf.torus_expected_euler(n, r, s)
        else:
            theorem = int(args.model[-1])
            default = (2 * math.pi) ** n if theorem in (1, 2) else cf.rp_volume(n)
            vol_m = default if args.vol_m is None else args.vol_m
            res = cf.asymptotic_leading_term(theorem, n, r, vol_m, s)
        rows.append({**_base("closed-form"), "model": args.model, "n": n, "r": r,
                     "lambda": s if need == "lambda" else None, "d": int(s) if need == "d" else None,
                     "vol_m": vol_m, "value": res.value, "provenance": res.provenance})
    return rows


# --------------------------------------------------------------------------
# mc


def _exact(model: str, quantity: str, n: int, r: int, scale) -> cf.ClosedFormResult:
    if model == "kostlan":
        if quantity == "volume":
            return cf.kostlan_expected_volume(n, r, int(scale))
        return cf.burgisser_expected_euler(n, r, int(scale))
    if quantity == "volume":
        return cf.torus_expected_volume(n, r, scale)
    return cf.torus_expected_euler(n, r, scale)


def _mc_row(command, args, engine, quantity, n, r, scale, est: McEstimate, grid) -> dict:
    exact = _exact(args.model, quantity, n, r, scale)
    return {
        **_base(command), "engine": engine, "model": args.model, "quantity": quantity, "n": n, "r": r,
        "lambda": scale if args.model == "torus" else None, "d": int(scale) if args.model == "kostlan" else None,
        "samples": args.samples, "seed": args.seed, "streams": args.streams, "grid": grid,
        "mean": est.mean, "stderr": est.stderr, "rejected": est.rejected, "exact": exact.value,
        "zscore": est.zscore(exact.value), "provenance": exact.provenance, "note": est.note,
    }


def _field_estimate(args, quantity: str, n: int, r: int, scale):
    """Run the field engine; returns (estimate, grid used)."""
    if args.model == "kostlan":
        if (n, r) != (1, 1):
            raise UsageError("the field engine supports kostlan only with n = r = 1")
        return fs.mc_roots_rp1(int(scale), args.samples, args.seed, args.streams), None
    if (n, r) == (1, 1):
        grid = args.grid or fs.default_grid(scale)
        return fs.mc_zeros_circle(scale, args.samples, args.seed, args.streams, grid), grid
    if (n, r) == (2, 1):
        if quantity == "euler":
            return McEstimate(0.0, 0.0, 0, 0, args.seed, args.streams, "torus-field", {"n": 2, "r": 1},
                              "n - r odd: chi = 0"), None
        grid = args.grid or 256
        return fs.mc_curve_length_t2(scale, args.samples, args.seed, args.streams, grid), grid
    if (n, r) == (2, 2):
        grid = args.grid or fs.point_grid(scale)
        return fs.mc_common_zeros_t2(scale, args.samples, args.seed, args.streams, grid), grid
    raise UsageError("the field engine supports the torus only for n <= 2 (n=1,r=1; n=2,r=1; n=2,r=2)")


def _mc_params(args):
    if args.samples < 100:
        raise UsageError("--samples must be at least 100")
    if args.streams < 1:
        raise UsageError("--streams must be at least 1")
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    if args.n < 1 or not 1 <= args.r <= args.n:
        raise UsageError(f"need 1 <= r <= n, got n={args.n}, r={args.r}")
    if args.model == "kostlan":
        if args.d is None or args.d < 1:
            raise UsageError("model kostlan needs -d >= 1")
        return args.d
    if args.lam is None or args.lam < 0:
        raise UsageError("model torus needs --lambda >= 0")
    return args.lam


def _quantities(args) -> list[str]:
    return ["volume", "euler"] if args.quantity == "both" else [args.quantity]


def cmd_mc(args) -> list[dict]:
    scale = _mc_params(args)
    n, r = args.n, args.r
    rows = []
    for quantity in _quantities(args):
        if args.engine == "kacrice":
            spec = ModelSpec(args.model, n, r, scale)
            run = expected_volume_kr if quantity == "volume" else expected_euler_kr
            est, grid = run(spec, args.samples, args.seed, args.streams), None
        else:
            if args.model == "kostlan" and quantity == "euler":
                # a point set: chi equals the point count
                est, grid = fs.mc_roots_rp1(int(scale), args.samples, args.seed, args.streams), None
            elif quantity == "euler" and n == r:
                est, grid = _field_estimate(args, "volume", n, r, scale)
            else:
                est, grid = _field_estimate(args, quantity, n, r, scale)
        rows.append(_mc_row("mc", args, args.engine, quantity, n, r, scale, est, grid))
    return rows


# --------------------------------------------------------------------------
# convergence


def cmd_convergence(args) -> list[dict]:
    scale = _mc_params_for_schedule(args)
    schedule = sorted(set(args.schedule))
    if schedule != list(args.schedule):
        raise UsageError("--schedule must be strictly increasing")
    spec = ModelSpec(args.model, args.n, args.r, scale)
    quantity = "volume" if args.quantity == "both" else args.quantity
    if quantity == "euler" and (args.n - args.r) % 2:
        raise UsageError("euler convergence needs n - r even")
    rows, prev = [], None
    for est in convergence_report(spec, schedule, args.seed, args.streams, quantity):
        row = _mc_row("convergence", args, "kacrice", quantity, args.n, args.r, scale, est, None)
        row["samples"] = est.samples
        row["schedule"] = " ".join(str(x) for x in schedule)
        row["stderr_ratio"] = prev.stderr / est.stderr if prev is not None and est.stderr > 0 else None
        rows.append(row)
        prev = est
    return rows


def _mc_params_for_schedule(args):
    args.samples = min(args.schedule) if args.schedule else 0
    return _mc_params(args)


# --------------------------------------------------------------------------
# verify


def _check(rows: list[dict], name: str, residual: float, threshold: float):
    rows.append({**_base("verify"), "identity": name, "residual": float(residual),
                 "threshold": float(threshold), "passed": bool(residual < threshold)})


def identity_suite(samples: int = 100_000, seed: int = 0) -> list[dict]:
    """Exact identities to tight tolerances, plus Monte Carlo moment checks as z-scores."""
    rows: list[dict] = []
    res0 = max(abs(gamma_constants(n)[0] / gamma_constants(n)[1] - (n + 2)) for n in range(1, 11))
    res1 = max(abs(gamma_constants(n)[1] / gamma_constants(n)[2] - (n + 4)) for n in range(1, 11))
    _check(rows, "gamma0/gamma1 = n+2 (n<=10)", res0, 1e-12)
    _check(rows, "gamma1/gamma2 = n+4 (n<=10)", res1, 1e-12)

    gen = gc.RngSeed(seed, 0).generator()
    worst = 0.0
    for _ in range(1000):
        n = int(gen.integers(2, 7))
        a = gen.standard_normal((n, n))
        a = a + a.T
        x, y, z, w = gen.standard_normal((4, n))
        direct = dfm.sym_square_evaluate(a, x, y, z, w)
        sq = dfm.wedge_power(dfm.DoubleForm.from_bilinear(a), 2)
        via_wedge = float(sq.evaluate(np.column_stack([x, y]), np.column_stack([z, w])))
        worst = max(worst, abs(direct - via_wedge) / max(1.0, abs(direct)))
    _check(rows, "square of a symmetric (1,1)-form, 1000 random inputs", worst, 1e-10)

    g = dfm.DoubleForm.metric(2)
    sphere = dfm.wedge(g, g) * 0.5
    _check(rows, "Chern-Gauss-Bonnet chi(S^2) = 2", abs(dfm.cgb_integrand(sphere, 2) * gc.sphere_volume(2) - 2), 1e-10)
    _check(rows, "Chern-Gauss-Bonnet chi(RP^2) = 1",
           abs(dfm.cgb_integrand(dfm.rpn_curvature(2), 2) * cf.rp_volume(2) - 1), 1e-10)

    for i, (n, k) in enumerate([(1, 2), (2, 1), (3, -2), (4, 3)]):
        x = gc.RngSeed(seed, 10 + i).generator().standard_normal((samples, n))
        vals = np.linalg.norm(x, axis=1) ** k
        mean, se = summarize(vals)
        _check(rows, f"E|X|^{k} in R^{n} vs Monte Carlo (z-score)", abs(mean - gc.gaussian_norm_moment(n, k)) / se, 4.0)
    for i, (n, r) in enumerate([(3, 1), (4, 2), (5, 5)]):
        vals = gc.sample_odet_chi_representation(n, r, gc.RngSeed(seed, 20 + i), samples)
        mean, se = summarize(vals)
        _check(rows, f"E[odet] n={n} r={r} vs chi-product sampler (z-score)", abs(mean - gc.expected_odet(n, r)) / se, 4.0)

    _check(rows, "Burgisser(r=n) = Kostlan volume, n=2, d=7",
           abs(cf.burgisser_expected_euler(2, 2, 7).value - cf.kostlan_expected_volume(2, 2, 7).value), 1e-12)
    worst = max(abs(cf.torus_expected_euler(n, n, lam).value / cf.torus_expected_volume(n, n, lam).value - 1)
                for n in (1, 2, 3) for lam in (1, 2, 5))
    _check(rows, "torus Euler(r=n) = torus volume (relative)", worst, 1e-12)
    spec = ModelSpec.torus(2, 2, 2)
    vol = expected_volume_kr(spec, 2000, seed)
    eul = expected_euler_kr(spec, 2000, seed)
    _check(rows, "Kac-Rice Euler(r=n) = Kac-Rice volume on a shared seed", abs(vol.mean - eul.mean), 1e-12)
    return rows


def cmd_verify(args) -> list[dict]:
    rows = identity_suite(args.samples, args.seed)
    for row in rows:
        row["samples"], row["seed"] = args.samples, args.seed
    return rows


# --------------------------------------------------------------------------
# Reproduction


def config_argv(row: dict) -> list[str]:
    """Command line that regenerates ``row`` (values as parsed from CSV or JSON)."""
    present = lambda k: row.get(k) not in (None, "")  # noqa: E731
    command = row["command"]
    argv = [command]
    if command == "verify":
        return argv + ["--samples", str(row["samples"]), "--seed", str(row["seed"])]
    argv += ["--model", str(row["model"]), "-n", str(row["n"]), "-r", str(row["r"])]
    if present("d"):
        argv += ["-d", str(row["d"])]
    if present("lambda"):
        argv += ["--lambda", _fmt(float(row["lambda"]))]
    if command == "closed-form":
        if present("vol_m"):
            argv += ["--vol-m", _fmt(float(row["vol_m"]))]
        return argv
    argv += ["--seed", str(row["seed"]), "--streams", str(row["streams"]), "--quantity", str(row["quantity"])]
    if command == "convergence":
        return argv + ["--schedule", *str(row["schedule"]).split()]
    argv += ["--engine", str(row["engine"]), "--samples", str(row["samples"])]
    if present("grid"):
        argv += ["--grid", str(row["grid"])]
    return argv


# --------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog=TOOL, description="Expected volume and Euler characteristic of random zero sets.")
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def output(q):
        q.add_argument("--format", choices=["csv", "json"], default="csv")
        q.add_argument("--out", default=None, help="write to this file instead of stdout")

    cf_p = sub.add_parser("closed-form", help="exact and leading-order reference values")
    cf_p.add_argument("--model", required=True,
                      choices=["kostlan", "burgisser", "torus-volume", "torus-euler", "thm1", "thm2", "thm3", "thm4"])
    cf_p.add_argument("-n", type=int, nargs="+", required=True)
    cf_p.add_argument("-r", type=int, nargs="+", required=True)
    cf_p.add_argument("-d", type=int, nargs="+")
    cf_p.add_argument("--lambda", dest="lam", type=float, nargs="+")
    cf_p.add_argument("--vol-m", dest="vol_m", type=float, default=None,
                      help="manifold volume for thm1-thm4 (default: (2 pi)^n or vol(RP^n))")
    output(cf_p)

    def mc_common(q):
        q.add_argument("--model", required=True, choices=["torus", "kostlan"])
        q.add_argument("-n", type=int, required=True)
        q.add_argument("-r", type=int, required=True)
        q.add_argument("-d", type=int)
        q.add_argument("--lambda", dest="lam", type=float)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--streams", type=int, default=1)
        q.add_argument("--quantity", choices=["volume", "euler", "both"], default="both")
        output(q)

    mc_p = sub.add_parser("mc", help="Monte Carlo estimate with exact comparison")
    mc_p.add_argument("--engine", choices=["kacrice", "field"], default="kacrice")
    mc_p.add_argument("--samples", type=int, default=100_000)
    mc_p.add_argument("--grid", type=int, default=None, help="grid size for the field engine")
    mc_common(mc_p)

    cv_p = sub.add_parser("convergence", help="Kac-Rice estimates over an increasing sample schedule")
    cv_p.add_argument("--schedule", type=int, nargs="+", default=[1000, 10_000, 100_000])
    mc_common(cv_p)
    cv_p.set_defaults(quantity="volume")

    v_p = sub.add_parser("verify", help="run the exact-identity suite")
    v_p.add_argument("--samples", type=int, default=100_000)
    v_p.add_argument("--seed", type=int, default=0)
    output(v_p)
    return p


COMMANDS = {
    "closed-form": (cmd_closed_form, CLOSED_FORM_COLUMNS),
    "mc": (cmd_mc, MC_COLUMNS),
    "convergence": (cmd_convergence, CONVERGENCE_COLUMNS),
    "verify": (cmd_verify, VERIFY_COLUMNS),
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + " | ".join(COMMANDS))
        run, columns = COMMANDS[args.command]
        start = time.perf_counter()
        rows = run(args)
        text = render(rows, columns, args.format)
    except UsageError as exc:
        print(f"{TOOL}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"{TOOL}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(text, args.out)
    if args.command == "verify":
        failed = [row["identity"] for row in rows if not row["passed"]]
        elapsed = time.perf_counter() - start
        print(f"{TOOL} verify: {len(rows) - len(failed)}/{len(rows)} identities passed in {elapsed:.1f} s",
              file=sys.stderr)
        if failed:
            for name in failed:
                print(f"FAILED: {name}", file=sys.stderr)
            return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
