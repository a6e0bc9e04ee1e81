"""Command-line experiment runner.

Every command writes ``<command>.csv`` (first row: config hash and seed,
second row: the full config as JSON) and a ``<command>_plot.py`` script that
plots the CSV, then prints one verdict line.  Exit status: 0 when every
verdict passes, 1 on a failed verdict, 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bcr, rep
from .form import WeakForm, make_form, tau
from .grid import derive_seed, goodness_samples, sample_theta, window_for
from .kernel import dini_norm, k_tail, make_modulus
from .simplefn import SimpleFunction, random_simple_function

COMMANDS = ("verify-bcr", "error-decay", "verify-split", "goodness-stats", "verify-averaging",
            "verify-representation", "shift-norms", "dini")

PRESETS = {
    "hilbert-standard": {"kernel": "hilbert",
                         "f": SimpleFunction.indicator((0, 1)),
                         "g": SimpleFunction.indicator((2, 3))},
    "hilbert-meanzero": {"kernel": "hilbert",
                         "f": SimpleFunction.indicator((0, 1)) - SimpleFunction.indicator((1, 2)),
                         "g": SimpleFunction.indicator((2, 3))},
    "d2-power": {"kernel": "power:0.5",
                 "f": SimpleFunction.indicator((0, 1), (0, 1)),
                 "g": SimpleFunction.indicator((2, 3), (0, 1))},
}

DEFAULTS = {
    "preset": "hilbert-standard",
    "kernel": None,
    "f": None,
    "g": None,
    "a": None,
    "b": None,
    "k_max": None,
    "samples": None,
    "seed": 0,
    "p": 2.0,
    "threads": 1,
    "out": "out",
    "d": 1,
    "k": None,
    "omega": "power:1",
    "s": 0.0,
    "gamma": None,
    "convention": "2^d",
    "guard": 24,
    "tol": None,
}

INT_KEYS = {"a", "b", "k_max", "samples", "seed", "threads", "d", "guard"}
FLOAT_KEYS = {"p", "s", "tol"}


class ConfigError(ValueError):
    pass


# --- configuration ---------------------------------------------------------------------


def read_config_file(path: str) -> dict:
    """``key = value`` lines (``#`` comments); keys mirror the long flags."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = val
    return out


def _coerce(key, val):
    if val is None:
        return None
    try:
        if key in INT_KEYS:
            return int(val)
        if key in FLOAT_KEYS:
            return float(val)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {val!r}") from exc
    return str(val)


def _parse_function(text: str, d: int) -> SimpleFunction:
    if text.startswith("@"):
        try:
            text = Path(text[1:]).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read function file: {exc}") from exc
    try:
        f = SimpleFunction.from_json(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad function JSON: {exc}") from exc
    if f.d != d:
        raise ConfigError("function dimension does not match the kernel")
    return f


def build_config(command: str, args: dict) -> dict:
    """Merge defaults, config file and flags; validate."""
    cfg = dict(DEFAULTS)
    if args.get("config"):
        cfg.update(read_config_file(args["config"]))
    for key, val in args.items():
        if key in DEFAULTS and val is not None:
            cfg[key] = val
    cfg = {k: _coerce(k, v) for k, v in cfg.items()}
    cfg["command"] = command
    if cfg["preset"] not in PRESETS:
        raise ConfigError(f"unknown preset {cfg['preset']!r}; choose from {sorted(PRESETS)}")
    preset = PRESETS[cfg["preset"]]
    cfg["kernel"] = cfg["kernel"] or preset["kernel"]
    try:
        make_form(cfg["kernel"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    d = make_form(cfg["kernel"]).d
    cfg["f"] = cfg["f"] or preset["f"].to_json()
    cfg["g"] = cfg["g"] or preset["g"].to_json()
    _parse_function(cfg["f"], d)
    _parse_function(cfg["g"], d)
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if cfg["samples"] is not None and cfg["samples"] < 1:
        raise ConfigError("samples must be >= 1")
    if cfg["a"] is not None and cfg["b"] is not None and cfg["a"] >= cfg["b"]:
        raise ConfigError("need a < b")
    if cfg["k_max"] is not None and cfg["k_max"] < 2:
        raise ConfigError("k_max must be >= 2")
    if cfg["p"] <= 1:
        raise ConfigError("p must be > 1")
    if cfg["convention"] not in rep.CONVENTIONS:
        raise ConfigError(f"convention must be one of {rep.CONVENTIONS}")
    if command == "dini":
        try:
            make_modulus(cfg["omega"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


# keys that do not change any result stay out of the echoed config
NON_RESULT_KEYS = ("out", "threads", "config")


def provenance(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in NON_RESULT_KEYS}


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(provenance(cfg), sort_keys=True).encode()).hexdigest()[:16]


# --- output ------------------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


PLOT_TEMPLATE = '''"""Plot {name}.csv (generated by dyadrep)."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{name}.csv"
with open(path, newline="", encoding="utf-8") as fh:
    rows = list(csv.reader(fh))[2:]
header, data = rows[0], rows[1:]
x = [float(r[header.index("{x}")]) for r in data]
for col in {ys!r}:
    y = [abs(float(r[header.index(col)])) for r in data]
    plt.plot(x, y, "o-", label=col)
plt.yscale("{yscale}")
plt.xlabel("{x}")
plt.legend()
plt.savefig("{name}.png", dpi=120)
'''


def write_outputs(cfg: dict, columns: list, rows: list, plot: tuple | None = None, extra: dict | None = None):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    name = cfg["command"]
    path = out / f"{name}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config_hash", config_hash(cfg), "seed", cfg["seed"], "command", name])
        w.writerow(["config", json.dumps(provenance(cfg), sort_keys=True)])
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    if plot is not None:
        x, ys, yscale = plot
        (out / f"{name}_plot.py").write_text(PLOT_TEMPLATE.format(name=name, x=x, ys=list(ys), yscale=yscale),
                                             encoding="utf-8")
    if extra is not None:
        (out / f"{name}.json").write_text(json.dumps(extra, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _verdict(name: str, ok: bool, detail: str) -> int:
    print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return 0 if ok else 1


# --- commands ----------------------------------------------------------------------------


def _setup(cfg):
    form = make_form(cfg["kernel"])
    f = _parse_function(cfg["f"], form.d)
    g = _parse_function(cfg["g"], form.d)
    return form, f, g


def _closed_form_tol(form: WeakForm) -> float:
    return 1e-12 if form.kernel.name == "hilbert" else 1e-8


def cmd_verify_bcr(cfg):
    form, f, g = _setup(cfg)
    a = -4 if cfg["a"] is None else cfg["a"]
    b = 6 if cfg["b"] is None else cfg["b"]
    n = cfg["samples"] or 5
    tol = cfg["tol"] or _closed_form_tol(form)
    cols = ["sample", "a", "b", "main", "error", "error_path_a", "reconstruction", "reference", "defect", "path_gap"]
    rows = []
    for s in range(n):
        th = sample_theta(derive_seed(cfg["seed"], s), form.d, window_for(a, b, 0, 1))
        r = bcr.bcr_report(form, f, g, a, b, th)
        rows.append([s, a, b, r.main, r.error, r.error_path_a, r.reconstruction, r.reference, r.defect, r.path_gap])
    write_outputs(cfg, cols, rows, ("sample", ["defect", "path_gap"], "log"))
    worst = max(max(r[8], r[9]) for r in rows)
    return _verdict("verify-bcr", worst <= tol, f"max defect {worst:.3e}, tolerance {tol:.0e}")


def cmd_error_decay(cfg):
    """Error-term decay.  The CSV rows are means over random shifts; the slope
    verdict uses the separating shift, the grid on which the ``2^{da}`` and
    ``2^{-b}`` bounds are attained (random shifts only separate the supports
    with probability ``~2^a``, which steepens the mean).  Without a separating
    axis the mean slopes are used."""
    form, f, g = _setup(cfg)
    a_min = -9 if cfg["a"] is None else cfg["a"]
    b_max = 11 if cfg["b"] is None else cfg["b"]
    a_list = list(range(a_min, -1))
    b_list = list(range(1, b_max + 1))
    n = cfg["samples"] or 64
    window = (a_min - 1, b_max + cfg["guard"])
    thetas = [sample_theta(derive_seed(cfg["seed"], s), form.d, window) for s in range(n)]
    table = bcr.decay_scan(form, f, g, a_list, b_list, thetas)
    sep = bcr.separating_theta(f, g, a_min, window)
    worst = bcr.decay_scan(form, f, g, a_list, b_list, sep) if sep is not None else table
    ref = tau(form, f, g)
    ns = list(range(1, min(-a_min, b_max) + 1))
    sym = [float(np.mean([abs(bcr.error_term(form, f, g, -m, m, th, reference=ref).path_b) for th in thetas]))
           for m in ns]
    rows = table.as_rows()
    write_outputs(cfg, bcr.DECAY_COLUMNS, rows, ("b", ["E_total", "E_fine1", "E_fine2"], "log"),
                  extra={"symmetric": {"n": ns, "mean_abs_error": sym},
                         "slope_a_mean": table.slope_a, "slope_b_mean": table.slope_b,
                         "separating_theta": sep is not None,
                         "slope_a": worst.slope_a, "slope_b": worst.slope_b})
    d = form.d
    decreasing = all(sym[i + 1] < sym[i] for i in range(len(ns) - 1) if ns[i] >= 3)
    ok_a = abs(worst.slope_a - d) <= 0.3
    ok_b = abs(worst.slope_b + 1) <= 0.3
    detail = (f"slope_a {worst.slope_a:.3f} (target {d} +- 0.3), slope_b {worst.slope_b:.3f} "
              f"(target -1 +- 0.3) on the {'separating' if sep is not None else 'random'} grid; "
              f"random-grid means {table.slope_a:.3f}, {table.slope_b:.3f}; "
              f"|E_-n,n| decreasing for n>=3: {decreasing}")
    return _verdict("error-decay", ok_a and ok_b and decreasing, detail)


def cmd_verify_split(cfg):
    form, f, g = _setup(cfg)
    a = -3 if cfg["a"] is None else cfg["a"]
    b = 3 if cfg["b"] is None else cfg["b"]
    n = cfg["samples"] or 5
    tol = cfg["tol"] or (1e-12 if form.kernel.name == "hilbert" else 1e-9)
    ks = rep.horizon(f, g, b)
    cols = ["sample", "a", "b", "k_star", "main", "diag", "blocks", "tail_10", "tail_01", "defect"]
    rows = []
    for s in range(n):
        th = sample_theta(derive_seed(cfg["seed"], s), form.d, window_for(a, b, ks + 1))
        r = rep.split_report(form, f, g, a, b, th)
        rows.append([s, a, b, r.k_star, r.main, r.diag, math.fsum(r.blocks.values()),
                     r.tail[(1, 0)], r.tail[(0, 1)], r.defect])
    write_outputs(cfg, cols, rows, ("sample", ["defect"], "log"))
    worst = max(r[-1] for r in rows)
    return _verdict("verify-split", worst <= tol, f"max defect {worst:.3e}, tolerance {tol:.0e}")


def cmd_goodness_stats(cfg):
    d = cfg["d"]
    ks = [int(x) for x in str(cfg["k"]).split(",")] if cfg["k"] is not None else [2, 3, 5]
    n = cfg["samples"] or 100000
    cols = ["d", "k", "samples", "frequency", "expected", "sigma", "z", "correlation", "corr_sigma"]
    rows = []
    ok = True
    for k in ks:
        good, pos = goodness_samples(derive_seed(cfg["seed"], d, k), d, k, n, cfg["guard"])
        freq = float(good.mean())
        p = 2.0 ** -d
        sigma = math.sqrt(p * (1 - p) / n)
        corr = float(np.corrcoef(good, pos)[0, 1]) if good.std() > 0 else 0.0
        csig = 1 / math.sqrt(n)
        ok = ok and abs(freq - p) <= 3 * sigma and abs(corr) <= 3 * csig
        rows.append([d, k, n, freq, p, sigma, (freq - p) / sigma, corr, csig])
    write_outputs(cfg, cols, rows, ("k", ["frequency"], "linear"))
    detail = "; ".join(f"k={r[1]}: {r[3]:.5f} vs {r[4]} (z={r[6]:+.2f}), corr {r[7]:+.4f}" for r in rows)
    return _verdict("goodness-stats", ok, detail)


def _gammas(cfg):
    if cfg["gamma"] is None:
        return list(rep.GAMMAS)
    out = []
    for part in cfg["gamma"].split(";"):
        gm = tuple(int(x) for x in part.strip("() ").split(","))
        if gm not in rep.GAMMAS:
            raise ConfigError(f"bad gamma {part!r}")
        out.append(gm)
    return out


def _ks(cfg, default):
    if cfg["k"] is None:
        return default
    try:
        return [int(x) for x in str(cfg["k"]).split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad k list {cfg['k']!r}") from exc


def cmd_verify_averaging(cfg):
    form, f, g = _setup(cfg)
    a = -4 if cfg["a"] is None else cfg["a"]
    b = 4 if cfg["b"] is None else cfg["b"]
    ks = _ks(cfg, [2, 3, 4])
    n = cfg["samples"] or 10000
    reports = rep.averaging_table(form, f, g, a, b, _gammas(cfg), ks, n, cfg["seed"], cfg["convention"],
                                  cfg["threads"])
    cols = ["gamma", "k", "convention", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "diff", "diff_stderr", "passed"]
    rows = [[f"{r.gamma[0]}{r.gamma[1]}", r.k, r.convention, r.lhs, r.lhs_stderr, r.rhs, r.rhs_stderr, r.diff,
             r.diff_stderr, r.passed] for r in reports]
    write_outputs(cfg, cols, rows, ("k", ["lhs", "rhs"], "log"))
    bad = [f"{r.gamma}:{r.k}" for r in reports if not r.passed]
    worst = max((abs(r.diff) / r.diff_stderr if r.diff_stderr else 0.0) for r in reports)
    return _verdict("verify-averaging", not bad,
                    f"{len(reports) - len(bad)}/{len(reports)} within 3 sigma, worst |z| {worst:.2f}")


def cmd_verify_representation(cfg):
    form, f, g = _setup(cfg)
    a = -4 if cfg["a"] is None else cfg["a"]
    b = 8 if cfg["b"] is None else cfg["b"]
    k_max = cfg["k_max"] or 10
    n = cfg["samples"] or 20000
    r = rep.representation_check(form, f, g, a, b, k_max, n, cfg["seed"], cfg["threads"])
    cols = ["reference", "estimate", "stderr", "samples", "error_term", "k_tail", "budget", "tolerance", "verdict"]
    rows = [[r["reference"], r["estimate"], r["stderr"], r["samples"], r["truncation"]["error_term"],
             r["truncation"]["k_tail"], r["budget"], r.get("tolerance", 0.0), r["verdict"]]]
    write_outputs(cfg, cols, rows, extra=r)
    return _verdict("verify-representation", r["verdict"] == "PASS",
                    f"estimate {r['estimate']:.6f} +- {r['stderr']:.1e} vs {r['reference']:.6f}")


def cmd_shift_norms(cfg):
    form, _, _ = _setup(cfg)
    ks = _ks(cfg, [2, 4, 8, 16, 32])
    n = cfg["samples"] or 20
    cols = ["gamma", "k", "p", "delta", "estimate", "normalized", "envelope", "ratio", "status"]
    rows = []
    for gm in _gammas(cfg):
        for r in rep.shift_norm_probe(form, gm, ks, cfg["p"], n, cfg["seed"]):
            rows.append([f"{gm[0]}{gm[1]}", r["k"], cfg["p"], r["delta"], r["estimate"], r["normalized"],
                         r["envelope"], r["ratio"], r["status"]])
    write_outputs(cfg, cols, rows, ("k", ["normalized", "envelope"], "log"))
    print(f"shift-norms: DIAGNOSTIC ({len(rows)} rows, no pass/fail)")
    return 0


def cmd_dini(cfg):
    mod = make_modulus(cfg["omega"])
    s = cfg["s"]
    k_max = cfg["k_max"] or 10
    p = cfg["p"]
    pstar = max(p, p / (p - 1))
    value = dini_norm(mod, s)
    tail = k_tail(mod, k_max, power=1 - 1 / pstar)
    cols = ["omega", "s", "dini", "k_max", "p", "tail_power", "k_tail"]
    rows = [[cfg["omega"], s, value, k_max, p, 1 - 1 / pstar, tail]]
    write_outputs(cfg, cols, rows)
    print(f"dini: PASS (Dini^{s:g} = {value!r}; sum_(k>{k_max}) omega(2^-k) k^{1 - 1 / pstar:g} = {tail:.6e})")
    return 0


HANDLERS = {
    "verify-bcr": cmd_verify_bcr,
    "error-decay": cmd_error_decay,
    "verify-split": cmd_verify_split,
    "goodness-stats": cmd_goodness_stats,
    "verify-averaging": cmd_verify_averaging,
    "verify-representation": cmd_verify_representation,
    "shift-norms": cmd_shift_norms,
    "dini": cmd_dini,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dyadrep", description="Dyadic representation experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key = value file mirroring the flags")
    ap.add_argument("--preset", choices=sorted(PRESETS))
    ap.add_argument("--kernel", help="hilbert | power:<delta>")
    ap.add_argument("--f", help="function JSON or @file")
    ap.add_argument("--g", help="function JSON or @file")
    ap.add_argument("--a", type=int)
    ap.add_argument("--b", type=int)
    ap.add_argument("--k-max", dest="k_max", type=int)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--p", type=float)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out")
    ap.add_argument("--d", type=int)
    ap.add_argument("--k", help="integer or comma-separated list")
    ap.add_argument("--omega", help="power:<delta>[:<c>] | zero")
    ap.add_argument("--s", type=float)
    ap.add_argument("--gamma", help="e.g. 1,1 or 1,0;0,1")
    ap.add_argument("--convention", choices=rep.CONVENTIONS)
    ap.add_argument("--guard", type=int)
    ap.add_argument("--tol", type=float)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args = vars(ns)
    command = args.pop("command")
    try:
        cfg = build_config(command, args)
        return HANDLERS[command](cfg)
    except ConfigError as exc:
        print(f"{command}: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
