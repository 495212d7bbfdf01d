"""Batch experiment runner.

    dyadweights COMMAND --config PATH [--out DIR] [--seed INT] [--depth INT] [--quiet]

COMMAND is one of gen-weight, check, norms, stopping, shift-average,
full-report. The config is one JSON document; every key is optional:

    {
      "seed": 0, "N": 1, "D": 4, "window": [0, 1],
      "U": {"kind": "two_value", "params": {"a": 1, "b": 4}},
      "V": {"file": "V.json"},
      "lambda": 10, "rh_ladder": [2.25, 2.5, 3, 4, 6, 8], "rh_budget": 4,
      "num_sigma": 8, "band_radius": 2, "k_max": null,
      "hilbert": {"depth": 9, "window": [-4, 4], "levels": [-6, 6],
                  "num_samples": 2000, "checkpoints": [500, 1000, 2000],
                  "functions": ["haar_half", "haar_unit", "step_pair"],
                  "weight": {"kind": "scalar_power", "params": {"alpha": 0.3}},
                  "weight_depth": 6, "num_grids": 20}
    }

Weight specs are either ``{"kind", "params"}`` for ``weights.generate`` or
``{"file": path}`` (relative to the config) holding a serialized weight.
Randomness comes from named sub-streams of the top-level seed, so adding an
experiment never changes the draws of another.

Exit codes: 0 success, 1 config error, 2 numerical failure.
"""

import argparse
import json
import os
import sys
import zlib

import numpy as np

from . import conditions, operators, stopping
from . import hilbert_avg as ha
from .dyadic import DyadicGrid, GridError
from .matops import ConvergenceError, MatrixError
from .operators import OperatorError
from .weights import MatrixWeight, WeightError, generate, inverse_weight

COMMANDS = ("gen-weight", "check", "norms", "stopping", "shift-average", "full-report")

DEFAULTS = {
    "seed": 0,
    "N": 1,
    "D": 4,
    "window": [0.0, 1.0],
    "U": {"kind": "constant"},
    "V": None,
    "lambda": 10.0,
    "rh_ladder": list(conditions.RH_LADDER),
    "rh_budget": 4.0,
    "num_sigma": 8,
    "band_radius": 2,
    "k_max": None,
    "hilbert": {},
}

HILBERT_DEFAULTS = {
    "depth": 9,
    "window": list(ha.DEFAULT_WINDOW),
    "levels": list(ha.DEFAULT_LEVELS),
    "num_samples": 2000,
    "checkpoints": [],
    "functions": ["haar_half", "haar_unit", "step_pair"],
    "weight": {"kind": "scalar_power", "params": {"alpha": 0.3}},
    "weight_depth": 6,
    "num_grids": 20,
}


class ConfigError(ValueError):
    pass


def _line_of(text, key):
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def _fail(text, key, message):
    line = _line_of(text, key) if text else None
    where = f"line {line}: " if line else ""
    raise ConfigError(f"{where}{key}: {message}")


def substream(seed, name):
    """Integer seed for the named sub-stream of ``seed``."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def load_config(path, seed=None, depth=None):
    """Parse and validate a config file; returns ``(config, base_dir)``."""
    text = ""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError("line 1: config must be a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        _fail(text, unknown[0], "unknown key")
    cfg = {**DEFAULTS, **data}
    hil = cfg["hilbert"]
    if not isinstance(hil, dict):
        _fail(text, "hilbert", "must be an object")
    unknown = sorted(set(hil) - set(HILBERT_DEFAULTS))
    if unknown:
        _fail(text, unknown[0], "unknown key")
    cfg["hilbert"] = {**HILBERT_DEFAULTS, **hil}
    if seed is not None:
        cfg["seed"] = seed
    if depth is not None:
        cfg["D"] = depth
    _validate(cfg, text)
    cfg["_text"] = text
    base = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()
    return cfg, base


def _check_int(cfg, text, key, lo, hi=None):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < lo or (hi is not None and v > hi):
        rng = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
        _fail(text, key, f"expected an integer {rng}, got {v!r}")


def _check_window(win, text, key):
    if (not isinstance(win, list) or len(win) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in win)
            or not win[0] < win[1]):
        _fail(text, key, f"expected [lo, hi] with lo < hi, got {win!r}")


def _validate(cfg, text):
    _check_int(cfg, text, "seed", 0)
    _check_int(cfg, text, "N", 1, 8)
    _check_int(cfg, text, "D", 0, 10)
    _check_int(cfg, text, "num_sigma", 1)
    _check_int(cfg, text, "band_radius", 0)
    _check_window(cfg["window"], text, "window")
    if cfg["k_max"] is not None:
        _check_int(cfg, text, "k_max", 1)
    for key in ("lambda", "rh_budget"):
        v = cfg[key]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 1:
            _fail(text, key, f"must be a number greater than 1, got {v!r}")
    ladder = cfg["rh_ladder"]
    if not isinstance(ladder, list) or not ladder or not all(
            isinstance(r, (int, float)) and not isinstance(r, bool) and r > 2 for r in ladder):
        _fail(text, "rh_ladder", "must be a nonempty list of exponents greater than 2")
    for key in ("U", "V"):
        spec = cfg[key]
        if spec is None and key == "V":
            continue
        if not isinstance(spec, dict) or not ("kind" in spec) ^ ("file" in spec):
            _fail(text, key, 'weight spec needs exactly one of "kind" or "file"')
    hil = cfg["hilbert"]
    for key, lo, hi in (("depth", 2, 14), ("num_samples", 1, None), ("weight_depth", 1, 10),
                        ("num_grids", 1, None)):
        _check_int(hil, text, key, lo, hi)
    _check_window(hil["window"], text, "window")
    lv = hil["levels"]
    if not isinstance(lv, list) or len(lv) != 2 or not all(isinstance(x, int) for x in lv) or not lv[0] < lv[1]:
        _fail(text, "levels", f"expected [coarsest, finest] integers, got {lv!r}")
    for name in hil["functions"]:
        if name not in TEST_FUNCTIONS:
            _fail(text, "functions", f"unknown test function {name!r} (choose from {sorted(TEST_FUNCTIONS)})")
    if not isinstance(hil["checkpoints"], list) or not all(isinstance(c, int) for c in hil["checkpoints"]):
        _fail(text, "checkpoints", "must be a list of integers")


# test functions on a mesh, all supported in [0, 1)
def _indicator(x, a, b):
    return ((x >= a) & (x < b)).astype(float)


TEST_FUNCTIONS = {
    "haar_half": lambda x: (_indicator(x, 0.25, 0.5) - _indicator(x, 0.0, 0.25)) / np.sqrt(0.5),
    "haar_unit": lambda x: _indicator(x, 0.5, 1.0) - _indicator(x, 0.0, 0.5),
    "step_pair": lambda x: _indicator(x, 0.0, 0.25) - _indicator(x, 0.25, 0.5),
}


def _weight_error(cfg, name, message):
    line = _line_of(cfg.get("_text", ""), name)
    return ConfigError(f"{'line %d: ' % line if line else ''}{name}: {message}")


def build_weight(spec, cfg, base, name, window=None, depth=None, key=None):
    key = key or name
    window = tuple(cfg["window"] if window is None else window)
    depth = cfg["D"] if depth is None else depth
    if "file" in spec:
        path = os.path.join(base, spec["file"])
        try:
            with open(path) as fh:
                W = MatrixWeight.from_json(fh.read())
        except OSError as exc:
            raise _weight_error(cfg, key, f"cannot read weight file {path}: {exc}") from exc
        except WeightError as exc:
            raise _weight_error(cfg, key, str(exc)) from exc
        return W
    try:
        return generate(spec["kind"], spec.get("params"), N=spec.get("N", cfg["N"]), D=depth,
                        seed=substream(cfg["seed"], f"weight:{name}"), window=window)
    except WeightError as exc:
        raise _weight_error(cfg, key, str(exc)) from exc


def _weights(cfg, base):
    U = build_weight(cfg["U"], cfg, base, "U")
    V = U if cfg["V"] is None else build_weight(cfg["V"], cfg, base, "V")
    if not U.compatible(V):
        raise ConfigError("U and V must live on the same mesh with the same matrix size")
    return U, V


def cmd_gen_weight(cfg, base, out):
    U, V = _weights(cfg, base)
    out.text("U.json", U.to_json())
    out.text("V.json", V.to_json())
    return {"U": "U.json", "V": "V.json", "N": U.N, "D": U.depth}


def cmd_check(cfg, base, out):
    U, V = _weights(cfg, base)
    Vinv, Uinv = inverse_weight(V), inverse_weight(U)
    seed = substream(cfg["seed"], "check:rh")
    reports = [conditions.joint_a2(U, V), conditions.a2zero(U), conditions.a2zero(Vinv),
               conditions.a2zero(Uinv)]
    names = ["joint_a2", "a2zero_U", "a2zero_Vinv", "a2zero_Uinv"]
    rh = {}
    for label, W in (("U", U), ("Vinv", Vinv)):
        r, rep = conditions.rh_exponent_search(W, cfg["rh_budget"], cfg["rh_ladder"], seed=seed)
        rh[label] = {"r": r, "report": None if rep is None else rep.to_dict()}
    doc = {"reports": {n: r.to_dict() for n, r in zip(names, reports)}, "reverse_holder": rh}
    out.json("check.json", doc)
    return doc


def cmd_norms(cfg, base, out):
    U, V = _weights(cfg, base)
    seed = substream(cfg["seed"], "norms:sigma")
    scan = operators.sigma_norm_scan(U, V, cfg["num_sigma"], seed=seed, with_bound=True)
    out.text("sigma_scan.csv", scan.to_csv())
    f1, f2, prod = scan.bound
    summary = json.loads(operators.scan_summary_json(scan, U, V))
    diag = operators.diagonal_product_norm(U, V)
    shift = operators.shift_weighted_norm(U, V) if U.depth >= 2 else None
    band = None
    if U.depth >= 1:
        rng = np.random.default_rng(substream(cfg["seed"], "norms:band"))
        spec = operators.BandSpec.random(U.grid, cfg["band_radius"], rng)
        norm, bound, terms = operators.band_weighted_bound(spec, U, V)
        band = {"radius": cfg["band_radius"], "norm": norm, "bound": bound, "terms": terms}
    doc = {
        **summary,
        "embedding_norm": f1,
        "square_function_norm": f2,
        "diagonal_product_norm": diag,
        "shift_norm": shift,
        "band": band,
        "cross_checks": {
            "diag_squared_equals_a2": bool(abs(diag**2 - summary["a2"]) <= 1e-10 * max(1.0, summary["a2"])),
            "sigma_max_within_bound": bool(scan.max <= prod + 1e-8),
        },
    }
    out.json("norms.json", doc)
    return doc


def cmd_stopping(cfg, base, out):
    U, V = _weights(cfg, base)
    tree = stopping.build_tree(U, V, cfg["lambda"], k_max=cfg["k_max"])
    report = stopping.decay_report(tree)
    out.text("decay.csv", report.to_csv())
    rng = np.random.default_rng(substream(cfg["seed"], "stopping:cotlar"))
    f = rng.standard_normal((U.grid.num_cells, U.N))
    rows = stopping.cotlar_table(U, V, tree, f)
    out.text("cotlar.csv", _csv(["j", "k", "lhs", "reference", "ratio"], rows))
    doc = {
        **report.summary(),
        "counts": report.counts,
        "generations": [[[I.level, I.index] for I in g] for g in tree.generations],
        "pointwise_max": stopping.pointwise_bound_max(tree),
        "cotlar_max_ratio": max((r[4] for r in rows), default=0.0),
    }
    out.json("stopping.json", doc)
    return doc


def cmd_shift_average(cfg, base, out):
    hil = cfg["hilbert"]
    window, levels = tuple(hil["window"]), tuple(hil["levels"])
    mesh = DyadicGrid(hil["depth"], window)
    x = mesh.midpoints
    seed = substream(cfg["seed"], "shift:samples")
    averages = {}
    for name in hil["functions"]:
        _, rep = ha.mc_average(TEST_FUNCTIONS[name](x), hil["num_samples"], seed, window, levels,
                               checkpoints=hil["checkpoints"])
        out.text(f"shift_average_{name}.csv", ha.trace_csv(rep))
        averages[name] = rep.to_dict()
    W = build_weight(hil["weight"], cfg, base, "hilbert_weight", window, hil["weight_depth"],
                     key="weight")
    wmesh = W.grid
    tests = [TEST_FUNCTIONS[n](wmesh.midpoints) for n in hil["functions"]]
    scan = ha.weighted_hilbert_scan(W, W, tests, hil["num_grids"], substream(cfg["seed"], "shift:grids"))
    doc = {"averages": averages, "weighted_scan": scan}
    out.json("shift_average.json", doc)
    return doc


def _csv(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


class Output:
    """Writes report files into ``root`` (``None`` disables writing)."""

    def __init__(self, root, prefix=""):
        self.root, self.prefix = root, prefix
        if root is not None:
            os.makedirs(root, exist_ok=True)

    def text(self, name, content):
        if self.root is not None:
            with open(os.path.join(self.root, self.prefix + name), "w", newline="\n") as fh:
                fh.write(content)

    def json(self, name, doc):
        self.text(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")


HANDLERS = {
    "gen-weight": cmd_gen_weight,
    "check": cmd_check,
    "norms": cmd_norms,
    "stopping": cmd_stopping,
    "shift-average": cmd_shift_average,
}


def run(command, cfg, base, out_dir):
    out = Output(out_dir)
    if command == "full-report":
        doc = {name: HANDLERS[name](cfg, base, out) for name in HANDLERS}
        out.json("full_report.json", doc)
        return doc
    return HANDLERS[command](cfg, base, out)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="dyadweights", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", metavar="PATH")
    parser.add_argument("--out", metavar="DIR", default="out")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--depth", type=int)
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    try:
        cfg, base = load_config(args.config, args.seed, args.depth)
        doc = run(args.command, cfg, base, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (GridError, WeightError, OperatorError, MatrixError, ConvergenceError,
            FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
