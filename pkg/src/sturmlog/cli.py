"""Command-line experiments with reproducible manifests.

    sturmlog <experiment> [--config FILE] [--set key=value ...] [--out DIR]
    sturmlog compare MANIFEST_A MANIFEST_B

Configuration is a flat ``key = value`` file; ``--set`` overrides it.  Every
run writes ``manifest.json`` (resolved config, version, timings, output
checksums) next to its CSV/JSON outputs.  Exit status: 0 on success, 2 on
validation errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .cfrac import RotationNumber, density_statistic, exponential_growth_bound
from .errors import NumericalError, SchemaMismatch, SturmlogError, ValidationError
from .sturmian import PotentialSpec, potential_window, write_csv as write_potential_csv

EXPERIMENTS = ("cfrac-report", "potential-dump", "growth-fit", "mfunction-scan", "jl-check",
               "spectrum-bands", "dynamics-run", "full-pipeline")

COMMON = {"lambda": "1.0", "theta-kind": "golden", "beta": "0", "seed": "0",
          "precision-digits": "50"}

DEFAULTS = {
    "cfrac-report": {"n-terms": "20"},
    "potential-dump": {"n-from": "1", "n-to": "8"},
    "growth-fit": {"energies": "spectrum:8:20:50", "L-grid": "logspace:2:5:31",
                   "mode": "lower-envelope"},
    "mfunction-scan": {"energies": "linspace:-3:3:13", "eps-grid": "logspace:-3:0:4",
                       "tol": "1e-12"},
    "jl-check": {"energies": "bands:8:50", "eps-grid": "logspace:-4:-1:10",
                 "phi-grid": "phases:8", "tol": "1e-12"},
    "spectrum-bands": {"approximant-index": "8", "trend-from": "4", "trend-to": "10"},
    "dynamics-run": {"N": "1024", "T-grid": "logspace:1:3:9", "moments": "1,2",
                     "points-per-decade": "32", "tol": "1e-14", "initial-site": "0"},
}
DEFAULTS["full-pipeline"] = {}


# ---------------------------------------------------------------------------
# parsing

def read_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _number(text: str) -> float:
    t = text.strip().lower()
    if t in ("pi", "-pi"):
        return math.copysign(math.pi, -1 if t.startswith("-") else 1)
    return float(t)


def parse_grid(text: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """``logspace:a:b:n``, ``linspace:a:b:n``, ``phases:n`` (k pi / n),
    ``random-phases:n`` (seeded) or a comma list of numbers."""
    parts = text.split(":")
    kind = parts[0]
    try:
        if kind in ("logspace", "linspace") and len(parts) == 4:
            a, b, n = _number(parts[1]), _number(parts[2]), int(parts[3])
            if n < 1:
                raise ValueError
            return (np.logspace if kind == "logspace" else np.linspace)(a, b, n)
        if kind == "phases" and len(parts) == 2:
            n = int(parts[1])
            return np.arange(n) * math.pi / n
        if kind == "random-phases" and len(parts) == 2:
            rng = rng or np.random.default_rng(0)
            return np.sort(rng.uniform(0, math.pi, int(parts[1])))
        return np.array([_number(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise ValidationError(f"cannot parse grid {text!r}") from None


def _int(cfg, key):
    try:
        return int(cfg[key])
    except ValueError:
        raise ValidationError(f"{key}: expected an integer, got {cfg[key]!r}") from None


def _float(cfg, key):
    try:
        return float(cfg[key])
    except ValueError:
        raise ValidationError(f"{key}: expected a number, got {cfg[key]!r}") from None


def resolve(experiment: str, file_cfg: dict, overrides: dict) -> dict[str, str]:
    if experiment not in EXPERIMENTS:
        raise ValidationError(f"unknown experiment {experiment!r}")
    keys = dict(COMMON)
    if experiment == "full-pipeline":
        for d in DEFAULTS.values():
            keys.update(d)
    else:
        keys.update(DEFAULTS[experiment])
    cfg = dict(keys)
    for source in (file_cfg, overrides):
        for k, v in source.items():
            if k not in keys:
                raise ValidationError(f"unknown key {k!r} for experiment {experiment}")
            cfg[k] = v
    return cfg


class Context:
    """Validated parameters shared by the experiment runners."""

    def __init__(self, cfg: dict[str, str]):
        self.cfg = cfg
        self.lam = _float(cfg, "lambda")
        self.seed = _int(cfg, "seed")
        self.rng = np.random.default_rng(self.seed)
        digits = _int(cfg, "precision-digits")
        if digits < 30:
            raise ValidationError("precision-digits must be >= 30")
        self.theta = RotationNumber.named(cfg["theta-kind"], digits=digits)
        try:
            beta = Fraction(cfg["beta"])
        except ValueError:
            raise ValidationError(f"beta: cannot parse {cfg['beta']!r}") from None
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            self.spec = PotentialSpec.sturmian(self.lam, self.theta, beta)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        self.beta = self.spec.beta
        for k in ("tol",):
            if k in cfg and not _float(cfg, k) > 0:
                raise ValidationError(f"{k} must be positive")
        self._validate_grids()

    def _validate_grids(self):
        c = self.cfg
        if "eps-grid" in c:
            eps = parse_grid(c["eps-grid"])
            if np.any(eps <= 0):
                raise ValidationError("eps-grid: values must be positive")
        if "L-grid" in c:
            L = parse_grid(c["L-grid"])
            if np.any(L <= 0):
                raise ValidationError("L-grid: values must be positive")
        if "T-grid" in c and np.any(parse_grid(c["T-grid"]) <= 0):
            raise ValidationError("T-grid: values must be positive")
        if "N" in c and _int(c, "N") < 8:
            raise ValidationError("N must be >= 8")
        if "energies" in c:
            self.energy_source(check_only=True)

    def energy_source(self, check_only: bool = False):
        """``bands:index:count``, ``spectrum:index_from:index_to:count`` or a grid."""
        text = self.cfg["energies"]
        parts = text.split(":")
        if parts[0] in ("bands", "spectrum"):
            try:
                nums = [int(x) for x in parts[1:]]
            except ValueError:
                raise ValidationError(f"energies: cannot parse {text!r}") from None
            if (parts[0] == "bands" and len(nums) != 2) or (parts[0] == "spectrum" and len(nums) != 3):
                raise ValidationError(f"energies: cannot parse {text!r}")
            if any(n < 1 for n in nums):
                raise ValidationError("energies: indices and counts must be positive")
            if check_only:
                return None
            from .spectrum import approximant_bands, refine_into_spectrum, sample_energies
            idx, count = nums[0], nums[-1]
            E = sample_energies(approximant_bands(self.lam, self.theta, idx, self.beta), count)
            if parts[0] == "spectrum":
                E = refine_into_spectrum(self.lam, self.theta, E, idx, nums[1], self.beta)
            return E
        return parse_grid(text, self.rng)


# ---------------------------------------------------------------------------
# outputs

def _write_rows(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _dump_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# experiments

def run_cfrac_report(ctx: Context, out: Path) -> list[str]:
    n = _int(ctx.cfg, "n-terms")
    if n < 1:
        raise ValidationError("n-terms must be >= 1")
    terms = ctx.theta.terms_upto(n)
    cs = ctx.theta.convergents(n)
    _dump_json(out / "cfrac.json", {
        "theta-kind": ctx.cfg["theta-kind"], "terms": list(terms),
        "convergents": [[c.p, c.q] for c in cs],
        "density_statistic": density_statistic(terms),
        "exponential_growth_bound": exponential_growth_bound(cs)})
    return ["cfrac.json"]


def run_potential_dump(ctx: Context, out: Path) -> list[str]:
    a, b = _int(ctx.cfg, "n-from"), _int(ctx.cfg, "n-to")
    if b < a:
        raise ValidationError("n-to must be >= n-from")
    write_potential_csv(potential_window(ctx.spec, a, b), out / "potential.csv")
    return ["potential.csv"]


def run_growth_fit(ctx: Context, out: Path) -> list[str]:
    from .transfer import growth_scan
    E = ctx.energy_source()
    fits = growth_scan(ctx.spec, E, parse_grid(ctx.cfg["L-grid"]), mode=ctx.cfg["mode"])
    rows = [{"E": f.energy, "gamma_hat": f.gamma_hat, "C_hat": f.C_hat,
             "residual": f.residual, "power_law_valid": f.power_law_valid} for f in fits]
    _write_rows(out / "growth.csv", ["E", "gamma_hat", "C_hat", "residual", "power_law_valid"], rows)
    return ["growth.csv"]


def run_mfunction_scan(ctx: Context, out: Path) -> list[str]:
    from .weyl import SCAN_COLUMNS, mfunction_scan
    rows = mfunction_scan(ctx.spec, ctx.energy_source(), parse_grid(ctx.cfg["eps-grid"]),
                          tol=_float(ctx.cfg, "tol"))
    _write_rows(out / "mfunction.csv", SCAN_COLUMNS, rows)
    return ["mfunction.csv"]


def run_jl_check(ctx: Context, out: Path) -> list[str]:
    from .jl import JL_COLUMNS, jl_grid
    rows = jl_grid(ctx.spec, ctx.energy_source(), parse_grid(ctx.cfg["eps-grid"]),
                   parse_grid(ctx.cfg["phi-grid"], ctx.rng), tol=_float(ctx.cfg, "tol"))
    _write_rows(out / "jl.csv", JL_COLUMNS, rows)
    return ["jl.csv"]


def run_spectrum_bands(ctx: Context, out: Path) -> list[str]:
    from .spectrum import approximant_bands, hausdorff_distance
    idx = _int(ctx.cfg, "approximant-index")
    lo, hi = _int(ctx.cfg, "trend-from"), _int(ctx.cfg, "trend-to")
    if idx < 1 or lo < 1 or hi < lo:
        raise ValidationError("approximant indices must be positive with trend-from <= trend-to")
    main = approximant_bands(ctx.lam, ctx.theta, idx, ctx.beta)
    (out / "bands.json").write_text(main.dumps() + "\n")
    sets = [approximant_bands(ctx.lam, ctx.theta, k, ctx.beta) for k in range(lo, hi + 1)]
    rows = []
    for k, bs in zip(range(lo, hi + 1), sets):
        nxt = approximant_bands(ctx.lam, ctx.theta, k + 1, ctx.beta) if k == hi else sets[k - lo + 1]
        rows.append({"index": k, "p": bs.approximant.p, "q": bs.approximant.q,
                     "bands": len(bs.bands), "total_bandwidth": bs.total_bandwidth,
                     "hausdorff_to_next": hausdorff_distance(bs, nxt)})
    _write_rows(out / "trend.csv", ["index", "p", "q", "bands", "total_bandwidth",
                                    "hausdorff_to_next"], rows)
    return ["bands.json", "trend.csv"]


def run_dynamics(ctx: Context, out: Path) -> list[str]:
    from .dynamics import LatticeState, build_box, transport_run, write_records_csv
    N = _int(ctx.cfg, "N")
    moments = [float(m) for m in parse_grid(ctx.cfg["moments"])]
    if not moments or min(moments) <= 0:
        raise ValidationError("moments must be positive")
    op = build_box(ctx.spec, N)
    init = LatticeState.delta(op, _int(ctx.cfg, "initial-site"))
    run = transport_run(op, init, parse_grid(ctx.cfg["T-grid"]), moments=moments,
                        points_per_decade=_int(ctx.cfg, "points-per-decade"),
                        tol=_float(ctx.cfg, "tol"))
    write_records_csv(run.records, out / "transport.csv")
    return ["transport.csv"]


RUNNERS = {
    "cfrac-report": run_cfrac_report,
    "potential-dump": run_potential_dump,
    "growth-fit": run_growth_fit,
    "mfunction-scan": run_mfunction_scan,
    "jl-check": run_jl_check,
    "spectrum-bands": run_spectrum_bands,
    "dynamics-run": run_dynamics,
}


def run(experiment: str, cfg: dict[str, str], out: Path) -> dict:
    """Validate, run and write the manifest; returns the manifest."""
    ctx = Context(cfg)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    outputs = []
    names = list(RUNNERS) if experiment == "full-pipeline" else [experiment]
    for name in names:
        t0 = time.perf_counter()
        files = RUNNERS[name](ctx, out)
        timings[name] = time.perf_counter() - t0
        outputs.extend(files)
    manifest = {
        "experiment": experiment,
        "config": dict(sorted(cfg.items())),
        "seed": ctx.seed,
        "version": __version__,
        "timings": timings,
        "outputs": {f: hashlib.sha256((out / f).read_bytes()).hexdigest() for f in outputs},
    }
    _dump_json(out / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# manifest comparison

MANIFEST_FIELDS = ("experiment", "config", "seed", "version", "outputs")


def _load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        m = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaMismatch(f"cannot read manifest {path}: {e}") from None
    missing = [f for f in MANIFEST_FIELDS if f not in m]
    if missing:
        raise SchemaMismatch(f"{path}: missing fields {missing}")
    return m, path.parent


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _compare_csv(pa: Path, pb: Path, rtol: float, atol: float, col_tol: dict) -> dict:
    ha, ra = _read_csv(pa)
    hb, rb = _read_csv(pb)
    if ha != hb:
        raise SchemaMismatch(f"{pa.name}: columns differ ({ha} vs {hb})")
    if len(ra) != len(rb):
        return {"status": "differs", "reason": f"row count {len(ra)} vs {len(rb)}"}
    cols = {}
    status = "identical"
    for j, col in enumerate(ha):
        a = [r[j] for r in ra]
        b = [r[j] for r in rb]
        if a == b:
            continue
        try:
            x, y = np.array(a, dtype=float), np.array(b, dtype=float)
        except ValueError:
            cols[col] = {"status": "differs"}
            status = "differs"
            continue
        r_, a_ = col_tol.get(col, (rtol, atol))
        diff = float(np.max(np.abs(x - y)))
        ok = bool(np.all(np.abs(x - y) <= a_ + r_ * np.abs(y)))
        cols[col] = {"max_abs_diff": diff, "status": "within-tolerance" if ok else "differs"}
        if not ok:
            status = "differs"
        elif status == "identical":
            status = "within-tolerance"
    return {"status": status, "columns": cols}


def compare_manifests(a, b, rtol: float = 1e-9, atol: float = 1e-12,
                      column_tolerances: dict | None = None) -> dict:
    """Field-level diff of two runs; CSV outputs are compared column by column.

    An empty ``fields`` dict and every output ``identical`` means the runs agree.
    """
    ma, da = _load_manifest(a)
    mb, db = _load_manifest(b)
    col_tol = column_tolerances or {}
    fields = {}
    for f in ("experiment", "seed", "version"):
        if ma[f] != mb[f]:
            fields[f] = [ma[f], mb[f]]
    keys = sorted(set(ma["config"]) | set(mb["config"]))
    cfg_diff = {k: [ma["config"].get(k), mb["config"].get(k)] for k in keys
                if ma["config"].get(k) != mb["config"].get(k)}
    if cfg_diff:
        fields["config"] = cfg_diff
    outputs = {}
    for name in sorted(set(ma["outputs"]) | set(mb["outputs"])):
        if name not in ma["outputs"] or name not in mb["outputs"]:
            outputs[name] = {"status": "missing"}
        elif ma["outputs"][name] == mb["outputs"][name]:
            outputs[name] = {"status": "identical"}
        elif name.endswith(".csv"):
            outputs[name] = _compare_csv(da / name, db / name, rtol, atol, col_tol)
        else:
            outputs[name] = {"status": "differs"}
    return {"fields": fields, "outputs": outputs,
            "identical": not fields and all(o["status"] == "identical" for o in outputs.values())}


# ---------------------------------------------------------------------------

def _parse_set(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sturmlog", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", help="flat key = value file")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a key")
        s.add_argument("--out", default="out", help="output directory (default: out)")
    c = sub.add_parser("compare", help="diff two run manifests")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--rtol", type=float, default=1e-9)
    c.add_argument("--atol", type=float, default=1e-12)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            report = compare_manifests(args.a, args.b, args.rtol, args.atol)
            print(json.dumps(report, indent=2, sort_keys=True))
            return 0
        file_cfg = read_config(args.config) if args.config else {}
        cfg = resolve(args.command, file_cfg, _parse_set(args.set))
        manifest = run(args.command, cfg, Path(args.out))
        print(f"wrote {', '.join(manifest['outputs'])} and manifest.json to {args.out}")
        return 0
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    except SturmlogError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
