"""Command-line entry point.

Every run writes its artifacts into ``--out-dir`` through one writer, then a
``manifest.json`` listing each file with its SHA-256.  Equal config and seed
give byte-identical files (the benchmark's wall times excepted).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, INITS, METHODS, ExperimentConfig
from .errors import ChoquardError, ConfigError, ConvergenceError

log = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).with_name("schemas")
SCHEMAS = {
    "constants": "constants.v1",
    "energy": "energy.v1",
    "solve": "solve_report.v1",
    "linking": "linking.v1",
    "nonexist": "probe_report.v1",
    "field": "field_summary.v1",
    "bubble_fit": "bubble_fit.v1",
    "sidecar": "snapshot_sidecar.v1",
    "manifest": "manifest.v1",
}

EXIT_OK, EXIT_CONVERGENCE, EXIT_CONFIG, EXIT_IO = 0, 2, 3, 4


def load_schema(name: str) -> dict:
    """Embedded JSON schema by short name (``"solve"``) or file stem (``"solve_report.v1"``)."""
    stem = SCHEMAS.get(name, name)
    return json.loads((SCHEMA_DIR / f"{stem}.json").read_text())


def _json_text(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


class Artifacts:
    """Single writer for one run: every file goes through here and into the manifest."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.entries: list[dict] = []

    def _target(self, name: str | Path) -> Path:
        p = Path(name)
        return p if p.is_absolute() or p.parent != Path(".") else self.out_dir / p

    def record(self, path: Path, schema: str | None = None) -> Path:
        path = Path(path)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        try:
            shown = path.resolve().relative_to(self.out_dir.resolve()).as_posix()
        except ValueError:
            shown = str(path)
        self.entries = [e for e in self.entries if e["path"] != shown]
        self.entries.append({"path": shown, "sha256": digest, "bytes": path.stat().st_size, "schema": schema})
        return path

    def json(self, name, data, schema: str | None = None) -> Path:
        path = self._target(name)
        path.write_text(_json_text(data))
        return self.record(path, SCHEMAS.get(schema, schema))

    def csv(self, name, columns, rows) -> Path:
        path = self._target(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(csv_text(columns, rows))
        return self.record(path)

    def manifest(self, cfg: ExperimentConfig) -> Path:
        doc = {
            "manifest_version": 1,
            "package_version": __version__,
            "command": cfg.command,
            "seed": cfg.seed,
            "config": json.loads(cfg.to_json()),
            "files": sorted(self.entries, key=lambda e: e["path"]),
        }
        path = self.out_dir / "manifest.json"
        path.write_text(_json_text(doc))
        return path


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def _cell(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


# -- experiment helpers -------------------------------------------------------


def _domain(cfg: ExperimentConfig):
    from .field import make_box_domain

    return make_box_domain(cfg.dim, cfg.L, cfg.n, cfg.shape)


def _initial_field(cfg: ExperimentConfig, domain):
    from .field import ScalarField, read_snapshot
    from .spectral import dirichlet_eigenpairs
    from .varsolve import smooth_random_field

    if cfg.init == "e1":
        return dirichlet_eigenpairs(domain, 1, seed=cfg.seed).eigenfields[0]
    if cfg.init == "gaussian":
        width = max(domain.half_width / 4.0, 2.0 * domain.h)
        return ScalarField.masked(domain, np.exp(-((domain.radius() / width) ** 2)))
    if cfg.init == "random":
        return smooth_random_field(domain, cfg.seed)
    u = read_snapshot(cfg.field_path)
    if not u.domain.same_as(domain):
        raise ConfigError("init field lives on a different grid than the config")
    return u


def _echo(cfg: ExperimentConfig, text: str, kind: str) -> None:
    if cfg.echo == kind:
        sys.stdout.write(text)


def _plots(cfg, art: Artifacts, report, stem: str) -> None:
    if not cfg.plots:
        return
    from .plotting import emit_plot

    if report.trace:
        art.record(emit_plot({"y": report.trace, "label": "objective"}, "trace", art.out_dir / f"{stem}_trace.svg"))
    if report.field is not None:
        d = report.field.domain
        sel = d.mask
        series = {"x": d.radius()[sel], "y": report.field.values[sel], "label": "u"}
        art.record(emit_plot(series, "radial_profile", art.out_dir / f"{stem}_profile.svg"))


# -- subcommands --------------------------------------------------------------


def _cmd_constants(cfg, art):
    from .constants import sharp_constants

    data = sharp_constants(cfg.dim, cfg.mu).as_dict()
    art.json("constants.json", data, "constants")
    cols = tuple(data)
    art.csv(cfg.csv_path or "constants.csv", cols, [data])
    _echo(cfg, _json_text(data), "json")
    _echo(cfg, csv_text(cols, [data]), "csv")


def _field_summary(u) -> dict:
    from .field import grad_sq_integral, l2_sq_integral

    meta = u.domain.metadata()
    meta.pop("mask_runs", None)
    return {
        "domain": meta,
        "grad_sq": grad_sq_integral(u),
        "l2_sq": l2_sq_integral(u),
        "max_abs": float(np.abs(u.values).max()),
    }


def _cmd_field(cfg, art):
    from .field import read_snapshot, write_snapshot

    if cfg.action == "dump":
        domain = _domain(cfg)
        u = _initial_field(cfg, domain)
        path = art._target(cfg.field_path or "field.chqf")
        side = write_snapshot(path, u, extra={"init": cfg.init, "seed": cfg.seed})
        art.record(path)
        art.record(side, SCHEMAS["sidecar"])
    else:
        u = read_snapshot(cfg.field_path)
    summary = _field_summary(u)
    art.json("field.json", summary, "field")
    _echo(cfg, _json_text(summary), "json")


def _cmd_spectrum(cfg, art):
    from .spectral import dirichlet_eigenpairs

    basis = dirichlet_eigenpairs(_domain(cfg), cfg.k, seed=cfg.seed)
    cols = ("index", "eigenvalue", "residual")
    rows = [
        {"index": i + 1, "eigenvalue": float(w), "residual": float(r)}
        for i, (w, r) in enumerate(zip(basis.eigenvalues, basis.residuals))
    ]
    art.csv(cfg.csv_path or "spectrum.csv", cols, rows)
    _echo(cfg, csv_text(cols, rows), "csv")


def _cmd_energy(cfg, art):
    from .energy import energy, make_context
    from .field import read_snapshot

    u = read_snapshot(cfg.field_path)
    data = energy(make_context(u.domain, cfg.mu, cfg.lam), u).as_dict()
    art.json("energy.json", data, "energy")
    _echo(cfg, _json_text(data), "json")


def _cmd_bubble_scan(cfg, art):
    from .bubbles import CSV_COLUMNS, bubble_scan, deficit_rate_fit, inradius
    from .errors import FitError

    domain = _domain(cfg)
    delta = cfg.delta if cfg.delta is not None else inradius(domain) / 2.0
    reports = bubble_scan(domain, cfg.mu, cfg.lam, cfg.eps_grid, delta, threads=cfg.threads)
    rows = [r.row() for r in reports]
    art.csv(cfg.csv_path or "bubble_scan.csv", CSV_COLUMNS, rows)
    _echo(cfg, csv_text(CSV_COLUMNS, rows), "csv")
    try:
        fit = deficit_rate_fit(reports, cfg.dim)
    except FitError as exc:
        log.info("no rate fit: %s", exc)
        return
    doc = {
        "exponent": fit.exponent,
        "log_slope": fit.log_slope,
        "r_squared": fit.r_squared,
        "model": fit.model,
        "constant": fit.constant,
        "ratios": list(fit.ratios),
        "ratio_spread": fit.ratio_spread,
    }
    art.json("bubble_fit.json", doc, "bubble_fit")
    if cfg.plots:
        from .plotting import emit_plot

        eps = [r["epsilon"] for r in rows]
        deficit = [r["deficit"] for r in rows]
        if all(v > 0 for v in deficit):
            art.record(emit_plot({"x": eps, "y": deficit}, "rate_fit", art.out_dir / "bubble_fit.svg"))


def _solve_options(cfg):
    from .varsolve import SolveOptions

    return SolveOptions(tol=cfg.tol, max_iters=cfg.max_iters, starts=cfg.starts, seed=cfg.seed, threads=cfg.threads)


def _cmd_solve(cfg, art):
    from .energy import make_context
    from .field import write_snapshot
    from .varsolve import find_critical_point, minimize_quotient

    domain = _domain(cfg)
    ctx = make_context(domain, cfg.mu, cfg.lam)
    init = _initial_field(cfg, domain)
    run = minimize_quotient if cfg.method == "quotient" else find_critical_point
    rep = run(ctx, init, _solve_options(cfg))
    data = rep.as_dict()
    data.update(method=cfg.method, seed=cfg.seed)
    art.json("solve.json", data, "solve")
    path = art.out_dir / "solve_field.chqf"
    side = write_snapshot(path, rep.field, extra={"verdict": rep.verdict.value})
    art.record(path)
    art.record(side, SCHEMAS["sidecar"])
    _plots(cfg, art, rep, "solve")
    _echo(cfg, _json_text(data), "json")


def _cmd_linking(cfg, art):
    from .bubbles import BubbleSpec, inradius, make_bubble_field
    from .energy import make_context
    from .spectral import dirichlet_eigenpairs
    from .varsolve import LinkingSpec, linking_level

    if len(cfg.eps_grid) != 1:
        raise ConfigError("linking needs exactly one --eps")
    domain = _domain(cfg)
    delta = cfg.delta if cfg.delta is not None else inradius(domain) / 2.0
    basis = dirichlet_eigenpairs(domain, max(cfg.j, 1), seed=cfg.seed)
    bubble = make_bubble_field(BubbleSpec(cfg.eps_grid[0], delta, domain), cfg.mu)
    ctx = make_context(domain, cfg.mu, cfg.lam)
    res = linking_level(ctx, LinkingSpec(cfg.j, cfg.eps_grid[0], basis, bubble), _solve_options(cfg))
    data = res.as_dict()
    data.update(j=cfg.j, epsilon=cfg.eps_grid[0], delta=delta, **{"lambda": cfg.lam})
    art.json("linking.json", data, "linking")
    _echo(cfg, _json_text(data), "json")


def _cmd_nonexist(cfg, art):
    from dataclasses import replace

    from .energy import make_context
    from .varsolve import nonexistence_probe

    domain = _domain(cfg)
    ctx = make_context(domain, cfg.mu, cfg.lam)
    opts = replace(_solve_options(cfg), max_iters=cfg.max_iters)
    rep = nonexistence_probe(ctx, cfg.starts, opts)
    data = rep.as_dict()
    data.update(seed=cfg.seed, **{"lambda": cfg.lam})
    art.json("nonexist.json", data, "nonexist")
    _echo(cfg, _json_text(data), "json")


def _cmd_bench_riesz(cfg, art):
    from .bench import BENCH_COLUMNS, riesz_bench

    rows = riesz_bench(cfg.dim, [int(s) for s in cfg.sizes], cfg.mu, cfg.repeats, seed=cfg.seed)
    art.csv(cfg.csv_path or "bench_riesz.csv", BENCH_COLUMNS, rows)
    _echo(cfg, csv_text(BENCH_COLUMNS, rows), "csv")


_HANDLERS = {
    "constants": _cmd_constants,
    "field": _cmd_field,
    "spectrum": _cmd_spectrum,
    "energy": _cmd_energy,
    "bubble-scan": _cmd_bubble_scan,
    "solve": _cmd_solve,
    "linking": _cmd_linking,
    "nonexist": _cmd_nonexist,
    "bench-riesz": _cmd_bench_riesz,
}


def run_experiment(cfg: ExperimentConfig) -> tuple[int, list[Path]]:
    """Validate, run, write artifacts plus manifest; returns ``(exit_code, files)``."""
    try:
        cfg.validate()
        art = Artifacts(cfg.out_dir)
        (art.out_dir / "config.txt").write_text(cfg.to_text())
        art.record(art.out_dir / "config.txt")
        _HANDLERS[cfg.command](cfg, art)
        manifest = art.manifest(cfg)
    except ConvergenceError as exc:
        log.error("convergence failure: %s", exc)
        return EXIT_CONVERGENCE, []
    except ChoquardError as exc:
        # every other package error is a bad parameter caught before or at setup
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG, []
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO, []
    return EXIT_OK, [art.out_dir / e["path"] for e in art.entries] + [manifest]


# -- argument parsing ---------------------------------------------------------


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads for sweeps and multistarts")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base seed for every random draw")
    g.add_argument("--out-dir", dest="out_dir", default=argparse.SUPPRESS, help="artifact directory")
    g.add_argument("--config", default=None, help="key=value or JSON config; flags override it")

    def problem(p, shape="full_box", mu=True, lam=True, grid=True):
        p.add_argument("--dim", type=int, default=argparse.SUPPRESS, help="space dimension N >= 3")
        if mu:
            p.add_argument("--mu", type=float, default=argparse.SUPPRESS, help="Riesz exponent in (0, N)")
        if lam:
            p.add_argument("--lambda", dest="lam", type=float, default=argparse.SUPPRESS, help="linear coefficient")
        if grid:
            p.add_argument("--shape", default=argparse.SUPPRESS, help=f"full_box | ball[:R] (default {shape})")
            p.add_argument("--n", type=int, default=argparse.SUPPRESS, help="nodes per axis")
            p.add_argument("--L", type=float, default=argparse.SUPPRESS, help="box half-width")

    def solver(p):
        p.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="H^-1 residual tolerance")
        p.add_argument("--max-iters", dest="max_iters", type=int, default=argparse.SUPPRESS)
        p.add_argument("--plots", action="store_const", const=True, default=argparse.SUPPRESS, help="write SVG figures")

    def echo(p, kinds=("json",)):
        if "json" in kinds:
            p.add_argument("--json", dest="echo", action="store_const", const="json", default=argparse.SUPPRESS,
                           help="print the JSON result")
        if "csv" in kinds:
            p.add_argument("--csv", dest="csv", nargs="?", const="", default=argparse.SUPPRESS,
                           help="CSV path (default in --out-dir); bare --csv also prints it")

    parser = argparse.ArgumentParser(
        prog="choquard",
        description="Numerical experiments for the critical Choquard equation with a linear perturbation.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("constants", parents=[common], help="sharp constants and critical exponents")
    problem(p, lam=False, grid=False)
    echo(p, ("json", "csv"))

    p = sub.add_parser("field", parents=[common], help="write or inspect a field snapshot")
    p.add_argument("action", choices=("dump", "load"))
    p.add_argument("path", nargs="?", default=None, help="snapshot path")
    problem(p, mu=False, lam=False)
    p.add_argument("--init", choices=[i for i in INITS if i != "field"], default=argparse.SUPPRESS)
    echo(p)

    p = sub.add_parser("spectrum", parents=[common], help="lowest Dirichlet eigenpairs")
    problem(p, mu=False, lam=False)
    p.add_argument("--k", type=int, default=argparse.SUPPRESS, help="number of eigenpairs")
    echo(p, ("csv",))

    p = sub.add_parser("energy", parents=[common], help="energy breakdown of a stored field")
    p.add_argument("--field", dest="field_path", required=True)
    problem(p, grid=False)
    echo(p)

    p = sub.add_parser("bubble-scan", parents=[common], help="truncated-bubble quotients over an eps grid")
    problem(p)
    p.add_argument("--eps-grid", dest="eps_grid", type=_floats, default=argparse.SUPPRESS)
    p.add_argument("--delta", type=float, default=argparse.SUPPRESS, help="cutoff radius (default inradius/2)")
    p.add_argument("--plots", action="store_const", const=True, default=argparse.SUPPRESS)
    echo(p, ("csv",))

    p = sub.add_parser("solve", parents=[common], help="quotient descent or critical-point search")
    problem(p)
    solver(p)
    p.add_argument("--method", choices=METHODS, default=argparse.SUPPRESS)
    p.add_argument("--init", choices=INITS, default=argparse.SUPPRESS)
    p.add_argument("--init-field", dest="field_path", default=argparse.SUPPRESS)
    echo(p)

    p = sub.add_parser("linking", parents=[common], help="maximum quotient over span{e_1..e_j, u_eps}")
    problem(p)
    p.add_argument("--j", type=int, default=argparse.SUPPRESS)
    p.add_argument("--eps", dest="eps_grid", type=lambda t: [float(t)], default=argparse.SUPPRESS)
    p.add_argument("--delta", type=float, default=argparse.SUPPRESS)
    p.add_argument("--starts", type=int, default=argparse.SUPPRESS)
    echo(p)

    p = sub.add_parser("nonexist", parents=[common], help="multistart probe for nontrivial solutions")
    problem(p, shape="ball")
    solver(p)
    p.add_argument("--starts", type=int, default=argparse.SUPPRESS)
    echo(p)

    p = sub.add_parser("bench-riesz", parents=[common], help="direct summation versus FFT timing")
    problem(p, lam=False, grid=False)
    p.add_argument("--sizes", type=_floats, default=argparse.SUPPRESS, help="grid sizes per axis")
    p.add_argument("--repeats", type=int, default=argparse.SUPPRESS)
    echo(p, ("csv",))
    return parser


_COMMAND_DEFAULTS = {
    "nonexist": {"shape": "ball", "lam": -1.0, "starts": 10, "max_iters": 200, "init": "random"},
    "linking": {"starts": 8},
}


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if ns.config:
        try:
            base = ExperimentConfig.load(ns.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config {ns.config}: {exc}") from exc
        if base.command != ns.command:
            log.info("config command %s replaced by %s", base.command, ns.command)
        values.update(json.loads(base.to_json()))
    else:
        values.update(_COMMAND_DEFAULTS.get(ns.command, {}))
    args = {k: v for k, v in vars(ns).items() if k not in ("config", "command", "path", "csv")}
    values.update(args)
    values["command"] = ns.command
    if ns.command == "field":
        values["action"] = ns.action
        if ns.path:
            values["field_path"] = ns.path
    if "csv" in vars(ns):
        if ns.csv:
            values["csv_path"] = ns.csv
        else:
            values["echo"] = "csv"
    return ExperimentConfig.from_mapping(values)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    code, _ = run_experiment(cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
