"""Batch front end: ``python -m kiteot {solve,verify,conformal,simplex,export}``.

Exit codes
----------
0 success (all selected checks pass), 1 a check failed, 2 solver did not
converge, 3 I/O failure, 4 missing plan, 5 insufficient radii, 64 bad usage
or configuration.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger("kiteot")

EXIT_OK, EXIT_CHECK, EXIT_NOCONV, EXIT_IO, EXIT_NOPLAN, EXIT_RADII, EXIT_USAGE = 0, 1, 2, 3, 4, 5, 64
VERIFY_CHECKS = ("symmetry", "quadrants", "monotonicity", "ma-residual", "reduction")
EXPORT_KINDS = ("domains", "cells", "grid", "hessian", "cloud")
FIXTURES = {"log3": 3.0}
# fields that locate files or set parallelism; they do not change any result
_UNHASHED = ("out", "plan", "threads")


class ConfigError(ValueError):
    pass


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


@dataclass
class RunConfig:
    n_sites: int = 1000
    seed: int = 0
    lloyd_iters: int = 100
    tol_mass: float = 1e-7
    max_iters: int = 100
    symmetrize: bool = True
    r_mult: float = 6.0
    kernel: str = "epanechnikov"
    r_min: float | None = None
    r_max: float | None = None
    n_radii: int = 12
    grid_k: int = 36
    out: str = "out"
    plan: str | None = None
    checks: list = field(default_factory=lambda: list(VERIFY_CHECKS))
    exports: list = field(default_factory=lambda: ["domains"])
    fixture: str | None = None
    threads: int | None = None

    def validate(self) -> "RunConfig":
        for name in ("n_sites", "max_iters", "n_radii", "grid_k"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.lloyd_iters < 0:
            raise ConfigError("lloyd_iters must be nonnegative")
        if not 0 < self.tol_mass < 1:
            raise ConfigError("tol_mass must lie in (0, 1)")
        if not self.r_mult > 0:
            raise ConfigError("r_mult must be positive")
        if self.symmetrize and self.n_sites % 4:
            raise ConfigError("a symmetrized target needs n_sites divisible by 4")
        bad = set(self.checks) - set(VERIFY_CHECKS)
        if bad:
            raise ConfigError(f"unknown checks: {sorted(bad)}")
        bad = set(self.exports) - set(EXPORT_KINDS)
        if bad:
            raise ConfigError(f"unknown export kinds: {sorted(bad)}")
        if self.fixture is not None and self.fixture not in FIXTURES:
            raise ConfigError(f"unknown fixture {self.fixture!r}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be positive")
        return self

    def hash(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k not in _UNHASHED}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def plan_path(self) -> Path:
        return Path(self.plan) if self.plan else Path(self.out) / "plan.json"


# ------------------------------------------------------------------ output


def _plain(o):
    """Reports (dataclasses, arrays, numpy scalars) -> JSON-ready values."""
    if dataclasses.is_dataclass(o) and not isinstance(o, type):
        out = {f.name: _plain(getattr(o, f.name)) for f in dataclasses.fields(o)}
        if hasattr(type(o), "passed"):
            out["passed"] = bool(o.passed)
        return out
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, np.generic):
        return o.item()
    return o


def _report(cfg: RunConfig, command: str, checks: dict, extra: dict | None = None) -> dict:
    return {
        "command": command,
        "config": {k: v for k, v in asdict(cfg).items() if k not in _UNHASHED},
        "config_hash": cfg.hash(),
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
        **(extra or {}),
    }


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from None


def _write_json(path: Path, obj) -> None:
    from .ot_semidiscrete import dumps_fixed
    _write(path, dumps_fixed(_plain(obj), 12) + "\n")


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    if not out.is_dir():
        raise CliError(EXIT_IO, f"output directory {out} does not exist")
    return out


def _load_plan(cfg: RunConfig):
    from .ot_semidiscrete import load_plan
    path = cfg.plan_path
    if not path.is_file():
        raise CliError(EXIT_NOPLAN, f"plan file {path} not found; run 'solve' first")
    try:
        return load_plan(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_NOPLAN, f"cannot read plan {path}: {exc}") from None


def _field(cfg: RunConfig, plan):
    from .potential_analysis import PotentialField
    return PotentialField(plan, r_mult=cfg.r_mult, kernel=cfg.kernel)


def _check(name: str, passed: bool, details) -> dict:
    return {"check": name, "passed": bool(passed), "details": _plain(details)}


# ---------------------------------------------------------------- commands


def cmd_solve(cfg: RunConfig) -> int:
    from . import ot_semidiscrete as sd

    out = _outdir(cfg)
    target = sd.discretize_target(cfg.n_sites, seed=cfg.seed, lloyd_iters=cfg.lloyd_iters,
                                  symmetrize=cfg.symmetrize)
    code = EXIT_OK
    try:
        plan = sd.solve(target, tol_mass=cfg.tol_mass, max_iters=cfg.max_iters)
    except sd.ConvergenceError as exc:
        log.error("%s", exc)
        plan, code = exc.plan, EXIT_NOCONV
    except sd.EmptyCellError as exc:
        log.error("%s", exc)
        return EXIT_NOCONV
    data = plan.to_dict()
    data["config_hash"] = cfg.hash()
    _write(out / "plan.json", sd.dumps_fixed(data, 17) + "\n")
    try:
        sd.cells_svg(plan, out / "cells.svg")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write cells.svg: {exc}") from None
    log.info("solve: n=%d iterations=%d converged=%s", cfg.n_sites, plan.iterations, plan.converged)
    return code


def cmd_verify(cfg: RunConfig) -> int:
    from . import potential_analysis as pa
    from .simplex_charts import verify_reduction

    plan = _load_plan(cfg)
    out = _outdir(cfg)
    f = _field(cfg, plan)
    checks = {}
    if {"symmetry", "quadrants"} & set(cfg.checks):
        rep = pa.check_symmetries(f)
        c = rep.checks()
        sym = {k: v for k, v in c.items() if k != "quadrants"}
        if "symmetry" in cfg.checks:
            checks["symmetry"] = _check("potential and weights invariant under R and A; sign of v; rho > 0",
                                        all(sym.values()), {"components": sym, "report": rep})
        if "quadrants" in cfg.checks:
            checks["quadrants"] = _check("gradient maps each source quadrant into the matching target quadrant",
                                         c["quadrants"], {"fraction": rep.quadrant_fraction,
                                                          "exceptions_near_boundary": rep.quadrant_exceptions_near_boundary})
    if "monotonicity" in cfg.checks:
        rep = pa.check_monotone_along_lines(f)
        checks["monotonicity"] = _check("v nondecreasing along lines x - y = const", rep.passed, rep)
    if "ma-residual" in cfg.checks:
        rep = pa.ma_residual(f)
        checks["ma-residual"] = _check("median |det D^2 phi - 1| at interior stencils", rep.passed, rep)
    if "reduction" in cfg.checks:
        rep = verify_reduction(f, k=cfg.grid_k)
        checks["reduction"] = _check("planar reduction near n_01: pairings, image triangles, chain rule",
                                     rep.passed, rep.to_dict())
    _write_json(out / "verify.json", _report(cfg, "verify", checks))
    return EXIT_OK if all(c["passed"] for c in checks.values()) else EXIT_CHECK


def _harmonicity_radii():
    return np.array([0.01, 0.02, 0.03, 0.04, 0.05])


def _conformal_fixture(cfg: RunConfig, out: Path) -> int:
    from . import conformal as cf

    C = FIXTURES[cfg.fixture]
    f = cf.log_fixture(C)
    r0 = 0.01 if cfg.r_min is None else cfg.r_min
    r1 = 0.1 if cfg.r_max is None else cfg.r_max
    fit = cf.fit_log_asymptotics(f, r0, r1, cfg.n_radii)
    harm = cf.mean_value_harmonicity(f, cf.ring_centers(0.1, 16), _harmonicity_radii(), threshold=1e-3)
    checks = {
        "log-fit": _check("fitted C equals the fixture constant", abs(fit.C - C) <= 1e-10, fit.to_dict()),
        "harmonicity": _check("mean-value property on the |z| = 0.1 ring", harm.passed,
                              {"max_deviation": harm.max_deviation}),
    }
    fit.profile.to_csv(out / "profile.csv")
    _write_json(out / "logfit.json", fit.to_dict())
    _write_json(out / "conformal.json", _report(cfg, "conformal", checks, {"fixture": cfg.fixture}))
    return EXIT_OK if all(c["passed"] for c in checks.values()) else EXIT_CHECK


def cmd_conformal(cfg: RunConfig) -> int:
    from . import conformal as cf

    if cfg.r_min is not None and cfg.r_max is not None and not cfg.r_min < cfg.r_max:
        raise CliError(EXIT_RADII, f"r_min={cfg.r_min} must be below r_max={cfg.r_max}")
    out = _outdir(cfg)
    try:
        if cfg.fixture:
            return _conformal_fixture(cfg, out)
        plan = _load_plan(cfg)
        f = _field(cfg, plan)
        cloud = cf.build_cloud(f)
        rho_inv = cloud.interpolant()
        d0, d1 = cf.default_radius_range(cloud)
        r0 = d0 if cfg.r_min is None else cfg.r_min
        r1 = d1 if cfg.r_max is None else cfg.r_max
        fit = cf.fit_log_asymptotics(rho_inv, r0, r1, cfg.n_radii)
    except cf.InsufficientRadiiError as exc:
        raise CliError(EXIT_RADII, str(exc)) from None
    harm = cf.mean_value_harmonicity(rho_inv, cf.ring_centers(0.1, 16), _harmonicity_radii())
    blow = cf.blowup_check(cloud, np.geomspace(0.25 * cloud.inradius, 5 * cloud.spacing_uv, cfg.n_radii))
    blow_ext = cf.blowup_check(cloud, fit.profile.radii)
    norm = cf.normalize_coordinate(fit, rho_inv) if fit.C > 0 else None
    metric = cf.metric_identity_residuals(f)
    sym = cf.symmetry_residuals(f, cloud)
    inj = cf.injectivity_check(f)
    checks = {
        "log-fit": _check("rho^-1 ~ -C log r + h0 with C > 0 (3 standard errors) and R^2 >= 0.98",
                          fit.C > 3 * fit.C_se and fit.r_squared >= 0.98, fit.to_dict()),
        "harmonicity": _check("mean-value property of rho^-1 on the |z| = 0.1 ring", harm.passed,
                              {"max_deviation": harm.max_deviation, "report": harm}),
        "blowup": _check("trace >= 2/rho - tol and circle-averaged trace growing towards the origin",
                         blow.passed, {"default_range": blow, "fitted_range": blow_ext}),
        "metric-identities": _check("isothermal identities det Df = rho and u_x^2 + v_x^2 = phi_xx rho",
                                    metric.passed, metric),
        "conformal-symmetry": _check("rho and v symmetric under R, A and the image reflections",
                                     sym.passed, sym),
        "injectivity": _check("no two distant sources share an image; all four quadrants reached",
                              inj.passed, inj.to_dict()),
        "normalized-coordinate": _check("|rho^-1/C + log|w|| bounded", norm is not None and math.isfinite(norm.bound),
                                        norm.to_dict() if norm else None),
    }
    fit.profile.to_csv(out / "profile.csv")
    _write_json(out / "logfit.json", fit.to_dict())
    _write_json(out / "conformal.json", _report(cfg, "conformal", checks))
    return EXIT_OK if all(c["passed"] for c in checks.values()) else EXIT_CHECK


def cmd_simplex(cfg: RunConfig) -> int:
    from fractions import Fraction as F

    from . import simplex_charts as sc

    out = _outdir(cfg)
    K = sc.transition_matrix(sc.Q01, sc.Q02, sc.K_REGION)
    kite = [sc.Q01.inverse(p) for p in (sc.V.n_(0), sc.V.n_(0, 1, 3), sc.V.n_(1), sc.V.n_(0, 1, 2))]
    expect_kite = [(F(0), F(0)), (F(1, 3), F(0)), (F(1), F(1)), (F(0), F(1, 3))]
    pairing = sc.region_pairing()
    tri = sc._check_exact_triangles()
    functional = all(a == b for _, a, b in sc.k_functional_samples())

    def q(x):
        return f"{x.numerator}/{x.denominator}"

    checks = {
        "transition-K": _check("q_02^-1 o q_01 on K", K.matrix == ((-1, 0), (-1, 1)) and K.offset == (0, 0),
                               {"matrix": [[q(x) for x in r] for r in K.matrix], "offset": [q(x) for x in K.offset]}),
        "kite-vertices": _check("q_01^-1 maps the vertices of Q onto the kite", kite == expect_kite,
                                {"images": [[q(x) for x in p] for p in kite],
                                 "n01": [q(x) for x in sc.Q01.inverse(sc.V.n_(0, 1))]}),
        "region-pairing": _check("Q pieces pair with P pieces", pairing["passed"], pairing),
        "image-triangles": _check("image triangles from the chart algebra", tri["passed"], tri),
        "functional-identity": _check("<m_1 - m_2, q_01(x)> = -4 x_1 on K", functional, {"samples": 50}),
    }
    if cfg.plan or cfg.plan_path.is_file():
        plan = _load_plan(cfg)
        rep = sc.verify_reduction(_field(cfg, plan), k=cfg.grid_k)
        checks["reduction"] = _check("planar reduction near n_01", rep.passed, rep.to_dict())
    _write_json(out / "simplex.json", _report(cfg, "simplex", checks))
    return EXIT_OK if all(c["passed"] for c in checks.values()) else EXIT_CHECK


def cmd_export(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    kinds = list(dict.fromkeys(cfg.exports))
    if "domains" in kinds:
        from .domains import domain_constants_json
        _write(out / "domains.json", domain_constants_json() + "\n")
    if "grid" in kinds:
        from .simplex_charts import SampleGrid, grid_csv
        for side in ("A", "B"):
            grid_csv(SampleGrid.uniform(side, cfg.grid_k), out / f"grid_{side}.csv")
    needs_plan = {"cells", "hessian", "cloud"} & set(kinds)
    if needs_plan:
        from . import conformal as cf
        from . import ot_semidiscrete as sd
        from .geometry import grid_points
        plan = _load_plan(cfg)
        try:
            if "cells" in kinds:
                sd.cells_svg(plan, out / "cells.svg")
            f = _field(cfg, plan)
            if "hessian" in kinds:
                f.export_csv(out / "hessian.csv", grid_points(sd.OMEGA_F, 60))
            if "cloud" in kinds:
                cloud = cf.build_cloud(f)
                cloud.to_csv(out / "cloud.csv")
                cf.scatter_svg(cloud, out / "cloud.svg")
        except OSError as exc:
            raise CliError(EXIT_IO, f"export failed: {exc}") from None
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "conformal": cmd_conformal,
            "simplex": cmd_simplex, "export": cmd_export}


# ------------------------------------------------------------------ parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(s: str) -> list:
    return [t.strip() for t in s.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON file of defaults; explicit flags take precedence")
    g.add_argument("--n-sites", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--lloyd-iters", type=int)
    g.add_argument("--tol-mass", type=float)
    g.add_argument("--max-iters", type=int)
    g.add_argument("--no-symmetrize", dest="symmetrize", action="store_const", const=False,
                   help="sample each target quad independently (negative control)")
    g.add_argument("--r-mult", type=float, help="regression radius in site spacings")
    g.add_argument("--kernel", choices=("uniform", "epanechnikov"))
    g.add_argument("--r-min", type=float)
    g.add_argument("--r-max", type=float)
    g.add_argument("--n-radii", type=int)
    g.add_argument("--grid-k", type=int, help="barycentric grid resolution on the simplex boundary")
    g.add_argument("--out", help="existing output directory (default ./out)")
    g.add_argument("--plan", help="plan JSON (default OUT/plan.json)")
    g.add_argument("--checks", type=_csv_list, help=f"comma list from {','.join(VERIFY_CHECKS)}")
    g.add_argument("--what", dest="exports", type=_csv_list, help=f"comma list from {','.join(EXPORT_KINDS)}")
    g.add_argument("--fixture", help="synthetic conformal factor instead of a plan (log3)")
    g.add_argument("--threads", type=int, help="worker cap (KITE_THREADS overrides)")
    g.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="kiteot", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {"solve": "solve the semi-discrete transport problem",
             "verify": "symmetry, monotonicity, Monge-Ampere and reduction checks",
             "conformal": "isothermal coordinates, harmonicity, log fit, blow-up",
             "simplex": "exact chart algebra and reduction report",
             "export": "write domain constants, cells, grids, Hessians, clouds"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged = {}
    if args.config:
        try:
            with open(args.config) as fh:
                merged.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in known:
        v = getattr(args, name, None)
        if v is not None:
            merged[name] = v
    env = os.environ.get("KITE_THREADS")
    if env:
        try:
            merged["threads"] = int(env)
        except ValueError:
            raise ConfigError(f"KITE_THREADS={env!r} is not an integer") from None
    try:
        return RunConfig(**merged).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _limit_threads(n: int | None):
    from contextlib import nullcontext
    if n is None:
        return nullcontext()
    import numba
    from threadpoolctl import threadpool_limits
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"kiteot: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with _limit_threads(cfg.threads):
            return COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"kiteot: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
