"""Command-line driver: ``lqg <subcommand> [--config FILE] [--key value ...]``.

Configuration is a flat ``key=value`` file; command-line flags override it.
Every artifact carries the seed, the version string and a hash of the
validated configuration.  Exit codes: 0 success, 2 configuration error,
3 convergence failure, 4 refusal by a resolution gate.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import asymptotics, heat, io, paths, stats
from .errors import (CapExceededError, ConvergenceError, LQGError, QuadratureError,
                     ResolutionError)
from .field import GridSpec, sample_gff
from .gmc import build_measure, check_gamma
from .spectral import DENSE_LIMIT, assemble_pair, solve_spectrum

log = logging.getLogger("lqgspec")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_RESOLUTION = 0, 2, 3, 4

SUBCOMMANDS = ("sample-field", "build-measure", "solve-spectrum", "weyl", "spacing", "heat",
               "jlambda", "cone-mc", "bridge-check", "tauberian", "reproduce-figures")


class ConfigError(LQGError):
    pass


def _int_list(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).replace(" ", "").split(",") if x)


def _float_list(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).replace(" ", "").split(",") if x)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    n: int = 127
    gamma: float = 0.5
    k: int = 1600
    tol: float = 1e-8
    seed: int = 1
    seeds: tuple = ()
    window: tuple = (300, 1500)
    vectors: bool = False
    t_min: float = 1e-4
    t_max: float = 1e-1
    t_points: int = 31
    lam: float = 10.0
    m: float = 1.0
    f: str = "I"
    paths: int = 100_000
    dt: float = 1e-3
    T: float = 0.0  # 0 selects the tail-bound horizon
    levels: tuple = (0.5, 1.0, 1.5)
    steps: int = 1000
    rho: float = 0.5
    density: str = "power"
    lambdas: tuple = (1e2, 1e3, 1e4, 1e5, 1e6)
    que_k: int = 400
    out: str = "out"

    _CASTS = {
        "n": int, "k": int, "seed": int, "t_points": int, "paths": int, "steps": int,
        "que_k": int, "gamma": float, "tol": float, "t_min": float, "t_max": float,
        "lam": float, "m": float, "dt": float, "T": float, "rho": float,
        "seeds": _int_list, "window": _int_list, "levels": _float_list, "lambdas": _float_list,
        "vectors": _bool, "f": str, "density": str, "out": str,
    }

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        cfg = cls()
        for key, value in mapping.items():
            if key not in cls._CASTS:
                raise ConfigError(f"unknown configuration key {key!r}")
            try:
                setattr(cfg, key, cls._CASTS[key](value))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
        return cfg

    @staticmethod
    def parse_text(text: str) -> dict:
        out = {}
        for num, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {num}: expected key=value, got {raw!r}")
            out[key.strip()] = value.strip()
        return out

    def to_dict(self) -> dict:
        d = {}
        for key in self.keys():
            v = getattr(self, key)
            if isinstance(v, tuple):
                v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            d[key] = str(v)
        return d

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_dict().items())

    def seed_list(self) -> tuple:
        return self.seeds if self.seeds else (self.seed,)

    def compute_hash(self) -> str:
        # out only says where artifacts go, it does not change them
        d = self.to_dict()
        d.pop("out")
        return io.config_hash(d)

    def validate(self, command: str) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.n >= 1, "n must be >= 1")
        try:
            check_gamma(self.gamma)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        need(all(s >= 0 for s in self.seed_list()), "seeds must be non-negative")
        need(0 < self.tol <= 1e-4, "tol must lie in (0, 1e-4]")
        dim = self.n * self.n
        need(self.k >= 1, "k must be >= 1")
        need(self.k <= (dim if dim <= DENSE_LIMIT else dim // 2),
             f"k={self.k} too large for n={self.n}")
        if command in ("weyl", "spacing", "reproduce-figures"):
            need(len(self.window) == 2, "window needs two indices lo,hi")
            lo, hi = self.window
            need(1 <= lo < hi <= self.k, f"window {self.window} must satisfy 1 <= lo < hi <= k")
            if command != "spacing":
                need(lo >= 100 and hi - lo >= 50, "Weyl window must start at >= 100 and span >= 50")
            else:
                need(hi - lo >= 200, "spacing window must span >= 200 indices")
        if command in ("heat", "reproduce-figures"):
            need(0 < self.t_min < self.t_max, "need 0 < t_min < t_max")
            need(self.t_points >= 2, "t_points must be >= 2")
        if command in ("jlambda", "reproduce-figures"):
            need(self.lam > 0, "lam must be positive")
            need(1 <= self.que_k <= self.k, "que_k must lie in [1, k]")
        if command in ("cone-mc", "reproduce-figures"):
            need(self.gamma > 0 or command == "reproduce-figures", "cone-mc needs gamma > 0")
            need(self.m > 0, "m must be positive")
            need(self.f in paths.FUNCTIONALS, f"f must be one of {sorted(paths.FUNCTIONALS)}")
            need(0 < self.dt <= 1e-3, "dt must lie in (0, 1e-3]")
            need(self.paths >= 2, "paths must be >= 2")
            need(self.T >= 0, "T must be >= 0")
        if command == "bridge-check":
            need(self.paths >= 2 and self.steps >= 2, "need paths >= 2 and steps >= 2")
            need(len(self.levels) >= 1 and all(x > 0 for x in self.levels), "levels must be positive")
        if command in ("tauberian", "reproduce-figures"):
            need(0 < self.rho <= 4, "rho must lie in (0, 4]")
            need(self.density in asymptotics.SLOWLY_VARYING, "density must be power or log")
            need(len(self.lambdas) >= 1 and all(x > 0 for x in self.lambdas), "lambdas must be positive")


def _threads() -> int:
    raw = os.environ.get("LQG_THREADS", "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"LQG_THREADS must be a positive integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"LQG_THREADS must be a positive integer, got {raw!r}")
    return value


# --------------------------------------------------------------------------
# shared steps
# --------------------------------------------------------------------------

class Runner:
    def __init__(self, cfg: ExperimentConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = threads
        self.out = io.ensure_dir(cfg.out)
        self.hash = cfg.compute_hash()

    def prov(self, seed) -> dict:
        return {"seed": seed, "version": io.version_string(), "config_hash": self.hash}

    def seed_dir(self, seed) -> Path:
        if len(self.cfg.seed_list()) == 1:
            return self.out
        return io.ensure_dir(self.out / f"seed{seed}")

    def field(self, seed):
        return sample_gff(GridSpec(self.cfg.n, seed))

    def measure(self, seed):
        gamma = self.cfg.gamma
        path = self.seed_dir(seed) / "measure.lqgm"
        if path.exists():
            m, hdr = io.read_measure(path)
            if (m.spec.n, m.spec.seed, m.gamma) == (self.cfg.n, seed, gamma):
                return m
        m = build_measure(self.field(seed), gamma)
        io.write_measure(path, m, self.prov(seed))
        return m

    def spectrum(self, seed, k=None, vectors=False):
        """Solve, or reuse a spectrum file written by an earlier step with the same inputs."""
        cfg = self.cfg
        k = cfg.k if k is None else k
        stem = "spectrum" if not vectors else f"spectrum_vec{k}"
        path = self.seed_dir(seed) / f"{stem}.lqgs"
        vpath = self.seed_dir(seed) / f"{stem}.vectors.lqgf" if vectors else None
        measure = self.measure(seed)
        if path.exists() and (vpath is None or vpath.exists()):
            spec, hdr = io.read_spectrum(path, vpath)
            if (spec.n, spec.gamma, spec.seed, spec.k, spec.tol) == (cfg.n, cfg.gamma, seed, k, cfg.tol):
                spec.mass = measure.mass.ravel().copy()
                return spec, measure
        spec = solve_spectrum(assemble_pair(measure), k, tol=cfg.tol, seed=seed, eigenvectors=vectors)
        spec.seed = seed
        io.write_spectrum(path, spec, self.prov(seed), vpath)
        return spec, measure

    def map_seeds(self, fn):
        seeds = self.cfg.seed_list()
        if self.threads > 1 and len(seeds) > 1:
            with ProcessPoolExecutor(max_workers=min(self.threads, len(seeds))) as pool:
                return list(pool.map(fn, [(self.cfg, self.threads, s) for s in seeds]))
        return [fn((self.cfg, 1, s)) for s in seeds]


def _echo(msg: str) -> None:
    print(msg, flush=True)


# --------------------------------------------------------------------------
# subcommands (module-level so they can run in worker processes)
# --------------------------------------------------------------------------

def _do_sample_field(args):
    cfg, threads, seed = args
    r = Runner(cfg, 1)
    f = r.field(seed)
    io.write_field(r.seed_dir(seed) / "field.lqgf", f, None, r.prov(seed))
    return f"seed {seed}: field n={cfg.n}"


def _do_build_measure(args):
    cfg, threads, seed = args
    r = Runner(cfg, 1)
    f = r.field(seed)
    io.write_field(r.seed_dir(seed) / "field.lqgf", f, None, r.prov(seed))
    m = build_measure(f, cfg.gamma)
    io.write_measure(r.seed_dir(seed) / "measure.lqgm", m, r.prov(seed))
    return f"seed {seed}: total mass {m.total:.10g}"


def _do_solve_spectrum(args):
    cfg, threads, seed = args
    r = Runner(cfg, 1)
    spec, _ = r.spectrum(seed, vectors=cfg.vectors)
    return f"seed {seed}: k={spec.k} lambda_1={spec.eigenvalues[0]:.10g} lambda_k={spec.eigenvalues[-1]:.10g}"


def _do_weyl(args):
    cfg, threads, seed = args
    r = Runner(cfg, 1)
    spec, measure = r.spectrum(seed)
    fit = stats.weyl_fit(spec, cfg.gamma, measure, cfg.window)
    lam = spec.eigenvalues
    pred = fit.reference * lam
    riem = fit.riemannian * lam
    count = stats.counting_function(spec, lam)
    io.write_csv(r.seed_dir(seed) / "weyl.csv", ["lambda", "count", "prediction", "riemannian"],
                 zip(lam, count, pred, riem), r.prov(seed))
    return (f"seed {seed}: slope {fit.slope:.8g} c_gamma*mu {fit.reference:.8g} "
            f"ratio {fit.ratio:.6f} c0*mu {fit.riemannian:.8g} ratio {fit.slope / fit.riemannian:.6f}")


def _do_spacing(args):
    cfg, threads, seed = args
    r = Runner(cfg, 1)
    spec, measure = r.spectrum(seed)
    st = stats.spacing_stats(spec, cfg.gamma, measure, cfg.window)
    io.write_csv(r.seed_dir(seed) / "spacing.csv", ["s", "ecdf", "wigner_cdf"],
                 zip(st.grid, st.ecdf, stats.wigner_cdf(st.grid)), r.prov(seed))
    return f"seed {seed}: mean gap {st.mean_gap:.6f} KS vs Wigner {st.ks_vs_wigner:.6f}"


def _do_heat(args):
    cfg, threads, seed = args
    r = Runner(cfg, 1)
    spec, measure = r.spectrum(seed)
    t = np.logspace(math.log10(cfg.t_min), math.log10(cfg.t_max), cfg.t_points)
    curve = heat.heat_trace(spec, t)
    if not curve.resolved.any():
        raise ResolutionError(f"no t in [{cfg.t_min:g}, {cfg.t_max:g}] is resolved by k={spec.k}")
    pred = stats.c_gamma(cfg.gamma) * measure.total
    io.write_csv(r.seed_dir(seed) / "heat.csv", ["t", "S", "tS", "prediction", "tail_bound"],
                 zip(curve.t, curve.S, curve.tS, np.full(t.size, pred), curve.tail_bound), r.prov(seed))
    ok = curve.t[curve.resolved]
    return f"seed {seed}: resolved t in [{ok.min():.4g}, {ok.max():.4g}], prediction {pred:.8g}"


def _do_jlambda(args):
    cfg, threads, seed = args
    r = Runner(cfg, 1)
    spec, measure = r.spectrum(seed, k=cfg.que_k, vectors=True)
    jm = heat.j_lambda_map(spec, cfg.lam, gate=heat.KERNEL_GATE)
    if jm.truncated:
        raise ResolutionError(
            f"lambda={cfg.lam:g}: omitted spectral tail is {jm.tail_fraction:.3g} of the sum; "
            f"raise k or lower lambda")
    mass = measure.mass.ravel()
    J = jm.values.ravel()
    io.write_csv(r.seed_dir(seed) / "jlambda.csv", ["x_index", "mass", "J", "lambda"],
                 zip(range(mass.size), mass, J, np.full(mass.size, cfg.lam)), r.prov(seed))
    lhs = math.fsum(J * mass)
    rhs = cfg.lam * heat.laplace_of_weighted_trace(spec, cfg.lam)
    return f"seed {seed}: sum J mu = {lhs:.12g}, lambda sum (lambda+lambda_n)^-2 = {rhs:.12g}"


def _do_que(args):
    cfg, threads, seed = args
    r = Runner(cfg, 1)
    spec, measure = r.spectrum(seed, k=cfg.que_k, vectors=True)
    regions = {
        "left_half": lambda x, y: x < 0.5,
        "disc_r0.25": lambda x, y: (x - 0.5) ** 2 + (y - 0.5) ** 2 < 0.0625,
        "corner": lambda x, y: (x < 0.25) & (y < 0.25),
    }
    rows = stats.que_overlap(spec, measure, regions)
    io.write_csv(r.seed_dir(seed) / "que.csv", ["n", "region", "overlap", "target", "ipr"],
                 ((o.n, o.region, o.overlap, o.target, o.ipr) for o in rows), r.prov(seed))
    return f"seed {seed}: que.csv with {len(rows)} rows"


def _cone_row(cfg, seed, gamma, m):
    est = paths.estimate_cone_constant(gamma, m, f=cfg.f, dt=cfg.dt, n_paths=cfg.paths,
                                       seed=seed, T=cfg.T or None)
    return (gamma, m, cfg.f, cfg.paths, cfg.dt, est.params["T"], est.mean, est.stderr, est.target), est


CONE_COLUMNS = ["gamma", "m", "f", "n_paths", "dt", "T", "mean", "stderr", "target"]


def _run_cone(r: Runner) -> str:
    cfg = r.cfg
    seed = cfg.seed_list()[0]
    row, est = _cone_row(cfg, seed, cfg.gamma, cfg.m)
    io.write_csv(r.out / "cone.csv", CONE_COLUMNS, [row], r.prov(seed))
    return (f"gamma {cfg.gamma:g} m {cfg.m:g}: mean {est.mean:.6f} +- {est.stderr:.6f} "
            f"target {est.target:.6f} ({est.z_score:+.2f} stderr)")


def _run_bridge(r: Runner) -> str:
    cfg = r.cfg
    seed = cfg.seed_list()[0]
    checks = paths.bridge_max_exceedance(cfg.levels, 1.0, cfg.steps, cfg.paths, seed)
    io.write_csv(r.out / "bridge.csv", ["level", "probability", "stderr", "exact", "z"],
                 ((c.level, c.probability, c.stderr, c.exact, c.z_score) for c in checks), r.prov(seed))
    return "; ".join(f"k={c.level:g}: {c.probability:.5f} vs {c.exact:.5f} ({c.z_score:+.2f} SE)"
                     for c in checks)


def _run_tauberian(r: Runner) -> str:
    cfg = r.cfg
    rep = asymptotics.tauberian_check(cfg.rho, cfg.density, cfg.lambdas)
    io.write_csv(r.out / "tauberian.csv", ["lambda", "lhs", "rhs", "ratio"],
                 zip(rep.grid, rep.lhs, rep.rhs, rep.ratio), r.prov(cfg.seed_list()[0]))
    return f"rho {cfg.rho:g} ({cfg.density}): max |ratio - 1| = {rep.max_rel_dev:.3e}"


PER_SEED = {
    "sample-field": _do_sample_field,
    "build-measure": _do_build_measure,
    "solve-spectrum": _do_solve_spectrum,
    "weyl": _do_weyl,
    "spacing": _do_spacing,
    "heat": _do_heat,
    "jlambda": _do_jlambda,
}


def _pipeline_seed(args):
    cfg, threads, seed = args
    lines = [fn(args) for fn in (_do_build_measure, _do_weyl, _do_spacing, _do_heat)]
    # eigenvectors only for the first few modes, which keeps memory modest
    lines.append(_do_jlambda(args))
    lines.append(_do_que(args))
    return "\n".join(lines)


def _run_reproduce(r: Runner) -> list[str]:
    cfg = r.cfg
    lines = r.map_seeds(_pipeline_seed)
    gamma = cfg.gamma if cfg.gamma > 0 else 0.5
    Q = gamma / 2 + 2 / gamma
    row, est = _cone_row(cfg, cfg.seed_list()[0], gamma, Q - gamma)
    io.write_csv(r.out / "cone.csv", CONE_COLUMNS, [row], r.prov(cfg.seed_list()[0]))
    lines.append(f"cone gamma {gamma:g} m {Q - gamma:g}: {est.mean:.6f} +- {est.stderr:.6f} "
                 f"target {est.target:.6f}")
    lines.append(_run_tauberian(r))
    return lines


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lqg", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    for key, kind in (("n", int), ("gamma", float), ("k", int), ("seed", int), ("seeds", str),
                      ("dt", float), ("paths", int), ("out", str)):
        p.add_argument(f"--{key}", type=kind, default=None)
    return p


def load_config(ns) -> ExperimentConfig:
    mapping = {}
    if ns.config:
        try:
            mapping.update(ExperimentConfig.parse_text(Path(ns.config).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    for item in ns.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        mapping[key.strip()] = value.strip()
    for key in ("n", "gamma", "k", "seed", "seeds", "dt", "paths", "out"):
        value = getattr(ns, key)
        if value is not None:
            mapping[key] = value
    return ExperimentConfig.from_mapping(mapping)


def run(command: str, cfg: ExperimentConfig, threads: int = 1) -> list[str]:
    cfg.validate(command)
    r = Runner(cfg, threads)
    (r.out / "config.txt").write_text(cfg.to_text())
    if command in PER_SEED:
        return r.map_seeds(PER_SEED[command])
    if command == "cone-mc":
        return [_run_cone(r)]
    if command == "bridge-check":
        return [_run_bridge(r)]
    if command == "tauberian":
        return [_run_tauberian(r)]
    return _run_reproduce(r)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(ns)
        threads = _threads()
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads):
            lines = run(ns.command, cfg, threads)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResolutionError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_RESOLUTION
    except (ConvergenceError, CapExceededError, QuadratureError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValueError, LQGError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for line in lines:
        _echo(line)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
