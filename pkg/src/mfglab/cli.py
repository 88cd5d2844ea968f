"""Command-line front end: ``mfglab solve | analyze | check-models``.

Config files are TOML. Problem keys sit at the top level; ``[psi]`` and
``[m0]`` hold Fourier data and ``[analysis]`` the analysis knobs::

    d = 1
    Nx = 64
    Nt = 64
    T = 1.0
    model = "quadratic"      # or "power" (needs q) or "entropy"
    r = 1.0
    max_iter = 2000
    tol = 1e-5
    output_dir = "runs/benchmark"
    seed = 0
    m0 = "uniform"           # or a [m0] table

    [psi]
    const = 0.0
    cos = [[1, 0.5]]         # amplitude * cos(2 pi k.x), entries [k1, (k2,) amplitude]
    sin = []

    [analysis]
    deltas = [1, 2, 4, 8]

Exit codes: 0 success, 1 configuration or input error, 2 solver did not
converge (states are still written), 3 an analysis check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli

from .congestion_models import KINDS, CongestionModel, certify_c0, make_model, property_suite
from .grid_core import Grid, read_field, write_field
from .regularity_analysis import AnalysisConfig, analyze
from .solver_alg2 import DualState, ProblemSpec, price, solve
from .transport import PrimalState

log = logging.getLogger("mfglab")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_CHECK_FAILED = 0, 1, 2, 3

_PROBLEM_KEYS = {"d", "Nx", "Nt", "T", "model", "q", "r", "max_iter", "tol", "tol_continuity",
                 "check_every", "psi", "m0", "output_dir", "seed", "analysis"}
_FOURIER_KEYS = {"const", "cos", "sin"}
_ANALYSIS_KEYS = {f.name for f in fields(AnalysisConfig)}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FourierData:
    const: float = 0.0
    cos: tuple = ()
    sin: tuple = ()

    def evaluate(self, grid: Grid) -> np.ndarray:
        X = grid.coords
        out = np.full(grid.space_shape, float(self.const))
        for terms, fn in ((self.cos, np.cos), (self.sin, np.sin)):
            for term in terms:
                *k, amp = term
                phase = sum(2 * np.pi * ki * xi for ki, xi in zip(k, X))
                out += amp * fn(phase)
        return out


@dataclass
class RunConfig:
    d: int = 1
    Nx: int = 64
    Nt: int = 64
    T: float = 1.0
    model: str = "quadratic"
    q: float | None = None
    r: float = 1.0
    max_iter: int = 2000
    tol: float = 1e-5
    tol_continuity: float = 1e-8
    check_every: int = 10
    psi: FourierData = field(default_factory=FourierData)
    m0: FourierData | None = None  # None -> uniform
    output_dir: str = "mfglab_out"
    seed: int = 0
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def grid(self) -> Grid:
        return Grid(self.d, self.Nx, self.Nt, self.T)

    def spec(self) -> ProblemSpec:
        g = self.grid()
        model = make_model(self.model, self.q)
        m0 = np.ones(g.space_shape) if self.m0 is None else self.m0.evaluate(g)
        return ProblemSpec(g, model, self.psi.evaluate(g), m0, r=self.r, max_iter=self.max_iter,
                           tol=self.tol, tol_continuity=self.tol_continuity,
                           check_every=self.check_every)


def _fourier(raw, name: str, d: int) -> FourierData:
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be a table of Fourier data")
    unknown = set(raw) - _FOURIER_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    terms = {}
    for kind in ("cos", "sin"):
        seq = raw.get(kind, [])
        if not isinstance(seq, list):
            raise ConfigError(f"{name}.{kind} must be a list of [k1, ..., amplitude] entries")
        parsed = []
        for t in seq:
            if not isinstance(t, list) or len(t) != d + 1:
                raise ConfigError(f"{name}.{kind} entries need {d} wave numbers and an amplitude")
            if any(not isinstance(k, int) for k in t[:-1]):
                raise ConfigError(f"{name}.{kind} wave numbers must be integers")
            parsed.append(tuple(t[:-1]) + (float(t[-1]),))
        terms[kind] = tuple(parsed)
    const = raw.get("const", 0.0)
    if not isinstance(const, (int, float)):
        raise ConfigError(f"{name}.const must be a number")
    return FourierData(float(const), terms["cos"], terms["sin"])


def _check_type(raw, key, types, desc):
    if key in raw and (not isinstance(raw[key], types) or isinstance(raw[key], bool)):
        raise ConfigError(f"{key} must be {desc}")


def parse_config(raw: dict) -> RunConfig:
    """Validate every key before anything is computed."""
    unknown = set(raw) - _PROBLEM_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    for key in ("d", "Nx", "Nt", "max_iter", "seed", "check_every"):
        _check_type(raw, key, int, "an integer")
    for key in ("T", "r", "tol", "tol_continuity", "q"):
        _check_type(raw, key, (int, float), "a number")
    cfg = RunConfig()
    for key in ("d", "Nx", "Nt", "max_iter", "seed", "check_every", "output_dir", "model"):
        if key in raw:
            setattr(cfg, key, raw[key])
    for key in ("T", "r", "tol", "tol_continuity", "q"):
        if key in raw:
            setattr(cfg, key, float(raw[key]))
    if cfg.d not in (1, 2):
        raise ConfigError(f"d must be 1 or 2 (got {cfg.d})")
    if cfg.Nx < 4:
        raise ConfigError(f"Nx ≥ 4 required (got {cfg.Nx})")
    if cfg.Nt < 4:
        raise ConfigError(f"Nt ≥ 4 required (got {cfg.Nt})")
    if not cfg.T > 0:
        raise ConfigError(f"T > 0 required (got {cfg.T})")
    if cfg.model not in KINDS:
        raise ConfigError(f"model must be one of {', '.join(KINDS)} (got {cfg.model!r})")
    if cfg.model == "power" and (cfg.q is None or not cfg.q > 1):
        raise ConfigError("q > 1 required for the power model")
    if cfg.model != "power" and "q" in raw:
        raise ConfigError(f"q only applies to the power model (model = {cfg.model!r})")
    if not cfg.r > 0:
        raise ConfigError(f"r > 0 required (got {cfg.r})")
    if cfg.max_iter < 1:
        raise ConfigError(f"max_iter ≥ 1 required (got {cfg.max_iter})")
    if cfg.check_every < 1:
        raise ConfigError(f"check_every ≥ 1 required (got {cfg.check_every})")
    if not cfg.tol > 0 or not cfg.tol_continuity > 0:
        raise ConfigError("tol and tol_continuity must be positive")
    if not isinstance(cfg.output_dir, str):
        raise ConfigError("output_dir must be a string")
    if "psi" in raw:
        cfg.psi = _fourier(raw["psi"], "psi", cfg.d)
    m0 = raw.get("m0", "uniform")
    if m0 == "uniform":
        cfg.m0 = None
    else:
        cfg.m0 = _fourier(m0, "m0", cfg.d)
        if abs(cfg.m0.const - 1.0) > 1e-12:
            raise ConfigError("m0.const must be 1 (unit mass)")
        if any(all(k % cfg.Nx == 0 for k in t[:-1]) for t in cfg.m0.cos + cfg.m0.sin):
            raise ConfigError("m0 wave numbers must not alias to the constant mode")
        if np.any(cfg.m0.evaluate(cfg.grid()) < 0):
            raise ConfigError("m0 must be nonnegative on the grid")
    if "analysis" in raw:
        a = raw["analysis"]
        if not isinstance(a, dict):
            raise ConfigError("analysis must be a table")
        bad = set(a) - _ANALYSIS_KEYS
        if bad:
            raise ConfigError(f"unknown key(s) in [analysis]: {', '.join(sorted(bad))}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in a.items()}
        try:
            cfg.analysis = AnalysisConfig(**kw)
            cfg.analysis.resolve_t1(cfg.grid())
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"analysis: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return parse_config(raw)


# --------------------------------------------------------------------------
# output helpers


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


FIELD_FILES = {"m": "m.field", "w": "w.field", "u": "u.field", "p": "p.field"}


def load_solution(directory, spec: ProblemSpec) -> tuple[PrimalState, DualState]:
    directory = Path(directory)
    arrays = {}
    for name in ("m", "w", "u"):
        path = directory / FIELD_FILES[name]
        if not path.exists():
            raise FileNotFoundError(f"missing dump {path}")
        f, grid, kind = read_field(path)
        if grid != spec.grid or kind != name:
            raise ValueError(f"{path} does not match the configured grid")
        arrays[name] = f
    return PrimalState(arrays["m"], arrays["w"]), DualState(arrays["u"])


# --------------------------------------------------------------------------
# commands


def cmd_solve(config_path) -> int:
    try:
        cfg = load_config(config_path)
        spec = cfg.spec()
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    primal, dual, report = solve(spec)
    g = spec.grid
    write_field(out / FIELD_FILES["m"], primal.m, g, "m")
    write_field(out / FIELD_FILES["w"], primal.w, g, "w")
    write_field(out / FIELD_FILES["u"], dual.u, g, "u")
    write_field(out / FIELD_FILES["p"], price(dual.u, g), g, "p")
    write_json(out / "solve_report.json", report.to_dict())
    print(f"iterations {report.iterations}  gap {report.gap:.3e}  relative {report.relative_gap:.3e}  "
          f"converged {report.converged}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_analyze(solution_dir, config_path) -> int:
    try:
        cfg = load_config(config_path)
        spec = cfg.spec()
        primal, dual = load_solution(solution_dir, spec)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = analyze(spec, primal, dual, cfg.analysis)
    out = Path(solution_dir)
    write_json(out / "analysis_report.json", report.to_dict())
    report.write_csvs(out)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
    if not report.passed:
        print(f"failing checks: {', '.join(report.failing())}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


DEFAULT_MODELS = ("quadratic", "power:1.5", "power:2", "power:3", "entropy")


def _parse_model(token: str) -> CongestionModel:
    name, _, q = token.partition(":")
    if name not in KINDS:
        raise ConfigError(f"unknown model {name!r}")
    if name == "power":
        if not q:
            raise ConfigError("power models are written power:<q>")
        return make_model("power", float(q))
    return make_model(name)


def cmd_check_models(models, seed: int = 0, n_qp: int = 100_000, n_prox: int = 1000) -> int:
    try:
        parsed = [_parse_model(m) for m in (models or DEFAULT_MODELS)]
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ok = True
    for model in parsed:
        if model.kind == "entropy":
            model = model.with_c0(certify_c0())
        res = property_suite(model, seed=seed, n_qp=n_qp, n_prox=n_prox)
        label = model.kind if model.kind != "power" else f"power q={model.q:g}"
        const = f"c0 = {model.c:.6g}" if model.kind == "entropy" else f"c = {model.c:.6g}"
        print(f"{label}: {const}  Hpol C = {res['hpol']['C']:.6g} (a0 = {res['hpol']['a0']})")
        for name in ("fenchel_young", "qp", "prox"):
            r = res[name]
            worst = r.get("worst", r.get("worst_excess"))
            print(f"  {'PASS' if r['passed'] else 'FAIL'}  {name}  worst {worst:.3e}")
            ok &= r["passed"]
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mfglab", description="Variational MFG solver and regularity experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve the problem described by a config file")
    p.add_argument("config")
    p = sub.add_parser("analyze", help="run the regularity experiments on a solution directory")
    p.add_argument("solution_dir")
    p.add_argument("config")
    p = sub.add_parser("check-models", help="property suite for the congestion models")
    p.add_argument("--model", action="append", help="quadratic, entropy or power:<q>; repeatable")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=100_000, help="random (m, p) pairs per model")
    p.add_argument("--prox-samples", type=int, default=1000)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "solve":
        return cmd_solve(args.config)
    if args.command == "analyze":
        return cmd_analyze(args.solution_dir, args.config)
    return cmd_check_models(args.model, args.seed, args.samples, args.prox_samples)


if __name__ == "__main__":
    sys.exit(main())
