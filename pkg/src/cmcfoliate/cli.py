"""Command line: ``cmcfoliate {expand,moments,leaf,foliate,verify,selftest}``.

Configs and reports are JSON (schema ``cmcfoliate/1``); tables and point
clouds are CSV with shortest round-trip floats.  Exit codes: 0 success,
1 self-test or verification failure, 2 configuration error, 3 solver
non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import SCHEMA
from .errors import CMCError, ConfigError, InsufficientDataError, ValidationError
from .hemisphere import build_quadrature, kernel_moments
from .metric import BoundaryJet, inverse_metric_series, make_model
from .oracles import run_suite
from .series import matrix_series_invert
from .solver import (
    FoliationResult,
    LeafSolution,
    SolverContext,
    SolverSettings,
    _disk_samples,
    build_foliation,
    leaf_points,
    r_grid,
    solve_leaf,
    tau_slope_fit,
    verify_foliation,
)

R_STOP_MAX = 0.25
ANGLE_TOL = 1e-4
MODEL_KINDS = ("euclidean", "bump", "table")


@dataclass
class GridSpec:
    start: float = 0.02
    stop: float = 0.2
    count: int = 8
    spacing: str = "geometric"


@dataclass
class RunConfig:
    """Everything a run depends on; ``to_dict``/``from_dict`` round-trip exactly."""

    n: int = 2
    model: dict = field(default_factory=lambda: {"kind": "bump", "a": 1.0, "Q": [[1.0, 0.0], [0.0, 1.0]]})
    L_max: int = 8
    quadrature_order: int = 24
    tol_perp: float = 1e-8
    tol_K: float = 1e-7
    r_grid: GridSpec = field(default_factory=GridSpec)
    pin_tau: bool = False
    seed: int = 0
    output: str = "out"
    sample_density: int = 15
    metric_overrides: dict = field(default_factory=dict)
    base_dir: str = field(default=".", compare=False, repr=False)

    def validate(self):
        if int(self.n) < 2:
            raise ConfigError("n must be at least 2")
        kind = self.model.get("kind")
        if kind not in MODEL_KINDS:
            raise ConfigError(f"model kind must be one of {MODEL_KINDS}, got {kind!r}")
        g = self.r_grid
        if g.count < 1:
            raise ConfigError("r_grid.count must be at least 1")
        if not 0 < g.start <= g.stop:
            raise ConfigError("r_grid needs 0 < start <= stop")
        if g.stop > R_STOP_MAX:
            raise ConfigError(f"r_grid.stop must not exceed {R_STOP_MAX}")
        if g.spacing not in ("linear", "geometric"):
            raise ConfigError("r_grid.spacing must be 'linear' or 'geometric'")
        if self.tol_perp <= 0 or self.tol_K <= 0:
            raise ConfigError("tolerances must be positive")
        if self.L_max < 2:
            raise ConfigError("L_max must be at least 2")
        if self.quadrature_order < 2 * self.L_max + 4:
            raise ConfigError(
                f"quadrature_order {self.quadrature_order} is too low for L_max {self.L_max} (needs >= {2 * self.L_max + 4})"
            )
        if self.sample_density < 3:
            raise ConfigError("sample_density must be at least 3")
        return self

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return {"schema": SCHEMA, **d}

    @classmethod
    def from_dict(cls, data, base_dir="."):
        data = dict(data)
        schema = data.pop("schema", SCHEMA)
        if schema != SCHEMA:
            raise ConfigError(f"unsupported schema {schema!r}")
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        grid = data.pop("r_grid", {})
        if not isinstance(grid, dict):
            raise ConfigError("r_grid must be an object")
        try:
            cfg = cls(**data, r_grid=GridSpec(**grid), base_dir=str(base_dir))
            cfg.n = int(cfg.n)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config: {exc}") from None
        return cfg.validate()

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)

    def settings(self):
        return SolverSettings(
            tol_perp=self.tol_perp, tol_K=self.tol_K, L_max=self.L_max, quadrature_order=self.quadrature_order
        )

    def radii(self):
        g = self.r_grid
        return r_grid(g.start, g.stop, g.count, g.spacing)

    def build_model(self):
        spec = dict(self.model)
        spec.setdefault("n", self.n)
        if int(spec["n"]) != self.n:
            raise ConfigError("model dimension disagrees with n")
        if spec["kind"] == "table" and "path" in spec:
            path = Path(self.base_dir) / spec.pop("path")
            try:
                spec["entries"] = json.loads(path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot load table {path}: {exc}") from None
        return make_model(spec)


# ---------------------------------------------------------------------------
# Output


def fmt(x):
    """Shortest round-trip decimal of a float."""
    return repr(float(x))


def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def write_json(path, data):
    write_atomic(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    write_atomic(path, buf.getvalue())


# ---------------------------------------------------------------------------
# Commands


def cmd_expand(cfg, out):
    model = cfg.build_model()
    jet = model.jet_at(np.zeros(cfg.n))
    exact = BoundaryJet(
        cfg.n, exact=True, **{k: np.vectorize(Fraction, otypes=[object])(v) for k, v in jet.as_dict().items()}
    )
    G = inverse_metric_series(exact)
    ok = (G @ matrix_series_invert(G)).is_identity()
    nv = cfg.n + 1
    rows = []
    for a in range(nv):
        for b in range(a, nv):
            for key, c in G[a, b].coeffs.items():
                rows.append({"i": a + 1, "j": b + 1, "exponent": list(key), "coefficient": float(c), "exact": str(c)})
    data = {
        "schema": SCHEMA,
        "command": "expand",
        "variables": [f"x{i + 1}" for i in range(cfg.n)] + ["t"],
        "model": model.describe(),
        "entries": rows,
        "exact_inversion": {"passed": bool(ok), "degree_bound": 4},
    }
    write_json(out / "expand.json", data)
    print(f"wrote {len(rows)} inverse-metric coefficients; exact inversion {'ok' if ok else 'FAILED'}")
    return 0 if ok else 1


def cmd_moments(cfg, out):
    n = cfg.n
    m1 = kernel_moments(n, build_quadrature(n, cfg.quadrature_order))
    m2 = kernel_moments(n, build_quadrature(n, cfg.quadrature_order + 8))
    data = {
        "schema": SCHEMA,
        "command": "moments",
        "n": n,
        "quadrature": m1,
        "c_n_second_order": m2["c_n"],
        "c_n_drift": abs(m1["c_n"] - m2["c_n"]),
        "deviation_from_closed_form": {
            k: m1[k] - v for k, v in m1["closed_form"].items()
        },
    }
    write_json(out / "moments.json", data)
    print(f"c_{n} = {m1['c_n']!r} (printed {m1['closed_form']['c_n']!r}); P(t x1)_1 printed {m1['closed_form']['P_tx']!r}")
    return 0


def _leaf_rows(leaves):
    rows = []
    for leaf in leaves:
        rows.append(
            [leaf.r, *leaf.tau, leaf.kperp_residual, leaf.kernel_residual, leaf.projection_residual, leaf.newton_iters]
        )
    return rows


def _leaf_header(n):
    return ["r"] + [f"tau{i + 1}" for i in range(n)] + [
        "kperp_residual",
        "kernel_residual",
        "projection_residual",
        "newton_iters",
    ]


def _write_points(out, leaves, n, density):
    xs = _disk_samples(n, density)
    rows = []
    for leaf in leaves:
        pts = leaf_points(leaf, xs)
        for x, p in zip(xs, pts):
            rows.append([leaf.r, *x, *p])
    header = ["r"] + [f"x{i + 1}" for i in range(n)] + [f"U{i + 1}" for i in range(n + 1)]
    write_csv(out / "points.csv", header, rows)


def _leaf_state(leaf):
    return {**leaf.record(), "phi": leaf.phi.coeffs.tolist()}


def _persist(cfg, out, command, result, timing, extra=None):
    n = cfg.n
    leaves = result.leaves
    report = {
        "schema": SCHEMA,
        "command": command,
        "config": cfg.to_dict(),
        "model": result.model.describe(),
        "c_n": result.context.c_n,
        "leaves": [_leaf_state(leaf) for leaf in leaves],
        "diagnostics": {
            "tau_slope_fit": result.tau_slope_fit,
            "det_min": result.det_min,
            "free_boundary_max_angle": result.free_boundary_max_angle,
            "flags": result.flags,
            "verification": result.verification,
        },
        "timing_seconds": timing,
    }
    if extra:
        report.update(extra)
    write_json(out / "report.json", report)
    write_csv(out / "leaves.csv", _leaf_header(n), _leaf_rows(leaves))
    _write_points(out, leaves, n, cfg.sample_density)
    return report


def cmd_leaf(cfg, out, r, tau=None):
    if r is None:
        raise ConfigError("leaf needs --r")
    if not 0 <= r <= R_STOP_MAX:
        raise ConfigError(f"--r must lie in [0, {R_STOP_MAX}]")
    model = cfg.build_model()
    ctx = SolverContext(cfg.n, cfg.settings())
    pin = cfg.pin_tau or tau is not None
    if tau is not None and len(tau) != cfg.n:
        raise ConfigError(f"--tau needs {cfg.n} components")
    t0 = time.perf_counter()
    leaf = solve_leaf(model, r, tau, pin, None, ctx)
    result = FoliationResult(model=model, leaves=[leaf], context=ctx)
    _persist(cfg, out, "leaf", result, time.perf_counter() - t0)
    print(f"leaf r={r}: tau={leaf.tau.tolist()} kperp={leaf.kperp_residual:.3g} kernel={leaf.kernel_residual:.3g}")
    return 0


def _verdict(result):
    return result.det_min is not None and result.det_min > 0 and result.free_boundary_max_angle <= ANGLE_TOL


def cmd_foliate(cfg, out):
    model = cfg.build_model()
    ctx = SolverContext(cfg.n, cfg.settings())
    t0 = time.perf_counter()
    result = build_foliation(model, cfg.radii(), ctx, pin_tau=cfg.pin_tau, sample_density=cfg.sample_density)
    _persist(cfg, out, "foliate", result, time.perf_counter() - t0)
    print(
        f"{len(result.leaves)} leaves; tau slope {result.tau_slope_fit} {result.flags}; "
        f"det_min {result.det_min}; boundary angle {result.free_boundary_max_angle}"
    )
    return 0


def _load_result(cfg, path):
    data = json.loads(Path(path).read_text())
    model = cfg.build_model()
    ctx = SolverContext(cfg.n, cfg.settings())
    leaves = []
    for rec in data.get("leaves", []):
        coeffs = np.asarray(rec["phi"], dtype=float)
        if coeffs.shape != (ctx.basis.size,):
            raise ConfigError("stored leaves do not match the configured basis")
        leaves.append(
            LeafSolution(
                r=rec["r"],
                tau=np.asarray(rec["tau"], dtype=float),
                phi=ctx.basis.function(coeffs),
                kperp_residual=rec["kperp_residual"],
                kernel_residual=rec["kernel_residual"],
                newton_iters=rec["newton_iters"],
                converged=rec["converged"],
                projection_residual=rec.get("projection_residual", 0.0),
            )
        )
    result = FoliationResult(model=model, leaves=leaves, context=ctx)
    if len(leaves) >= 1:
        result.tau_slope_fit, flag = tau_slope_fit(result.radii, result.taus)
        if flag:
            result.flags.append(flag)
    return result


def cmd_verify(cfg, out):
    """Verify the foliation stored in ``out/report.json``, or compute one first."""
    stored = out / "report.json"
    t0 = time.perf_counter()
    if stored.exists():
        result = _load_result(cfg, stored)
    else:
        model = cfg.build_model()
        ctx = SolverContext(cfg.n, cfg.settings())
        result = build_foliation(model, cfg.radii(), ctx, pin_tau=cfg.pin_tau, verify=False)
    report = verify_foliation(result, cfg.sample_density)
    ok = _verdict(result)
    _persist(cfg, out, "verify", result, time.perf_counter() - t0, {"verified": ok})
    print(
        f"det_min {report['det_min']:.6g}; boundary angle {report['free_boundary_max_angle']:.3g}; "
        f"tau slope {report['tau_slope_fit']}: {'PASS' if ok else 'FAIL'}"
    )
    return 0 if ok else 1


def cmd_selftest(cfg, out):
    t0 = time.perf_counter()
    results = run_suite(
        n=cfg.n, L_max=min(cfg.L_max, 6), quadrature_order=max(16, 2 * min(cfg.L_max, 6) + 4),
        seed=cfg.seed, metric_overrides=cfg.metric_overrides or None,
    )
    for res in results:
        print(res.line())
    failed = [r.name for r in results if not r.passed]
    write_json(
        out / "selftest.json",
        {
            "schema": SCHEMA,
            "command": "selftest",
            "results": [asdict(r) for r in results],
            "failed": failed,
            "timing_seconds": time.perf_counter() - t0,
        },
    )
    if failed:
        print("failed: " + ", ".join(failed))
        return 1
    print(f"all {len(results)} oracles passed")
    return 0


# ---------------------------------------------------------------------------
# Entry point


def _parse_tau(text):
    if text is None:
        return None
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"--tau must be comma-separated numbers, got {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="cmcfoliate", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["expand", "moments", "leaf", "foliate", "verify", "selftest"])
    p.add_argument("--config", help="JSON run configuration (defaults: bump(2, 1, I))")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--r", type=float, help="radius for 'leaf'")
    p.add_argument("--tau", help="comma-separated center offset for 'leaf' (pins tau)")
    p.add_argument("--seed", type=int, help="seed for randomized self-tests")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = None
    try:
        threads = os.environ.get("CMC_THREADS")
        if threads is not None and not (threads.isdigit() and int(threads) > 0):
            raise ConfigError(f"CMC_THREADS must be a positive integer, got {threads!r}")
        cfg = RunConfig.load(args.config) if args.config else RunConfig().validate()
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out or cfg.output)
        if args.command == "expand":
            return cmd_expand(cfg, out)
        if args.command == "moments":
            return cmd_moments(cfg, out)
        if args.command == "leaf":
            return cmd_leaf(cfg, out, args.r, _parse_tau(args.tau))
        if args.command == "foliate":
            return cmd_foliate(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out)
        return cmd_selftest(cfg, out)
    except CMCError as exc:
        code = exc.exit_code
        if isinstance(exc, InsufficientDataError):
            code = 1
        elif isinstance(exc, ValidationError):
            code = 2
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        if out is not None:
            try:
                write_json(
                    out / "error.json",
                    {"schema": SCHEMA, "command": args.command, "error": type(exc).__name__, "message": str(exc), "exit_code": code},
                )
            except OSError:
                pass
        return code


if __name__ == "__main__":
    sys.exit(main())
