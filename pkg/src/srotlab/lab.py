"""Scenarios, experiments and reproducible report emission.

A scenario is a JSON document::

    {
      "frame": "heisenberg",
      "seed": 0,
      "options": {"steps": 1000},
      "measures": {
        "mu": {"generator": "uniform-box", "n": 20, "low": [-0.5, -0.5, -0.2], "high": [0.5, 0.5, 0.2]},
        "nu": {"file": "nu.csv"}
      },
      "experiments": [
        {"kind": "distance", "name": "line", "x": [0, 0, 0], "y": [1, 1, 0.5],
         "acceptance": true, "checks": [{"metric": "value", "min": 1.4132, "max": 1.4152}]}
      ]
    }

Experiment kinds: ``geodesic``, ``distance``, ``distmatrix``, ``singular``,
``regularity``, ``ot``, ``transport``. Measure generators: ``uniform-box``,
``gaussian-clip``, ``jittered-grid`` and ``translate`` (a copy of another
measure shifted by a vector). Files are CSV with columns ``x1..xn[,weight]``.

Reports are canonical JSON (sorted keys, no timestamps); wall times live in
``manifest.json`` only.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .cache import DistanceCache
from .displacement import (
    abs_continuity_probe,
    build_map,
    direction_agreement,
    geodesic_check,
    interior_mask,
    interpolate,
    jacobian_residual,
    regress_dphi,
    split_residual,
)
from .errors import ConfigError, IoError, SrotlabError
from .frames import CATALOG_NAMES, catalog
from .geodesics import HorizontalPath, flow_extremal, length_energy
from .kantorovich import (
    DiscreteMeasure,
    centred_duals,
    solve_kantorovich,
    superdifferential_check,
)
from .metric import DEFAULT_OPTIONS, ShootingOptions, distance, multi_geodesic_probe
from .regularity import lipschitz_probe, semiconcavity_probe
from .singular import abnormal_certificate, endpoint_rank, goh_test

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
KINDS = ("geodesic", "distance", "distmatrix", "singular", "regularity", "ot", "transport")


# --- serialisation --------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_points_csv(path):
    """Points and weights from a CSV with a header; a ``weight`` column is optional."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"measure file {path} does not exist")
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise ConfigError(f"{path} has no data rows")
    header = [h.strip().lower() for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if "weight" in header:
        k = header.index("weight")
        w = data[:, k]
        pts = np.delete(data, k, axis=1)
        w = w / w.sum()
    else:
        pts = data
        w = np.full(len(pts), 1.0 / len(pts))
    return pts, w


# --- scenario -------------------------------------------------------------------


@dataclass
class Scenario:
    frame: str
    experiments: list
    measures: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    seed: int = 0
    output: str | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, d, base_dir=None):
        if not isinstance(d, dict):
            raise ConfigError("scenario must be a JSON object")
        if "frame" not in d:
            raise ConfigError("scenario needs a 'frame'")
        if d["frame"] not in CATALOG_NAMES:
            raise ConfigError(f"unknown frame {d['frame']!r}; choose from {sorted(CATALOG_NAMES)}")
        exps = d.get("experiments", [])
        if not isinstance(exps, list) or not exps:
            raise ConfigError("scenario needs a non-empty 'experiments' list")
        for k, e in enumerate(exps):
            if e.get("kind") not in KINDS:
                raise ConfigError(f"experiment {k}: kind must be one of {KINDS}, got {e.get('kind')!r}")
        sc = cls(
            frame=d["frame"],
            experiments=exps,
            measures=d.get("measures", {}),
            options=d.get("options", {}),
            seed=int(d.get("seed", 0)),
            output=d.get("output"),
            base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
        )
        sc.shooting_options()  # validate early
        return sc

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise ConfigError(f"scenario file {path} does not exist") from exc
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(d, base_dir=path.parent)

    def shooting_options(self):
        fields = set(ShootingOptions.__dataclass_fields__)
        bad = set(self.options) - fields
        if bad:
            raise ConfigError(f"unknown solver options {sorted(bad)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in self.options.items()}
        opts = replace(DEFAULT_OPTIONS, **kw)
        for k, v in opts.as_dict().items():
            if "tol" in k and not v > 0:
                raise ConfigError(f"tolerance {k} must be positive")
        return opts


def _generate(cfg, n, seed, resolved, base_dir):
    if "file" in cfg:
        pts, w = read_points_csv(base_dir / cfg["file"])
        if pts.shape[1] != n:
            raise ConfigError(f"{cfg['file']}: expected {n} coordinates, found {pts.shape[1]}")
        return pts, w
    gen = cfg.get("generator")
    rng = np.random.default_rng(cfg.get("seed", seed))
    if gen == "uniform-box":
        lo, hi = np.asarray(cfg["low"], float), np.asarray(cfg["high"], float)
        pts = rng.uniform(lo, hi, size=(int(cfg["n"]), n))
    elif gen == "gaussian-clip":
        mean, std = np.asarray(cfg["mean"], float), np.asarray(cfg["std"], float)
        lo, hi = np.asarray(cfg["low"], float), np.asarray(cfg["high"], float)
        pts = np.clip(rng.normal(mean, std, size=(int(cfg["n"]), n)), lo, hi)
    elif gen == "jittered-grid":
        lo, hi = np.asarray(cfg["low"], float), np.asarray(cfg["high"], float)
        shape = cfg["shape"]
        axes = [np.linspace(lo[i], hi[i], shape[i]) for i in range(n)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        cell = (hi - lo) / np.maximum(np.asarray(shape) - 1, 1)
        pts = pts + rng.uniform(-1, 1, size=pts.shape) * float(cfg.get("jitter", 0.1)) * cell
    elif gen == "translate":
        src = cfg["of"]
        if src not in resolved:
            raise ConfigError(f"measure 'translate' refers to undefined or later measure {src!r}")
        pts = resolved[src][0] + np.asarray(cfg["by"], float)
        return pts, resolved[src][1].copy()
    else:
        raise ConfigError(f"unknown measure generator {gen!r}")
    return pts, np.full(len(pts), 1.0 / len(pts))


def load_measures(sc, n):
    """Resolve every measure before any experiment runs, so config errors leave no artifacts."""
    out = {}
    for k, (name, cfg) in enumerate(sc.measures.items()):
        try:
            out[name] = _generate(cfg, n, sc.seed + 1000 * (k + 1), out, sc.base_dir)
        except KeyError as exc:
            raise ConfigError(f"measure {name!r}: missing field {exc}") from exc
    return {k: DiscreteMeasure(p, w / w.sum()) for k, (p, w) in out.items()}


# --- experiments ------------------------------------------------------------------


@dataclass
class Context:
    frame: object
    opts: ShootingOptions
    measures: dict
    out: Path
    cache: DistanceCache
    threads: int
    seed: int
    base_dir: Path = field(default_factory=Path.cwd)


def _measure(ctx, name):
    try:
        return ctx.measures[name]
    except KeyError:
        raise ConfigError(f"undefined measure {name!r}") from None


def exp_geodesic(ctx, e, name):
    steps = int(e.get("steps", ctx.opts.steps))
    ext = flow_extremal(ctx.frame, np.asarray(e["x0"], float), np.asarray(e["p0"], float), steps)
    H = ext.hamiltonian_values()
    n, m = ctx.frame.n, ctx.frame.m
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)] + ["H"]
    rows = [[ext.grid[k], *ext.xs[k], *ext.ps[k], *ext.controls[k], H[k]] for k in range(len(ext.grid))]
    write_csv(ctx.out / f"{name}.csv", header, rows)
    length, energy = length_energy(HorizontalPath(ctx.frame, ext.x0, ext.controls))
    return {
        "endpoint": ext.endpoint,
        "hamiltonian": float(H[0]),
        "energy_drift": ext.energy_drift(),
        "length": length,
        "energy": energy,
        "steps": steps,
    }


def exp_distance(ctx, e, name):
    x, y = np.asarray(e["x"], float), np.asarray(e["y"], float)
    res = distance(ctx.frame, x, y, ctx.opts)
    report = res.to_json()
    if e.get("probe"):
        probe = multi_geodesic_probe(ctx.frame, x, y, ctx.opts)
        report["probe"] = probe.to_json()
    return report


def exp_distmatrix(ctx, e, name):
    mu = _measure(ctx, e["points"])
    table = ctx.cache.table(ctx.frame, mu.points, mu.points, ctx.opts, threads=ctx.threads)
    N = len(mu)
    write_csv(ctx.out / f"{name}.csv", [""] + [f"p{j}" for j in range(N)], [[f"p{a}", *table.values[a]] for a in range(N)])
    return {
        "size": N,
        "max_asymmetry": float(np.max(np.abs(table.values - table.values.T))),
        "methods": sorted(set(table.methods.ravel().tolist())),
        "max": float(table.values.max()),
    }


def read_path_csv(path, m):
    """Controls from a CSV with columns ``t, u1..um`` and optional ``x0_1..x0_n`` on the first row."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"path file {path} does not exist")
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path} has no data rows")
    try:
        U = np.array([[float(r[f"u{i + 1}"]) for i in range(m)] for r in rows])
    except KeyError as exc:
        raise ConfigError(f"{path}: missing control column {exc}") from None
    x0_cols = sorted((k for k in rows[0] if k.startswith("x0_")), key=lambda k: int(k[3:]))
    x0 = np.array([float(rows[0][k]) for k in x0_cols]) if x0_cols else None
    return U, x0


def _parse_path(ctx, e):
    m = ctx.frame.m
    x0 = np.asarray(e["x0"], float) if "x0" in e else None
    if "file" in e:
        U, file_x0 = read_path_csv(ctx.base_dir / e["file"], m)
        x0 = file_x0 if x0 is None else x0
    elif "controls" in e:
        U = np.asarray(e["controls"], float)
    else:
        U = np.tile(np.asarray(e["u"], float), (int(e.get("steps", ctx.opts.steps)) + 1, 1))
    if x0 is None or len(x0) != ctx.frame.n:
        raise ConfigError(f"path needs a base point x0 with {ctx.frame.n} coordinates")
    return HorizontalPath(ctx.frame, x0, U)


def singular_verdict(frame, path, goh_tol=1e-8):
    rank = endpoint_rank(frame, path)
    cert = abnormal_certificate(frame, path)
    out = {"rank": rank, "singular": rank < frame.n, "goh": None, "residuals": {}}
    if cert is not None:
        out["goh"] = goh_test(frame, cert, goh_tol)
        out["residuals"] = {
            "annihilation": cert.residual,
            "transport": cert.transport_defect,
            "goh": cert.goh_residual,
        }
        out["p0"] = cert.p0
    return out


def exp_singular(ctx, e, name):
    paths = e.get("paths", [e])
    return {"paths": [singular_verdict(ctx.frame, _parse_path(ctx, p), e.get("goh_tol", 1e-8)) for p in paths]}


def exp_regularity(ctx, e, name):
    out = {}
    seed = int(e.get("seed", ctx.seed))
    if e.get("probe", "both") in ("semiconcavity", "both"):
        samples = int(e.get("samples", 200))
        base = e.get("base_pair", [[0, 0, 0], [1, 1, 0.5]])
        r = semiconcavity_probe(
            ctx.frame,
            base,
            samples=samples,
            radius=float(e.get("radius", 0.3)),
            d_range=tuple(e.get("d_range", (0.5, 2.0))),
            seed=seed,
            opts=ctx.opts,
        )
        out["C_hat"] = r.estimate
        out["C_hat_half"] = r.prefix_estimate(samples // 2)
        out["semiconcavity"] = r.params
    if e.get("probe", "both") in ("lipschitz", "both"):
        region = e.get("region", [[-1.0] * ctx.frame.n, [1.0] * ctx.frame.n])
        scale = float(e.get("scale", 1e-2))
        r = lipschitz_probe(ctx.frame, region, samples=int(e.get("lip_samples", e.get("samples", 200))), scale=scale, seed=seed, opts=ctx.opts)
        out["L_hat"] = r.estimate
        out["region"] = region
        out["scales"] = [scale]
    out["samples"] = int(e.get("samples", 200))
    return out


def _plan_outputs(ctx, name, plan, duals):
    rows, cols, vals = plan.triplets()
    write_csv(ctx.out / f"{name}_plan.csv", ["source", "target", "mass"], zip(rows, cols, vals))
    write_csv(
        ctx.out / f"{name}_duals.csv",
        ["side", "index", "value"],
        [("phi", a, v) for a, v in enumerate(duals.phi)] + [("phic", b, v) for b, v in enumerate(duals.phic)],
    )


def exp_ot(ctx, e, name):
    mu, nu = _measure(ctx, e["source"]), _measure(ctx, e["target"])
    C = ctx.cache.cost_matrix(ctx.frame, mu.points, nu.points, ctx.opts, threads=ctx.threads)
    plan, duals = solve_kantorovich(mu, nu, C, method=e.get("method", "simplex"))
    _plan_outputs(ctx, name, plan, duals)
    sd = superdifferential_check(plan, duals, C)
    return {
        "cost": plan.cost,
        "w2": math.sqrt(max(plan.cost, 0.0)),
        "gap": duals.gap,
        "marginal_error": plan.marginal_error(mu.weights, nu.weights),
        "superdifferential": sd.to_json(),
        "multi_destination_rows": plan.multi_destination_rows(),
        "single_destination_fraction": 1.0 - len(plan.multi_destination_rows()) / len(mu),
    }


def _box_density(cfg):
    if cfg is None:
        return None
    lo, hi = np.asarray(cfg["low"], float), np.asarray(cfg["high"], float)
    scale = float(cfg.get("scale", 1.0))
    vol = float(np.prod(hi - lo))

    def dens(z):
        return scale / vol if np.all(z >= lo - 1e-12) and np.all(z <= hi + 1e-12) else 0.0

    return dens


def exp_transport(ctx, e, name):
    mu, nu = _measure(ctx, e["source"]), _measure(ctx, e["target"])
    table = ctx.cache.table(ctx.frame, mu.points, nu.points, ctx.opts, threads=ctx.threads)
    C = table.cost
    plan, duals = solve_kantorovich(mu, nu, C)
    _plan_outputs(ctx, name, plan, duals)
    tmap = build_map(plan, duals, ctx.frame, ctx.opts, table=table, max_excluded=float(e.get("max_excluded", 0.05)))
    report = {
        "cost": plan.cost,
        "single_destination_fraction": 1.0 - len(tmap.excluded) / len(mu),
        "excluded_rows": tmap.excluded,
        "moving": int(tmap.moving.sum()),
        "static": int(tmap.static.sum()),
        "exp_consistency_fraction": tmap.consistency_fraction(1e-6),
        "max_endpoint_error": float(np.nanmax(tmap.endpoint_errors)) if len(tmap.endpoint_errors) else 0.0,
    }
    # dphi regression on the centred dual face, cross-checked against covectors
    n, N = ctx.frame.n, len(mu)
    k = int(e.get("k", min(2 * n + 2, N)))
    if N >= n + 1:
        cd = centred_duals(plan, C)
        ghat, _ = regress_dphi(cd, mu.points, k=k)
        tmap.ghat = ghat
        interior = interior_mask(mu.points, float(e.get("interior_margin", 0.15)))
        cos = direction_agreement(tmap, ghat, interior)
        valid = np.isfinite(cos)
        report["direction_agreement"] = {
            "k": k,
            "interior_moving": int(valid.sum()),
            "fraction_cos_ge_0.9": float(np.mean(cos[valid] >= 0.9)) if valid.any() else 1.0,
            "min_cos": float(np.min(cos[valid])) if valid.any() else 1.0,
        }
    else:
        report["direction_agreement"] = {"skipped": f"{N} atoms cannot support an affine fit in dimension {n}"}
    X, T = tmap.sources, tmap.destinations
    write_csv(
        ctx.out / f"{name}_map.csv",
        [f"x{i + 1}" for i in range(n)] + [f"T{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)] + ["label"],
        [[*X[a], *T[a], *tmap.covectors[a], tmap.labels[a]] for a in range(len(X))],
    )

    t_list = sorted(set([0.0, *map(float, e.get("t", [0.25, 0.5, 0.75])), 1.0]))
    interp = interpolate(tmap, ctx.frame, t_list, ctx.opts)
    for k, t in enumerate(t_list):
        write_csv(
            ctx.out / f"{name}_interp_t{t:.4f}.csv",
            [f"x{i + 1}" for i in range(n)] + ["weight", "source", "target"],
            [[*interp.clouds[k][j], interp.weights[j], interp.source_index[j], interp.target_index[j]] for j in range(len(interp.weights))],
        )
    inner = [k for k, t in enumerate(t_list) if 0.0 < t < 1.0]
    if e.get("split_check", True) and inner:
        k = min(inner, key=lambda j: abs(t_list[j] - 0.5))
        split, speed = split_residual(tmap, interp, k, ctx.opts)
        report["split"] = {
            "t": t_list[k],
            "max_relative": float(split.max()) if len(split) else 0.0,
            "max_speed_defect": float(speed.max()) if len(speed) else 0.0,
        }
    if e.get("geodesic_check", True):
        report["geodesic"] = geodesic_check(mu, interp, nu, ctx.frame, ctx.opts, cache=ctx.cache, threads=ctx.threads).to_json()
    report["continuity"] = [abs_continuity_probe(interp, t_list[k]).to_json() for k in inner]
    report["min_injectivity_margin"] = min((c["injectivity_margin"] for c in report["continuity"]), default=math.inf)
    if "densities" in e:
        dens = e["densities"]
        f, g = _box_density(dens.get("f")), _box_density(dens.get("g"))
        box = (np.asarray(dens["f"]["low"], float), np.asarray(dens["f"]["high"], float))
        jr = jacobian_residual(tmap, ctx.frame, f, g, float(e.get("grid_h", 0.02)), box=box, shape=int(e.get("grid", 12)), opts=ctx.opts)
        report["jacobian"] = jr.to_json()
    report["diagnostics"] = interp.diagnostics
    return report


RUNNERS = {
    "geodesic": exp_geodesic,
    "distance": exp_distance,
    "distmatrix": exp_distmatrix,
    "singular": exp_singular,
    "regularity": exp_regularity,
    "ot": exp_ot,
    "transport": exp_transport,
}


REQUIRED = {
    "geodesic": ("x0", "p0"),
    "distance": ("x", "y"),
    "distmatrix": ("points",),
    "singular": (),
    "regularity": (),
    "ot": ("source", "target"),
    "transport": ("source", "target"),
}
POINT_FIELDS = ("x0", "p0", "x", "y")
MEASURE_FIELDS = ("points", "source", "target")


def validate_experiments(sc, n, measures):
    """Reject malformed experiments before anything is written."""
    names = set()
    for k, e in enumerate(sc.experiments):
        name = e.get("name", f"{k:02d}_{e['kind']}")
        if name in names:
            raise ConfigError(f"duplicate experiment name {name!r}")
        names.add(name)
        for f in REQUIRED[e["kind"]]:
            if f not in e:
                raise ConfigError(f"experiment {name!r} ({e['kind']}): missing field {f!r}")
        for f in POINT_FIELDS:
            if f in e and len(e[f]) != n:
                raise ConfigError(f"experiment {name!r}: {f} must have {n} coordinates")
        for f in MEASURE_FIELDS:
            if f in e and e[f] not in measures:
                raise ConfigError(f"experiment {name!r}: undefined measure {e[f]!r}")
        for p in e.get("paths", [e] if e["kind"] == "singular" else []):
            if "file" in p and not (sc.base_dir / p["file"]).exists():
                raise ConfigError(f"experiment {name!r}: path file {p['file']!r} does not exist")
        for c in e.get("checks", []):
            if "metric" not in c:
                raise ConfigError(f"experiment {name!r}: every check needs a 'metric'")


# --- checks -----------------------------------------------------------------------


def _lookup(report, dotted):
    cur = report
    for part in dotted.split("."):
        if isinstance(cur, list):
            cur = cur[int(part)]
        else:
            cur = cur[part]
    return cur


def evaluate_checks(report, checks):
    """``[{metric, min?, max?, equals?}]`` against a report; returns per-check results."""
    out = []
    for c in checks:
        try:
            v = _lookup(report, c["metric"])
        except (KeyError, IndexError, ValueError, TypeError):
            out.append({**c, "value": None, "passed": False})
            continue
        ok = True
        if "equals" in c:
            ok &= v == c["equals"]
        if "min" in c:
            ok &= v is not None and float(v) >= c["min"]
        if "max" in c:
            ok &= v is not None and float(v) <= c["max"]
        out.append({**c, "value": v, "passed": bool(ok)})
    return out


# --- run ----------------------------------------------------------------------------


@dataclass
class RunResult:
    status: int
    out_dir: Path
    manifest: dict
    reports: dict


def _sha(text):
    return hashlib.sha256(text.encode()).hexdigest()


def run(scenario, out_dir=None, seed=None, threads=1, cache=None):
    """Execute a scenario; returns a :class:`RunResult` whose ``status`` is the CLI exit code."""
    t0 = time.perf_counter()
    if isinstance(scenario, (str, Path)):
        sc = Scenario.load(scenario)
    elif isinstance(scenario, Scenario):
        sc = scenario
    else:
        sc = Scenario.from_dict(scenario)
    if seed is not None:
        sc.seed = int(seed)
    frame = catalog(sc.frame)
    opts = sc.shooting_options()
    measures = load_measures(sc, frame.n)
    validate_experiments(sc, frame.n, measures)
    out = Path(out_dir or sc.output or "srotlab-out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from exc
    ctx = Context(frame, opts, measures, out, cache or DistanceCache(), max(1, int(threads)), sc.seed, sc.base_dir)
    (out / "frame.json").write_text(dumps(frame.describe()), encoding="utf-8")

    status = EXIT_OK
    reports, timings, artifacts = {}, {}, ["frame.json"]
    for k, e in enumerate(sc.experiments):
        name = e.get("name", f"{k:02d}_{e['kind']}")
        t1 = time.perf_counter()
        try:
            report = RUNNERS[e["kind"]](ctx, e, name)
        except KeyError as exc:
            raise ConfigError(f"experiment {name!r}: missing field {exc}") from exc
        except SrotlabError as exc:
            exc.args = (f"experiment {name!r} ({e['kind']}): {exc}",)
            raise
        checks = evaluate_checks(report, e.get("checks", []))
        report = {"kind": e["kind"], "name": name, "result": report, "checks": checks}
        if e.get("acceptance") and not all(c["passed"] for c in checks):
            status = EXIT_CHECK
        reports[name] = report
        (out / f"{name}.json").write_text(dumps(report), encoding="utf-8")
        artifacts.append(f"{name}.json")
        timings[name] = time.perf_counter() - t1

    artifacts = sorted(set(artifacts) | {p.name for p in out.iterdir() if p.suffix == ".csv"})
    manifest = {
        "scenario_sha256": _sha(json.dumps(_clean(sc.__dict__ | {"base_dir": None}), sort_keys=True)),
        "frame": frame.describe() | {"lattice": None},
        "seed": sc.seed,
        "options": opts.as_dict(),
        "versions": {
            "srotlab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "backend": kernels.BACKEND,
        },
        "artifacts": artifacts,
        "status": status,
        "cache": {"hits": ctx.cache.hits, "misses": ctx.cache.misses, "dir": str(ctx.cache.root)},
        "wall_time": {"total": time.perf_counter() - t0, "experiments": timings},
        "argv": sys.argv,
    }
    (out / "manifest.json").write_text(dumps(manifest), encoding="utf-8")
    return RunResult(status, out, manifest, reports)
