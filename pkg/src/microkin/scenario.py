"""Scenario files: schema, placement construction, suite execution and exports.

A scenario is a JSON object with exactly the keys ``grid``, ``placement``,
``suites``, ``output``, ``seed`` and ``tolerances`` (all but ``placement``
optional)::

    {
      "grid": {"dim": 3, "points": 17, "extent": 1.0},
      "placement": {"family": "SHEAR", "params": {"kappa": 0.3}},
      "suites": ["all"],
      "output": {"dir": "out", "formats": ["csv"]},
      "seed": 0,
      "tolerances": {"scale": 1.0}
    }

Instead of ``family`` a placement may give ``expressions`` for ``phibar``
(3), ``phiv`` (3x3), ``tv`` (3), ``Tc`` (3xn) and ``Lc`` (3x3xn).  ``Fhh`` is
the symbolic gradient of ``phibar``; missing ``Tc``/``Lc`` default to the
gradients of ``tv``/``phiv`` (a holonomic placement).
"""
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .body import BodyGrid, fd_gradient, reference_connection
from .errors import MicrokinError, ScenarioError
from .expr import ExpressionField
from .holonomy import defect_density_field
from .invariance import (
    ALG_TOL,
    FD_TOL,
    MINIMALITY_TARGETS,
    frame_invariance_deviation,
    minimality_counterexample,
    orbit_deviation,
)
from .parallel import pmap
from .placement import (
    FirstOrderPlacement,
    PunctualPlacement,
    builtin_placement,
    validate_embedding,
    validate_physically_acceptable,
)
from .pullback import (
    cauchy_green,
    check_connection_paths,
    connection_block_formula,
    decompose_pseudo_metric,
    kernel_angle_field,
    material_connection,
    micro_metric,
    noslip_connection,
    pull_back_pseudo_metric,
    pull_back_pseudo_metric_blocks,
    pull_back_solder,
    reconstruct_pseudo_metric,
    solder_definitional_residual,
)
from .geometry import kernel_dims

SUITES = ("validate", "pullback", "invariance", "minimality", "holonomy")
SCENARIO_KEYS = ("grid", "placement", "suites", "output", "seed", "tolerances")
FLOAT_DIGITS = 12

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2

SUITE_HELP = {
    "validate": "physical acceptability and embedding checks",
    "pullback": "connection, solder and pseudo-metric pull-backs with dual-path cross-checks",
    "invariance": "principal invariants under random Galilean elements",
    "minimality": "one-invariant-at-a-time counterexamples",
    "holonomy": "loop-defect densities of the material and no-slip connections",
    "all": "every suite above",
}


# ------------------------------------------------------------------ schema


@dataclass
class Scenario:
    grid: dict
    placement: dict
    suites: list = field(default_factory=lambda: ["all"])
    output: dict = field(default_factory=dict)
    seed: int = 0
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a JSON object")
        unknown = sorted(set(data) - set(SCENARIO_KEYS))
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {', '.join(unknown)}")
        if "placement" not in data:
            raise ScenarioError("scenario needs a 'placement'")
        suites = data.get("suites", ["all"])
        if isinstance(suites, str):
            suites = [suites]
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ScenarioError("seed must be a non-negative integer")
        return cls(
            grid=dict(data.get("grid", {})),
            placement=dict(data["placement"]),
            suites=list(suites),
            output=dict(data.get("output", {})),
            seed=seed,
            tolerances=dict(data.get("tolerances", {})),
        )

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def as_dict(self):
        return {k: getattr(self, k) for k in SCENARIO_KEYS}


def expand_suites(names):
    """Normalize a suite list; ``all`` expands in canonical order."""
    out = []
    for item in names:
        name = item["name"] if isinstance(item, dict) else item
        if name == "all":
            out.extend(SUITES)
        elif name in SUITES:
            out.append(name)
        else:
            raise ScenarioError(f"unknown suite {name!r}; choose from {', '.join(SUITES + ('all',))}")
    seen = set()
    return [s for s in SUITES if s in out and not (s in seen or seen.add(s))]


def suite_options(names):
    """Per-suite option objects given as ``{"name": ..., ...}`` entries."""
    return {item["name"]: {k: v for k, v in item.items() if k != "name"} for item in names if isinstance(item, dict)}


def build_grid(spec):
    spec = dict(spec)
    dim = int(spec.pop("dim", 3))
    try:
        if "counts" in spec:
            counts = spec.pop("counts")
            origin = spec.pop("origin", 0.0)
            spacing = spec.pop("spacing")
            grid = BodyGrid(dim, tuple(counts), origin, spacing)
        else:
            grid = BodyGrid.cube(dim, int(spec.pop("points", 17)), float(spec.pop("extent", 1.0)), float(spec.pop("origin", 0.0)))
    except KeyError as exc:
        raise ScenarioError(f"grid spec is missing {exc}") from None
    if spec:
        raise ScenarioError(f"unknown grid keys: {', '.join(sorted(spec))}")
    return grid


def _identity_exprs(shape):
    return np.where(np.eye(shape[0], shape[1], dtype=bool), "1", "0").tolist()


def expression_placement(spec, grid):
    """Placement from field expressions with symbolic derivative blocks."""
    n = grid.n
    unknown = sorted(set(spec) - {"phibar", "phiv", "tv", "Tc", "Lc"})
    if unknown:
        raise ScenarioError(f"unknown expression fields: {', '.join(unknown)}")
    if "phibar" not in spec:
        raise ScenarioError("expression placements need 'phibar'")
    try:
        phibar = ExpressionField(spec["phibar"], (3,))
        phiv = ExpressionField(spec.get("phiv", _identity_exprs((3, 3))), (3, 3))
        tv = ExpressionField(spec.get("tv", ["0", "0", "0"]), (3,))
        fhh = phibar.gradient(n)
        tc = ExpressionField(spec["Tc"], (3, n)) if "Tc" in spec else tv.gradient(n)
        lc = ExpressionField(spec["Lc"], (3, 3, n)) if "Lc" in spec else phiv.gradient(n)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None

    def blocks(x):
        return fhh.evaluate(x), phiv.evaluate(x), tc.evaluate(x), lc.evaluate(x)

    pts = grid.points
    punct = PunctualPlacement(grid, phibar.evaluate(pts), phiv.evaluate(pts), tv.evaluate(pts))
    Fhh, Fvv, Tc, Lc = blocks(pts)
    params = {k: np.asarray(spec[k], dtype=object).tolist() for k in sorted(spec)}
    return FirstOrderPlacement(punct, Fhh, Fvv, Tc, Lc, name="EXPRESSIONS", params=params, analytic=blocks)


def build_placement(spec, grid):
    if "family" in spec and "expressions" in spec:
        raise ScenarioError("placement takes either 'family' or 'expressions', not both")
    if "family" in spec:
        extra = sorted(set(spec) - {"family", "params"})
        if extra:
            raise ScenarioError(f"unknown placement keys: {', '.join(extra)}")
        return builtin_placement(str(spec["family"]), spec.get("params", {}), grid)
    if "expressions" in spec:
        return expression_placement(spec["expressions"], grid)
    raise ScenarioError("placement needs 'family' or 'expressions'")


# ------------------------------------------------------------------ suites


def _max(a):
    a = np.asarray(a, float)
    return float(np.nanmax(a)) if a.size else 0.0


def suite_validate(F, ctx):
    acc = validate_physically_acceptable(F, tol_scale=ctx.tol_scale)
    emb = validate_embedding(F)
    out = {"acceptability": acc.as_dict(), "embedding": emb.as_dict(), "passed": acc.passed and emb.passed}
    return out, {"min_singular_value": emb.min_singular_value}


def suite_pullback(F, ctx):
    s = ctx.tol_scale
    ys = F.grid.fiber_samples
    ref = reference_connection("randomized", F.grid, ctx.seed).connection
    chk_can = check_connection_paths(F, None)
    chk_rnd = check_connection_paths(F, ref)
    ref_gap = float(np.abs(connection_block_formula(F, ref, ys) - connection_block_formula(F, None, ys)).max())
    G = pull_back_pseudo_metric(F, ys)
    G_blk = pull_back_pseudo_metric_blocks(F, ref, ys)
    nos = noslip_connection(F)
    gvv, nos_rec = decompose_pseudo_metric(G, ys)
    roundtrip = float(np.abs(reconstruct_pseudo_metric(gvv, nos_rec, ys) - G).max())
    theta = pull_back_solder(F)
    gbar = cauchy_green(F)
    gv = micro_metric(F)
    S = theta.s0
    solder_metric = float(np.abs(np.swapaxes(S, -1, -2) @ gv @ S - gbar).max())
    dims = kernel_dims(G)
    angles = kernel_angle_field(G, nos, ys)
    res = {
        "connection_dual_path": max(chk_can.definitional_vs_block, chk_rnd.definitional_vs_block),
        "connection_closed_form": max(chk_can.definitional_vs_closed, chk_rnd.definitional_vs_closed),
        "connection_reference_independence": ref_gap,
        "pseudo_metric_dual_path": float(np.abs(G - G_blk).max()),
        "solder_definitional": solder_definitional_residual(F),
        "data_roundtrip": roundtrip,
        "solder_metric_identity": solder_metric,
        "kernel_angle_max": _max(angles),
        "micro_metric_roundtrip": float(np.abs(gvv - gv).max()),
    }
    tol = {
        "connection_dual_path": 1e-10 * s,
        "connection_closed_form": 1e-10 * s,
        "connection_reference_independence": 1e-9 * s,
        "pseudo_metric_dual_path": 1e-10 * s,
        "solder_definitional": 1e-10 * s,
        "data_roundtrip": 1e-9 * s,
        "solder_metric_identity": 1e-10 * s,
        "kernel_angle_max": 1e-7 * s,
        "micro_metric_roundtrip": 1e-9 * s,
    }
    kernel_ok = bool(np.all(dims == F.n))
    passed = kernel_ok and all(res[k] <= tol[k] for k in res)
    gam = material_connection(F)
    fields = {
        "Gbar": gbar,
        "Gvv": gv,
        "Theta": S,
        "Gamma0": gam.c0,
        "Gamma1": gam.c1,
        "kernel_angle": angles.max(axis=-1),
    }
    out = {
        "residuals": res,
        "tolerances": tol,
        "kernel_dim": {"expected": F.n, "min": int(dims.min()), "max": int(dims.max())},
        "reference_seed": ctx.seed,
        "passed": passed,
    }
    return out, fields


def suite_invariance(F, ctx):
    count = int(ctx.options.get("invariance", {}).get("count", 100))
    rep = frame_invariance_deviation(F, count=count, seed=ctx.seed, tol_scale=ctx.tol_scale)
    out = rep.as_dict()
    out["count"] = count
    return out, {}


def suite_minimality(F, ctx):
    s = ctx.tol_scale
    out = {}
    ok = True
    for target in MINIMALITY_TARGETS:
        F2 = minimality_counterexample(F, target)
        dev = orbit_deviation(F, F2)
        changed = dev[target] >= 1e-3
        others = all(v <= (FD_TOL if k == "holonomic" else ALG_TOL) * s for k, v in dev.items() if k != target)
        out[target] = {"construction": F2.name, "deviations": dev, "passed": bool(changed and others)}
        ok = ok and changed and others
    out["passed"] = bool(ok)
    return out, {}


def holonomic_residuals(F, order=4):
    """Interior FD mismatch of the couplings against the shadow's gradients."""
    g = F.grid
    mask = g.interior_mask(order // 2)
    lc = np.abs(F.Lc - fd_gradient(F.punctual.phiv, g, order))[mask]
    tc = np.abs(F.Tc - fd_gradient(F.punctual.tv, g, order))[mask]
    return float(lc.max(initial=0.0)), float(tc.max(initial=0.0))


def suite_holonomy(F, ctx):
    opts = ctx.options.get("holonomy", {})
    side = opts.get("side")
    fields = defect_density_field(F, side=None if side is None else float(side), steps=int(opts.get("steps", 8)))
    curv, disl = fields.interior_max()
    lc_res, tc_res = holonomic_residuals(F)
    fd_tol = 10.0 * F.grid.h**4 * ctx.tol_scale
    holonomic = lc_res <= fd_tol and tc_res <= fd_tol
    flat_tol = 1e-6 * ctx.tol_scale
    out = {
        "loop_side": fields.side,
        "curvature_density_max": curv,
        "dislocation_density_max": disl,
        "coupling_gradient_residual": {"Lc": lc_res, "Tc": tc_res, "tolerance": fd_tol},
        "holonomic": bool(holonomic),
        "flat_tolerance": flat_tol,
        # non-holonomic placements carry defects by design; the check applies to holonomic ones
        "passed": bool(not holonomic or (curv <= flat_tol and disl <= flat_tol)),
    }
    return out, {"curvature_density": fields.curvature, "dislocation_density": fields.dislocation}


SUITE_FUNCS = {
    "validate": suite_validate,
    "pullback": suite_pullback,
    "invariance": suite_invariance,
    "minimality": suite_minimality,
    "holonomy": suite_holonomy,
}


@dataclass
class RunContext:
    seed: int
    tol_scale: float = 1.0
    options: dict = field(default_factory=dict)


# ------------------------------------------------------------------ output


def clean(obj, digits=FLOAT_DIGITS):
    """JSON-safe copy with floats rounded to ``digits`` significant digits."""
    if isinstance(obj, dict):
        return {str(k): clean(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{digits}g}")
    return obj


def dumps_report(report):
    return json.dumps(clean(report), sort_keys=True, indent=2) + "\n"


def _entry_names(name, comp):
    if not comp:
        return [name]
    return [f"{name}_" + "".join(str(i + 1) for i in idx) for idx in np.ndindex(*comp)]


def write_field_csv(path, grid, name, values, digits=FLOAT_DIGITS):
    """One row per node: coordinates then row-major entries (e.g. ``Gvv_11``)."""
    values = np.asarray(values, float)
    comp = values.shape[grid.n :]
    flat = values.reshape(grid.size, -1)
    pts = grid.points.reshape(grid.size, grid.n)
    fmt = f"{{:.{digits}g}}"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"X{i + 1}" for i in range(grid.n)] + _entry_names(name, comp))
        for p, v in zip(pts, flat):
            w.writerow([fmt.format(x) for x in p] + [fmt.format(x) for x in v])


def write_field_json(path, grid, name, values):
    values = np.asarray(values, float)
    doc = {"name": name, "grid": grid.describe(), "shape": list(values.shape[grid.n :]), "values": values}
    Path(path).write_text(json.dumps(clean(doc), sort_keys=True) + "\n")


# ------------------------------------------------------------------ driver


@dataclass
class RunResult:
    exit_code: int
    report: dict
    out_dir: Optional[Path]


def error_report(exc, stage):
    return {
        "error": {"type": type(exc).__name__, "message": str(exc), "stage": stage},
        "exit_code": EXIT_INVALID,
        "passed": False,
    }


def _write(out_dir, report, fields, grid, formats):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(dumps_report(report))
    if fields:
        fdir = out_dir / "fields"
        fdir.mkdir(exist_ok=True)
        for name in sorted(fields):
            if "csv" in formats:
                write_field_csv(fdir / f"{name}.csv", grid, name, fields[name])
            if "json" in formats:
                write_field_json(fdir / f"{name}.json", grid, name, fields[name])


def run_scenario(path_or_scenario, seed=None, suites=None, out=None, tol_scale=None, allow_invalid=False, write=True):
    """Run a scenario and write ``report.json`` plus ``fields/`` exports.

    Returns
    -------
    RunResult
        ``exit_code`` is 0 when every verdict passes, 1 when some suite
        fails, 2 for invalid input or a placement that fails validation.
    """
    stage = "load"
    out_dir = Path(out) if out is not None else None
    try:
        sc = path_or_scenario if isinstance(path_or_scenario, Scenario) else Scenario.load(path_or_scenario)
        if out_dir is None:
            out_dir = Path(sc.output.get("dir", "out"))
        formats = sc.output.get("formats", ["csv"])
        if isinstance(formats, str):
            formats = [formats]
        bad = sorted(set(formats) - {"csv", "json"})
        if bad:
            raise ScenarioError(f"unknown output formats: {', '.join(bad)}")
        seed = sc.seed if seed is None else int(seed)
        scale = float(tol_scale if tol_scale is not None else sc.tolerances.get("scale", 1.0))
        if not scale > 0:
            raise ScenarioError("tolerance scale must be positive")
        names = expand_suites(suites if suites else sc.suites)
        ctx = RunContext(seed, scale, suite_options(sc.suites))
        stage = "grid"
        grid = build_grid(sc.grid)
        stage = "placement"
        F = build_placement(sc.placement, grid)
        stage = "validate"
        gate, gate_fields = suite_validate(F, ctx)
    except (MicrokinError, ValueError, TypeError) as exc:
        report = error_report(exc, stage)
        if write and out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "report.json").write_text(dumps_report(report))
        return RunResult(EXIT_INVALID, report, out_dir)

    report = {
        "scenario": sc.as_dict(),
        "seed": seed,
        "tolerance_scale": scale,
        "grid": grid.describe(),
        "placement": F.describe(),
        "suites": {},
    }
    fields = {}
    if not gate["passed"] and not allow_invalid:
        report["suites"]["validate"] = gate
        report["error"] = {
            "type": "InvalidPlacement",
            "message": "placement fails validation (embedding or acceptability); use --allow-invalid to continue",
            "stage": "validate",
            "embedding_failed": not gate["embedding"]["passed"],
        }
        report["passed"] = False
        report["exit_code"] = EXIT_INVALID
        if write:
            _write(out_dir, report, gate_fields, grid, formats)
        return RunResult(EXIT_INVALID, report, out_dir)

    def one(name):
        if name == "validate":
            return gate, gate_fields
        try:
            return SUITE_FUNCS[name](F, ctx)
        except MicrokinError as exc:
            return {"error": {"type": type(exc).__name__, "message": str(exc)}, "passed": False}, {}

    results = pmap(one, names)
    for name, (res, flds) in zip(names, results):
        report["suites"][name] = res
        fields.update(flds)
    passed = all(r["passed"] for r, _ in results)
    code = EXIT_OK if passed else EXIT_FAILED
    report["passed"] = passed
    report["exit_code"] = code
    if write:
        _write(out_dir, report, fields, grid, formats)
    return RunResult(code, report, out_dir)
