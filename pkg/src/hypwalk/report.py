"""Experiment orchestration and report emission.

Each experiment computes a result object, a pass/fail verdict against
its generic bands, and an optional CSV series.  Reports are
deterministic: same config and seed give byte-identical output up to the
``generated_at`` timestamp field.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction

import numpy as np
import scipy

from . import __version__ as _pkg_version
from .classify import classify
from .config import ExperimentConfig
from .errors import HypwalkError
from .green import (
    ancona_check,
    configure_row_cache,
    default_max_radius,
    first_passage,
    green,
    green_decay_slope,
    harnack_constant,
    restricted_green,
)
from .groups import FREE, GroupElement, GroupModel
from .martin import (
    BoundaryPoint,
    hoelder_probe,
    martin_kernel,
    martin_kernel_at,
    ratio_invariant,
)
from .measure import Cylinder, estimate_measure, gibbs_ratio, radon_nikodym_check
from .walks import (
    sample_boundary_point,
    sample_path,
    spectral_radius_estimate,
    validate_walk,
)


def _plain(obj):
    """Convert report objects to JSON-serializable plain data."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, GroupElement):
        return str(obj)
    if isinstance(obj, GroupModel):
        return str(obj)
    if isinstance(obj, BoundaryPoint):
        return str(obj)
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_plain(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(x) for x in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _probe_points(model: GroupModel) -> tuple[list[GroupElement], list[BoundaryPoint]]:
    """Infinite-order probe elements and distinct boundary points."""
    if model.kind == FREE:
        a, b = model.word("a"), model.word("b")
        return [a, a * b], [BoundaryPoint.periodic(a), BoundaryPoint.periodic(b)]
    s, t = model.word("s"), model.word("t")
    return [s * t, t * s], [BoundaryPoint.periodic(s * t), BoundaryPoint.periodic(t * s)]


def _diverging_point(model: GroupModel, axis: BoundaryPoint, shared: int) -> BoundaryPoint | None:
    """A boundary point sharing exactly ``shared`` letters with the axis.

    The continuation letter is switched to a non-cancelling alternative
    (for a cyclic factor: the opposite direction around its cycle, which
    splits inside the polygon), then extended along a safe cycle.  None
    when the position admits no diverging continuation.
    """
    letters = axis.prefix_letters(shared + 1)
    head = model.from_letters(letters[:shared])
    nxt = letters[shared]
    gens = model.generators()
    alt = None
    for cand in gens:
        letter = cand.letters()[0]
        if letter == nxt:
            continue
        if (head * cand).word_length() != head.word_length() + 1:
            continue
        if model.kind != FREE and abs(letter) == abs(nxt):
            alt = cand  # same factor, other direction: splits in-cycle
            break
        if alt is None:
            alt = cand
    if alt is None:
        return None
    new_head = head * alt
    for cyc in _cycle_candidates(model):
        try:
            return BoundaryPoint(head=new_head, cycle=cyc)
        except HypwalkError:
            continue
    return None


def _cycle_candidates(model: GroupModel):
    if model.kind == FREE:
        return [model.word(w) for w in ("a", "b", "ab", "ba", "Ab")]
    s, t = model.word("s"), model.word("t")
    return [s * t, t * s, s * t * t, t * t * s]


def _hoelder_pairs(model: GroupModel, g_len: int, count: int = 8):
    axis = _probe_points(model)[1][0]
    pairs = []
    j = 0
    while len(pairs) < count and j <= 4 * count:
        eta = _diverging_point(model, axis, j)
        if eta is not None:
            pairs.append((axis, eta))
        j += 1
    return pairs


# ---------------------------------------------------------------------------
# individual experiments: each returns (result, passed, csv_or_None)


def _exp_green(cfg: ExperimentConfig):
    walk = cfg.walk
    tol = cfg.tolerances["green_tol"]
    cap = cfg.budgets["max_radius"] or default_max_radius(cfg.model)
    b = __import__("hypwalk.groups", fromlist=["ball"]).ball(cfg.model, min(4, cap - 4))
    e = cfg.model.identity()
    rows = []
    ok = True
    for i in range(len(b)):
        g = b.element(i)
        est = green(walk, e, g, tol, max_radius=cap, strict=False,
                    max_states=cfg.budgets["max_states"])
        ok = ok and est.lower <= est.value <= est.upper
        rows.append({
            "word": str(g), "length": g.word_length(),
            "value": est.value, "lower": est.lower, "upper": est.upper,
            "converged": est.converged,
        })
    slope, intercept = green_decay_slope(
        walk, max_len=min(5, cap - 4), per_sphere=8, tol=tol, max_radius=cap,
        max_states=cfg.budgets["max_states"],
    )
    base = [restricted_green(walk, r, max_states=cfg.budgets["max_states"]).value(e, e)
            for r in (4, 5, 6)]
    monotone = base[0] <= base[1] <= base[2]
    c1 = harnack_constant(walk)
    ok = ok and slope < 0 and monotone
    result = {
        "entries": rows,
        "decay_slope": slope,
        "decay_intercept": intercept,
        "restricted_base_values": base,
        "monotone": monotone,
        "harnack_constant": c1,
    }
    csv_rows = [(r["word"], r["length"], r["value"], r["lower"], r["upper"]) for r in rows]
    return result, ok, (("word", "length", "value", "lower", "upper"), csv_rows)


def _exp_simulate(cfg: ExperimentConfig):
    walk = cfg.walk
    report = validate_walk(walk)
    path = sample_path(walk, cfg.model.identity(), 64, stream=0)
    sr = spectral_radius_estimate(
        walk, cfg.budgets["spectral_steps"], cfg.budgets["max_states"]
    )
    depths, steps = [], []
    failures = 0
    for i in range(64):
        try:
            s = sample_boundary_point(
                walk, stream=1000 + i,
                patience=cfg.budgets["boundary_patience"],
                max_steps=cfg.budgets["boundary_max_steps"],
            )
            depths.append(s.depth)
            steps.append(s.steps_used)
        except HypwalkError:
            failures += 1
    ok = (
        report.probabilities_ok and report.nearest_neighbour and report.nondegenerate
        and sr.lower < 1.0 and sr.fitted < 1.0 and failures == 0
    )
    result = {
        "validation": report.as_dict(),
        "first_positions": [str(x) for x in path.positions[:8]],
        "spectral_lower": sr.lower,
        "spectral_fitted": sr.fitted,
        "boundary_mean_steps": float(np.mean(steps)) if steps else None,
        "boundary_mean_depth": float(np.mean(depths)) if depths else None,
        "boundary_failures": failures,
    }
    csv_rows = [(2 * k, p) for k, p in enumerate(sr.even_returns)]
    return result, ok, (("steps", "return_probability"), csv_rows)


def _exp_martin(cfg: ExperimentConfig):
    walk = cfg.walk
    cap = cfg.budgets["max_radius"] or default_max_radius(cfg.model)
    dev = cfg.tolerances["kernel_dev"]
    inv_tol = cfg.tolerances["invariant_tol"]
    probes, points = _probe_points(cfg.model)
    rows = []
    ok = True
    for g in probes:
        for xi in points:
            est = martin_kernel(walk, g, xi, dev_threshold=dev, max_radius=cap,
                                max_states=cfg.budgets["max_states"])
            rows.append({
                "g": str(g), "xi": str(xi), "value": est.value,
                "deviation": est.deviation, "depth": est.depth,
                "converged": est.converged,
            })
            ok = ok and est.value > 0
    g1, g2 = probes[0], probes[0].inverse()
    depth = max(1, cap - 4 - g1.word_length() - g2.word_length() - 1)
    y = points[1].prefix(depth)
    lhs = martin_kernel_at(walk, g1 * g2, y, max_radius=cap).value
    rhs = (
        martin_kernel_at(walk, g1, y, max_radius=cap).value
        * martin_kernel_at(walk, g2, g1.inverse() * y, max_radius=cap).value
    )
    cocycle_residual = abs(lhs / rhs - 1.0) if rhs else float("inf")
    ok = ok and cocycle_residual <= inv_tol
    result = {"kernels": rows, "cocycle_residual": cocycle_residual, "cocycle_depth": depth}
    csv_rows = [(r["g"], r["xi"], r["value"], r["deviation"], r["depth"]) for r in rows]
    return result, ok, (("g", "xi", "value", "deviation", "depth"), csv_rows)


def _exp_rg(cfg: ExperimentConfig):
    from .groups import conjugacy_representatives

    walk = cfg.walk
    cap = cfg.budgets["max_radius"] or default_max_radius(cfg.model)
    reps = conjugacy_representatives(cfg.model, cfg.budgets["maxlen"])
    rows = []
    ok = True
    skipped = []
    for g, finite in reps:
        if finite:
            rows.append({"rep": str(g), "length": g.word_length(), "r": 1.0,
                         "n_used": 0, "finite_order": True})
            continue
        try:
            rv = ratio_invariant(walk, g, max_radius=cap,
                                 max_states=cfg.budgets["max_states"])
        except HypwalkError:
            skipped.append(str(g))
            continue
        ok = ok and rv.stable and rv.root_bound_ok and 0 < rv.value < 1
        rows.append({"rep": str(g), "length": g.word_length(), "r": rv.value,
                     "n_used": rv.n_used, "finite_order": False})
    result = {"ratios": rows, "skipped": skipped}
    csv_rows = [(r["rep"], r["length"], r["r"], r["n_used"]) for r in rows]
    return result, ok, (("rep", "length", "r", "n_used"), csv_rows)


def _exp_ancona(cfg: ExperimentConfig):
    walk = cfg.walk
    rep = ancona_check(
        walk,
        n_samples=cfg.budgets["ancona_samples"],
        max_dist=cfg.budgets["ancona_max_dist"],
        rtol=cfg.tolerances["solver_rtol"],
        max_states=cfg.budgets["max_states"],
    )
    inv_tol = cfg.tolerances["invariant_tol"]
    ok = rep.rho_min >= 1.0 - 1e-6 and rep.no_growth()
    result = {
        "radius": rep.radius,
        "rho_min": rep.rho_min,
        "rho_max": rep.rho_max,
        "trend_slope": rep.trend_slope,
        "trend_t": rep.trend_t,
        "n_samples": len(rep.samples),
        "max_by_distance": {str(k): v for k, v in sorted(rep.max_by_distance().items())},
    }
    csv_rows = [(s.dist, s.rho) for s in rep.samples]
    return result, ok, (("distance", "rho"), csv_rows)


def _exp_hoelder(cfg: ExperimentConfig):
    walk = cfg.walk
    cap = cfg.budgets["max_radius"] or default_max_radius(cfg.model)
    probes, _ = _probe_points(cfg.model)
    # On quasi-tree models the kernel is locally constant past the scale
    # of g, so decay is only visible for pairs splitting within it: use a
    # longer probe element there.
    g = probes[0] if cfg.model.kind == FREE else probes[0] ** 3
    pairs = _hoelder_pairs(cfg.model, g.word_length())
    rep = hoelder_probe(walk, g, pairs, max_radius=cap,
                        max_states=cfg.budgets["max_states"])
    # Differences must vanish past the locality scale of g; below it the
    # decay slope is checked whenever enough live points exist to fit.
    threshold = g.word_length() + 2
    beyond_zero = all(p.exact_zero for p in rep.pairs if p.product >= threshold)
    live_products = {p.product for p in rep.pairs if not p.exact_zero}
    ok = beyond_zero and (len(live_products) < 3 or rep.slope < 0)
    result = {
        "g": str(g),
        "pairs": [dataclasses.asdict(p) for p in rep.pairs],
        "slope": rep.slope,
        "stderr": rep.stderr,
        "p_value_negative": rep.p_value_negative,
        "n_zero": rep.n_zero,
        "depth": rep.depth,
    }
    csv_rows = [(p.product, p.difference, int(p.exact_zero)) for p in rep.pairs]
    return result, ok, (("product", "difference", "exact_zero"), csv_rows)


def _exp_gibbs(cfg: ExperimentConfig):
    walk = cfg.walk
    _, points = _probe_points(cfg.model)
    rep = gibbs_ratio(
        walk, points[0], [int(r) for r in cfg.budgets["gibbs_radii"]],
        n_samples=cfg.budgets["n_samples"],
        tol=cfg.tolerances["green_tol"],
        patience=cfg.budgets["boundary_patience"],
        max_steps=cfg.budgets["boundary_max_steps"],
        workers=cfg.budgets["workers"],
        max_radius=cfg.budgets["max_radius"],
    )
    ok = rep.ratio_min > 0 and all(math.isfinite(r.ratio) for r in rep.rows)
    result = {
        "base_point": str(points[0]),
        "rows": [dataclasses.asdict(r) for r in rep.rows],
        "ratio_min": rep.ratio_min,
        "ratio_max": rep.ratio_max,
        "envelope": rep.ratio_max / rep.ratio_min if rep.ratio_min > 0 else float("inf"),
        "n_samples": rep.n_samples,
        "n_indeterminate": rep.n_indeterminate,
    }
    csv_rows = [
        (r.radius, r.nu, r.nu_half, r.f_value, r.ratio, r.ratio_lower, r.ratio_upper)
        for r in rep.rows
    ]
    header = ("radius", "nu", "nu_half", "first_passage", "ratio", "ratio_lower", "ratio_upper")
    return result, ok, (header, csv_rows)


def _exp_rn_check(cfg: ExperimentConfig):
    walk = cfg.walk
    probes, points = _probe_points(cfg.model)
    g = probes[0] if cfg.model.kind == FREE else cfg.model.word("s")
    cyl = Cylinder.around(points[1], 0)
    rep = radon_nikodym_check(
        walk, g, cyl,
        n_samples=cfg.budgets["n_samples"],
        tol=cfg.tolerances["green_tol"],
        patience=cfg.budgets["boundary_patience"],
        max_steps=cfg.budgets["boundary_max_steps"],
        workers=cfg.budgets["workers"],
        max_radius=cfg.budgets["max_radius"],
    )
    result = {
        "g": str(g),
        "cylinder_base": str(points[1]),
        "cylinder_radius": 0,
        **dataclasses.asdict(rep),
    }
    csv_rows = [(rep.pulled_mass, rep.pulled_half, rep.kernel_integral, rep.kernel_half)]
    header = ("pulled_mass", "pulled_half", "kernel_integral", "kernel_half")
    return result, rep.agree, (header, csv_rows)


def _exp_classify(cfg: ExperimentConfig):
    walk = cfg.walk
    rep = classify(
        walk, cfg.budgets["maxlen"], cfg.tolerances["gcd_eps"],
        max_radius=cfg.budgets["max_radius"],
        max_states=cfg.budgets["max_states"],
    )
    ok = all(v.stable and v.root_bound_ok for v in rep.values)
    result = {
        "classification": rep.classification,
        "lattice": rep.lattice,
        "lambda": rep.lam if rep.lattice else None,
        "label": rep.label,
        "eps": rep.eps,
        "stability_interval": list(rep.stability),
        "caveat": rep.caveat,
        "stable_in_maxlen": rep.stable_in_maxlen,
        "maxlen": rep.maxlen,
        "skipped": list(rep.skipped),
        "ratios": [
            {"rep": str(v.element), "length": v.element.word_length(),
             "r": v.value, "n_used": v.n_used, "finite_order": v.finite_order}
            for v in rep.values
        ],
    }
    csv_rows = [(r["rep"], r["length"], r["r"]) for r in result["ratios"]]
    return result, ok, (("rep", "length", "r"), csv_rows)


_EXPERIMENTS = {
    "green": _exp_green,
    "simulate": _exp_simulate,
    "martin": _exp_martin,
    "rg": _exp_rg,
    "ancona": _exp_ancona,
    "hoelder": _exp_hoelder,
    "gibbs": _exp_gibbs,
    "rn-check": _exp_rn_check,
    "classify": _exp_classify,
}


@dataclass(frozen=True)
class ReportBundle:
    report: dict
    passed: bool
    files: tuple[str, ...]


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None) -> ReportBundle:
    """Run the selected experiments and write report.json plus CSV series."""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    configure_row_cache(cfg.row_cache)
    try:
        validation = validate_walk(cfg.walk)
        results = {}
        verdicts = {}
        files = []
        for name in cfg.experiments:
            result, passed, series = _EXPERIMENTS[name](cfg)
            results[name] = _plain(result)
            verdicts[name] = "pass" if passed else "fail"
            if series is not None:
                header, rows = series
                path = os.path.join(out_dir, f"{name.replace('-', '_')}.csv")
                with open(path, "w", newline="", encoding="utf-8") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(header)
                    for row in rows:
                        writer.writerow([_csv_cell(x) for x in row])
                files.append(path)
        passed = all(v == "pass" for v in verdicts.values())
        report = {
            "schema_version": 1,
            "generated_at": datetime.now(timezone.utc).isoformat(),
            "versions": {
                "hypwalk": _pkg_version,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "config_echo": cfg.echo(),
            "model": {"kind": cfg.model.kind, "name": str(cfg.model),
                      "delta_hint": cfg.model.delta_hint},
            "seed": cfg.walk.seed,
            "walk_validation": validation.as_dict(),
            "results": results,
            "verdicts": verdicts,
            "passed": passed,
        }
        path = os.path.join(out_dir, "report.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        files.append(path)
        return ReportBundle(report=report, passed=passed, files=tuple(files))
    finally:
        configure_row_cache(None)


def _csv_cell(x):
    if isinstance(x, float):
        return repr(x)
    return x
