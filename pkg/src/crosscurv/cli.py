"""Command-line front end: ``crosscurv <command> --config PATH | --preset NAME``.

Exit codes: curvature 0/1/2 = A3s/A3w/violated; mountaincheck 0 pass, 2
violation; semidiscrete 0 converged, 1 not converged; selftest 0 all green,
1 otherwise; 3 runtime error; 64 usage error.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import envelopes as env
from . import regularity as reg
from .cost_core import BUILTIN_KINDS, DomainSpec, cost_from_config, make_builtin_cost
from .errors import CrossCurvError

EXIT_OK, EXIT_WEAK, EXIT_VIOLATED, EXIT_ERROR, EXIT_USAGE = 0, 1, 2, 3, 64

# ---------------------------------------------------------------------------
# schemas

_INTERVAL = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_BOX = {"type": "array", "items": _INTERVAL, "minItems": 1}
_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 1}

COST_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": [*BUILTIN_KINDS, "product"]},
        "n": {"type": "integer", "minimum": 1},
        "params": {"type": "object"},
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "box": {"oneOf": [_BOX, {
                    "type": "object", "additionalProperties": False,
                    "properties": {"source": _BOX, "target": _BOX}}]},
                "cut_margin": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

_COMMON = {"seed": {"type": "integer", "minimum": 0},
           "workers": {"type": "integer", "minimum": 1},
           "description": {"type": "string"}}


def _schema(required, props):
    return {"type": "object", "additionalProperties": False, "required": required,
            "properties": {**_COMMON, **props}}


SCHEMAS = {
    "curvature": _schema(["cost"], {
        "cost": COST_SCHEMA,
        "points_per_side": {"type": "integer", "minimum": 1},
        "directions_per_point": {"type": "integer", "minimum": 1},
        "tol": {"type": "number", "minimum": 0},
        "include_diagonal": {"type": "boolean"},
        "diagonal_probe": {
            "type": "object", "additionalProperties": False,
            "properties": {"points": {"type": "integer", "minimum": 1},
                           "expected": {"type": "number"},
                           "via_fd": {"type": "boolean"}},
        },
    }),
    "mountaincheck": _schema(["cost"], {
        "cost": COST_SCHEMA,
        "x": _POINT, "xbar0": _POINT, "xbar1": _POINT,
        "ys": {"type": "array", "items": _POINT, "minItems": 1},
        "y_radius": {"type": "number", "exclusiveMinimum": 0},
        "y_per_axis": {"type": "integer", "minimum": 2},
        "t_samples": {"type": "integer", "minimum": 2},
        "tol": {"type": "number", "minimum": 0},
        "witness": {"enum": ["hyperbolic"]},
        "search": {"type": "object", "additionalProperties": False,
                   "properties": {"trials": {"type": "integer", "minimum": 1},
                                  "radius": {"type": "number", "exclusiveMinimum": 0},
                                  "spread": {"type": "number", "exclusiveMinimum": 0}}},
    }),
    "semidiscrete": _schema([], {
        "figure1": {"enum": sorted(env.FIGURE1)},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "resolution": {"type": "integer", "minimum": 4},
        "cost": COST_SCHEMA,
        "box": _BOX,
        "density_csv": {"type": "string"},
        "targets": {"type": "array", "items": _POINT, "minItems": 1},
        "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "mass_tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
        "adjacency": {"enum": [4, 8]},
    }),
}

PRESETS = {
    "figure1-plane": ("semidiscrete", {"figure1": "plane", "resolution": 512}),
    "figure1-sphere": ("semidiscrete", {"figure1": "sphere", "resolution": 512}),
    "figure1-hyperbolic": ("semidiscrete", {"figure1": "hyperbolic", "resolution": 512}),
    "reflector-a3s": ("curvature", {
        "cost": {"kind": "log_euclid", "n": 2,
                 "domain": {"box": {"source": [[0.0, 0.3], [0.0, 0.3]],
                                    "target": [[0.7, 1.0], [0.7, 1.0]]}}},
        "points_per_side": 8, "directions_per_point": 12, "include_diagonal": False}),
    "sphere-diagonal-43": ("curvature", {
        "cost": {"kind": "sphere_squared", "n": 2,
                 "domain": {"box": [[0.8, 2.3], [-0.7, 0.7]]}},
        "points_per_side": 8, "directions_per_point": 12,
        "diagonal_probe": {"points": 20, "expected": 4.0 / 3.0, "via_fd": True}}),
}

# ---------------------------------------------------------------------------
# output


def to_json(obj) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits, non-finite → null."""
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {to_json(v)}" for k, v in sorted(obj.items()))
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return "%.17g" % obj if math.isfinite(obj) else "null"
    return json.dumps(obj)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# commands


def cmd_curvature(cfg: dict, out: Path) -> int:
    chart = cost_from_config(cfg["cost"])
    dom = chart.domain
    if dom.source_box is None or dom.target_box is None:
        raise CrossCurvError("curvature needs source and target boxes in cost.domain.box")
    rep = reg.classify_regularity(
        chart, dom, cfg.get("points_per_side", 8), cfg.get("directions_per_point", 12),
        cfg.get("tol", 1e-8), cfg.get("seed", 0), cfg.get("workers", 1),
        cfg.get("include_diagonal", True))
    result = {"cost": cfg["cost"], "seed": cfg.get("seed", 0), "report": rep.to_dict(),
              "note": "sampled evidence only; not a proof over the continuum"}
    probe = cfg.get("diagonal_probe")
    if probe:
        rng = np.random.default_rng(cfg.get("seed", 0))
        xs = dom.sample(rng, "source", probe.get("points", 20))
        free = chart.with_domain(DomainSpec(cut_margin=dom.cut_margin))  # stencils may leave the box
        vals = [reg.diagonal_cross_curvature(free, x) for x in xs]
        block = {"points": xs.tolist(), "values": vals}
        if probe.get("via_fd", False):
            block["values_fd"] = [reg.diagonal_cross_curvature(free, x, via_fd=True) for x in xs]
        if "expected" in probe:
            block["expected"] = probe["expected"]
            block["max_abs_error"] = max(abs(v - probe["expected"]) for v in vals)
        result["diagonal_probe"] = block
    write_atomic(out / "curvature.json", to_json(result) + "\n")
    print(f"{chart.name}: {rep.classification} (min {rep.min_value:.6g} over {rep.samples} points)")
    return {reg.A3S: EXIT_OK, reg.A3W: EXIT_WEAK, reg.VIOLATED: EXIT_VIOLATED}[rep.classification]


def cmd_mountaincheck(cfg: dict, out: Path) -> int:
    chart = cost_from_config(cfg["cost"])
    tol = cfg.get("tol", 1e-8)
    search = None
    if cfg.get("witness") == "hyperbolic":
        w = reg.load_hyperbolic_witness()
        x, xb0, xb1, ys = w["x"], w["xbar0"], w["xbar1"], [w["y"]]
    elif "search" in cfg:
        s = cfg["search"]
        search = reg.search_violation(chart, seed=cfg.get("seed", 7), trials=s.get("trials", 300),
                                      radius=s.get("radius", 0.6), spread=s.get("spread", 0.5))
        if "x" not in search:
            raise CrossCurvError("search found no admissible configuration")
        x, xb0, xb1, ys = search["x"], search["xbar0"], search["xbar1"], [search["y"]]
    else:
        missing = [k for k in ("x", "xbar0", "xbar1") if k not in cfg]
        if missing:
            raise CrossCurvError(f"mountaincheck needs {missing} (or 'witness'/'search')")
        x, xb0, xb1 = cfg["x"], cfg["xbar0"], cfg["xbar1"]
        if "ys" in cfg:
            ys = cfg["ys"]
        else:
            ys = reg._ball_grid(np.asarray(x, float), cfg.get("y_radius", 0.3),
                                cfg.get("y_per_axis", 9))
    ts = np.linspace(0.0, 1.0, cfg.get("t_samples", 17))
    slide = reg.sliding_mountain_check(chart, x, xb0, xb1, ys, ts)
    contact = reg.contact_connectivity_check(chart, x, xb0, xb1, ys, ts, tol)
    passed = slide.max_violation <= tol and contact.passed
    result = {"cost": cfg["cost"], "x": list(map(float, x)), "xbar0": list(map(float, xb0)),
              "xbar1": list(map(float, xb1)), "tol": tol, "sliding": slide.to_dict(),
              "contact": {"passed": contact.passed, "max_deficit": contact.max_deficit,
                          "heights": list(contact.heights), "skipped": contact.skipped},
              "passed": passed}
    if search is not None:
        result["search"] = search
    write_atomic(out / "mountaincheck.json", to_json(result) + "\n")
    out.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".mountain_grid.csv.")
    os.close(fd)
    try:
        reg.write_mountain_csv(slide, tmp)
        os.replace(tmp, out / "mountain_grid.csv")
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    print(f"{chart.name}: sliding-mountain excess {slide.max_violation:.3g}, "
          f"contact deficit {contact.max_deficit:.3g} -> {'pass' if passed else 'VIOLATION'}")
    return EXIT_OK if passed else EXIT_VIOLATED


def _semidiscrete_problem(cfg: dict) -> env.SemidiscreteProblem:
    if "figure1" in cfg:
        kw = {"resolution": cfg.get("resolution", 512)}
        if "radius" in cfg:
            kw["radius"] = cfg["radius"]
        return env.FIGURE1[cfg["figure1"]](**kw)
    missing = [k for k in ("cost", "box", "targets") if k not in cfg]
    if missing:
        raise CrossCurvError(f"semidiscrete needs 'figure1' or {missing}")
    chart = cost_from_config(cfg["cost"])
    if "density_csv" in cfg:
        rho, box = env.read_density_csv(cfg["density_csv"])
        shape = rho.shape
    else:
        box = cfg["box"]
        m = cfg.get("resolution", 128)
        shape, rho = (m,) * len(box), np.ones(m ** len(box))
    return env.make_problem(chart, box, shape, rho, cfg["targets"], cfg.get("weights"),
                            name=f"semidiscrete-{chart.name}")


def cmd_semidiscrete(cfg: dict, out: Path) -> int:
    prob = _semidiscrete_problem(cfg)
    acfg = env.AscentConfig(mass_tol=cfg.get("mass_tol", 1e-3),
                            max_iter=cfg.get("max_iter", 2000), workers=cfg.get("workers", 1))
    sol = env.solve_semidiscrete(prob, acfg)
    summary = env.solution_summary(sol, cfg.get("adjacency", 4))
    summary["seed"] = cfg.get("seed", 0)
    write_atomic(out / "semidiscrete.json", to_json(summary) + "\n")
    write_atomic(out / "partition.csv", env.partition_csv(sol))
    print(f"{prob.name}: masses {np.round(sol.masses, 6).tolist()}, "
          f"components {summary['components']}, converged={sol.converged}")
    return EXIT_OK if sol.converged else EXIT_WEAK


# ---------------------------------------------------------------------------
# selftest


def _selftest_checks():
    sph = make_builtin_cost("sphere_squared")
    hyp = make_builtin_cost("hyperbolic_squared")
    euc = make_builtin_cost("euclid_quadratic")
    lg = make_builtin_cost("log_euclid")
    x_s = np.array([1.2, 0.3])

    def flat():
        from .geometry import cross_curvature
        rng = np.random.default_rng(0)
        vals = [abs(cross_curvature(euc, *rng.normal(size=(4, 2)))) for _ in range(50)]
        return max(vals) <= 1e-10, f"max |cross| = {max(vals):.2g}"

    def diag_sphere():
        v = reg.diagonal_cross_curvature(sph, x_s)
        k = reg.law_of_cosines_fit(sph, x_s)
        return abs(v - k / 3) <= 5e-2, f"cross {v:.6g}, k/3 = {k / 3:.6g}"

    def classify():
        box = DomainSpec(((0.8, 2.3), (-0.7, 0.7)), ((0.8, 2.3), (-0.7, 0.7)))
        hbox = DomainSpec(((-0.5, 0.5),) * 2, ((-0.5, 0.5),) * 2)
        a = reg.classify_regularity(sph, box, 4, 8).classification
        b = reg.classify_regularity(hyp, hbox, 4, 8).classification
        return (a, b) == (reg.A3S, reg.VIOLATED), f"sphere {a}, hyperbolic {b}"

    def fd_identity():
        x, xb = np.array([0.1, 0.2]), np.array([0.8, 0.5])
        p, pb = np.array([0.6, 0.8]), np.array([-0.3, 0.5])
        from .geometry import cross_curvature
        a, b = cross_curvature(lg, x, xb, p, pb), reg.cross_curvature_via_fd(lg, x, xb, p, pb)
        return abs(a - b) <= max(1e-3, 1e-2 * abs(a)), f"{a:.6g} vs {b:.6g}"

    def witness():
        w = reg.load_hyperbolic_witness()
        rep = reg.sliding_mountain_check(hyp, w["x"], w["xbar0"], w["xbar1"], [w["y"]])
        return rep.max_violation >= 1e-4, f"stored witness excess {rep.max_violation:.3g}"

    def sliding_sphere():
        rng = np.random.default_rng(1)
        worst = -math.inf
        for _ in range(10):
            x = np.array([rng.uniform(1.0, 2.1), rng.uniform(-0.5, 0.5)])
            r = reg.sliding_mountain_check(sph, x, x + rng.uniform(-0.6, 0.6, 2),
                                           x + rng.uniform(-0.6, 0.6, 2),
                                           x + rng.uniform(-0.5, 0.5, (20, 2)))
            worst = max(worst, r.max_violation)
        return worst <= 1e-8, f"max excess {worst:.3g}"

    def semidiscrete():
        sol = env.solve_semidiscrete(env.figure1_hyperbolic(128))
        comps = env.connected_components(sol, 1)
        return sol.max_mass_error() <= 1e-3 and comps >= 2, \
            f"mass error {sol.max_mass_error():.2g}, middle region in {comps} pieces"

    return [("flat cost has zero curvature", flat),
            ("sphere diagonal cross = k/3", diag_sphere),
            ("classification sphere/hyperbolic", classify),
            ("fourth-derivative identity (log)", fd_identity),
            ("hyperbolic witness fixture", witness),
            ("sphere sliding mountain", sliding_sphere),
            ("semidiscrete hyperbolic split", semidiscrete)]


def cmd_selftest(cfg: dict | None = None, out: Path | None = None) -> int:
    ok_all = True
    for name, check in _selftest_checks():
        t0 = time.perf_counter()
        try:
            ok, detail = check()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= bool(ok)
        print(f"{'PASS' if ok else 'FAIL'}  {name:<36s} {detail}  ({time.perf_counter() - t0:.2f}s)")
    return EXIT_OK if ok_all else EXIT_WEAK


COMMANDS = {"curvature": cmd_curvature, "mountaincheck": cmd_mountaincheck,
            "semidiscrete": cmd_semidiscrete, "selftest": cmd_selftest}

# ---------------------------------------------------------------------------
# entry point


def load_config(command: str, args) -> dict:
    if args.preset:
        cmd, cfg = PRESETS[args.preset]
        if cmd != command:
            raise ValueError(f"preset {args.preset!r} is for the {cmd!r} command")
        cfg = copy.deepcopy(cfg)
    else:
        with open(args.config) as fh:
            cfg = json.load(fh)
    jsonschema.validate(cfg, SCHEMAS[command])
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.workers is not None:
        cfg["workers"] = args.workers
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crosscurv", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--config", help="JSON config file")
    src.add_argument("--preset", choices=sorted(PRESETS), help="embedded config")
    ap.add_argument("--out", default=".", help="output directory (default: .)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command == "selftest":
        return cmd_selftest()
    if not (args.config or args.preset):
        print(f"crosscurv {args.command}: one of --config or --preset is required",
              file=sys.stderr)
        return EXIT_USAGE
    if args.workers is not None and args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.command, args)
    except FileNotFoundError as exc:
        print(f"config not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (json.JSONDecodeError, jsonschema.ValidationError, ValueError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(f"invalid config: {msg}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, Path(args.out))
    except (CrossCurvError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
