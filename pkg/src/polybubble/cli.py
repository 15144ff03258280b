"""Command line front end.

    polybubble constants|residual-scaling|reduce|correct|pohozaev|full-audit
        --config FILE --out DIR [--workers N] [--seed S]

Exit codes: 0 pass, 2 config error, 3 quantitative failure, 4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bubbles import solve_kappa
from .config import ConfigError, RunConfig
from .correction import GramError, first_iterate_study, picard_loop
from .degree import DegreeError
from .pohozaev import (bubble_pair, concentration_study, pohozaev_dilation, pohozaev_translation,
                       reduced_equations_residual)
from .quadrature import TubeDomain, constants_B_C
from .reduction import ReducedState, newton_solve_reduced, reduced_degree, t_star
from .residual import make_config, residual_scaling_study

EXIT_OK, EXIT_CONFIG, EXIT_QUANT, EXIT_SOLVER = 0, 2, 3, 4


class StageError(RuntimeError):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


# ------------------------------------------------------------------ serialization


def clean(obj):
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def meta(cfg: RunConfig) -> dict:
    q = cfg.doc["quadrature"]
    return {"config_hash": cfg.hash, "version": __version__, "seed": q["seed"],
            "budgets": {"quadrature": q["n_samples"], "correction": cfg.doc["correction"]["n_samples"],
                        "basis": cfg.doc["correction"]["basis_samples"],
                        "pohozaev": cfg.doc["pohozaev"]["n_samples"]},
            "sample": cfg.doc["sample"]}


def write_json(path: Path, payload: dict):
    path.write_text(json.dumps(clean(payload), sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, cfg: RunConfig, columns: list, rows: list):
    buf = io.StringIO()
    m = meta(cfg)
    budgets = ",".join(f"{k}:{v}" for k, v in sorted(m["budgets"].items()))
    buf.write(f"# config_hash={m['config_hash']} version={m['version']} seed={m['seed']} budgets={budgets}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(clean(r.get(c))) for c in columns])
    path.write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else v


# ------------------------------------------------------------------ stages


def _t_value(cfg: RunConfig, pp, c) -> float:
    if cfg.doc["t"] is not None:
        return float(cfg.doc["t"])
    try:
        return t_star(pp, c)
    except ValueError as exc:
        raise StageError(f"t is not set and t* is undefined: {exc}", EXIT_CONFIG) from None


def cmd_constants(cfg: RunConfig, out: Path) -> int:
    c = cfg.coupling()
    roots = solve_kappa(c.beta, c.N)
    consts = constants_B_C(c)
    payload = {
        "meta": meta(cfg), "N": c.N, "beta": c.beta, "kappa": c.kappa, "s": c.s,
        "kappa_roots": [{"kappa": r.kappa, "residual": r.residual, "printed_residual": r.printed_residual}
                        for r in roots],
        "constants": consts.to_dict(),
    }
    write_json(out / "constants.json", payload)
    return EXIT_OK


def cmd_residual_scaling(cfg: RunConfig, out: Path) -> int:
    c, pp = cfg.coupling(), cfg.potential()
    ks = cfg.doc["k_list"]
    if not ks:
        raise StageError("empty k list", EXIT_CONFIG)
    t = _t_value(cfg, pp, c)
    r = cfg.doc["residual"]
    try:
        fit = residual_scaling_study(ks, t, pp, c, cfg.doc["delta"], cfg.sample_spec(), r["refine"],
                                     r["slope_threshold"])
    except ValueError as exc:
        raise StageError(str(exc), EXIT_CONFIG) from None
    stab = fit.extras.get("max_refine_change", float("nan"))
    stable = bool(stab < r["refine_tolerance"]) if isinstance(stab, float) and math.isfinite(stab) else False
    passed = bool(fit.passed and stable)
    write_csv(out / "residual_scaling.csv", cfg,
              ["k", "lambda", "norm_dstar", "norm_dstar_refined", "refine_change", "sample_size"], fit.rows)
    write_json(out / "residual_scaling.json",
               {"meta": meta(cfg), "t": t, **fit.to_dict(), "refine_stable": stable, "passed": passed})
    return EXIT_OK if passed else EXIT_QUANT


def cmd_correct(cfg: RunConfig, out: Path) -> int:
    c, pp = cfg.coupling(), cfg.potential()
    co = cfg.doc["correction"]
    ks = co["k_list"]
    if not ks:
        raise StageError("empty correction k list", EXIT_CONFIG)
    t = _t_value(cfg, pp, c)
    budget = cfg.budget(co["n_samples"])
    bbudget = cfg.budget(co["basis_samples"])
    try:
        study = first_iterate_study(ks, t, pp, c, budget, cfg.doc["delta"], co["slope_threshold"],
                                    basis_budget=bbudget)
        loop = None
        if co["max_iter"] > 1:
            loop = picard_loop(make_config(ks[0], t, pp, c, cfg.doc["delta"]), pp, co["max_iter"], budget,
                               basis_budget=cfg.budget(min(co["basis_samples"], 8192))).to_dict()
    except GramError as exc:
        raise StageError(str(exc), EXIT_SOLVER) from None
    rows = [{"k": r["k"], "lambda": r["lambda"], "norm_star": r["norms"][0],
             "half_bubble_ratio": r["half_bubble_ratio"], "half_bubble_core_ratio": r["half_bubble_core_ratio"],
             "status": r["status"], "stderr_ratio": r["stderr_ratio"], "residual_norm": r["residual_norm"]}
            for r in study["reports"]]
    write_csv(out / "correction.csv", cfg, list(rows[0].keys()), rows)
    passed = bool(study["passed"] and (loop is None or loop["status"] == "contracting"))
    write_json(out / "correction.json", {"meta": meta(cfg), "t": t, **study, "picard_loop": loop,
                                         "passed": passed})
    return EXIT_OK if passed else EXIT_QUANT


def cmd_reduce(cfg: RunConfig, out: Path) -> int:
    c, pp = cfg.coupling(), cfg.potential()
    rd = cfg.doc["reduce"]
    consts = constants_B_C(c)
    y0 = np.asarray(pp.y0_2, dtype=float)
    try:
        ts = t_star(pp, c, consts)
    except ValueError as exc:
        raise StageError(f"no t-root: {exc}", EXIT_SOLVER) from None
    t_range = tuple(rd["t_range"]) if rd["t_range"] else (0.5 * ts, 2.0 * ts)
    hw = rd["half_width"]
    box = [t_range, (pp.r0 - hw, pp.r0 + hw)] + [(v - hw, v + hw) for v in y0]
    if rd["seed"] is not None:
        if len(rd["seed"]) != c.N:
            raise StageError("reduce seed must have N entries (t, rbar, ybar'')", EXIT_CONFIG)
        seed = ReducedState.from_x(rd["seed"])
    else:
        seed = ReducedState(rd["seed_factor"] * ts, pp.r0, tuple(y0))
    state = newton_solve_reduced(seed, pp, c, rd["tol"], box, consts, rd["form"])
    payload = {"meta": meta(cfg), "t_star": ts, "box": box, "seed": seed.x, "state": state.to_dict()}
    code = EXIT_OK
    if not state.converged:
        payload["failure"] = "no critical point: " + state.message
        code = EXIT_SOLVER
    else:
        try:
            deg = reduced_degree(pp, c, state, hw, t_range, consts, rd["form"], rd["resolution"])
            fine = reduced_degree(pp, c, state, hw, t_range, consts, rd["form"], 2 * rd["resolution"])
            deg["stable_under_refinement"] = bool(deg["degree"] == fine["degree"])
            other = "split" if rd["form"] == "gradient" else "gradient"
            try:
                alt = reduced_degree(pp, c, state, hw, t_range, consts, other, rd["resolution"])
                payload["degree_" + other] = {k: alt.get(k) for k in ("degree_3d", "degree_plane",
                                                                      "degree_factorized", "agree")}
            except (DegreeError, ValueError) as exc:
                payload["degree_" + other] = {"error": str(exc)}
        except DegreeError as exc:
            payload["degree"] = {"error": str(exc)}
            code = EXIT_SOLVER
        else:
            payload["degree"] = deg
            if not deg["degree"] or not deg["agree"] or not deg["stable_under_refinement"]:
                code = EXIT_QUANT
    payload["passed"] = code == EXIT_OK
    write_json(out / "reduce.json", payload)
    return code


def cmd_pohozaev(cfg: RunConfig, out: Path) -> int:
    c, pp = cfg.coupling(), cfg.potential()
    po = cfg.doc["pohozaev"]
    budget = cfg.budget(po["n_samples"])
    N = c.N
    ctr = np.zeros(N)
    ctr[0] = 1.0
    ctr[2] = po["shift"]
    lam = po["lam"]
    if not 0 <= po["axis"] < N:
        raise StageError("pohozaev axis out of range", EXIT_CONFIG)
    rows = []
    ok = True
    for rho in po["rhos"]:
        try:
            D = TubeDomain(1.0, (0.0,) * (N - 2), rho)
        except ValueError as exc:
            raise StageError(str(exc), EXIT_CONFIG) from None
        for label, kap in (("exact", None), ("control", c.kappa + po["kappa_offset"])):
            f = bubble_pair(c, ctr, lam, kap)
            for rep in (pohozaev_translation(f, None, D, po["axis"], c, budget, ctr, lam),
                        pohozaev_dilation(f, None, D, c, budget, ctr, lam)):
                if label == "exact":
                    good = rep.sigma < po["pass_sigma"]
                else:
                    good = rep.sigma > po["control_sigma"]
                ok &= bool(good)
                rows.append({"case": label, **rep.to_dict(), "passed": bool(good)})
    ks = po["k_list"]
    conc = None
    reduced = []
    if ks and pp.family != "constant":
        t = _t_value(cfg, pp, c)
        conc = concentration_study(ks, t, pp, c, tol=po["concentration_tolerance"],
                                   budget=cfg.budget(), delta=cfg.doc["delta"])
        ok &= conc["passed"]
        st = ReducedState(t, pp.r0, tuple(pp.y0_2))
        for k in ks:
            reduced.append(reduced_equations_residual(st, pp, c, make_config(k, t, pp, c, cfg.doc["delta"]),
                                                      budget=cfg.budget()))
    cols = ["case", "identity", "rho", "volume", "boundary", "residual", "stderr", "sigma", "raw", "passed"]
    write_csv(out / "pohozaev.csv", cfg, cols, rows)
    write_json(out / "pohozaev.json", {"meta": meta(cfg), "identities": rows, "concentration": conc,
                                       "reduced_equations": reduced, "passed": bool(ok)})
    return EXIT_OK if ok else EXIT_QUANT


COMMANDS = {
    "constants": cmd_constants,
    "residual-scaling": cmd_residual_scaling,
    "correct": cmd_correct,
    "reduce": cmd_reduce,
    "pohozaev": cmd_pohozaev,
}


def cmd_full_audit(cfg: RunConfig, out: Path) -> int:
    """Configured stages in order; exit 0 only if every stage passes."""
    stages = {}
    for name in ("constants", "residual-scaling", "correct", "reduce", "pohozaev"):
        if name not in cfg.doc["stages"]:
            continue
        try:
            code = COMMANDS[name](cfg, out)
            stages[name] = {"exit": code}
        except StageError as exc:
            code = exc.code
            stages[name] = {"exit": code, "error": str(exc)}
    codes = [s["exit"] for s in stages.values()]
    final = EXIT_OK
    if EXIT_CONFIG in codes:
        final = EXIT_CONFIG
    elif EXIT_SOLVER in codes:
        final = EXIT_SOLVER
    elif EXIT_QUANT in codes:
        final = EXIT_QUANT
    write_json(out / "full_audit.json", {"meta": meta(cfg), "stages": stages, "exit": final,
                                         "passed": final == EXIT_OK})
    return final


COMMANDS["full-audit"] = cmd_full_audit


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polybubble", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg = RunConfig.load(args.config).override(args.seed, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = COMMANDS[args.command](cfg, out)
    except StageError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return exc.code
    print(f"{args.command}: exit {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
