"""Batch front door: load a game file, run a pipeline, write artifacts.

Commands
--------
solve      limiting branches, first-order term, finite-M certificates
sweep      convergence table over an M ladder, with fitted slopes
simulate   full / reduced / limit trajectories and cost summaries
classify   branch flags and spectra only

Exit codes: 0 success; 2 invalid input (game file, dimensions, options);
3 no branch survives the selection; 4 a solver or integrator failed.

The game file is a single JSON document with keys A1, A2, B1, B2, Q and
optional n, m, M, x0, sim {"T", "dt"}, tolerances {...}; unknown keys are
rejected so that typos fail loudly instead of being ignored.  All emitted
numbers carry 17 significant digits, and runs with identical inputs produce
byte-identical files.
"""

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .coupled_solver import closed_loop, newton_solve
from .equilibrium_analysis import best_response_gap, classify
from .errors import (
    AsymmetricCost,
    DimensionMismatch,
    LqnashError,
    NoStabilizingSolution,
    NotPositiveSemidefinite,
)
from .game_model import CouplingWeight, GameParams, extract_gains, validate_game
from .mean_field_limit import limit_dynamics
from .perturbation import epsilon_bound, first_order_term
from .simulator import evaluate_cost, simulate_full, simulate_reduced
from .spectral_riccati import (
    assemble_K0,
    enumerate_y_solutions,
    solve_classical_are,
    solve_k2,
)
from .tolerances import DEFAULT, Tolerances

__all__ = ["main", "load_game", "build_parser"]

_GAME_KEYS = {"A1", "A2", "B1", "B2", "Q", "n", "m", "M", "x0", "sim", "tolerances"}
_SIM_KEYS = {"T", "dt"}


@dataclass(frozen=True)
class RunConfig:
    command: str
    game_path: Path
    out_dir: Path
    p: GameParams
    M_list: tuple
    branch: str
    tol: Tolerances
    x0: np.ndarray | None
    sim_T: float
    sim_dt: float


# ---------------------------------------------------------------------------
# input handling
# ---------------------------------------------------------------------------

def load_game(path) -> tuple[GameParams, dict]:
    """Parse and validate a JSON game file; returns (params, extras)."""
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"game file not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("game file must hold a JSON object")
    unknown = sorted(set(doc) - _GAME_KEYS)
    if unknown:
        raise ValueError(f"unknown game-file keys: {', '.join(unknown)}")
    missing = sorted({"A1", "A2", "B1", "B2", "Q"} - set(doc))
    if missing:
        raise ValueError(f"game file missing keys: {', '.join(missing)}")
    p = validate_game(GameParams.from_matrices(
        doc["A1"], doc["A2"], doc["B1"], doc["B2"], doc["Q"]))
    for key, val in (("n", p.n), ("m", p.m)):
        if key in doc and int(doc[key]) != val:
            raise ValueError(f"game file declares {key}={doc[key]} "
                             f"but matrices imply {key}={val}")
    extras = {}
    if "M" in doc:
        Ms = doc["M"] if isinstance(doc["M"], list) else [doc["M"]]
        extras["M"] = [_check_players(v) for v in Ms]
    if "x0" in doc:
        x0 = np.asarray(doc["x0"], dtype=float)
        if x0.ndim == 1 and x0.shape != (p.n,):
            raise ValueError(f"x0 vector must have length {p.n}")
        if x0.ndim == 2 and x0.shape[1] != p.n:
            raise ValueError(f"x0 rows must have length {p.n}")
        if x0.ndim > 2:
            raise ValueError("x0 must be a vector or a matrix of row vectors")
        extras["x0"] = x0
    if "sim" in doc:
        sim = doc["sim"]
        if not isinstance(sim, dict) or set(sim) - _SIM_KEYS:
            raise ValueError(f"sim block accepts only keys {sorted(_SIM_KEYS)}")
        extras["sim"] = {k: float(v) for k, v in sim.items()}
    if "tolerances" in doc:
        if not isinstance(doc["tolerances"], dict):
            raise ValueError("tolerances block must be an object")
        extras["tolerances"] = doc["tolerances"]
    return p, extras


def _check_players(v) -> int:
    if int(v) != v or int(v) < 2:
        raise ValueError(f"M entries must be integers >= 2, got {v!r}")
    return int(v)


def _parse_m_option(text: str) -> list:
    try:
        return [_check_players(int(tok)) for tok in text.split(",") if tok]
    except ValueError:
        raise ValueError(f"--M expects a comma-separated integer list, got {text!r}")


def _parse_tol_options(items, base: dict) -> Tolerances:
    overrides = dict(base)
    for item in items or []:
        for piece in item.split(","):
            if not piece:
                continue
            name, sep, value = piece.partition("=")
            if not sep:
                raise ValueError(f"--tol expects name=value, got {piece!r}")
            overrides[name.strip()] = float(value)
    ints = {"newton_max_iter", "fh_steps"}
    overrides = {k: (int(v) if k in ints else float(v)) for k, v in overrides.items()}
    try:
        return DEFAULT.with_overrides(**overrides)
    except TypeError as exc:
        raise ValueError(str(exc))


def _load_config(args) -> RunConfig:
    p, extras = load_game(args.game)
    tol = _parse_tol_options(args.tol, extras.get("tolerances", {}))
    if args.M is not None:
        M_list = _parse_m_option(args.M)
    else:
        M_list = extras.get("M", [10])
    branch = args.branch
    if branch not in ("all", "stable"):
        try:
            int(branch)
        except ValueError:
            raise ValueError(f"--branch must be 'all', 'stable' or an index, "
                             f"got {branch!r}")
    sim = extras.get("sim", {})
    return RunConfig(command=args.command, game_path=Path(args.game),
                     out_dir=Path(args.out), p=p, M_list=tuple(M_list),
                     branch=branch, tol=tol, x0=extras.get("x0"),
                     sim_T=sim.get("T", 10.0), sim_dt=sim.get("dt", 0.01))


# ---------------------------------------------------------------------------
# serialization helpers
# ---------------------------------------------------------------------------

def _mat(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _spec(arr) -> list:
    return [[float(v.real), float(v.imag)] for v in np.sort_complex(np.asarray(arr))]


def _f(v) -> str:
    return f"{float(v):.17g}"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _game_doc(p: GameParams) -> dict:
    return {"A1": _mat(p.A1), "A2": _mat(p.A2), "B1": _mat(p.B1),
            "B2": _mat(p.B2), "Q": _mat(p.Q), "n": p.n, "m": p.m}


# ---------------------------------------------------------------------------
# shared pipeline pieces
# ---------------------------------------------------------------------------

def _select(branches, selector: str):
    """Indices into the enumerated branch list matching the selector."""
    if selector == "all":
        chosen = list(range(len(branches)))
    elif selector == "stable":
        chosen = [i for i, y in enumerate(branches) if y.stable_nash]
    else:
        idx = int(selector)
        if not 0 <= idx < len(branches):
            raise ValueError(f"branch index {idx} out of range "
                             f"(found {len(branches)} branches)")
        chosen = [idx]
    if not chosen:
        raise NoStabilizingSolution(
            f"branch selection {selector!r} matched none of the "
            f"{len(branches)} solution branches")
    return chosen


def _branch_record(idx, y, p, cls, cfg) -> dict:
    """Everything reportable about one branch; solver artifacts only when
    the branch is stabilizing (K2 needs a stable aggregate loop)."""
    rec = {
        "index": idx,
        "branch_sign": y.branch_sign,
        "stabilizing": bool(y.stabilizing),
        "stable_nash": bool(y.stable_nash),
        "Y": _mat(y.Y),
        "aggregate_spectrum": _spec(y.Ac2_spectrum),
        "mirror_spectrum": _spec(y.mirror_spectrum),
        "residual_norm": float(y.residual_norm),
        "K0": None, "Kbar1": None, "invertible": None,
        "own_spectrum": _spec(np.linalg.eigvals(p.A1 - p.B1 @ p.B1.T @ cls.K1)),
        "epsilon_estimate": None,
    }
    if not y.stabilizing:
        return rec, None, None
    K0 = assemble_K0(cls.K1, y, solve_k2(p, cls.K1, y, cfg.tol), cfg.tol)
    term = first_order_term(K0, p, cfg.tol)
    rec["K0"] = _mat(K0.full)
    rec["Kbar1"] = _mat(term.matrix)
    report = classify(p, y, K0, term=term,
                      M=cfg.M_list[0] if cfg.M_list else None,
                      x0=cfg.x0 if cfg.x0 is not None and cfg.x0.ndim == 1 else None,
                      tol=cfg.tol)
    rec["invertible"] = bool(report.invertible)
    if report.epsilon is not None:
        rec["epsilon_estimate"] = float(report.epsilon.value)
    return rec, K0, term


def _limit_stage(cfg):
    cls = solve_classical_are(cfg.p, cfg.tol)
    branches = enumerate_y_solutions(cfg.p, cfg.tol)
    if not branches:
        raise NoStabilizingSolution("no real solution branch of the aggregate "
                                    "Riccati equation exists")
    chosen = _select(branches, cfg.branch)
    records = []
    for idx in chosen:
        rec, K0, term = _branch_record(idx, branches[idx], cfg.p, cls, cfg)
        records.append((idx, branches[idx], rec, K0, term))
    return cls, branches, records


def _solved_records(records):
    out = [r for r in records if r[3] is not None]
    if not out:
        raise NoStabilizingSolution("selection contains no stabilizing branch; "
                                    "finite-M continuation needs one")
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_solve(cfg: RunConfig) -> int:
    _, _, records = _limit_stage(cfg)
    finite = []
    csv_rows = []
    for idx, _, _, K0, term in _solved_records(records):
        for M in cfg.M_list:
            c = CouplingWeight.from_players(M)
            cert = newton_solve(cfg.p, c, K_init=K0.full + c.w * term.matrix,
                                tol=cfg.tol)
            g = extract_gains(cert.K, cfg.p, c)
            loop = closed_loop(cert.K, c, cfg.p)
            finite.append({
                "branch": idx, "M": M, "w": c.w,
                "iterations": cert.iterations,
                "residual_norm": float(cert.residual_norm),
                "K": _mat(cert.K), "L1": _mat(g.L1), "L2": _mat(g.L2),
                "closed_loop_spectrum": _spec(loop.spectrum),
            })
            csv_rows.append([str(idx), str(M), _f(c.w), str(cert.iterations),
                             _f(cert.residual_norm),
                             _f(np.linalg.norm(cert.K, "fro"))])
    report = {
        "command": "solve",
        "game": _game_doc(cfg.p),
        "tolerances": asdict(cfg.tol),
        "branches": [rec for _, _, rec, _, _ in records],
        "finite_M": finite,
    }
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "report.json", report)
    _write_csv(cfg.out_dir / "solutions.csv",
               ["branch", "M", "w", "iterations", "residual", "K_frobenius"],
               csv_rows)
    for rec in report["branches"]:
        print(f"branch {rec['index']}: stabilizing={rec['stabilizing']} "
              f"stable_nash={rec['stable_nash']} "
              f"aggregate_abscissa={max(v[0] for v in rec['aggregate_spectrum']):.6g}")
    print(f"wrote {cfg.out_dir / 'report.json'}")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    if len(cfg.M_list) < 3:
        raise ValueError("sweep needs at least three M values")
    _, _, records = _limit_stage(cfg)
    x0 = cfg.x0 if cfg.x0 is not None else np.ones(cfg.p.n)
    x0_bound = x0 if x0.ndim == 1 else x0[0]
    report_sweeps = []
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for idx, _, _, K0, term in _solved_records(records):
        rows = []
        ws, d0s, d1s = [], [], []
        for M in cfg.M_list:
            c = CouplingWeight.from_players(M)
            cert = newton_solve(cfg.p, c, K_init=K0.full + c.w * term.matrix,
                                tol=cfg.tol)
            d0 = float(np.linalg.norm(cert.K - K0.full, "fro"))
            d1 = float(np.linalg.norm(cert.K - K0.full - c.w * term.matrix, "fro"))
            gap_limit = float(np.max(best_response_gap(
                cfg.p, extract_gains(K0.full, cfg.p, c), M, x0, cfg.tol).gaps))
            gap_exact = float(np.max(best_response_gap(
                cfg.p, extract_gains(cert.K, cfg.p, c), M, x0, cfg.tol).gaps))
            eps = float(epsilon_bound(term, M, x0_bound, cfg.tol).value)
            rows.append({"M": M, "w": c.w, "dK0": d0, "dK1": d1,
                         "gap_limit_gains": gap_limit,
                         "gap_exact_gains": gap_exact,
                         "epsilon_estimate": eps})
            ws.append(c.w), d0s.append(d0), d1s.append(d1)
        lw = np.log(ws)
        slope0 = float(np.polyfit(lw, np.log(np.maximum(d0s, 1e-300)), 1)[0])
        slope1 = float(np.polyfit(lw, np.log(np.maximum(d1s, 1e-300)), 1)[0])
        report_sweeps.append({"branch": idx, "rows": rows,
                              "slope_dK0": slope0, "slope_dK1": slope1})
        csv_rows = [[str(r["M"]), _f(r["w"]), _f(r["dK0"]), _f(r["dK1"]),
                     _f(r["gap_limit_gains"]), _f(r["gap_exact_gains"]),
                     _f(r["epsilon_estimate"])] for r in rows]
        csv_rows.append(["slope(|K-K0|)", _f(slope0), "", "", "", "", ""])
        csv_rows.append(["slope(|K-K0-w*Kbar1|)", _f(slope1), "", "", "", "", ""])
        _write_csv(cfg.out_dir / f"sweep_branch{idx}.csv",
                   ["M", "w", "dK0", "dK1", "gap_limit_gains",
                    "gap_exact_gains", "epsilon_estimate"], csv_rows)
    report = {
        "command": "sweep",
        "game": _game_doc(cfg.p),
        "tolerances": asdict(cfg.tol),
        "branches": [rec for _, _, rec, _, _ in records],
        "sweeps": report_sweeps,
    }
    _write_json(cfg.out_dir / "report.json", report)
    for s in report_sweeps:
        print(f"branch {s['branch']}: slope(|K-K0|)={s['slope_dK0']:.4f} "
              f"slope(|K-K0-w*Kbar1|)={s['slope_dK1']:.4f}")
    print(f"wrote {cfg.out_dir / 'report.json'}")
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.x0 is None:
        raise ValueError("simulate needs an x0 block in the game file")
    idx, _, _, K0, term = _solved_records(_limit_stage(cfg)[2])[0]
    T, dt = cfg.sim_T, cfg.sim_dt
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    runs = []
    for M in cfg.M_list:
        x0 = cfg.x0 if cfg.x0.ndim == 2 else np.tile(cfg.x0, (M, 1))
        if x0.shape[0] != M:
            raise ValueError(f"x0 has {x0.shape[0]} rows but M={M}")
        c = CouplingWeight.from_players(M)
        cert = newton_solve(cfg.p, c, K_init=K0.full + c.w * term.matrix,
                            tol=cfg.tol)
        g = extract_gains(cert.K, cfg.p, c)
        full = simulate_full(cfg.p, M, g, x0, T, dt, cfg.tol)
        red = simulate_reduced(cfg.p, cert.K, c, x0[0], x0.mean(axis=0),
                               T, dt, cfg.tol)
        resid = max(float(np.max(np.abs(full.x1 - red.x1))),
                    float(np.max(np.abs(full.z - red.z))))
        v = np.concatenate([x0[0], x0.mean(axis=0)])
        (cfg.out_dir / f"full_M{M}.csv").write_text(full.to_csv())
        (cfg.out_dir / f"reduced_M{M}.csv").write_text(red.to_csv())
        runs.append({
            "M": M, "branch": idx,
            "costs_full": [float(j) for j in evaluate_cost(full, cfg.p)],
            "cost_reduced": float(evaluate_cost(red, cfg.p)[0]),
            "cost_algebraic": float(0.5 * v @ cert.K @ v),
            "reduction_residual": resid,
            "files": [f"full_M{M}.csv", f"reduced_M{M}.csv"],
        })
        print(f"M={M}: reduction residual {resid:.3e}")
    x1_0 = cfg.x0[0] if cfg.x0.ndim == 2 else cfg.x0
    z0 = cfg.x0.mean(axis=0) if cfg.x0.ndim == 2 else cfg.x0
    lim_traj = simulate_reduced(cfg.p, K0, 0.0, x1_0, z0, T, dt, cfg.tol)
    (cfg.out_dir / "limit.csv").write_text(lim_traj.to_csv())
    lim = limit_dynamics(cfg.p, K0)
    report = {
        "command": "simulate",
        "game": _game_doc(cfg.p),
        "tolerances": asdict(cfg.tol),
        "branch": idx,
        "sim": {"T": T, "dt": dt},
        "limit_system": {"own_closed_loop": _mat(lim.own_closed_loop),
                         "coupling": _mat(lim.coupling),
                         "aggregate_drift": _mat(lim.aggregate_drift)},
        "runs": runs,
        "limit_cost": float(evaluate_cost(lim_traj, cfg.p)[0]),
    }
    _write_json(cfg.out_dir / "report.json", report)
    print(f"wrote {cfg.out_dir / 'report.json'}")
    return 0


def cmd_classify(cfg: RunConfig) -> int:
    _, _, records = _limit_stage(cfg)
    report = {
        "command": "classify",
        "game": _game_doc(cfg.p),
        "tolerances": asdict(cfg.tol),
        "branches": [rec for _, _, rec, _, _ in records],
    }
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "report.json", report)
    for rec in report["branches"]:
        print(f"branch {rec['index']}: stabilizing={rec['stabilizing']} "
              f"stable_nash={rec['stable_nash']} invertible={rec['invertible']}")
    print(f"wrote {cfg.out_dir / 'report.json'}")
    return 0


_COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep,
             "simulate": cmd_simulate, "classify": cmd_classify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lqnash",
        description="Symmetric linear-quadratic dynamic game solver: limiting "
                    "equilibria, finite-population corrections, certificates "
                    "and simulation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__)
        sp.add_argument("--game", required=True, help="JSON game file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--branch", default="stable",
                        help="all | stable | <index> (default: stable)")
        sp.add_argument("--M", default=None,
                        help="comma-separated player counts (overrides file)")
        sp.add_argument("--tol", action="append", default=None, metavar="NAME=VALUE",
                        help="tolerance overrides, repeatable or comma-separated")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        return _COMMANDS[args.command](cfg)
    except (DimensionMismatch, AsymmetricCost, NotPositiveSemidefinite,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NoStabilizingSolution as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (LqnashError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
