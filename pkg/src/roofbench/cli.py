"""Command-line front end: ``roofbench run|certify|graph|quantum``.

Exit codes: 0 success, 1 certificate failure, 2 infeasible target or no
tangency solution, 3 configuration or input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import quantum as qm
from .errors import (InfeasibleError, NoSolutionError, PolynomialParseError, RoofbenchError,
                     UnsupportedScaleError)
from .poly import Polynomial
from .roof import RoofProblem, RoofValue, roof_eval_oracle, roof_grid
from .tangency import TangencyCertificate, solve_certificate, verify_certificate
from .variety import Variety

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CERT_FAIL, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 1, 2, 3
KINDS = ("roof", "certify", "quantum")


class ConfigError(RoofbenchError):
    pass


# -- configuration ---------------------------------------------------------------


@dataclass
class SolverParams:
    seed: int
    restarts: int = 64
    m_max: int | None = None
    tol: float = 1e-6
    cert_tol: float = 1e-8
    certify: bool = False
    cert_restarts: int = 32
    workers: int = 1


@dataclass
class ProblemConfig:
    kind: str
    name: str
    solver: SolverParams
    problem: RoofProblem | None = None
    targets: list = field(default_factory=list)
    m: int | None = None
    graph_samples: int = 360
    graph_center: list | None = None
    outputs: dict = field(default_factory=dict)
    quantum: dict = field(default_factory=dict)


def _require(d, key, where):
    if key not in d:
        raise ConfigError(f"missing '{key}' in {where}")
    return d[key]


def grid_targets(grid: dict, n: int) -> list[np.ndarray]:
    """Row-major grid over ``bounds``; an optional ``region`` ball keeps only points inside it."""
    bounds = np.asarray(_require(grid, "bounds", "grid"), dtype=float)
    if bounds.shape != (n, 2):
        raise ConfigError(f"grid bounds must be {n} pairs")
    res = grid.get("resolution")
    res = [res] * n if isinstance(res, int) else res
    if res is None or len(res) != n or any(int(k) < 1 for k in res):
        raise ConfigError("grid resolution must be >= 1 in every coordinate")
    axes = [np.linspace(lo, hi, int(k)) if k > 1 else np.array([(lo + hi) / 2]) for (lo, hi), k in zip(bounds, res)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    region = grid.get("region")
    if region:
        if region.get("type", "ball") != "ball":
            raise ConfigError("only ball regions are supported")
        c = np.asarray(region.get("center", np.zeros(n)), dtype=float)
        rad = float(region.get("radius", 1.0))
        d = np.linalg.norm(pts - c, axis=1)
        keep = d < rad if region.get("open", False) else d <= rad * (1 + 1e-12)
        pts = pts[keep]
    return [p for p in pts]


def load_config(path, overrides: dict | None = None) -> ProblemConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, path.stem, overrides)


def parse_config(raw: dict, name: str = "config", overrides: dict | None = None) -> ProblemConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    kind = raw.get("kind", "roof")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    sraw = dict(raw.get("solver", {}))
    for k, v in (overrides or {}).items():
        if v is not None:
            sraw[k] = v
    if "seed" not in sraw:
        raise ConfigError("solver.seed is required (no unseeded runs)")
    try:
        solver = SolverParams(**sraw)
    except TypeError as exc:
        raise ConfigError(f"bad solver parameters: {exc}") from exc
    cfg = ProblemConfig(kind=kind, name=raw.get("name", name), solver=solver, outputs=dict(raw.get("outputs", {})))
    if kind == "quantum":
        cfg.quantum = dict(_require(raw, "quantum", "config"))
        return cfg

    vraw = _require(raw, "variety", "config")
    n = int(_require(vraw, "ambient_dim", "variety"))
    gens = _require(vraw, "generators", "variety")
    V = Variety.from_strings(gens, n, vraw.get("expected_dim"))
    f = Polynomial.parse(_require(raw, "function", "config"), n)
    cfg.problem = RoofProblem(V, f, raw.get("sense", "convex"))
    if "targets" in raw:
        cfg.targets = [np.asarray(t, dtype=float) for t in raw["targets"]]
        if any(t.shape != (n,) for t in cfg.targets):
            raise ConfigError(f"every target needs {n} coordinates")
    elif "grid" in raw:
        cfg.targets = grid_targets(raw["grid"], n)
    cfg.m = raw.get("m")
    g = raw.get("graph", {})
    cfg.graph_samples = int(g.get("samples", 360))
    cfg.graph_center = g.get("center")
    return cfg


# -- output helpers ------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "nan"
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _output_path(cfg: ProblemConfig, key: str, default: str, out_dir) -> Path:
    name = cfg.outputs.get(key, default)
    if out_dir is not None:
        return Path(out_dir) / Path(name).name
    return Path(name)


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(obj))


# -- run -----------------------------------------------------------------------------


def _run_roof(cfg: ProblemConfig, out_dir) -> int:
    s = cfg.solver
    P = cfg.problem
    values = roof_grid(P, cfg.targets, m_max=s.m_max, restarts=s.restarts, seed=s.seed, tol=s.tol,
                       workers=s.workers)
    records, rows = [], []
    code = EXIT_OK
    infeasible = False
    for idx, (t, rv) in enumerate(zip(cfg.targets, values)):
        rec = {"index": idx, **rv.to_dict()}
        certified = ""
        if not rv.feasible:
            infeasible = True
        elif s.certify and rv.m >= 1:
            try:
                cert = solve_certificate(P, t, rv.m, seed=s.seed, restarts=s.cert_restarts, tol=s.cert_tol)
                report = verify_certificate(P, t, cert, s.cert_tol)
                agree = abs(cert.value - rv.value) <= s.tol
                rec["certificate"] = cert.to_dict()
                rec["certificate_passed"] = bool(report.passed and agree)
                rec["certificate_agrees"] = bool(agree)
            except NoSolutionError as exc:
                rec["certificate"] = None
                rec["certificate_passed"] = False
                rec["certificate_error"] = str(exc)
            certified = "yes" if rec["certificate_passed"] else "no"
            if not rec["certificate_passed"]:
                code = EXIT_CERT_FAIL
        records.append(rec)
        rows.append([*t.tolist(), rv.value if rv.feasible else float("nan"), rv.m, rv.status, certified])
    n = P.n
    write_csv(_output_path(cfg, "csv", f"{cfg.name}.csv", out_dir),
              [f"x{i + 1}" for i in range(n)] + ["value", "m", "status", "certified"], rows)
    doc = {
        "name": cfg.name,
        "kind": cfg.kind,
        "sense": P.sense,
        "function": P.f.to_string(),
        "generators": [g.to_string() for g in P.variety.generators],
        "solver": vars(s),
        "results": records,
    }
    _write_json(_output_path(cfg, "json", f"{cfg.name}.json", out_dir), doc)
    if code == EXIT_OK and infeasible:
        code = EXIT_INFEASIBLE
    return code


def _run_certify(cfg: ProblemConfig, out_dir) -> int:
    s = cfg.solver
    P = cfg.problem
    if cfg.m is None:
        raise ConfigError("certify configs need 'm', the decomposition size")
    certs = []
    code = EXIT_OK
    for t in cfg.targets:
        try:
            cert = solve_certificate(P, t, int(cfg.m), seed=s.seed, restarts=s.cert_restarts, tol=s.cert_tol)
        except NoSolutionError as exc:
            certs.append({"status": "no_solution", "target": t.tolist(), "error": str(exc)})
            if code == EXIT_OK:
                code = EXIT_INFEASIBLE
            continue
        report = verify_certificate(P, t, cert, s.cert_tol)
        d = cert.to_dict()
        d["verification"] = report.to_dict()
        certs.append(d)
        if not report.passed:
            code = EXIT_CERT_FAIL
    doc = certs[0] if len(certs) == 1 else {"certificates": certs}
    _write_json(_output_path(cfg, "json", f"{cfg.name}.json", out_dir), doc)
    return code


def _run_quantum(cfg: ProblemConfig, out_dir) -> int:
    q = cfg.quantum
    task = q.get("task", "eof")
    s = cfg.solver
    dims = tuple(q.get("dims", (2, 2)))
    a = int(q.get("a", 2))
    results = []
    for item in _require(q, "states", "quantum"):
        rho = read_operator(item)
        if task == "eof":
            res = qm.entanglement_of_formation(rho, dims, a, strategy=q.get("strategy", "unitary_search"),
                                               seed=s.seed, restarts=s.restarts, s_max=q.get("s_max"))
            results.append({"value": res.value, "strategy": res.strategy, "size": res.size,
                            "ensemble": res.ensemble.to_dict()})
        elif task == "measure":
            results.append({"value": qm.f_a(qm.partial_trace(rho, dims), a)})
        else:
            raise ConfigError(f"unknown quantum task {task!r}")
    _write_json(_output_path(cfg, "json", f"{cfg.name}.json", out_dir),
                {"name": cfg.name, "kind": "quantum", "task": task, "a": a, "dims": list(dims),
                 "solver": vars(s), "results": results})
    return EXIT_OK


def run(config_path, overrides=None, out_dir=None) -> int:
    cfg = load_config(config_path, overrides)
    if cfg.kind == "quantum":
        return _run_quantum(cfg, out_dir)
    if not cfg.targets:
        raise ConfigError("config has neither 'targets' nor 'grid'")
    if cfg.kind == "certify":
        return _run_certify(cfg, out_dir)
    return _run_roof(cfg, out_dir)


def certify(config_path, certificate_path, overrides=None, out=None) -> int:
    cfg = load_config(config_path, overrides)
    if cfg.problem is None:
        raise ConfigError("certify needs a roof problem config")
    try:
        raw = json.loads(Path(certificate_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read certificate {certificate_path}: {exc}") from exc
    if raw.get("status") == "no_solution":
        return EXIT_INFEASIBLE
    try:
        cert = TangencyCertificate.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed certificate: {exc}") from exc
    if cert.sense != cfg.problem.sense:
        raise ConfigError(f"certificate is for a {cert.sense} roof, config asks for {cfg.problem.sense}")
    report = verify_certificate(cfg.problem, cert.target, cert, cfg.solver.cert_tol)
    text = dump_json(report.to_dict())
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_CERT_FAIL


# -- graph data ----------------------------------------------------------------------


def _sphere_directions(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    phi = np.pi * (3 - np.sqrt(5)) * i
    rho = np.sqrt(1 - z * z)
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def _ray_hit(V: Variety, center, u, tol=1e-9):
    """Smallest t > 0 with center + t u on V, from the univariate restriction of each generator."""
    polys = [g.compose_affine(u[:, None], center) for g in V.generators]
    lead = max(polys, key=lambda p: p.degree)
    deg = lead.degree
    coeffs = [lead.terms.get((k,), 0.0) for k in range(deg, -1, -1)]
    roots = np.roots(coeffs) if deg > 0 else np.array([])
    cands = sorted(t.real for t in roots if abs(t.imag) < 1e-9 and t.real > 1e-12)
    for t in cands:
        x = center + t * u
        if np.max(np.abs(V.residuals(x))) <= tol * max(1.0, float(np.abs(x).max())):
            return x
    return None


def emit_graph_data(problem: RoofProblem, samples: int, center=None) -> np.ndarray:
    """``(samples, n + 1)`` points of the graph of f over V by radial projection.

    Directions are evenly spaced angles (curves in the plane) or a Fibonacci
    lattice (surfaces in space); each ray from ``center`` is intersected with V.
    """
    V = problem.variety
    n = V.ambient_dim
    dim = V.expected_dim
    if samples < 1:
        raise ValueError("sample count must be positive")
    if (dim, n) == (1, 2):
        ang = 2 * np.pi * np.arange(samples) / samples
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    elif (dim, n) == (2, 3):
        dirs = _sphere_directions(samples)
    else:
        raise UnsupportedScaleError("graph sampling supports curves in R^2 and surfaces in R^3 only")
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    pts = []
    for u in dirs:
        x = _ray_hit(V, c, u)
        if x is None:
            raise UnsupportedScaleError(f"ray in direction {u.tolist()} misses the variety; is V star-shaped about the center?")
        pts.append(x)
    pts = np.array(pts)
    return np.column_stack([pts, problem.f.eval_many(pts)])


def graph(config_path, samples=None, out_dir=None) -> int:
    cfg = load_config(config_path)
    if cfg.problem is None:
        raise ConfigError("graph needs a roof problem config")
    count = int(samples if samples is not None else cfg.graph_samples)
    data = emit_graph_data(cfg.problem, count, cfg.graph_center)
    n = cfg.problem.n
    write_csv(_output_path(cfg, "graph_csv", f"{cfg.name}_graph.csv", out_dir),
              [f"x{i + 1}" for i in range(n)] + ["z"], data.tolist())
    return EXIT_OK


# -- quantum subcommands ---------------------------------------------------------------


def _complex_array(obj):
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1] != 2:
        raise ConfigError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def read_operator(obj) -> np.ndarray:
    """A density matrix from ``{"rho": rows of [re, im]}`` or a pure state from ``{"state": [[re, im], ...]}``."""
    if isinstance(obj, dict) and "rho" in obj:
        return _complex_array(obj["rho"])
    if isinstance(obj, dict) and "state" in obj:
        v = _complex_array(obj["state"])
        return np.outer(v, v.conj())
    raise ConfigError("expected an object with 'rho' or 'state'")


def read_quantum_input(path) -> dict:
    """JSON (``rho``/``state`` objects) or CSV (one matrix row per line, re,im pairs)."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    if p.suffix.lower() == ".csv":
        rows = [[float(x) for x in line.split(",")] for line in text.splitlines() if line.strip()]
        arr = np.array(rows)
        if arr.ndim != 2 or arr.shape[1] % 2:
            raise ConfigError("CSV rows must hold re,im pairs")
        mat = arr[:, 0::2] + 1j * arr[:, 1::2]
        if mat.shape[0] == 1:
            return {"state": mat[0]}
        return {"rho": mat}
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("quantum input must be a JSON object")
    out = dict(raw)
    if "rho" in raw:
        out["rho"] = _complex_array(raw["rho"])
    if "state" in raw:
        out["state"] = _complex_array(raw["state"])
    return out


def _quantum_basis(dim, basis: str, convention: str, dims=None):
    if basis == "gellmann":
        B = qm.gellmann_basis(dim)[0]
    elif basis == "tensor":
        if not dims:
            raise ConfigError("the tensor basis needs --dims M N")
        M, N = dims
        if M * N != dim:
            raise ConfigError("--dims do not multiply to the state dimension")
        B = qm.tensor_basis(qm.gellmann_basis(M)[0], qm.gellmann_basis(N)[0])
    else:
        raise ConfigError(f"unknown basis {basis!r}")
    if convention == "plain":
        B = qm.OperatorBasis(B.dim, B.elements, "plain")
    return B


def quantum_command(args) -> dict:
    data = read_quantum_input(args.input)
    if "rho" in data:
        rho = data["rho"]
    elif "state" in data:
        v = data["state"]
        rho = np.outer(v, v.conj())
    else:
        raise ConfigError("input needs 'rho' or 'state'")
    dim = rho.shape[0]
    if args.dim is not None and args.dim != dim:
        raise ConfigError(f"--dim {args.dim} does not match input dimension {dim}")
    dims = tuple(args.dims) if args.dims else tuple(data.get("dims", ())) or None
    if args.action == "embed":
        B = _quantum_basis(dim, args.basis, args.convention, dims)
        c = qm.embed(qm.check_density(rho, tol=1e-10), B)
        return {"basis": args.basis, "convention": args.convention, "dim": dim, "coefficients": c.c}
    if args.action == "purity":
        B = _quantum_basis(dim, args.basis, args.convention, dims)
        res = qm.purity_conditions(qm.embed(qm.check_density(rho, tol=1e-10), B), args.tol)
        return {"is_pure": res.is_pure, "residuals": list(res.residuals), "convention": args.convention}
    if args.action == "measure":
        if "state" in data:
            if not dims:
                raise ConfigError("measuring a state vector needs --dims M N")
            return {"a": args.a, "value": qm.measure_f_a(data["state"], args.a, dims)}
        return {"a": args.a, "value": qm.f_a(qm.check_density(rho, tol=1e-10), args.a)}
    if args.action == "eof":
        if not dims:
            raise ConfigError("entanglement of formation needs --dims M N")
        res = qm.entanglement_of_formation(rho, dims, args.a, strategy=args.strategy, seed=args.seed,
                                           restarts=args.restarts)
        return {"a": args.a, "strategy": res.strategy, "value": res.value, "size": res.size,
                "ensemble": res.ensemble.to_dict()}
    raise ConfigError(f"unknown quantum action {args.action!r}")


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roofbench", description="Convex/concave roofs of polynomials on varieties.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def overrides(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--restarts", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--out", help="output directory (run, graph) or report file (certify)")

    p = sub.add_parser("run", help="evaluate roofs or certificates from a config")
    p.add_argument("config")
    overrides(p)
    p = sub.add_parser("certify", help="verify a stored tangency certificate")
    p.add_argument("config")
    p.add_argument("certificate")
    overrides(p)
    p = sub.add_parser("graph", help="sample the graph of f over V as CSV")
    p.add_argument("config")
    p.add_argument("--samples", type=int)
    p.add_argument("--out")

    p = sub.add_parser("quantum", help="Gell-Mann embeddings, purity, measures, entanglement of formation")
    p.add_argument("action", choices=["embed", "purity", "measure", "eof"])
    p.add_argument("input", help="JSON with 'rho' or 'state' ([re, im] pairs), or CSV rows")
    p.add_argument("--dim", type=int)
    p.add_argument("--dims", type=int, nargs=2)
    p.add_argument("--basis", choices=["gellmann", "tensor"], default="gellmann")
    p.add_argument("--convention", choices=list(qm.CONVENTIONS), default="scaled")
    p.add_argument("--a", type=int, default=2)
    p.add_argument("--strategy", choices=["unitary_search", "poincare_roof"], default="unitary_search")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            ov = {"seed": args.seed, "restarts": args.restarts, "tol": args.tol}
            return run(args.config, ov, args.out)
        if args.command == "certify":
            ov = {"seed": args.seed, "restarts": args.restarts, "cert_tol": args.tol}
            return certify(args.config, args.certificate, ov, args.out)
        if args.command == "graph":
            return graph(args.config, args.samples, args.out)
        result = quantum_command(args)
        text = dump_json(result)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except PolynomialParseError as exc:
        print(f"roofbench: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, UnsupportedScaleError) as exc:
        print(f"roofbench: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"roofbench: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (RoofbenchError, ValueError) as exc:
        print(f"roofbench: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
