"""Command-line driver: validate a JSON run configuration, dispatch, emit a report.

Exit codes: 0 completed, 2 completed with flagged rows or escalated caveats,
1 error.  Reports carry the SHA-256 of the canonical config, the library
version and the seed; everything except ``wall_time`` is reproducible.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from .certificates import ConditionId, Problem, certify
from .dynamics import (ClassicalPotential, ClassicalState, EvolverCfg, classical_free,
                       classical_harmonic, classical_virial_residual, evolve_quantum,
                       expectation, integrate_classical, propagation_check, repulsive_root)
from .errors import InvalidSpec
from .identities import (EigenCandidate, magnetic_virial, nsa_identities, ultimate_identity,
                         virial_electric)
from .lattice import Field, GridSpec
from .operators import (BoundarySpec, PotentialSpec, coulomb, constant, constant_field,
                        dilation_generator, gaussian, gaussian_vortex, harmonic, inverse_square,
                        schrodinger)
from .relativistic import spectral_relation_check
from .resolvent import CSV_COLUMNS as SCAN_COLUMNS
from .resolvent import scan
from .sparsekit import SolverCfg, arnoldi_shift_invert, dense_oracle, lanczos_lowest

TASKS = ["certify", "eigs", "virial", "resolvent-scan", "dirac-check", "evolve", "dynamics"]
WORKERS_ENV = "VIRIALKIT_WORKERS"


class ConfigError(InvalidSpec):
    """The configuration could not be parsed or failed validation."""

    def __init__(self, message, problems=()):
        super().__init__(message)
        self.problems = list(problems)


# -- schema -----------------------------------------------------------------------

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1, "maxItems": 3}
_params = {"type": "object", "additionalProperties": _num}


def _closed(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_builder = _closed({"name": {"enum": ["coulomb", "harmonic", "gaussian", "imaginary_gaussian",
                                      "inverse_square", "constant"]},
                    "params": _params}, ["name"])
_inline = _closed({"real": {"type": "array", "items": _num},
                   "imag": {"type": "array", "items": _num}})

SCHEMA = _closed({
    "task": {"enum": TASKS},
    "grid": _closed({"d": {"type": "integer", "minimum": 1, "maximum": 3},
                     "L": _pos,
                     "n": {"type": "integer", "minimum": 4},
                     "geometry": {"enum": ["full", "half"]}}, ["d", "L", "n"]),
    "problem": _closed({
        "potential": {"oneOf": [_builder, _inline,
                                {"type": "array", "items": _builder, "minItems": 1}]},
        "magnetic": _closed({"name": {"enum": ["constant_field", "gaussian_vortex"]},
                             "B": {"oneOf": [_num, _vec]},
                             "params": _params}, ["name"]),
        "boundary": _closed({"kind": {"enum": ["dirichlet", "robin"]}, "alpha": _num}, ["kind"]),
        "kind": {"enum": ["schrodinger", "dirac", "robin"]},
        "mass": {"type": "number", "minimum": 0},
    }),
    "solver": _closed({"tol": _pos, "maxiter": {"type": "integer", "minimum": 1},
                       "subspace": {"type": "integer", "minimum": 2},
                       "seed": {"type": "integer", "minimum": 0}}),
    "certify": _closed({"conditions": {"type": "array", "minItems": 1,
                                       "items": {"enum": [c.value for c in ConditionId]}},
                        "margin": {"type": "number", "minimum": 0, "maximum": 1}},
                       ["conditions"]),
    "eigs": _closed({"k": {"type": "integer", "minimum": 1},
                     "method": {"enum": ["auto", "dense", "lanczos", "shift-invert"]},
                     "shift": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}}),
    "virial": _closed({"identity": {"enum": ["auto", "electric", "magnetic", "ultimate"]}}),
    "resolvent": _closed({"lambdas": {"type": "array",
                                      "items": {"type": "array", "items": _num,
                                                "minItems": 2, "maxItems": 2}}},
                         ["lambdas"]),
    "dirac": _closed({"k": {"type": "integer", "minimum": 1},
                      "stencil": {"enum": ["compact", "central"]}}),
    "evolve": _closed({"dt": _pos, "steps": {"type": "integer", "minimum": 1},
                       "stride": {"type": "integer", "minimum": 1},
                       "center": _vec, "width": _pos, "momentum": _vec}, ["dt", "steps"]),
    "dynamics": _closed({"potential": _closed({"name": {"enum": ["free", "harmonic", "inverted",
                                                                 "repulsive_root"]},
                                               "params": _params}, ["name"]),
                         "x0": _vec, "p0": _vec, "m": _pos, "dt": _pos,
                         "steps": {"type": "integer", "minimum": 1}, "a": _num},
                        ["potential", "x0", "p0", "dt", "steps"]),
}, ["task"])

_SECTION = {"certify": "certify", "resolvent-scan": "resolvent", "dirac-check": "dirac",
            "evolve": "evolve", "dynamics": "dynamics"}


def _path(err) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate_config(cfg: dict) -> dict:
    """Validate a config document; all violations are reported together."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(validator.iter_errors(cfg), key=lambda e: (list(map(str, e.absolute_path)),
                                                             e.message))
    problems = [f"{_path(e)}: {e.message}" for e in errs]
    if not problems and cfg.get("task") != "dynamics" and "grid" not in cfg:
        problems.append("grid: section required for lattice tasks")
    if not problems and cfg.get("task") in _SECTION and _SECTION[cfg["task"]] not in cfg:
        problems.append(f"{_SECTION[cfg['task']]}: section required for task {cfg['task']!r}")
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems), problems)
    return cfg


def parse_config(path: str) -> dict:
    """Read and validate a JSON config file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                          [f"line {exc.lineno}, column {exc.colno}"]) from None
    return validate_config(doc)


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# -- builders ----------------------------------------------------------------------

def _grid(cfg) -> GridSpec:
    g = cfg["grid"]
    return GridSpec(g["d"], float(g["L"]), g["n"], g.get("geometry", "full"))


def _one_potential(spec) -> PotentialSpec:
    p = spec.get("params", {})
    name = spec["name"]
    if name == "coulomb":
        return coulomb(p.get("charge", 1.0))
    if name == "harmonic":
        return harmonic(p.get("coefficient", 1.0))
    if name in ("gaussian", "imaginary_gaussian"):
        return gaussian(p.get("amplitude", 1.0), p.get("width", 1.0),
                        imaginary=name == "imaginary_gaussian")
    if name == "inverse_square":
        return inverse_square(p.get("beta", 1.0))
    return constant(p.get("value", 0.0))


def _potential(problem, grid) -> Optional[PotentialSpec]:
    spec = problem.get("potential")
    if spec is None:
        return None
    if isinstance(spec, list):
        out = _one_potential(spec[0])
        for s in spec[1:]:
            out = out + _one_potential(s)
        return out
    if "name" in spec:
        return _one_potential(spec)
    parts = {}
    for key in ("real", "imag"):
        if key in spec:
            arr = np.asarray(spec[key], dtype=float)
            if arr.size != grid.size:
                raise InvalidSpec(f"problem.potential.{key}: expected {grid.size} node values, "
                                  f"got {arr.size}")
            parts[key] = arr
    return PotentialSpec(**parts)


def _magnetic(problem):
    spec = problem.get("magnetic")
    if spec is None:
        return None
    if spec["name"] == "constant_field":
        if "B" not in spec:
            raise InvalidSpec("problem.magnetic.B: required for constant_field")
        return constant_field(spec["B"])
    p = spec.get("params", {})
    return gaussian_vortex(p.get("strength", 1.0), p.get("width", 1.0))


def _boundary(problem):
    spec = problem.get("boundary")
    if spec is None:
        return None
    return BoundarySpec(spec["kind"], spec.get("alpha", 0.0))


def _solver(cfg, seed) -> SolverCfg:
    s = dict(cfg.get("solver", {}))
    if seed is not None:
        s["seed"] = seed
    return SolverCfg(**s)


def _hamiltonian(cfg, grid):
    prob = cfg.get("problem", {})
    V, A, bc = _potential(prob, grid), _magnetic(prob), _boundary(prob)
    return schrodinger(grid, magnetic=A, potential=V, bc=bc), V, A


def _f(x) -> float:
    x = float(x)
    return x if math.isfinite(x) else (None if math.isnan(x) else x)


# -- tasks -------------------------------------------------------------------------

@dataclass
class TaskResult:
    payload: dict
    rows: list
    columns: list
    escalate: bool = False
    notes: list = field(default_factory=list)


def _task_certify(cfg, grid, scfg, workers):
    prob = cfg.get("problem", {})
    problem = Problem(grid, _potential(prob, grid), _magnetic(prob), _boundary(prob),
                      prob.get("kind", "schrodinger"))
    sec = cfg["certify"]
    certs = certify(problem, sec["conditions"], sec.get("margin", 0.05), scfg, workers)
    rows = []
    for c in certs:
        d = c.to_dict()
        rows.append({"condition": d["condition"], "verdict": d["verdict"],
                     "threshold": d["threshold"],
                     "constants": ";".join(f"{k}={v!r}" for k, v in sorted(d["constants"].items())),
                     "caveats": "; ".join(d["caveats"])})
    return TaskResult({"certificates": [c.to_dict() for c in certs]}, rows,
                      ["condition", "verdict", "threshold", "constants", "caveats"])


def _eigenpairs(cfg, grid, scfg):
    H, V, A = _hamiltonian(cfg, grid)
    sec = cfg.get("eigs", {})
    k = sec.get("k", 4)
    method = sec.get("method", "auto")
    shift = complex(*sec.get("shift", [0.0, 0.0]))
    if method == "auto":
        method = "lanczos" if H.hermitian else "shift-invert"
    if method == "dense":
        res = dense_oracle(H)
        order = np.argsort(res.values.real, kind="stable")[:k]
        vals, vecs, resid, ok = res.values[order], res.vectors[:, order], res.residuals[order], True
    elif method == "lanczos":
        if not H.hermitian:
            raise InvalidSpec("eigs.method: lanczos needs a Hermitian operator")
        res = lanczos_lowest(H, k, scfg)
        vals, vecs, resid, ok = res.values, res.vectors, res.residuals, res.converged
    else:
        res = arnoldi_shift_invert(H, shift, k, scfg)
        vals, vecs, resid, ok = res.values, res.vectors, res.residuals, res.converged
    return H, V, A, vals, vecs, resid, ok


def _task_eigs(cfg, grid, scfg, workers):
    _, _, _, vals, _, resid, ok = _eigenpairs(cfg, grid, scfg)
    rows = [{"index": i, "lambda_re": _f(complex(v).real), "lambda_im": _f(complex(v).imag),
             "residual": _f(r)} for i, (v, r) in enumerate(zip(vals, resid))]
    notes = [] if ok else ["eigensolver not converged"]
    return TaskResult({"eigenpairs": rows, "converged": bool(ok)}, rows,
                      ["index", "lambda_re", "lambda_im", "residual"], not ok, notes)


def _task_virial(cfg, grid, scfg, workers):
    H, V, A, vals, vecs, _, ok = _eigenpairs(cfg, grid, scfg)
    V = V if V is not None else constant(0.0)
    which = cfg.get("virial", {}).get("identity", "auto")
    if which == "auto":
        which = "magnetic" if A is not None else ("electric" if H.hermitian else "ultimate")
    rows, reports = [], []
    for i in range(len(vals)):
        cand = EigenCandidate.from_pair(Field(grid, vecs[:, i]), complex(vals[i]), H, "solver")
        if which == "electric":
            reps = [virial_electric(V, cand)]
        elif which == "magnetic":
            reps = [magnetic_virial(A, cand, V)]
        else:
            reps = list(nsa_identities(V, cand).values()) + [ultimate_identity(V, cand)]
        for rep in reps:
            reports.append(dict(rep.to_dict(), index=i))
            lhs, rhs = complex(rep.lhs), complex(rep.rhs)
            rows.append({"index": i, "lambda_re": _f(cand.lam1), "lambda_im": _f(cand.lam2),
                         "identity": rep.identity.value, "lhs_re": _f(lhs.real),
                         "lhs_im": _f(lhs.imag), "rhs_re": _f(rhs.real), "rhs_im": _f(rhs.imag),
                         "relative_residual": _f(rep.relative_residual)})
    notes = [] if ok else ["eigensolver not converged"]
    return TaskResult({"reports": reports}, rows,
                      ["index", "lambda_re", "lambda_im", "identity", "lhs_re", "lhs_im",
                       "rhs_re", "rhs_im", "relative_residual"], not ok, notes)


def _task_scan(cfg, grid, scfg, workers):
    lams = [complex(a, b) for a, b in cfg["resolvent"]["lambdas"]]
    rep = scan(grid, lams, cfg=scfg, workers=workers)
    rows = []
    for r in rep.rows:
        d = r.to_dict()
        rows.append({k: (_f(v) if isinstance(v, float) else v) for k, v in d.items()})
    return TaskResult({"rows": rows, "summary": rep.summary()}, rows, SCAN_COLUMNS,
                      rep.any_flagged)


def _task_dirac(cfg, grid, scfg, workers):
    prob = cfg.get("problem", {})
    sec = cfg["dirac"]
    rel = spectral_relation_check(grid, _magnetic(prob), prob.get("mass", 0.0), sec.get("k"),
                                  sec.get("stencil", "compact"), scfg)
    rows = [{"index": i, "pauli_value": _f(mu), "mismatch": _f(m), "bound": _f(b)}
            for i, (mu, m, b) in enumerate(zip(rel.pauli_values, rel.mismatch, rel.bound))]
    return TaskResult(dict(rel.to_dict(), rows=rows), rows,
                      ["index", "pauli_value", "mismatch", "bound"], not rel.consistent)


def _task_evolve(cfg, grid, scfg, workers):
    H, _, _ = _hamiltonian(cfg, grid)
    sec = cfg["evolve"]
    c = np.zeros(grid.d)
    c[:len(sec.get("center", []))] = sec.get("center", [])[:grid.d]
    k = np.zeros(grid.d)
    k[:len(sec.get("momentum", []))] = sec.get("momentum", [])[:grid.d]
    w = sec.get("width", 1.0)
    x = grid.coords
    psi0 = Field(grid, np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * w ** 2) + 1j * x @ k)).normalized()
    traj = evolve_quantum(H, psi0, EvolverCfg(sec["dt"], sec["steps"], "cayley"),
                          stride=sec.get("stride", 1))
    T = dilation_generator(grid)
    q = np.sum(x ** 2, axis=1)
    rows = []
    for t, s, nrm in zip(traj.times, traj.states, traj.norms):
        rows.append({"t": _f(t), "norm": _f(nrm), "energy": _f(expectation(H, s).real),
                     "T0_expect": _f(expectation(T, s).real),
                     "x2_expect": _f(np.sum(q * np.abs(s.values) ** 2) * grid.cell_volume)})
    notes = [traj.message] if traj.aborted else []
    return TaskResult({"series": rows, "aborted": traj.aborted, "message": traj.message}, rows,
                      ["t", "norm", "energy", "T0_expect", "x2_expect"], traj.aborted, notes)


def _classical_potential(spec) -> ClassicalPotential:
    p = spec.get("params", {})
    if spec["name"] == "free":
        return classical_free()
    if spec["name"] == "harmonic":
        return classical_harmonic(p.get("k", 1.0))
    if spec["name"] == "inverted":
        return classical_harmonic(-p.get("k", 1.0))
    return repulsive_root(p.get("c", 2.0))


def _task_dynamics(cfg, grid, scfg, workers):
    sec = cfg["dynamics"]
    state = ClassicalState(sec["x0"], sec["p0"], sec.get("m", 1.0))
    log = integrate_classical(state, _classical_potential(sec["potential"]),
                              EvolverCfg(sec["dt"], sec["steps"]))
    rows = [{"t": _f(t), "x_norm": _f(np.linalg.norm(xv)), "T0": _f(T0), "energy": _f(e),
             "x_grad_V": _f(g)} for t, xv, T0, e, g in zip(log.t, log.x, log.T0, log.H,
                                                           log.x_grad_V)]
    payload = {"series": rows, "truncated": log.truncated,
               "virial_residual": _f(classical_virial_residual(log)) if len(log.t) >= 3 else None}
    if "a" in sec:
        payload["propagation"] = propagation_check(log, sec["a"]).value
    return TaskResult(payload, rows, ["t", "x_norm", "T0", "energy", "x_grad_V"], log.truncated)


_DISPATCH = {"certify": _task_certify, "eigs": _task_eigs, "virial": _task_virial,
             "resolvent-scan": _task_scan, "dirac-check": _task_dirac,
             "evolve": _task_evolve, "dynamics": _task_dynamics}


# -- reports -----------------------------------------------------------------------

@dataclass
class RunReport:
    task: str
    config_sha256: str
    version: str
    seed: int
    payload: dict
    wall_time: float
    exit_code: int = 0
    error: Optional[dict] = None
    rows: list = field(default_factory=list)
    columns: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"task": self.task, "config_sha256": self.config_sha256, "version": self.version,
               "seed": self.seed, "payload": self.payload, "wall_time": self.wall_time,
               "exit_code": self.exit_code}
        if self.error is not None:
            out["error"] = self.error
        return out


def run(cfg: dict, seed: Optional[int] = None, workers: Optional[int] = None) -> RunReport:
    """Validate ``cfg``, run its task and wrap the outcome; errors give exit code 1."""
    start = time.perf_counter()
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    task = cfg.get("task", "") if isinstance(cfg, dict) else ""
    digest = config_hash(cfg) if isinstance(cfg, dict) else ""
    used_seed = seed if seed is not None else (cfg.get("solver", {}).get("seed", 0)
                                               if isinstance(cfg, dict) else 0)
    try:
        validate_config(cfg)
        grid = _grid(cfg) if "grid" in cfg else None
        scfg = _solver(cfg, seed)
        res = _DISPATCH[task](cfg, grid, scfg, max(1, workers))
    except ConfigError as exc:
        return RunReport(task, digest, __version__, used_seed, {}, time.perf_counter() - start,
                         1, {"type": "ConfigError", "message": str(exc),
                             "problems": exc.problems})
    except Exception as exc:  # noqa: BLE001 -- reported as a structured error
        return RunReport(task, digest, __version__, used_seed, {}, time.perf_counter() - start,
                         1, {"type": type(exc).__name__, "message": str(exc)})
    payload = dict(res.payload)
    if res.notes:
        payload["notes"] = res.notes
    return RunReport(task, digest, __version__, used_seed, payload,
                     time.perf_counter() - start, 2 if res.escalate else 0, None,
                     res.rows, res.columns)


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    raise TypeError(f"not serializable: {type(o).__name__}")


def render(report: RunReport, fmt: str = "json") -> str:
    """Deterministic text for a report (JSON with sorted keys, or CSV rows)."""
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2,
                          default=_json_default) + "\n"
    if fmt != "csv":
        raise InvalidSpec(f"format must be 'json' or 'csv', got {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns)
    for row in report.rows:
        w.writerow(["" if row.get(c) is None else
                    (repr(row[c]) if isinstance(row[c], float) else row[c])
                    for c in report.columns])
    return buf.getvalue()


def emit(report: RunReport, fmt: str = "json", path: Optional[str] = None) -> None:
    text = render(report, fmt)
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="virialkit",
                                 description="Virial identities and spectral certificates "
                                             "on finite-difference grids.")
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=None, help="output file (default: stdout)")
    ap.add_argument("--format", choices=["json", "csv"], default="json")
    ap.add_argument("--seed", type=int, default=None, help="overrides solver.seed")
    ap.add_argument("--workers", type=int, default=None,
                    help=f"worker threads (default: ${WORKERS_ENV} or 1)")
    args = ap.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 1
    report = run(cfg, args.seed, args.workers)
    if report.error is not None:
        print(f"{report.error['type']}: {report.error['message']}", file=sys.stderr)
    try:
        emit(report, args.format, args.out)
    except OSError as exc:
        print(f"cannot write report: {exc}", file=sys.stderr)
        return 1
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
