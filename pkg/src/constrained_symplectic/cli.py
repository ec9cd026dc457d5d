"""Command-line front end: ``simulate`` and ``check`` driven by key-value config files.

Config format: one ``key = value`` per line, ``#`` starts a comment, values
are single tokens or whitespace-separated numbers. Unknown keys are errors.
"""

import argparse
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import diagnostics as diag
from . import liegroup as lg
from . import models
from .discretization import ThetaMethod, check_discretization_axioms
from .errors import ConfigError, IntegratorError, NonConvergence, ParseError, ValidationError
from .mechanics import project_initial_condition
from .numerics import NewtonConfig
from .stepper import METHOD_NAMES, METHOD_THETAS, integrate, method_order, parse_method

HOLONOMIC_MODELS = ("pendulum", "spherical_pendulum", "double_pendulum_constrained", "custom")
MODELS = HOLONOMIC_MODELS + ("rigid_body_constrained", "rigid_body_liegroup")
LIE_METHODS = ("lie_hamiltonian", "lie_constrained")
CHECK_KINDS = ("axioms", "symplectic", "convergence", "conservation")

# thresholds used by ``check``
SYMPLECTIC_THRESHOLD = 1e-5
ORDER_WINDOW = 0.1
ENERGY_SLOPE_THRESHOLD = 1e-8
ORTHOGONALITY_THRESHOLD = 1e-10
MOMENTUM_THRESHOLD = 1e-9

_KEYS = {
    "model", "method", "h", "steps", "tolerance", "max_iterations", "initial_state",
    "project_initial", "output", "retraction", "gravity", "mass", "inertia", "custom_model",
    "h_list", "t_final", "fd_eps",
}
_CUSTOM_KEYS = {"mass", "stiffness", "linear", "sphere_radius"}


@dataclass
class RunConfig:
    model: str
    method: str
    h: float = 0.01
    steps: int = 100
    tolerance: float = 1e-12
    max_iterations: int = 50
    initial_state: Optional[Tuple[float, ...]] = None
    project_initial: bool = False
    output: Optional[str] = None
    retraction: str = "cayley"
    gravity: float = models.GRAVITY
    mass: Optional[Tuple[float, ...]] = None
    inertia: Tuple[float, ...] = (1.0, 2.0, 3.0)
    custom: Optional[dict] = None
    h_list: Tuple[float, ...] = (0.02, 0.01, 0.005, 0.0025)
    t_final: float = 1.0
    fd_eps: float = 1e-6

    @property
    def newton(self):
        return NewtonConfig(residual_tolerance=self.tolerance, max_iterations=self.max_iterations)


def _key_values(text, allowed):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ParseError(f"empty key or value in {raw.strip()!r}", line=lineno)
        if key not in allowed:
            raise ParseError(f"unknown key {key!r}", line=lineno)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        out[key] = (value, lineno)
    return out


def _numbers(key, value):
    try:
        vals = tuple(float(tok) for tok in value.split())
    except ValueError:
        raise ValidationError(key, f"expected numbers, got {value!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ValidationError(key, "values must be finite")
    return vals


def _scalar(key, value):
    vals = _numbers(key, value)
    if len(vals) != 1:
        raise ValidationError(key, "expected a single number (the step size is uniform)"
                              if key == "h" else "expected a single number")
    return vals[0]


def _integer(key, value):
    try:
        return int(value)
    except ValueError:
        raise ValidationError(key, f"expected an integer, got {value!r}") from None


def _flag(key, value):
    v = value.lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValidationError(key, f"expected a boolean, got {value!r}")


def _validate_method(model, method):
    if model in HOLONOMIC_MODELS:
        try:
            kind, theta = parse_method(method)
        except ValueError:
            raise ValidationError("method", f"unknown method {method!r}; valid: "
                                  + ", ".join(METHOD_NAMES)) from None
        if theta is not None and not 0.0 <= theta <= 1.0:
            raise ValidationError("method", "theta must lie in [0, 1]")
        return
    valid = ("rattle", "nullspace") if model == "rigid_body_constrained" else LIE_METHODS
    if method not in valid:
        raise ValidationError("method", f"model {model} supports methods: {', '.join(valid)}")


def parse_custom_model(text):
    """Parse the second key-value file of a custom quadratic model."""
    kv = _key_values(text, _CUSTOM_KEYS)
    if "mass" not in kv:
        raise ValidationError("mass", "custom model needs a mass matrix")
    mass = _numbers("mass", kv["mass"][0])
    m = int(round(math.sqrt(len(mass))))
    if m * m != len(mass) or m == 0:
        raise ValidationError("mass", "mass must list m*m entries in row-major order")
    model_def = {"mass": np.array(mass).reshape(m, m)}
    if "stiffness" in kv:
        K = _numbers("stiffness", kv["stiffness"][0])
        if len(K) != m * m:
            raise ValidationError("stiffness", f"expected {m * m} entries")
        model_def["stiffness"] = np.array(K).reshape(m, m)
    if "linear" in kv:
        b = _numbers("linear", kv["linear"][0])
        if len(b) != m:
            raise ValidationError("linear", f"expected {m} entries")
        model_def["linear"] = np.array(b)
    if "sphere_radius" in kv:
        r = _scalar("sphere_radius", kv["sphere_radius"][0])
        if not r > 0:
            raise ValidationError("sphere_radius", "must be positive")
        model_def["sphere_radius"] = r
    return model_def


def parse_config(text, base_dir: Optional[Path] = None) -> RunConfig:
    """Parse and validate a run configuration.

    Raises
    ------
    ParseError
        Malformed line or unknown key (carries the line number).
    ValidationError
        Well-formed but invalid value (carries the field name).
    """
    kv = _key_values(text, _KEYS)
    for key in ("model", "method"):
        if key not in kv:
            raise ValidationError(key, "missing required key")
    model = kv["model"][0]
    if model not in MODELS:
        raise ValidationError("model", f"unknown model {model!r}; valid: {', '.join(MODELS)}")
    method = kv["method"][0]
    _validate_method(model, method)
    cfg = RunConfig(model=model, method=method)
    updates = {}
    if "h" in kv:
        updates["h"] = _scalar("h", kv["h"][0])
    if "steps" in kv:
        updates["steps"] = _integer("steps", kv["steps"][0])
    if "tolerance" in kv:
        updates["tolerance"] = _scalar("tolerance", kv["tolerance"][0])
    if "max_iterations" in kv:
        updates["max_iterations"] = _integer("max_iterations", kv["max_iterations"][0])
    if "initial_state" in kv:
        updates["initial_state"] = _numbers("initial_state", kv["initial_state"][0])
    if "project_initial" in kv:
        updates["project_initial"] = _flag("project_initial", kv["project_initial"][0])
    if "output" in kv:
        updates["output"] = kv["output"][0]
    if "retraction" in kv:
        updates["retraction"] = kv["retraction"][0]
    if "gravity" in kv:
        updates["gravity"] = _scalar("gravity", kv["gravity"][0])
    if "mass" in kv:
        updates["mass"] = _numbers("mass", kv["mass"][0])
    if "inertia" in kv:
        updates["inertia"] = _numbers("inertia", kv["inertia"][0])
    if "h_list" in kv:
        updates["h_list"] = _numbers("h_list", kv["h_list"][0])
    if "t_final" in kv:
        updates["t_final"] = _scalar("t_final", kv["t_final"][0])
    if "fd_eps" in kv:
        updates["fd_eps"] = _scalar("fd_eps", kv["fd_eps"][0])
    if "custom_model" in kv:
        path = Path(kv["custom_model"][0])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            updates["custom"] = parse_custom_model(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ValidationError("custom_model", f"cannot read {path}: {exc}") from None
    cfg = replace(cfg, **updates)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig):
    if not cfg.h > 0:
        raise ValidationError("h", "must be positive")
    if cfg.steps < 0:
        raise ValidationError("steps", "must be non-negative")
    if not cfg.tolerance > 0:
        raise ValidationError("tolerance", "must be positive")
    if cfg.max_iterations < 1:
        raise ValidationError("max_iterations", "must be at least 1")
    if cfg.retraction not in ("exp", "cayley"):
        raise ValidationError("retraction", "must be 'exp' or 'cayley'")
    if len(cfg.inertia) not in (3, 9) or (len(cfg.inertia) == 3 and min(cfg.inertia) <= 0):
        raise ValidationError("inertia", "give three positive diagonal entries or nine matrix entries")
    if cfg.mass is not None and (min(cfg.mass) <= 0):
        raise ValidationError("mass", "masses must be positive")
    if not cfg.fd_eps > 0:
        raise ValidationError("fd_eps", "must be positive")
    if not cfg.t_final > 0:
        raise ValidationError("t_final", "must be positive")
    if len(cfg.h_list) < 3 or any(b >= a for a, b in zip(cfg.h_list, cfg.h_list[1:])) \
            or min(cfg.h_list) <= 0:
        raise ValidationError("h_list", "need at least three positive, strictly descending step sizes")
    if cfg.model == "custom" and cfg.custom is None:
        raise ValidationError("custom_model", "model 'custom' needs a custom_model file")
    if cfg.model != "custom" and cfg.custom is not None:
        raise ValidationError("custom_model", "only valid with model = custom")
    n = _state_length(cfg)
    if cfg.initial_state is not None and len(cfg.initial_state) != n:
        raise ValidationError("initial_state", f"model {cfg.model} with method {cfg.method} "
                              f"expects {n} numbers")


def _state_length(cfg):
    if cfg.model == "pendulum":
        return 4
    if cfg.model == "spherical_pendulum":
        return 6
    if cfg.model == "double_pendulum_constrained":
        return 8
    if cfg.model == "custom":
        return 2 * cfg.custom["mass"].shape[0]
    if cfg.model == "rigid_body_constrained":
        return 24
    return 12 if cfg.method == "lie_hamiltonian" else 18


def _inertia(cfg):
    v = np.array(cfg.inertia, dtype=float)
    return np.diag(v) if v.size == 3 else v.reshape(3, 3)


def _scalar_mass(cfg, default=1.0):
    if cfg.mass is None:
        return default
    if len(cfg.mass) != 1:
        raise ValidationError("mass", "this model takes a single mass")
    return cfg.mass[0]


def build_holonomic_model(cfg: RunConfig) -> models.Model:
    if cfg.model == "pendulum":
        return models.pendulum(g=cfg.gravity, mass=_scalar_mass(cfg))
    if cfg.model == "spherical_pendulum":
        return models.spherical_pendulum(g=cfg.gravity, mass=_scalar_mass(cfg))
    if cfg.model == "double_pendulum_constrained":
        masses = (1.0, 1.0) if cfg.mass is None else cfg.mass
        if len(masses) != 2:
            raise ValidationError("mass", "double pendulum takes two masses")
        return models.double_pendulum_constrained(g=cfg.gravity, masses=masses)
    return models.quadratic_model(**cfg.custom)


# -- simulation ----------------------------------------------------------------

@dataclass
class SimulationResult:
    header: List[str]
    rows: List[list]
    summary: dict
    error: Optional[str] = None
    failed_step: Optional[int] = None


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, result: SimulationResult):
    lines = [",".join(result.header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in result.rows)
    if result.error is not None:
        lines.append(f"# aborted at step {result.failed_step}: {result.error}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path):
    """Read a trajectory CSV back as ``(header, array)``; comment lines are skipped."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
             if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(tok) for tok in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(header))
    return header, data


def _header(nq, np_):
    return (["step", "time"] + [f"q{i + 1}" for i in range(nq)] + [f"p{i + 1}" for i in range(np_)]
            + ["phi_max", "tangency_max", "energy", "newton_iterations"])


def _initial_holonomic(cfg, md):
    if cfg.initial_state is None:
        q0, p0 = md.q0, md.p0
    else:
        s = np.array(cfg.initial_state)
        q0, p0 = s[:s.size // 2], s[s.size // 2:]
    if cfg.project_initial:
        q0, p0 = project_initial_condition(md.sys, md.cs, q0, p0, cfg.newton)
    return q0, p0


def simulate_holonomic(cfg: RunConfig) -> SimulationResult:
    md = build_holonomic_model(cfg)
    q0, p0 = _initial_holonomic(cfg, md)
    error = failed = None
    try:
        traj = integrate(cfg.method, md.sys, md.cs, q0, p0, cfg.h, cfg.steps, cfg.newton)
    except NonConvergence as exc:
        traj, error, failed = exc.trajectory, str(exc), exc.step_index
    m = q0.size
    rows = []
    viol = diag.constraint_violation_series(md.cs, traj, md.sys)
    energy = diag.energy_series(md.sys, traj)
    for i in range(len(traj.times)):
        its = int(traj.iterations[i - 1]) if i else 0
        rows.append([i, traj.times[i], *traj.q[i], *traj.p[i], viol.phi[i], viol.tangency[i],
                     energy.values[i], its])
    summary = {"max_phi": viol.max_phi, "max_tangency": viol.max_tangency,
               "energy_drift_slope": energy.drift_slope,
               "max_energy_deviation": energy.max_deviation}
    return SimulationResult(_header(m, m), rows, summary, error, failed)


def _rigid_params(cfg):
    m = _scalar_mass(cfg)
    g = cfg.gravity
    return lg.RigidBodyParams(_inertia(cfg), m, lambda R, x: m * g * x[2],
                              None, lambda R, x: np.array([0.0, 0.0, m * g]))


def _rigid_initial(cfg, params):
    if cfg.initial_state is None:
        R = lg.so3_exp([0.1, 0.2, 0.3])
        return (R, np.zeros(3), lg.rigid_body_tangent_momentum(params, R, np.array([1.0, 0.5, -0.3])),
                np.array([0.1, 0.0, 0.2]))
    s = np.array(cfg.initial_state)
    R, x, P, p = s[:9].reshape(3, 3), s[9:12], s[12:21].reshape(3, 3), s[21:24]
    if cfg.project_initial:
        U, _, Vt = np.linalg.svd(R)
        R = U @ Vt
        A = R.T @ P @ params.J_inv
        # remove the symmetric part of R^T P J^-1
        P = R @ (0.5 * (A - A.T)) @ params.J
    return R, x, P, p


def simulate_rigid(cfg: RunConfig) -> SimulationResult:
    params = _rigid_params(cfg)
    state = _rigid_initial(cfg, params)
    step = lg.rigid_body_constrained_step if cfg.method == "rattle" else lg.rigid_body_nullspace_step
    rows = []
    error = failed = None
    Pi0 = np.linalg.norm(params.body_momentum(state[0], state[2]))

    def row(i, st, its):
        R, x, P, p = st
        orth, leg = lg.rigid_body_legendre(params, R, P)
        return [i, i * cfg.h, *R.ravel(), *x, *P.ravel(), *p, float(np.max(np.abs(orth))),
                float(np.max(np.abs(leg))), params.energy(R, x, P, p), its]

    rows.append(row(0, state, 0))
    try:
        for i in range(cfg.steps):
            out = step(params, state, cfg.h, cfg.newton)
            state = (out.R1, out.x1, out.P1, out.p1)
            rows.append(row(i + 1, state, out.iterations))
    except (NonConvergence, IntegratorError) as exc:
        error, failed = str(exc), len(rows) - 1
    E = np.array([r[-2] for r in rows])
    summary = {"max_orthogonality": max(r[-4] for r in rows), "max_tangency": max(r[-3] for r in rows),
               "energy_drift_slope": diag.drift_slope(E),
               "body_momentum_drift": abs(np.linalg.norm(params.body_momentum(state[0], state[2])) - Pi0)}
    return SimulationResult(_header(12, 12), rows, summary, error, failed)


def _retraction(cfg, translational=False):
    r = lg.SO3Exp() if cfg.retraction == "exp" else lg.SO3Cayley()
    return lg.ProductRetraction(r, lg.VectorRetraction(3)) if translational else r


def simulate_lie(cfg: RunConfig) -> SimulationResult:
    J = _inertia(cfg)
    rows = []
    error = failed = None
    if cfg.method == "lie_hamiltonian":
        ops, r = lg.SO3(), _retraction(cfg)
        H = lg.free_rigid_body_hamiltonian(J)
        J_inv = np.linalg.inv(J)
        if cfg.initial_state is None:
            g, a = np.eye(3), np.array([1.0, 0.1, 0.0])
        else:
            s = np.array(cfg.initial_state)
            g, a = s[:9].reshape(3, 3), s[9:]
        pi0 = lg.spatial_momentum(ops, g, a)

        def row(i, g, a, its):
            defect = np.max(np.abs(lg.spatial_momentum(ops, g, a) - pi0))
            return [i, i * cfg.h, *g.ravel(), *a, float(np.max(np.abs(g.T @ g - np.eye(3)))),
                    float(defect), 0.5 * a @ J_inv @ a, its]

        rows.append(row(0, g, a, 0))
        header = _header(9, 3)
        header[-3] = "momentum_defect"
        try:
            for i in range(cfg.steps):
                g, a, _, _ = lg.step_lie_hamiltonian(ops, r, H, g, a, cfg.h, cfg.newton)
                rows.append(row(i + 1, g, a, 0))
        except IntegratorError as exc:
            error, failed = str(exc), len(rows) - 1
        summary = {"max_orthogonality": max(rw[-4] for rw in rows),
                   "max_momentum_defect": max(rw[-3] for rw in rows),
                   "energy_drift_slope": diag.drift_slope([rw[-2] for rw in rows])}
        return SimulationResult(header, rows, summary, error, failed)

    m = _scalar_mass(cfg)
    ops, L, gcs = lg.pinned_body_on_sphere(J, m, cfg.gravity)
    r = _retraction(cfg, translational=True)
    if cfg.initial_state is None:
        g = (np.eye(3), np.array([1.0, 0.0, 0.0]))
        a = np.array([1.0, 0.1, 0.0, 0.0, 0.5, 0.3])
    else:
        s = np.array(cfg.initial_state)
        g, a = (s[:9].reshape(3, 3), s[9:12]), s[12:]
    J_inv = np.linalg.inv(J)

    def energy(g, a):
        return 0.5 * a[:3] @ J_inv @ a[:3] + 0.5 * a[3:] @ a[3:] / m + m * cfg.gravity * g[1][2]

    def row(i, g, a):
        res = lg.group_legendre_residual(L, gcs, g, a)
        return [i, i * cfg.h, *g[0].ravel(), *g[1], *a, abs(res[0]), abs(res[1]), energy(g, a), 0]

    rows.append(row(0, g, a))
    try:
        for i in range(cfg.steps):
            g, a, *_ = lg.step_lie_constrained(ops, r, L, gcs, g, a, cfg.h, cfg.newton)
            rows.append(row(i + 1, g, a))
    except IntegratorError as exc:
        error, failed = str(exc), len(rows) - 1
    summary = {"max_phi": max(rw[-4] for rw in rows), "max_tangency": max(rw[-3] for rw in rows),
               "energy_drift_slope": diag.drift_slope([rw[-2] for rw in rows])}
    return SimulationResult(_header(12, 6), rows, summary, error, failed)


def run_simulation(cfg: RunConfig) -> SimulationResult:
    if cfg.model in HOLONOMIC_MODELS:
        return simulate_holonomic(cfg)
    if cfg.model == "rigid_body_constrained":
        return simulate_rigid(cfg)
    return simulate_lie(cfg)


def cmd_simulate(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    result = run_simulation(cfg)
    if cfg.output:
        write_csv(cfg.output, result)
    for k, v in result.summary.items():
        print(f"{k} = {v:.6e}", file=out)
    print(f"rows = {len(result.rows)}", file=out)
    if result.error is not None:
        print(f"aborted at step {result.failed_step}: {result.error}", file=out)
        return 2
    return 0


# -- checks ----------------------------------------------------------------------

def _axiom_thetas(method):
    kind, theta = parse_method(method)
    return METHOD_THETAS[kind] if theta is None else (theta,)


def check_axioms(cfg: RunConfig, out):
    md = build_holonomic_model(cfg)
    q0 = np.asarray(md.q0, dtype=float)
    rng = np.random.default_rng(0)
    samples = [(q0 + 0.1 * rng.standard_normal(q0.size), rng.standard_normal(q0.size))
               for _ in range(5)] + [(q0, np.zeros_like(q0))]
    ok = True
    for theta in _axiom_thetas(cfg.method):
        rep = check_discretization_axioms(ThetaMethod(theta), samples, cfg.h, raise_on_failure=False)
        print(f"theta = {theta:g}: zero_section_defect = {rep.zero_section_defect:.3e}, "
              f"derivative_defect = {rep.derivative_defect:.3e}, "
              f"{'pass' if rep.passed else 'fail'}", file=out)
        ok &= rep.passed
    return ok


def check_symplectic(cfg: RunConfig, out):
    md = build_holonomic_model(cfg)
    if md.charted is None:
        raise ValidationError("model", "symplecticity is only checked for models with a chart "
                              "(pendulum, spherical_pendulum)")
    q0, p0 = _initial_holonomic(cfg, md)
    z = md.charted.unchart(q0, p0)
    d = diag.symplecticity_defect(md.charted, cfg.method, z, cfg.h, cfg.fd_eps, cfg.newton)
    ok = d <= SYMPLECTIC_THRESHOLD
    print(f"symplectic_defect = {d:.3e} (threshold {SYMPLECTIC_THRESHOLD:g}) "
          f"{'pass' if ok else 'fail'}", file=out)
    return ok


def check_convergence(cfg: RunConfig, out):
    md = build_holonomic_model(cfg)
    q0, p0 = _initial_holonomic(cfg, md)
    res = diag.convergence_order(cfg.method, md, (q0, p0), cfg.h_list, cfg.t_final, cfg.newton)
    expected = method_order(cfg.method)
    ok = abs(res.slope - expected) <= ORDER_WINDOW
    for h, e in zip(res.h_list, res.errors):
        print(f"h = {h:g}: error = {e:.6e}", file=out)
    print(f"order_estimate = {res.slope:.4f} (expected {expected} +- {ORDER_WINDOW}) "
          f"{'pass' if ok else 'fail'}", file=out)
    return ok


def check_conservation(cfg: RunConfig, out):
    result = run_simulation(cfg)
    if result.error is not None:
        raise NonConvergence(result.error)
    s = result.summary
    limit = 10 * cfg.tolerance
    checks = []
    if cfg.model in HOLONOMIC_MODELS or cfg.method == "lie_constrained":
        checks += [("max_phi", s["max_phi"], limit), ("max_tangency", s["max_tangency"], limit)]
    if cfg.model == "rigid_body_constrained":
        checks += [("max_orthogonality", s["max_orthogonality"], ORTHOGONALITY_THRESHOLD)]
    if cfg.method == "lie_hamiltonian":
        checks += [("max_orthogonality", s["max_orthogonality"], 1e-12),
                   ("max_momentum_defect", s["max_momentum_defect"], MOMENTUM_THRESHOLD)]
    checks.append(("energy_drift_slope", abs(s["energy_drift_slope"]), ENERGY_SLOPE_THRESHOLD))
    ok = True
    for name, value, bound in checks:
        passed = value <= bound
        ok &= passed
        print(f"{name} = {value:.3e} (bound {bound:g}) {'pass' if passed else 'fail'}", file=out)
    return ok


def cmd_check(cfg: RunConfig, kind: str, out=None) -> int:
    out = sys.stdout if out is None else out
    if kind != "conservation" and cfg.model not in HOLONOMIC_MODELS:
        raise ValidationError("model", f"check {kind} applies to holonomic models only")
    fn = {"axioms": check_axioms, "symplectic": check_symplectic,
          "convergence": check_convergence, "conservation": check_conservation}[kind]
    try:
        ok = fn(cfg, out)
    except NonConvergence as exc:
        print(f"aborted: {exc}", file=out)
        return 2
    print("PASS" if ok else "FAIL", file=out)
    return 0 if ok else 3


def build_parser():
    parser = argparse.ArgumentParser(prog="constrained-symplectic",
                                     description="Symplectic integration of constrained mechanical systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "check"):
        p = sub.add_parser(name)
        p.add_argument("config", help="key = value configuration file")
        p.add_argument("--output", help="CSV output path (overrides the config)")
        p.add_argument("--tolerance", type=float, help="Newton residual tolerance override")
        if name == "check":
            p.add_argument("--kind", required=True, choices=CHECK_KINDS)
    return parser


def load_config(path, output=None, tolerance=None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError("config", f"cannot read {path}: {exc}") from None
    cfg = parse_config(text, base_dir=path.parent)
    if output is not None:
        cfg = replace(cfg, output=output)
    if tolerance is not None:
        cfg = replace(cfg, tolerance=tolerance)
        validate_config(cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.output, args.tolerance)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_check(cfg, args.kind)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except IntegratorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
