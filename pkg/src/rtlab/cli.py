"""Scenario-driven command-line harness.

Usage::

    rtlab <command> --scenario path.ini [--out DIR] [--threads N] [--seed S]

A scenario is an INI file with ``[model]``, ``[grid]`` and ``[run]``
sections. Comma-separated values of the sweepable keys (``chi``, ``eta``,
``kappa``, ``alpha``, ``seed``) expand into one run per combination, each in
its own subdirectory. Every run writes ``manifest.txt`` listing the inputs
hash, package versions, seed, status and a SHA-256 of every output file.

Exit codes: 0 ok, 1 numerical failure, 2 usage, 3 configuration,
4 certificate failed.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import itertools
import math
import platform
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import mpmath
import numpy as np
import scipy

from . import __version__
from .errors import CertificateFailure, ConfigError, NumericalError, ResourceError, RtlabError
from .grid import (PhaseGrid, Stepper, bump_state, convergence_rate, save_state,
                   steady_state)
from .harris import (certified_rate, foster_lyapunov_weights, log_minorisation_bound,
                     verify_drift, verify_minorisation, verify_minorisation_particles)
from .macro import parabolic_compare
from .model import chemo_profile, make_params, sign_response, tanh_response
from .nonlinear import (BumpKernel, CouplingSpec, eta_threshold, nonlinear_constants,
                        nonlinear_evolve, solve_fixed_point)
from .norms import Star, StarStar
from .particle import ParticleEnsemble, advance, empirical_rho

__all__ = ["COMMANDS", "Scenario", "parse_scenario", "run_command", "main"]

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE, EXIT_CONFIG, EXIT_CERTIFICATE = 0, 1, 2, 3, 4

COMMANDS = (
    "simulate-linear", "simulate-particles", "steady-state", "harris-constants",
    "verify-drift", "verify-minorisation", "rate-compare", "nonlinear-steady",
    "nonlinear-evolve", "macro-compare",
)
NONLINEAR = {"nonlinear-steady", "nonlinear-evolve"}

# key -> (type, default); a default of ``...`` marks a required key
_SCHEMA = {
    "model": {
        "d": (int, ...),
        "chi": (float, ...),
        "psi": (str, "sign"),
        "kappa": (float, 2.0),
        "profile": (str, "smoothed_cone"),
        "alpha": (float, 1.0),
        "C": (float, 0.0),
    },
    "grid": {
        "L": (float, 10.0),
        "nx": (int, 400),
        "nv": (int, 64),
        "dt": (float, None),
        "n_radial": (int, 8),
        "boundary": (str, "outflow"),
    },
    "run": {
        "name": (str, "scenario"),
        "output": (str, None),
        "command": (str, None),
        "T": (float, 20.0),
        "tol": (float, 1e-8),
        "record_every": (int, 10),
        "x0": (float, 2.0),
        "x1": (float, -2.0),
        "width": (float, 0.5),
        "particles": (int, 100000),
        "seed": (int, 0),
        "R_star": (float, 1.0),
        "n_random": (int, 10),
        "eta": (float, None),
        "eta_fraction": (float, 0.1),
        "kernel_c": (float, 1.0),
        "kernel_r": (float, 1.0),
        "max_iter": (int, 30),
        "epsilons": (list, [0.4, 0.2, 0.1]),
        "tau_end": (float, 1.0),
        "L_xi": (float, 8.0),
        "dxi": (float, 0.01),
        "dx_target": (float, 0.025),
        "sigma0": (float, 0.5),
        "diffusivity": (float, None),
    },
}
_SWEEPABLE = {("model", "chi"), ("model", "kappa"), ("model", "alpha"), ("run", "eta"),
              ("run", "seed")}


@dataclass
class Scenario:
    """Validated scenario: one point of a (possibly trivial) sweep."""

    name: str
    model: dict
    grid: dict
    run: dict
    output: Optional[str]
    source: str = ""
    sweep_label: str = ""
    inputs_hash: str = ""
    path: Optional[str] = None

    @property
    def seed(self) -> int:
        return int(self.run["seed"])


@dataclass
class SweepSet:
    points: list = field(default_factory=list)


def _convert(section, key, raw, typ):
    where = f"[{section}] {key}"
    try:
        if typ is list:
            vals = [float(s) for s in raw.split(",") if s.strip()]
            if not vals:
                raise ValueError
            return vals
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}") from None


def _validate(sc: Scenario, command: Optional[str]) -> None:
    m, g, r = sc.model, sc.grid, sc.run
    if m["d"] not in (1, 2):
        raise ConfigError(f"[model] d: must be 1 or 2, got {m['d']}")
    if not 0 < m["chi"] < 1:
        raise ConfigError(f"[model] chi: must lie in (0, 1), got {m['chi']}")
    if m["psi"] not in ("sign", "tanh"):
        raise ConfigError(f"[model] psi: unknown response {m['psi']!r} (sign, tanh)")
    if m["profile"] not in ("smoothed_cone", "log_yukawa_like"):
        raise ConfigError(f"[model] profile: unknown kind {m['profile']!r}")
    if m["kappa"] <= 0 or m["alpha"] <= 0:
        raise ConfigError("[model] kappa and alpha must be positive")
    if g["boundary"] not in ("outflow", "periodic"):
        raise ConfigError(f"[grid] boundary: unknown value {g['boundary']!r}")
    if g["L"] <= 0 or g["nx"] < 2 or g["nv"] < 2:
        raise ConfigError("[grid] need L > 0, nx >= 2, nv >= 2")
    if r["eta"] is not None and r["eta"] < 0:
        raise ConfigError(f"[run] eta: must be nonnegative, got {r['eta']}")
    for e in r["epsilons"]:
        if not 0 < e <= 1:
            raise ConfigError(f"[run] epsilons: {e} outside (0, 1]")
    if r["T"] <= 0 or r["tol"] <= 0 or r["particles"] < 1 or r["record_every"] < 1:
        raise ConfigError("[run] T, tol, particles and record_every must be positive")
    if r["seed"] < 0 or r["seed"] >= 2 ** 64:
        raise ConfigError("[run] seed: must be an unsigned 64-bit integer")
    cmd = command or r["command"]
    if cmd is not None and cmd not in COMMANDS:
        raise ConfigError(f"[run] command: unknown command {cmd!r}")
    if cmd in NONLINEAR and m["psi"] == "sign":
        raise ConfigError("[model] psi: the non-linear commands need a Lipschitz response; "
                          "use psi = tanh")


def parse_scenario(path, command: Optional[str] = None, overrides: Optional[dict] = None):
    """Parse and validate a scenario file.

    Returns a single :class:`Scenario` or, when sweepable keys hold lists, a
    :class:`SweepSet` of scenarios. Unknown sections or keys, missing
    required keys and out-of-range values raise :class:`ConfigError` naming
    the location.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    text = p.read_text()
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(p))
    except configparser.Error as exc:
        raise ConfigError(f"{p}: {exc}") from None
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"{p}: unknown section [{sec}]")
    raw = {s: {} for s in _SCHEMA}
    sweeps = []
    for sec, keys in _SCHEMA.items():
        given = dict(cp.items(sec)) if cp.has_section(sec) else {}
        for k in given:
            if k not in keys:
                raise ConfigError(f"{p}: unknown key {k!r} in [{sec}]")
        for k, (typ, default) in keys.items():
            if k not in given:
                if default is ...:
                    raise ConfigError(f"{p}: missing required key {k!r} in [{sec}]")
                raw[sec][k] = default
                continue
            val = given[k]
            if (sec, k) in _SWEEPABLE and "," in val:
                items = [_convert(sec, k, s, typ) for s in val.split(",") if s.strip()]
                raw[sec][k] = items[0]
                sweeps.append((sec, k, items))
            else:
                raw[sec][k] = _convert(sec, k, val, typ)
    for (sec, k), v in (overrides or {}).items():
        raw[sec][k] = v
        sweeps = [s for s in sweeps if (s[0], s[1]) != (sec, k)]
    digest = hashlib.sha256(text.encode()).hexdigest()
    base = Scenario(raw["run"]["name"], raw["model"], raw["grid"], raw["run"],
                    raw["run"]["output"], text, "", digest, str(p))
    if not sweeps:
        _validate(base, command)
        return base
    out = SweepSet()
    for combo in itertools.product(*[s[2] for s in sweeps]):
        sc = replace(base, model=dict(base.model), grid=dict(base.grid), run=dict(base.run))
        label = []
        for (sec, k, _), v in zip(sweeps, combo):
            getattr(sc, sec)[k] = v
            label.append(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}")
        sc.sweep_label = "_".join(label)
        _validate(sc, command)
        out.points.append(sc)
    return out


# ---------------------------------------------------------------------------
# building blocks

def build_params(sc: Scenario):
    m = sc.model
    psi = sign_response() if m["psi"] == "sign" else tanh_response(m["kappa"])
    kw = {"alpha": m["alpha"]}
    if m["profile"] == "smoothed_cone":
        kw["C"] = m["C"]
    chemo = chemo_profile(m["profile"], m["d"], **kw)
    return make_params(m["d"], m["chi"], psi, chemo)


def build_grid(sc: Scenario) -> PhaseGrid:
    g = sc.grid
    return PhaseGrid(sc.model["d"], g["L"], g["nx"], g["nv"], g["dt"], g["n_radial"], g["boundary"])


def _point(d, x):
    p = np.zeros(d)
    p[0] = x
    return p


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, mpmath.mpf):
        return mpmath.nstr(v, 17)
    return str(v)


class _Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.files: list = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def table(self, name: str, header, rows) -> None:
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])

    def report(self, name: str, mapping: dict) -> None:
        self.table(name, ["key", "value"], list(mapping.items()))


def _distance_traj(stepper, f, g, n, every, norm, grid):
    rows = []
    from .grid import weighted_norm
    for i in range(n + 1):
        if i % every == 0 or i == n:
            rows.append((f.time, weighted_norm(f.f - g.f, norm, grid)))
        if i == n:
            break
        f, g = stepper.step(f), stepper.step(g)
    return rows, f, g


# ---------------------------------------------------------------------------
# commands

def _cmd_simulate_linear(sc, out, threads):
    params, grid = build_params(sc), build_grid(sc)
    r = sc.run
    w = foster_lyapunov_weights(params)
    finf = steady_state(params, grid, tol=r["tol"])
    st = Stepper(params, grid)
    s = bump_state(grid, _point(grid.d, r["x0"]), r["width"])
    n = int(round(r["T"] / grid.dt))
    star, ss = Star(w, params.chemo, params.psi), StarStar(w.delta)
    from .grid import weighted_norm
    rows = []
    for i in range(n + 1):
        if i % r["record_every"] == 0 or i == n:
            rows.append((s.time, s.mass, s.outflow, weighted_norm(s.f - finf.f, star, grid),
                         weighted_norm(s.f - finf.f, ss, grid)))
        if i == n:
            break
        s = st.step(s)
    out.table("trajectory.csv", ["t", "mass", "outflow", "dist_star", "dist_starstar"], rows)
    save_state(s, out.path("final.state"))
    return {}


def _cmd_simulate_particles(sc, out, threads):
    params = build_params(sc)
    r = sc.run
    d = params.d
    x0, wdt = r["x0"], r["width"]

    def sampler(rng, m):
        x = np.zeros((m, d))
        x[:, 0] = rng.uniform(x0 - wdt, x0 + wdt, m)
        return x

    ens = ParticleEnsemble.sample(r["particles"], d, sampler, seed=r["seed"])
    n_rec = max(1, int(r["record_every"]))
    dt = r["T"] / n_rec
    rows = [(0.0, *ens.positions.mean(axis=0), float(np.mean(np.sum(ens.positions ** 2, 1))))]
    for _ in range(n_rec):
        ens = advance(ens, params, dt, workers=threads)
        rows.append((ens.time, *ens.positions.mean(axis=0),
                     float(np.mean(np.sum(ens.positions ** 2, 1)))))
    head = ["t"] + [f"mean_x{i + 1}" for i in range(d)] + ["second_moment"]
    out.table("moments.csv", head, rows)
    L, nb = sc.grid["L"], sc.grid["nx"]
    edges = np.linspace(-L, L, nb + 1)
    rho = empirical_rho(ens.positions[:, 0], L, nb)
    out.table("rho_x1.csv", ["x1", "rho"], zip(0.5 * (edges[1:] + edges[:-1]), rho))
    return {"seed": r["seed"], "particles": r["particles"]}


def _cmd_steady_state(sc, out, threads):
    params, grid = build_params(sc), build_grid(sc)
    finf, rep = steady_state(params, grid, tol=sc.run["tol"], return_report=True)
    save_state(finf, out.path("steady.state"))
    rho = finf.rho
    if grid.d == 1:
        out.table("rho.csv", ["x", "rho"], zip(grid.x1, rho))
    else:
        X, Y = np.meshgrid(grid.x1, grid.x1, indexing="ij")
        out.table("rho.csv", ["x1", "x2", "rho"], zip(X.ravel(), Y.ravel(), rho.ravel()))
    out.report("report.csv", {"iterations": rep.iterations, "residual": rep.residual,
                              "delta": rep.delta, "leak_per_time": rep.leak_per_time})
    return {}


def _constants(params):
    w = foster_lyapunov_weights(params)
    cr = certified_rate(params, w)
    rep = {
        "d": params.d, "V0": params.V0, "chi": params.chi, "k": w.k,
        "lambda_tilde": w.lambda_tilde, "m_star": w.m_star, "R": w.R,
        "beta": w.beta, "gamma": w.gamma, "xi_tail": w.xi_tail, "C1": w.C1,
        "hess_limit": w.hess_limit, "R_drift": w.R_drift, "delta": w.delta,
    }
    rep.update(cr.summary())
    rep["alphaTheory"] = mpmath.exp(cr.log_alpha)
    rep["sigma"] = mpmath.exp(cr.log_sigma)
    rep["C"] = cr.C
    return rep


def _cmd_harris_constants(sc, out, threads):
    params = build_params(sc)
    rep = _constants(params)
    out.report("constants.csv", rep)
    return {"log_sigma": rep["harris_log_sigma"]}


def _cmd_verify_drift(sc, out, threads):
    params, grid = build_params(sc), build_grid(sc)
    w = foster_lyapunov_weights(params)
    cert = verify_drift(params, w, grid, tol=sc.run["tol"])
    out.report("drift_certificate.csv", cert.summary())
    if not cert.passed:
        raise CertificateFailure(f"drift inequality violated (worst slack {cert.worst_slack:.3e})")
    return {"passed": True}


def _cmd_verify_minorisation(sc, out, threads):
    params, grid = build_params(sc), build_grid(sc)
    r = sc.run
    T, log_alpha = log_minorisation_bound(params.chi, r["R_star"], params.V0, params.d)
    alpha = math.exp(log_alpha)
    cert = verify_minorisation(params, grid, T, alpha, Rstar=r["R_star"], n_random=r["n_random"],
                               seed=r["seed"])
    out.table("minorisation_starts.csv", ["start", "min_density"], enumerate(cert.per_start))
    rep = {"T": T, "alpha_theory": alpha, "alpha_observed": cert.alpha_observed,
           "grid_passed": cert.passed}
    passed = cert.passed
    if r["particles"] > 0:
        e = _point(params.d, 1.0)
        pc = verify_minorisation_particles(params, T, alpha, r["R_star"] * e, params.V0 * e,
                                           r["particles"], r["seed"])
        rep.update({"particle_fraction": pc.alpha_observed,
                    "particle_lower_99": pc.lower_confidence, "particle_passed": pc.passed})
        passed = passed and pc.passed
    out.report("minorisation_certificate.csv", rep)
    if not passed:
        raise CertificateFailure("minorisation bound not observed")
    return {"passed": True}


def _cmd_rate_compare(sc, out, threads):
    params, grid = build_params(sc), build_grid(sc)
    r = sc.run
    w = foster_lyapunov_weights(params)
    cr = certified_rate(params, w)
    st = Stepper(params, grid)
    f = bump_state(grid, _point(grid.d, r["x0"]), r["width"])
    g = bump_state(grid, _point(grid.d, r["x1"]), r["width"])
    n = int(round(r["T"] / grid.dt))
    rows, _, _ = _distance_traj(st, f, g, n, r["record_every"], Star(w, params.chemo, params.psi),
                                grid)
    out.table("distance.csv", ["t", "dist_star"], rows)
    sigma, r2 = convergence_rate(rows)
    passed = sigma >= cr.sigma and math.log(sigma) >= cr.log_sigma
    out.report("rate_compare.csv", {"sigma_measured": sigma, "r_squared": r2,
                                    "sigma_theory": cr.sigma, "log_sigma_theory": cr.log_sigma,
                                    "passed": passed})
    if not passed:
        raise CertificateFailure("measured rate below the certified rate")
    return {"sigma_measured": sigma}


def _coupling(sc, params):
    r = sc.run
    kernel = BumpKernel(r["kernel_c"], r["kernel_r"], params.d)
    base = CouplingSpec(params.chemo, kernel, 0.0)
    th = eta_threshold(params, kernel)
    eta = r["eta"] if r["eta"] is not None else r["eta_fraction"] * th
    return base.with_eta(eta), th


def _cmd_nonlinear_steady(sc, out, threads):
    params, grid = build_params(sc), build_grid(sc)
    spec, th = _coupling(sc, params)
    Mt, finf, trace = solve_fixed_point(spec, params, grid, tol=1e-6, max_iter=sc.run["max_iter"],
                                        ss_tol=sc.run["tol"])
    out.table("fixed_point.csv", ["iteration", "residual_w1inf", "ratio"],
              [(i + 1, res, trace.ratios[i - 1] if i >= 1 else float("nan"))
               for i, res in enumerate(trace.residuals)])
    save_state(finf, out.path("nonlinear_steady.state"))
    rep = nonlinear_constants(spec, params, grid).summary()
    rep["converged"] = trace.converged
    rep["iterations"] = len(trace.residuals)
    out.report("nonlinear_constants.csv", rep)
    if not trace.converged:
        raise NumericalError("fixed-point iteration did not converge")
    return {"eta": spec.eta, "eta_threshold": th}


def _cmd_nonlinear_evolve(sc, out, threads):
    params, grid = build_params(sc), build_grid(sc)
    r = sc.run
    spec, th = _coupling(sc, params)
    Mt, finf, trace = solve_fixed_point(spec, params, grid, tol=1e-6, max_iter=r["max_iter"],
                                        ss_tol=r["tol"])
    f0 = bump_state(grid, _point(grid.d, r["x0"]), r["width"])
    recs, final = nonlinear_evolve(f0, spec, params, r["T"], finf, Mtilde=Mt,
                                   record_every=r["record_every"])
    out.table("nonlinear_trajectory.csv", ["t", "dist_starstar", "norm_starstar", "h_norm",
                                           "h_bound"],
              [(e.t, e.distance, e.norm, e.h_norm, e.h_bound) for e in recs])
    save_state(final, out.path("final.state"))
    return {"eta": spec.eta, "eta_threshold": th}


def _cmd_macro_compare(sc, out, threads):
    params = build_params(sc)
    r = sc.run
    rows = parabolic_compare(params, r["epsilons"], r["tau_end"], L_xi=r["L_xi"], dxi=r["dxi"],
                             dx_target=r["dx_target"], nv=sc.grid["nv"], sigma0=r["sigma0"],
                             D=r["diffusivity"])
    out.table("macro_compare.csv", ["epsilon", "tau", "l1_error"],
              [(row.epsilon, row.tau, row.l1_error) for row in rows])
    return {}


_HANDLERS = {
    "simulate-linear": _cmd_simulate_linear,
    "simulate-particles": _cmd_simulate_particles,
    "steady-state": _cmd_steady_state,
    "harris-constants": _cmd_harris_constants,
    "verify-drift": _cmd_verify_drift,
    "verify-minorisation": _cmd_verify_minorisation,
    "rate-compare": _cmd_rate_compare,
    "nonlinear-steady": _cmd_nonlinear_steady,
    "nonlinear-evolve": _cmd_nonlinear_evolve,
    "macro-compare": _cmd_macro_compare,
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, CertificateFailure):
        return EXIT_CERTIFICATE
    if isinstance(exc, (NumericalError, ResourceError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ConfigError, RtlabError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def run_command(cmd: str, scenario: Scenario, out_dir, threads: int = 1) -> int:
    """Run one command on one scenario; returns the exit status.

    Outputs and ``manifest.txt`` go to ``out_dir``. On failure the manifest
    records ``status: failed`` together with any partial outputs.
    """
    if cmd not in _HANDLERS:
        raise ConfigError(f"unknown command {cmd!r}")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    out = _Outputs(root)
    status, message, extra, code = "ok", "", {}, EXIT_OK
    try:
        extra = _HANDLERS[cmd](scenario, out, max(1, int(threads))) or {}
    except RtlabError as exc:
        code = _exit_code(exc)
        status = "certificate-failed" if code == EXIT_CERTIFICATE else "failed"
        message = f"{type(exc).__name__}: {exc}"
    lines = [
        f"command: {cmd}",
        f"scenario: {scenario.path}",
        f"name: {scenario.name}",
        f"sweep: {scenario.sweep_label or '-'}",
        f"inputs_sha256: {scenario.inputs_hash}",
        f"seed: {scenario.seed}",
        f"threads: {threads}",
        f"rtlab: {__version__}",
        f"python: {platform.python_version()}",
        f"numpy: {np.__version__}",
        f"scipy: {scipy.__version__}",
        f"mpmath: {mpmath.__version__}",
        f"status: {status}",
    ]
    if message:
        lines.append(f"message: {message}")
    for k, v in extra.items():
        lines.append(f"result.{k}: {_fmt(v)}")
    if status != "ok" and out.files:
        lines.append("partial: true")
    for name in out.files:
        p = root / name
        if p.exists():
            lines.append(f"output: {name} sha256={_sha256(p)}")
    (root / "manifest.txt").write_text("\n".join(lines) + "\n")
    if message:
        print(message, file=sys.stderr)
    return code


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rtlab", description="Run-and-tumble chemotaxis lab.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", required=True, help="INI scenario file")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for particle runs")
    ap.add_argument("--seed", type=int, default=None, help="override [run] seed")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    if args.threads < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    overrides = {("run", "seed"): args.seed} if args.seed is not None else None
    try:
        parsed = parse_scenario(args.scenario, args.command, overrides)
    except RtlabError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    points = parsed.points if isinstance(parsed, SweepSet) else [parsed]
    base = Path(args.out or points[0].output or Path("rtlab-out") / points[0].name)
    code = EXIT_OK
    for sc in points:
        d = base / sc.sweep_label if sc.sweep_label else base
        rc = run_command(args.command, sc, d, args.threads)
        if code == EXIT_OK:
            code = rc
    return code


if __name__ == "__main__":
    sys.exit(main())
