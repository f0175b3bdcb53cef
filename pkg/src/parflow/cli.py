"""Command line harness: ``parflow <module> [operation] [flags]``.

Exit codes: 0 when the run passes (or only computes), 1 when a check fails,
2 for an invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, RunManifest, file_checksum

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _floats(text: str | None):
    if text is None:
        return None
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


# named scalar test functions y -> f(y) for chain-rule runs
def _sin_mix(y):
    return np.sin(y[..., 0]) * np.cos(0.5 * y[..., 1]) * np.exp(-0.1 * (y[..., 2:] ** 2).sum(-1))


def _quadratic(y):
    return 0.5 * (y**2).sum(-1) + y[..., 0]


def _linear(y):
    return y.sum(-1)


TEST_FUNCTIONS = {"sin-mix": _sin_mix, "quadratic": _quadratic, "linear": _linear}


def parse_polynomial(text: str, d: int):
    """``"1.0@1,0;0.5@0,2"`` -> ``1.0 eta_1 + 0.5 eta_2^2``."""
    from .sde.polynomials import DirectionalPolynomial

    terms = []
    for part in text.split(";"):
        if not part.strip():
            continue
        coef, _, exps = part.partition("@")
        alpha = tuple(int(e) for e in exps.split(",")) if exps else (0,) * d
        terms.append((alpha, float(coef)))
    return DirectionalPolynomial(d, tuple(terms))


# argument parsing --------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="report JSON path (default: <output-dir>/report.json)")
    p.add_argument("--output-dir", default="runs")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parflow", description="Parabolic Morrey / SDE flow numerics harness")
    ap.add_argument("--version", action="version", version=f"parflow {__version__}")
    ap.add_argument("--config", help="run an INI or JSON experiment config")
    sub = ap.add_subparsers(dest="module")

    m = sub.add_parser("morrey", help="capped or homogeneous Morrey norm of a field")
    m.add_argument("--field", required=True)
    m.add_argument("--p", type=float, default=2.5)
    m.add_argument("--rho", type=float)
    m.add_argument("--beta", type=float)
    m.add_argument("--stride", type=int, default=2)
    m.add_argument("--radii-per-decade", type=int, default=8)
    _common(m)

    r = sub.add_parser("riesz", help="parabolic Riesz potentials and their identities")
    r.add_argument("operation", choices=("apply", "heat-check", "semigroup", "deriv-dom"))
    r.add_argument("--field", required=True)
    r.add_argument("--alpha", type=float, default=2.0)
    r.add_argument("--beta", type=float, default=1.0)
    r.add_argument("--k", type=float, default=4.0)
    r.add_argument("--n", type=int, default=1)
    r.add_argument("--cutoff", type=float, help="time horizon of the kernel")
    r.add_argument("--tol", type=float, default=0.05)
    r.add_argument("--out-field", help="where 'apply' writes the potential")
    _common(r)

    a = sub.add_parser("adams", help="Adams ratios over a seeded random family")
    a.add_argument("--dual", action="store_true")
    a.add_argument("--p", type=float, default=2.5)
    a.add_argument("--q", type=float, default=2.0)
    a.add_argument("--alpha", type=float, default=1.0)
    a.add_argument("--k", type=float, default=8.0)
    a.add_argument("--family-size", type=int, default=50)
    a.add_argument("--nx", type=int, default=32)
    a.add_argument("--csv", help="per-case CSV path (default: <output-dir>/adams.csv)")
    _common(a)

    e = sub.add_parser("pde-energy", help="weighted energy report for the backward equation")
    e.add_argument("--coeffs", required=True, help="'identity' or a PFLD field with d*d (+d (+d)) components")
    e.add_argument("--terminal", required=True)
    e.add_argument("--n", type=int, default=4)
    e.add_argument("--lambda", dest="lam", type=float, default=1.0)
    e.add_argument("--rho0", type=float, default=1.0)
    e.add_argument("--T", type=float, default=1.0)
    e.add_argument("--dt", type=float)
    e.add_argument("--theta", type=float, default=1.0)
    e.add_argument("--delta", type=float, default=1.0)
    _common(e)

    s = sub.add_parser("sde", help="SDE flow and its derivative process")
    s.add_argument("operation", choices=("simulate", "bump-check", "chain-rule", "generator", "weighted-sup",
                                         "jac-moment", "poly-ball"))
    s.add_argument("--coeffs", default="identity", help="identity | linear:A | singular:c,p0 | sqrt-delta:delta")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--eps", type=float, help="mollification scale for singular drifts")
    s.add_argument("--h", type=float, default=0.01)
    s.add_argument("--M", type=int, default=1000)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--x", help="comma-separated start point")
    s.add_argument("--eta", help="comma-separated direction")
    s.add_argument("--f", default="sin-mix", choices=sorted(TEST_FUNCTIONS))
    s.add_argument("--poly", default="1.0@1,0", help="directional polynomial, e.g. '1.0@1,0;0.5@0,2'")
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--rho0", type=float, default=1.0)
    s.add_argument("--kappa", type=float, default=3)
    s.add_argument("--box", type=float, default=12.0)
    s.add_argument("--nx", type=int, default=16)
    s.add_argument("--norm", default="frobenius", choices=("frobenius", "operator"))
    s.add_argument("--powers", default="2.0")
    s.add_argument("--seeds", type=int, default=0, help="poly-ball: size of the random family (0 = none)")
    s.add_argument("--samples", type=int, default=2**14)
    s.add_argument("--ensemble", help="simulate: PFLD path for the persisted ensemble")
    _common(s)

    k = sub.add_parser("kolmogorov", help="lattice Holder certificates and flow checks")
    k.add_argument("operation", choices=("certify", "extend", "flow-check"))
    k.add_argument("--values", help=".npy array of lattice values")
    k.add_argument("--example", choices=("zero", "linear", "sqrt"), help="built-in lattice field on [0, 1]")
    k.add_argument("--radix", default="2")
    k.add_argument("--lattice-depth", type=int, default=6)
    k.add_argument("--alpha", type=float, default=0.5)
    k.add_argument("--n-star", type=int)
    k.add_argument("--query", help="comma-separated point in [0, 1]^r")
    k.add_argument("--N", type=float)
    k.add_argument("--coeffs", default="identity")
    k.add_argument("--d", type=int, default=2)
    k.add_argument("--M", type=int, default=128)
    k.add_argument("--gamma", type=float, default=6.0)
    k.add_argument("--kappa", type=float, default=3.0)
    k.add_argument("--K", default="1.0")
    _common(k)

    u = sub.add_parser("suite", help="run a named preset (trivial, smoke, acceptance, paper-singular-drift)")
    u.add_argument("name")
    u.add_argument("--no-plots", action="store_true")
    _common(u)
    return ap


# config <-> arguments -------------------------------------------------------------------

_SKIP = {"module", "operation", "config", "out", "output_dir", "seed", "coeffs"}


def args_to_config(ns: argparse.Namespace) -> ExperimentConfig:
    params = {k: v for k, v in vars(ns).items() if k not in _SKIP and v is not None}
    fields = {k: params.pop(k) for k in ("field", "terminal", "values", "ensemble", "out_field", "csv")
              if k in params}
    coeffs = getattr(ns, "coeffs", None)
    op = getattr(ns, "operation", None) or ("name" in params and params["name"]) or "run"
    return ExperimentConfig(ns.module, op, params, coeffs, fields, ns.output_dir, ns.seed)


def config_to_argv(cfg: ExperimentConfig) -> list:
    argv = [cfg.module]
    if cfg.module == "suite":
        argv.append(cfg.params.get("name", cfg.operation))
    elif cfg.operation != "run":
        argv.append(cfg.operation)
    items = dict(cfg.params)
    items.pop("name", None)
    items.update(cfg.fields)
    if cfg.coeffs is not None:
        items["coeffs"] = cfg.coeffs
    for key, val in items.items():
        flag = "--" + ("lambda" if key == "lam" else key.replace("_", "-"))
        if isinstance(val, bool):
            if val:
                argv.append(flag)
            continue
        argv += [flag, str(val)]
    argv += ["--seed", str(cfg.seed), "--output-dir", cfg.output_dir]
    return argv


# operations -------------------------------------------------------------------------------

def _load_field(path):
    from .io import load_field

    if not Path(path).exists():
        raise ConfigError(f"input file does not exist: {path}")
    return load_field(path)


def _sde_coeffs(ns):
    from .sde.coefficients import preset

    return preset(ns.coeffs, ns.d, eps=ns.eps)


def _vec(text, d, default):
    v = _floats(text)
    if v is None:
        return np.asarray(default, float)
    if len(v) != d:
        raise ConfigError(f"expected {d} coordinates, got {len(v)}")
    return np.asarray(v)


def run_morrey(ns):
    from . import morrey

    f = _load_field(ns.field)
    if ns.rho is None and ns.beta is None:
        raise ConfigError("give --rho (capped norm) or --beta (homogeneous norm)")
    if ns.rho is not None:
        rep = morrey.morrey_capped(f, morrey.MorreyParams(ns.p, rho=ns.rho), stride=ns.stride,
                                   radii_per_decade=ns.radii_per_decade)
    else:
        rep = morrey.morrey_homogeneous(f, morrey.MorreyParams(ns.p, beta=ns.beta), stride=ns.stride,
                                        radii_per_decade=ns.radii_per_decade)
    return rep.as_dict(), None, {}


def run_riesz(ns):
    from . import riesz

    f = _load_field(ns.field)
    cut = riesz.Cutoffs(time_horizon=ns.cutoff) if ns.cutoff else None
    grid = {"nt": f.grid.nt, "nx": f.grid.nx, "d": f.grid.d, "dt": f.grid.dt, "dx": f.grid.dx}
    if ns.operation == "apply":
        from .io import save_field

        res = riesz.apply_potential(riesz.KernelSpec(ns.alpha, ns.k), f, cut)
        out = {"grid": grid, "cutoffs": {"time_horizon": res.time_horizon, "radius": res.truncation_radius},
               "tail_bound": res.tail_bound, "max": float(np.abs(res.field.values).max())}
        if ns.out_field:
            save_field(res.field, ns.out_field)
        return out, None, {}
    if ns.operation == "deriv-dom":
        rep = riesz.derivative_domination_report(ns.n, ns.alpha, ns.k, [f])
        return rep.as_dict(), None, {}
    if ns.operation == "heat-check":
        chk = riesz.heat_representation_residual(f, cut)
    else:
        chk = riesz.semigroup_residual(ns.alpha, ns.beta, ns.k, f, cut)
    out = {**chk.as_dict(), "grid": grid, "cutoffs": {"time_horizon": ns.cutoff}}
    return out, chk.residual <= ns.tol, {"residual": ns.tol}


def run_adams(ns):
    from . import adams, riesz
    from .grid import SpaceTimeGrid
    from .suites import write_rows

    fam = adams.adams_family(ns.seed, ns.family_size, t_range=(0.0, 0.5))
    g = SpaceTimeGrid.box((0, 0.5), (-1, 1), ns.nx, ns.nx, 2)
    cases = adams.family_cases(fam, g, riesz.KernelSpec(ns.alpha, ns.k), ns.p, ns.q)
    primal, dual = adams.family_reports(cases)
    rep = dual if ns.dual else primal
    csv_path = Path(ns.csv) if ns.csv else Path(ns.output_dir) / "adams.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_rows(csv_path, ("case_id", "ratio", "morrey_b", "lq_f"),
               [(r["case_id"], r["ratio"], r["morrey_b"], r["lq_f"]) for r in rep.rows])
    out = {k: v for k, v in rep.as_dict().items() if k != "rows"}
    out["csv"] = str(csv_path)
    return out, math.isfinite(rep.ratio), {}


def _pde_coefficients(ns, terminal):
    from . import pde_energy as pe
    from .grid import GridField

    g = terminal.grid
    if ns.coeffs == "identity":
        return pe.identity_coefficients(g)
    c = _load_field(ns.coeffs)
    d = c.grid.d
    n = c.components
    if n not in (d * d, d * d + d, d * d + 2 * d):
        raise ConfigError(f"coefficient field needs d*d, d*d+d or d*d+2d components (d = {d}), got {n}")
    part = lambda lo, hi: GridField(c.grid, c.values[..., lo:hi], hi - lo)
    a = part(0, d * d)
    afrak = part(d * d, d * d + d) if n == d * d + 2 * d else None
    b = part(n - d, n) if n > d * d else None
    if c.grid.spatial_shape != g.spatial_shape:
        raise ConfigError("coefficient and terminal fields live on different spatial grids")
    return pe.DivFormCoefficients(a, afrak, b, ns.delta)


def run_pde_energy(ns):
    from . import pde_energy as pe

    f = _load_field(ns.terminal)
    coef = _pde_coefficients(ns, f)
    sol = pe.solve_backward(coef, f.values[-1, ..., 0], ns.T, dt=ns.dt, theta=ns.theta)
    rep = pe.energy_report(sol, ns.n, ns.lam, ns.rho0, ns.T)
    return rep.as_dict(), rep.passes, {}


def run_sde(ns):
    from .sde import checks
    from .sde.polynomials import ball_bound_family, polynomial_ball_bound

    d = ns.d
    if ns.operation == "poly-ball":
        poly = parse_polynomial(ns.poly, d)
        powers = _floats(ns.powers)
        out = polynomial_ball_bound([poly] * len(powers), powers, ns.samples)
        if ns.seeds:
            out["family"] = ball_bound_family(ns.seeds, d, n_samples=ns.samples, seed=ns.seed)
        return out, math.isfinite(out["ratio"]), {}
    co = _sde_coeffs(ns)
    x = _vec(ns.x, d, np.zeros(d))
    eta = _vec(ns.eta, d, np.eye(d)[0])
    if ns.operation == "simulate":
        from .io import ensemble_to_bytes
        from .sde.flow import simulate_flow

        ens = simulate_flow(co, 0.0, x, eta, ns.T, ns.h, ns.M, ns.seed)
        path = Path(ns.ensemble) if ns.ensemble else Path(ns.output_dir) / "ensemble.pfld"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(ensemble_to_bytes(ens))
        out = {"ensemble": str(path), "sha256": file_checksum(path), "M": ens.M, "records": len(ens.times),
               "excluded": ens.n_excluded, "mean_x_final": ens.x_final.mean(0).tolist(),
               "mean_sup_dx": float(ens.sup_dx.mean())}
        return out, None, {}
    if ns.operation == "bump-check":
        out = checks.bump_slope(co, 0.0, x, eta, ns.T, ns.h, ns.M, seed=ns.seed)
        ok = all(0.8 <= s <= 1.2 for s in out["slopes"]) or max(out["deviation"]) < 1e-9
        return out, ok, {"slope_band": [0.8, 1.2]}
    if ns.operation == "chain-rule":
        r = checks.chain_rule_residual(co, TEST_FUNCTIONS[ns.f], 0.0, x, eta, ns.T, ns.M, ns.h, seed=ns.seed)
        return r.as_dict(), r.within, {"half_widths": 3}
    poly = parse_polynomial(ns.poly, d)
    if ns.operation == "generator":
        rep = checks.generator_residual(co, poly, ns.T, [0.0], [x], [eta], ns.M, ns.h, seed=ns.seed)
        return rep.as_dict(), None, {}
    if ns.operation == "weighted-sup":
        rep = checks.weighted_sup_eta_report(co, poly, ns.n, ns.lam, ns.rho0, ns.T, ns.box, ns.nx, ns.M, ns.h,
                                             seed=ns.seed)
        return rep, None, {}
    kappa = int(ns.kappa) if float(ns.kappa).is_integer() else ns.kappa
    rep = checks.derivative_weighted_moment(co, kappa, ns.T, ns.box, ns.nx, ns.M, ns.h, seed=ns.seed, norm=ns.norm)
    return rep, None, {}


def _lattice_field(ns):
    from . import kolmogorov as kl

    radix = [int(v) for v in ns.radix.split(",")]
    lat = kl.MixedRadixLattice(tuple(radix), ns.lattice_depth)
    if ns.values:
        if not Path(ns.values).exists():
            raise ConfigError(f"input file does not exist: {ns.values}")
        return kl.LatticeField(lat, np.load(ns.values))
    fn = {"zero": lambda *z: 0.0 * z[0], "linear": lambda *z: sum(z), "sqrt": lambda *z: np.sqrt(z[0])}
    return kl.LatticeField.from_function(lat, fn[ns.example or "linear"])


def run_kolmogorov(ns):
    from . import kolmogorov as kl

    if ns.operation == "flow-check":
        from .sde.coefficients import preset

        fl = kl.FlowLattice.simulate(preset(ns.coeffs, ns.d), ns.lattice_depth, ns.M, ns.seed)
        K = ns.K if ns.K == "fitted" else float(ns.K)
        rep = kl.flow_holder_check(fl, ns.alpha, ns.gamma, ns.kappa, K=K)
        return rep, None, {}
    u = _lattice_field(ns)
    inc = kl.increment_condition_level(u, ns.alpha)
    n_star = ns.n_star if ns.n_star is not None else inc.n_star
    if n_star is None:
        return {"alpha": ns.alpha, "n_star": None, "witness": inc.witness}, False, {}
    cert = kl.holder_certificate(u, ns.alpha, n_star, seed=ns.seed)
    if ns.operation == "certify":
        return cert.as_dict(), True, {}
    q = _floats(ns.query) or [0.5] * u.lattice.r
    N = ns.N if ns.N is not None else max(cert.N_measured, 1e-300)
    seq = kl.extension_sequence(u, q, N, ns.alpha, start=n_star)
    return {"certificate": cert.as_dict(), "query": q, **seq}, seq["within"], {}


def run_suite_cmd(ns):
    from .suites import run_suite

    res = run_suite(ns.name, ns.output_dir, plots=not ns.no_plots)
    print(res.summary())
    return {"suite": ns.name, "passed": res.passed, "directory": str(res.directory)}, res.passed, {}


RUNNERS = {"morrey": run_morrey, "riesz": run_riesz, "adams": run_adams, "pde-energy": run_pde_energy,
           "sde": run_sde, "kolmogorov": run_kolmogorov, "suite": run_suite_cmd}


def _write_report(ns, cfg, out, passed, tols, manifest) -> Path | None:
    from .suites import _jsonable

    if ns.module == "suite":
        return None
    path = Path(ns.out) if ns.out else Path(ns.output_dir) / "report.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    report = {"config_hash": cfg.hash, "config": cfg.to_dict(), "tolerances": tols, "passed": passed,
              "version": __version__, "result": out}
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    written = {Path(v).name for k, v in cfg.fields.items() if k in ("out_field", "csv", "ensemble")}
    written |= {Path(out[k]).name for k in ("csv", "ensemble") if isinstance(out, dict) and k in out}
    manifest.outputs = [path.name] + sorted(written)
    return path


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        if ns.config:
            cfg = ExperimentConfig.load(ns.config)
            ns = ap.parse_args(config_to_argv(cfg))
        if ns.module is None:
            ap.print_help()
            return EXIT_CONFIG
        cfg = args_to_config(ns)
        manifest = RunManifest(cfg.hash, inputs={k: file_checksum(v) for k, v in cfg.fields.items()
                                                 if k in ("field", "terminal", "values") and Path(v).exists()})
        out, passed, tols = RUNNERS[ns.module](ns)
    except (ConfigError, ValueError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"parflow: invalid configuration: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    path = _write_report(ns, cfg, out, passed, tols, manifest)
    if path is not None:
        manifest.finish("fail" if passed is False else "pass")
        manifest.write(path.parent)
        print(json.dumps({"report": str(path), "passed": passed, "config_hash": cfg.hash}))
    return EXIT_FAIL if passed is False else EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
