"""Suite presets and the runner that writes CSV / JSON / SVG outputs for them."""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import acceptance as acc
from . import adams, kolmogorov as kl, morrey, pde_energy as pe, riesz
from .acceptance import CheckResult, timed
from .config import ExperimentConfig, RunManifest
from .grid import GridField, ParabolicCylinder, SpaceTimeGrid, cylinder_mean
from .sde import checks, coefficients as sc
from .sde.flow import euler_maruyama
from .sde.polynomials import DirectionalPolynomial, polynomial_ball_bound

# trivial examples ----------------------------------------------------------------


def _res(name, ok, **metrics) -> CheckResult:
    return CheckResult(name, bool(ok), metrics)


def _small_grid(d: int = 2, n: int = 12) -> SpaceTimeGrid:
    return SpaceTimeGrid.box((0, 0.25), (-1, 1), n, n, d)


@timed
def t_cylinder_constant():
    g = _small_grid()
    C = ParabolicCylinder(0.0, (0.0, 0.0), 0.4)
    v3 = cylinder_mean(GridField.constant(g, 3.0), C, 2.0)
    v0 = cylinder_mean(GridField.constant(g, 0.0), C, 2.0)
    return _res("field-core constant and zero means", v3 == 3.0 and v0 == 0.0, const=v3, zero=v0)


@timed
def t_morrey_zero():
    g = _small_grid()
    v = morrey.morrey_capped(GridField.constant(g, 0.0), morrey.MorreyParams(2.5, rho=0.5)).value
    return _res("morrey zero field", v == 0.0, value=v)


@timed
def t_riesz_zero_and_linear():
    g = _small_grid()
    spec = riesz.KernelSpec(2.0, 4.0)
    z = riesz.potential(spec, GridField.constant(g, 0.0))
    f = GridField.from_function(g, lambda t, xs: acc.bump(t, xs, 0.1, (0, 0), 0.1, 0.6))
    lin = riesz.potential(spec, f.scaled(2.0)) - 2 * riesz.potential(spec, f)
    dev = float(np.abs(lin).max() / max(np.abs(riesz.potential(spec, f)).max(), 1e-300))
    return _res("riesz zero and linearity", not z.any() and dev < 1e-12, linearity_dev=dev)


@timed
def t_adams_zero_f():
    g = _small_grid()
    b = GridField.from_function(g, lambda t, xs: acc.bump(t, xs, 0.1, (0, 0), 0.1, 0.6))
    r = adams.adams_ratio(adams.AdamsCase(b, GridField.constant(g, 0.0), riesz.KernelSpec(1.0, 8.0)))
    return _res("adams zero f", r == 0.0, ratio=r)


@timed
def t_pde_zero_and_ibp():
    g = SpaceTimeGrid(0.0, (-2.0, -2.0), 0.0625, 0.25, 1, 16, 2)
    sol = pe.solve_backward(pe.identity_coefficients(g), np.zeros(g.spatial_shape), 0.25)
    rng = np.random.default_rng(1)
    ops = pe.Operators.build(16, 2, 0.25)
    a = np.broadcast_to(np.array([[1.0, 0.2], [0.2, 0.7]]), (16, 16, 2, 2))
    ibp = pe.ibp_defect(ops, a, rng.normal(size=(16, 16)), rng.normal(size=(16, 16)))
    return _res("pde-energy zero terminal and summation by parts", not sol.u.any() and ibp < 1e-12, ibp=ibp)


@timed
def t_sde_identity_exact():
    res = euler_maruyama(sc.identity(2), 0.0, np.zeros((1, 2)), np.array([[[0.7], [-0.2]]]), 0.5, 0.05, 32, 0)
    dev = float(np.abs(res.eta[:, 0, :, 0] - [0.7, -0.2]).max())
    return _res("sde identity eta frozen", dev == 0.0, eta_dev=dev)


@timed
def t_sde_affinity():
    c = sc.variable_sigma(2, 0.3)
    e1, e2 = np.array([1.0, 0.0]), np.array([0.3, -0.8])
    a = 0.35
    E0 = np.stack([e1, e2, a * e1 + (1 - a) * e2], -1)[None]
    r = euler_maruyama(c, 0.0, np.array([[0.2, 0.1]]), E0, 0.5, 0.01, 64, 2)
    E = r.eta[:, 0]
    dev = float(np.abs(E[..., 2] - (a * E[..., 0] + (1 - a) * E[..., 1])).max())
    return _res("sde affinity in eta", dev < 1e-12, dev=dev)


@timed
def t_bump_trivial():
    i = checks.jacobian_vs_bump(sc.identity(2), 0.0, [0.1, 0.2], [1.0, 0.0], 0.5, 0.05, 16, 1e-3)
    lin = checks.jacobian_vs_bump(sc.linear([[-1.0, 0.5], [-0.3, -0.8]]), 0.0, [0.1, 0.2], [1.0, 0.0], 0.5, 0.05,
                                  16, 1e-3)
    return _res("sde bump identity and linear", i < 1e-9 and lin < 1e-9, identity=i, linear=lin)


@timed
def t_chain_linear_f():
    r = checks.chain_rule_residual(sc.identity(2), lambda y: 2 * y[..., 0] - y[..., 1], 0.0, [0.1, 0.2],
                                   [1.0, 0.5], 0.5, 2000, 0.05)
    return _res("sde chain rule linear f", r.residual <= max(r.half_width, 1e-9) and abs(r.lhs - 1.5) < 1e-9,
                lhs=r.lhs, rhs=r.rhs, residual=r.residual)


@timed
def t_generator_zero():
    f = DirectionalPolynomial(2, (((0, 0), 0.0),))
    r = checks.generator_residual(sc.identity(2), f, 1.0, [0.5], [[0.0, 0.0]], [[0.5, 0.5]], 64, 0.05)
    return _res("sde generator zero f", float(r.residual.max()) == 0.0, residual=float(r.residual.max()))


@timed
def t_weighted_sup_zero():
    f = DirectionalPolynomial(2, (((0, 0), 0.0),))
    r = checks.weighted_sup_eta_report(sc.identity(2), f, 1, 1.0, 1.0, 0.5, 3.0, 8, 8, 0.05)
    return _res("sde weighted sup zero f", r["lhs"] == 0.0 and r["rhs_integral"] == 0.0, lhs=r["lhs"])


@timed
def t_jac_moment_h_independent():
    a = checks.derivative_weighted_moment(sc.identity(2), 3, 0.5, 8.0, 8, 4, 0.05)["value"]
    b = checks.derivative_weighted_moment(sc.identity(2), 3, 0.5, 8.0, 8, 4, 0.025)["value"]
    return _res("sde jacobian moment identity h-independent", a == b, h1=a, h2=b)


@timed
def t_moment_eta_scaling():
    r = checks.moment_sup_report(sc.identity(2), 2.0, 0.5, 0.05, 64)
    return _res("sde eta-ladder degree equals q", abs(r["m_fit"] - 2.0) < 1e-9, m_fit=r["m_fit"])


@timed
def t_poly_constant_and_scale():
    A = DirectionalPolynomial(2, (((0, 0), 1.3),))
    B = DirectionalPolynomial(2, (((1, 1), 0.4), ((0, 2), -1.0)))
    r = polynomial_ball_bound([A], [2.0])
    r1 = polynomial_ball_bound([B], [1.5])["ratio"]
    r2 = polynomial_ball_bound([B.scaled(7.0)], [1.5])["ratio"]
    ok = abs(r["ratio"] * math.pi - 1) < 1e-12 and abs(r1 - r2) / r1 < 1e-12
    return _res("polynomial constant ratio and homogeneity", ok, const_ratio=r["ratio"], scale_dev=abs(r1 - r2) / r1)


@timed
def t_kolmogorov_exact():
    lat = kl.MixedRadixLattice((2,), 5)
    lin = kl.LatticeField.from_function(lat, lambda z: z)
    const = kl.LatticeField.from_function(lat, lambda z: 0 * z + 2.0)
    n = kl.increment_condition_level(lin, 1.0).n_star
    N = kl.holder_certificate(lin, 1.0, n).N_measured
    Nc = kl.holder_certificate(const, 1.0, 0).N_measured
    at_pt = kl.continuity_extension(lin, [0.375], 5) == 0.375
    seq = kl.extension_sequence(lin, [1 / 3], 1.0, 1.0)
    conv = abs(seq["values"][-1] - 1 / 3) <= 2.0**-5
    return _res("kolmogorov exact cases", n == 0 and N == 1.0 and Nc == 0.0 and at_pt and conv,
                n_star=n, N=N, N_const=Nc)


@timed
def t_kolmogorov_deterministic_flow():
    depth, d = 4, 2
    g = np.arange(2**depth + 1) / 2**depth
    X = np.stack(np.meshgrid(g, g, indexing="ij"), -1)
    u = np.broadcast_to(X, (1, 4**depth + 1) + X.shape)
    rep = kl.flow_holder_check(kl.FlowLattice.from_array(u, d), 1 / 6, 6, 3)
    ok = max(rep["time_moment"]) == 0.0 and abs(rep["spatial_modulus"] - 1) < 1e-12
    return _res("kolmogorov deterministic ensemble", ok, spatial_modulus=rep["spatial_modulus"])


@timed
def t_config_roundtrip():
    cfg = ExperimentConfig("sde", "jac-moment", {"d": 2, "kappa": 3, "h": 0.01, "M": 100, "T": 1.0,
                                                 "lam": 0.1 + 0.2}, coeffs="identity", seed=3)
    back = ExperimentConfig.from_ini(cfg.to_ini())
    back2 = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    return _res("config round trip", back == cfg and back2 == cfg and back.hash == cfg.hash, hash=cfg.hash)


TRIVIAL = [t_cylinder_constant, t_morrey_zero, t_riesz_zero_and_linear, t_adams_zero_f, t_pde_zero_and_ibp,
           t_sde_identity_exact, t_sde_affinity, t_bump_trivial, t_chain_linear_f, t_generator_zero,
           t_weighted_sup_zero, t_jac_moment_h_independent, t_moment_eta_scaling, t_poly_constant_and_scale,
           t_kolmogorov_exact, t_kolmogorov_deterministic_flow, t_config_roundtrip]


# smoke: reduced-size derived checks ---------------------------------------------------

def _renamed(res: CheckResult, name: str) -> CheckResult:
    res.name = name
    return res


@timed
def s_riesz():
    return _renamed(acc.criterion_1(n=32, tol=0.05), "smoke riesz identities")


@timed
def s_adams():
    return _renamed(acc.criterion_2(n_base=16, size=8, tol=0.2), "smoke adams refinement")


@timed
def s_morrey():
    return _renamed(acc.criterion_3(nx=32, r_min=0.3), "smoke morrey criticality")


@timed
def s_sde():
    A = np.array([[-1.0, 0.5], [-0.3, -0.8]])
    r = euler_maruyama(sc.linear(A), 0.0, np.zeros((1, 2)), np.eye(2)[None], 1.0, 1e-2, 64, 1, track_sup=False)
    from scipy.linalg import expm

    err = float(np.linalg.norm(r.eta[:, 0].mean(0) - expm(A)) / np.linalg.norm(expm(A)))
    bs = checks.bump_slope(sc.singular(3, 0.1, 0.1), 0.0, [0.3, 0.2, -0.1], [1.0, 0.5, 0.2], 0.25, 1e-2, 32)
    ok = err <= 0.02 and all(0.8 <= s <= 1.2 for s in bs["slopes"])
    return _res("smoke sde jacobian and bump slope", ok, jac_err=err, bump_slopes=bs["slopes"])


@timed
def s_chain():
    r = checks.chain_rule_residual(sc.singular(3, 0.1, 0.1), lambda y: np.sin(y[..., 0]) + y[..., 1] * y[..., 2],
                                   0.0, [0.3, 0.2, -0.1], [1.0, 0.5, 0.2], 0.25, 10_000, 1e-2)
    return _res("smoke chain rule", r.residual <= 3 * r.half_width, **r.as_dict())


@timed
def s_jac_moment():
    ident = checks.derivative_weighted_moment(sc.identity(2), 3, 0.5, 12.0, 32, 4, 0.05)
    exact = checks.identity_jacobian_value(2, 3)
    err = abs(ident["value"] - exact) / exact
    return _res("smoke jacobian moment identity", err <= 0.02, value=ident["value"], exact=exact, rel_error=err)


@timed
def s_poly():
    d = polynomial_ball_bound([DirectionalPolynomial(2, (((1, 0), 1.0),))], [2.0])
    err = abs(d["ratio"] * math.pi / 4 - 1)
    return _res("smoke disk moment ratio", err <= 0.01, ratio=d["ratio"], rel_error=err)


@timed
def s_kolmogorov():
    fl = kl.FlowLattice.simulate(sc.identity(2), 4, 16, 0)
    rep = kl.flow_holder_check(fl, 1 / 6, 6, 3)
    ok = abs(rep["spatial_exponent"] - 1) < 1e-12 and abs(rep["spatial_modulus"] - 1) < 1e-12
    return _res("smoke brownian flow lattice", ok, exponent=rep["spatial_exponent"], p_fail=rep["p_fail"])


@timed
def s_energy_heat():
    g = SpaceTimeGrid(0.0, (-8.0, -8.0), 0.25, 0.5, 1, 32, 2)
    sol = pe.solve_backward(pe.identity_coefficients(g), np.exp(-g.radius() ** 2 / 2), 1.0, dt=g.dx**2 / 4)
    r = {n: pe.energy_report(sol, n, 0.0, 1.0, 1.0).ratio_terminal for n in (1, 4)}
    return _res("smoke heat energy ratio", max(r.values()) <= 1.02, n1=r[1], n4=r[4])


SMOKE = [s_riesz, s_adams, s_morrey, s_sde, s_chain, s_jac_moment, s_poly, s_kolmogorov, s_energy_heat]


# singular drift bundle ---------------------------------------------------------

@timed
def p_morrey_profile():
    return _renamed(acc.criterion_3(nx=48, r_min=0.2), "singular drift morrey profile")


@timed
def p_mollification_pair():
    """``b_hat`` of the mollified drift at ``eps`` and ``eps / 2``."""
    rows = []
    for nx in (16, 32):
        g = SpaceTimeGrid(0.0, (-2.0,) * 3, (4.0 / nx) ** 2, 4.0 / nx, 1, nx, 3)
        eps = 2 * g.dx
        for e in (eps, eps / 2):
            from . import profiles

            bf = GridField(g, profiles.singular_drift(g.space_points(), 1.0, e)[None], 3)
            rows.append({"nx": nx, "eps_mol": e, "b_hat": acc._b_hat(bf)})
    return _res("singular drift mollification pairs", all(math.isfinite(r["b_hat"]) for r in rows), rows=rows)


@timed
def p_energy():
    s = acc.singular_energy_study(grids=(32, 48))
    N = [r["N_min"] for r in s["rows"]]
    return _res("singular drift energy minimal N", all(math.isfinite(v) for v in N), **s)


@timed
def p_sde():
    co = sc.singular(3, 0.1, 0.1)
    bs = checks.bump_slope(co, 0.0, [0.3, 0.2, -0.1], [1.0, 0.5, 0.2], 0.25, 1e-2, 64)
    jm = checks.derivative_weighted_moment(co, 3, 0.25, 4.0, 8, 64, 0.05)
    return _res("singular drift flow checks", all(0.8 <= s <= 1.2 for s in bs["slopes"]),
                bump=bs, jacobian_moment=jm["value"], half_width=jm["half_width"])


SINGULAR = [p_morrey_profile, p_mollification_pair, p_energy, p_sde]

ACCEPTANCE = [acc.CRITERIA[i] for i in range(1, 10)]

PRESETS = {"trivial": TRIVIAL, "smoke": SMOKE, "paper-singular-drift": SINGULAR, "acceptance": ACCEPTANCE}


# runner ------------------------------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    directory: Path
    results: list
    config_hash: str

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def summary(self) -> str:
        lines = [r.line() for r in self.results]
        lines.append(f"suite {self.name}: {'PASS' if self.passed else 'FAIL'} "
                     f"({sum(r.passed for r in self.results)}/{len(self.results)})")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_rows(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("PARFLOW_THREADS", "1")))
    except ValueError:
        return 1


def _call(fn):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn()


def run_checks(fns) -> list:
    workers = min(max_workers(), len(fns))
    if workers <= 1:
        return [_call(fn) for fn in fns]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(_call, fns))


def emit(name: str, results: list, out_dir, config: ExperimentConfig, plots: bool = True,
         manifest: RunManifest | None = None) -> SuiteResult:
    """Write ``results.csv``, ``summary.csv``, ``report.json`` (+ SVGs) for a list of results."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = manifest or RunManifest(config.hash)
    files = [write_rows(out / "results.csv", ("check", "key", "value"), [row for r in results for row in r.rows()]),
             write_rows(out / "summary.csv", ("check", "passed"), [(r.name, r.passed) for r in results])]
    if plots:
        from .plots import line_plot

        for k, r in enumerate(results):
            if r.series:
                files.append(line_plot(out / f"plot_{k:02d}.svg", r.series, "x", "y", r.name))
    report = {"suite": name, "config_hash": config.hash, "config": config.to_dict(), "passed": all(
        r.passed for r in results), "checks": [{"name": r.name, "passed": r.passed, "metrics": r.metrics,
                                               "tolerances": r.tolerances, "seconds": r.seconds} for r in results]}
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    files.append(out / "report.json")
    manifest.outputs = sorted(str(p.relative_to(out)) for p in files)
    manifest.finish("pass" if report["passed"] else "fail")
    manifest.write(out)
    return SuiteResult(name, out, results, config.hash)


def run_suite(name: str, out_dir, plots: bool = True) -> SuiteResult:
    if name not in PRESETS:
        raise KeyError(f"unknown suite preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    config = ExperimentConfig("suite", name, output_dir=str(out_dir))
    manifest = RunManifest(config.hash)
    t0 = time.perf_counter()
    results = run_checks(PRESETS[name])
    manifest.inputs = {"elapsed_seconds": time.perf_counter() - t0}
    return emit(name, results, out_dir, config, plots, manifest)
