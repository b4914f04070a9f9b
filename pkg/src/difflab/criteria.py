"""Acceptance checks.  Each check reads its parameters from a shipped preset
(``criterion_NN``) and returns a :class:`CriterionResult`."""

from dataclasses import dataclass, field
import math
import tempfile
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .appendix import (CorrelatedSequenceSpec, ScalarMarginal, GaussianBump, GriddedMeasure, slln_trace,
                       truncated_slln_trace, hellinger_density, hellinger_cs_bound, hellinger_diffraction_bound)
from .perturb import (IID, UniformBox, displace, with_seed, characteristic_function, covariance_condition_estimate,
                      _seed_stream)
from .pointset import estimate_density, ball_volume
from .recover import structure_factor, verify_structure_relation, recover_spectrum
from .spectral import (fourier_sum, LagGeometry, autocorrelation, mu_lambda_weights, boundary_escape_fraction,
                       side_switchers, strungaru_statistic, escape_margin)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:02d}: {self.title}"


def _result(n, title, checks, metrics):
    return CriterionResult(n, title, all(checks.values()), metrics, checks)


def _cfg(n, cfg):
    return cfg if cfg is not None else cfgmod.load(f"criterion_{n:02d}")


def _setup(cfg, seed=None):
    gen = cfg["generator"]
    R = cfg["R_schedule"][-1]
    dim = gen.get("dim", 2)
    model = cfgmod.build_model(cfg.get("model"), dim, seed if seed is not None else cfg["seeds"][0], gen)
    margin = gen.get("margin", escape_margin(model) if model is not None else 0.0)
    return cfgmod.generate(gen, R + margin), model


def _freqs(cfg):
    return cfgmod.build_frequencies(cfg["frequencies"], cfg["generator"])


# ---------------------------------------------------------------- 1, 9, 10

def bragg_check(cfg):
    """Measured and recovered Bragg amplitude at the top radius, plus the
    seed-averaged deviation trace over the radius schedule."""
    p = cfg.get("params", {})
    t0 = time.perf_counter()
    base, model = _setup(cfg)
    lam = _freqs(cfg)
    radii = cfg["R_schedule"]
    pps = displace(base, model)
    target = characteristic_function(model, lam.frequencies[0]) * p.get("reference", 1.0)
    vals = [fourier_sum(pps, lam, R).values[0] for R in radii]
    runtime = time.perf_counter() - t0
    M = vals[-1]
    phi = characteristic_function(model, lam.frequencies[0])
    rep = recover_spectrum(fourier_sum(pps, lam, radii[-1]), model, cfg.get("cloak_threshold", 0.05))
    recovered = rep.records[0].recovered
    n_trace = p.get("trace_seeds", 32)
    devs = np.zeros((n_trace, len(radii)))
    for k in range(n_trace):
        alt = displace(base, with_seed(model, _seed_stream(cfg["seeds"][0], k)))
        devs[k] = [abs(fourier_sum(alt, lam, R).values[0] - target) for R in radii]
    trace = devs.mean(axis=0)
    checks = {
        "measured": abs(M - target) <= p.get("tol_measured", 0.02),
        "recovered": abs(recovered - p.get("reference", 1.0)) <= p.get("tol_recovered", 0.03),
        "trace_decreasing": bool(np.all(np.diff(trace) < 0)),
        "runtime": runtime <= p.get("runtime_s", 60.0),
    }
    metrics = {"measured": M, "phi": phi, "target": target, "abs_dev": abs(M - target),
               "recovered": recovered, "recovered_dev": abs(recovered - p.get("reference", 1.0)),
               "deviation_trace_primary": [abs(v - target) for v in vals],
               "deviation_trace_mean": trace.tolist(), "radii": radii, "runtime_s": runtime,
               "n_points": len(pps)}
    return checks, metrics


def criterion_1(cfg=None):
    checks, m = bragg_check(_cfg(1, cfg))
    return _result(1, "Bragg amplitude at (1,0) on perturbed Z^2 and its recovery", checks, m)


def criterion_2(cfg=None):
    cfg = _cfg(2, cfg)
    p = cfg["params"]
    base, _ = _setup(cfg)
    lam = _freqs(cfg)
    R = cfg["R_schedule"][-1]
    rec = {}
    for s in p["sigmas"]:
        m = cfgmod.build_model(dict(cfg["model"], dist={"law": "gaussian", "sigma": s}), base.dim, cfg["seeds"][0])
        pps = displace(base, m)
        rec[s] = recover_spectrum(fourier_sum(pps, lam, R), m).records[0].recovered
    diffs = {f"{a}-{b}": abs(rec[a] - rec[b]) for i, a in enumerate(p["sigmas"]) for b in p["sigmas"][i + 1:]}
    checks = {"pairwise": max(diffs.values()) <= p["tol"]}
    return _result(2, "recovered amplitude independent of sigma", checks,
                   {"recovered": {str(k): v for k, v in rec.items()}, "pairwise_diff": diffs})


def criterion_3(cfg=None):
    cfg = _cfg(3, cfg)
    R = cfg["R_schedule"][-1]
    ps = cfgmod.generate(cfg["generator"], R)
    _, dens, _ = estimate_density(ps, [R])
    ref = 6.0 / math.pi ** 2
    rel = abs(dens[0] - ref) / ref
    return _result(3, "density of visible points of Z^2", {"density": rel <= cfg["params"]["tol_rel"]},
                   {"density": dens[0], "reference": ref, "rel_err": rel, "n_points": len(ps)})


def criterion_4(cfg=None):
    cfg = _cfg(4, cfg)
    p = cfg["params"]
    lam = _freqs(cfg)
    oracle_set = cfgmod.generate(cfg["generator"], p["oracle_R"])
    oracle = fourier_sum(oracle_set, lam, p["oracle_R"]).values
    base, model = _setup(cfg)
    pps = displace(base, model)
    R = cfg["R_schedule"][-1]
    rep = recover_spectrum(fourier_sum(pps, lam, R), model, reference=oracle)
    rel = np.abs(rep.recovered - oracle) / np.abs(oracle)
    analytic_rel = np.abs(oracle - lam.amplitudes) / np.abs(lam.amplitudes)
    checks = {"recovered_vs_oracle": bool(np.all(rel <= p["tol_rel"]))}
    return _result(4, "Fibonacci chain recovery at the strongest dual-module frequencies", checks,
                   {"frequencies": lam.frequencies.ravel().tolist(), "oracle": oracle, "recovered": rep.recovered,
                    "rel_err": rel.tolist(), "oracle_vs_analytic_rel": analytic_rel.tolist()})


def criterion_5(cfg=None):
    cfg = _cfg(5, cfg)
    p = cfg["params"]
    base, model = _setup(cfg)
    pps = displace(base, model)
    radii = cfg["R_schedule"]
    fr = [boundary_escape_fraction(pps, R) for R in radii]
    outs = np.array([f[0] for f in fr])
    ins = np.array([f[1] for f in fr])
    i_ref = radii.index(p["R_check"])
    a = p["box_half_width"]
    box = IID(UniformBox(a, base.dim), cfg["seeds"][0])
    pb = displace(base, box)
    worst = 0.0
    for R in radii:
        sw = side_switchers(pb, R)
        worst = max(worst, float(np.max(np.abs(pb.base.norms[sw] - R), initial=0.0)))
    checks = {"out_small": outs[i_ref] <= p["tol"], "in_small": ins[i_ref] <= p["tol"],
              "out_decreasing": bool(np.all(np.diff(outs) < 0)), "in_decreasing": bool(np.all(np.diff(ins) < 0)),
              "switchers_near_sphere": worst <= a * math.sqrt(base.dim)}
    return _result(5, "boundary escape fractions", checks,
                   {"radii": radii, "out": outs.tolist(), "in": ins.tolist(),
                    "max_switcher_distance": worst, "bound": a * math.sqrt(base.dim)})


def gamma_check(cfg):
    p = cfg["params"]
    base, model = _setup(cfg)
    lam = np.asarray(p["lambda"], float)
    R = cfg["R_schedule"][-1]
    K = p["K"]
    inside = base.restrict(R)
    geom = LagGeometry(inside.points, K)
    phi2 = abs(characteristic_function(model, lam)) ** 2
    expected0 = (1.0 - phi2) * base.claimed_density
    n_ok = 0
    c0 = []
    for k in range(p["n_seeds"]):
        pps = displace(base, with_seed(model, _seed_stream(cfg["seeds"][0], k)))
        _, mxi = mu_lambda_weights(pps, lam)
        ac = autocorrelation(mxi, K, R, geom)
        nz = ac.nonzero
        vol = ball_volume(base.dim, R)
        bound = 4.0 * np.sqrt(ac.pair_counts[nz]) / vol
        n_ok += bool(np.all(np.abs(ac.coefficients[nz]) < bound))
        c0.append(ac.coefficients[ac.zero_index].real)
    rel0 = abs(c0[0] - expected0) / expected0
    checks = {"k0": rel0 <= p["tol_k0"], "offdiag": n_ok >= p["min_pass"]}
    metrics = {"k0": c0[0], "expected_k0": expected0, "rel_err_k0": rel0, "seeds_within_bound": n_ok,
               "n_seeds": p["n_seeds"], "n_lags": int(geom.half_lags.shape[0] * 2 + 1)}
    return checks, metrics


def criterion_6(cfg=None):
    checks, m = gamma_check(_cfg(6, cfg))
    return _result(6, "autocorrelation of the centred weights", checks, m)


def criterion_7(cfg=None):
    cfg = _cfg(7, cfg)
    p = cfg["params"]
    base, model = _setup(cfg)
    lam = np.asarray(p["lambda"], float)
    R = cfg["R_schedule"][-1]
    pps = displace(base, model)
    mx, mxi = mu_lambda_weights(pps, lam)
    geom = LagGeometry(base.restrict(R).points, p["K"])
    ac_xi = autocorrelation(mxi, p["K"], R, geom)
    ac_x = autocorrelation(mx, p["K"], R, geom)
    r_xi = strungaru_statistic(ac_xi) / ac_xi.coefficients[ac_xi.zero_index].real
    r_x = strungaru_statistic(ac_x) / ac_x.coefficients[ac_x.zero_index].real
    checks = {"perturbed_no_atoms": r_xi <= p["max_ratio"], "control_atoms": r_x >= p["min_control_ratio"]}
    return _result(7, "Strungaru statistic separates atomic and continuous parts", checks,
                   {"perturbed_ratio": r_xi, "control_ratio": r_x})


def criterion_8(cfg=None):
    cfg = _cfg(8, cfg)
    p = cfg["params"]
    base, model = _setup(cfg)
    R = cfg["R_schedule"][-1]
    grid = _freqs(cfg)
    n = p["n_realizations"]
    seed = cfg["seeds"][0]
    Sb = structure_factor(base, None, grid, R)
    Sp = structure_factor(base, model, grid, R, n, seed)
    off = verify_structure_relation(Sb, Sp, model)
    bragg = np.asarray([p["bragg"]], float)
    Bb = structure_factor(base, None, bragg, R)
    Bp = structure_factor(base, model, bragg, R, n, seed)
    on = verify_structure_relation(Bb, Bp, model)
    checks = {"off_bragg": off.mean_abs <= 3 * off.mean_se, "bragg": float(on.relative[0]) <= p["tol_bragg_rel"]}
    return _result(8, "structure-factor relation", checks,
                   {"mean_abs_residual": off.mean_abs, "mean_combined_se": off.mean_se,
                    "bragg_rel_residual": float(on.relative[0]), "n_frequencies": len(grid)})


def criterion_9(cfg=None):
    cfg = _cfg(9, cfg)
    p = cfg["params"]
    c1, m1 = bragg_check(dict(cfg, params=p["bragg"], frequencies=p["bragg_frequencies"]))
    c6, m6 = gamma_check(dict(cfg, params=p["gamma"]))
    base, model = _setup(cfg)
    cov = covariance_condition_estimate(model, base, p["cov_N_max"], p["cov_seeds"])
    inc = cov.increments
    tail = inc[len(inc) // 2:]
    checks = {f"bragg_{k}": v for k, v in c1.items()}
    checks.update({f"gamma_{k}": v for k, v in c6.items()})
    checks["covariance_increments_decay"] = bool(np.all(np.diff(tail) <= 0) and inc[-1] < np.max(inc))
    return _result(9, "shell-mixing field passes the Bragg and autocorrelation checks", checks,
                   {"bragg": m1, "gamma": m6, "cov_increments": inc.tolist()})


def criterion_10(cfg=None):
    checks, m = bragg_check(_cfg(10, cfg))
    return _result(10, "deformed lattice with a correlated lattice field", checks, m)


def criterion_11(cfg=None):
    cfg = _cfg(11, cfg)
    p = cfg["params"]
    seed = cfg["seeds"][0]
    t0 = time.perf_counter()
    ar = CorrelatedSequenceSpec("geometric", ScalarMarginal("uniform"), p["beta"])
    tr = slln_trace(ar, p["n_max"], seed)
    t1 = time.perf_counter()
    ex = CorrelatedSequenceSpec("iid", ScalarMarginal("exponential"))
    tt = truncated_slln_trace(ex, p["n_max"], seed)
    t2 = time.perf_counter()
    checks = {"slln": abs(tr.value[-1]) <= p["tol"], "truncated": abs(tt.value[-1] - 1.0) <= p["tol"],
              "runtime": max(t1 - t0, t2 - t1) <= p["runtime_s"]}
    return _result(11, "strong laws for correlated and truncated sequences", checks,
                   {"slln_trace": tr.value.tolist(), "truncated_trace": tt.value.tolist(),
                    "runtime_s": [t1 - t0, t2 - t1]})


def criterion_12(cfg=None):
    cfg = _cfg(12, cfg)
    p = cfg["params"]
    gen = np.random.default_rng(p["grid_seed"])
    shape = tuple(p["grid_shape"])
    g = GriddedMeasure(np.zeros(2), 0.1, gen.random(shape))
    h = GriddedMeasure(np.zeros(2), 0.1, gen.random(shape))
    left = np.where(np.arange(shape[0])[:, None] < shape[0] // 2, gen.random(shape), 0.0)
    right = np.where(np.arange(shape[0])[:, None] >= shape[0] // 2, gen.random(shape), 0.0)
    ident = (np.array_equal(hellinger_density(g, h).densities, hellinger_density(h, g).densities)
             and np.array_equal(hellinger_density(g, g).densities, g.densities)
             and not np.any(hellinger_density(GriddedMeasure(0, 0.1, left),
                                              GriddedMeasure(0, 0.1, right)).densities))
    cs_ok = 0
    for _ in range(p["cs_trials"]):
        a = GriddedMeasure(np.zeros(2), 0.1, gen.random(shape) * (gen.random(shape) < 0.7))
        b = GriddedMeasure(np.zeros(2), 0.1, gen.random(shape) * (gen.random(shape) < 0.7))
        lhs, rhs = hellinger_cs_bound(a, b, gen.random(shape))
        cs_ok += lhs <= rhs * (1 + 1e-12)
    base, model = _setup(cfg)
    pps = displace(base, model)
    bump = GaussianBump(tuple(p["bump_center"]), p["bump_width"])
    db = hellinger_diffraction_bound(pps, p["lambda"], bump, cfg["R_schedule"], n_replicates=p["replicates"])
    checks = {"identities": bool(ident), "cauchy_schwarz": cs_ok == p["cs_trials"], "diffraction_bound": db.holds}
    return _result(12, "Hellinger density identities and bounds", checks,
                   {"cs_pass": cs_ok, "lhs_trace": db.lhs.tolist(), "lhs_grid": db.lhs_grid, "rhs": db.rhs,
                    "rhs_se": db.rhs_se, "tail_max": db.tail_max})


def criterion_13(cfg=None):
    from .runner import run
    cfg = _cfg(13, cfg)
    digests = {}
    with tempfile.TemporaryDirectory() as tmp:
        for th in cfg["params"]["threads"]:
            out = Path(tmp) / f"t{th}"
            run(cfg, "spectrum", out_dir=out, threads=th)
            digests[th] = {f.name: f.read_bytes() for f in sorted(out.rglob("*.csv"))}
    ref = digests[cfg["params"]["threads"][0]]
    same = all(d == ref for d in digests.values()) and len(ref) > 0
    return _result(13, "bit-identical CSVs across thread counts", {"identical": same},
                   {"files": sorted(ref), "threads": cfg["params"]["threads"]})


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 14)}


def run_criterion(n, cfg=None):
    return CRITERIA[n](cfg)
