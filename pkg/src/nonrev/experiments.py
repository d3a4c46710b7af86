"""Named experiment catalog: each entry builds its kernels or processes,
computes variance/ordering numbers, and returns result rows plus named
PASS/FAIL checks for the CLI harness."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import finite, samplers, zigzag, zoo
from .finite import (DeterministicInvolution, FiniteDistribution, KernelMatrix,
                     Observable)


@dataclass
class ResultRow:
    experiment: str
    case_id: str
    lam: float
    value: float
    se: float = 0.0
    oracle: float | None = None
    passed: bool = True

    def to_csv(self) -> str:
        oracle = "" if self.oracle is None else repr(float(self.oracle))
        return (f"{self.experiment},{self.case_id},{float(self.lam)!r},"
                f"{float(self.value)!r},{float(self.se)!r},{oracle},"
                f"{str(self.passed).lower()}")


CSV_HEADER = "experiment,case_id,lambda,value,se,oracle,pass"


def _check(name: str, violation: float, tol: float = 1e-9) -> dict:
    return {"name": name, "pass": bool(violation <= tol),
            "max_violation": float(violation)}


def _position_observable(n: int) -> Observable:
    """x-only observable on the ring x {-1,+1} space (Qf = f)."""
    vals = np.cos(2 * math.pi * np.arange(n) / n) + 0.3 * np.arange(n) / n
    return zoo.lift_observable(Observable(vals), n)


DEFAULT_RING = (1.0, 2.0, 3.0, 2.0, 1.0)
DEFAULT_LAMBDAS = tuple(round(0.1 * k, 2) for k in range(1, 10))


def run_gustafson_ring(cfg: dict, seed: int):
    target = zoo.RingTarget(np.asarray(cfg["weights"], dtype=float))
    P, mu, Q = zoo.gustafson_ring(target)
    checks = []
    checks.append(_check("invariance",
                         0.0 if finite.check_invariance(P, mu) else 1.0))
    checks.append(_check("muQ-reversible",
                         0.0 if finite.check_muQ_reversible(P, mu, Q) else 1.0))
    qp, pq = finite.reversible_parts(P, Q)
    db = max(0.0 if finite.check_mu_reversible(k, mu) else 1.0 for k in (qp, pq))
    checks.append(_check("reversible-parts-detailed-balance", db))
    f = _position_observable(target.n)
    rows = []
    worst = 0.0
    for lam in cfg["lambdas"]:
        v = finite.var_lambda(f, P, mu, lam)
        o = finite.var_lambda_series(f, P, mu, lam)
        worst = max(worst, abs(v - o))
        rows.append(ResultRow("gustafson-ring", "var", lam, v, 0.0, o,
                              abs(v - o) <= 1e-8))
    checks.append(_check("series-oracle-agreement", worst, 1e-8))
    return rows, checks


def run_lifted_ordering(cfg: dict, seed: int):
    target = zoo.RingTarget(np.asarray(cfg["weights"], dtype=float))
    pair = zoo.guided_walk_ring(target, np.asarray(cfg["step_dist"], dtype=float))
    kinds = [("minimal", zoo.SwitchingRate("minimal")),
             ("convex-0.5", zoo.SwitchingRate("convex", 0.5)),
             ("maximal", zoo.SwitchingRate("maximal"))]
    lifted = {name: zoo.lifted_kernel(pair, rate) for name, rate in kinds}
    coll = zoo.collapsed_kernel(pair)
    f_base = Observable(np.cos(2 * math.pi * np.arange(target.n) / target.n))
    f = zoo.lift_observable(f_base, target.n)
    rows = []
    worst_chain = 0.0
    worst_vs_coll = 0.0
    mu = lifted["minimal"][1]
    for lam in cfg["lambdas"]:
        vals = {}
        for name, _ in kinds:
            P, mu, Q = lifted[name]
            vals[name] = finite.var_lambda(f, P, mu, lam)
            rows.append(ResultRow("lifted-ordering", name, lam, vals[name]))
        vc = finite.var_lambda(f_base, coll, pair.pi, lam)
        rows.append(ResultRow("lifted-ordering", "collapsed", lam, vc))
        worst_chain = max(worst_chain,
                          vals["minimal"] - vals["convex-0.5"],
                          vals["convex-0.5"] - vals["maximal"])
        worst_vs_coll = max(worst_vs_coll,
                            max(vals[n] for n, _ in kinds) - vc)
    checks = [_check("rate-ordering-minimal<=convex<=maximal", worst_chain),
              _check("lifted<=collapsed", worst_vs_coll)]
    return rows, checks


def _neal_t2(weights) -> tuple[KernelMatrix, FiniteDistribution]:
    pi = FiniteDistribution.from_unnormalized(np.asarray(weights, dtype=float))
    t = 0.5 * np.eye(pi.n) + 0.5 * np.tile(pi.weights, (pi.n, 1))
    return KernelMatrix(t), pi


def run_neal_ordering(cfg: dict, seed: int):
    T2, pi = _neal_t2(cfg["weights"])
    P1, P2, mu, Q = zoo.neal_pair_kernels(T2, pi)
    n = pi.n
    rng = np.random.default_rng(seed)
    rows = []
    worst_id = 0.0
    worst_ord = 0.0
    for lam in cfg["lambdas"]:
        f = rng.standard_normal(n)
        g = Observable(np.add.outer(f, f).ravel())  # g(x1,x2) = f(x1)+f(x2)
        fb = Observable(np.repeat(f, n))            # f(x1) lifted to pairs
        fpi = Observable(f)
        var_pi = finite.var_lambda(fpi, KernelMatrix(np.tile(pi.weights, (n, 1))),
                                   pi, 0.0)
        vals = {}
        for name, P in (("P1", P1), ("P2", P2)):
            vg = finite.var_lambda(g, P, mu, lam)
            vf = finite.var_lambda(fb, P, mu, lam)
            vals[name] = vf
            ident = -(1 - lam ** 2) / lam * var_pi + (1 + lam) ** 2 / lam * vf
            resid = abs(vg - ident)
            worst_id = max(worst_id, resid)
            rows.append(ResultRow("neal-ordering", name, lam, vg, 0.0, ident,
                                  resid <= 1e-9))
        worst_ord = max(worst_ord, vals["P1"] - vals["P2"])
    checks = [_check("pair-variance-identity", worst_id),
              _check("never-stay-dominates", worst_ord)]
    return rows, checks


def _ring_refresh_kernel(n: int, a: float = 0.5) -> KernelMatrix:
    """(mu,Q)-reversible lazy velocity flip on the ring x {-1,+1} space."""
    Q = zoo.velocity_flip(n)
    return KernelMatrix((1 - a) * np.eye(2 * n) + a * Q.matrix)


def run_two_cycle_extra_chance(cfg: dict, seed: int):
    target = zoo.RingTarget(np.asarray(cfg["weights"], dtype=float))
    n = target.n
    mu = zoo.half_lift(target.pi)
    Q = zoo.velocity_flip(n)
    psi = zoo.ring_shift_flow(n)
    R = _ring_refresh_kernel(n)
    f = _position_observable(n)
    Ks = list(cfg["K_values"])
    kernels = {K: zoo.extra_chance_finite(mu, psi, Q, K) for K in Ks}
    rows = []
    worst_mono = 0.0
    for lam in cfg["lambdas"]:
        prev = None
        for K in Ks:
            v = finite.var_lambda_cycle(f, R, kernels[K], mu, lam)
            rows.append(ResultRow("two-cycle-extra-chance", f"K={K}", lam, v))
            if prev is not None:
                worst_mono = max(worst_mono, v - prev)
            prev = v
    # Dirichlet forms of P_K Q nondecreasing in K, certified by PSD test
    worst_eig = 0.0
    for Ka, Kb in zip(Ks[:-1], Ks[1:]):
        cert = finite.dirichlet_dominance_certificate(
            kernels[Kb], kernels[Ka], mu, Q, side="right")
        worst_eig = max(worst_eig, -cert.dominance_matrix_min_eig)
    checks = [_check("variance-nonincreasing-in-K", worst_mono),
              _check("dirichlet-form-nondecreasing-in-K", worst_eig, 1e-10)]
    return rows, checks


def run_ghmc_phi_compare(cfg: dict, seed: int):
    # exact finite comparison on the ring
    target = zoo.RingTarget(np.asarray(cfg["weights"], dtype=float))
    n = target.n
    mu = zoo.half_lift(target.pi)
    Q = zoo.velocity_flip(n)
    psi = zoo.ring_shift_flow(n)
    P_met = zoo.metropolized_flow_finite(mu, psi, Q, zoo.AcceptanceRule.metropolis())
    P_bar = zoo.metropolized_flow_finite(mu, psi, Q, zoo.AcceptanceRule.barker())
    R = _ring_refresh_kernel(n)
    f = _position_observable(n)
    rows = []
    worst = 0.0
    for lam in cfg["lambdas"]:
        vm = finite.var_lambda_cycle(f, R, P_met, mu, lam)
        vb = finite.var_lambda_cycle(f, R, P_bar, mu, lam)
        rows.append(ResultRow("ghmc-phi-compare", "finite-metropolis", lam, vm))
        rows.append(ResultRow("ghmc-phi-compare", "finite-barker", lam, vb))
        worst = max(worst, vm - vb)
    checks = [_check("finite-metropolis<=barker", worst)]
    # Monte Carlo GHMC comparison on the 1-D Gaussian
    H = samplers.gaussian_potential(1.0)
    obs = {"x2": lambda x: x[:, 0] ** 2, "absx": lambda x: np.abs(x[:, 0])}
    rep = samplers.compare_acceptance_rules(
        H, omega=math.pi / 4, step=cfg["step"], nleap=cfg["nleap"],
        rules=[zoo.AcceptanceRule.metropolis(), zoo.AcceptanceRule.barker()],
        lambdas=list(cfg["mc_lambdas"]), observables=obs,
        n_steps=int(cfg["steps"]), replicates=int(cfg["replicates"]),
        seed=seed)
    for row in rep.rows:
        rows.append(ResultRow("ghmc-phi-compare", f"mc-{row.rule}-{row.observable}",
                              row.lam, row.estimate, row.se))
    checks.append({"name": "mc-metropolis<=barker+2se", "pass": rep.passed,
                   "max_violation": 0.0 if rep.passed else 1.0})
    return rows, checks


def run_zigzag_1d_gamma(cfg: dict, seed: int):
    pot = zigzag.zz_gaussian([1.0])
    spec1 = zigzag.IntensitySpec("canonical")
    spec2 = zigzag.IntensitySpec("canonical-plus-gamma", gamma=float(cfg["gamma"]))
    f = lambda x, v: x[:, 0]
    T = float(cfg["horizon"])
    R = int(cfg["replicates"])
    e1, s1, _ = zigzag.estimate_var_continuous(pot, spec1, f, T, R, 0.0, seed,
                                               degree=1)
    e2, s2, _ = zigzag.estimate_var_continuous(pot, spec2, f, T, R, 0.0, seed,
                                               degree=1)
    rows = [ResultRow("zigzag-1d-gamma", "canonical", 0.0, e1, s1),
            ResultRow("zigzag-1d-gamma", "plus-gamma", 0.0, e2, s2)]
    comb = math.hypot(s1, s2)
    checks = [{"name": "canonical<=plus-gamma+2se", "pass": e1 <= e2 + 2 * comb,
               "max_violation": float(max(0.0, e1 - e2 - 2 * comb))}]
    g = zigzag.SmoothObservable(lambda x, v: x[:, 0] * v[:, 0],
                                lambda x, v: v)
    gap = zigzag.dirichlet_gap_quadrature(pot, spec1, spec2, g)
    rows.append(ResultRow("zigzag-1d-gamma", "dirichlet-gap", 0.0, gap))
    checks.append(_check("dirichlet-gap-nonnegative", max(0.0, -gap), 1e-8))
    return rows, checks


def _basis_2d():
    """20 smooth test functions on R^2 x {-1,1}^2."""
    funs = []
    for (a, b) in [(1, 0), (0, 1), (2, 0), (0, 2), (1, 1)]:
        for vpow in [(0, 0), (1, 0), (0, 1), (1, 1)]:
            def make(a=a, b=b, vpow=vpow):
                def val(x, v):
                    out = x[:, 0] ** a * x[:, 1] ** b
                    if vpow[0]:
                        out = out * v[:, 0]
                    if vpow[1]:
                        out = out * v[:, 1]
                    return out
                return val
            funs.append(zigzag.SmoothObservable(make()))
    return funs


def run_zigzag_2d_refresh(cfg: dict, seed: int):
    pot = zigzag.zz_gaussian([1.0, 1.0])
    rate = float(cfg["refresh_rate"])
    partial = zigzag.IntensitySpec("canonical", refresh_rate=rate,
                                   refresh_mode="partial")
    full = zigzag.IntensitySpec("canonical", refresh_rate=rate,
                                refresh_mode="full")
    rows = []
    worst_gap = 0.0
    for k, g in enumerate(_basis_2d()):
        gap = zigzag.dirichlet_gap_quadrature(pot, partial, full, g,
                                              m=int(cfg["quad_nodes"]))
        worst_gap = max(worst_gap, -gap)
        rows.append(ResultRow("zigzag-2d-refresh", f"gap-basis-{k}", 0.0, gap))
    checks = [_check("gap-nonnegative-on-basis", worst_gap, 1e-8)]
    f = lambda x, v: x[:, 0] + x[:, 1]
    T = float(cfg["horizon"])
    R = int(cfg["replicates"])
    e1, s1, _ = zigzag.estimate_var_continuous(pot, partial, f, T, R, 0.0, seed,
                                               degree=1)
    e2, s2, _ = zigzag.estimate_var_continuous(pot, full, f, T, R, 0.0,
                                               seed + 1, degree=1)
    rows.append(ResultRow("zigzag-2d-refresh", "partial", 0.0, e1, s1))
    rows.append(ResultRow("zigzag-2d-refresh", "full", 0.0, e2, s2))
    comb = math.hypot(s1, s2)
    checks.append({"name": "partial<=full+2se", "pass": e1 <= e2 + 2 * comb,
                   "max_violation": float(max(0.0, e1 - e2 - 2 * comb))})
    return rows, checks


def run_phi_eps_bounds(cfg: dict, seed: int):
    rs = np.logspace(-3, 3, int(cfg["grid_points"]))
    epss = [float(e) for e in cfg["eps_values"]]
    rows = []
    worst_sym = 0.0
    worst_bound = 0.0
    worst_mono = 0.0
    phi0 = zigzag.phi_eps(zigzag.PhiEps(0.0), rs)
    prev = phi0
    for eps in sorted(epss):
        rule = zigzag.PhiEps(eps)
        vals = zigzag.phi_eps(rule, rs)
        sym = np.max(np.abs(rs * zigzag.phi_eps(rule, 1.0 / rs) - vals))
        worst_sym = max(worst_sym, float(sym))
        diff = phi0 - vals
        bound = phi0 * math.sqrt(math.expm1(eps))
        worst_bound = max(worst_bound,
                          float(np.max(-diff)), float(np.max(diff - bound)))
        worst_mono = max(worst_mono, float(np.max(vals - prev)))
        prev = vals
        for r, val in list(zip(rs, vals))[:: max(1, rs.size // 5)]:
            rows.append(ResultRow("phi-eps-bounds", f"eps={eps}", 0.0,
                                  float(val), 0.0, None, True))
    checks = [_check("balance-symmetry", worst_sym, 1e-10),
              _check("appendix-bound", worst_bound, 1e-12),
              _check("monotone-in-eps", worst_mono, 1e-12)]
    return rows, checks


# name -> (description, defaults, runner); insertion order is the stable
# catalog order used by `nonrev list`.
EXPERIMENTS = {
    "gustafson-ring": (
        "persistent-direction ring walk: invariance, flip-reversibility and "
        "exact discounted variances vs the series oracle",
        {"weights": DEFAULT_RING, "lambdas": DEFAULT_LAMBDAS},
        run_gustafson_ring),
    "lifted-ordering": (
        "lifted guided walk: variance ordering in the switching rate "
        "(minimal <= convex <= maximal) and lifted <= collapsed",
        {"weights": DEFAULT_RING, "step_dist": (1.0,),
         "lambdas": DEFAULT_LAMBDAS},
        run_lifted_ordering),
    "neal-ordering": (
        "pair-space swap kernels: exact variance identity and the never-stay "
        "kernel dominating the independent refresh",
        {"weights": (0.2, 0.3, 0.5), "lambdas": DEFAULT_LAMBDAS},
        run_neal_ordering),
    "two-cycle-extra-chance": (
        "alternating refresh/flow cycle: variance nonincreasing in the number "
        "of extra proposal chances K",
        {"weights": DEFAULT_RING, "K_values": (1, 2, 3),
         "lambdas": DEFAULT_LAMBDAS},
        run_two_cycle_extra_chance),
    "ghmc-phi-compare": (
        "acceptance-rule comparison: metropolis beats barker exactly on the "
        "ring and within noise for GHMC on a Gaussian",
        {"weights": DEFAULT_RING, "lambdas": DEFAULT_LAMBDAS,
         "mc_lambdas": (0.5,), "step": 0.9, "nleap": 2,
         "steps": 20000, "replicates": 8},
        run_ghmc_phi_compare),
    "zigzag-1d-gamma": (
        "1-D zig-zag: canonical rates vs canonical plus extra rate gamma, "
        "batch-means variance ordering and quadrature Dirichlet gap",
        {"gamma": 0.5, "horizon": 2000.0, "replicates": 16},
        run_zigzag_1d_gamma),
    "zigzag-2d-refresh": (
        "2-D zig-zag: per-coordinate refresh flips vs full velocity resample, "
        "Dirichlet gap on a 20-function basis and empirical ordering",
        {"refresh_rate": 1.0, "horizon": 800.0, "replicates": 16,
         "quad_nodes": 24},
        run_zigzag_2d_refresh),
    "phi-eps-bounds": (
        "smoothed acceptance function: balance symmetry, monotonicity in eps "
        "and the uniform approximation bound",
        {"grid_points": 41, "eps_values": (0.01, 0.1, 1.0)},
        run_phi_eps_bounds),
}
