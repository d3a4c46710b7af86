"""Continuous-state samplers and empirical discounted-variance estimation.

Implements the guided walk on the line, GHMC with leapfrog integration and
partial momentum refreshment, the extra-chance multi-proposal step, and the
plug-in estimator for the discounted sum of autocovariances with replicate
standard errors.

Reproducibility contract: every replicate r of a run seeded with s owns the
counter-based Philox stream keyed by s * 2**64 + r, so runs are
bit-reproducible and replicates can execute in any order or in parallel.
The batched driver splits that stream into a refresh-noise sub-stream and an
accept-uniform sub-stream (a 2**128 jump apart), which makes its output
independent of the internal buffering block size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .zoo import AcceptanceRule


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(seed << 64) + replicate))


@dataclass(frozen=True)
class PhaseState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        if x.shape != v.shape:
            raise ValueError("x and v must have the same shape")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("state must be finite")


@dataclass(frozen=True)
class SeparableHamiltonian:
    """H(x, v) = U(x) + |v|^2 / (2 sigma2), momentum marginal N(0, sigma2).

    U and grad must accept arrays of shape (..., d) and broadcast over the
    leading axes; U returns shape (...), grad returns (..., d).
    """

    U: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    sigma2: float = 1.0
    d: int = 1

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        rng = np.random.default_rng(12345)
        probes = rng.standard_normal((5, self.d))
        h = 1e-6
        for p in probes:
            g = np.asarray(self.grad(p[None, :]))[0]
            for i in range(self.d):
                e = np.zeros(self.d)
                e[i] = h
                fd = (float(np.squeeze(self.U((p + e)[None, :])))
                      - float(np.squeeze(self.U((p - e)[None, :])))) / (2 * h)
                if abs(fd - g[i]) > 1e-5 * max(1.0, abs(g[i])):
                    raise ValueError("grad disagrees with finite differences")

    def kinetic(self, v: np.ndarray) -> np.ndarray:
        return np.sum(v * v, axis=-1) / (2.0 * self.sigma2)

    def energy(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.asarray(self.U(x)) + self.kinetic(v)


def leapfrog(H: SeparableHamiltonian, x: np.ndarray, v: np.ndarray,
             step: float, nleap: int):
    """Velocity-Verlet flow for the separable Hamiltonian; symmetric splitting
    so the map psi satisfies psi^{-1} = xi o psi o xi with xi(x,v) = (x,-v)."""
    x = x.copy()
    v = v.copy()
    half = 0.5 * step
    for _ in range(nleap):
        v = v - half * np.asarray(H.grad(x))
        x = x + step * v / H.sigma2
        v = v - half * np.asarray(H.grad(x))
    return x, v


def _accept_prob(rule: AcceptanceRule, r: np.ndarray) -> np.ndarray:
    r = np.where(np.isfinite(r), r, 0.0)
    if rule.kind == "metropolis":
        return np.minimum(1.0, r)
    if rule.kind == "barker":
        return r / (1.0 + r)
    return np.vectorize(rule.phi)(r)


def _refresh(v, noise, omega, sigma2):
    return v * math.cos(omega) + noise * math.sqrt(sigma2) * math.sin(omega)


def _ghmc_update(H, x, v, noise, u, step, nleap, omega, rule,
                 diagnostics=None):
    """One GHMC transition given pre-drawn refresh noise and accept uniform.

    Operates on batched arrays x, v of shape (R, d); noise (R, d), u (R,).
    Non-finite energies reject with a momentum flip.
    """
    v = _refresh(v, noise, omega, H.sigma2)
    with np.errstate(over="ignore", invalid="ignore"):
        xn, vn = leapfrog(H, x, v, step, nleap)
        de = H.energy(x, v) - H.energy(xn, vn)
        r = np.exp(de)
    bad = ~np.isfinite(de)
    if diagnostics is not None and np.any(bad):
        diagnostics["overflow"] = diagnostics.get("overflow", 0) + int(bad.sum())
    a = np.where(bad, 0.0, _accept_prob(rule, r))
    acc = (u < a)[:, None]
    x = np.where(acc, xn, x)
    v = np.where(acc, vn, -v)
    return x, v


def ghmc_step(state: PhaseState, H: SeparableHamiltonian, step: float,
              nleap: int, omega: float, phi: AcceptanceRule,
              rng: np.random.Generator, diagnostics: dict | None = None) -> PhaseState:
    """Partial momentum refresh (angle omega), leapfrog proposal, accept with
    phi(exp(-energy error)), momentum flip on rejection.

    Draw order: refresh normals first, then the accept uniform.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if not 0 < omega <= math.pi / 2:
        raise ValueError("omega must lie in (0, pi/2]")
    noise = rng.standard_normal(state.x.size)
    u = rng.random()
    x, v = _ghmc_update(H, state.x[None, :], state.v[None, :],
                        noise[None, :], np.array([u]), step, nleap, omega,
                        phi, diagnostics)
    return PhaseState(x[0], v[0])


def extra_chance_step(state: PhaseState, H: SeparableHamiltonian, step: float,
                      nleap: int, K: int, rng: np.random.Generator) -> PhaseState:
    """Accept stage with K chained proposals psi^k and the monotone ladder
    alpha_k = max{alpha_{k-1}, min{1, r_k}}; no momentum refresh inside."""
    if K < 1:
        raise ValueError("K must be >= 1")
    u = rng.random()
    e0 = float(H.energy(state.x, state.v))
    alpha = 0.0
    x, v = state.x, state.v
    for _k in range(K):
        x, v = leapfrog(H, x, v, step, nleap)
        with np.errstate(over="ignore", invalid="ignore"):
            de = e0 - float(H.energy(x, v))
        r = math.exp(min(de, 700.0)) if np.isfinite(de) else 0.0
        alpha = max(alpha, min(1.0, r))
        if u < alpha:
            return PhaseState(x, v)
    return PhaseState(state.x, -state.v)


def guided_walk_step(x: float, v: int, logdensity: Callable[[float], float],
                     step_draw: Callable[[np.random.Generator], float],
                     rng: np.random.Generator):
    """Propose x + |z| v with z from the symmetric step law; MH-accept against
    the target, flip the direction on rejection."""
    z = abs(step_draw(rng))
    y = x + z * v
    logr = logdensity(y) - logdensity(x)
    if math.log(max(rng.random(), 1e-300)) < logr:
        return y, v
    return x, -v


@dataclass
class ChainStats:
    """Replicate summary of a discounted-variance estimate."""

    autocovariances: np.ndarray
    replicates: int
    per_replicate: np.ndarray
    estimate: float
    se: float

    def __post_init__(self):
        if self.autocovariances.size and self.autocovariances[0] < 0:
            raise ValueError("lag-0 autocovariance must be nonnegative")
        if self.se < 0:
            raise ValueError("standard error must be nonnegative")


def default_max_lag(lam: float) -> int:
    if lam == 0.0:
        return 0
    return int(math.ceil(math.log(1e-8) / math.log(lam)))


def _autocov(values: np.ndarray, max_lag: int) -> np.ndarray:
    c = values - values.mean()
    n = c.size
    out = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        out[k] = np.dot(c[: n - k], c[k:]) / n  # biased normalization
    return out


def estimate_var_lambda(chains, lam: float, max_lag: int | None = None) -> ChainStats:
    """Plug-in discounted-autocovariance estimator.

    chains: array (replicates, length) of observable values (a single 1-D
    chain is treated as one replicate).  Per replicate the estimate is
    gamma_0 + 2 sum_{k<=K} lam^k gamma_k with biased autocovariances; the
    standard error is the replicate sample SD divided by sqrt(R).
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError("lambda must lie in [0, 1)")
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    if max_lag is None:
        max_lag = default_max_lag(lam)
    if chains.shape[1] < 10 * max(1, max_lag):
        raise ValueError("chain shorter than 10 * max_lag")
    weights = lam ** np.arange(max_lag + 1)
    weights[1:] *= 2.0
    per = np.empty(chains.shape[0])
    acc_cov = np.zeros(max_lag + 1)
    for r, row in enumerate(chains):
        g = _autocov(row, max_lag)
        acc_cov += g
        per[r] = float(np.dot(weights, g))
    R = chains.shape[0]
    est = float(per.mean())
    se = float(per.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    return ChainStats(acc_cov / R, R, per, est, se)


def run_ghmc_chains(H: SeparableHamiltonian, step: float, nleap: int,
                    omega: float, rule: AcceptanceRule, n_steps: int,
                    replicates: int, seed: int,
                    observables: Sequence[Callable[[np.ndarray], np.ndarray]],
                    x0: float = 0.0, burn_in: int = 0,
                    block: int = 100_000):
    """Replicate-batched GHMC driver.

    Each replicate owns its Philox stream, split into a noise sub-stream and
    a uniform sub-stream so pre-drawing in blocks does not change the draws;
    transitions are applied vectorized across replicates.  Returns a list of
    (replicates, n_steps) arrays, one per observable of the position x.
    """
    R, d = replicates, H.d
    noise_rngs, unif_rngs = [], []
    for r in range(R):
        bitgen = np.random.Philox(key=(seed << 64) + r)
        noise_rngs.append(np.random.Generator(bitgen))
        unif_rngs.append(np.random.Generator(bitgen.jumped(1)))
    x = np.full((R, d), float(x0))
    v = np.stack([rng.standard_normal(d) * math.sqrt(H.sigma2)
                  for rng in noise_rngs])
    out = [np.empty((R, n_steps)) for _ in observables]
    done = -burn_in
    total = n_steps + burn_in
    while done < n_steps:
        b = min(block, total - (done + burn_in))
        noise = np.stack([rng.standard_normal((b, d)) for rng in noise_rngs])
        unif = np.stack([rng.random(b) for rng in unif_rngs])
        for i in range(b):
            x, v = _ghmc_update(H, x, v, noise[:, i, :], unif[:, i],
                                step, nleap, omega, rule)
            if done >= 0:
                for j, f in enumerate(observables):
                    out[j][:, done] = f(x)
            done += 1
    return out


@dataclass
class RuleComparisonRow:
    rule: str
    lam: float
    observable: str
    estimate: float
    se: float


@dataclass
class RuleComparisonReport:
    rows: list
    passed: bool


def compare_acceptance_rules(H: SeparableHamiltonian, omega: float, step: float,
                             nleap: int, rules: Sequence[AcceptanceRule],
                             lambdas: Sequence[float],
                             observables: dict,
                             n_steps: int = 100_000, replicates: int = 16,
                             seed: int = 0, burn_in: int | None = None) -> RuleComparisonReport:
    """Paired GHMC runs across acceptance rules with shared noise streams.

    Each rule reruns the same per-replicate Philox streams (common refresh
    noise and accept uniforms).  PASS when, for every lambda and observable,
    the estimate never beats the first (most accepting) rule by more than
    2 combined standard errors.
    """
    if burn_in is None:
        burn_in = n_steps // 10
    names = list(observables)
    funs = [observables[k] for k in names]
    rows = []
    table = {}
    for rule in rules:
        chains = run_ghmc_chains(H, step, nleap, omega, rule, n_steps,
                                 replicates, seed, funs, burn_in=burn_in)
        for name, vals in zip(names, chains):
            for lam in lambdas:
                st = estimate_var_lambda(vals, lam)
                rows.append(RuleComparisonRow(rule.kind, lam, name,
                                              st.estimate, st.se))
                table[(rule.kind, lam, name)] = st
    passed = True
    base = rules[0].kind
    for rule in rules[1:]:
        for name in names:
            for lam in lambdas:
                a = table[(base, lam, name)]
                b = table[(rule.kind, lam, name)]
                comb = math.hypot(a.se, b.se)
                if b.estimate < a.estimate - 2.0 * comb:
                    passed = False
    return RuleComparisonReport(rows, passed)


def chainstats_csv_rows(experiment: str, lam: float, stats: ChainStats,
                        steps: int, seed: int) -> str:
    return (f"{experiment},{lam!r},{stats.estimate!r},{stats.se!r},"
            f"{stats.replicates},{steps},{seed}")


def refresh_comparison_witness(omega: float, sigma2: float = 1.0):
    """Closed-form values of <g, Q(R_{pi/2} - R_omega) g>_mu for g1(v) = v and
    g2(v) = v^2 under N(0, sigma2) momentum refreshment.

    The two signs differ for omega in (0, pi/2), demonstrating that full and
    partial refreshment are not Dirichlet-comparable.  Asserts nothing.
    """
    g1 = sigma2 * math.cos(omega)
    g2 = -2.0 * sigma2 ** 2 * math.cos(omega) ** 2
    return g1, g2


def gaussian_potential(sigma: float = 1.0, d: int = 1) -> SeparableHamiltonian:
    s2 = sigma * sigma
    return SeparableHamiltonian(
        U=lambda x: np.sum(x * x, axis=-1) / (2 * s2),
        grad=lambda x: x / s2,
        d=d,
    )


def double_well_potential(a: float = 1.0, b: float = 1.0) -> SeparableHamiltonian:
    """U(x) = a (x^2 - b)^2 in one dimension."""
    return SeparableHamiltonian(
        U=lambda x: a * (x[..., 0] ** 2 - b) ** 2,
        grad=lambda x: 4.0 * a * x * (x ** 2 - b),
        d=1,
    )
