"""Event-driven Zig-Zag process on R^d x {-1,1}^d.

Velocity coordinate i flips at intensity lambda_i(x, v); between events the
position moves linearly.  Intensities come in four kinds (canonical,
Gaussian-penalty smoothed, barker, canonical plus an extra x-only rate
gamma), all satisfying the switching identity
lambda_i(x, v) - lambda_i(x, -v) = dU/dx_i(x) v_i.

Event times use exact inversion of the integrated rate for Gaussian
potentials with canonical(+gamma) intensities, and thinning against an
affine-along-the-ray envelope otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import log_ndtr, ndtr
from scipy.interpolate import CubicSpline

from .samplers import replicate_rng


@dataclass(frozen=True)
class Potential:
    """Smooth potential U with gradient; mu(x, v) propto exp(-U(x)) 2^{-d}.

    hessian_bound(x, v, tau) must bound max_i sup_{s in [0,tau]}
    |(Hess U(x + s v) v)_i|; it feeds the thinning envelope.  gaussian_sigmas
    marks diagonal-Gaussian targets eligible for exact event-time inversion.
    """

    U: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    d: int
    hessian_bound: Callable[[np.ndarray, np.ndarray, float], float] | None = None
    gaussian_sigmas: np.ndarray | None = None

    def __post_init__(self):
        rng = np.random.default_rng(999)
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


def zz_gaussian(sigmas) -> Potential:
    s = np.atleast_1d(np.asarray(sigmas, dtype=float))
    if np.any(s <= 0):
        raise ValueError("sigmas must be positive")
    inv2 = 1.0 / (s * s)
    bmax = float(np.max(inv2))
    return Potential(
        U=lambda x: 0.5 * np.sum(x * x * inv2, axis=-1),
        grad=lambda x: x * inv2,
        d=s.size,
        hessian_bound=lambda x, v, tau: bmax,
        gaussian_sigmas=s,
    )


def zz_double_well(a: float = 1.0, b: float = 1.0) -> Potential:
    """U(x) = a (x^2 - b)^2 in one dimension."""

    def hb(x, v, tau):
        m = max(abs(float(x[0])), abs(float(x[0]) + tau * float(v[0])))
        return 12.0 * a * m * m + 4.0 * a * b

    return Potential(
        U=lambda x: a * (x[..., 0] ** 2 - b) ** 2,
        grad=lambda x: 4.0 * a * x * (x ** 2 - b),
        d=1,
        hessian_bound=hb,
    )


def zz_tabulated(xs, us) -> Potential:
    """1-D potential interpolated with a cubic spline through (xs, us)."""
    spline = CubicSpline(np.asarray(xs, dtype=float), np.asarray(us, dtype=float))
    dspline = spline.derivative()
    d2 = spline.derivative(2)
    grid = np.linspace(xs[0], xs[-1], 2049)
    bmax = float(np.max(np.abs(d2(grid)))) * 1.05 + 1e-9

    return Potential(
        U=lambda x: spline(x[..., 0]),
        grad=lambda x: dspline(x),
        d=1,
        hessian_bound=lambda x, v, tau: bmax,
    )


@dataclass(frozen=True)
class PhiEps:
    """Gaussian-smoothed Metropolis acceptance; eps = 0 is min{1, r}."""

    eps: float

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")


def phi_eps(rule: PhiEps, r):
    """phi_eps(r) = r [1 - Phi(se/2 + ln r / se)] + [1 - Phi(se/2 - ln r / se)]
    with se = sqrt(eps); phi_0(r) = min{1, r}, phi_eps(0) = 0."""
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if np.any(r < 0):
        raise ValueError("r must be >= 0")
    if rule.eps == 0.0:
        out = np.minimum(1.0, r)
    else:
        se = math.sqrt(rule.eps)
        out = np.zeros_like(r)
        pos = r > 0
        lr = np.log(r[pos])
        out[pos] = (r[pos] * ndtr(-(se / 2 + lr / se))
                    + ndtr(-(se / 2 - lr / se)))
    return float(out[0]) if scalar else out


def _log_phi_eps_exp(eps: float, s):
    """log phi_eps(e^s), numerically stable for large |s|."""
    s = np.asarray(s, dtype=float)
    if eps == 0.0:
        return np.minimum(0.0, s)
    se = math.sqrt(eps)
    a = s + log_ndtr(-(se / 2 + s / se))
    b = log_ndtr(-(se / 2 - s / se))
    return np.logaddexp(a, b)


def penalty_sup_bound(eps: float) -> float:
    """Uniform bound sup_s |lambda^eps - lambda^0| = -log(1 - sqrt(e^eps - 1)),
    defined for eps < log 2."""
    q = math.sqrt(math.expm1(eps))
    if q >= 1.0:
        raise ValueError("bound undefined: need e^eps - 1 < 1")
    return -math.log1p(-q)


_KINDS = ("canonical", "penalty", "barker", "canonical-plus-gamma")


@dataclass(frozen=True)
class IntensitySpec:
    """Per-coordinate switching intensities plus an optional refresh clock.

    kind applies to every coordinate.  gamma is a constant or an x-only
    callable (so gamma - Q gamma = 0 structurally).  refresh_mode 'full'
    resamples v uniformly on {-1,1}^d at rate refresh_rate; 'partial' flips
    each coordinate independently at rate refresh_rate / d.
    """

    kind: str = "canonical"
    eps: float = 0.0
    gamma: float | Callable[[np.ndarray], np.ndarray] = 0.0
    refresh_rate: float = 0.0
    refresh_mode: str = "full"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        if self.kind == "penalty" and self.eps <= 0:
            raise ValueError("penalty requires eps > 0")
        if self.refresh_rate < 0:
            raise ValueError("refresh_rate must be >= 0")
        if self.refresh_mode not in ("full", "partial"):
            raise ValueError("refresh_mode must be 'full' or 'partial'")

    def gamma_at(self, x: np.ndarray):
        if callable(self.gamma):
            return np.asarray(self.gamma(x), dtype=float)
        return np.asarray(self.gamma, dtype=float)


def intensity(spec: IntensitySpec, pot: Potential, i: int, x: np.ndarray,
              v: np.ndarray):
    """lambda_i(x, v) for batched states x, v of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    s = np.asarray(pot.grad(x))[..., i] * v[..., i]
    if spec.kind == "canonical":
        return np.maximum(0.0, s)
    if spec.kind == "penalty":
        # -log phi_eps(density ratio e^{-s}); reduces to (s)_+ at eps = 0 and
        # satisfies lambda(s) - lambda(-s) = s by the balance of phi_eps
        return -_log_phi_eps_exp(spec.eps, -s)
    if spec.kind == "barker":
        return np.logaddexp(0.0, s)  # softplus
    out = np.maximum(0.0, s) + spec.gamma_at(x)
    return out


def total_flip_rate(spec: IntensitySpec, pot: Potential, x, v):
    x = np.asarray(x, dtype=float)
    return sum(intensity(spec, pot, i, x, v) for i in range(pot.d))


@dataclass
class ZigZagTrajectory:
    """Piecewise-linear path: segment k starts at (times[k], X[k]) with
    velocity V[k]; the event ending it has label types[k] (the last segment
    runs to the horizon and has no label)."""

    times: np.ndarray
    X: np.ndarray
    V: np.ndarray
    types: list
    horizon: float

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("event times must be strictly increasing")
        if not np.all(np.isin(self.V, (-1.0, 1.0))):
            raise ValueError("velocities must be +-1")
        if len(self.types) != self.times.size - 1:
            raise ValueError("one event label per interior segment boundary")

    @property
    def n_events(self) -> int:
        return len(self.types)

    def state_at(self, t):
        """Positions and velocities at times t (vectorized)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0) or np.any(t > self.horizon + 1e-12):
            raise ValueError("t outside [0, horizon]")
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, None)
        x = self.X[k] + (t - self.times[k])[:, None] * self.V[k]
        return x, self.V[k]

    def reconstruction_error(self) -> float:
        dt = np.diff(self.times)
        pred = self.X[:-1] + dt[:, None] * self.V[:-1]
        return float(np.max(np.abs(pred - self.X[1:]))) if dt.size else 0.0

    def to_csv(self, path) -> None:
        d = self.X.shape[1]
        head = ("t," + ",".join(f"x_{i+1}" for i in range(d)) + ","
                + ",".join(f"v_{i+1}" for i in range(d)) + ",event_type")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(head + "\n")
            labels = ["start"] + list(self.types)
            for k in range(self.times.size):
                row = [repr(float(self.times[k]))]
                row += [repr(float(val)) for val in self.X[k]]
                row += [repr(float(val)) for val in self.V[k]]
                row.append(labels[k])
                fh.write(",".join(row) + "\n")


class EnvelopeViolation(RuntimeError):
    pass


def _exact_flip_time(a: float, b: float, gamma: float, e: float) -> float:
    """First time Lambda(t) = e for rate (a + b t)_+ + gamma, b > 0."""
    if gamma == 0.0:
        if a >= 0:
            return (-a + math.sqrt(a * a + 2 * b * e)) / b
        t0 = -a / b
        return t0 + math.sqrt(2 * e / b)
    if a >= 0:
        ag = a + gamma
        return (-ag + math.sqrt(ag * ag + 2 * b * e)) / b
    t0 = -a / b
    if e < gamma * t0:
        return e / gamma
    rem = e - gamma * t0
    return t0 + (-gamma + math.sqrt(gamma * gamma + 2 * b * rem)) / b


def _thinned_flip_time(spec: IntensitySpec, pot: Potential, i: int,
                       x: np.ndarray, v: np.ndarray, rng,
                       window: float = 1.0, horizon: float = np.inf) -> float:
    """First arrival of the inhomogeneous rate t -> lambda_i(x + t v, v) by
    thinning against the affine envelope lam(0) + B t, refreshed per window.

    Valid for every intensity kind here: smooth kinds are 1-Lipschitz
    transforms of s(t) = dU_i(x + t v) v_i, so the ray bound B on |s'(t)|
    dominates |d lambda / dt| as well.
    """
    if pot.hessian_bound is None:
        raise EnvelopeViolation("no ray bound available for thinning envelope")
    s = 0.0
    while s < horizon:
        base = float(intensity(spec, pot, i, x + s * v, v))
        B = float(pot.hessian_bound(x + s * v, v, window)) + 1e-12
        u = 0.0
        lam0 = base
        while u < window:
            e = rng.exponential()
            # first point of rate lam0 + B t after u, within the window
            du = (-lam0 + math.sqrt(lam0 * lam0 + 2 * B * e)) / B
            if u + du >= window:
                break
            u += du
            lam0 = base + B * u
            true = float(intensity(spec, pot, i, x + (s + u) * v, v))
            if true > lam0 + 1e-9:
                raise EnvelopeViolation(
                    f"intensity {true} exceeds envelope {lam0} at offset {s + u}")
            if rng.random() * lam0 < true:
                return s + u
        s += window
    return math.inf


def simulate_zigzag(pot: Potential, spec: IntensitySpec, x0, v0, horizon: float,
                    rng: np.random.Generator,
                    force_thinning: bool = False) -> ZigZagTrajectory:
    """Run the process to the horizon; returns the full event skeleton.

    Exact integrated-rate inversion is used for diagonal-Gaussian potentials
    with canonical or canonical-plus-constant-gamma intensities; otherwise
    thinning with the affine envelope.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    d = pot.d
    x = np.array(x0, dtype=float).reshape(d).copy()
    v = np.array(v0, dtype=float).reshape(d).copy()
    if not np.all(np.isin(v, (-1.0, 1.0))):
        raise ValueError("v0 must be +-1 valued")
    exact = (pot.gaussian_sigmas is not None and not force_thinning
             and spec.kind in ("canonical", "canonical-plus-gamma")
             and not callable(spec.gamma))
    gamma_c = float(spec.gamma) if not callable(spec.gamma) else 0.0
    if exact:
        inv2 = 1.0 / (pot.gaussian_sigmas ** 2)
    cap = 1024
    times = np.empty(cap)
    Xs = np.empty((cap, d))
    Vs = np.empty((cap, d))
    types = []
    times[0] = 0.0
    Xs[0] = x
    Vs[0] = v
    count = 1
    t = 0.0
    while True:
        remaining = horizon - t
        if not np.isfinite(np.asarray(pot.grad(x[None, :]))).all():
            raise RuntimeError("non-finite gradient encountered")
        best_dt = math.inf
        best_ev = None
        for i in range(d):
            if exact:
                a = float(x[i] * v[i] * inv2[i])
                dt_i = _exact_flip_time(a, float(inv2[i]), gamma_c,
                                        rng.exponential())
            else:
                dt_i = _thinned_flip_time(spec, pot, i, x, v, rng,
                                          horizon=remaining + 1.0)
            if dt_i < best_dt:
                best_dt = dt_i
                best_ev = ("flip", i)
        if spec.refresh_rate > 0:
            dt_r = rng.exponential() / spec.refresh_rate
            if dt_r < best_dt:
                best_dt = dt_r
                best_ev = ("refresh", None)
        if best_dt >= remaining or best_ev is None:
            break
        t += best_dt
        x += best_dt * v
        kind, i = best_ev
        if kind == "flip":
            v[i] = -v[i]
            label = f"flip({i})"
        else:
            if spec.refresh_mode == "full":
                v = np.where(rng.random(d) < 0.5, -1.0, 1.0)
            else:
                j = int(rng.integers(d))
                v[j] = -v[j]
            label = "refresh"
        if count == cap:
            cap *= 2
            times = np.concatenate([times, np.empty(cap // 2)])
            Xs = np.concatenate([Xs, np.empty((cap // 2, d))])
            Vs = np.concatenate([Vs, np.empty((cap // 2, d))])
        times[count] = t
        Xs[count] = x
        Vs[count] = v
        count += 1
        types.append(label)
    return ZigZagTrajectory(times[:count].copy(), Xs[:count].copy(),
                            Vs[:count].copy(), types, horizon)


_GL3 = np.polynomial.legendre.leggauss(3)
_GL8 = np.polynomial.legendre.leggauss(8)


def trajectory_integral(traj: ZigZagTrajectory, f, degree: int | None = None,
                        t_start: float = 0.0, t_end: float | None = None) -> float:
    """Time integral of f(Z_s) over [t_start, t_end] along the path.

    f(x, v) must be vectorized over a leading axis.  A 3-point
    Gauss-Legendre rule per segment is exact for position-polynomials up to
    degree 4 (pass degree <= 4); otherwise an 8-point rule is used.
    """
    if t_end is None:
        t_end = traj.horizon
    if not 0.0 <= t_start < t_end <= traj.horizon + 1e-12:
        raise ValueError("bad integration window")
    nodes, weights = _GL3 if (degree is not None and degree <= 4) else _GL8
    cuts = traj.times[(traj.times > t_start) & (traj.times < t_end)]
    edges = np.concatenate(([t_start], cuts, [t_end]))
    a, b = edges[:-1], edges[1:]
    half = (b - a) / 2.0
    mid = (a + b) / 2.0
    total = 0.0
    for z, w in zip(nodes, weights):
        ts = mid + z * half
        x, v = traj.state_at(ts)
        total += float(np.dot(w * half, np.asarray(f(x, v), dtype=float)))
    return total


def batch_means_variance(traj: ZigZagTrajectory, f, t_start: float,
                         t_end: float, n_batches: int | None = None,
                         degree: int | None = None) -> float:
    """Asymptotic-variance estimate from block averages of the path integral."""
    span = t_end - t_start
    if n_batches is None:
        n_batches = int(math.sqrt(span))
    if traj.n_events < 2:
        raise ValueError("degenerate trajectory: fewer than 2 events")
    edges = np.linspace(t_start, t_end, n_batches + 1)
    ints = np.array([trajectory_integral(traj, f, degree, a, b)
                     for a, b in zip(edges[:-1], edges[1:])])
    delta = span / n_batches
    means = ints / delta
    return float(delta * means.var(ddof=1))


def estimate_var_continuous(pot: Potential, spec: IntensitySpec, f,
                            horizon: float, replicates: int, lam: float,
                            seed: int, x0=None, degree: int | None = None,
                            grid_dt: float = 0.05):
    """Replicate estimate of the (discounted) asymptotic variance of f.

    Each replicate simulates horizon*1.1 and discards the first tenth as
    burn-in.  lam = 0 uses batch means with floor(sqrt(T)) batches; lam > 0
    samples the path on a uniform grid of step grid_dt and applies the
    discounted-autocovariance plug-in with discrete factor exp(-lam*grid_dt),
    scaled by grid_dt (documented discretization).  Returns (estimate, se,
    per-replicate array).
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates for a standard error")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    d = pot.d
    burn = horizon / 10.0
    per = np.empty(replicates)
    for r in range(replicates):
        rng = replicate_rng(seed, r)
        start = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
        v0 = np.where(rng.random(d) < 0.5, -1.0, 1.0)
        traj = simulate_zigzag(pot, spec, start, v0, horizon + burn, rng)
        if traj.n_events < 2:
            raise ValueError("degenerate trajectory: fewer than 2 events")
        mean = trajectory_integral(traj, f, degree, burn, burn + horizon) / horizon
        fc = lambda x, v: np.asarray(f(x, v), dtype=float) - mean
        if lam == 0.0:
            per[r] = batch_means_variance(traj, fc, burn, burn + horizon,
                                          degree=degree)
        else:
            ts = np.arange(burn, burn + horizon, grid_dt)
            x, v = traj.state_at(ts)
            vals = np.asarray(fc(x, v), dtype=float)
            lam_d = math.exp(-lam * grid_dt)
            from .samplers import estimate_var_lambda
            per[r] = grid_dt * estimate_var_lambda(vals, lam_d).estimate
    est = float(per.mean())
    se = float(per.std(ddof=1) / math.sqrt(replicates))
    return est, se, per


@dataclass(frozen=True)
class SmoothObservable:
    """g(x, v) with an x-gradient; both vectorized over a leading axis."""

    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_x: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def gradient(self, x, v):
        if self.grad_x is not None:
            return np.asarray(self.grad_x(x, v), dtype=float)
        d = x.shape[-1]
        h = 1e-6
        cols = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            cols.append((np.asarray(self.value(x + e, v))
                         - np.asarray(self.value(x - e, v))) / (2 * h))
        return np.stack(cols, axis=-1)


def _flip(v: np.ndarray, i: int) -> np.ndarray:
    w = v.copy()
    w[..., i] = -w[..., i]
    return w


def _all_velocities(d: int) -> np.ndarray:
    out = np.array(np.meshgrid(*([[-1.0, 1.0]] * d), indexing="ij"))
    return out.reshape(d, -1).T


def generator_apply(pot: Potential, spec: IntensitySpec, g: SmoothObservable,
                    x: np.ndarray, v: np.ndarray):
    """(Lg)(x, v) = <grad_x g, v> + sum_i lambda_i [g(x, flip_i v) - g(x, v)]
    plus the refresh term; batched over the leading axis."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    d = pot.d
    out = np.sum(g.gradient(x, v) * v, axis=-1)
    gv = np.asarray(g.value(x, v), dtype=float)
    for i in range(d):
        out = out + intensity(spec, pot, i, x, v) * (
            np.asarray(g.value(x, _flip(v, i)), dtype=float) - gv)
    lb = spec.refresh_rate
    if lb > 0:
        if spec.refresh_mode == "full":
            vs = _all_velocities(d)
            mean = np.zeros_like(gv)
            for w in vs:
                mean += np.asarray(g.value(x, np.broadcast_to(w, v.shape)),
                                   dtype=float)
            mean /= vs.shape[0]
            out = out + lb * (mean - gv)
        else:
            for i in range(d):
                out = out + (lb / d) * (
                    np.asarray(g.value(x, _flip(v, i)), dtype=float) - gv)
    return out


def _gh_nodes(pot: Potential, m: int):
    """Tensor quadrature over x for mu(dx) propto exp(-U); normalized weights.

    Per axis: Gauss-Legendre on [-L, 0] and [0, L] with the density folded
    into the weights.  Splitting at 0 keeps convergence spectral for the
    canonical rate's kink (which sits at x_i = 0 for centered Gaussians).
    """
    if pot.d > 8:
        raise ValueError("quadrature restricted to d <= 8")
    t, w = np.polynomial.legendre.leggauss(m)
    sigmas = (pot.gaussian_sigmas if pot.gaussian_sigmas is not None
              else np.full(pot.d, 3.0))
    axes_x, axes_w = [], []
    for s in sigmas:
        L = 8.0 * s
        xp = (t + 1.0) / 2.0 * L
        wp = w * L / 2.0
        xs = np.concatenate([-xp[::-1], xp])
        ws = np.concatenate([wp[::-1], wp])
        axes_x.append(xs)
        axes_w.append(ws)
    grids = np.meshgrid(*axes_x, indexing="ij")
    x = np.stack([gr.ravel() for gr in grids], axis=-1)
    wgrids = np.meshgrid(*axes_w, indexing="ij")
    weight = np.ones(x.shape[0])
    for gw in wgrids:
        weight = weight * gw.ravel()
    weight = weight * np.exp(-np.asarray(pot.U(x)))
    return x, weight / weight.sum()


def expectation_mu(pot: Potential, fn, m: int = 40):
    """E_mu[fn(x, v)] by tensor quadrature over x and exact sum over v."""
    x, wx = _gh_nodes(pot, m)
    vs = _all_velocities(pot.d)
    total = 0.0
    for w in vs:
        vv = np.broadcast_to(w, x.shape).copy()
        total += float(np.dot(wx, np.asarray(fn(x, vv), dtype=float)))
    return total / vs.shape[0]


def dirichlet_gap_quadrature(pot: Potential, spec1: IntensitySpec,
                             spec2: IntensitySpec, g: SmoothObservable,
                             m: int = 40) -> float:
    """<g, -(L1 - L2) Q g>_mu by quadrature; >= 0 certifies that the spec1
    process has the larger Dirichlet form (hence the smaller variance for
    flip-symmetric observables).

    Evaluated at two resolutions (m and m + 16 nodes per axis); a relative
    disagreement above 1e-4 raises (grid too coarse).
    """
    if pot.d > 2:
        raise ValueError("gap quadrature supports d in {1, 2}")

    def qg(x, v):
        return np.asarray(g.value(x, -v), dtype=float)

    qobs = SmoothObservable(qg, lambda x, v: g.gradient(x, -v))

    def integrand(x, v):
        diff = (generator_apply(pot, spec2, qobs, x, v)
                - generator_apply(pot, spec1, qobs, x, v))
        return np.asarray(g.value(x, v), dtype=float) * diff

    coarse = expectation_mu(pot, integrand, m)
    fine = expectation_mu(pot, integrand, m + 16)
    scale = max(1.0, abs(fine))
    if abs(fine - coarse) > 1e-4 * scale:
        raise ValueError(
            f"quadrature not converged: {coarse!r} vs {fine!r}")
    return fine
