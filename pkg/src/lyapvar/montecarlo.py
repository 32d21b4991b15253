"""Ground-truth simulation of the matrix products and Riccati chains.

Everything is vectorized over replicas with numpy, chunked for memory, and
seeded through numpy SeedSequence spawning so results are bit-reproducible
for a given (parameters, seed) pair regardless of chunking.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ensembles import MatrixEnsemble, ParameterLaw
from .sl2core import RotationVariant

__all__ = [
    "EffectiveSampleCollapse",
    "CumulantEstimate",
    "GleEstimate",
    "DensityHistogram",
    "OuEstimate",
    "product_cumulants",
    "process_cumulants",
    "gle_direct",
    "invariant_density",
    "furstenberg_lyapunov",
    "ou_selftest",
    "impurity_increment_moments",
]

_X0 = (0.6, 0.8)  # generic unit start vector (avoids exceptional directions)


class EffectiveSampleCollapse(RuntimeError):
    """Importance weights collapsed: moment estimate unreliable."""


@dataclass(frozen=True)
class CumulantEstimate:
    mean_rate: float
    mean_se: float
    var_rate: float
    var_se: float
    span: float          # number of steps, or physical length
    unit: str            # "step" or "length"
    replicas: int
    seed: int


@dataclass(frozen=True)
class GleEstimate:
    rate: float          # (1/n) ln <||Pi_n x0||^q>
    se: float
    ess: float
    n: int
    q: float
    replicas: int
    seed: int


@dataclass(frozen=True)
class OuEstimate:
    gamma1: float
    gamma1_se: float
    gamma2: float
    gamma2_se: float
    gle_rate: float
    gle_se: float
    q: float


# ---------------------------------------------------------------------------
# vector kernels
# ---------------------------------------------------------------------------

def _apply_shear(x, y, u):
    return x + u * y, y


def _apply_diag(x, y, w):
    e = np.exp(w)
    return x * e, y / e


def _apply_rotation(x, y, theta):
    c, s = np.cos(theta), np.sin(theta)
    return c * x - s * y, s * x + c * y


def _apply_boost_stable(x, y, a, xi):
    """x, y <- Ktilde(a) (x, y) with the e^{|a|} growth moved into xi."""
    aa = np.abs(a)
    sgn = np.sign(a)
    damp = np.exp(-2.0 * aa)
    xp = 0.5 * ((x + sgn * y) + damp * (x - sgn * y))
    yp = 0.5 * ((sgn * x + y) - damp * (sgn * x - y))
    return xp, yp, xi + aa


def _apply_matrix(x, y, theta, w, u, variant, xi):
    x, y = _apply_shear(x, y, u)
    x, y = _apply_diag(x, y, w)
    if variant is RotationVariant.COMPACT:
        x, y = _apply_rotation(x, y, theta)
        return x, y, xi
    return _apply_boost_stable(x, y, theta, xi)


def _renorm(x, y, xi):
    n = np.hypot(x, y)
    return x / n, y / n, xi + np.log(n)


def _chunk_seeds(seed: int, chunks: int):
    return np.random.SeedSequence(seed).spawn(chunks)


def _product_logs_chunk(e: MatrixEnsemble, n: int, replicas: int, rng,
                        renorm_every: int, x0) -> np.ndarray:
    x = np.full(replicas, x0[0], dtype=float)
    y = np.full(replicas, x0[1], dtype=float)
    xi = np.zeros(replicas)
    for step in range(n):
        theta, w, u = e.sample_params(rng, replicas)
        x, y, xi = _apply_matrix(x, y, theta, w, u, e.variant, xi)
        if (step + 1) % renorm_every == 0:
            x, y, xi = _renorm(x, y, xi)
    x, y, xi = _renorm(x, y, xi)
    return xi


def _iter_chunks(replicas: int, chunk: int):
    done = 0
    while done < replicas:
        size = min(chunk, replicas - done)
        yield done, size
        done += size


# ---------------------------------------------------------------------------
# fixed step-count product
# ---------------------------------------------------------------------------

def product_cumulants(e: MatrixEnsemble, n: int, replicas: int, seed: int,
                      renorm_every: int = 50, x0=_X0,
                      chunk: int = 200_000) -> CumulantEstimate:
    """Per-step mean and variance of ln ||Pi_n x0|| over i.i.d. replicas."""
    if n < 1:
        raise ValueError("need at least one step")
    seeds = _chunk_seeds(seed, math.ceil(replicas / chunk))
    logs = np.empty(replicas)
    for idx, (off, size) in enumerate(_iter_chunks(replicas, chunk)):
        rng = np.random.default_rng(seeds[idx])
        logs[off:off + size] = _product_logs_chunk(e, n, size, rng, renorm_every, x0)
    return _cumulants_from_logs(logs, float(n), "step", replicas, seed)


def _cumulants_from_logs(logs: np.ndarray, span: float, unit: str,
                         replicas: int, seed: int) -> CumulantEstimate:
    r = len(logs)
    mean = float(np.mean(logs))
    var = float(np.var(logs, ddof=1)) if r > 1 else 0.0
    mean_se = math.sqrt(var / r) if r > 1 else 0.0
    if r > 3:
        m4 = float(np.mean((logs - mean) ** 4))
        var_var = max((m4 - (r - 3) / (r - 1) * var * var) / r, 0.0)
        var_se = math.sqrt(var_var)
    else:
        var_se = 0.0
    return CumulantEstimate(
        mean_rate=mean / span, mean_se=mean_se / span,
        var_rate=var / span, var_se=var_se / span,
        span=span, unit=unit, replicas=replicas, seed=seed,
    )


# ---------------------------------------------------------------------------
# fixed physical length (Poisson number of impurities)
# ---------------------------------------------------------------------------

def _process_logs_chunk(e: MatrixEnsemble, length: float, replicas: int, rng,
                        burn_steps: int, x0) -> np.ndarray:
    if e.theta_law.name != "exponential":
        raise ValueError("fixed-length simulation needs exponentially distributed angles")
    k = e.k
    x = np.full(replicas, x0[0], dtype=float)
    y = np.full(replicas, x0[1], dtype=float)
    xi = np.zeros(replicas)
    # direction burn-in: a fixed number of full transfer steps
    for _ in range(burn_steps):
        theta, w, u = e.sample_params(rng, replicas)
        x, y, xi = _apply_matrix(x, y, theta, w, u, e.variant, xi)
        x, y, xi = _renorm(x, y, xi)
    xi = np.zeros(replicas)

    pos = np.zeros(replicas)
    active = np.ones(replicas, dtype=bool)
    compact = e.variant is RotationVariant.COMPACT
    it = 0
    while np.any(active):
        gaps = e.theta_law.sample(rng, replicas) / k
        free = np.where(active, np.minimum(gaps, length - pos), 0.0)
        ang = k * free
        if compact:
            x, y = _apply_rotation(x, y, ang)
        else:
            x, y, xi = _apply_boost_stable(x, y, ang, xi)
        pos = pos + free
        hit = active & (free == gaps) & (pos < length)
        w = e.w_law.sample(rng, replicas)
        u = e.u_law.sample(rng, replicas)
        if np.any(hit):
            xh, yh = _apply_shear(x[hit], y[hit], u[hit])
            xh, yh = _apply_diag(xh, yh, w[hit])
            x[hit] = xh
            y[hit] = yh
        active = active & (pos < length * (1 - 1e-15))
        it += 1
        if it % 50 == 0:
            x, y, xi = _renorm(x, y, xi)
    x, y, xi = _renorm(x, y, xi)
    return xi


def process_cumulants(e: MatrixEnsemble, length: float, replicas: int, seed: int,
                      burn_steps: int = 50, x0=_X0,
                      chunk: int = 200_000) -> CumulantEstimate:
    """Per-length cumulants of ln ||Pi_{N(x)} x0|| at fixed x, free tail included."""
    seeds = _chunk_seeds(seed, math.ceil(replicas / chunk))
    logs = np.empty(replicas)
    for idx, (off, size) in enumerate(_iter_chunks(replicas, chunk)):
        rng = np.random.default_rng(seeds[idx])
        logs[off:off + size] = _process_logs_chunk(e, length, size, rng, burn_steps, x0)
    return _cumulants_from_logs(logs, float(length), "length", replicas, seed)


# ---------------------------------------------------------------------------
# direct moment estimation (generalized Lyapunov exponent)
# ---------------------------------------------------------------------------

def gle_direct(e: MatrixEnsemble, n: int, replicas: int, q: float, seed: int,
               renorm_every: int = 50, x0=_X0, chunk: int = 200_000,
               min_ess: float = 30.0) -> GleEstimate:
    """(1/n) ln < ||Pi_n x0||^q > by log-sum-exp over replicas."""
    if q == 0.0:
        return GleEstimate(0.0, 0.0, float(replicas), n, q, replicas, seed)
    if n > 500:
        warnings.warn("large n: moments are dominated by rare configurations",
                      RuntimeWarning, stacklevel=2)
    seeds = _chunk_seeds(seed, math.ceil(replicas / chunk))
    m = -np.inf   # running max of q*xi
    s1 = 0.0      # sum exp(q xi - m)
    s2 = 0.0      # sum exp(2(q xi - m))
    for idx, (off, size) in enumerate(_iter_chunks(replicas, chunk)):
        rng = np.random.default_rng(seeds[idx])
        xi = _product_logs_chunk(e, n, size, rng, renorm_every, x0)
        t = q * xi
        m_new = max(m, float(np.max(t)))
        if m_new > m and np.isfinite(m):
            shift = math.exp(m - m_new)
            s1 *= shift
            s2 *= shift * shift
        m = m_new
        w = np.exp(t - m)
        s1 += float(np.sum(w))
        s2 += float(np.sum(w * w))
    r = replicas
    ess = s1 * s1 / s2 if s2 > 0 else 0.0
    if ess < min_ess:
        raise EffectiveSampleCollapse(
            f"effective sample size {ess:.1f} < {min_ess}; reduce n or |q|")
    ln_mean = m + math.log(s1 / r)
    var_w = max(s2 - s1 * s1 / r, 0.0) / (r - 1)
    se_ln = math.sqrt(var_w) * math.sqrt(r) / s1
    return GleEstimate(rate=ln_mean / n, se=se_ln / n, ess=float(ess),
                       n=n, q=q, replicas=replicas, seed=seed)


# ---------------------------------------------------------------------------
# invariant density of the Riccati chain
# ---------------------------------------------------------------------------

@dataclass
class DensityHistogram:
    """Histogram of the stationary direction arctan(z) plus tail statistics."""

    edges: np.ndarray            # bin edges in arctan(z), over (-pi/2, pi/2)
    counts: np.ndarray
    samples: int
    thresholds: np.ndarray       # z thresholds used for the tail statistic
    tail_right: float            # lim z^2 f(z), right tail
    tail_right_se: float
    tail_left: float
    tail_left_se: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def tail_statistic(self) -> float:
        return 0.5 * (self.tail_left + self.tail_right)

    @property
    def tail_se(self) -> float:
        return 0.5 * math.hypot(self.tail_left_se, self.tail_right_se)

    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.counts)
        return c / c[-1]

    def ks_distance(self, cdf_of_z) -> float:
        """sup-distance between the binned empirical CDF and cdf_of_z."""
        zedges = np.tan(self.edges[1:-1])
        ana = np.asarray([cdf_of_z(z) for z in zedges])
        emp = self.cdf()[:-1]
        return float(np.max(np.abs(emp - ana)))


def invariant_density(e: MatrixEnsemble, burn_in: int, samples: int, seed: int,
                      chains: int = 2048, bins: int = 2000,
                      thresholds=None) -> DensityHistogram:
    """Stationary histogram of z_n on the compactified axis, with Rice tails."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = np.full(chains, _X0[0])
    y = np.full(chains, _X0[1])

    def step(x, y):
        theta, w, u = e.sample_params(rng, chains)
        x, y, _ = _apply_matrix(x, y, theta, w, u, e.variant, 0.0)
        n = np.hypot(x, y)
        return x / n, y / n

    for _ in range(burn_in):
        x, y = step(x, y)

    if thresholds is None:
        scale = max(e.k, 1.0)
        thresholds = scale * np.array([8.0, 16.0, 32.0])
    thresholds = np.asarray(thresholds, dtype=float)

    edges = np.linspace(-0.5 * math.pi, 0.5 * math.pi, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    above = np.zeros(len(thresholds), dtype=np.int64)
    below = np.zeros(len(thresholds), dtype=np.int64)
    total = 0
    sweeps = math.ceil(samples / chains)
    for _ in range(sweeps):
        x, y = step(x, y)
        ang = np.arctan2(x, y)
        ang = np.where(ang > 0.5 * math.pi, ang - math.pi, ang)
        ang = np.where(ang <= -0.5 * math.pi, ang + math.pi, ang)
        counts += np.histogram(ang, bins=edges)[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(y != 0.0, x / y, np.inf * np.sign(x))
        for j, t in enumerate(thresholds):
            above[j] += int(np.sum(z > t))
            below[j] += int(np.sum(z < -t))
        total += chains

    def tail(countvec):
        # P(|Z| > T) ~ N / T for each threshold; combine by inverse variance
        est = thresholds * countvec / total
        sds = thresholds * np.sqrt(np.maximum(countvec, 1.0)) / total
        wgt = 1.0 / sds ** 2
        return float(np.sum(wgt * est) / np.sum(wgt)), float(1.0 / math.sqrt(np.sum(wgt)))

    tr, tr_se = tail(above)
    tl, tl_se = tail(below)
    return DensityHistogram(
        edges=edges, counts=counts, samples=total,
        thresholds=thresholds,
        tail_right=tr, tail_right_se=tr_se,
        tail_left=tl, tail_left_se=tl_se,
        diagnostics={"chains": chains, "burn_in": burn_in},
    )


# ---------------------------------------------------------------------------
# Furstenberg average of the cocycle
# ---------------------------------------------------------------------------

def furstenberg_lyapunov(e: MatrixEnsemble, samples: int, seed: int,
                         burn_in: int = 200, chains: int = 1024):
    """lambda_1 per step as the stationary average of ln|c z + d|."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = np.full(chains, _X0[0])
    y = np.full(chains, _X0[1])
    sweeps = math.ceil(samples / chains)
    acc = np.zeros(chains)
    for i in range(burn_in + sweeps):
        theta, w, u = e.sample_params(rng, chains)
        # increment ln|c z + d| = ln|c x + d y| - ln|y| before updating z;
        # entries of K(theta)A(w)N(u) (or the Ktilde variant), vectorized
        ew = np.exp(w)
        if e.variant is RotationVariant.COMPACT:
            sn, cs = np.sin(theta), np.cos(theta)
            sign = -1.0
        else:
            sn, cs = np.sinh(theta), np.cosh(theta)
            sign = +1.0
        c_ = ew * sn
        d_ = u * ew * sn + cs / ew
        inc = np.log(np.abs(c_ * x + d_ * y)) - np.log(np.abs(y))
        a_ = ew * cs
        b_ = u * ew * cs + sign * sn / ew
        x, y = a_ * x + b_ * y, c_ * x + d_ * y
        n = np.hypot(x, y)
        x, y = x / n, y / n
        if i >= burn_in:
            acc += inc
    means = acc / sweeps
    value = float(np.mean(means))
    se = float(np.std(means, ddof=1) / math.sqrt(chains))
    return value, se


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck calibration oracle
# ---------------------------------------------------------------------------

def ou_selftest(kappa: float, horizon: float, dt: float, replicas: int,
                seed: int, q: float = 0.5) -> OuEstimate:
    """Euler-Maruyama for dz = -2 kappa z dt + sqrt(2) dW and A = int z^2 dt.

    Known values: gamma1 = 1/(2 kappa), gamma2 = 1/(4 kappa^3) and
    Lambda(q) = kappa - sqrt(kappa^2 - q) for q < kappa^2.
    """
    if dt * kappa > 0.05:
        warnings.warn("dt not small against 1/kappa", RuntimeWarning, stacklevel=2)
    if q >= kappa * kappa:
        raise ValueError("need q < kappa^2 for a finite moment")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    steps = int(round(horizon / dt))
    decay = 1.0 - 2.0 * kappa * dt
    var_stat = 2.0 * dt / (1.0 - decay * decay)
    z = rng.normal(0.0, math.sqrt(var_stat), replicas)
    a = np.zeros(replicas)
    for _ in range(steps):
        z_new = decay * z + math.sqrt(2.0 * dt) * rng.standard_normal(replicas)
        a += 0.5 * dt * (z * z + z_new * z_new)
        z = z_new
    t = float(steps) * dt
    mean = float(np.mean(a))
    var = float(np.var(a, ddof=1))
    g1, g1_se = mean / t, math.sqrt(var / replicas) / t
    m4 = float(np.mean((a - mean) ** 4))
    var_var = max((m4 - (replicas - 3) / (replicas - 1) * var * var) / replicas, 0.0)
    g2, g2_se = var / t, math.sqrt(var_var) / t
    # direct moment estimate of Lambda(q)
    tq = q * a
    m = float(np.max(tq))
    w = np.exp(tq - m)
    s1 = float(np.sum(w))
    s2 = float(np.sum(w * w))
    ln_mean = m + math.log(s1 / replicas)
    var_w = max(s2 - s1 * s1 / replicas, 0.0) / (replicas - 1)
    se_ln = math.sqrt(var_w) * math.sqrt(replicas) / s1
    return OuEstimate(g1, g1_se, g2, g2_se, ln_mean / t, se_ln / t, q)


# ---------------------------------------------------------------------------
# per-impurity increments (phase-formalism check)
# ---------------------------------------------------------------------------

def impurity_increment_moments(e: MatrixEnsemble, impurities: int, seed: int,
                               chains: int = 4096, burn: int = 64):
    """Mean and second moment of the log-norm jump at impurities (E > 0)."""
    if e.variant is not RotationVariant.COMPACT:
        raise ValueError("increment measurement assumes the rotation variant")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = np.full(chains, _X0[0])
    y = np.full(chains, _X0[1])
    total = 0
    s1 = 0.0
    s2 = 0.0
    for i in range(burn + impurities):
        theta = e.theta_law.sample(rng, chains)
        x, y = _apply_rotation(x, y, theta)
        w = e.w_law.sample(rng, chains)
        u = e.u_law.sample(rng, chains)
        norm0 = np.hypot(x, y)
        x, y = _apply_shear(x, y, u)
        x, y = _apply_diag(x, y, w)
        norm1 = np.hypot(x, y)
        inc = np.log(norm1 / norm0)
        x, y = x / norm1, y / norm1
        if i >= burn:
            s1 += float(np.sum(inc))
            s2 += float(np.sum(inc * inc))
            total += chains
    mean = s1 / total
    second = s2 / total
    mean_se = math.sqrt(max(second - mean * mean, 0.0) / total)
    return mean, second, mean_se
