"""Mellin transform of the invariant density of Ktilde(theta)A(w) chains.

The integer-argument Mellin transform fcheck(s) = <z^s> of the stationary
Riccati density satisfies the three-term recurrence

    -fcheck(s+1) - (L(2is)/s) fcheck(s) + k^2 fcheck(s-1) = 0,

with L(2is) = rho (1 - <exp(2 s w)>) real.  The recurrence alone does not
single out the physical solution: its two-sided minimal solution is not the
transform of a positive density (the minimal branches alternate in sign,
while the physical moments are positive and eventually grow faster than the
minimal branch decays).  The transform is therefore computed from the
stationary law itself and the recurrence is kept as an a-posteriori
residual check.

In u = ln(z/k) the chain between jumps is the deterministic flow
du/dx = -2 k sinh(u), which in y = ln tanh(|u|/2) is a straight drift of
rate 2k toward the fixed point.  Averaging over the exponential waiting
time therefore turns one step of the embedded chain (jump u -> u + 2w,
then flow for an Exp(rho) length) into

    G'  =  F [ J G ]          (acting on the CDF G of u),

where J is the jump convolution and F is an explicit one-sided exponential
kernel along y on each branch of the fixed point, plus the exact
"flow from beyond the window" term tanh(u/2)^(rho/2k) on the positive
branch.  The stationary CDF solves the (nonsingular) linear system
(I - F J) G = const, on a mesh graded into the fixed point, where the
density has an integrable |u|^(rho/2k - 1) cusp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensembles import MgfUndefined, ParameterLaw

__all__ = [
    "MgfWindowExceeded",
    "RecurrenceUnstable",
    "MellinSolution",
    "invariant_mellin",
    "lyapunov_mellin",
]


class MgfWindowExceeded(ValueError):
    """<exp(2 s w)> does not exist over the requested window."""


class RecurrenceUnstable(RuntimeError):
    """The stationary solve failed to satisfy the moment recurrence."""


@dataclass
class MellinSolution:
    window: int                     # fcheck known on -window..window
    svals: np.ndarray               # integer arguments
    fcheck: np.ndarray              # values, normalized fcheck(0)=1
    k: float
    rho: float
    w_law: ParameterLaw
    u_grid: np.ndarray              # mesh in u = ln(z/k)
    cdf: np.ndarray                 # stationary CDF of u on the mesh
    jump_offsets: np.ndarray        # delta = 2w support used by the solver
    jump_weights: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, s: int) -> float:
        s = int(s)
        if abs(s) > self.window:
            raise IndexError(f"s={s} outside the computed window")
        return float(self.fcheck[s + self.window])

    def jump_mgf(self, s: float) -> float:
        """<exp(2 s w)> of the jump law as discretized by the solver."""
        return float(np.sum(self.jump_weights * np.exp(s * self.jump_offsets)))

    def levy_at_imag(self, s: float) -> float:
        """L(2 i s) = rho (1 - <exp(2 s w)>)."""
        return self.rho * (1.0 - self.jump_mgf(s))

    def residual(self, s: int) -> float:
        """Recurrence residual at an integer (limit form at s=0)."""
        if s == 0:
            c0 = -self.rho * float(np.sum(self.jump_weights * self.jump_offsets))
            return -self[1] - c0 * self[0] + self.k ** 2 * self[-1]
        return (-self[s + 1] - self.levy_at_imag(s) / s * self[s]
                + self.k ** 2 * self[s - 1])

    def max_relative_residual(self) -> float:
        out = 0.0
        for s in range(-self.window + 1, self.window):
            scale = max(abs(self[s + 1]), abs(self.k ** 2 * self[s - 1]), 1.0)
            out = max(out, abs(self.residual(s)) / scale)
        return out


# ---------------------------------------------------------------------------
# jump law as weighted offsets delta = 2w
# ---------------------------------------------------------------------------

def _jump_atoms(law: ParameterLaw, h: float):
    """(offsets, weights) of delta = 2w; atoms exact, densities binned at h."""
    if law.name == "dirac":
        return np.array([2.0 * law.params[0]]), np.array([1.0])
    if law.name == "two_point":
        v1, p1, v2 = law.params
        return np.array([2.0 * v1, 2.0 * v2]), np.array([p1, 1.0 - p1])
    if law.name == "gaussian":
        m, var = law.params
        mean, sd = 2.0 * m, 2.0 * math.sqrt(var)
        if sd < 1e-12:
            return np.array([mean]), np.array([1.0])
        step = min(4.0 * h, sd / 16.0)
        span = int(math.ceil(9.0 * sd / step))
        ms = np.arange(-span, span + 1)
        from math import erf
        edges = (ms[:, None] + np.array([[-0.5, 0.5]])) * step
        z = (edges + 0.0 - 0.0) / (sd * math.sqrt(2.0))
        cdf = 0.5 * (1.0 + np.vectorize(erf)(z))
        w = cdf[:, 1] - cdf[:, 0]
        keep = w > 1e-16
        return mean + ms[keep] * step, w[keep] / np.sum(w[keep])
    if law.name == "exponential":
        vbar = law.params[0]
        scale = 2.0 * vbar
        step = min(4.0 * h, scale / 16.0)
        span = int(math.ceil(40.0 * scale / step))
        ms = np.arange(0, span + 1)
        hi = np.exp(-np.maximum(ms - 0.5, 0.0) * step / scale)
        lo = np.exp(-(ms + 0.5) * step / scale)
        w = hi - lo
        keep = w > 1e-16
        # mass-weighted centers keep the mean exact to O(step^2)
        return ms[keep] * step, w[keep] / np.sum(w[keep])
    raise ValueError(law.name)


# ---------------------------------------------------------------------------
# mesh and the one-step transfer operator on the CDF
# ---------------------------------------------------------------------------

def _branch_mesh(u_max: float, core: float, h_tail: float, ratio: float = 1.05):
    """Graded nodes on (0, u_max]: geometric into the cusp, linear tails."""
    geo = [1e-9]
    while geo[-1] < min(core, u_max):
        geo.append(min(geo[-1] * ratio, geo[-1] + h_tail))
    lin = list(np.arange(geo[-1] + h_tail, u_max, h_tail))
    nodes = np.array(geo + lin + [u_max])
    return np.unique(nodes)


def _flow_matrix(upos: np.ndarray, rho: float, k: float):
    """Exponential waiting-time average along one branch.

    Returns (F, c) with (F H)(u_i) + c_i = E_tau H(Phi_{-tau}(u_i)) for H
    given at the branch nodes, H treated as linear in y between nodes;
    c_i = tanh(u_i/2)^(rho/2k) is the exact mass flowing in from beyond the
    branch (positive branch only; pass the mirrored sign for the other).
    """
    n = len(upos)
    y = np.log(np.tanh(0.5 * upos))           # increasing, negative
    beta = rho / (2.0 * k)
    f = np.zeros((n, n))
    row = np.zeros(n)
    # J(y_i) = int_{y_i}^{0} e^{-beta (y'-y_i)} H(y') dy' accumulated from the top;
    # beyond the last node H is extended constant at H(y_n-1)
    # top sliver [y_{n-1}, 0] with constant H:
    row[n - 1] = (1.0 - math.exp(beta * y[n - 1])) / beta
    f[n - 1] = row * beta
    for i in range(n - 2, -1, -1):
        h = y[i + 1] - y[i]
        decay = math.exp(-beta * h)
        row = row * decay
        # segment [y_i, y_{i+1}] with H linear: H = H_i + (H_{i+1}-H_i) t/h
        e1 = -math.expm1(-beta * h) / beta                     # int e^{-beta t} dt
        e2 = (h * decay - (e1 - h)) / beta if False else None
        # int t e^{-beta t} dt over [0,h] = (1 - (1+beta h) e^{-beta h})/beta^2
        et = (1.0 - (1.0 + beta * h) * decay) / (beta * beta)
        row[i] += e1 - et / h
        row[i + 1] += et / h
        f[i] = row * beta
    c = np.tanh(0.5 * upos) ** beta
    return f, c


def _jump_matrix(u_all: np.ndarray, offsets: np.ndarray, weights: np.ndarray):
    """H(u_i) = sum_m w_m G(u_i - d_m) via linear interpolation on the mesh.

    Returns (J, c) with H = J G + c, the constant carrying the G=1 tail
    beyond the right end of the mesh.
    """
    n = len(u_all)
    jm = np.zeros((n, n))
    const = np.zeros(n)
    for off, wgt in zip(offsets, weights):
        x = u_all - off
        idx = np.searchsorted(u_all, x)
        inside = (idx > 0) & (idx < n)
        right = idx >= n
        const[right] += wgt
        ii = np.nonzero(inside)[0]
        jj = idx[inside]
        x0 = u_all[jj - 1]
        x1 = u_all[jj]
        t = (x[inside] - x0) / (x1 - x0)
        np.add.at(jm, (ii, jj - 1), wgt * (1.0 - t))
        np.add.at(jm, (ii, jj), wgt * t)
        # idx == 0 (left of mesh): G = 0 contributes nothing
    return jm, const


def _stationary_cdf(u_all, rho, k, offsets, weights):
    """Solve (I - F J) G = F c_J + c_F on the full mesh."""
    n = len(u_all)
    neg = u_all < 0
    pos = u_all > 0
    uneg = -u_all[neg][::-1]          # mirrored, increasing
    upos = u_all[pos]
    f_pos, c_pos = _flow_matrix(upos, rho, k)
    f_neg, _ = _flow_matrix(uneg, rho, k)
    jmat, jconst = _jump_matrix(u_all, offsets, weights)

    fmat = np.zeros((n, n))
    cflow = np.zeros(n)
    ip = np.nonzero(pos)[0]
    iN = np.nonzero(neg)[0]
    fmat[np.ix_(ip, ip)] = f_pos
    cflow[ip] = c_pos
    # negative branch: mirror (nodes reversed), no inflow-from-beyond term
    fmat[np.ix_(iN, iN)] = f_neg[::-1, ::-1]

    a = np.eye(n) - fmat @ jmat
    b = fmat @ jconst + cflow
    g = np.linalg.solve(a, b)
    return g


# ---------------------------------------------------------------------------
# moments of the solved CDF
# ---------------------------------------------------------------------------

def _segment_exp_integral(a, b, fa, fb, s):
    """int_a^b e^{s u} (linear f) du, stable for small s*h."""
    h = b - a
    if h <= 0:
        return 0.0
    x = s * h
    if abs(x) < 1e-8:
        return math.exp(s * a) * h * (0.5 * (fa + fb) + x * (fa + 2.0 * fb) / 6.0)
    e1 = math.expm1(x) / x
    et = (math.exp(x) - e1) / x if False else (math.exp(x) * (x - 1.0) + 1.0) / (x * x)
    return math.exp(s * a) * h * (fa * (e1 - et) + fb * et)


_NOISE_FLOOR = 5e-14   # absolute CDF accuracy of the linear solve


def _moment(u_all, g, s):
    """fcheck(s)/k^s = 1 + s [ int_0^inf e^{su}(1-G) - int_-inf^0 e^{su} G ].

    Segments where the CDF weight is below the solver noise floor are
    dropped: there the computed tail is roundoff, and exp(s u) would
    amplify it without bound.
    """
    total = 1.0
    for i in range(len(u_all) - 1):
        a, b = u_all[i], u_all[i + 1]
        if b <= 0:
            fa, fb = g[i], g[i + 1]
            if max(fa, fb) < _NOISE_FLOOR:
                continue
            total -= s * _segment_exp_integral(a, b, fa, fb, s)
        elif a >= 0:
            fa, fb = 1.0 - g[i], 1.0 - g[i + 1]
            if max(fa, fb) < _NOISE_FLOOR:
                continue
            total += s * _segment_exp_integral(a, b, fa, fb, s)
        else:
            # segment crossing u = 0: split at the origin
            g0 = g[i] + (g[i + 1] - g[i]) * (0.0 - a) / (b - a)
            total -= s * _segment_exp_integral(a, 0.0, g[i], g0, s)
            total += s * _segment_exp_integral(0.0, b, 1.0 - g0, 1.0 - g[i + 1], s)
    return total


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _window_check(w_law: ParameterLaw, smax: float):
    lo, hi = w_law.mgf_window()
    if 2.0 * smax >= hi or -2.0 * smax <= lo:
        raise MgfWindowExceeded(
            f"<exp(2 s w)> must exist up to |s|={smax}; window of 2s is ({lo}, {hi})")


def _is_zero_law(law: ParameterLaw) -> bool:
    return law.mean() == 0.0 and law.variance() == 0.0


def _solve_on_mesh(rho, k, u_max, h_tail, ratio, offsets, weights):
    mesh_pos = _branch_mesh(u_max, 1.0, h_tail, ratio)
    u_all = np.concatenate([-mesh_pos[::-1], mesh_pos])
    g = _stationary_cdf(u_all, rho, k, offsets, weights)
    return u_all, g


def invariant_mellin(w_law: ParameterLaw, rho: float, k: float, S: int,
                     tol: float = 1e-4, u_max: float = None,
                     h_tail: float = None) -> MellinSolution:
    """Integer-argument Mellin transform of the invariant density.

    Solves the stationary CDF of the log-Riccati variable with the exact
    between-jump flow (mesh graded into the fixed-point cusp and widened
    until every requested moment is tail-converged), evaluates
    fcheck(s) = k^s <exp(s u)> with mesh-size extrapolation, and verifies
    the three-term recurrence as an a-posteriori residual bound `tol`.
    """
    if S < 1:
        raise ValueError("window must contain s = +-1")
    if k <= 0 or rho <= 0:
        raise ValueError("need k > 0 and rho > 0")
    _window_check(w_law, S + 1)
    svals = np.arange(-S, S + 1)
    if _is_zero_law(w_law):
        # free fixed point z = k: fcheck(s) = k^s exactly
        return MellinSolution(
            window=S, svals=svals, fcheck=np.power(k, svals.astype(float)),
            k=k, rho=rho, w_law=w_law,
            u_grid=np.zeros(1), cdf=np.ones(1),
            jump_offsets=np.zeros(1), jump_weights=np.ones(1),
            diagnostics={"free_case": True, "max_residual": 0.0})

    mean = 2.0 * w_law.mean()
    spread = 2.0 * math.sqrt(w_law.variance())
    if w_law.name == "exponential":
        support = 50.0 * 2.0 * w_law.params[0]
    elif w_law.name == "two_point":
        support = 2.0 * max(abs(w_law.params[0]), abs(w_law.params[2]))
    else:
        support = abs(mean) + 8.0 * spread
    drift_reach = math.asinh(rho * (abs(mean) + spread + 1.0) / (2.0 * k) + 1.0)
    u0 = u_max if u_max is not None else max(
        4.0, support + drift_reach + 4.0 * (abs(mean) + spread) + 2.0)
    u0 = min(u0, 24.0)   # beyond this, ln tanh(u/2) degenerates in floats
    h0 = h_tail if h_tail is not None else min(0.02, max(spread, abs(mean), 0.05) / 12.0)

    offs, wts = _jump_atoms(w_law, h0 / 2.0)
    rel = float("inf")
    h_refines = 0
    for attempt in range(6):
        u_a, g_a = _solve_on_mesh(rho, k, u0, h0, 1.05, offs, wts)
        u_b, g_b = _solve_on_mesh(rho, k, u0, h0 / 1.5, 1.05 ** (1 / 1.5), offs, wts)
        # tail convergence: every needed moment must have a negligible
        # contribution from the outer 10% of the mesh
        ok = True
        for s in range(-(S + 1), S + 2):
            m_full = _moment(u_b, g_b, s)
            cutoff = 0.9 * u0
            mask = np.abs(u_b) <= cutoff
            m_inner = _moment(u_b[mask], g_b[mask], s)
            if not math.isfinite(m_full) or m_full <= 0 or \
                    abs(m_full - m_inner) > 1e-8 * abs(m_full):
                ok = False
                break
        if not ok:
            u0 *= 1.5
            continue
        # Richardson in the mesh size (first-error-order h^2)
        r2 = 1.5 ** 2
        mom_a = np.array([_moment(u_a, g_a, int(s)) for s in svals])
        mom_b = np.array([_moment(u_b, g_b, int(s)) for s in svals])
        mom = (r2 * mom_b - mom_a) / (r2 - 1.0)
        fvals = mom * np.power(k, svals.astype(float))
        sol = MellinSolution(
            window=S, svals=svals, fcheck=fvals, k=k, rho=rho, w_law=w_law,
            u_grid=u_b, cdf=g_b, jump_offsets=offs, jump_weights=wts,
            diagnostics={"u_max": u0, "nodes": len(u_b), "h_tail": h0,
                         "mesh_change": float(np.max(np.abs(mom_b / mom_a - 1.0)))})
        rel = sol.max_relative_residual()
        sol.diagnostics["max_residual"] = rel
        if rel > tol:
            if h_refines >= 2:
                break
            h_refines += 1
            h0 /= 1.6
            continue
        return sol
    raise RecurrenceUnstable(
        f"recurrence residual {rel:.2e} above tol {tol:.0e} after mesh refinement")


def lyapunov_mellin(sol: MellinSolution) -> float:
    """Lyapunov exponent per step: lambda_1 = [fcheck(1) + k^2 fcheck(-1)] / (2 rho)."""
    return 0.5 * (sol[1] + sol.k ** 2 * sol[-1]) / sol.rho
