"""Recessive solutions of the central ODE and the closed-form cumulants.

Fourier picture (E real, decaying solutions):
    -phi''(s) + [E - L(s)/(is)] phi(s) = 0,    phi(s) -> 0 as s -> +inf,
with the Lyapunov exponent, integrated density of states and the two
variance integrals read off from phi(0), phi'(0) and quadratures over
fhat = phi/phi(0).

Laplace picture (E = -k^2, positive jump weights): the same machinery on the
rotated contour, with real arithmetic for positive weights and a
phase-decaying complex solution for Gaussian white noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp

from .ensembles import CompoundPoisson, GaussianWhiteNoise, LevyModel, UnsupportedLaw

__all__ = [
    "SeedUnreliable",
    "NonDecaying",
    "QuadratureStall",
    "FitUnstable",
    "SolverOptions",
    "SpectralSolution",
    "InvariantDensityTransform",
    "SpectralReport",
    "solve_recessive",
    "solve_recessive_laplace",
    "gamma1",
    "idos",
    "lambda2",
    "lambda2_laplace",
    "gamma2",
    "gamma2_laplace",
    "fhat_small_s_check",
    "spectral_report",
]


class SeedUnreliable(RuntimeError):
    """Asymptotic seeding at s_max is not accurate enough."""


class NonDecaying(RuntimeError):
    """The integrated solution exceeds the overflow guard."""


class QuadratureStall(RuntimeError):
    """Quadrature refinement failed to reach the requested tolerance."""


class FitUnstable(RuntimeError):
    """Small-s fit of fhat did not converge."""


@dataclass
class SolverOptions:
    s_max: Optional[float] = None      # override for the integration window
    rtol: float = 1e-10                # ODE tolerance
    quad_tol: float = 1e-8             # relative quadrature tolerance
    decay_target: float = 40.0         # e-folds of decay used to place s_max
    s_cut: Optional[float] = None      # inner end of the quadrature panels
    check_convergence: bool = True     # re-solve at doubled s_max
    grid_points: int = 1201            # stored uniform grid
    osc_window: float = 400.0          # extra oscillatory range (Gaussian Laplace)


def _char_wavenumber(model: LevyModel, energy: float) -> float:
    k = math.sqrt(abs(energy)) if energy != 0.0 else 0.0
    if isinstance(model, GaussianWhiteNoise):
        return max(k, (0.5 * model.sigma) ** (1.0 / 3.0), 1e-3)
    return max(k, 1e-3)


@dataclass
class SpectralSolution:
    """Recessive solution on [0, s_max] with its dense interpolant."""

    model: LevyModel
    energy: float
    picture: str                  # "fourier" or "laplace"
    s: np.ndarray                 # uniform grid
    phi: np.ndarray               # raw solution samples on the grid
    phi0: complex                 # phi(0)
    dphi0: complex                # phi'(0)
    wronskian: float              # -2 Re fhat'(0) (= 2 pi N in the Fourier picture)
    s_max: float
    s_cut: float
    k_char: float
    options: SolverOptions
    diagnostics: dict = field(default_factory=dict)
    _dense: Callable = None

    def _eval(self, s):
        out = self._dense(np.asarray(s, dtype=float))
        return out[0], out[1]

    def fhat(self, s):
        """Fourier transform of the invariant density, fhat(-s)=fhat(s)*."""
        if self.picture != "fourier":
            raise ValueError("fhat is defined for the Fourier picture; use ftilde")
        s_in = np.asarray(s, dtype=float)
        s1 = np.atleast_1d(s_in)
        out = np.empty(s1.shape, dtype=complex)
        pos = s1 >= 0
        if np.any(pos):
            out[pos] = self._eval(s1[pos])[0] / self.phi0
        if np.any(~pos):
            out[~pos] = np.conj(self._eval(-s1[~pos])[0] / self.phi0)
        return complex(out[0]) if s_in.shape == () else out

    def fhat_prime(self, s):
        if self.picture != "fourier":
            raise ValueError("fhat_prime is defined for the Fourier picture")
        s_in = np.asarray(s, dtype=float)
        s1 = np.atleast_1d(s_in)
        out = np.empty(s1.shape, dtype=complex)
        pos = s1 >= 0
        if np.any(pos):
            out[pos] = self._eval(s1[pos])[1] / self.phi0
        if np.any(~pos):
            out[~pos] = -np.conj(self._eval(-s1[~pos])[1] / self.phi0)
        return complex(out[0]) if s_in.shape == () else out

    def ftilde(self, r):
        """Laplace transform of the invariant density (Laplace picture)."""
        if self.picture != "laplace":
            raise ValueError("ftilde is defined for the Laplace picture")
        val = self._eval(r)[0] / self.phi0
        if isinstance(self.model, GaussianWhiteNoise):
            return val
        return np.real(val)

    def ftilde_prime(self, r):
        if self.picture != "laplace":
            raise ValueError("ftilde_prime is defined for the Laplace picture")
        val = self._eval(r)[1] / self.phi0
        if isinstance(self.model, GaussianWhiteNoise):
            return val
        return np.real(val)


@dataclass(frozen=True)
class InvariantDensityTransform:
    """Normalized transform of the stationary Riccati density."""

    solution: SpectralSolution

    def __call__(self, s):
        if self.solution.picture == "fourier":
            return self.solution.fhat(s)
        return self.solution.ftilde(s)


# ---------------------------------------------------------------------------
# Window placement and seeding
# ---------------------------------------------------------------------------

def _find_window(wfun, target: float, floor: float) -> float:
    """Smallest S with int_0^S max(Re sqrt(W), 0) ds >= target."""
    span = max(floor, 1.0)
    for _ in range(60):
        s = np.linspace(1e-9, span, 4001)
        rate = np.maximum(np.real(np.sqrt(wfun(s) + 0j)), 0.0)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(s))])
        if cum[-1] >= target:
            idx = int(np.searchsorted(cum, target))
            return float(s[min(idx, len(s) - 1)])
        span *= 2.0
    raise SeedUnreliable("decay target unreachable; the model does not produce a recessive solution")


def _wkb_seed(wfun, s_max: float):
    """Seed phi=1 with phi'/phi = -sqrt(W) - W'/(4W) and its residual."""
    h = 1e-5 * max(s_max, 1.0)
    w0 = complex(wfun(s_max))
    wp = (complex(wfun(s_max + 0.0)) - complex(wfun(s_max - h))) / h
    sq = np.sqrt(w0)
    lam = -sq - wp / (4.0 * w0)
    lamp = -(np.sqrt(complex(wfun(s_max))) - np.sqrt(complex(wfun(s_max - h)))) / h
    resid = abs(lamp + lam * lam - w0) / max(abs(w0), 1e-30)
    return lam, float(resid)


def _integrate(wfun, s_max: float, rtol: float, n_grid: int):
    def rhs(s, y):
        return [y[1], wfun(s) * y[0]]

    lam, seed_resid = _wkb_seed(wfun, s_max)
    y0 = np.array([1.0 + 0.0j, lam], dtype=complex)
    sol = solve_ivp(rhs, (s_max, 0.0), y0, method="DOP853",
                    rtol=rtol, atol=1e-12, dense_output=True)
    if not sol.success:
        raise NonDecaying(f"integration failed: {sol.message}")
    if not np.all(np.isfinite(sol.y)) or np.max(np.abs(sol.y[0])) > 1e250:
        raise NonDecaying("solution magnitude exceeded the overflow guard")
    grid = np.linspace(0.0, s_max, n_grid)
    vals = sol.sol(grid)
    phi0 = complex(sol.sol(0.0)[0])
    dphi0 = complex(sol.sol(0.0)[1])
    if phi0 == 0.0:
        raise NonDecaying("phi(0) vanished; normalization impossible")
    return sol.sol, grid, vals[0], phi0, dphi0, seed_resid


def _solve_once(model, energy, picture, opts: SolverOptions):
    k_char = _char_wavenumber(model, energy)
    if picture == "fourier":
        def wfun(s):
            return energy - model.exponent_over_is(s)
    else:
        def wfun(r):
            return -energy + model.laplace_coefficient(r)

    oscillatory_tail = picture == "laplace" and isinstance(model, GaussianWhiteNoise)
    if opts.s_max is not None:
        s_max = opts.s_max
    else:
        s_max = _find_window(wfun, opts.decay_target, 5.0 / k_char)
        if oscillatory_tail:
            # quadratures need the slowly decaying oscillatory range as well
            turn = max(0.0, 2.0 * (-energy) / model.sigma)
            s_max = max(s_max, turn + opts.osc_window)

    dense, grid, phi, phi0, dphi0, seed_resid = _integrate(
        wfun, s_max, opts.rtol, opts.grid_points)

    # Seed imperfections enter the normalized solution only through the
    # admixture of the growing branch, suppressed by exp(-2 * buffer).
    if not oscillatory_tail:
        buffer_efolds = max(opts.decay_target - 20.0, 0.0)
        if seed_resid * math.exp(-2.0 * buffer_efolds) > 1e3 * opts.rtol:
            raise SeedUnreliable(
                f"seed residual {seed_resid:.2e} too large for window {s_max:.3g}")

    s_cut = opts.s_cut if opts.s_cut is not None else 1e-3 / k_char
    fhat_d0 = dphi0 / phi0
    sol = SpectralSolution(
        model=model, energy=energy, picture=picture,
        s=grid, phi=phi, phi0=phi0, dphi0=dphi0,
        wronskian=float(-2.0 * np.real(fhat_d0)),
        s_max=s_max, s_cut=s_cut, k_char=k_char, options=opts,
        diagnostics={"seed_residual": seed_resid},
        _dense=dense,
    )
    return sol


def _solve_converged(model, energy, picture, opts: SolverOptions):
    sol = _solve_once(model, energy, picture, opts)
    if not opts.check_convergence or opts.s_max is not None:
        return sol
    for doubling in range(1, 4):
        wider = SolverOptions(**{**opts.__dict__, "s_max": 2.0 ** doubling * sol.s_max,
                                 "check_convergence": False})
        ref = _solve_once(model, energy, picture, wider)
        a = sol.dphi0 / sol.phi0
        b = ref.dphi0 / ref.phi0
        if abs(a - b) <= max(1e-12 * sol.k_char, 1e-7 * abs(b)):
            sol.diagnostics["window_doublings"] = doubling - 1
            return sol
        sol = ref
    raise SeedUnreliable("gamma1 did not converge under window doubling")


def solve_recessive(m: LevyModel, E: float, opts: Optional[SolverOptions] = None) -> SpectralSolution:
    """Recessive solution in the Fourier picture.

    Compound Poisson models require E > 0 here (the E < 0 solution
    oscillates; use solve_recessive_laplace). Gaussian white noise decays
    for any E.
    """
    opts = opts or SolverOptions()
    if isinstance(m, CompoundPoisson) and E <= 0.0:
        raise ValueError("compound Poisson at E <= 0: use solve_recessive_laplace")
    return _solve_converged(m, E, "fourier", opts)


def solve_recessive_laplace(m: LevyModel, E: float, opts: Optional[SolverOptions] = None) -> SpectralSolution:
    """Recessive solution on the rotated (Laplace) contour for E < 0.

    For compound Poisson models the jump weights must be nonnegative
    (otherwise the Laplace transform of the invariant density diverges).
    Gaussian white noise is handled with the phase-decaying complex
    solution of the rotated equation.
    """
    opts = opts or SolverOptions()
    if E >= 0.0:
        raise ValueError("the Laplace picture requires E < 0")
    if isinstance(m, CompoundPoisson) and not m.weight_law.is_nonnegative():
        raise UnsupportedLaw(
            "Laplace picture needs nonnegative jump weights; "
            "the transform of the invariant density diverges otherwise")
    if isinstance(m, GaussianWhiteNoise):
        return _solve_gaussian_laplace(m, E, opts)
    return _solve_converged(m, E, "laplace", opts)


def _solve_gaussian_laplace(m: GaussianWhiteNoise, E: float, opts: SolverOptions):
    """Rotated-contour solution for white noise at E < 0.

    Beyond the turning point r_t = 2|E|/sigma the equation oscillates; the
    correct branch carries a single phase factor exp(+i Theta) with
    Theta' = sqrt(sigma r/2 + E_<0 shift), matching the decaying Fourier
    solution continued to s = -i r.
    """
    sigma = m.sigma
    turn = 2.0 * (-E) / sigma
    r_max = opts.s_max if opts.s_max is not None else turn + opts.osc_window

    def wfun(r):
        return -E - 0.5 * sigma * np.asarray(r, dtype=float)

    def rhs(r, y):
        return [y[1], wfun(r) * y[0]]

    q0 = -wfun(r_max)
    if q0 <= 0:
        raise SeedUnreliable("window must extend beyond the turning point")
    lam = 1j * math.sqrt(q0) - (-0.5 * sigma) / (4.0 * wfun(r_max))
    y0 = np.array([1.0 + 0.0j, lam], dtype=complex)
    sol = solve_ivp(rhs, (r_max, 0.0), y0, method="DOP853",
                    rtol=opts.rtol, atol=1e-12, dense_output=True)
    if not sol.success or not np.all(np.isfinite(sol.y)):
        raise NonDecaying("rotated-contour integration failed")
    grid = np.linspace(0.0, r_max, opts.grid_points)
    phi = sol.sol(grid)[0]
    phi0 = complex(sol.sol(0.0)[0])
    dphi0 = complex(sol.sol(0.0)[1])
    k_char = _char_wavenumber(m, E)
    s_cut = opts.s_cut if opts.s_cut is not None else 1e-3 / k_char
    return SpectralSolution(
        model=m, energy=E, picture="laplace",
        s=grid, phi=phi, phi0=phi0, dphi0=dphi0,
        wronskian=float(-2.0 * np.real(dphi0 / phi0)),
        s_max=r_max, s_cut=s_cut, k_char=k_char, options=opts,
        diagnostics={"turning_point": turn},
        _dense=sol.sol,
    )


# ---------------------------------------------------------------------------
# Pointwise spectral quantities
# ---------------------------------------------------------------------------

def gamma1(sol: SpectralSolution) -> float:
    """Lyapunov exponent per unit length (gamma_1 = rho * lambda_1)."""
    if sol.picture == "fourier":
        return float(np.imag(sol.phi0 * np.conj(sol.dphi0)) / abs(sol.phi0) ** 2)
    return float(-np.real(sol.dphi0 / sol.phi0))


def idos(sol: SpectralSolution) -> float:
    """Integrated density of states per unit length."""
    if sol.picture == "fourier":
        return float(-np.real(sol.phi0 * np.conj(sol.dphi0)) / (math.pi * abs(sol.phi0) ** 2))
    if isinstance(sol.model, GaussianWhiteNoise):
        raise ValueError("IDoS of the white-noise model at E<0: use the Fourier picture")
    return 0.0


# ---------------------------------------------------------------------------
# Quadratures
# ---------------------------------------------------------------------------

_GAUSS_CACHE = {}


def _gauss(n):
    if n not in _GAUSS_CACHE:
        _GAUSS_CACHE[n] = leggauss(n)
    return _GAUSS_CACHE[n]


def _panel_edges(lo, hi, rate, cap=120000):
    edges = [lo]
    s = lo
    while s < hi:
        ds = 1.1 / max(float(rate(s)), 1e-12)
        ds = min(ds, 0.6 * s if s > 0 else ds, hi - s)
        ds = max(ds, 1e-14 * hi)
        s = min(s + ds, hi)
        edges.append(s)
        if len(edges) > cap:
            raise QuadratureStall("panel construction runaway")
    return np.asarray(edges)


def _composite_gauss(fvec, edges, n):
    x, w = _gauss(n)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    vals = fvec(nodes).reshape(len(mid), n)
    total = float(np.sum(np.real(vals) * w[None, :] * half[:, None]))
    scale = float(np.sum(np.abs(vals) * w[None, :] * half[:, None]))
    return total, scale


def _quad_with_check(fvec, edges, quad_tol):
    i12, scale = _composite_gauss(fvec, edges, 12)
    i20, _ = _composite_gauss(fvec, edges, 20)
    err = abs(i20 - i12)
    if err > max(quad_tol * abs(i20), 1e-12 * scale, 1e-15):
        raise QuadratureStall(f"quadrature error estimate {err:.2e} too large")
    return i20, err


def _variance_quadrature(sol: SpectralSolution, weight_fn, sign: float):
    """Common core: sign * int ds/s Re[(2*g1*weight -/+ derivative) fhat^2].

    Fourier: integrand_num = Re[2 g1 w fhat^2 - i (fhat^2)'].
    Laplace: integrand_num = Re[2 g1 w F^2 + (F^2)'].
    """
    g1 = gamma1(sol)
    phi0 = sol.phi0
    fourier = sol.picture == "fourier"

    def num(svals):
        y, dy = sol._eval(svals)
        f = y / phi0
        df = dy / phi0
        if weight_fn is None:
            w = 1.0
        else:
            w = weight_fn(svals)
        if fourier:
            return np.real(2.0 * g1 * w * f * f - 2j * f * df)
        return np.real(2.0 * g1 * w * f * f + 2.0 * f * df)

    def integrand(svals):
        return num(svals) / svals

    def wloc(s):
        if fourier:
            wv = sol.energy - sol.model.exponent_over_is(s)
        else:
            wv = -sol.energy + sol.model.laplace_coefficient(s)
        return abs(np.sqrt(complex(wv))) + 0.3 / max(s, 1e-12)

    r_lo = sol.s_cut * 1e-3
    edges = _panel_edges(r_lo, sol.s_max, wloc)
    total, err = _quad_with_check(integrand, edges, sol.options.quad_tol)
    # remaining sliver [0, r_lo]: the integrand has a finite limit at 0
    total += r_lo * float(integrand(np.array([r_lo]))[0])

    # rotating the contour to the Laplace axis leaves a small-arc term at the
    # origin, pi^2 * N; it vanishes identically for positive jump weights
    if sol.picture == "laplace":
        total += math.pi * float(np.imag(sol.dphi0 / sol.phi0))

    # oscillatory tail beyond the window (Gaussian white noise on the
    # rotated contour): one integration by parts of the e^{2i Theta} wave
    if sol.picture == "laplace" and isinstance(sol.model, GaussianWhiteNoise):
        q_end = -(-sol.energy - 0.5 * sol.model.sigma * sol.s_max)
        if q_end > 0:
            y, dy = sol._eval(np.array([sol.s_max]))
            f = complex(y[0] / phi0)
            df = complex(dy[0] / phi0)
            if weight_fn is None:
                wv = 1.0
            else:
                wv = complex(weight_fn(np.array([sol.s_max]))[0])
            u_end = (2.0 * g1 * wv * f * f + 2.0 * f * df) / sol.s_max
            total += float(np.real(-u_end / (2j * math.sqrt(q_end))))
    return sign * total, err


def lambda2(sol: SpectralSolution, m: Optional[LevyModel] = None,
            rho: Optional[float] = None) -> float:
    """Second expansion coefficient lambda_2 of the moment generating
    function, per step; the per-step variance is lambda_1^2 - lambda_2."""
    m = m or sol.model
    if not isinstance(m, CompoundPoisson):
        raise UnsupportedLaw("lambda2 needs a compound Poisson model (weight transform)")
    rho = rho if rho is not None else m.rho
    if sol.picture != "fourier":
        return lambda2_laplace(sol, m, rho)
    law = m.weight_law
    val, _ = _variance_quadrature(sol, lambda s: law.fourier(s), sign=-1.0)
    return val / rho


def lambda2_laplace(sol: SpectralSolution, m: Optional[LevyModel] = None,
                    rho: Optional[float] = None) -> float:
    """lambda_2 from the Laplace-picture integral (E < 0, positive weights)."""
    m = m or sol.model
    if not isinstance(m, CompoundPoisson):
        raise UnsupportedLaw("lambda2 needs a compound Poisson model (weight transform)")
    rho = rho if rho is not None else m.rho
    if sol.picture != "laplace":
        raise ValueError("lambda2_laplace expects a Laplace-picture solution")
    law = m.weight_law
    val, _ = _variance_quadrature(sol, law.laplace_arr, sign=-1.0)
    return val / rho


def gamma2(sol: SpectralSolution) -> float:
    """Variance growth rate of ln|psi(x)| per unit length."""
    if sol.picture != "fourier":
        return gamma2_laplace(sol)
    val, _ = _variance_quadrature(sol, None, sign=+1.0)
    return val


def gamma2_laplace(sol: SpectralSolution) -> float:
    """gamma_2 from the rotated-contour integral (E < 0)."""
    if sol.picture != "laplace":
        raise ValueError("gamma2_laplace expects a Laplace-picture solution")
    val, _ = _variance_quadrature(sol, None, sign=+1.0)
    return val


# ---------------------------------------------------------------------------
# Small-s consistency fit
# ---------------------------------------------------------------------------

def fhat_small_s_check(sol: SpectralSolution):
    """Fit fhat(s) ~ 1 - pi*N*s - i*gamma1*s near 0; returns (N_est, g1_est).

    The fitted slope is the numerical resolution of the sign convention:
    fhat'(0+) = -pi*N - i*gamma1.
    """
    if sol.picture != "fourier":
        raise ValueError("the small-s fit applies to the Fourier picture")
    hi = 0.25 / sol.k_char
    svals = np.geomspace(max(sol.s_cut, 1e-9), hi, 48)
    f = sol.fhat(svals) - 1.0
    design = np.stack([svals, svals ** 2], axis=1).astype(complex)
    coef, *_ = np.linalg.lstsq(design, f, rcond=None)
    resid = np.abs(design @ coef - f)
    scale = np.max(np.abs(f)) + 1e-300
    if np.max(resid) > 2e-2 * scale:
        raise FitUnstable(f"small-s fit residual {np.max(resid)/scale:.2e}")
    c1 = coef[0]
    return float(-np.real(c1) / math.pi), float(-np.imag(c1))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralReport:
    """Analytic cumulants for one model/energy pair."""

    energy: float
    gamma1: float               # per length
    gamma2: float               # per length
    idos: float                 # per length
    lambda1: Optional[float]    # per step (compound Poisson only)
    lambda2: Optional[float]    # per step
    var_per_step: Optional[float]  # lambda1^2 - lambda2
    picture: str
    diagnostics: dict


def spectral_report(model: LevyModel, E: float,
                    opts: Optional[SolverOptions] = None) -> SpectralReport:
    """Full set of cumulants, choosing the picture appropriate to (model, E)."""
    opts = opts or SolverOptions()
    is_cp = isinstance(model, CompoundPoisson)
    if is_cp and E <= 0.0:
        sol = solve_recessive_laplace(model, E, opts)
    else:
        sol = solve_recessive(model, E, opts)
    g1 = gamma1(sol)
    g2 = gamma2(sol)
    n = idos(sol) if not (sol.picture == "laplace"
                          and isinstance(model, GaussianWhiteNoise)) else float("nan")
    if is_cp:
        lam1 = g1 / model.rho
        lam2 = lambda2(sol)
        varps = lam1 * lam1 - lam2
    else:
        lam1 = lam2 = varps = None
    return SpectralReport(
        energy=E, gamma1=g1, gamma2=g2, idos=n,
        lambda1=lam1, lambda2=lam2, var_per_step=varps,
        picture=sol.picture,
        diagnostics=dict(sol.diagnostics, s_max=sol.s_max),
    )
