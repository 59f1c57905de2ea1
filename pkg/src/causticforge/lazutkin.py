"""Adjustable-order near-boundary normal form and the initial circle map.

The coordinate X(s, theta) = F_0(s) + F_2(s) theta^2 + ... is built so that
the second difference of X along billiard orbits vanishes to high order in
the angle.  F_0 is the classical curvature^(-2/3) coordinate, normalized to
have degree one; each higher F_{2i} solves a linear second-order ODE whose
source term is extracted numerically from the angle-jet of the running
remainder (no symbolic differential algebra).

The companion Y(s, theta) = X(s, theta) - X(backward step) is then an
approximate invariant for the map, and pulling the line y = 1/q back through
(X, Y) yields the approximate invariant circle map used to seed the solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .billiards import JetTable, billiard_step_arrays
from .curves import FourierCurve, curvature_of
from .errors import ConfigurationError, InitializerError, NormalFormError
from .gridfn import (
    CircleMap,
    GridFn,
    antiderivative_from_zero,
    spectral_derivative,
    synthesize_many,
)

__all__ = [
    "NormalForm",
    "build_normal_form",
    "eval_X",
    "eval_XY",
    "homological_residual",
    "residual_slope",
    "initial_circle_map",
]

# sources with sup norm below this are treated as exact zeros (pure round-off,
# e.g. on a circle where every correction term vanishes identically)
SOURCE_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class NormalForm:
    """Lazutkin data: F_0 = s + periodic part, higher even coefficients, rho."""

    f0_periodic: GridFn
    c_norm: float
    fs: list
    rho: GridFn
    order: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.f0_periodic.n

    def _derivatives(self):
        cached = getattr(self, "_dfs", None)
        if cached is None:
            cached = [spectral_derivative(self.f0_periodic)] + \
                     [spectral_derivative(f) for f in self.fs]
            object.__setattr__(self, "_dfs", cached)
        return cached

    def f0(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return s + self.f0_periodic.evaluate(s)

    def f0_prime(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return 1.0 + self._derivatives()[0].evaluate(s)


def eval_X(nf: NormalForm, s, theta) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    vals = synthesize_many([nf.f0_periodic] + list(nf.fs), s)
    out = s + vals[0]
    for i, fv in enumerate(vals[1:], start=1):
        out = out + fv * theta ** (2 * i)
    return out


def _eval_X_partials(nf: NormalForm, s, theta):
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    derivs = nf._derivatives()
    dvals = synthesize_many(derivs, s)
    xs = 1.0 + dvals[0]
    xt = np.zeros(np.broadcast(s, theta).shape)
    if nf.fs:
        fvals = synthesize_many(nf.fs, s)
        for i, (fv, dfv) in enumerate(zip(fvals, dvals[1:]), start=1):
            xs = xs + dfv * theta ** (2 * i)
            xt = xt + 2 * i * fv * theta ** (2 * i - 1)
    return xs, xt


def eval_XY(nf: NormalForm, c: FourierCurve, s, theta):
    """Normal-form coordinates (x, y) of a boundary state.

    y is the backward difference of x along the orbit, so one backward
    billiard step is taken; to leading order y = 2 rho(s) F_0'(s) theta.
    """
    x = eval_X(nf, s, theta)
    sm, tm = billiard_step_arrays(c, s, theta, "backward")
    y = x - eval_X(nf, sm, tm)
    return x, y


def homological_residual(nf: NormalForm, c: FourierCurve, s, theta) -> np.ndarray:
    """X(forward) - 2 X + X(backward) along the true billiard orbit."""
    sp, tp = billiard_step_arrays(c, s, theta, "forward")
    sm, tm = billiard_step_arrays(c, s, theta, "backward")
    return eval_X(nf, sp, tp) - 2.0 * eval_X(nf, s, theta) + eval_X(nf, sm, tm)


def residual_slope(nf: NormalForm, c: FourierCurve, theta_lo: float = 1e-3,
                   theta_hi: float = 1e-1, n_theta: int = 25, n_s: int = 16,
                   floor: float = 3e-14):
    """Log-log slope of the homological residual against the angle.

    Rows whose residual is below `floor` (round-off in the X cancellation)
    are discarded before the fit.  Returns (slope, thetas, residuals).
    """
    thetas = np.geomspace(theta_lo, theta_hi, n_theta)
    ss = np.arange(n_s) / n_s + 0.5 / n_s
    tt = np.repeat(thetas, n_s)
    sss = np.tile(ss, n_theta)
    res = np.abs(homological_residual(nf, c, sss, tt)).reshape(n_theta, n_s)
    amp = np.sqrt(np.mean(res**2, axis=1))
    # the cancellation in X has a round-off plateau at small angles; fit only
    # rows safely above it
    effective_floor = max(floor, 30.0 * float(np.min(amp)))
    mask = amp > effective_floor
    if np.count_nonzero(mask) < 4:
        raise NormalFormError("homological residual is below the noise floor everywhere")
    slope = np.polyfit(np.log(thetas[mask]), np.log(amp[mask]), 1)[0]
    return float(slope), thetas, amp


# fit windows per leading power: low end high enough that round-off noise in
# the remainder is not amplified into the coefficient, high end low enough
# that the even-term corrections absorb the truncation
_FIT_WINDOWS = {4: (0.015, 0.08), 6: (0.025, 0.10), 8: (0.04, 0.15), 10: (0.05, 0.20)}
_REMAINDER_NOISE = 2e-14


def _denoise(g: GridFn, rel: float = 1e-5) -> GridFn:
    """Drop spectral content below rel * peak (white fit noise), keep the rest."""
    c = g.spectrum()
    peak = float(np.max(np.abs(c)))
    if peak == 0.0:
        return g
    c = np.where(np.abs(c) >= rel * peak, c, 0.0)
    c[g.n // 3:] = 0.0
    return GridFn.from_spectrum(c, g.n)


def _fit_remainder_coefficient(nf: NormalForm, c: FourierCurve, power: int,
                               n_theta: int = 16,
                               extra_terms: int = 3) -> tuple[GridFn, float, float]:
    """Leading even-power coefficient of the homological remainder.

    Fits residual(s, theta) = P(s) theta^power + (higher even terms) on a
    log-spaced angle ladder, per grid point, with a shared design matrix.
    Returns (coefficient, max fit misfit, coefficient noise scale).
    """
    n = nf.n
    t_lo, t_hi = _FIT_WINDOWS.get(power, (0.02 * (power - 2), 0.16 + 0.02 * (power - 4)))
    thetas = np.geomspace(t_lo, t_hi, n_theta)
    grid = np.arange(n) / n
    ss = np.tile(grid, n_theta)
    tt = np.repeat(thetas, n)
    res = homological_residual(nf, c, ss, tt).reshape(n_theta, n)
    powers = [power + 2 * j for j in range(extra_terms + 1)]
    cols = np.stack([(thetas / t_hi) ** p for p in powers], axis=1)
    coef, _, _, _ = np.linalg.lstsq(cols, res, rcond=None)
    fit_err = float(np.max(np.abs(cols @ coef - res)))
    lead = _denoise(GridFn(coef[0] / t_hi**power))
    noise_scale = _REMAINDER_NOISE / t_lo**power
    return lead, fit_err, noise_scale


def _solve_homological_ode(rho: GridFn, m: int, source: GridFn) -> GridFn:
    """Periodic solution F_m = g rho^{m/3} of the order-m homological ODE.

    The substitution G = g rho^{m/3} reduces the equation to
    d/ds (rho^{2/3} g') = -(1/4) rho^{-(m+4)/3} P, solved by two spectral
    quadratures; the free constant is fixed by periodicity of g and the
    additive gauge by g(0) = 0.  Returns (F_m, solvability defect).
    """
    rv = rho.values
    integrand = -(0.25) * rv ** (-(m + 4) / 3.0) * source.values
    drift = float(np.mean(integrand))
    scale = float(np.max(np.abs(integrand))) + 1e-300
    integrand = integrand - drift
    q_per = antiderivative_from_zero(GridFn(integrand)).fn
    w = rv ** (-2.0 / 3.0)
    c1 = -float(np.mean(w * q_per.values)) / float(np.mean(w))
    g_prime = GridFn(w * (c1 + q_per.values))
    g = antiderivative_from_zero(g_prime - g_prime.mean()).fn
    return GridFn(g.values * rv ** (m / 3.0)), abs(drift) / scale


def build_normal_form(c: FourierCurve, jets: JetTable, order: int, n: int = 256,
                      refine_passes: int = 5) -> NormalForm:
    """Construct the normal form of the given order on an n-point grid.

    order = k yields a coordinate exact through angle^(2k+3): the
    homological residual is O(theta^(2k+4)).  jets must have been extracted
    to order >= 2k+3 on a compatible grid (they certify the billiard-map
    expansion; only rho enters the construction directly, the higher source
    terms are re-fit from the running remainder).

    Each F_{2i} is obtained by iterative refinement: the closed-form
    homological operator (built from the low jets of the map) is a slightly
    inexact model of how the remainder responds to F_{2i}, so after the
    first quadrature solve the leftover coefficient is re-measured and
    corrected through the same solve until it stops improving.
    """
    if c.param_kind != "arclength_unit":
        raise ConfigurationError("normal form requires an arclength-normalized curve")
    if order < 0:
        raise ConfigurationError("normal-form order must be >= 0")
    if jets.order < 2 * order + 3 and order > 0:
        raise ConfigurationError(
            "jets of order >= %d required for normal-form order %d" % (2 * order + 3, order))
    grid = np.arange(n) / n
    rho = GridFn(1.0 / np.asarray(curvature_of(c, grid)))
    w = GridFn(rho.values ** (-2.0 / 3.0))
    c_norm = 1.0 / w.mean()
    f0_per = antiderivative_from_zero(w - w.mean()).fn * c_norm
    diags: dict = {"source_fit_errors": [], "solvability_defects": [],
                   "refine_leftovers": [], "source_floors": []}
    nf = NormalForm(f0_periodic=f0_per, c_norm=c_norm, fs=[], rho=rho,
                    order=0, diagnostics=diags)
    for i in range(1, order + 1):
        m = 2 * i
        f_m = GridFn.zeros(n)
        source0 = None
        floor = SOURCE_FLOOR
        for _ in range(max(1, refine_passes)):
            nf_try = NormalForm(f0_periodic=f0_per, c_norm=c_norm,
                                fs=nf.fs + [f_m], rho=rho, order=i, diagnostics=diags)
            source, fit_err, noise = _fit_remainder_coefficient(nf_try, c, m + 2)
            if source0 is None:
                source0 = source.sup_norm()
                floor = max(SOURCE_FLOOR, 60.0 * noise)
                diags["source_fit_errors"].append(fit_err)
                diags["source_floors"].append(floor)
                if source0 < floor:
                    # pure round-off (circle-like curve): this order is exact
                    break
            if source.sup_norm() < max(floor, 1e-6 * source0):
                break
            delta, defect = _solve_homological_ode(rho, m, source)
            if defect > 1e-2:
                if source.sup_norm() < 1e3 * noise:
                    break  # noise-dominated source, no real obstruction
                raise NormalFormError(
                    "homological equation at order %d is not solvable: "
                    "relative secular drift %.3e" % (m, defect))
            f_m = f_m + delta
        diags["refine_leftovers"].append(source.sup_norm() / max(source0, 1e-300))
        nf = NormalForm(f0_periodic=f0_per, c_norm=c_norm, fs=nf.fs + [f_m],
                        rho=rho, order=i, diagnostics=diags)
    return nf


def initial_circle_map(nf: NormalForm, c: FourierCurve, q: int, n: int,
                       tol: float = 1e-12, max_iters: int = 40) -> CircleMap:
    """Pull the line y = 1/q back through (X, Y) to an approximate caustic map.

    Per grid point theta_j, solves (X, Y)(s, theta) = (theta_j, 1/q) by a
    damped 2-d Newton iteration (analytic X partials, differenced Y
    partials), seeded from the leading-order inverse.
    """
    if q < 3:
        raise ConfigurationError("q must be >= 3")
    target_x = np.arange(n) / n
    target_y = 1.0 / q

    # seed: s from F0(s) = theta_j, theta from the leading term of Y
    s = target_x.copy()
    for _ in range(50):
        step = (nf.f0(s) - target_x) / nf.f0_prime(s)
        s = s - step
        if np.max(np.abs(step)) < 1e-15:
            break
    rho_s = nf.rho.evaluate(s)
    theta = target_y / (2.0 * rho_s * nf.f0_prime(s))

    def residuals(s_, th_):
        x, y = eval_XY(nf, c, s_, th_)
        return x - target_x, y - target_y

    rx, ry = residuals(s, theta)
    best = float(np.max(np.abs(rx)) + np.max(np.abs(ry)))
    for _ in range(max_iters):
        if best < tol:
            break
        xs, xt = _eval_X_partials(nf, s, theta)
        dth = np.maximum(1e-7 * theta, 1e-10)
        ds = np.full_like(s, 1e-7)
        rx_t, ry_t = residuals(s, theta + dth)
        rx_s, ry_s = residuals(s + ds, theta)
        ys = (ry_s - ry) / ds
        yt = (ry_t - ry) / dth
        det = xs * yt - xt * ys
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        step_s = (yt * rx - xt * ry) / det
        step_t = (-ys * rx + xs * ry) / det
        # keep theta positive and steps sane
        step_t = np.clip(step_t, -0.5 * theta, 0.5 * theta)
        s = s - step_s
        theta = theta - step_t
        rx, ry = residuals(s, theta)
        best = float(np.max(np.abs(rx)) + np.max(np.abs(ry)))
    if best > 1e-11:
        raise InitializerError(
            "initial circle map Newton stalled at residual %.3e for q = %d" % (best, q))
    try:
        return CircleMap(GridFn(s - target_x))
    except ConfigurationError as exc:
        raise InitializerError("initializer produced a non-monotone map: %s" % exc) from exc
