"""Generating function, defect functionals, billiard map, and boundary jets.

The defect E(r, u) measures the failure of the chord family
theta -> (u(theta), u(theta + 1/q)) to be extremal; it vanishes identically
exactly when the family envelopes a caustic of rotation number 1/q.  E and
its companion F are evaluated by inner products of unit chords with the
tangent / position vectors, which stays accurate for short chords.

The billiard map itself is solved from the reflection condition with a
bracketed Newton iteration on the chord parameter; everything is vectorized
over arrays of states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .curves import FourierCurve, curvature_of
from .errors import ConfigurationError, JetFitError, SingularChordError
from .gridfn import CircleMap, GridFn

__all__ = [
    "ChordState",
    "ChordData",
    "JetTable",
    "chord_data",
    "defect_E",
    "defect_F",
    "billiard_step",
    "billiard_step_arrays",
    "extract_jets",
]


@dataclass(frozen=True)
class ChordState:
    """Boundary parameter s (mod 1) and outgoing angle theta in (0, pi)."""

    s: float
    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta < np.pi:
            raise ConfigurationError("outgoing angle must lie in (0, pi), got %r" % (self.theta,))
        object.__setattr__(self, "s", float(self.s) % 1.0)


class ChordData(NamedTuple):
    length: np.ndarray
    d1: np.ndarray    # dL/ds
    d2: np.ndarray    # dL/ds'
    d12: np.ndarray   # d^2 L / ds ds'


def chord_data(c: FourierCurve, s, sp) -> ChordData:
    """Chord length L(s, s') = |r(s') - r(s)| and its low-order partials."""
    s = np.asarray(s, dtype=float)
    sp = np.asarray(sp, dtype=float)
    r0 = c.evaluate(s)
    r1 = c.evaluate(sp)
    t0 = c.evaluate(s, 1)
    t1 = c.evaluate(sp, 1)
    delta = r1 - r0
    length = np.hypot(delta[..., 0], delta[..., 1])
    if np.min(length) < 1e-12:
        raise SingularChordError("chord endpoints coincide (min length %.3e)" % float(np.min(length)))
    chat = delta / length[..., None]
    ct0 = np.sum(chat * t0, axis=-1)
    ct1 = np.sum(chat * t1, axis=-1)
    d1 = -ct0
    d2 = ct1
    d12 = (ct0 * ct1 - np.sum(t0 * t1, axis=-1)) / length
    return ChordData(length, d1, d2, d12)


def _chord_vectors(c: FourierCurve, q: int, u: CircleMap | None, n: int | None):
    """Unit chords and tangent samples for the 1/q family along u."""
    if u is None:
        if n is None:
            raise ConfigurationError("grid size n is required when u is the identity")
    else:
        n = u.n if n is None else n
        if n != u.n:
            raise ConfigurationError("grid size %d differs from the map grid %d" % (n, u.n))
    if q < 2 or n % q != 0:
        raise ConfigurationError("grid size %d must be a multiple of q = %d >= 2" % (n, q))
    m = n // q
    if u is None:
        r = c.grid_samples(n)
        dr = c.grid_samples(n, 1)
        r_plus = np.roll(r, -m, axis=0)
        r_minus = np.roll(r, m, axis=0)
    else:
        ug = u.grid_values()
        r = c.evaluate(ug)
        dr = c.evaluate(ug, 1)
        r_plus = c.evaluate(np.roll(ug, -m))
        r_minus = c.evaluate(np.roll(ug, m))
    fwd = r_plus - r
    bwd = r - r_minus
    lf = np.hypot(fwd[:, 0], fwd[:, 1])
    lb = np.hypot(bwd[:, 0], bwd[:, 1])
    if min(np.min(lf), np.min(lb)) < 1e-12:
        raise SingularChordError("degenerate chord in the 1/q family")
    return bwd / lb[:, None] - fwd / lf[:, None], r, dr


def defect_E(c: FourierCurve, q: int, u: CircleMap | None = None,
             n: int | None = None) -> GridFn:
    """Defect E(r, u) on the grid; zero iff the 1/q chord family is extremal."""
    diff, _, dr = _chord_vectors(c, q, u, n)
    return GridFn(np.sum(diff * dr, axis=1))


def defect_F(c: FourierCurve, q: int, u: CircleMap | None = None,
             n: int | None = None) -> GridFn:
    """Companion functional F(r, u): same chord difference against r(u)."""
    diff, r, _ = _chord_vectors(c, q, u, n)
    return GridFn(np.sum(diff * r, axis=1))


def billiard_step_arrays(c: FourierCurve, s, theta, direction: str = "forward",
                         h_seed=None):
    """Vectorized billiard map: next (or previous) impact and outgoing angle.

    Solves the reflection condition |unit chord - unit tangent| = 2 sin(theta/2)
    for the parameter advance h in (0, 1) with a bracketed Newton iteration;
    the bracket guarantees the first intersection is found.  Returns
    (s_new, theta_new) with s_new NOT reduced mod 1, so callers can track
    winding.
    """
    if direction not in ("forward", "backward"):
        raise ConfigurationError("direction must be 'forward' or 'backward'")
    sign = 1.0 if direction == "forward" else -1.0
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s, theta = np.broadcast_arrays(s, theta)
    s = s.astype(float).ravel()
    th = theta.astype(float).ravel()
    if np.any(th <= 0.0) or np.any(th >= np.pi):
        raise ConfigurationError("outgoing angles must lie strictly inside (0, pi)")

    r0 = c.evaluate(s)
    t0 = c.evaluate(s, 1)
    sp0 = np.hypot(t0[:, 0], t0[:, 1])
    t0 = t0 / sp0[:, None]
    target = (2.0 * np.sin(th / 2.0)) ** 2

    def residual(h):
        pts, vel = c.evaluate01(s + sign * h)
        delta = sign * (pts - r0)
        ln = np.hypot(delta[:, 0], delta[:, 1])
        ln = np.maximum(ln, 1e-300)
        chat = delta / ln[:, None]
        gap = chat - t0
        f = gap[:, 0] ** 2 + gap[:, 1] ** 2 - target
        dchat = (vel - chat * np.sum(chat * vel, axis=1)[:, None]) / ln[:, None]
        fp = 2.0 * np.sum(gap * dchat, axis=1)
        return f, fp, chat

    if h_seed is None:
        rho = 1.0 / np.asarray(curvature_of(c, s))
        h = np.clip(2.0 * rho * th / sp0, 1e-9, 0.9)
    else:
        h = np.clip(np.asarray(h_seed, dtype=float).ravel(), 1e-9, 0.9)

    lo = np.full_like(h, 1e-12)
    hi = np.full_like(h, 1.0 - 1e-12)
    f, fp, chat = residual(h)
    f_best = np.abs(f)
    stall = np.zeros(h.shape, dtype=int)
    for _ in range(90):
        neg = f < 0
        lo = np.where(neg, h, lo)
        hi = np.where(neg, hi, h)
        with np.errstate(divide="ignore", invalid="ignore"):
            h_new = h - f / fp
        bad = ~np.isfinite(h_new) | (h_new <= lo) | (h_new >= hi)
        h_new = np.where(bad, 0.5 * (lo + hi), h_new)
        step = np.abs(h_new - h)
        h = h_new
        f, fp, chat = residual(h)
        # a point is done once its update is at rounding level, or once the
        # residual has repeatedly stopped improving (noise floor) while the
        # update is already far below any useful accuracy
        stall = np.where(np.abs(f) >= 0.7 * f_best, stall + 1, 0)
        f_best = np.minimum(f_best, np.abs(f))
        rel = 1.0 + np.abs(h)
        if np.all((step < 1e-15 * rel) | ((stall >= 2) & (step < 1e-13 * rel))):
            break
    else:
        worst = float(np.max(np.abs(f)))
        if worst > 1e-10:
            raise SingularChordError(
                "billiard reflection solve failed to converge (max residual %.3e)" % worst)

    s_new = s + sign * h
    t1 = c.evaluate(s_new, 1)
    t1 = t1 / np.hypot(t1[:, 0], t1[:, 1])[:, None]
    gap_out = chat - t1
    th_new = 2.0 * np.arcsin(np.clip(0.5 * np.hypot(gap_out[:, 0], gap_out[:, 1]), 0.0, 1.0))
    return s_new.reshape(theta.shape), th_new.reshape(theta.shape)


def billiard_step(c: FourierCurve, st: ChordState, direction: str = "forward") -> ChordState:
    """Single-state wrapper around billiard_step_arrays."""
    s_new, th_new = billiard_step_arrays(c, st.s, st.theta, direction)
    return ChordState(float(s_new), float(th_new))


@dataclass(frozen=True, eq=False)
class JetTable:
    """Taylor data of the billiard map in the angle at the boundary.

    b[i] is the GridFn b_{i+1} (parameter advance coefficients), d[i] is
    d_{i+2} (angle coefficients); order is the highest fitted power.
    """

    b: list
    d: list
    order: int
    fit_residual: float

    def b_k(self, k: int) -> GridFn:
        return self.b[k - 1]

    def d_k(self, k: int) -> GridFn:
        return self.d[k - 2]


def _parity_fit(y: np.ndarray, thetas: np.ndarray, powers: list[int], scale: float):
    """Shared-design least squares of y(theta_l, s_j) onto theta^powers."""
    cols = np.stack([(thetas / scale) ** p for p in powers], axis=1)
    coef, residuals, _, _ = np.linalg.lstsq(cols, y, rcond=None)
    fitted = cols @ coef
    resid = float(np.max(np.abs(fitted - y)))
    coef = coef / np.array([scale ** p for p in powers])[:, None]
    return coef, resid


def extract_jets(c: FourierCurve, order: int, n: int = 256,
                 theta0: float = 1e-2, levels: int = 8,
                 residual_tol: float = 1e-3) -> JetTable:
    """Fit the jets b_k, d_k of the billiard map on the parameter grid.

    Samples forward and backward steps on a geometric angle ladder
    theta0 * 2^-i and fits even/odd combinations separately, which enforces
    the time-reversal parity of the coefficients exactly.  Requires an
    arclength-normalized curve so the coefficients have their standard
    meaning (b_1 = 2 rho, ...).
    """
    if c.param_kind != "arclength_unit":
        raise ConfigurationError("extract_jets requires an arclength-normalized curve")
    if order < 2:
        raise ConfigurationError("jet order must be >= 2")
    if levels < order + 1:
        levels = order + 1
    thetas = theta0 * 2.0 ** (-np.arange(levels, dtype=float))
    grid = np.arange(n) / n
    ss = np.repeat(grid[None, :], levels, axis=0).ravel()
    tt = np.repeat(thetas, n)
    rho = 1.0 / np.asarray(curvature_of(c, ss))
    seed = 2.0 * rho * tt
    sp, tp = billiard_step_arrays(c, ss, tt, "forward", h_seed=seed)
    sm, tm = billiard_step_arrays(c, ss, tt, "backward", h_seed=seed)
    sp = sp.reshape(levels, n)
    sm = sm.reshape(levels, n)
    tp = tp.reshape(levels, n)
    tm = tm.reshape(levels, n)
    s2 = grid[None, :]
    t2 = thetas[:, None]

    odd_b = [p for p in range(1, order + 1) if p % 2 == 1]
    even_b = [p for p in range(1, order + 1) if p % 2 == 0]
    even_d = [p for p in range(2, order + 1) if p % 2 == 0]
    odd_d = [p for p in range(2, order + 1) if p % 2 == 1]

    coeffs_b = {}
    coeffs_d = {}
    worst = 0.0

    co, r1 = _parity_fit((sp - sm) / 2.0, thetas, odd_b, theta0)
    for p, row in zip(odd_b, co):
        coeffs_b[p] = row
    worst = max(worst, r1)
    if even_b:
        co, r2 = _parity_fit((sp + sm) / 2.0 - s2, thetas, even_b, theta0)
        for p, row in zip(even_b, co):
            coeffs_b[p] = row
        worst = max(worst, r2)
    if even_d:
        co, r3 = _parity_fit((tp - tm) / 2.0, thetas, even_d, theta0)
        for p, row in zip(even_d, co):
            coeffs_d[p] = row
        worst = max(worst, r3)
    if odd_d:
        co, r4 = _parity_fit((tp + tm) / 2.0 - t2, thetas, odd_d, theta0)
        for p, row in zip(odd_d, co):
            coeffs_d[p] = row
        worst = max(worst, r4)

    if worst > residual_tol:
        raise JetFitError("jet ladder fit residual %.3e exceeds %.3e" % (worst, residual_tol))

    b = [GridFn(coeffs_b[p]) for p in range(1, order + 1)]
    d = [GridFn(coeffs_d[p]) for p in range(2, order + 1)]
    return JetTable(b=b, d=d, order=order, fit_residual=worst)
