"""The constructive pipeline: projection, linear solve, sweeps, KAM Newton.

One forge run, for a boundary r and an integer q >= 3:

1. arclength-normalize r (unit perimeter);
2. build the normal form and pull back the line y = 1/q to an approximate
   invariant circle map u_app; replace r by r o u_app so the iteration can
   run at the identity;
3. optional Nekhoroshev sweeps: remove only the non-resonant defect (pure
   reparametrizations, no geometric deformation);
4. KAM Newton loop: each step deletes the resonant defect by an exact
   radial scaling e^a r, then solves the conjugated second-difference
   equation for a reparametrization killing the rest to second order.

The forged boundary's uniform-grid chord family theta -> theta + 1/q is the
caustic family; the only geometric deformation comes from the radial
scalings, whose accumulated size tracks the true obstruction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .billiards import chord_data, defect_E, defect_F, extract_jets
from .curves import (
    FourierCurve,
    compose_with_map,
    geometric_distance,
    perimeter,
    radial_scale,
    reparametrize_arclength,
    scale,
    validate_curve,
)
from .errors import (
    ConfigurationError,
    NonConvergenceError,
    NumericalError,
    ResonantDivisorError,
    StepFailureError,
)
from .gridfn import (
    CircleMap,
    GridFn,
    invert_difference,
    nonresonant_part,
    resonant_part,
)
from .lazutkin import build_normal_form, initial_circle_map

__all__ = [
    "ForgeConfig",
    "ForgeResult",
    "KamReport",
    "radial_projection",
    "moser_levi_solve",
    "nek_sweep",
    "kam_step",
    "forge",
    "estimate_convergence_order",
]


@dataclass(frozen=True)
class ForgeConfig:
    """Knobs for one forge run; defaults match the CLI defaults."""

    q: int
    oversample: int = 32
    lazutkin_order: int = 2
    nek_sweeps: int = 0
    tol_e: float = 1e-12
    max_kam_iters: int = 30
    damping_halvings: int = 6
    divergence_ratio: float = 10.0
    nf_grid: int = 256
    jet_theta0: float = 1e-2
    jet_levels: int = 8

    def __post_init__(self):
        if not isinstance(self.q, (int, np.integer)) or self.q < 3:
            raise ConfigurationError("q must be an integer >= 3, got %r" % (self.q,))
        if self.oversample < 8:
            raise ConfigurationError("oversampling factor must be >= 8")
        if self.tol_e <= 0:
            raise ConfigurationError("tol_e must be positive")
        if self.lazutkin_order < 0:
            raise ConfigurationError("lazutkin_order must be >= 0")

    @property
    def n(self) -> int:
        return self.q * self.oversample


@dataclass
class KamReport:
    residual_before: float
    residual_after: float
    v_sup: float
    a_sup: float
    damping: float
    resonant_after_projection: float


@dataclass
class ForgeResult:
    input_curve: FourierCurve
    forged_curve: FourierCurve
    u_init: CircleMap
    residual_history: list
    deformation: float
    net_radial_log: GridFn
    q: int
    converged: bool
    kam_iters: int
    diagnostics: dict = field(default_factory=dict)


def _projection_log(c: FourierCurve, q: int, n: int, min_divisor: float = 1e-12) -> GridFn:
    """The radial exponent a with [E(e^a r, id)]_q = 0 and a(0) = 0.

    Uses the closed form a = log([F]_q(0) / [F]_q): the resonant part of F
    equals the resonant chord length, and its logarithmic derivative is
    exactly the resonant defect density, so this quadrature-free form kills
    the resonant defect identically.
    """
    F = defect_F(c, q, n=n)
    Fq = resonant_part(F, q)
    if float(np.min(np.abs(Fq.values))) < min_divisor:
        raise ResonantDivisorError(
            "resonant chord length [F]_q too close to zero (min %.3e)"
            % float(np.min(np.abs(Fq.values))))
    if float(np.min(Fq.values)) < 0:
        raise ResonantDivisorError("resonant chord length [F]_q changed sign")
    return GridFn(np.log(Fq.values[0] / Fq.values))


def radial_projection(c: FourierCurve, q: int, n: int | None = None):
    """Scale the boundary radially so the resonant defect vanishes.

    Returns (a, c_star) with c_star = e^a c; a is exactly 1/q-periodic and
    normalized to a(0) = 0.
    """
    n = n or 32 * q
    a = _projection_log(c, q, n)
    c_star = radial_scale(c, a)
    return a, c_star


def moser_levi_solve(c: FourierCurve, g: GridFn, q: int,
                     resonant_tol: float = 1e-8,
                     min_divisor: float = 1e-12) -> GridFn:
    """Solve the conjugated second-difference equation at u = id.

    Finds the unique non-resonant w with
        backward_diff( L12(theta, theta + 1/q) * forward_diff(w) ) = g
    through the nested scheme: invert the backward difference, correct by a
    1/q-periodic multiple of the weight to restore solvability, invert the
    forward difference.  The input must be non-resonant.
    """
    n = g.n
    if n % q != 0:
        raise ConfigurationError("grid size %d not a multiple of q = %d" % (n, q))
    theta = np.arange(n) / n
    l12 = chord_data(c, theta, theta + 1.0 / q).d12
    if float(np.min(np.abs(l12))) < min_divisor:
        raise ResonantDivisorError("mixed chord derivative L12 vanishes on the grid")
    p = GridFn(1.0 / l12)
    pq = resonant_part(p, q)
    if float(np.min(np.abs(pq.values))) < min_divisor:
        raise ResonantDivisorError("[p]_q too close to zero")
    h = invert_difference(g, q, "backward", resonant_tol)
    h1 = -resonant_part(p * h, q) / pq
    w = invert_difference(p * (h + h1), q, "forward", resonant_tol=1.0)
    # cheap exactness check of the assembled solution
    ph = (1.0 / p) * (GridFn(np.roll(w.values, -n // q)) - w)
    residual = (ph - GridFn(np.roll(ph.values, n // q)) - g).sup_norm()
    if residual > 1e-9 * max(g.sup_norm(), 1e-30):
        raise StepFailureError(
            "difference-equation solve residual %.3e too large" % residual)
    return w


def _nonresonant_defect(c: FourierCurve, q: int, n: int):
    E = defect_E(c, q, n=n)
    return E, nonresonant_part(E, q)


def nek_sweep(c: FourierCurve, q: int, steps: int = 1, n: int | None = None):
    """Remove the non-resonant defect by repeated reparametrization.

    Each step solves the linearized equation with the resonant part frozen
    and composes with id + v; the resonant defect moves only at second
    order.  Returns (curve, per-step history).  A step that fails to shrink
    the non-resonant norm is rejected and iteration stops, returning the
    best iterate so far (flagged in the history).
    """
    n = n or 32 * q
    history = []
    for _ in range(steps):
        E, En = _nonresonant_defect(c, q, n)
        before = En.sup_norm()
        if before < 1e-14 * (1.0 + E.sup_norm()):
            break
        v = moser_levi_solve(c, -En, q)
        try:
            c_try = compose_with_map(c, CircleMap(v))
        except ConfigurationError:
            history.append({"nonresonant_before": before, "accepted": False,
                            "reason": "map not orientation preserving"})
            break
        _, En_try = _nonresonant_defect(c_try, q, n)
        after = En_try.sup_norm()
        if after >= before:
            history.append({"nonresonant_before": before,
                            "nonresonant_after": after, "accepted": False,
                            "reason": "no contraction"})
            break
        history.append({"nonresonant_before": before,
                        "nonresonant_after": after, "accepted": True})
        c = c_try
    return c, history


def kam_step(c: FourierCurve, q: int, n: int | None = None, damping: float = 1.0):
    """One projected Newton step: radial projection then reparametrization.

    Returns (curve, KamReport, applied radial exponent).  With damping t < 1
    both the radial exponent and the displacement are scaled by t (the
    direction is still computed from the full linearization).
    """
    n = n or 32 * q
    E0 = defect_E(c, q, n=n)
    before = E0.sup_norm()
    a = _projection_log(c, q, n)
    c_star = radial_scale(c, a)
    E_star = defect_E(c_star, q, n=n)
    res_after_proj = resonant_part(E_star, q).sup_norm()
    g = nonresonant_part(E_star, q)
    v = moser_levi_solve(c_star, -g, q)
    a_applied = a * damping
    if damping != 1.0:
        c_star = radial_scale(c, a_applied)
    try:
        u = CircleMap(v * damping)
    except ConfigurationError as exc:
        raise StepFailureError("correction is not a circle map: %s" % exc) from exc
    c_plus = compose_with_map(c_star, u)
    after = defect_E(c_plus, q, n=n).sup_norm()
    report = KamReport(residual_before=before, residual_after=after,
                       v_sup=v.sup_norm(), a_sup=a.sup_norm(), damping=damping,
                       resonant_after_projection=res_after_proj)
    return c_plus, report, a_applied


def estimate_convergence_order(history, floor: float = 5e-13):
    """Order estimate from the last three usable residuals, or None.

    Entries at or below `floor` sit in round-off and are excluded; three
    strictly decreasing entries are required.
    """
    usable = [e for e in history if e > floor]
    if len(usable) < 3:
        return None
    e0, e1, e2 = usable[-3:]
    if not (e2 < e1 < e0):
        return None
    num = np.log(e2 / e1)
    den = np.log(e1 / e0)
    if den >= 0:
        return None
    return float(num / den)


def forge(c: FourierCurve, cfg: ForgeConfig) -> ForgeResult:
    """Deform a boundary into one admitting a caustic of rotation number 1/q.

    Raises NonConvergenceError (carrying the best iterate and its history)
    if the residual target is not reached within the iteration budget.
    """
    validate_curve(c)
    q, n = cfg.q, cfg.n
    scale_back = perimeter(c)
    c_unit = reparametrize_arclength(c)
    t_start = time.perf_counter()

    jet_order = max(3, 2 * cfg.lazutkin_order + 3)
    jets = extract_jets(c_unit, jet_order, n=cfg.nf_grid,
                        theta0=cfg.jet_theta0, levels=cfg.jet_levels)
    nf = build_normal_form(c_unit, jets, cfg.lazutkin_order, n=cfg.nf_grid)
    u_app = initial_circle_map(nf, c_unit, q, n)
    c_work = compose_with_map(c_unit, u_app)

    nek_history = []
    if cfg.nek_sweeps > 0:
        c_work, nek_history = nek_sweep(c_work, q, cfg.nek_sweeps, n)

    residual_history = [defect_E(c_work, q, n=n).sup_norm()]
    net_a = GridFn.zeros(n)
    kam_reports = []
    converged = residual_history[-1] <= cfg.tol_e
    iters = 0
    while not converged and iters < cfg.max_kam_iters:
        before = residual_history[-1]
        accepted = None
        damping = 1.0
        last_err = None
        for _ in range(cfg.damping_halvings + 1):
            try:
                c_try, report, a_applied = kam_step(c_work, q, n, damping)
            except NumericalError as exc:
                last_err = exc
                damping *= 0.5
                continue
            if report.residual_after < before or report.residual_after <= cfg.tol_e:
                accepted = (c_try, report, a_applied)
                break
            if report.residual_after > cfg.divergence_ratio * before:
                last_err = StepFailureError(
                    "residual diverged: %.3e -> %.3e" % (before, report.residual_after))
            damping *= 0.5
        if accepted is None:
            result = _make_result(c, c_unit, c_work, u_app, residual_history,
                                  net_a, q, False, iters, scale_back, nf, jets,
                                  nek_history, kam_reports, t_start)
            raise NonConvergenceError(
                "KAM step failed to decrease the residual at iteration %d (%s)"
                % (iters, last_err), result)
        c_work, report, a_applied = accepted
        kam_reports.append(report)
        net_a = net_a + a_applied
        residual_history.append(report.residual_after)
        iters += 1
        converged = residual_history[-1] <= cfg.tol_e

    result = _make_result(c, c_unit, c_work, u_app, residual_history, net_a, q,
                          converged, iters, scale_back, nf, jets, nek_history,
                          kam_reports, t_start)
    if not converged:
        raise NonConvergenceError(
            "forge did not reach tol %.1e in %d iterations (best %.3e)"
            % (cfg.tol_e, cfg.max_kam_iters, min(residual_history)), result)
    return result


def _make_result(c_in, c_unit, c_work, u_app, residual_history, net_a, q,
                 converged, iters, scale_back, nf, jets, nek_history,
                 kam_reports, t_start) -> ForgeResult:
    forged = scale(c_work, scale_back)
    deformation = geometric_distance(c_in, forged)
    diagnostics = {
        "wall_s": time.perf_counter() - t_start,
        "jet_fit_residual": jets.fit_residual,
        "nf_source_fit_errors": nf.diagnostics.get("source_fit_errors", []),
        "nf_refine_leftovers": nf.diagnostics.get("refine_leftovers", []),
        "input_width_estimate": c_in.width_estimate(),
        "forged_width_estimate": forged.width_estimate(),
        "nek_history": nek_history,
        "kam_reports": [vars(r) for r in kam_reports],
        "convergence_order": estimate_convergence_order(residual_history),
        "unit_scale": scale_back,
    }
    return ForgeResult(input_curve=c_in, forged_curve=forged, u_init=u_app,
                       residual_history=list(residual_history),
                       deformation=deformation, net_radial_log=net_a, q=q,
                       converged=converged, kam_iters=iters,
                       diagnostics=diagnostics)
