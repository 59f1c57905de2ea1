"""Strictly convex closed planar curves as truncated Fourier series.

A curve is stored as half-spectra of its two coordinates (modes k = 0..K,
conjugate symmetry implied), so evaluation, derivatives up to order 3 and
resampling are all spectral.  Nonlinear operations (radial scaling,
composition with a circle map, arclength reparametrization) resample on an
oversampled grid and refit, growing the grid until the discarded spectral
tail is negligible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ConfigurationError,
    ConvexityError,
    DegenerateSpeedError,
    ResolutionError,
)
from .gridfn import (
    GridFn,
    CircleMap,
    antiderivative_from_zero,
    phase_matrix,
    spectral_derivative,
)

__all__ = [
    "FourierCurve",
    "CurvatureProfile",
    "evaluate",
    "curvature_of",
    "reparametrize_arclength",
    "radial_scale",
    "compose_with_map",
    "curve_from_curvature",
    "curvature_profile_of",
    "smooth_profile",
    "geometric_distance",
    "perimeter",
    "area_centroid",
    "translate",
    "scale",
]

# minimum-speed / minimum-curvature thresholds standing in for the uniform
# convexity constant of the problem; configurable per call
D_SPEED_DEFAULT = 1e-3
D_CURV_DEFAULT = 1e-3

_REL_TAIL = 1e-13   # aliasing check: top-octave energy relative to peak
_REL_KEEP = 1e-15   # coefficient truncation threshold relative to peak
_MAX_MODES = 4096


@dataclass(frozen=True, eq=False)
class FourierCurve:
    """Closed curve s -> (x(s), y(s)), periodic with period 1.

    cx, cy hold the half-spectra c_k for k = 0..K; the real coordinate is
    c_0.real + 2 Re sum_{k>=1} c_k e^{2 pi i k s}.  param_kind records
    whether the parametrization is unit-speed with unit perimeter.
    """

    cx: np.ndarray
    cy: np.ndarray
    param_kind: str = "general"

    def __post_init__(self):
        cx = np.array(self.cx, dtype=complex)
        cy = np.array(self.cy, dtype=complex)
        if cx.ndim != 1 or cy.ndim != 1 or cx.size != cy.size or cx.size < 2:
            raise ConfigurationError("cx, cy must be 1-d arrays of equal size >= 2")
        if not (np.all(np.isfinite(cx)) and np.all(np.isfinite(cy))):
            raise ConfigurationError("curve coefficients must be finite")
        if abs(cx[0].imag) > 0 or abs(cy[0].imag) > 0:
            raise ConfigurationError("mode-0 coefficients must be real")
        cx.flags.writeable = False
        cy.flags.writeable = False
        object.__setattr__(self, "cx", cx)
        object.__setattr__(self, "cy", cy)
        if self.param_kind not in ("general", "arclength_unit"):
            raise ConfigurationError("unknown param_kind %r" % (self.param_kind,))

    @property
    def k_max(self) -> int:
        return self.cx.size - 1

    # -- evaluation --------------------------------------------------------

    def evaluate(self, s, deriv_order: int = 0) -> np.ndarray:
        """r(s) or a parameter derivative; returns shape s.shape + (2,)."""
        if not 0 <= deriv_order <= 3:
            raise ConfigurationError("deriv_order must be in 0..3, got %r" % (deriv_order,))
        s = np.asarray(s, dtype=float)
        k = np.arange(self.cx.size)
        w = (2j * np.pi * k) ** deriv_order
        w = w * np.where(k == 0, 1.0, 2.0)
        phases = phase_matrix(s.ravel(), self.cx.size - 1)
        x = (phases @ (w * self.cx)).real.reshape(s.shape)
        y = (phases @ (w * self.cy)).real.reshape(s.shape)
        return np.stack([x, y], axis=-1)

    def grid_samples(self, n: int, deriv_order: int = 0) -> np.ndarray:
        """r (or derivative) at s_j = j/n via zero-padded inverse FFT."""
        if n < 2 * self.k_max + 2:
            return self.evaluate(np.arange(n) / n, deriv_order)
        k = np.arange(self.cx.size)
        w = (2j * np.pi * k) ** deriv_order
        out = np.empty((n, 2))
        for i, c in enumerate((self.cx, self.cy)):
            full = np.zeros(n // 2 + 1, dtype=complex)
            full[: c.size] = w * c
            out[:, i] = np.fft.irfft(full * n, n=n)
        return out

    def evaluate01(self, s):
        """Point and velocity from a single phase matrix (hot-loop helper)."""
        s = np.asarray(s, dtype=float)
        k = np.arange(self.cx.size)
        dbl = np.where(k == 0, 1.0, 2.0)
        phases = phase_matrix(s.ravel(), self.cx.size - 1)
        w1 = 2j * np.pi * k
        r = np.stack([(phases @ (dbl * self.cx)).real.reshape(s.shape),
                      (phases @ (dbl * self.cy)).real.reshape(s.shape)], axis=-1)
        dr = np.stack([(phases @ (dbl * w1 * self.cx)).real.reshape(s.shape),
                       (phases @ (dbl * w1 * self.cy)).real.reshape(s.shape)], axis=-1)
        return r, dr

    def speed(self, s) -> np.ndarray:
        d = self.evaluate(s, 1)
        return np.hypot(d[..., 0], d[..., 1])

    def width_estimate(self) -> float:
        """Smaller Fourier-decay width of the two coordinate spectra."""
        from .gridfn import decay_width_estimate

        n = max(256, 4 * (self.k_max + 1))
        xs = self.grid_samples(n)
        wx = decay_width_estimate(GridFn(xs[:, 0] - xs[:, 0].mean()))
        wy = decay_width_estimate(GridFn(xs[:, 1] - xs[:, 1].mean()))
        return min(wx, wy)


def _dense_n(c: FourierCurve, minimum: int = 512) -> int:
    n = max(minimum, 8 * (c.k_max + 1))
    return 1 << (n - 1).bit_length()


def evaluate(c: FourierCurve, s, deriv_order: int = 0) -> np.ndarray:
    return c.evaluate(s, deriv_order)


def curvature_of(c: FourierCurve, s, d_speed: float = D_SPEED_DEFAULT) -> np.ndarray:
    """Signed planar curvature (positive for the counterclockwise convex case)."""
    d1 = c.evaluate(s, 1)
    d2 = c.evaluate(s, 2)
    sp = np.hypot(d1[..., 0], d1[..., 1])
    if np.min(sp) < d_speed:
        raise DegenerateSpeedError("speed %.3e below threshold %.3e" % (float(np.min(sp)), d_speed))
    return (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]) / sp**3


def perimeter(c: FourierCurve, n: int | None = None) -> float:
    n = n or _dense_n(c)
    d1 = c.grid_samples(n, 1)
    return float(np.hypot(d1[:, 0], d1[:, 1]).mean())


def area_centroid(c: FourierCurve, n: int | None = None):
    """(signed area, centroid) of the enclosed region, by spectral quadrature."""
    n = n or _dense_n(c)
    r = c.grid_samples(n)
    d1 = c.grid_samples(n, 1)
    x, y = r[:, 0], r[:, 1]
    area = float(np.mean(x * d1[:, 1] - y * d1[:, 0])) / 2.0
    cx = float(np.mean(x * x * d1[:, 1])) / (2.0 * area)
    cy = -float(np.mean(y * y * d1[:, 0])) / (2.0 * area)
    return area, np.array([cx, cy])


def translate(c: FourierCurve, vec) -> FourierCurve:
    cx = c.cx.copy()
    cy = c.cy.copy()
    cx[0] += float(vec[0])
    cy[0] += float(vec[1])
    return FourierCurve(cx, cy, c.param_kind)


def scale(c: FourierCurve, factor: float) -> FourierCurve:
    kind = c.param_kind if factor == 1.0 else "general"
    return FourierCurve(c.cx * factor, c.cy * factor, kind)


def validate_curve(c: FourierCurve, d_speed: float = D_SPEED_DEFAULT,
                   d_curv: float = D_CURV_DEFAULT, n: int | None = None) -> None:
    """Check the uniform convexity conditions and the placement invariants.

    Raises on: speed below d_speed, curvature below d_curv, tangent winding
    different from +1 (orientation), or origin not strictly inside.
    """
    n = n or _dense_n(c)
    r = c.grid_samples(n)
    d1 = c.grid_samples(n, 1)
    d2 = c.grid_samples(n, 2)
    sp = np.hypot(d1[:, 0], d1[:, 1])
    if np.min(sp) < d_speed:
        raise DegenerateSpeedError(
            "min speed %.3e below threshold %.3e" % (float(np.min(sp)), d_speed))
    kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / sp**3
    if np.min(kappa) < d_curv:
        raise ConvexityError(
            "min curvature %.3e below threshold %.3e" % (float(np.min(kappa)), d_curv))
    tangent_angle = np.unwrap(np.arctan2(d1[:, 1], d1[:, 0]))
    turning = (tangent_angle[-1] - tangent_angle[0] + (tangent_angle[1] - tangent_angle[0])) / (2 * np.pi)
    if abs(turning - 1.0) > 0.1:
        raise ConvexityError("tangent winding %.3f != 1 (orientation must be CCW)" % turning)
    pos_angle = np.unwrap(np.arctan2(r[:, 1], r[:, 0]))
    wind = (pos_angle[-1] - pos_angle[0] + (pos_angle[1] - pos_angle[0])) / (2 * np.pi)
    if abs(wind - 1.0) > 0.1 or np.min(np.hypot(r[:, 0], r[:, 1])) < 1e-9:
        raise ConvexityError("origin is not strictly inside the curve")


def _fit_from_samples(xy: np.ndarray, param_kind: str = "general") -> FourierCurve:
    """Least-tail Fourier fit of uniformly sampled coordinates."""
    n = xy.shape[0]
    cx = np.fft.rfft(xy[:, 0]) / n
    cy = np.fft.rfft(xy[:, 1]) / n
    peak = max(np.max(np.abs(cx)), np.max(np.abs(cy)))
    keep = np.nonzero(np.maximum(np.abs(cx), np.abs(cy)) > _REL_KEEP * peak)[0]
    k_keep = max(1, int(keep[-1])) if keep.size else 1
    k_keep = min(k_keep, n // 2 - 1) if n // 2 - 1 >= 1 else k_keep
    return FourierCurve(cx[: k_keep + 1], cy[: k_keep + 1], param_kind)


def _tail_resolved(xy: np.ndarray) -> bool:
    n = xy.shape[0]
    cx = np.fft.rfft(xy[:, 0]) / n
    cy = np.fft.rfft(xy[:, 1]) / n
    mag = np.maximum(np.abs(cx), np.abs(cy))
    peak = np.max(mag)
    top = mag[int(0.8 * mag.size):]
    return bool(np.max(top) < _REL_TAIL * peak)


def _resample_refit(sample_fn, n_start: int, param_kind: str = "general") -> FourierCurve:
    """Sample, check the spectral tail, double the grid until resolved."""
    n = 1 << (max(n_start, 64) - 1).bit_length()
    while True:
        xy = sample_fn(n)
        if _tail_resolved(xy):
            return _fit_from_samples(xy, param_kind)
        if n // 2 > _MAX_MODES:
            raise ResolutionError(
                "spectral tail not resolved at %d modes (aliasing)" % (n // 2,))
        n *= 2


def reparametrize_arclength(c: FourierCurve, n: int | None = None) -> FourierCurve:
    """Unit-speed representative with total length rescaled to 1.

    The cumulative-length map is computed spectrally and inverted by Newton
    at the target grid; the geometry is divided by the perimeter so the
    output has unit perimeter and |r'(s)| = 1.
    """
    n = n or _dense_n(c, 1024)
    d1 = c.grid_samples(n, 1)
    sp = GridFn(np.hypot(d1[:, 0], d1[:, 1]))
    if np.min(sp.values) < D_SPEED_DEFAULT:
        raise DegenerateSpeedError("speed too small for arclength inversion")
    total = sp.mean()
    osc = antiderivative_from_zero(sp - total).fn
    # s(t) = (total * t + osc(t)) / total, strictly increasing in t
    s_grid = (total * np.arange(n) / n + osc.values) / total

    def s_of(t):
        return t + osc.evaluate(t) / total

    def ds_dt(t):
        return np.ones_like(t) + (spectral_derivative(osc).evaluate(t)) / total

    targets = np.arange(n) / n
    idx = np.searchsorted(s_grid, targets)
    idx = np.clip(idx, 1, n - 1)
    t_lo = (idx - 1) / n
    frac = (targets - s_grid[idx - 1]) / np.maximum(s_grid[idx] - s_grid[idx - 1], 1e-300)
    t = t_lo + np.clip(frac, 0.0, 1.0) / n
    for _ in range(60):
        res = s_of(t) - targets
        step = res / ds_dt(t)
        t = t - step
        if np.max(np.abs(step)) < 1e-15:
            break
    else:
        raise DegenerateSpeedError("arclength inversion did not converge")

    def sampler(m):
        if m == n:
            tt = t
        else:
            tt = np.interp(np.arange(m) / m, targets, t, period=1.0)
            for _ in range(60):
                res = s_of(tt) - np.arange(m) / m
                step = res / ds_dt(tt)
                tt = tt - step
                if np.max(np.abs(step)) < 1e-15:
                    break
        return c.evaluate(tt) / total

    return _resample_refit(sampler, n, param_kind="arclength_unit")


def radial_scale(c: FourierCurve, a: GridFn, d_speed: float = D_SPEED_DEFAULT,
                 d_curv: float = D_CURV_DEFAULT) -> FourierCurve:
    """Curve s -> e^{a(s)} r(s), refit in Fourier form and re-validated."""

    def sampler(m):
        r = c.grid_samples(m)
        amp = np.exp(a.evaluate(np.arange(m) / m))
        return r * amp[:, None]

    out = _resample_refit(sampler, max(2 * a.n, 4 * (c.k_max + 1)))
    validate_curve(out, d_speed, d_curv)
    return out


def compose_with_map(c: FourierCurve, u: CircleMap) -> FourierCurve:
    """Curve theta -> r(u(theta)); a pure reparametrization of the same image."""

    def sampler(m):
        theta = np.arange(m) / m
        return c.evaluate(u(theta))

    return _resample_refit(sampler, max(2 * u.n, 4 * (c.k_max + 1)))


@dataclass(frozen=True, eq=False)
class CurvatureProfile:
    """Radius of curvature as a function of normalized tangent angle.

    rho > 0 everywhere and its first Fourier harmonics vanish (the linear
    closure conditions for reconstructing a closed convex curve).
    """

    rho: GridFn

    def __post_init__(self):
        v = self.rho.values
        if np.min(v) <= 0.0:
            raise ConvexityError("curvature profile must be strictly positive")
        c1 = self.rho.spectrum()[1]
        if abs(c1) > 1e-10 * max(self.rho.mean(), 1e-300):
            raise ConfigurationError(
                "first harmonic of rho must vanish for closure, got |c1| = %.3e" % abs(c1))

    @property
    def n(self) -> int:
        return self.rho.n

    def mean_radius(self) -> float:
        return self.rho.mean()


def curve_from_curvature(p: CurvatureProfile) -> FourierCurve:
    """Closed convex curve whose radius of curvature in tangent angle is p.rho.

    Integrates dr/dpsi = 2 pi rho(psi) (cos 2 pi psi, sin 2 pi psi); the
    vanishing first harmonics make both component integrands mean-free, so
    the result closes up exactly.  The curve is recentred on its area
    centroid so the origin lies strictly inside.
    """
    n = max(p.n, 256)
    psi = np.arange(n) / n
    rho = p.rho.evaluate(psi) if n != p.n else p.rho.values
    fx = GridFn(2 * np.pi * rho * np.cos(2 * np.pi * psi))
    fy = GridFn(2 * np.pi * rho * np.sin(2 * np.pi * psi))
    ix, px_ok = antiderivative_from_zero(fx)
    iy, py_ok = antiderivative_from_zero(fy)
    drift = math.hypot(fx.mean(), fy.mean())
    peri = 2 * np.pi * float(np.mean(rho))
    if not (px_ok and py_ok) or drift > 1e-12 * peri:
        raise ConfigurationError(
            "closure conditions violated: |r(1) - r(0)| = %.3e" % drift)
    curve = _fit_from_samples(np.stack([ix.values, iy.values], axis=1))
    _, centroid = area_centroid(curve)
    curve = translate(curve, -centroid)
    validate_curve(curve)
    return curve


def curvature_profile_of(c: FourierCurve, n: int = 512) -> CurvatureProfile:
    """Extract rho as a function of normalized tangent angle psi.

    Inverts the monotone map s -> tangent angle on a dense grid, then
    evaluates 1/kappa at the preimages of the uniform psi grid.
    """
    m = _dense_n(c, max(1024, 2 * n))
    d1 = c.grid_samples(m, 1)
    d2 = c.grid_samples(m, 2)
    sp = np.hypot(d1[:, 0], d1[:, 1])
    kappa = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / sp**3
    if np.min(kappa) <= 0:
        raise ConvexityError("curve is not strictly convex")
    phi = np.unwrap(np.arctan2(d1[:, 1], d1[:, 0])) / (2 * np.pi)
    psi0 = phi[0]
    # psi(s) rises by exactly 1 per period; target the uniform grid in [psi0, psi0+1)
    targets = psi0 + np.mod(np.arange(n) / n - psi0, 1.0)
    idx = np.clip(np.searchsorted(phi, targets), 1, m - 1)
    s = (idx - 1 + np.clip((targets - phi[idx - 1]) /
                           np.maximum(phi[idx] - phi[idx - 1], 1e-300), 0.0, 1.0)) / m
    # Newton polish on psi(s) = target with psi' = kappa * speed / (2 pi)
    for _ in range(50):
        d1s = c.evaluate(s, 1)
        d2s = c.evaluate(s, 2)
        sps = np.hypot(d1s[..., 0], d1s[..., 1])
        phis = np.arctan2(d1s[..., 1], d1s[..., 0]) / (2 * np.pi)
        res = np.mod(phis - targets + 0.5, 1.0) - 0.5
        dres = (d1s[..., 0] * d2s[..., 1] - d1s[..., 1] * d2s[..., 0]) / sps**2 / (2 * np.pi)
        step = res / dres
        s = s - step
        if np.max(np.abs(step)) < 1e-15:
            break
    rho = 1.0 / np.asarray(curvature_of(c, s))
    return CurvatureProfile(GridFn(rho))


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity transition: 1 for x <= 1, 0 for x >= 2."""

    def bump(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    up = bump(2.0 - x)
    down = bump(x - 1.0)
    with np.errstate(invalid="ignore"):
        w = np.where(x <= 1.0, 1.0, np.where(x >= 2.0, 0.0, up / (up + down)))
    return w


def smooth_profile(p: CurvatureProfile, cutoff: float) -> CurvatureProfile:
    """Spectral mollification of rho with effective bandwidth `cutoff`.

    Modes up to the cutoff pass untouched, a smooth rolloff kills everything
    beyond twice the cutoff, and the first harmonics are projected out
    exactly afterwards so the result still closes up.
    """
    if cutoff <= 0:
        raise ConfigurationError("cutoff must be positive")
    c = p.rho.spectrum()
    k = np.arange(c.size, dtype=float)
    c = c * _smooth_step(k / cutoff)
    c[1] = 0.0
    out = GridFn.from_spectrum(c, p.n)
    if np.min(out.values) <= 0.0:
        raise ConvexityError("positivity lost after smoothing")
    return CurvatureProfile(out)


def _project_points(c: FourierCurve, pts: np.ndarray, n_dense: int = 2048) -> np.ndarray:
    """Distance from each point to the curve (nearest-point Newton)."""
    dense = c.grid_samples(n_dense)
    d2 = (pts[:, None, 0] - dense[None, :, 0]) ** 2 + (pts[:, None, 1] - dense[None, :, 1]) ** 2
    s = np.argmin(d2, axis=1) / n_dense
    for _ in range(40):
        r = c.evaluate(s)
        d1 = c.evaluate(s, 1)
        dd = c.evaluate(s, 2)
        diff = r - pts
        f = np.sum(diff * d1, axis=-1)
        fp = np.sum(d1 * d1, axis=-1) + np.sum(diff * dd, axis=-1)
        step = f / np.where(np.abs(fp) < 1e-300, 1e-300, fp)
        step = np.clip(step, -0.5 / n_dense * 8, 0.5 / n_dense * 8)
        s = s - step
        if np.max(np.abs(step)) < 1e-16:
            break
    return np.hypot(*(c.evaluate(s) - pts).T)


def geometric_distance(c1: FourierCurve, c2: FourierCurve,
                       n_samples: int = 512) -> float:
    """Parametrization-invariant symmetric sup distance between two curves."""
    p1 = c1.grid_samples(n_samples)
    p2 = c2.grid_samples(n_samples)
    d12 = np.max(_project_points(c2, p1))
    d21 = np.max(_project_points(c1, p2))
    return float(max(d12, d21))
