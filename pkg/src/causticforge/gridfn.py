"""Algebra of real 1-periodic functions on a uniform grid.

Functions live on theta_j = j/n.  When a resonance order q is involved, n
must be a multiple of q so that the shift theta -> theta + 1/q is an exact
rotation of the sample array; the resonant projection and the difference
operators are then exact discrete operators with no interpolation error.
Derivatives and antiderivatives are spectral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigurationError, ResonantInputError

__all__ = [
    "GridFn",
    "CircleMap",
    "AntiderivativeResult",
    "phase_matrix",
    "synthesize_many",
    "resonant_part",
    "nonresonant_part",
    "shift",
    "shift_cells",
    "difference",
    "invert_difference",
    "spectral_derivative",
    "antiderivative_from_zero",
    "decay_width_estimate",
]


@dataclass(frozen=True, eq=False)
class GridFn:
    """Real 1-periodic function sampled at theta_j = j/n.

    Immutable; all operations below are pure and return new instances.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ConfigurationError("GridFn requires a 1-d array of at least 2 samples")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("GridFn samples must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], n: int) -> "GridFn":
        return cls(np.asarray(f(np.arange(n) / n), dtype=float))

    @classmethod
    def zeros(cls, n: int) -> "GridFn":
        return cls(np.zeros(n))

    @classmethod
    def constant(cls, value: float, n: int) -> "GridFn":
        return cls(np.full(n, float(value)))

    @classmethod
    def from_spectrum(cls, coeffs: np.ndarray, n: int) -> "GridFn":
        """Build from half-spectrum c_k, k = 0..K (conjugate symmetry implied)."""
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.size > n // 2 + 1:
            raise ConfigurationError("spectrum longer than the grid can hold")
        full = np.zeros(n // 2 + 1, dtype=complex)
        full[: coeffs.size] = coeffs
        return cls(np.fft.irfft(full * n, n=n))

    # -- views -------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def spectrum(self) -> np.ndarray:
        """Half-spectrum c_k = (1/n) sum_j v_j e^{-2 pi i j k / n}, k = 0..n//2."""
        return np.fft.rfft(self.values) / self.n

    def mean(self) -> float:
        return float(self.values.mean())

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def _weighted_spectrum(self) -> np.ndarray:
        """Cached synthesis coefficients, trailing negligible modes dropped."""
        cached = getattr(self, "_wspec", None)
        if cached is not None:
            return cached
        c = self.spectrum()
        weights = np.full(c.size, 2.0)
        weights[0] = 1.0
        if self.n % 2 == 0:
            weights[-1] = 1.0  # Nyquist mode appears once, treated as cos
        wc = weights * c
        mag = np.abs(wc)
        peak = mag.max()
        keep = np.nonzero(mag > 1e-16 * peak)[0] if peak > 0 else np.array([0])
        wc = wc[: int(keep[-1]) + 1]
        object.__setattr__(self, "_wspec", wc)
        return wc

    def evaluate(self, theta) -> np.ndarray:
        """Trigonometric interpolation at arbitrary points (vectorized)."""
        theta = np.asarray(theta, dtype=float)
        wc = self._weighted_spectrum()
        if wc.size == 1:
            return np.full(theta.shape, wc[0].real)
        return (phase_matrix(theta.ravel(), wc.size - 1) @ wc).real.reshape(theta.shape)

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, GridFn):
            if other.n != self.n:
                raise ConfigurationError("GridFn size mismatch: %d vs %d" % (self.n, other.n))
            return other.values
        return np.asarray(other, dtype=float)

    def __add__(self, other):
        return GridFn(self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFn(self.values - self._coerce(other))

    def __rsub__(self, other):
        return GridFn(self._coerce(other) - self.values)

    def __mul__(self, other):
        return GridFn(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFn(self.values / self._coerce(other))

    def __rtruediv__(self, other):
        return GridFn(self._coerce(other) / self.values)

    def __neg__(self):
        return GridFn(-self.values)


class AntiderivativeResult(NamedTuple):
    fn: GridFn
    periodic: bool


def phase_matrix(theta: np.ndarray, k_max: int) -> np.ndarray:
    """e^{2 pi i k theta} for k = 0..k_max as an (m, k_max+1) array.

    Built by cumulative products of the base phase, which is several times
    faster than per-entry exponentials; the phase drift of the repeated
    multiplication stays below ~k_max * eps.
    """
    m = theta.size
    out = np.empty((m, k_max + 1), dtype=complex)
    out[:, 0] = 1.0
    if k_max >= 1:
        z = np.exp(2j * np.pi * theta)
        np.cumprod(np.broadcast_to(z[:, None], (m, k_max)), axis=1, out=out[:, 1:])
    return out


def synthesize_many(fns, theta: np.ndarray):
    """Evaluate several GridFns at the same points with one phase matrix."""
    specs = [f._weighted_spectrum() for f in fns]
    k_max = max(s.size for s in specs) - 1
    ph = phase_matrix(np.asarray(theta, dtype=float).ravel(), k_max)
    return [(ph[:, : s.size] @ s).real.reshape(np.shape(theta)) for s in specs]


def _check_divisibility(g: GridFn, q: int) -> int:
    if q < 2:
        raise ConfigurationError("resonance order q must be >= 2, got %r" % (q,))
    if g.n % q != 0:
        raise ConfigurationError("grid size %d is not a multiple of q = %d" % (g.n, q))
    return g.n // q


def shift_cells(g: GridFn, cells: int) -> GridFn:
    """Sample-exact rotation: result(theta) = g(theta + cells/n)."""
    return GridFn(np.roll(g.values, -int(cells)))


def shift(g: GridFn, offset: float) -> GridFn:
    """Shift by a rational grid offset: result(theta) = g(theta + offset).

    The offset must be an integer number of grid cells; anything else would
    require interpolation and is rejected.
    """
    cells = offset * g.n
    nearest = round(cells)
    if abs(cells - nearest) > 1e-9:
        raise ConfigurationError(
            "offset %r is not an integer number of grid cells for n = %d" % (offset, g.n)
        )
    return shift_cells(g, nearest)


def resonant_part(g: GridFn, q: int) -> GridFn:
    """[g]_q: average of g over the q shifts by 1/q.

    Equals the Fourier filter keeping modes k in q*Z, computed here by exact
    grid shifts (no FFT, no rounding beyond the mean).
    """
    m = _check_divisibility(g, q)
    class_means = g.values.reshape(q, m).mean(axis=0)
    return GridFn(np.tile(class_means, q))


def nonresonant_part(g: GridFn, q: int) -> GridFn:
    """{g}_q = g - [g]_q."""
    return g - resonant_part(g, q)


def difference(g: GridFn, q: int, direction: str = "forward") -> GridFn:
    """Difference over the step alpha = 1/q.

    forward:  g(theta + alpha) - g(theta)
    backward: g(theta) - g(theta - alpha)
    """
    m = _check_divisibility(g, q)
    if direction == "forward":
        return shift_cells(g, m) - g
    if direction == "backward":
        return g - shift_cells(g, -m)
    raise ConfigurationError("direction must be 'forward' or 'backward', got %r" % (direction,))


def invert_difference(g: GridFn, q: int, direction: str = "forward",
                      resonant_tol: float = 1e-9) -> GridFn:
    """Unique phi with [phi]_q = 0 solving the difference equation for g.

    The input must be non-resonant: the measured resonant part is compared
    against resonant_tol * sup|g| and rejected if larger.  The solution is
    assembled from the telescoping sum
        phi(theta) = (1/q) * sum_{j=1..q} j * g(theta + (j-1)/q)
    which satisfies difference(phi) = g - [g]_q identically, and obeys the
    sup-norm bound |phi| <= q * sup|g|.
    """
    m = _check_divisibility(g, q)
    res_norm = resonant_part(g, q).sup_norm()
    scale = g.sup_norm()
    if res_norm > resonant_tol * max(scale, 1e-300):
        raise ResonantInputError(
            "input to invert_difference has resonant part of sup norm %.3e "
            "(limit %.3e)" % (res_norm, resonant_tol * scale),
            res_norm,
        )
    if direction == "backward":
        # backward difference of phi equals g  <=>  forward difference of phi
        # equals g shifted left by alpha
        g = shift_cells(g, m)
    elif direction != "forward":
        raise ConfigurationError("direction must be 'forward' or 'backward', got %r" % (direction,))
    acc = np.zeros(g.n)
    for j in range(1, q + 1):
        acc += j * np.roll(g.values, -(j - 1) * m)
    phi = GridFn(acc / q)
    return phi - resonant_part(phi, q)


def spectral_derivative(g: GridFn, order: int = 1) -> GridFn:
    """d^order/dtheta^order by Fourier multiplication; Nyquist mode zeroed."""
    c = np.fft.rfft(g.values)
    k = np.arange(c.size, dtype=float)
    if g.n % 2 == 0 and order % 2 == 1:
        c[-1] = 0.0
    c *= (2j * np.pi * k) ** order
    return GridFn(np.fft.irfft(c, n=g.n))


def antiderivative_from_zero(g: GridFn) -> AntiderivativeResult:
    """theta -> integral of g from 0 to theta, evaluated at the grid points.

    The oscillatory modes are integrated spectrally; a nonzero mean adds the
    linear term mean(g) * theta, in which case the returned flag is False and
    the samples are not those of a periodic function.
    """
    c = np.fft.rfft(g.values)
    mean = c[0].real / g.n
    c = c.copy()
    c[0] = 0.0
    k = np.arange(c.size, dtype=float)
    k[0] = 1.0
    c /= 2j * np.pi * k
    osc = np.fft.irfft(c, n=g.n)
    osc -= osc[0]
    theta = np.arange(g.n) / g.n
    periodic = abs(mean) <= 1e-14 * max(1.0, g.sup_norm())
    values = osc if periodic else osc + mean * theta
    return AntiderivativeResult(GridFn(values), periodic)


def decay_width_estimate(g: GridFn) -> float:
    """Empirical exponential decay rate of the Fourier coefficients.

    Least-squares slope of log|c_k| against 2*pi*k over the resolved band
    (modes above a relative floor of 1e-13), clamped at zero.  A spectrum
    with fewer than three resolved modes (a near-pure tone) has no decay to
    fit and reports +inf.
    """
    c = g.spectrum()
    amps = np.abs(c[1:])
    if amps.size == 0 or np.max(amps) == 0.0:
        return math.inf
    k = np.arange(1, c.size)
    mask = amps > 1e-13 * np.max(amps)
    if np.count_nonzero(mask) < 3:
        return math.inf
    x = 2.0 * np.pi * k[mask]
    y = np.log(amps[mask])
    slope = np.polyfit(x, y, 1)[0]
    return max(0.0, -float(slope))


@dataclass(frozen=True, eq=False)
class CircleMap:
    """Degree-one circle map u(theta) = theta + v(theta) with periodic v.

    Construction validates orientation: 1 + v'(theta) > 0 on the grid.
    u(theta + 1) = u(theta) + 1 holds by construction.
    """

    displacement: GridFn

    def __post_init__(self):
        dv = spectral_derivative(self.displacement)
        if np.min(1.0 + dv.values) <= 0.0:
            raise ConfigurationError(
                "circle map is not orientation preserving: min(1 + v') = %.3e"
                % float(np.min(1.0 + dv.values))
            )

    @classmethod
    def identity(cls, n: int) -> "CircleMap":
        return cls(GridFn.zeros(n))

    @classmethod
    def rotation(cls, beta: float, n: int) -> "CircleMap":
        return cls(GridFn.constant(beta, n))

    @property
    def n(self) -> int:
        return self.displacement.n

    def derivative(self) -> GridFn:
        """u_theta = 1 + v' on the grid."""
        return spectral_derivative(self.displacement) + 1.0

    def grid_values(self) -> np.ndarray:
        """u(theta_j) for the map's own grid."""
        return self.displacement.grid + self.displacement.values

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return theta + self.displacement.evaluate(theta)
