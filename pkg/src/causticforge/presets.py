"""Built-in boundary generators.

All presets produce unit-perimeter, origin-centred curves so the test and
acceptance suites run without external data.  The string grammar used by the
CLI is:

    circle
    ellipse:A,B
    perturbed:MODE:AMP[,MODE:AMP...]
    smooth:EXPONENT[:SEED]
"""

from __future__ import annotations

import numpy as np

from .curves import (
    CurvatureProfile,
    FourierCurve,
    curve_from_curvature,
    reparametrize_arclength,
)
from .errors import ConfigurationError
from .gridfn import GridFn

__all__ = [
    "circle",
    "ellipse",
    "perturbed_circle",
    "smooth_tail_profile",
    "from_spec",
]


def circle(radius: float | None = None) -> FourierCurve:
    """Circle of the given radius (default 1/(2 pi): unit perimeter)."""
    r = radius if radius is not None else 1.0 / (2.0 * np.pi)
    cx = np.array([0.0, r / 2.0], dtype=complex)
    cy = np.array([0.0, -0.5j * r], dtype=complex)
    kind = "arclength_unit" if radius is None else "general"
    return FourierCurve(cx, cy, kind)


def ellipse(a: float, b: float, unit_perimeter: bool = True) -> FourierCurve:
    """Axis-aligned ellipse (a cos 2 pi t, b sin 2 pi t), optionally rescaled."""
    if a <= 0 or b <= 0:
        raise ConfigurationError("ellipse semi-axes must be positive")
    cx = np.array([0.0, a / 2.0], dtype=complex)
    cy = np.array([0.0, -0.5j * b], dtype=complex)
    c = FourierCurve(cx, cy)
    return reparametrize_arclength(c) if unit_perimeter else c


def perturbed_circle(modes: dict[int, float] | None = None, n: int = 512,
                     unit_perimeter: bool = True) -> FourierCurve:
    """Curvature-profile perturbation rho = R (1 + sum amp cos(2 pi m psi)).

    Only modes m >= 2 are allowed (the first harmonic is reserved by the
    closure conditions).  Defaults reproduce the desk-scale test family.
    """
    if modes is None:
        modes = {2: 0.05, 3: 0.02}
    psi = np.arange(n) / n
    base = np.ones(n)
    for m, amp in modes.items():
        if m < 2:
            raise ConfigurationError("perturbation modes must be >= 2 (closure)")
        base = base + amp * np.cos(2 * np.pi * m * psi)
    if np.min(base) <= 0:
        raise ConfigurationError("perturbation too large: rho loses positivity")
    rho = base / (2.0 * np.pi)
    c = curve_from_curvature(CurvatureProfile(GridFn(rho)))
    return reparametrize_arclength(c) if unit_perimeter else c


def smooth_tail_profile(exponent: float = 6.0, seed: int = 7, n: int = 512,
                        amplitude: float = 1.0, k_max: int = 32) -> CurvatureProfile:
    """Curvature profile with a |k|^-exponent Fourier tail (finitely smooth feel)."""
    rng = np.random.default_rng(seed)
    psi = np.arange(n) / n
    base = np.ones(n)
    for m in range(2, k_max + 1):
        phase = rng.uniform(0, 2 * np.pi)
        base = base + amplitude * m ** (-exponent) * np.cos(2 * np.pi * m * psi + phase)
    if np.min(base) <= 0:
        raise ConfigurationError("tail amplitude too large: rho loses positivity")
    return CurvatureProfile(GridFn(base / (2.0 * np.pi)))


def from_spec(spec: str) -> FourierCurve:
    """Parse a preset string (see module docstring for the grammar)."""
    parts = spec.split(":")
    name = parts[0].strip().lower()
    try:
        if name == "circle":
            return circle()
        if name == "ellipse":
            a_str, b_str = parts[1].split(",")
            return ellipse(float(a_str), float(b_str))
        if name == "perturbed":
            if len(parts) == 1:
                return perturbed_circle()
            modes: dict[int, float] = {}
            for chunk in ":".join(parts[1:]).split(","):
                m_str, amp_str = chunk.split(":")
                modes[int(m_str)] = float(amp_str)
            return perturbed_circle(modes)
        if name == "smooth":
            exponent = float(parts[1]) if len(parts) > 1 else 6.0
            seed = int(parts[2]) if len(parts) > 2 else 7
            prof = smooth_tail_profile(exponent, seed)
            return reparametrize_arclength(curve_from_curvature(prof))
    except (IndexError, ValueError) as exc:
        raise ConfigurationError("cannot parse preset %r: %s" % (spec, exc)) from exc
    raise ConfigurationError("unknown preset %r" % (spec,))
