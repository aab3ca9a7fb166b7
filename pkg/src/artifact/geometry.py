"""Charts of the reference domain and the transition maps between them.

Every chart is identified by a lowercase name.  The half-plane chart is the
canonical one: each other chart ``c`` comes with a closed-form map
``T_c`` sending the chart image onto the upper half-plane,

* ``disk``:  ``T(z) = i (1 - z) / (1 + z)``
* ``strip``: ``T(z) = tanh(z / 2)`` on ``0 < Im z < pi``
* ``log``:   ``T(z) = tan(z / 2)`` on ``Im z > 0`` (a multivalued chart; the
  inverse needs an integer winding index)

Transitions between two arbitrary charts are composed through the half-plane
and carry derivatives up to third order, which is what the Lie calculus in
:mod:`artifact.fields` needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BranchError, DomainError

HALFPLANE = "halfplane"
DISK = "disk"
STRIP = "strip"
LOG = "log"
CHARTS = (HALFPLANE, DISK, STRIP, LOG)

# distance below which a point counts as sitting on a singular boundary point
SINGULAR_EPS = 1e-10


def chart_id(name: str) -> str:
    """Validate a chart name and return it."""
    if name not in CHARTS:
        raise ValueError(f"unknown chart {name!r}; expected one of {CHARTS}")
    return name


def is_multivalued(chart: str) -> bool:
    return chart == LOG


# ---------------------------------------------------------------------------
# domain membership


def interior_mask(chart: str, z, tol: float = 0.0) -> np.ndarray:
    """Boolean mask of points strictly inside the chart image (by margin ``tol``)."""
    z = np.asarray(z, dtype=complex)
    if chart in (HALFPLANE, LOG):
        return z.imag > tol
    if chart == DISK:
        return (np.abs(z) < 1.0 - tol) & (np.abs(z + 1.0) > SINGULAR_EPS)
    if chart == STRIP:
        return (z.imag > tol) & (z.imag < np.pi - tol)
    raise ValueError(chart)


def closed_mask(chart: str, z, tol: float = 1e-12) -> np.ndarray:
    """Boolean mask of points inside the closure of the chart image."""
    z = np.asarray(z, dtype=complex)
    if chart in (HALFPLANE, LOG):
        return z.imag >= -tol
    if chart == DISK:
        return np.abs(z) <= 1.0 + tol
    if chart == STRIP:
        return (z.imag >= -tol) & (z.imag <= np.pi + tol)
    raise ValueError(chart)


def check_interior(chart: str, z) -> None:
    if not np.all(interior_mask(chart, z)):
        raise DomainError(f"point(s) not in the open {chart} chart image")


def source_point(chart: str) -> complex:
    """Image of the slit source (the origin of the half-plane) in a chart."""
    return {HALFPLANE: 0.0j, DISK: 1.0 + 0.0j, STRIP: 0.0j, LOG: 0.0j}[chart]


def center_point(chart: str) -> complex | None:
    """Image of the interior point ``i`` of the half-plane, if finite."""
    return {HALFPLANE: 1j, DISK: 0.0j, STRIP: None, LOG: None}[chart]


# ---------------------------------------------------------------------------
# maps to and from the half-plane with derivatives up to third order


def _to_h(chart: str, z: np.ndarray):
    if chart == HALFPLANE:
        one = np.ones_like(z)
        zero = np.zeros_like(z)
        return z, one, zero, zero
    if chart == DISK:
        if np.any(np.abs(z + 1.0) < SINGULAR_EPS):
            raise DomainError("point at the singular boundary point -1 of the disk")
        q = 1.0 / (1.0 + z)
        return (1j * (1.0 - z) * q, -2j * q**2, 4j * q**3, -12j * q**4)
    if chart == STRIP:
        t = np.tanh(z / 2)
        d1 = 0.5 * (1.0 - t**2)
        d2 = -t * d1
        d3 = -(d1**2) + t**2 * d1
        return t, d1, d2, d3
    if chart == LOG:
        t = np.tan(z / 2)
        d1 = 0.5 * (1.0 + t**2)
        d2 = t * d1
        d3 = d1**2 + t**2 * d1
        return t, d1, d2, d3
    raise ValueError(chart)


def _from_h(chart: str, w: np.ndarray, branch: int = 0):
    if chart == HALFPLANE:
        one = np.ones_like(w)
        zero = np.zeros_like(w)
        return w, one, zero, zero
    if chart == DISK:
        if np.any(np.abs(w + 1j) < SINGULAR_EPS):
            raise DomainError("point at -i has no image in the disk chart")
        q = 1.0 / (1j + w)
        return (2j * q - 1.0, -2j * q**2, 4j * q**3, -12j * q**4)
    if chart == STRIP:
        if np.any(np.abs(w * w - 1.0) < SINGULAR_EPS):
            raise DomainError("points +-1 map to the ends of the strip")
        u = 1.0 - w**2
        return (2 * np.arctanh(w), 2 / u, 4 * w / u**2, (4 + 12 * w**2) / u**3)
    if chart == LOG:
        if np.any(np.abs(w * w + 1.0) < SINGULAR_EPS):
            raise BranchError("the center point has no image in the logarithmic chart")
        u = 1.0 + w**2
        val = 2 * np.arctan(w) + 2 * np.pi * branch
        return (val, 2 / u, -4 * w / u**2, (12 * w**2 - 4) / u**3)
    raise ValueError(chart)


def _compose(outer, inner):
    """Faa di Bruno up to third order: derivatives of ``outer(inner(z))``."""
    f0, f1, f2, f3 = outer
    _, g1, g2, g3 = inner
    return (
        f0,
        f1 * g1,
        f2 * g1**2 + f1 * g2,
        f3 * g1**3 + 3 * f2 * g1 * g2 + f1 * g3,
    )


@dataclass(frozen=True)
class Transition:
    """Coordinate change ``tau`` from chart ``src`` to chart ``dst``.

    ``tau`` expresses a point given in ``src`` coordinates in ``dst``
    coordinates.  ``branch`` is the winding index used when ``dst`` is the
    logarithmic chart.
    """

    src: str
    dst: str
    branch: int = 0

    def __post_init__(self):
        chart_id(self.src)
        chart_id(self.dst)

    def derivatives(self, z, order: int = 1):
        """Return ``(tau, tau', ..., tau^(order))`` at ``z`` (order <= 3)."""
        z = np.asarray(z, dtype=complex)
        if self.src == self.dst:
            out = (z, np.ones_like(z), np.zeros_like(z), np.zeros_like(z))
        else:
            inner = _to_h(self.src, z)
            out = _compose(_from_h(self.dst, inner[0], self.branch), inner)
        return out[: order + 1]

    def __call__(self, z):
        return self.derivatives(z, 0)[0]

    def inverse(self, branch: int = 0) -> "Transition":
        return Transition(self.dst, self.src, branch)


def transition_eval(t: Transition, z: complex):
    """Evaluate ``(tau(z), tau'(z))`` with a domain check on ``z``."""
    z = np.asarray(z, dtype=complex)
    check_interior(t.src, z)
    w, dw = t.derivatives(z, 1)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(dw))):
        raise DomainError("transition is not finite at the given point")
    if w.ndim == 0:
        return complex(w), complex(dw)
    return w, dw


def to_halfplane(chart: str, z, order: int = 1):
    return Transition(chart, HALFPLANE).derivatives(z, order)


def from_halfplane(chart: str, w, branch: int = 0, order: int = 1):
    return Transition(HALFPLANE, chart, branch).derivatives(w, order)


def log_branch_by_continuity(values) -> np.ndarray:
    """Shift principal log-chart values by multiples of ``2 pi`` along a path.

    ``values`` are principal images ``2 arctan(w)`` of consecutive points of a
    path.  Whenever consecutive values jump by more than ``pi`` in real part
    the winding index is changed so that the path stays continuous.
    """
    v = np.asarray(values, dtype=complex)
    jumps = np.diff(v.real)
    k = np.concatenate([[0], np.cumsum(-np.round(jumps / (2 * np.pi)))])
    return v + 2 * np.pi * k


# ---------------------------------------------------------------------------
# Moebius maps as 2x2 matrices


def mobius_apply(m, z):
    m = np.asarray(m)
    z = np.asarray(z, dtype=complex)
    return (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])


def mobius_deriv(m, z):
    m = np.asarray(m)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return det / (m[1, 0] * np.asarray(z, dtype=complex) + m[1, 1]) ** 2


def mobius_inverse(m):
    m = np.asarray(m)
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])


def random_halfplane_automorphism(rng: np.random.Generator) -> np.ndarray:
    """A random element of SL(2, R), i.e. a Moebius automorphism of H."""
    while True:
        a, b, c = rng.normal(size=3)
        if abs(a) > 0.2:
            d = (1.0 + b * c) / a
            m = np.array([[a, b], [c, d]])
            if np.abs(m).max() < 20:
                return m
