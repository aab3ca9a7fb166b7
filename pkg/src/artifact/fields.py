"""Rational vector fields, slit field pairs, pre-pre-Schwarzians and Lie calculus.

Vector fields live in the half-plane chart as exact numerator/denominator
coefficient lists (lowest degree first).  Coefficients may be ``int``,
``Fraction``, ``float`` or ``complex``; arithmetic never converts them, so
identities such as the Jacobi identity can be checked exactly.

A (delta, sigma) pair drives the slit flow ``dG = delta(G) dt + sigma(G) o dB``.
In normalized form ``delta = 2/z + d0 + d1 z + d2 z^2`` has residue 2 at the
origin and ``sigma = -sqrt(kappa) (1 + s0 z + s1 z^2)``.

Lie derivatives come in two flavours.  The analytic route uses the
holomorphic part ``eta^+`` of a pre-pre-Schwarzian,
``L_v eta = 2 Re(v (eta^+)' + mu v')``.  The flow route differentiates the
pulled-back observable ``X(H_s(z)) + 2 Re(mu log H_s'(z))`` in the flow time
``s`` with central differences and one Richardson level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, Sequence

import numpy as np

from . import geometry as geo
from .errors import NormalizationError, PoleError, StepError

# ---------------------------------------------------------------------------
# polynomial helpers (coefficients lowest degree first)


def _trim(p: Sequence, tol: float = 0.0) -> list:
    p = list(p)
    while len(p) > 1 and abs(p[-1]) <= tol:
        p.pop()
    return p if p else [0]


def padd(p, q):
    n = max(len(p), len(q))
    return _trim([(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)])


def psub(p, q):
    return padd(p, [-c for c in q])


def pscale(p, c):
    return _trim([c * a for a in p])


def pmul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] = out[i + j] + a * b
    return _trim(out)


def pderiv(p):
    if len(p) <= 1:
        return [0]
    return _trim([k * p[k] for k in range(1, len(p))])


def ppow(p, n: int):
    out = [1]
    for _ in range(n):
        out = pmul(out, p)
    return out


def peval(p, z):
    """Horner evaluation; works on scalars and numpy arrays."""
    acc = 0 * z + p[-1] if isinstance(z, np.ndarray) else p[-1]
    for c in reversed(p[:-1]):
        acc = acc * z + c
    return acc


def pdegree(p) -> int:
    p = _trim(p)
    return len(p) - 1 if (len(p) > 1 or p[0] != 0) else -1


def pis_zero(p, tol: float = 0.0) -> bool:
    return all(abs(c) <= tol for c in p)


def _homogenize(p, a, b, c, d, deg: int):
    """Return coefficients of ``sum p_k (d z - b)^k (a - c z)^(deg - k)``."""
    num = [d * 0 - b, d]  # d z - b
    den = [a, -c]  # a - c z
    out = [0]
    for k, coef in enumerate(p):
        if coef == 0:
            continue
        term = pmul(ppow(num, k), ppow(den, deg - k))
        out = padd(out, pscale(term, coef))
    return out


# ---------------------------------------------------------------------------
# rational vector fields

DELTA = "delta"
SIGMA = "sigma"
COMPLETE = "complete"


@dataclass(frozen=True)
class RationalField:
    """A holomorphic vector field ``num(z)/den(z) d/dz`` in the half-plane chart."""

    num: tuple
    den: tuple = (1,)
    role: str = COMPLETE

    def __post_init__(self):
        object.__setattr__(self, "num", tuple(_trim(self.num)))
        object.__setattr__(self, "den", tuple(_trim(self.den)))
        if pis_zero(self.den):
            raise ValueError("zero denominator")

    # -- constructors --------------------------------------------------------
    @classmethod
    def laurent(cls, d_m2, d_m1=0, d0=0, d1=0, role: str = DELTA) -> "RationalField":
        """``d_m2/z + d_m1 + d0 z + d1 z^2``."""
        return cls((d_m2, d_m1, d0, d1), (0, 1), role)

    @classmethod
    def quadratic(cls, s_m1, s0=0, s1=0, role: str = SIGMA) -> "RationalField":
        """``s_m1 + s0 z + s1 z^2``."""
        return cls((s_m1, s0, s1), (1,), role)

    # -- evaluation ----------------------------------------------------------
    def __call__(self, z):
        return peval(list(self.num), z) / peval(list(self.den), z)

    def derivatives(self, z, order: int = 2):
        """Values of ``v, v', v''`` (up to ``order``) at ``z``."""
        n, d = list(self.num), list(self.den)
        n1, d1 = pderiv(n), pderiv(d)
        N, D = peval(n, z), peval(d, z)
        out = [N / D]
        if order >= 1:
            N1, D1 = peval(n1, z), peval(d1, z)
            out.append((N1 * D - N * D1) / D**2)
        if order >= 2:
            N2, D2 = peval(pderiv(n1), z), peval(pderiv(d1), z)
            out.append(((N2 * D - N * D2) * D - 2 * D1 * (N1 * D - N * D1)) / D**3)
        return tuple(out)

    def poles(self) -> np.ndarray:
        d = [complex(c) for c in self.den]
        if pdegree(d) <= 0:
            return np.array([], dtype=complex)
        return np.roots(list(reversed(_trim(d))))

    # -- algebra -------------------------------------------------------------
    def __add__(self, other: "RationalField") -> "RationalField":
        if self.den == other.den:
            return RationalField(padd(self.num, other.num), self.den, self.role)
        num = padd(pmul(self.num, other.den), pmul(other.num, self.den))
        return RationalField(num, pmul(self.den, other.den), self.role)

    def __neg__(self) -> "RationalField":
        return RationalField(pscale(self.num, -1), self.den, self.role)

    def __sub__(self, other: "RationalField") -> "RationalField":
        return self + (-other)

    def scale(self, c) -> "RationalField":
        return RationalField(pscale(self.num, c), self.den, self.role)

    def derivative_field(self) -> "RationalField":
        n, d = list(self.num), list(self.den)
        return RationalField(psub(pmul(pderiv(n), d), pmul(n, pderiv(d))), pmul(d, d), self.role)

    def equals(self, other: "RationalField", tol: float = 0.0) -> bool:
        """Compare by cross multiplication (exact when ``tol == 0``)."""
        lhs = pmul(self.num, other.den)
        rhs = pmul(other.num, self.den)
        return pis_zero(psub(lhs, rhs), tol)

    def is_zero(self, tol: float = 0.0) -> bool:
        return pis_zero(self.num, tol)

    def pushforward(self, m) -> "RationalField":
        """Pushforward ``m_* v(z) = m'(u) v(u)`` with ``u = m^{-1}(z)``.

        ``m`` is a 2x2 matrix ``[[a, b], [c, d]]`` with positive determinant.
        The substitution is done on homogenized polynomials, so no division is
        needed: with ``p = d z - b`` and ``q = a - c z`` one has
        ``m'(u) = q^2`` for unimodular ``m``.
        """
        (a, b), (c, d) = m[0], m[1]
        det = a * d - b * c
        if det != 1:
            s = math.sqrt(det) if not isinstance(det, complex) else det**0.5
            a, b, c, d = a / s, b / s, c / s, d / s
        dn, dd = pdegree(list(self.num)), pdegree(list(self.den))
        if dn < 0:
            return self
        num = _homogenize(list(self.num), a, b, c, d, dn)
        den = _homogenize(list(self.den), a, b, c, d, dd)
        e = 2 + dd - dn
        q = [a, -c]
        if e >= 0:
            num = pmul(num, ppow(q, e))
        else:
            den = pmul(den, ppow(q, -e))
        return RationalField(num, den, self.role)

    def laurent_coefficients(self, tol: float = 1e-13) -> tuple:
        """Coefficients ``(c_{-1}, c_0, c_1, c_2)`` of ``c_{-1}/z + ... + c_2 z^2``.

        Raises ``ValueError`` if the field is not of that shape.
        """
        num, den = list(self.num), list(self.den)
        scale_tol = tol * max(1.0, max(abs(c) for c in num))
        den = _trim(den, tol * max(abs(c) for c in den))
        # the denominator must be a monomial c z^k with k in {0, 1}
        nz = [k for k, c in enumerate(den) if abs(c) > tol * max(abs(x) for x in den)]
        if len(nz) != 1 or nz[0] > 1:
            raise ValueError("field is not of Laurent slit form")
        k = nz[0]
        lead = den[k]
        coefs = [c / lead for c in num]
        coefs = _trim(coefs, scale_tol)
        shifted = [0] * (1 - k) + coefs
        if len(shifted) > 4 and not pis_zero(shifted[4:], scale_tol):
            raise ValueError("field has degree above two")
        shifted = (shifted + [0] * 4)[:4]
        return tuple(shifted)

    def to_sympy(self, z):
        n = sum(c * z**k for k, c in enumerate(self.num))
        d = sum(c * z**k for k, c in enumerate(self.den))
        return n / d


def lie_bracket(v: RationalField, w: RationalField) -> RationalField:
    """``[v, w] = v w' - v' w`` computed exactly on numerators/denominators."""
    n1, d1 = list(v.num), list(v.den)
    n2, d2 = list(w.num), list(w.den)
    a = pmul(pmul(n1, d1), psub(pmul(pderiv(n2), d2), pmul(n2, pderiv(d2))))
    b = pmul(pmul(psub(pmul(pderiv(n1), d1), pmul(n1, pderiv(d1))), n2), d2)
    num = psub(a, b)
    den = pmul(pmul(d1, d1), pmul(d2, d2))
    # strip a common power of z
    while len(num) > 1 and len(den) > 1 and num[0] == 0 and den[0] == 0:
        num, den = num[1:], den[1:]
    return RationalField(num, den, COMPLETE)


class ChartField:
    """A half-plane rational field expressed in another chart.

    ``v^c(z) = v(T(z)) / T'(z)`` where ``T`` maps chart ``c`` to the half-plane.
    """

    def __init__(self, v: RationalField, chart: str):
        self.v = v
        self.chart = geo.chart_id(chart)

    def derivatives(self, z, order: int = 2):
        z = np.asarray(z, dtype=complex)
        if self.chart == geo.HALFPLANE:
            return self.v.derivatives(z, order)
        T, T1, T2, T3 = geo.to_halfplane(self.chart, z, 3)
        f = self.v.derivatives(T, order)
        g = 1.0 / T1
        out = [f[0] * g]
        if order >= 1:
            g1 = -T2 * g**2
            out.append(f[1] + f[0] * g1)
        if order >= 2:
            g2 = -T3 * g**2 + 2 * T2**2 * g**3
            out.append(f[2] * T1 + f[1] * T1 * g1 + f[0] * g2)
        return tuple(out)

    def __call__(self, z):
        return self.derivatives(z, 0)[0]

    def pole(self) -> complex:
        return geo.source_point(self.chart)


def vf_eval(v: RationalField, chart: str, z) -> complex:
    """Value of ``v`` in the given chart at ``z``."""
    geo.check_interior(chart, z)
    zh = geo.to_halfplane(chart, z, 0)[0]
    den = peval(list(v.den), zh)
    if np.any(np.abs(den) < 1e-14):
        raise PoleError("evaluation at a pole of the vector field")
    out = ChartField(v, chart)(z)
    return complex(out) if np.ndim(out) == 0 else out


def mobius_generator(sigma: RationalField) -> np.ndarray:
    """sl(2) matrix ``A`` whose one-parameter group is the flow of ``sigma``."""
    if pdegree(list(sigma.den)) > 0:
        raise ValueError("a complete field must be a polynomial of degree <= 2")
    s = (list(sigma.num) + [0, 0, 0])[:3]
    c0 = sigma.den[0]
    s_m1, s0, s1 = (float(x / c0) for x in s)
    return np.array([[s0 / 2, s_m1], [-s1, -s0 / 2]])


# ---------------------------------------------------------------------------
# slit field pairs and the classical families

CHORDAL = "chordal"
CHORDAL_TIME_CHANGE = "chordal_time_change"
DIPOLAR = "dipolar"
RIGHT_FIXED = "right_fixed"
LEFT_FIXED = "left_fixed"
RADIAL = "radial"
GENERAL = "general"
FAMILIES = (CHORDAL, CHORDAL_TIME_CHANGE, DIPOLAR, RIGHT_FIXED, LEFT_FIXED, RADIAL)
FAMILY_ROW = {f: i + 1 for i, f in enumerate(FAMILIES)}


@dataclass(frozen=True)
class SlitFieldPair:
    delta: RationalField
    sigma: RationalField
    kappa: float
    nu: float = 0.0
    xi: float = 0.0
    family: str = GENERAL

    @property
    def coefficients(self) -> tuple:
        """``((d_m2, d_m1, d0, d1), (s_m1, s0, s1))`` in the half-plane chart."""
        d = self.delta.laurent_coefficients()
        s = self.sigma.laurent_coefficients()
        if abs(s[0]) > 1e-12:
            raise NormalizationError("sigma has a pole")
        return d, s[1:]

    def with_family(self, family: str) -> "SlitFieldPair":
        return replace(self, family=family)


def table_pair(family: str, kappa: float, nu: float = 0.0, xi: float = 0.0) -> SlitFieldPair:
    """The field pair of one row of the classification table (half-plane chart)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    r = math.sqrt(kappa)
    if family == CHORDAL:
        d, s = (2, -nu, 0, 0), (-r, 0, 0)
    elif family == CHORDAL_TIME_CHANGE:
        d, s = (2, 0, 2 * xi, 0), (-r, 0, 0)
    elif family == DIPOLAR:
        d, s = (2, -nu, -2, nu), (-r, 0, r)
    elif family == RIGHT_FIXED:
        d, s = (2, kappa - 6, 2 * (3 - kappa + xi), kappa - 2 - 2 * xi), (-r, 0, r)
    elif family == LEFT_FIXED:
        d, s = (2, -(kappa - 6), 2 * (3 - kappa + xi), -(kappa - 2 - 2 * xi)), (-r, 0, r)
    elif family == RADIAL:
        d, s = (2, -nu, 2, -nu), (-r, 0, -r)
    else:
        raise ValueError(f"unknown family {family!r}")
    if family in (RIGHT_FIXED, LEFT_FIXED):
        nu = drift_invariant(d, s)
    return SlitFieldPair(
        RationalField.laurent(*d), RationalField.quadratic(*s), kappa, nu, xi, family
    )


def drift_invariant(d, s) -> float:
    """Drift ``nu`` of a pair from raw coefficients.

    ``3 s0/s_m1 - 2 d_m1/d_m2`` is unchanged by time scaling and by the
    Moebius maps ``r_c``; in normalized form it is ``3 s0_n - d_m1``.
    """
    return 3 * s[1] / s[0] - 2 * d[1] / d[0]


def kappa_invariant(d, s) -> float:
    return 2 * s[0] ** 2 / d[0]


def pair_from_coefficients(delta, sigma, family: str | None = None, xi: float = 0.0) -> SlitFieldPair:
    """Build a pair from ``delta = [d_m2, d_m1, d0, d1]`` and ``sigma = [s_m1, s0, s1]``."""
    d = tuple(float(x) for x in delta)
    s = tuple(float(x) for x in sigma)
    if len(d) != 4 or len(s) != 3:
        raise ValueError("delta needs 4 and sigma 3 coefficients")
    if d[0] <= 0:
        raise NormalizationError("d_m2 must be positive")
    if s[0] == 0:
        raise NormalizationError("s_m1 must be nonzero")
    pair = SlitFieldPair(
        RationalField.laurent(*d),
        RationalField.quadratic(*s),
        kappa_invariant(d, s),
        drift_invariant(d, s),
        xi,
        GENERAL,
    )
    if family is None:
        fam, _, _, xi_c = classify(pair)
        return replace(pair, family=fam, xi=xi_c if fam in (CHORDAL_TIME_CHANGE, RIGHT_FIXED, LEFT_FIXED) else xi)
    return replace(pair, family=family)


def chi_from_kappa(kappa: float) -> float:
    return 2 / math.sqrt(kappa) - math.sqrt(kappa) / 2


def mu_from_kappa(kappa: float) -> complex:
    return 1j * (4 - kappa) / (4 * math.sqrt(kappa))


# ---------------------------------------------------------------------------
# transforms


def transform_scale(pair: SlitFieldPair, c: float) -> SlitFieldPair:
    """Time rescaling: ``delta -> c^2 delta``, ``sigma -> c sigma``."""
    if c <= 0:
        raise ValueError("c must be positive")
    return replace(pair, delta=pair.delta.scale(c * c), sigma=pair.sigma.scale(c))


def r_matrix(c: float) -> np.ndarray:
    """Matrix of ``r_c(z) = z / (1 - c z)``."""
    return np.array([[1.0, 0.0], [-c, 1.0]])


def _relaurent(pair: SlitFieldPair, delta: RationalField, sigma: RationalField) -> SlitFieldPair:
    d = delta.laurent_coefficients()
    s = sigma.laurent_coefficients()[1:]
    return replace(
        pair,
        delta=RationalField.laurent(*d),
        sigma=RationalField.quadratic(*s),
    )


def transform_r(pair: SlitFieldPair, c: float) -> SlitFieldPair:
    """Pushforward of both fields under ``r_c(z) = z/(1 - c z)``."""
    if c == 0:
        return pair
    m = [[1, 0], [-c, 1]]
    return _relaurent(pair, pair.delta.pushforward(m), pair.sigma.pushforward(m))


def transform_dilate(pair: SlitFieldPair, lam: float) -> SlitFieldPair:
    """Pushforward under ``z -> lam z`` followed by the time rescaling ``c = 1/lam``.

    Keeps ``d_m2`` and ``s_m1`` fixed and divides the drift by ``lam``.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    m = [[math.sqrt(lam), 0], [0, 1 / math.sqrt(lam)]]
    out = _relaurent(pair, pair.delta.pushforward(m), pair.sigma.pushforward(m))
    return transform_scale(out, 1 / lam)


def drift_insert(pair: SlitFieldPair, nu: float) -> SlitFieldPair:
    """``delta -> delta + (nu / sqrt(kappa)) sigma``."""
    if nu == 0:
        return pair
    d = pair.delta + pair.sigma.scale(nu / math.sqrt(pair.kappa))
    d_coef = d.laurent_coefficients()
    return replace(pair, delta=RationalField.laurent(*d_coef), nu=pair.nu + nu)


def normalize(pair: SlitFieldPair) -> SlitFieldPair:
    """Rescale time so that ``d_m2 = 2`` and flip sigma so that ``s_m1 < 0``."""
    d, s = pair.coefficients
    if not d[0] > 0:
        raise NormalizationError("delta must have a positive residue at the origin")
    if s[0] == 0:
        raise NormalizationError("sigma must not vanish at the origin")
    out = transform_scale(pair, math.sqrt(2 / d[0]))
    if s[0] > 0:
        out = replace(out, sigma=out.sigma.scale(-1))
    d, s = out.coefficients
    return replace(
        out,
        delta=RationalField.laurent(*d),
        sigma=RationalField.quadratic(*s),
        kappa=kappa_invariant(d, s),
    )


def classify(pair: SlitFieldPair, tol: float = 1e-9):
    """Identify the classification-table row of a pair.

    Returns ``(family, kappa, nu, xi)``.  The pair is first reduced by time
    scaling, by ``r_c`` (to kill the linear term of sigma) and by a dilation
    (to bring the quadratic term of sigma to 0 or -+1).  Rows are then tested in
    table order, so vanishing parameters report the lowest matching row.
    """
    p = normalize(pair)
    d, s = p.coefficients
    kappa = kappa_invariant(d, s)
    r = math.sqrt(kappa)
    s0n = s[1] / s[0]
    if abs(s0n) > 0:
        p = normalize(transform_r(p, -s0n / 2))
    d, s = p.coefficients
    s1n = s[2] / s[0]
    if abs(s1n) > tol:
        p = normalize(transform_dilate(p, math.sqrt(abs(s1n))))
        d, s = p.coefficients
        s1n = s[2] / s[0]
    _, dm1, d0, d1 = d
    nu = drift_invariant(d, s)

    def close(a, b):
        return abs(a - b) <= tol * max(1.0, abs(b))

    if abs(s1n) <= tol:
        if close(d0, 0) and close(d1, 0):
            return CHORDAL, kappa, -dm1, 0.0
        if close(dm1, 0) and close(d1, 0):
            return CHORDAL_TIME_CHANGE, kappa, 0.0, d0 / 2
        return GENERAL, kappa, nu, 0.0
    if close(s1n, -1.0):
        if close(d0, -2) and close(d1, -dm1):
            return DIPOLAR, kappa, -dm1, 0.0
        xi = d0 / 2 - 3 + kappa
        if close(dm1, kappa - 6) and close(d1, kappa - 2 - 2 * xi):
            return RIGHT_FIXED, kappa, nu, xi
        if close(dm1, -(kappa - 6)) and close(d1, -(kappa - 2 - 2 * xi)):
            return LEFT_FIXED, kappa, nu, xi
        return GENERAL, kappa, nu, 0.0
    if close(s1n, 1.0):
        if close(d0, 2) and close(d1, dm1):
            return RADIAL, kappa, -dm1, 0.0
    del r
    return GENERAL, kappa, nu, 0.0


# ---------------------------------------------------------------------------
# observables and pre-pre-Schwarzians


class Holomorphic(Protocol):
    """A holomorphic function with its first two derivatives."""

    def __call__(self, z): ...

    def d1(self, z): ...

    def d2(self, z): ...


class Observable(Protocol):
    npoints: int
    mu: complex

    def value(self, chart: str, *points): ...


@dataclass
class ScalarObservable:
    """A real scalar function of one or more points, given in one chart."""

    func: Callable
    chart: str = geo.HALFPLANE
    npoints: int = 1
    mu: complex = 0j

    def value(self, chart: str, *points):
        if chart != self.chart:
            points = tuple(geo.Transition(chart, self.chart)(p) for p in points)
        return self.func(*points)


@dataclass
class PrePreSchwarzian:
    """A real pre-pre-Schwarzian ``eta = 2 Re eta^+ + C``.

    ``hol`` is ``eta^+`` in the chart of definition ``chart``.  In another chart
    the holomorphic part is ``eta^+(tau(z)) + mu log tau'(z)``.  ``constant`` is
    the additive constant ``C`` of the chart of definition; by default it is
    chosen so that the half-plane value just right of the source is
    ``pi / sqrt(kappa)``.
    """

    kappa: float
    hol: Holomorphic
    chart: str = geo.HALFPLANE
    mu: complex | None = None
    family: str = GENERAL
    params: dict = field(default_factory=dict)
    constant: float | None = None
    npoints: int = 1

    def __post_init__(self):
        if self.mu is None:
            self.mu = mu_from_kappa(self.kappa)
        if self.constant is None:
            self.constant = 0.0
            self.constant = math.pi / math.sqrt(self.kappa) - float(self.value(geo.HALFPLANE, _PLUS0))

    @property
    def mu_star(self) -> complex:
        return self.mu.conjugate()

    @property
    def chi(self) -> float:
        return 2 * self.mu.imag

    def to_home(self, chart: str, z, branch: int = 0):
        """Transport ``z`` to the chart of definition: ``(tau(z), log tau'(z))``."""
        z = np.asarray(z, dtype=complex)
        if chart == self.chart:
            return z, np.zeros_like(z)
        w, dw = geo.Transition(chart, self.chart, branch).derivatives(z, 1)
        return w, np.log(dw)

    def plus(self, chart: str, z, branch: int = 0):
        """Holomorphic part ``eta^+`` in ``chart``."""
        w, logd = self.to_home(chart, z, branch)
        return self.hol(w) + self.mu * logd

    def value(self, chart: str, z, branch: int = 0):
        w, logd = self.to_home(chart, z, branch)
        h = self.hol(w)
        return 2 * (h.real if np.iscomplexobj(h) else h) + 2 * (self.mu * logd).real + self.constant

    def with_mu(self, mu: complex) -> "PrePreSchwarzian":
        return replace(self, mu=mu, constant=self.constant)


_PLUS0 = 1e-12 * np.exp(1e-12j)


# ---------------------------------------------------------------------------
# Lie derivatives: analytic route


def lie_pps_analytic(v: RationalField, eta: PrePreSchwarzian, chart: str, z):
    """``L_v eta`` at ``z`` (given in ``chart``) via ``2 Re(v p + mu v')``."""
    w, _ = eta.to_home(chart, z)
    vf = ChartField(v, eta.chart)
    v0, v1 = vf.derivatives(w, 1)
    return 2 * (v0 * eta.hol.d1(w) + eta.mu * v1).real


def diffusion_pps_analytic(pair: SlitFieldPair, eta: PrePreSchwarzian, chart: str, z):
    """``(L_delta + 1/2 L_sigma^2) eta`` at ``z`` via holomorphic derivatives."""
    w, _ = eta.to_home(chart, z)
    d0, d1 = ChartField(pair.delta, eta.chart).derivatives(w, 1)
    s0, s1, s2 = ChartField(pair.sigma, eta.chart).derivatives(w, 2)
    p, p1 = eta.hol.d1(w), eta.hol.d2(w)
    mu = eta.mu
    jprime = s1 * p + s0 * p1 + mu * s2
    return 2 * (d0 * p + mu * d1 + 0.5 * s0 * jprime).real


# ---------------------------------------------------------------------------
# Lie derivatives: flow route


def flow(v: RationalField, chart: str, z, s: float, nsteps: int = 4):
    """Flow ``H_s[v]`` of ``v`` in ``chart`` by RK4 on ``(z, log H_s')``."""
    vf = ChartField(v, chart)
    z = np.array(z, dtype=complex)
    L = np.zeros_like(z)
    h = s / nsteps

    def rhs(x):
        a, b = vf.derivatives(x, 1)
        return a, b

    for _ in range(nsteps):
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * h * k1[0])
        k3 = rhs(z + 0.5 * h * k2[0])
        k4 = rhs(z + h * k3[0])
        z_new = z + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        L = L + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        z = z_new
    return z, L


def _pulled_back(X: Observable, v: RationalField, chart: str, points, s: float):
    moved = []
    extra = 0.0
    for p in points:
        zs, L = flow(v, chart, p, s)
        moved.append(zs)
        extra = extra + 2 * (X.mu * L).real
    return X.value(chart, *moved) + extra


def _richardson(d_h, d_h2, order: int = 2):
    f = 2**order
    return (f * d_h2 - d_h) / (f - 1)


def lie_derivative_flow(
    v: RationalField, X: Observable, chart: str, points, h: float = 1e-5, tol: float = 1e-4
):
    """``L_v X`` by central differences in the flow time with one Richardson level."""
    points = [np.asarray(p, dtype=complex) for p in points]

    def central(step):
        return (_pulled_back(X, v, chart, points, step) - _pulled_back(X, v, chart, points, -step)) / (2 * step)

    d1, d2 = central(h), central(h / 2)
    est = _richardson(d1, d2)
    err = np.max(np.abs(est - d2))
    if not np.isfinite(err) or err > tol * max(1.0, float(np.max(np.abs(est)))):
        raise StepError(f"Richardson estimate did not settle (err={err:.3g})")
    return est


def second_lie_derivative_flow(
    v: RationalField, X: Observable, chart: str, points, h: float = 1e-3, tol: float = 1e-4
):
    """``L_v^2 X`` as the second flow-time derivative of the pulled-back observable."""
    points = [np.asarray(p, dtype=complex) for p in points]
    x0 = _pulled_back(X, v, chart, points, 0.0)

    def second(step):
        xp = _pulled_back(X, v, chart, points, step)
        xm = _pulled_back(X, v, chart, points, -step)
        return (xp - 2 * x0 + xm) / step**2

    s1, s2 = second(h), second(h / 2)
    est = _richardson(s1, s2)
    err = np.max(np.abs(est - s2))
    if not np.isfinite(err) or err > tol * max(1.0, float(np.max(np.abs(est)))):
        raise StepError(f"Richardson estimate did not settle (err={err:.3g})")
    return est


def lie_deriv_pps(v: RationalField, eta, chart: str, z, method: str = "auto"):
    """Scalar ``L_v eta`` at ``z`` in ``chart``.

    ``method`` is ``"analytic"``, ``"flow"`` or ``"auto"`` (analytic when the
    observable exposes holomorphic derivatives).
    """
    if method == "auto":
        method = "analytic" if isinstance(eta, PrePreSchwarzian) else "flow"
    if method == "analytic":
        return lie_pps_analytic(v, eta, chart, z)
    return lie_derivative_flow(v, eta, chart, [z])


def diffusion_apply(pair: SlitFieldPair, X, chart: str, points, method: str = "flow",
                    h1: float = 1e-5, h2: float = 1e-3):
    """Apply ``A = L_delta + 1/2 L_sigma^2`` to the observable ``X``.

    ``points`` is a sequence with one entry per argument of ``X``; entries may
    be numpy arrays of equal shape.
    """
    if not isinstance(points, (list, tuple)):
        points = [points]
    if method == "analytic":
        if not isinstance(X, PrePreSchwarzian):
            raise ValueError("analytic route needs a pre-pre-Schwarzian")
        return diffusion_pps_analytic(pair, X, chart, points[0])
    first = lie_derivative_flow(pair.delta, X, chart, points, h=h1)
    second = second_lie_derivative_flow(pair.sigma, X, chart, points, h=h2)
    return first + 0.5 * second
