"""Green's kernels, the eta fields of the coupled families, and GFF marginals.

Three covariance kernels are provided, each in its natural chart:

* ``dirichlet`` (half-plane): ``-log|z - w| + log|z - conj(w)|``
* ``dirichlet_neumann`` (strip): ``-log|th((z-w)/4)| + log|th((z-conj w)/4)|``
* ``twisted`` (logarithmic chart): the same with ``tan`` in place of ``th``

Each splits as ``G = g++ + conj(g++) - g+- - conj(g+-)`` with ``g++(z, w)``
and ``g+-(z, u)`` holomorphic in both slots (``u`` stands for ``conj(w)``).

The mean field ``eta`` of a coupled family is a pre-pre-Schwarzian whose
holomorphic part solves ``(eta^+)' = (j^+ - mu sigma') / sigma``.  Closed forms
are stored as sympy templates and differentiated symbolically once.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp
from scipy import integrate

from . import fields as fl
from . import geometry as geo
from .errors import (
    BoundaryError,
    DiagonalError,
    FactorizationError,
    PathError,
    QuadratureError,
    SingularityError,
)

DIRICHLET = "dirichlet"
DIRICHLET_NEUMANN = "dirichlet_neumann"
TWISTED = "twisted"
KERNELS = (DIRICHLET, DIRICHLET_NEUMANN, TWISTED)
NATURAL_CHART = {DIRICHLET: geo.HALFPLANE, DIRICHLET_NEUMANN: geo.STRIP, TWISTED: geo.LOG}


def _th_over(x):
    """``tanh(x)/x`` with a series near zero."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    return np.where(small, 1 - x**2 / 3 + 2 * x**4 / 15, np.tanh(xs) / xs)


def _tan_over(x):
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    return np.where(small, 1 + x**2 / 3 + 2 * x**4 / 15, np.tan(xs) / xs)


@dataclass(frozen=True)
class CovarianceKernel:
    kind: str = DIRICHLET

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}")

    @property
    def natural_chart(self) -> str:
        return NATURAL_CHART[self.kind]

    # -- transport to the natural chart -------------------------------------
    def _home(self, chart, z, branch=0):
        z = np.asarray(z, dtype=complex)
        if chart == self.natural_chart:
            if branch:
                z = z + 2 * np.pi * branch
            return z
        return geo.Transition(chart, self.natural_chart, branch)(z)

    # -- natural-chart closed forms -----------------------------------------
    def _g(self, x):
        """The holomorphic function whose log gives the split halves."""
        if self.kind == DIRICHLET:
            return x
        if self.kind == DIRICHLET_NEUMANN:
            return np.tanh(x / 4)
        return np.tan(x / 4)

    def _dlog_g(self, x):
        """``d/dx log g(x)``."""
        if self.kind == DIRICHLET:
            return 1 / x
        if self.kind == DIRICHLET_NEUMANN:
            return 1 / (2 * np.sinh(x / 2))
        return 1 / (2 * np.sin(x / 2))

    def split_home(self, z, w):
        gpp = -0.5 * np.log(self._g(z - w))
        gpm = -0.5 * np.log(self._g(z - np.conj(w)))
        return gpp, gpm

    def value_home(self, z, w):
        a = np.abs(self._g(z - w))
        b = np.abs(self._g(z - np.conj(w)))
        return -np.log(a) + np.log(b)

    def regular_home(self, z, w):
        """``G(z, w) + log|z - w|`` without the diagonal singularity."""
        d = z - w
        if self.kind == DIRICHLET:
            sing = 0.0
        elif self.kind == DIRICHLET_NEUMANN:
            sing = -np.log(np.abs(_th_over(d / 4) / 4))
        else:
            sing = -np.log(np.abs(_tan_over(d / 4) / 4))
        return sing + np.log(np.abs(self._g(z - np.conj(w))))

    def split_derivatives_home(self, z, w):
        """``(d1 g++, d2 g++, d1 g+-, d2 g+-)`` at ``(z, w)`` and ``(z, conj w)``."""
        a = -0.5 * self._dlog_g(z - w)
        u = np.conj(w)
        b = -0.5 * self._dlog_g(z - u)
        return a, -a, b, -b

    # -- chart-covariant API -------------------------------------------------
    def value(self, chart, z, w, branches=(0, 0)):
        return self.value_home(self._home(chart, z, branches[0]), self._home(chart, w, branches[1]))

    def split(self, chart, z, w, branches=(0, 0)):
        return self.split_home(self._home(chart, z, branches[0]), self._home(chart, w, branches[1]))

    def regular(self, chart, z, w):
        """Regular part ``G + log|z - w|`` in ``chart``, finite on the diagonal."""
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        if chart == self.natural_chart:
            return self.regular_home(z, w)
        t = geo.Transition(chart, self.natural_chart)
        tz, dz = t.derivatives(z, 1)
        tw = t(w)
        d = z - w
        near = np.abs(d) < 1e-7
        dm = t.derivatives((z + w) / 2, 1)[1]
        ratio = np.where(near, dm, (tz - tw) / np.where(near, 1.0, d))
        return self.regular_home(tz, tw) - np.log(np.abs(ratio))


@dataclass
class KernelObservable:
    """``G(z, w)`` as a two-point scalar observable."""

    kernel: CovarianceKernel
    npoints: int = 2
    mu: complex = 0j

    def value(self, chart, z, w):
        return self.kernel.value(chart, z, w)


def gamma_eval(k: CovarianceKernel, chart: str, z, w, branches=(0, 0)) -> float:
    """Kernel value in any chart (scalar transport)."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(z - w) < 1e-12):
        raise DiagonalError("kernel evaluated on the diagonal")
    if not (np.all(geo.closed_mask(chart, z)) and np.all(geo.closed_mask(chart, w))):
        raise BoundaryError("point outside the closed chart domain")
    out = k.value(chart, z, w, branches)
    return float(out) if np.ndim(out) == 0 else out


def gamma_split(k: CovarianceKernel, chart: str, z, w, branches=(0, 0)):
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(z - w) < 1e-12):
        raise DiagonalError("kernel evaluated on the diagonal")
    gpp, gpm = k.split(chart, z, w, branches)
    if np.ndim(gpp) == 0:
        return complex(gpp), complex(gpm)
    return gpp, gpm


def lie_kernel_analytic(v: fl.RationalField, k: CovarianceKernel, chart: str, z, w):
    """``L_v G(z, w)`` from the holomorphic split in the natural chart."""
    zh, wh = k._home(chart, z), k._home(chart, w)
    vf = fl.ChartField(v, k.natural_chart)
    vz, vw = vf(zh), vf(wh)
    a1, a2, b1, b2 = k.split_derivatives_home(zh, wh)
    return 2 * (vz * (a1 - b1) + vw * a2 - np.conj(vw) * b2).real


# ---------------------------------------------------------------------------
# holomorphic parts of eta

_Z = sp.Symbol("z")
_KAPPA, _NU, _XI = sp.symbols("kappa nu xi", real=True)


def _templates():
    r = sp.sqrt(_KAPPA)
    I = sp.I
    z = _Z
    alpha = -_NU / 2
    c = I * (_KAPPA - 6) / (4 * r)
    chordal = I / r * sp.log(z) - I * alpha * z / r
    return {
        fl.CHORDAL: chordal,
        fl.CHORDAL_TIME_CHANGE: I / r * sp.log(z),
        fl.DIPOLAR: I / r * sp.log(z) + c * sp.log(1 - z**2) - I * alpha / r * sp.atanh(z),
        fl.RIGHT_FIXED: I / r * sp.log(z) + 2 * c * sp.log(1 - z),
        fl.LEFT_FIXED: I / r * sp.log(z) + 2 * c * sp.log(1 + z),
        fl.RADIAL: I / r * sp.log(z) + c * sp.log(1 + z**2) - I * alpha / r * sp.atan(z),
        # strip chart, dipolar fields, kernel with mixed boundary conditions
        "dn": I / r * sp.log(sp.tanh(z / 4)) - I * alpha * z / (2 * r),
        # logarithmic chart, radial fields, twisted kernel
        "tw": I / r * sp.log(sp.tan(z / 4)) - I * alpha * z / (2 * r),
    }


@lru_cache(maxsize=None)
def _compiled(name: str):
    expr = _templates()[name]
    args = (_Z, _KAPPA, _NU, _XI)
    d1 = sp.diff(expr, _Z)
    d2 = sp.diff(d1, _Z)
    mods = ["numpy"]
    return tuple(sp.lambdify(args, e, modules=mods) for e in (expr, d1, d2))


def template_expression(name: str):
    """Sympy expression of a stored holomorphic template."""
    return _templates()[name]


class TemplateHol:
    """``eta^+`` given by a closed-form template with numeric parameters."""

    def __init__(self, name: str, kappa: float, nu: float = 0.0, xi: float = 0.0):
        self.name = name
        self.args = (float(kappa), float(nu), float(xi))
        self._f = _compiled(name)

    def _call(self, k, z):
        z = np.asarray(z, dtype=complex)
        out = self._f[k](z, *self.args)
        return np.broadcast_to(out, z.shape).astype(complex) if np.ndim(out) < z.ndim else out

    def __call__(self, z):
        return self._call(0, z)

    def d1(self, z):
        return self._call(1, z)

    def d2(self, z):
        return self._call(2, z)


class RationalAntiderivative:
    """Antiderivative of a rational function ``P/Q`` by partial fractions.

    ``Q`` must have simple or double roots.  Derivatives are exact rational
    evaluations.
    """

    def __init__(self, P, Q, root_tol: float = 1e-7):
        P = [complex(c) for c in P]
        Q = [complex(c) for c in Q]
        self.P, self.Q = P, Q
        qhi = list(reversed(fl._trim(Q)))
        phi = list(reversed(fl._trim(P)))
        quot, rem = np.polydiv(phi, qhi) if len(phi) >= len(qhi) else (np.array([0j]), np.array(phi))
        self.poly = np.polyint(quot)  # highest degree first
        roots = np.roots(qhi) if len(qhi) > 1 else np.array([])
        lead = qhi[0]
        # group roots by proximity
        groups: list[list[complex]] = []
        for r in roots:
            for g in groups:
                if abs(g[0] - r) < root_tol:
                    g.append(r)
                    break
            else:
                groups.append([r])
        self.terms = []  # (root, log coefficient, pole coefficient)
        rem = np.array(rem, dtype=complex)
        for g in groups:
            r = np.mean(g)
            others = [np.mean(h) for h in groups if h is not g for _ in h]
            if len(g) == 1:
                denom = lead * np.prod([r - o for o in others]) if others else lead
                self.terms.append((r, np.polyval(rem, r) / denom, 0j))
            elif len(g) == 2:
                # R(z) / ((z - r)^2 S(z)) with S the product over the other roots
                S = lead * np.prod([r - o for o in others]) if others else lead
                dS = S * sum(1 / (r - o) for o in others) if others else 0j
                R, dR = np.polyval(rem, r), np.polyval(np.polyder(rem), r) if len(rem) > 1 else 0j
                self.terms.append((r, (dR * S - R * dS) / S**2, R / S))
            else:
                raise ValueError("roots of multiplicity above two are not supported")

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.polyval(self.poly, z) if len(self.poly) else 0 * z
        for r, a, b in self.terms:
            out = out + a * np.log(z - r)
            if b != 0:
                out = out - b / (z - r)
        return out

    def d1(self, z):
        return fl.peval(self.P, z) / fl.peval(self.Q, z)

    def d2(self, z):
        P1, Q1 = fl.pderiv(self.P), fl.pderiv(self.Q)
        Qv = fl.peval(self.Q, z)
        return (fl.peval(P1, z) * Qv - fl.peval(self.P, z) * fl.peval(Q1, z)) / Qv**2


def dirichlet_alpha(pair: fl.SlitFieldPair) -> float:
    """Constant ``alpha`` of ``j^+ = -i/z + i alpha`` for the Dirichlet kernel.

    In normalized form ``alpha = d_m1/2 - 2 s0/s_m1``; this reduces to the
    table value ``-nu/2`` for drift families and to ``+-(kappa-6)/2`` for the
    fixed-point families.
    """
    p = fl.normalize(pair)
    d, s = p.coefficients
    return d[1] / 2 - 2 * s[1] / s[0]


def general_eta_plus(pair: fl.SlitFieldPair, mu: complex, alpha: float | None = None):
    """``eta^+`` of the reciprocal formula for an arbitrary pair and the Dirichlet kernel."""
    p = fl.normalize(pair)
    d, s = p.coefficients
    if alpha is None:
        alpha = d[1] / 2 - 2 * s[1] / s[0]
    s_m1, s0, s1 = s
    # (j^+ - mu sigma')/sigma = (-i + (i alpha - mu s0) z - 2 mu s1 z^2) / (z sigma)
    P = [-1j, 1j * alpha - mu * s0, -2 * mu * s1]
    Q = [0, s_m1, s0, s1]
    return RationalAntiderivative(P, Q)


def family_eta(
    pair: fl.SlitFieldPair,
    kernel: str = DIRICHLET,
    nu: float | None = None,
    mu: complex | None = None,
) -> fl.PrePreSchwarzian:
    """The mean field ``eta`` coupled to ``pair`` for a given kernel.

    ``nu`` overrides the drift used inside ``eta`` (the fields are unchanged);
    ``mu`` overrides the order.
    """
    kappa = pair.kappa
    nu_eta = pair.nu if nu is None else nu
    if kernel == DIRICHLET:
        if pair.family in fl.FAMILIES:
            hol = TemplateHol(pair.family, kappa, nu_eta, pair.xi)
        else:
            m = fl.mu_from_kappa(kappa)
            alpha = None if nu is None else -nu / 2
            hol = general_eta_plus(pair, m, alpha)
        eta = fl.PrePreSchwarzian(kappa, hol, geo.HALFPLANE, None, pair.family, {"nu": nu_eta, "xi": pair.xi})
    elif kernel == DIRICHLET_NEUMANN:
        if pair.family != fl.DIPOLAR:
            raise ValueError("the mixed-boundary kernel is paired with dipolar fields")
        hol = TemplateHol("dn", kappa, nu_eta)
        eta = fl.PrePreSchwarzian(kappa, hol, geo.STRIP, None, "dirichlet_neumann4", {"nu": nu_eta})
    elif kernel == TWISTED:
        if pair.family != fl.RADIAL:
            raise ValueError("the twisted kernel is paired with radial fields")
        hol = TemplateHol("tw", kappa, nu_eta)
        eta = fl.PrePreSchwarzian(kappa, hol, geo.LOG, None, "twisted4", {"nu": nu_eta})
    else:
        raise ValueError(kernel)
    if mu is not None:
        eta = eta.with_mu(mu)
    return eta


def eta_eval(eta: fl.PrePreSchwarzian, chart: str, z, branch: int = 0) -> float:
    """Value of ``eta`` in ``chart`` at ``z``."""
    z = np.asarray(z, dtype=complex)
    geo.check_interior(chart, z)
    zh = geo.to_halfplane(chart, z, 0)[0]
    if np.any(np.abs(zh) < 1e-14):
        raise SingularityError("eta evaluated at the source point")
    out = eta.value(chart, z, branch)
    if not np.all(np.isfinite(out)):
        raise SingularityError("eta is singular at the given point")
    return float(out) if np.ndim(out) == 0 else out


def j_plus_eval(kernel: str, alpha: float, chart: str, z, branch: int = 0):
    """Scalar ``j^+ = L_sigma eta^+`` of a kernel family in any chart."""
    k = CovarianceKernel(kernel)
    x = k._home(chart, np.asarray(z, dtype=complex), branch)
    if kernel == DIRICHLET:
        base = -1j / x
    elif kernel == DIRICHLET_NEUMANN:
        base = -1j / np.sinh(x / 2)
    else:
        base = -1j / np.sin(x / 2)
    if not np.all(np.isfinite(base)):
        raise SingularityError("j^+ is singular at the given point")
    out = base + 1j * alpha
    return complex(out) if np.ndim(out) == 0 else out


def eta_plus_reconstruct(
    sigma: fl.RationalField,
    jplus,
    mu: complex,
    z0: complex,
    z1: complex,
    chart: str = geo.HALFPLANE,
    via: tuple = (),
    tol: float = 1e-12,
) -> complex:
    """Integrate ``(j^+ - mu sigma')/sigma`` along the polyline ``z0 -> via -> z1``.

    Each straight segment is integrated with adaptive Gauss-Kronrod
    quadrature on the real and imaginary parts.
    """
    vertices = [complex(z0), *[complex(v) for v in via], complex(z1)]
    sf = fl.ChartField(sigma, chart)
    zeros = _sigma_zeros(sigma, chart)
    total = 0j
    for a, b in zip(vertices[:-1], vertices[1:]):
        if a == b:
            continue
        for r in zeros:
            if _segment_distance(a, b, r) < 1e-6:
                raise PathError("integration path passes through a zero of sigma")
        d = b - a

        def integrand(t, part, a=a, d=d):
            x = a + t * d
            s0, s1 = sf.derivatives(x, 1)
            val = (jplus(x) - mu * s1) / s0 * d
            return val.real if part == 0 else val.imag

        re, _ = integrate.quad(integrand, 0.0, 1.0, args=(0,), epsabs=tol, epsrel=tol, limit=200)
        im, _ = integrate.quad(integrand, 0.0, 1.0, args=(1,), epsabs=tol, epsrel=tol, limit=200)
        total += re + 1j * im
    return total


def _sigma_zeros(sigma: fl.RationalField, chart: str):
    c = [complex(x) for x in sigma.num]
    hi = list(reversed(fl._trim(c)))
    zs = np.roots(hi) if len(hi) > 1 else np.array([])
    out = []
    for r in zs:
        try:
            out.append(complex(geo.from_halfplane(chart, r, 0, 0)[0]))
        except Exception:
            continue
    return out


def _segment_distance(a, b, p):
    d = b - a
    t = np.clip(((p - a) * np.conj(d)).real / abs(d) ** 2, 0, 1)
    return abs(a + t * d - p)


# ---------------------------------------------------------------------------
# Schwinger functions


def schwinger_from_moments(cov, mean) -> float:
    """Wick sum over partitions into pairs (``cov``) and singletons (``mean``)."""
    cov = np.asarray(cov, dtype=float)
    mean = np.asarray(mean, dtype=float)
    n = len(mean)

    @lru_cache(maxsize=None)
    def rec(mask: int) -> float:
        if mask == 0:
            return 1.0
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        total = mean[i] * rec(rest)
        j_mask = rest
        while j_mask:
            j = (j_mask & -j_mask).bit_length() - 1
            j_mask &= ~(1 << j)
            total += cov[i, j] * rec(rest & ~(1 << j))
        return total

    return rec((1 << n) - 1)


def schwinger(n: int, kernel: CovarianceKernel, eta, points, chart: str = geo.HALFPLANE) -> float:
    """``S_n`` at distinct points; ``eta`` may be ``None`` for a centered field."""
    pts = [complex(p) for p in points]
    if n < 1 or len(pts) != n:
        raise ValueError("need exactly n >= 1 points")
    for a, b in itertools.combinations(pts, 2):
        if abs(a - b) < 1e-12:
            raise DiagonalError("Schwinger functions need distinct points")
    cov = np.zeros((n, n))
    for i, j in itertools.combinations(range(n), 2):
        cov[i, j] = cov[j, i] = kernel.value(chart, pts[i], pts[j])
    mean = np.zeros(n) if eta is None else np.array([float(eta.value(chart, p)) for p in pts])
    return schwinger_from_moments(cov, mean)


# ---------------------------------------------------------------------------
# test bumps and finite-dimensional GFF marginals


def _bump_profile(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    m = r < 1
    out[m] = np.exp(-1.0 / (1.0 - r[m] ** 2))
    return out


@lru_cache(maxsize=None)
def _profile_mass() -> float:
    val, _ = integrate.quad(lambda r: 2 * np.pi * r * _bump_profile(r), 0, 1, epsabs=1e-15, epsrel=1e-13)
    return val


@lru_cache(maxsize=None)
def _profile_log_energy() -> float:
    """``int int log|x - y| phi(x) phi(y)`` for the unit-mass unit-radius bump.

    Newton's theorem for radial densities replaces the angular integral of
    ``log|x - y|`` by ``2 pi log max(|x|, |y|)``.
    """
    m = _profile_mass()

    def rho(r):
        return 2 * np.pi * r * _bump_profile(r) / m

    def inner(p):
        a, _ = integrate.quad(rho, 0, p, epsabs=1e-14, epsrel=1e-12)
        b, _ = integrate.quad(lambda s: rho(s) * np.log(s), p, 1, epsabs=1e-14, epsrel=1e-12)
        return np.log(p) * a + b

    val, _ = integrate.quad(lambda p: rho(p) * inner(p), 0, 1, epsabs=1e-13, epsrel=1e-11, limit=200)
    return val


@dataclass(frozen=True)
class Bump:
    """Smooth radial bump of total mass ``weight`` supported on a disk."""

    center: complex
    radius: float
    weight: float = 1.0

    def density(self, z):
        r = np.abs(np.asarray(z) - self.center) / self.radius
        return self.weight * _bump_profile(r) / (_profile_mass() * self.radius**2)

    def nodes(self, n: int = 32):
        """Polar tensor quadrature: Gauss-Legendre in radius, uniform in angle."""
        x, wx = np.polynomial.legendre.leggauss(n)
        r = 0.5 * (x + 1)
        wr = 0.5 * wx
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        R, TH = np.meshgrid(r, th, indexing="ij")
        WR = np.repeat(wr[:, None], n, axis=1)
        pts = self.center + self.radius * R * np.exp(1j * TH)
        w = self.weight * WR * R * _bump_profile(R) * (2 * np.pi / n) / _profile_mass()
        return pts.ravel(), w.ravel()


@dataclass
class ObservableSet:
    bumps: list
    chart: str = geo.HALFPLANE

    def __post_init__(self):
        self.bumps = list(self.bumps)
        for b in self.bumps:
            if b.radius <= 0:
                raise ValueError("bump radius must be positive")
            ring = b.center + b.radius * np.exp(2j * np.pi * np.arange(64) / 64)
            if not np.all(geo.interior_mask(self.chart, ring)):
                raise ValueError("bump support leaves the chart image")
        for a, b in itertools.combinations(self.bumps, 2):
            if abs(a.center - b.center) < a.radius + b.radius:
                raise ValueError("bump supports must be disjoint")

    @classmethod
    def from_config(cls, bumps, chart=geo.HALFPLANE):
        out = []
        for b in bumps:
            cx, cy = b["center"]
            out.append(Bump(complex(cx, cy), float(b["radius"]), float(b.get("weight", 1.0))))
        return cls(out, chart)


def pairing(kernel: CovarianceKernel, a: Bump, b: Bump, chart: str = geo.HALFPLANE, n: int = 32) -> float:
    """``G[f_a, f_b]`` by tensor quadrature; the diagonal uses Newton's theorem."""
    za, wa = a.nodes(n)
    if a == b:
        sing = -a.weight**2 * (math.log(a.radius) + _profile_log_energy())
        Z, W = np.meshgrid(za, za, indexing="ij")
        reg = kernel.regular(chart, Z, W)
        return float(sing + wa @ reg @ wa)
    zb, wb = b.nodes(n)
    Z, W = np.meshgrid(za, zb, indexing="ij")
    return float(wa @ kernel.value(chart, Z, W) @ wb)


def eta_pairing(eta, a: Bump, chart: str = geo.HALFPLANE, n: int = 32) -> float:
    za, wa = a.nodes(n)
    return float(wa @ np.asarray(eta.value(chart, za), dtype=float))


def pairing_matrix(kernel, obs: ObservableSet, n: int = 32, check: bool = True, tol: float = 1e-6):
    k = len(obs.bumps)
    cov = np.zeros((k, k))
    for i in range(k):
        for j in range(i, k):
            val = pairing(kernel, obs.bumps[i], obs.bumps[j], obs.chart, n)
            if check:
                alt = pairing(kernel, obs.bumps[i], obs.bumps[j], obs.chart, n + 16)
                if abs(alt - val) > tol:
                    raise QuadratureError(f"pairing ({i},{j}) quadrature error {abs(alt - val):.2e}")
            cov[i, j] = cov[j, i] = val
    return cov


@dataclass
class GffEnsemble:
    covariance: np.ndarray
    mean: np.ndarray
    factor: np.ndarray
    samples: np.ndarray
    jitter: float = 0.0

    def summary(self) -> dict:
        """Sample statistics with standard errors under the Gaussian model."""
        N = self.samples.shape[0]
        xbar = self.samples.mean(axis=0)
        cen = self.samples - xbar
        scov = cen.T @ cen / (N - 1)
        d = np.diag(self.covariance)
        se_mean = np.sqrt(d / N)
        se_cov = np.sqrt((np.outer(d, d) + self.covariance**2) / N)
        m3 = (cen**3).mean(axis=0)
        se_m3 = np.sqrt(15 * d**3 / N)
        return {
            "n_samples": N,
            "mean": xbar.tolist(),
            "target_mean": self.mean.tolist(),
            "se_mean": se_mean.tolist(),
            "covariance": scov.tolist(),
            "target_covariance": self.covariance.tolist(),
            "se_covariance": se_cov.tolist(),
            "third_moment": m3.tolist(),
            "se_third_moment": se_m3.tolist(),
        }


def factorize(cov, jitter: float = 1e-12):
    """Cholesky factor, retrying once with diagonal jitter."""
    try:
        return np.linalg.cholesky(cov), 0.0
    except np.linalg.LinAlgError:
        pass
    eps = jitter * max(1.0, float(np.trace(cov)) / len(cov))
    try:
        return np.linalg.cholesky(cov + eps * np.eye(len(cov))), eps
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("covariance is not positive semidefinite") from exc


def gff_sample(
    obs: ObservableSet,
    kernel: CovarianceKernel,
    eta,
    N: int,
    seed: int,
    n_quad: int = 32,
    block: int = 8192,
) -> GffEnsemble:
    """Draw ``N`` joint samples of ``(Phi[f_1], ..., Phi[f_n])``.

    Samples are generated in fixed blocks, each with its own stream spawned
    from the root seed, so the result does not depend on how blocks are
    scheduled.
    """
    cov = pairing_matrix(kernel, obs, n_quad)
    k = len(obs.bumps)
    mean = np.zeros(k) if eta is None else np.array([eta_pairing(eta, b, obs.chart, n_quad) for b in obs.bumps])
    L, jit = factorize(cov)
    root = np.random.SeedSequence(seed)
    nblocks = (N + block - 1) // block
    streams = root.spawn(nblocks)
    out = np.empty((N, k))
    for i, ss in enumerate(streams):
        rng = np.random.Generator(np.random.Philox(ss))
        lo, hi = i * block, min(N, (i + 1) * block)
        out[lo:hi] = mean + rng.standard_normal((hi - lo, k)) @ L.T
    return GffEnsemble(cov, mean, L, out, jit)
