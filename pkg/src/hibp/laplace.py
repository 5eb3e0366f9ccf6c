"""Lévy densities, Laplace exponents and thinning masses.

Two Lévy families are supported:

* ``GeneralizedGamma(alpha, zeta, theta)`` with density
  ``theta / Gamma(1 - alpha) * s**(-alpha - 1) * exp(-zeta * s)`` on ``(0, inf)``;
* ``StableBeta(alpha, beta, theta, tilt)`` with density
  ``theta * p**(-alpha - 1) * (1 - p)**(beta + alpha - 1) * exp(-tilt * p)`` on ``(0, 1)``.
  The Beta process is ``StableBeta(0, 1, theta)``.

Tilts and (1 - p)**b shifts keep both families closed, which is how posterior
and thinned Lévy densities are represented.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, ClassVar

import numpy as np
from scipy import integrate, special

from .errors import NumericError, ParameterError

QUAD_ABS_TOL = 1e-10
QUAD_REL_TOL = 1e-11


def psi_tilde(alpha: float, zeta: float, kappa: float) -> float:
    """Generalized gamma Laplace exponent per unit mass.

    ``((kappa + zeta)**alpha - zeta**alpha) / alpha`` for ``0 < alpha < 1``,
    ``log(1 + kappa / zeta)`` for ``alpha == 0`` and
    ``(zeta**-delta - (kappa + zeta)**-delta) / delta`` for ``alpha = -delta < 0``.
    """
    _check_gg(alpha, zeta)
    if kappa < 0:
        raise ParameterError(f"kappa must be >= 0, got {kappa}")
    if kappa == 0:
        return 0.0
    if alpha > 0:
        if zeta == 0:
            return kappa**alpha / alpha
        # expm1 keeps the small-alpha limit accurate
        return zeta**alpha * math.expm1(alpha * math.log1p(kappa / zeta)) / alpha
    if alpha == 0:
        return math.log1p(kappa / zeta)
    delta = -alpha
    return -(zeta**-delta) * math.expm1(-delta * math.log1p(kappa / zeta)) / delta


def _gg_errors(alpha, zeta):
    if not (0 < alpha < 1 and zeta >= 0) and not (alpha <= 0 and zeta > 0):
        return [f"generalized gamma needs 0<alpha<1, zeta>=0 or alpha<=0, zeta>0 (got alpha={alpha}, zeta={zeta})"]
    return []


def _check_gg(alpha, zeta):
    errs = _gg_errors(alpha, zeta)
    if errs:
        raise ParameterError(errs[0])


@dataclass(frozen=True)
class GeneralizedGamma:
    alpha: float
    zeta: float
    theta: float = 1.0

    bounded: ClassVar[bool] = False
    family: ClassVar[str] = "generalized_gamma"

    def errors(self) -> list[str]:
        errs = _gg_errors(self.alpha, self.zeta)
        if not self.theta > 0:
            errs.append(f"theta must be > 0 (got {self.theta})")
        return errs

    def density(self, s):
        s = np.asarray(s, dtype=float)
        c = self.theta / math.gamma(1 - self.alpha)
        return c * s ** (-self.alpha - 1) * np.exp(-self.zeta * s)

    def laplace(self, kappa: float) -> float:
        return self.theta * psi_tilde(self.alpha, self.zeta, kappa)

    def log_moment(self, n, kappa: float):
        """log of int s**n exp(-kappa s) rho(s) ds, vectorized over n > alpha."""
        n = np.asarray(n, dtype=float)
        rate = self.zeta + kappa
        if rate <= 0:
            raise ParameterError("moment undefined for zeta + kappa == 0")
        return (math.log(self.theta) + special.gammaln(n - self.alpha)
                - math.lgamma(1 - self.alpha) - (n - self.alpha) * math.log(rate))

    def tilted(self, t: float) -> "GeneralizedGamma":
        return GeneralizedGamma(self.alpha, self.zeta + t, self.theta)

    def integrate(self, g_over_s: Callable[[float], float]) -> float:
        """int g(s) rho(s) ds given ``g(s)/s``; g must vanish linearly at 0."""
        c = self.theta / math.gamma(1 - self.alpha)
        a, z = self.alpha, self.zeta
        g_over_s = _guard_origin(g_over_s)
        head, e1 = integrate.quad(lambda s: g_over_s(s) * math.exp(-z * s), 0.0, 1.0,
                                  weight="alg", wvar=(-a, 0.0), limit=500,
                                  epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL)
        tail, e2 = integrate.quad(lambda s: g_over_s(s) * s ** (-a) * math.exp(-z * s), 1.0, np.inf,
                                  limit=500, epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL)
        return _checked(c * (head + tail), c * (e1 + e2))

    def to_dict(self) -> dict:
        return {"family": self.family, "alpha": self.alpha, "zeta": self.zeta, "theta": self.theta}


@dataclass(frozen=True)
class StableBeta:
    alpha: float
    beta: float
    theta: float = 1.0
    tilt: float = 0.0

    bounded: ClassVar[bool] = True
    family: ClassVar[str] = "stable_beta"

    def errors(self) -> list[str]:
        errs = []
        if not 0 <= self.alpha < 1:
            errs.append(f"stable-Beta needs 0<=alpha<1 (got {self.alpha})")
        if not self.beta > -self.alpha:
            errs.append(f"stable-Beta needs beta > -alpha (got beta={self.beta}, alpha={self.alpha})")
        if not self.theta > 0:
            errs.append(f"theta must be > 0 (got {self.theta})")
        if not self.tilt >= 0:
            errs.append(f"tilt must be >= 0 (got {self.tilt})")
        return errs

    def density(self, p):
        p = np.asarray(p, dtype=float)
        a, b = self.alpha, self.beta
        return self.theta * p ** (-a - 1) * (1 - p) ** (b + a - 1) * np.exp(-self.tilt * p)

    def log_beta_moment(self, a, b=0.0, t: float = 0.0):
        """log of int p**a (1-p)**b exp(-t p) rho(p) dp (vectorized over a and b)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        x = a - self.alpha
        y = b + self.beta + self.alpha
        out = math.log(self.theta) + special.betaln(x, y)
        z = self.tilt + t
        if z > 0:
            out = out + _log_hyp1f1_neg(x, x + y, z)
        return out

    def log_moment(self, n, kappa: float):
        return self.log_beta_moment(n, 0.0, kappa)

    def laplace(self, kappa: float) -> float:
        if kappa == 0:
            return 0.0
        return self.integrate(lambda p: -math.expm1(-kappa * p) / p)

    def tilted(self, t: float) -> "StableBeta":
        return StableBeta(self.alpha, self.beta, self.theta, self.tilt + t)

    def shifted(self, b: float) -> "StableBeta":
        """Density multiplied by (1 - p)**b."""
        return StableBeta(self.alpha, self.beta + b, self.theta, self.tilt)

    def integrate(self, g_over_p: Callable[[float], float]) -> float:
        a, e, t = self.alpha, self.beta + self.alpha - 1, self.tilt
        g_over_p = _guard_unit(g_over_p)
        head, e1 = integrate.quad(lambda p: g_over_p(p) * (1 - p) ** e * math.exp(-t * p), 0.0, 0.5,
                                  weight="alg", wvar=(-a, 0.0), limit=500,
                                  epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL)
        tail, e2 = integrate.quad(lambda p: g_over_p(p) * p ** (-a) * math.exp(-t * p), 0.5, 1.0,
                                  weight="alg", wvar=(0.0, e), limit=500,
                                  epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL)
        return _checked(self.theta * (head + tail), self.theta * (e1 + e2))

    def to_dict(self) -> dict:
        d = {"family": self.family, "alpha": self.alpha, "beta": self.beta, "theta": self.theta}
        if self.tilt:
            d["tilt"] = self.tilt
        return d


def BetaProcess(theta: float) -> StableBeta:
    return StableBeta(0.0, 1.0, theta)


Levy = GeneralizedGamma | StableBeta


def levy_from_dict(d: dict) -> Levy:
    fam = d.get("family")
    if fam in ("generalized_gamma", "gg"):
        return GeneralizedGamma(float(d["alpha"]), float(d["zeta"]), float(d.get("theta", 1.0)))
    if fam in ("stable_beta", "sbp"):
        return StableBeta(float(d["alpha"]), float(d["beta"]), float(d.get("theta", 1.0)),
                          float(d.get("tilt", 0.0)))
    if fam in ("beta", "beta_process"):
        return BetaProcess(float(d.get("theta", 1.0)))
    raise ParameterError(f"unknown Lévy family {fam!r}")


def _log_hyp1f1_neg(a, b, z):
    """log 1F1(a; b; -z) for z > 0 via Kummer's transformation (positive series)."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.empty(a.shape)
    flat_a, flat_b, flat_o = a.ravel(), b.ravel(), out.ravel()
    for i in range(flat_a.size):
        v = special.hyp1f1(flat_b[i] - flat_a[i], flat_b[i], z) if z < 600 else np.inf
        if np.isfinite(v) and v > 0:
            flat_o[i] = -z + math.log(v)
        else:
            import mpmath
            flat_o[i] = float(mpmath.log(mpmath.hyp1f1(flat_a[i], flat_b[i], -z)))
    return out if out.ndim else float(out)


def _guard_origin(f):
    # QUADPACK's algebraic-weight rules evaluate the endpoint itself
    return lambda x: f(x if x > 0 else 1e-300)


def _guard_unit(f):
    top = math.nextafter(1.0, 0.0)
    return lambda x: f(min(max(x, 1e-300), top))


def _checked(value, err):
    if not np.isfinite(value) or err > max(QUAD_ABS_TOL * 100, 1e-8 * abs(value)):
        raise NumericError("quadrature did not converge", residual=err)
    return float(value)


@dataclass(frozen=True)
class Bernoulli:
    kind: ClassVar[str] = "bernoulli"

    def errors(self):
        return []

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Poisson:
    rate: float = 1.0
    kind: ClassVar[str] = "poisson"

    def errors(self):
        return [] if self.rate > 0 else [f"Poisson slab rate must be > 0 (got {self.rate})"]

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class NegBinomial:
    r: float = 1.0
    kind: ClassVar[str] = "negbinomial"

    def errors(self):
        return [] if self.r > 0 else [f"NegBinomial slab r must be > 0 (got {self.r})"]

    def to_dict(self):
        return {"kind": self.kind, "r": self.r}


SlabKind = Bernoulli | Poisson | NegBinomial


def slab_from_dict(d: dict) -> SlabKind:
    kind = d.get("kind")
    if kind == "bernoulli":
        return Bernoulli()
    if kind == "poisson":
        return Poisson(float(d.get("rate", 1.0)))
    if kind in ("negbinomial", "nb"):
        return NegBinomial(float(d.get("r", 1.0)))
    raise ParameterError(f"unknown slab kind {kind!r}")


@dataclass(frozen=True)
class GroupLevySpec:
    levy: Levy
    slab: SlabKind

    def errors(self) -> list[str]:
        errs = self.levy.errors() + self.slab.errors()
        if not isinstance(self.slab, Poisson) and not self.levy.bounded:
            errs.append(f"slab/family mismatch: {self.slab.kind} slab needs jumps in [0,1], "
                        f"{self.levy.family} jumps are unbounded")
        return errs

    def check(self):
        errs = self.errors()
        if errs:
            raise ParameterError("; ".join(errs))

    def log_spike(self, s: float) -> float:
        """log(1 - pi_A(s)), the log probability of a zero entry."""
        if isinstance(self.slab, Bernoulli):
            return math.log1p(-s)
        if isinstance(self.slab, Poisson):
            return -self.slab.rate * s
        return self.slab.r * math.log1p(-s)

    def thinned(self, M: float) -> "GroupLevySpec":
        """Spec whose Lévy density is (1 - pi_A(s))**M rho(s)."""
        if isinstance(self.slab, Poisson):
            return GroupLevySpec(self.levy.tilted(self.slab.rate * M), self.slab)
        shift = M if isinstance(self.slab, Bernoulli) else self.slab.r * M
        return GroupLevySpec(self.levy.shifted(shift), self.slab)

    def to_dict(self) -> dict:
        return {**self.levy.to_dict(), "slab": self.slab.to_dict()}


def group_spec_from_dict(d: dict) -> GroupLevySpec:
    d = dict(d)
    slab = slab_from_dict(d.pop("slab", {"kind": "bernoulli"}))
    return GroupLevySpec(levy_from_dict(d), slab)


def psi_quadrature(spec: GroupLevySpec, M: int) -> float:
    """int (1 - (1 - pi_A(s))**M) rho(s) ds by adaptive quadrature."""
    if M < 0:
        raise ParameterError(f"M must be >= 0, got {M}")
    if M == 0:
        return 0.0
    spec.check()
    slab = spec.slab
    if isinstance(slab, Poisson):
        c = slab.rate * M
        return spec.levy.integrate(lambda s: -math.expm1(-c * s) / s)
    c = M if isinstance(slab, Bernoulli) else slab.r * M
    return spec.levy.integrate(lambda p: -math.expm1(c * math.log1p(-p)) / p)


@lru_cache(maxsize=4096)
def psi_group(spec: GroupLevySpec, M: int) -> float:
    """Expected-new-feature mass psi_j(M) after M draws."""
    if M < 0:
        raise ParameterError(f"M must be >= 0, got {M}")
    spec.check()
    if M == 0:
        return 0.0
    levy, slab = spec.levy, spec.slab
    if isinstance(slab, Bernoulli) and levy.tilt == 0:
        i = np.arange(1, M + 1)
        a, b = levy.alpha, levy.beta
        terms = np.exp(math.lgamma(1 - a) + special.gammaln(b + a + i - 1) - special.gammaln(b + i))
        return float(levy.theta * math.fsum(terms))
    if isinstance(slab, Poisson):
        return levy.laplace(slab.rate * M)
    return psi_quadrature(spec, M)


def gamma_increment(spec: GroupLevySpec, M: int) -> float:
    """psi_j(M + 1) - psi_j(M), computed as the one-draw mass of the thinned density."""
    if M < 0:
        raise ParameterError(f"M must be >= 0, got {M}")
    return psi_group(spec.thinned(M), 1)
