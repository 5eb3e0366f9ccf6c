"""Closed-form marginal likelihood of an observed allocation.

The density of an allocation (atom-label densities omitted, they are the same
under every parameter value) factorizes as

    slab part        prod_{j,k,l} S_j(a_{j,k,l})
    combinatorial    n! prod_j pi_j**d_j / prod_{j,k} n_{j,k}!
    ECPF             gamma0**r / n! * exp(-phi) * prod_k varpi(n_k)

with varpi(n) = kappa**n int t**n exp(-kappa t) tau0(t) dt.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distkit import MtpParams, get_mtp, log_slab_integral
from .errors import ParameterError
from .laplace import BetaProcess, GeneralizedGamma, StableBeta, psi_group, psi_tilde
from .model import FeatureAllocation


@dataclass(frozen=True)
class LogLikBreakdown:
    log_slab: float
    log_ecpf: float
    log_combinatorial: float
    total: float

    def to_dict(self) -> dict:
        return {"log_slab": self.log_slab, "log_ecpf": self.log_ecpf,
                "log_combinatorial": self.log_combinatorial, "total": self.total}


def _fsum(xs) -> float:
    return math.fsum(float(x) for x in np.ravel(xs))


def log_ecpf(alloc: FeatureAllocation) -> float:
    """log of the exchangeable cluster probability function over the n_k."""
    cfg = alloc.config
    kappa = cfg.kappa()
    phi = cfg.phi() if kappa > 0 else 0.0
    if alloc.r == 0:
        return -phi
    n_k = alloc.n_k
    lv = cfg.base.levy
    terms = n_k * math.log(kappa) + lv.log_moment(n_k, kappa)
    return (alloc.r * math.log(cfg.base.mass) - math.lgamma(alloc.n + 1) - phi + _fsum(terms))


def _log_pis(alloc):
    psis = alloc.config.psis()
    with np.errstate(divide="ignore"):
        return np.log(psis / psis.sum())


def log_combinatorial(alloc: FeatureAllocation) -> float:
    if alloc.r == 0:
        return 0.0
    d = alloc.d
    lp = _log_pis(alloc)
    pi_part = _fsum(d[d > 0] * lp[d > 0])
    return math.lgamma(alloc.n + 1) + pi_part - _fsum(special.gammaln(alloc.counts + 1))


def _slab_terms(alloc):
    """Per selection: log int prod_i G(a_i|s) rho_j(s) ds."""
    out = []
    for col in alloc.columns:
        for j, svs in enumerate(col.scores):
            g = alloc.config.groups[j]
            for sv in svs:
                out.append(log_slab_integral(g.spec, g.M, sv.rows, sv.values))
    return out


def log_delta(alloc: FeatureAllocation) -> float:
    return math.fsum(_slab_terms(alloc))


def log_slab(alloc: FeatureAllocation) -> float:
    """log S_[J](a): each selection's zero-truncated slab probability."""
    if alloc.r == 0:
        return 0.0
    log_psi = np.log(alloc.config.psis(), where=alloc.config.psis() > 0,
                     out=np.zeros(alloc.config.J))
    return log_delta(alloc) - _fsum(alloc.d * log_psi)


def log_marginal(alloc: FeatureAllocation) -> LogLikBreakdown:
    s, e, c = log_slab(alloc), log_ecpf(alloc), log_combinatorial(alloc)
    return LogLikBreakdown(s, e, c, math.fsum([s, e, c]))


def log_marginal_delta(alloc: FeatureAllocation) -> float:
    """Same density through Delta(a) and the kappa**-n normalization."""
    if alloc.r == 0:
        return log_ecpf(alloc)
    kappa = alloc.config.kappa()
    return math.fsum([log_delta(alloc), math.lgamma(alloc.n + 1), log_ecpf(alloc),
                      -alloc.n * math.log(kappa), -_fsum(special.gammaln(alloc.counts + 1))])


def log_multi_group_ecpf(alloc: FeatureAllocation) -> float:
    """Atom-level multi-group ECPF (score vectors ignored)."""
    if alloc.r == 0:
        return log_ecpf(alloc)
    d = alloc.d
    lp = _log_pis(alloc)
    return math.fsum([math.lgamma(alloc.n + 1), _fsum(d[d > 0] * lp[d > 0]),
                      -_fsum(special.gammaln(d + 1)), log_ecpf(alloc)])


def log_count_law(alloc: FeatureAllocation) -> float:
    """log probability of the count columns (n_{j,k}) with score vectors summed out."""
    return log_ecpf(alloc) + log_combinatorial(alloc)


def _bernoulli_profile_checks(alloc):
    cfg = alloc.config
    if not isinstance(cfg.base.levy, GeneralizedGamma):
        raise ParameterError("profile target needs a generalized gamma base")
    for g in cfg.groups:
        lv = g.spec.levy
        if g.spec.slab.kind != "bernoulli" or not isinstance(lv, StableBeta) \
                or lv.alpha != 0 or lv.beta != 1 or lv.tilt:
            raise ParameterError("profile target needs Beta-process groups with Bernoulli slabs")


def log_marginal_bernoulli_profile(alloc: FeatureAllocation, theta0: float, theta: float,
                                   alpha: float) -> float:
    """Parameter-dependent part of the marginal for the tied GG-Beta Bernoulli model.

    Base GG(alpha, zeta; theta0) with zeta and gamma0 taken from the
    allocation's config; every group is a Beta process with mass theta.
    """
    _bernoulli_profile_checks(alloc)
    if not (theta0 > 0 and theta > 0):
        raise ParameterError("theta0 and theta must be > 0")
    cfg = alloc.config
    zeta, gamma0 = cfg.base.levy.zeta, cfg.base.mass
    base = GeneralizedGamma(alpha, zeta, theta0)
    errs = base.errors()
    if errs:
        raise ParameterError("; ".join(errs))
    Ms = [g.M for g in cfg.groups]
    psis = np.array([psi_group(_beta_spec(theta), M) for M in Ms])
    kappa = float(psis.sum())
    phi = gamma0 * theta0 * psi_tilde(alpha, zeta, kappa)
    if alloc.r == 0:
        return -phi
    n_k = alloc.n_k
    mtp = get_mtp(MtpParams(kappa, base))
    d = alloc.d
    return math.fsum([alloc.r * math.log(phi), -phi,
                      _fsum(mtp.logpmf(n_k) + special.gammaln(n_k + 1)),
                      _fsum(d[d > 0] * np.log(psis[d > 0] / kappa))])


def _beta_spec(theta):
    from .laplace import Bernoulli, GroupLevySpec
    return GroupLevySpec(BetaProcess(theta), Bernoulli())


class ProfileTarget:
    """Sufficient statistics of an allocation for repeated profile evaluation."""

    def __init__(self, alloc: FeatureAllocation):
        _bernoulli_profile_checks(alloc)
        cfg = alloc.config
        self.zeta, self.gamma0 = cfg.base.levy.zeta, cfg.base.mass
        self.r, self.d = alloc.r, alloc.d
        self.n = int(self.d.sum())
        self.Ms = np.array([g.M for g in cfg.groups])
        self.harm = np.array([math.fsum(1.0 / np.arange(1, M + 1)) if M else 0.0 for M in self.Ms])
        vals, mult = np.unique(alloc.n_k, return_counts=True)
        self.nk_vals, self.nk_mult = vals.astype(float), mult

    def __call__(self, theta0: float, theta: float, alpha: float) -> float:
        if not (theta0 > 0 and theta > 0 and 0 < alpha < 1):
            return -math.inf
        z = self.zeta
        kappa = theta * float(self.harm.sum())
        phi = self.gamma0 * theta0 * psi_tilde(alpha, z, kappa)
        if self.r == 0:
            return -phi
        # log(p(n) n!) for the generalized gamma MtP law, 0 < alpha < 1
        lk = math.log(kappa)
        lkz = math.log(kappa + z)
        norm = alpha * psi_tilde(alpha, z, kappa) * math.exp(-alpha * lkz)
        lp = (self.nk_vals * (lk - lkz) + special.gammaln(self.nk_vals - alpha)
              - math.lgamma(1 - alpha) + math.log(alpha) - math.log(norm))
        # psi_j / kappa = H_{M_j} / sum_l H_{M_l}, free of theta
        dmask = self.d > 0
        grp = float(np.sum(self.d[dmask] * np.log(self.harm[dmask] / self.harm.sum())))
        return self.r * math.log(phi) - phi + float(np.dot(self.nk_mult, lp)) + grp
