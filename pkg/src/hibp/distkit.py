"""Distribution kernels: mixed-truncated-Poisson laws, slab vectors, jump laws.

All samplers take an explicit ``numpy.random.Generator``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .errors import NumericError, ParameterError
from .laplace import Bernoulli, GeneralizedGamma, GroupLevySpec, Levy, Poisson, psi_group

TAIL_TOL = 1e-12
_CHUNK = 256
_MAX_DRAW = 2**62


class DiscreteInverter:
    """Inversion sampler for a pmf on {lo, lo+1, ...}.

    The cumulative table is built lazily until it reaches ``1 - TAIL_TOL``;
    uniforms beyond the table extend it further, so draws stay exact. When
    ``log_survival`` is given (closed-form P(X > m)), uniforms past the table
    are inverted by bisection on it instead of stepping through the pmf.
    """

    def __init__(self, logpmf: Callable[[np.ndarray], np.ndarray], lo: int = 1,
                 hi: int | None = None, log_survival: Callable[[float], float] | None = None):
        self.logpmf = logpmf
        self.lo = lo
        self.hi = hi
        self.log_survival = log_survival
        self._pmf = np.empty(0)
        self._cdf = np.empty(0)
        self._exhausted = False
        self._extend_to(1.0 - TAIL_TOL)

    @property
    def residual_mass(self) -> float:
        return max(0.0, 1.0 - float(self._cdf[-1]))

    def _extend_once(self):
        start = self.lo + self._pmf.size
        stop = start + max(_CHUNK, self._pmf.size)
        if self.hi is not None:
            stop = min(stop, self.hi + 1)
        if start >= stop:
            self._exhausted = True
            return
        chunk = np.exp(self.logpmf(np.arange(start, stop)))
        base = self._cdf[-1] if self._cdf.size else 0.0
        self._pmf = np.concatenate([self._pmf, chunk])
        self._cdf = np.concatenate([self._cdf, base + np.cumsum(chunk)])
        # underflowed pmf terms cannot move the cdf any further
        if self.hi is None and self._pmf.size > 4 * _CHUNK and chunk[-1] < 1e-300:
            self._exhausted = True

    def _extend_to(self, level: float, max_len: int = 1 << 22):
        while (not self._exhausted and (self._cdf.size == 0 or self._cdf[-1] < level)
               and self._pmf.size < max_len):
            self._extend_once()

    def pmf_table(self) -> np.ndarray:
        return self._pmf

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        umax = float(np.max(u)) if np.ndim(u) else float(u)
        if umax >= self._cdf[-1] and self.log_survival is None:
            self._extend_to(umax)
        idx = np.searchsorted(self._cdf, u, side="right")
        out = self.lo + idx
        over = idx >= self._cdf.size
        if np.any(over):
            if self.log_survival is not None:
                if np.ndim(u):
                    out = out.astype(object)
                    out[over] = [self._survival_inverse(v) for v in u[over]]
                else:
                    return self._survival_inverse(float(u))
            else:
                # residual mass below floating resolution lumps on the last atom
                out = np.minimum(out, self.lo + self._cdf.size - 1)
        return out if np.ndim(out) else int(out)

    def _survival_inverse(self, u: float) -> int:
        """Smallest m with P(X > m) <= 1 - u."""
        target = math.log1p(-u) if u < 1 else -math.inf
        lo = self.lo + self._cdf.size - 1
        if self.log_survival(lo) <= target:
            return lo
        hi = max(2 * lo, lo + 1)
        while self.log_survival(hi) > target:
            lo, hi = hi, 2 * hi
            if hi > _MAX_DRAW:
                raise NumericError(f"heavy-tailed draw exceeds {_MAX_DRAW} (uniform {u!r})")
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.log_survival(mid) > target:
                lo = mid
            else:
                hi = mid
        return hi


@dataclass(frozen=True)
class MtpParams:
    """Mixed-truncated-Poisson law with tilt ``kappa`` over a Lévy density."""
    kappa: float
    levy: Levy


class Mtp:
    """Zero-truncated mixed Poisson: P(m) = kappa**m int s**m e**(-kappa s) rho(s) ds / (m! laplace(kappa))."""

    def __init__(self, params: MtpParams):
        if not params.kappa > 0:
            raise ParameterError(f"MtP tilt kappa must be > 0, got {params.kappa}")
        errs = params.levy.errors()
        if errs:
            raise ParameterError("; ".join(errs))
        self.params = params
        self.log_norm = math.log(params.levy.laplace(params.kappa))
        log_survival = None
        lv = params.levy
        if isinstance(lv, GeneralizedGamma) and lv.zeta == 0:
            # Sibuya law: P(X > m) = Gamma(m + 1 - alpha) / (Gamma(1 - alpha) Gamma(m + 1))
            a = lv.alpha
            log_survival = lambda m: math.lgamma(m + 1 - a) - math.lgamma(1 - a) - math.lgamma(m + 1)
        self._inv = DiscreteInverter(self.logpmf, 1, log_survival=log_survival)

    def logpmf(self, m):
        m = np.asarray(m, dtype=float)
        k = self.params.kappa
        return m * math.log(k) + self.params.levy.log_moment(m, k) - special.gammaln(m + 1) - self.log_norm

    def pmf(self, m):
        return np.exp(self.logpmf(m))

    def sample(self, rng, size=None):
        return self._inv.sample(rng, size)

    @property
    def residual_mass(self) -> float:
        return self._inv.residual_mass


@lru_cache(maxsize=4096)
def get_mtp(params: MtpParams) -> Mtp:
    return Mtp(params)


def mtp_pmf(params: MtpParams, m: int) -> float:
    if m < 1:
        raise ParameterError(f"MtP support starts at 1, got m={m}")
    return float(get_mtp(params).pmf(m))


def mtp_sample(params: MtpParams, rng: np.random.Generator, size=None):
    return get_mtp(params).sample(rng, size)


def multinomial_split(n: int, weights, rng: np.random.Generator) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w < 0) or not w.sum() > 0:
        raise ParameterError("multinomial weights must be nonnegative with positive sum")
    if n == 0:
        return np.zeros(w.size, dtype=np.int64)
    return rng.multinomial(n, w / w.sum())


@dataclass(frozen=True)
class GammaJump:
    shape: float
    rate: float

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def mean(self):
        return self.shape / self.rate


@dataclass(frozen=True)
class TiltedBeta:
    """Density proportional to p**(a-1) (1-p)**(b-1) exp(-tilt p) on (0, 1)."""
    a: float
    b: float
    tilt: float = 0.0

    def logpdf_unnormalized(self, p):
        p = np.asarray(p, dtype=float)
        return (self.a - 1) * np.log(p) + (self.b - 1) * np.log1p(-p) - self.tilt * p

    def log_norm(self) -> float:
        from .laplace import _log_hyp1f1_neg
        out = float(special.betaln(self.a, self.b))
        if self.tilt > 0:
            out += float(_log_hyp1f1_neg(self.a, self.a + self.b, self.tilt))
        return out

    def sample(self, rng, size=None):
        if size is None:
            return self._one(rng)
        return np.array([self._one(rng) for _ in range(int(np.prod(size)))]).reshape(size)

    def _one(self, rng):
        a, b, t = self.a, self.b, self.tilt
        if t <= 2.0:
            # Beta proposal, acceptance exp(-t p) >= exp(-t)
            while True:
                p = rng.beta(a, b)
                if rng.random() < math.exp(-t * p):
                    return p
        if b >= 1:
            return _trunc_gamma_reject(a, b, t, 1.0, rng)
        # b < 1 and strong tilt: split at 1/2 and pick a side by its mass
        left = math.exp(_log_trunc_gamma_mass(a, t, 0.5))
        right = math.exp(self._log_right_mass())
        while True:
            if rng.random() * (left * 2 ** (1 - b) + right) < left * 2 ** (1 - b):
                p = _trunc_gamma_draw(a, t, 0.5, rng)
                # (1-p)**(b-1) <= 2**(1-b) on [0, 1/2]
                if rng.random() < (1 - p) ** (b - 1) / 2 ** (1 - b):
                    return p
            else:
                # on [1/2, 1]: draw q = 1 - p from q**(b-1) on [0, 1/2], accept by p**(a-1) e**(-tp) / bound
                q = 0.5 * rng.random() ** (1.0 / b)
                p = 1.0 - q
                lw = (a - 1) * math.log(p) - t * p - self._log_right_bound()
                if math.log(rng.random()) < lw:
                    return p

    def _log_right_bound(self):
        # max of (a-1) log p - t p on [1/2, 1]
        a, t = self.a, self.tilt
        cands = [0.5, 1.0]
        if a > 1 and 0.5 < (a - 1) / t < 1:
            cands.append((a - 1) / t)
        return max((a - 1) * math.log(p) - t * p for p in cands)

    def _log_right_mass(self):
        # envelope mass on [1/2, 1]: bound * int_0^{1/2} q**(b-1) dq
        return self._log_right_bound() + (self.b * math.log(0.5) - math.log(self.b))


def _log_trunc_gamma_mass(a, t, c):
    # int_0^c p**(a-1) e**(-tp) dp
    return math.lgamma(a) - a * math.log(t) + math.log(special.gammainc(a, t * c))


def _trunc_gamma_draw(a, t, c, rng):
    top = special.gammainc(a, t * c)
    while True:
        p = special.gammaincinv(a, rng.random() * top) / t
        if 0 < p <= c:
            return p


def _trunc_gamma_reject(a, b, t, c, rng):
    while True:
        p = _trunc_gamma_draw(a, t, c, rng)
        if rng.random() < (1 - p) ** (b - 1):
            return p


JumpLaw = GammaJump | TiltedBeta


def jump_sample(law: JumpLaw, rng: np.random.Generator, size=None):
    return law.sample(rng, size)


def levy_jump_law(levy: Levy, a: float, b: float = 0.0, t: float = 0.0) -> JumpLaw:
    """Law with density proportional to s**a (1-s)**b e**(-t s) rho(s)."""
    if isinstance(levy, GeneralizedGamma):
        if b:
            raise ParameterError("(1-s)**b factor needs a Lévy density on (0,1)")
        return GammaJump(a - levy.alpha, levy.zeta + t)
    return TiltedBeta(a - levy.alpha, b + levy.beta + levy.alpha, levy.tilt + t)


# ---- slab vectors -----------------------------------------------------------


def zt_binomial_mix_pmf(spec: GroupLevySpec, M: int) -> np.ndarray:
    """P(m) = C(M, m) int p**m (1-p)**(M-m) rho(p) dp / psi(M) for m = 1..M."""
    if not isinstance(spec.slab, Bernoulli):
        raise ParameterError("mixed zero-truncated Binomial needs a Bernoulli slab")
    if M < 1:
        raise ParameterError(f"M must be >= 1, got {M}")
    return np.exp(_zt_binomial_logpmf(spec, M)(np.arange(1, M + 1)))


def _zt_binomial_logpmf(spec, M):
    lv = spec.levy
    log_psi = math.log(psi_group(spec, M))
    lcm = math.lgamma(M + 1)

    def f(m):
        m = np.asarray(m, dtype=float)
        return (lcm - special.gammaln(m + 1) - special.gammaln(M - m + 1)
                + lv.log_beta_moment(m, M - m) - log_psi)
    return f


@lru_cache(maxsize=1024)
def _zt_binomial_inverter(spec, M):
    return DiscreteInverter(_zt_binomial_logpmf(spec, M), 1, hi=M)


def zt_binomial_mix_sample(spec: GroupLevySpec, M: int, rng, size=None):
    if not isinstance(spec.slab, Bernoulli):
        raise ParameterError("mixed zero-truncated Binomial needs a Bernoulli slab")
    if M < 1:
        raise ParameterError(f"M must be >= 1, got {M}")
    return _zt_binomial_inverter(spec, M).sample(rng, size)


def hypergeometric_place(m: int, M: int, rng) -> np.ndarray:
    """Binary vector of length M with a uniformly random size-m support."""
    if not 1 <= m <= M:
        raise ParameterError(f"need 1 <= m <= M, got m={m}, M={M}")
    out = np.zeros(M, dtype=np.int64)
    out[_place(m, M, rng)] = 1
    return out


def _place(m, M, rng):
    if m == M:
        return np.arange(M)
    if m == 1:
        return np.array([rng.integers(M)])
    return np.sort(rng.choice(M, size=m, replace=False))


def _zt_negbin_logpmf(spec, M):
    # total a of M iid NB(r, p) entries, mixed over rho and truncated at zero
    lv, rM = spec.levy, spec.slab.r * M
    log_psi = math.log(psi_group(spec, M))

    def f(a):
        a = np.asarray(a, dtype=float)
        return (special.gammaln(a + rM) - special.gammaln(rM) - special.gammaln(a + 1)
                + lv.log_beta_moment(a, rM) - log_psi)
    return f


class SlabVectorLaw:
    """Law of one non-null score vector (a^(1), ..., a^(M)) for a group with M rows.

    Draws are sparse: (row indices, values) with values > 0.
    """

    def __init__(self, spec: GroupLevySpec, M: int):
        if M < 1:
            raise ParameterError(f"slab vectors need M >= 1, got {M}")
        spec.check()
        self.spec, self.M = spec, M
        slab = spec.slab
        if isinstance(slab, Bernoulli):
            self.total = _zt_binomial_inverter(spec, M)
        elif isinstance(slab, Poisson):
            self.total = get_mtp(MtpParams(slab.rate * M, spec.levy))._inv
        else:
            self.total = DiscreteInverter(_zt_negbin_logpmf(spec, M), 1)

    def sample(self, rng, n: int):
        """n iid vectors as a list of (rows, values) tuples."""
        totals = np.atleast_1d(self.total.sample(rng, n)) if n else []
        M, slab = self.M, self.spec.slab
        out = []
        for a in totals:
            a = int(a)
            if isinstance(slab, Bernoulli):
                rows = _place(a, M, rng)
                out.append((tuple(int(i) for i in rows), (1,) * a))
                continue
            if M == 1:
                out.append(((0,), (a,)))
                continue
            if isinstance(slab, Poisson):
                counts = rng.multinomial(a, np.full(M, 1.0 / M))
            else:
                # given the total, NB entries split Dirichlet-multinomially with parameter r
                counts = rng.multinomial(a, rng.dirichlet(np.full(M, slab.r)))
            rows = np.flatnonzero(counts)
            out.append((tuple(int(i) for i in rows), tuple(int(c) for c in counts[rows])))
        return out

    def log_prob(self, rows, values) -> float:
        """log probability of the score vector, zero entries implied."""
        a = int(sum(values))
        slab, M = self.spec.slab, self.M
        lt = float(self.total.logpmf(np.array([a]))[0])
        if isinstance(slab, Bernoulli):
            return lt - (math.lgamma(M + 1) - math.lgamma(a + 1) - math.lgamma(M - a + 1))
        v = np.asarray(values, dtype=float)
        if isinstance(slab, Poisson):
            return lt + math.lgamma(a + 1) - float(special.gammaln(v + 1).sum()) - a * math.log(M)
        r = slab.r
        # Dirichlet-multinomial split with all-r parameters
        log_split = (float((special.gammaln(v + r) - special.gammaln(r) - special.gammaln(v + 1)).sum())
                     - (math.lgamma(a + M * r) - math.lgamma(M * r) - math.lgamma(a + 1)))
        return lt + log_split


@lru_cache(maxsize=1024)
def slab_vector_law(spec: GroupLevySpec, M: int) -> SlabVectorLaw:
    return SlabVectorLaw(spec, M)


def log_slab_integral(spec: GroupLevySpec, M: int, rows, values) -> float:
    """log int prod_i G_A(a_i | s) rho(s) ds for a non-null score vector."""
    v = np.asarray(values, dtype=float)
    a = float(v.sum())
    lv, slab = spec.levy, spec.slab
    if isinstance(slab, Bernoulli):
        return float(lv.log_beta_moment(a, M - a))
    if isinstance(slab, Poisson):
        return (a * math.log(slab.rate) - float(special.gammaln(v + 1).sum())
                + float(lv.log_moment(a, slab.rate * M)))
    r = slab.r
    return (float((special.gammaln(v + r) - special.gammaln(r) - special.gammaln(v + 1)).sum())
            + float(lv.log_beta_moment(a, r * M)))


def slab_jump_law(spec: GroupLevySpec, M: int, values) -> JumpLaw:
    """Posterior law of the latent jump behind one score vector."""
    a = float(sum(values))
    slab, lv = spec.slab, spec.levy
    if isinstance(slab, Bernoulli):
        return levy_jump_law(lv, a, M - a)
    if isinstance(slab, Poisson):
        return levy_jump_law(lv, a, 0.0, slab.rate * M)
    return levy_jump_law(lv, a, slab.r * M)
