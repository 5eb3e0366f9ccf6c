"""Random-walk Metropolis-Hastings over (theta0, theta, alpha).

The walk runs on u = (log theta0, log theta, logit alpha) with isotropic
Gaussian steps. Priors: theta0, theta ~ LogNormal(0, 1), alpha ~ Beta(a, b);
the target on u includes the change-of-variables Jacobian.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import NumericError, ParameterError
from .likelihood import ProfileTarget
from .model import FeatureAllocation, format_float

PARAMS = ("theta0", "theta", "alpha")


@dataclass(frozen=True)
class McmcConfig:
    steps: int = 10_000
    burn_in: int = 5_000
    thin: int = 10
    proposal_sd: float = math.sqrt(0.05)
    chains: int = 3
    seed: int = 0
    alpha_prior: tuple[float, float] = (1.0, 1.0)

    def errors(self) -> list[str]:
        errs = []
        if not (isinstance(self.steps, int) and self.steps > 0):
            errs.append(f"steps must be a positive integer (got {self.steps!r})")
        if not (isinstance(self.burn_in, int) and 0 <= self.burn_in < self.steps):
            errs.append(f"need 0 <= burn_in < steps (got burn_in={self.burn_in}, steps={self.steps})")
        if not (isinstance(self.thin, int) and self.thin >= 1):
            errs.append(f"thin must be an integer >= 1 (got {self.thin!r})")
        if not self.proposal_sd > 0:
            errs.append(f"proposal_sd must be > 0 (got {self.proposal_sd})")
        if not (isinstance(self.chains, int) and self.chains >= 1):
            errs.append(f"chains must be an integer >= 1 (got {self.chains!r})")
        if not all(a > 0 for a in self.alpha_prior):
            errs.append("alpha prior parameters must be > 0")
        return errs

    def check(self) -> "McmcConfig":
        errs = self.errors()
        if errs:
            raise ParameterError("; ".join(errs))
        return self

    @property
    def kept(self) -> int:
        return (self.steps - self.burn_in) // self.thin


def mcmc_config_from_dict(d: dict) -> McmcConfig:
    known = {"steps", "burn_in", "thin", "proposal_sd", "chains", "seed", "alpha_prior"}
    extra = set(d) - known
    if extra:
        raise ParameterError(f"unknown MCMC config keys: {sorted(extra)}")
    d = dict(d)
    if "alpha_prior" in d:
        d["alpha_prior"] = tuple(float(x) for x in d["alpha_prior"])
    return McmcConfig(**d)


@dataclass
class McmcTrace:
    chain_id: int
    samples: np.ndarray            # kept x 3 (theta0, theta, alpha)
    log_target: np.ndarray         # MH target on the unconstrained scale
    acceptance_rate: float
    steps: np.ndarray = field(default=None)  # kept step indices (0-based)


def to_unconstrained(x) -> np.ndarray:
    t0, t, a = x
    return np.array([math.log(t0), math.log(t), math.log(a) - math.log1p(-a)])


def from_unconstrained(u) -> np.ndarray:
    return np.array([math.exp(u[0]), math.exp(u[1]), float(special.expit(u[2]))])


def log_prior_unconstrained(u, alpha_prior=(1.0, 1.0)) -> float:
    """log prior density of u, Jacobians included.

    log theta ~ N(0, 1) directly; for alpha = expit(v) the density of v is
    Beta(alpha; a, b) * alpha * (1 - alpha).
    """
    a, b = alpha_prior
    v = u[2]
    # log alpha and log(1 - alpha) via log_expit for stability in the tails
    la, l1a = float(special.log_expit(v)), float(special.log_expit(-v))
    return (float(stats.norm.logpdf(u[0])) + float(stats.norm.logpdf(u[1]))
            + a * la + b * l1a - float(special.betaln(a, b)))


def random_walk_mh(log_target, u0, steps: int, proposal_sd: float, rng: np.random.Generator,
                   burn_in: int = 0, thin: int = 1):
    """Generic isotropic random-walk MH. Returns (kept states, kept log targets, acceptance)."""
    u = np.asarray(u0, dtype=float).copy()
    lp = log_target(u)
    if not math.isfinite(lp):
        raise NumericError(f"initial log target is not finite at {u.tolist()}")
    dim = u.size
    kept_u, kept_lp, kept_s = [], [], []
    acc = 0
    for s in range(steps):
        prop = u + proposal_sd * rng.standard_normal(dim)
        lq = log_target(prop)
        if math.log(rng.random()) < lq - lp:
            u, lp = prop, lq
            acc += 1
        if s >= burn_in and (s - burn_in + 1) % thin == 0:
            kept_u.append(u.copy())
            kept_lp.append(lp)
            kept_s.append(s)
    return (np.array(kept_u).reshape(-1, dim), np.array(kept_lp), acc / steps if steps else 0.0,
            np.array(kept_s, dtype=np.int64))


def _chain_rngs(mcmc: McmcConfig):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(mcmc.seed).spawn(mcmc.chains)]


def _run_chain(target: ProfileTarget, mcmc: McmcConfig, chain_id: int, rng) -> McmcTrace:
    def log_post(u):
        try:
            x = from_unconstrained(u)
            lt = target(*x)
        except (ValueError, ArithmeticError, OverflowError):
            return -math.inf
        if not math.isfinite(lt):
            return -math.inf
        return lt + log_prior_unconstrained(u, mcmc.alpha_prior)

    # initialize from the prior; retry a few times if the target is degenerate there
    for _ in range(100):
        a, b = mcmc.alpha_prior
        x0 = (rng.lognormal(), rng.lognormal(), rng.beta(a, b))
        u0 = to_unconstrained(x0)
        if math.isfinite(log_post(u0)):
            break
    else:
        raise NumericError("no finite log target found among 100 prior draws")
    us, lps, rate, kept_s = random_walk_mh(log_post, u0, mcmc.steps, mcmc.proposal_sd, rng,
                                           mcmc.burn_in, mcmc.thin)
    xs = np.array([from_unconstrained(u) for u in us]).reshape(-1, 3)
    return McmcTrace(chain_id, xs, lps, rate, kept_s)


def run_mh(alloc: FeatureAllocation, mcmc: McmcConfig, threads: int = 1) -> list[McmcTrace]:
    """Independent chains targeting the tied GG-Beta profile posterior."""
    mcmc.check()
    target = ProfileTarget(alloc)
    rngs = _chain_rngs(mcmc)
    jobs = list(range(mcmc.chains))
    if threads > 1 and mcmc.chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda c: _run_chain(target, mcmc, c, rngs[c]), jobs))
    return [_run_chain(target, mcmc, c, rngs[c]) for c in jobs]


def split_rhat(chains: list[np.ndarray]) -> tuple[float, bool]:
    """Split-chain potential scale reduction. Returns (rhat, degenerate flag)."""
    halves = []
    for c in chains:
        c = np.asarray(c, dtype=float)
        h = c.size // 2
        if h < 2:
            continue
        halves += [c[:h], c[c.size - h:]]
    if len(halves) < 2:
        return 1.0, True
    n = min(h.size for h in halves)
    arr = np.array([h[:n] for h in halves])
    w = arr.var(axis=1, ddof=1).mean()
    b = n * arr.mean(axis=1).var(ddof=1)
    if w <= 0:
        return 1.0, True
    var_hat = (n - 1) / n * w + b / n
    return float(math.sqrt(var_hat / w)), False


def summarize(traces: list[McmcTrace]) -> dict:
    if not traces:
        raise ParameterError("no traces to summarize")
    pooled = np.concatenate([t.samples for t in traces])
    if pooled.size == 0:
        raise ParameterError("traces contain no kept samples")
    out = {"chains": len(traces), "kept_per_chain": [int(t.samples.shape[0]) for t in traces],
           "acceptance_rate": [t.acceptance_rate for t in traces], "params": {}}
    for i, name in enumerate(PARAMS):
        q = np.quantile(pooled[:, i], [0.05, 0.5, 0.95])
        rhat, flag = split_rhat([t.samples[:, i] for t in traces])
        out["params"][name] = {
            "mean": float(pooled[:, i].mean()),
            "q05": float(q[0]), "q50": float(q[1]), "q95": float(q[2]),
            "chain_means": [float(t.samples[:, i].mean()) for t in traces],
            "rhat": rhat, "rhat_degenerate": flag,
        }
    return out


def traces_to_csv(traces: list[McmcTrace]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "chain", "theta0", "theta", "alpha", "log_target"])
    for t in traces:
        for s, x, lt in zip(t.steps, t.samples, t.log_target):
            w.writerow([int(s), t.chain_id, *(format_float(v) for v in x), format_float(lt)])
    return buf.getvalue()
