"""Exact forward sampling through the compound-Poisson representation.

A draw proceeds as: r ~ Poisson(phi) distinct atoms; per atom a total
multiplicity from the mixed-truncated-Poisson law; a multinomial split of
that total over groups with weights psi_j / kappa; per selection a non-null
score vector from the group's zero-truncated slab law; uniform atom labels.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .distkit import MtpParams, get_mtp, slab_vector_law
from .errors import NumericError
from .laplace import GroupLevySpec, gamma_increment, psi_group
from .model import FeatureAllocation, FeatureColumn, HibpConfig, ScoreVector, check_config

# guard against heavy-tailed (zeta = 0) bases producing unstorable allocations
MAX_SELECTIONS = 50_000_000


class _Plan:
    """Per-config quantities reused across draws."""

    def __init__(self, config: HibpConfig):
        check_config(config)
        self.config = config
        self.psis = config.psis()
        self.kappa = float(self.psis.sum())
        self.phi = config.phi() if self.kappa > 0 else 0.0
        self.pis = self.psis / self.kappa if self.kappa > 0 else self.psis
        self.mtp = get_mtp(MtpParams(self.kappa, config.base.levy)) if self.phi > 0 else None
        self.laws = [slab_vector_law(g.spec, g.M) if g.M > 0 else None for g in config.groups]


@lru_cache(maxsize=64)
def _plan(config: HibpConfig) -> _Plan:
    return _Plan(config)


def expected_features(config: HibpConfig) -> float:
    return _plan(config).phi


def sample_allocation(config: HibpConfig, rng: np.random.Generator) -> FeatureAllocation:
    """One exact draw of the full multi-group process."""
    return _draw(_plan(config), rng)


def iter_allocations(config: HibpConfig, rng: np.random.Generator, n: int):
    """n iid draws sharing one precomputed plan; same stream use as repeated sample_allocation."""
    plan = _plan(config)
    for _ in range(n):
        yield _draw(plan, rng)


def _draw(plan: _Plan, rng) -> FeatureAllocation:
    config = plan.config
    r = int(rng.poisson(plan.phi)) if plan.phi > 0 else 0
    if r == 0:
        return FeatureAllocation(config, ())
    totals = np.atleast_1d(plan.mtp.sample(rng, r))
    if totals.dtype == object or totals.sum() > MAX_SELECTIONS:
        raise NumericError(f"allocation needs {int(max(totals.sum(), MAX_SELECTIONS))}+ selections; "
                           "the base multiplicity law is too heavy-tailed to materialize")
    totals = totals.astype(np.int64)
    J = config.J
    splits = rng.multinomial(totals, plan.pis) if J > 1 else totals[:, None]
    scores: list[list[tuple]] = [[() for _ in range(J)] for _ in range(r)]
    for j in range(J):
        col_n = splits[:, j]
        tot = int(col_n.sum())
        if tot == 0:
            continue
        vecs = plan.laws[j].sample(rng, tot)
        pos = 0
        for k in np.flatnonzero(col_n):
            m = int(col_n[k])
            scores[k][j] = tuple(ScoreVector(rows, vals) for rows, vals in vecs[pos:pos + m])
            pos += m
    atoms = rng.random(r)
    if np.unique(atoms).size != r:
        raise NumericError("atom label collision in Uniform(0,1) draws")
    cols = tuple(FeatureColumn(float(atoms[k]), tuple(scores[k])) for k in range(r))
    return FeatureAllocation(config, cols)


def sample_feature_counts(config: HibpConfig, rng: np.random.Generator) -> np.ndarray:
    """Only the r x J matrix of n_{j,k} (skips score vectors); same law as the full draw."""
    plan = _plan(config)
    r = int(rng.poisson(plan.phi)) if plan.phi > 0 else 0
    if r == 0:
        return np.zeros((0, config.J), dtype=np.int64)
    totals = np.atleast_1d(plan.mtp.sample(rng, r)).astype(np.int64)
    return rng.multinomial(totals, plan.pis) if config.J > 1 else totals[:, None]


def new_dish_weights(spec: GroupLevySpec, M: int) -> np.ndarray:
    """gamma_{j,i} / psi_j(M) for i = 1..M: law of the first row of a selection."""
    gam = np.array([gamma_increment(spec, i) for i in range(M)])
    return gam / psi_group(spec, M)


def sample_new_dish_counts(config: HibpConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """Per group, the number of selections first taken by each row i = 1..M_j.

    In the sequential (buffet) reading, row i introduces the selections whose
    score vector has its first nonzero entry at i; given d_j these counts are
    Multinomial(d_j, new_dish_weights).
    """
    alloc = sample_allocation(config, rng)
    out = [np.zeros(g.M, dtype=np.int64) for g in config.groups]
    for col in alloc.columns:
        for j, svs in enumerate(col.scores):
            for sv in svs:
                out[j][min(sv.rows)] += 1
    return out
