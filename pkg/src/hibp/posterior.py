"""Posterior jump laws and predictive rows.

Given an allocation, the base CRM is the sum of fixed atoms with jumps L_k
(density proportional to t**n_k exp(-kappa t) tau0(t)) and a remainder CRM
whose Lévy density is tau0 tilted by kappa. Each selection's group jump S has
density proportional to prod_i G(a_i|s) rho_j(s).

A predictive row for group j is the superposition of
  (a) revisits of the observed selections of group j,
  (b) new selections of group j at observed atoms, driven by L_k,
  (c) selections at atoms not yet observed, from the tilted remainder.
Parts (b) and (c) use the thinned group density (1 - pi(s))**M_j rho_j(s).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .distkit import MtpParams, get_mtp, jump_sample, levy_jump_law, slab_jump_law, slab_vector_law
from .errors import NumericError, ParameterError
from .laplace import GeneralizedGamma, GroupLevySpec, StableBeta, gamma_increment
from .model import BaseCrmSpec, FeatureAllocation, FeatureColumn, ScoreVector


@dataclass(frozen=True)
class PosteriorState:
    tilted_base: BaseCrmSpec
    base_jumps: tuple[tuple[float, float], ...]   # (L_k, atom)
    group_jumps: tuple[tuple[tuple[float, ...], ...], ...] | None   # [k][j][l]
    kappa: float

    def to_dict(self) -> dict:
        return {"tilted_base": self.tilted_base.to_dict(),
                "base_jumps": [list(b) for b in self.base_jumps],
                "group_jumps": None if self.group_jumps is None
                else [[list(g) for g in col] for col in self.group_jumps],
                "kappa": self.kappa}


def base_jump_law(base: BaseCrmSpec, n_k: int, kappa: float):
    """Law of L_k: density proportional to t**n_k exp(-kappa t) tau0(t)."""
    return levy_jump_law(base.levy, n_k, 0.0, kappa)


def sample_posterior_base(alloc: FeatureAllocation, rng: np.random.Generator) -> PosteriorState:
    cfg = alloc.config
    kappa = cfg.kappa()
    jumps = []
    for col in alloc.columns:
        L = float(jump_sample(base_jump_law(cfg.base, col.n, kappa), rng))
        jumps.append((L, col.atom))
    return PosteriorState(cfg.base.tilted(kappa), tuple(jumps), None, kappa)


def sample_posterior_group_jumps(alloc: FeatureAllocation, rng: np.random.Generator):
    """Nested tuples S[k][j][l], one draw per selection."""
    cfg = alloc.config
    out = []
    for col in alloc.columns:
        per_group = []
        for j, svs in enumerate(col.scores):
            g = cfg.groups[j]
            per_group.append(tuple(float(jump_sample(slab_jump_law(g.spec, g.M, sv.values), rng))
                                   for sv in svs))
        out.append(tuple(per_group))
    return tuple(out)


def sample_posterior(alloc: FeatureAllocation, rng: np.random.Generator) -> PosteriorState:
    state = sample_posterior_base(alloc, rng)
    return replace(state, group_jumps=sample_posterior_group_jumps(alloc, rng))


def annotate_jumps(alloc: FeatureAllocation, state: PosteriorState) -> FeatureAllocation:
    """Copy of ``alloc`` with the state's latent jumps attached to the columns."""
    cols = []
    for k, col in enumerate(alloc.columns):
        gj = None if state.group_jumps is None else state.group_jumps[k]
        cols.append(replace(col, base_jump=state.base_jumps[k][0], group_jumps=gj))
    return replace(alloc, columns=tuple(cols))


# ---- predictive rows ---------------------------------------------------------


@dataclass(frozen=True)
class PredictiveRow:
    """Nonzero entries of one new row of group ``group`` (0-based).

    ``revisits[k]`` maps selection index l of column k to its new entry;
    ``extra[k]`` lists entries of new selections at existing column k;
    ``new_columns`` lists, per brand-new atom, the entries of its selections.
    """
    group: int
    revisits: dict
    extra: dict
    new_columns: tuple[tuple[int, ...], ...]

    @property
    def total(self) -> int:
        return (sum(sum(v.values()) for v in self.revisits.values())
                + sum(sum(v) for v in self.extra.values())
                + sum(sum(v) for v in self.new_columns))

    @property
    def n_new_columns(self) -> int:
        return len(self.new_columns)

    def dense(self, r: int) -> np.ndarray:
        """Entries over the r old columns followed by the new ones."""
        out = np.zeros(r + len(self.new_columns), dtype=np.int64)
        for k, v in self.revisits.items():
            out[k] += sum(v.values())
        for k, v in self.extra.items():
            out[k] += sum(v)
        for i, v in enumerate(self.new_columns):
            out[r + i] = sum(v)
        return out


def _resolve_group(alloc: FeatureAllocation, group: int, new_spec: GroupLevySpec | None):
    J = alloc.config.J
    if 0 <= group < J:
        g = alloc.config.groups[group]
        return g.spec, g.M, False
    if group == J:
        spec = new_spec if new_spec is not None else alloc.config.groups[-1].spec
        spec.check()
        return spec, 0, True
    raise ParameterError(f"group index {group} out of range (0..{J} allowed, {J} opens a new group)")


def _revisit_draw(spec: GroupLevySpec, M: int, values, rng) -> int:
    """Entry of the new row for one observed selection."""
    slab, lv = spec.slab, spec.levy
    a = sum(values)
    if slab.kind == "bernoulli" and isinstance(lv, StableBeta) and lv.tilt == 0:
        return int(rng.random() < (a - lv.alpha) / (M + lv.beta))
    if slab.kind == "poisson" and isinstance(lv, GeneralizedGamma):
        # Gamma(a - alpha, M r + zeta) mixture of Poisson(r s)
        p = slab.rate / ((M + 1) * slab.rate + lv.zeta)
        return int(rng.negative_binomial(a - lv.alpha, 1.0 - p))
    s = float(jump_sample(slab_jump_law(spec, M, values), rng))
    return _slab_entry(spec, s, rng)


def _slab_entry(spec, s, rng) -> int:
    slab = spec.slab
    if slab.kind == "bernoulli":
        return int(rng.random() < s)
    if slab.kind == "poisson":
        return int(rng.poisson(slab.rate * s))
    return int(rng.negative_binomial(slab.r, 1.0 - s)) if s < 1 else 0


def _one_row_values(spec: GroupLevySpec, M: int, n: int, rng) -> list[int]:
    """n nonzero entries for selections made by a single new row."""
    if n == 0:
        return []
    if spec.slab.kind == "bernoulli":
        return [1] * n
    law = slab_vector_law(spec.thinned(M), 1)
    return [vals[0] for _, vals in law.sample(rng, n)]


def shared_atom_q(alloc: FeatureAllocation, group: int, new_spec: GroupLevySpec | None = None):
    """(q_j, denominator) for a GG base: new selections at an observed atom are
    NB(n_k - alpha) with failure probability q_j = gamma_{j,M_j+1} / denominator,
    denominator = zeta + sum_{l != j} psi_l + psi_j(M_j + 1)."""
    lv0 = alloc.config.base.levy
    if not isinstance(lv0, GeneralizedGamma):
        raise ParameterError("q_j is defined for a generalized gamma base")
    spec, M, _ = _resolve_group(alloc, group, new_spec)
    gam = gamma_increment(spec, M)
    denom = lv0.zeta + alloc.config.kappa() + gam
    return gam / denom, denom


def sample_predictive_row(alloc: FeatureAllocation, group: int, rng: np.random.Generator,
                          new_spec: GroupLevySpec | None = None,
                          state: PosteriorState | None = None) -> PredictiveRow:
    """Exact draw of row M_j + 1 of ``group`` (0-based) given the allocation.

    ``group == J`` asks for the first row of a new group, whose spec is
    ``new_spec`` (default: a copy of the last group's spec).
    """
    cfg = alloc.config
    spec, M, is_new = _resolve_group(alloc, group, new_spec)
    kappa = cfg.kappa()
    gam = gamma_increment(spec, M)
    base = cfg.base
    if isinstance(base.levy, GeneralizedGamma):
        q, _ = shared_atom_q(alloc, group, new_spec)

    revisits: dict = {}
    if not is_new:
        for k, col in enumerate(alloc.columns):
            hits = {}
            for l, sv in enumerate(col.scores[group]):
                v = (_slab_entry(spec, state.group_jumps[k][group][l], rng)
                     if state is not None and state.group_jumps is not None
                     else _revisit_draw(spec, M, sv.values, rng))
                if v:
                    hits[l] = v
            if hits:
                revisits[k] = hits

    extra: dict = {}
    lv0 = base.levy
    for k, col in enumerate(alloc.columns):
        if state is not None:
            cnt = int(rng.poisson(gam * state.base_jumps[k][0]))
        elif isinstance(lv0, GeneralizedGamma):
            # Poisson(gam L) with L ~ Gamma(n_k - alpha, zeta + kappa)
            cnt = int(rng.negative_binomial(col.n - lv0.alpha, 1.0 - q))
        else:
            L = float(jump_sample(base_jump_law(base, col.n, kappa), rng))
            cnt = int(rng.poisson(gam * L))
        if cnt:
            extra[k] = tuple(_one_row_values(spec, M, cnt, rng))

    new_cols: list = []
    tilted = base.tilted(kappa)
    rate = tilted.laplace(gam) if gam > 0 else 0.0
    n_new = int(rng.poisson(rate)) if rate > 0 else 0
    if n_new:
        mult = np.atleast_1d(get_mtp(MtpParams(gam, tilted.levy)).sample(rng, n_new))
        vals = _one_row_values(spec, M, int(mult.sum()), rng)
        pos = 0
        for m in mult:
            new_cols.append(tuple(vals[pos:pos + int(m)]))
            pos += int(m)
    return PredictiveRow(group, revisits, extra, tuple(new_cols))


def append_row(alloc: FeatureAllocation, row: PredictiveRow, rng: np.random.Generator,
               new_spec: GroupLevySpec | None = None) -> FeatureAllocation:
    """Allocation with the predicted row added as row M_j + 1 of its group.

    New columns get fresh Uniform(0,1) atoms; latent jumps are dropped since
    they are no longer posterior draws for the enlarged data.
    """
    cfg = alloc.config
    j = row.group
    spec, M, is_new = _resolve_group(alloc, j, new_spec)
    if is_new:
        cfg = cfg.with_group(spec, 1)
    else:
        cfg = cfg.with_rows(j, M + 1)
    J = cfg.J
    cols = []
    for k, col in enumerate(alloc.columns):
        scores = list(col.scores) + ([()] if is_new else [])
        svs = list(scores[j])
        for l, v in row.revisits.get(k, {}).items():
            sv = svs[l]
            svs[l] = ScoreVector(sv.rows + (M,), sv.values + (v,))
        svs += [ScoreVector((M,), (v,)) for v in row.extra.get(k, ())]
        scores[j] = tuple(svs)
        cols.append(FeatureColumn(col.atom, tuple(scores)))
    if row.new_columns:
        atoms = rng.random(len(row.new_columns))
        taken = {c.atom for c in alloc.columns}
        if np.unique(atoms).size != atoms.size or taken.intersection(atoms.tolist()):
            raise NumericError("atom label collision in Uniform(0,1) draws")
        for atom, vals in zip(atoms, row.new_columns):
            scores = [()] * J
            scores[j] = tuple(ScoreVector((M,), (v,)) for v in vals)
            cols.append(FeatureColumn(float(atom), tuple(scores)))
    return FeatureAllocation(cfg, tuple(cols))


def predict_rows(alloc: FeatureAllocation, group: int, n_rows: int, rng: np.random.Generator,
                 new_spec: GroupLevySpec | None = None) -> FeatureAllocation:
    """Sequentially append ``n_rows`` predicted rows to ``group``."""
    for _ in range(n_rows):
        row = sample_predictive_row(alloc, group, rng, new_spec=new_spec)
        alloc = append_row(alloc, row, rng, new_spec=new_spec)
        new_spec = None
    return alloc


def describe_posterior_mu(alloc: FeatureAllocation, state: PosteriorState, group: int) -> dict:
    """Parameter descriptor of the posterior group measure (continuous parts not sampled)."""
    if not 0 <= group < alloc.config.J:
        raise ParameterError(f"group index {group} out of range")
    g = alloc.config.groups[group]
    thinned = g.spec.thinned(g.M)
    atoms = []
    for k, col in enumerate(alloc.columns):
        s = None if state.group_jumps is None else list(state.group_jumps[k][group])
        atoms.append({"atom": col.atom, "base_jump": state.base_jumps[k][0],
                      "selected_jumps": s, "selected_mass": None if s is None else math.fsum(s),
                      "unselected_levy": thinned.to_dict()})
    return {"group": group, "M": g.M, "thinned_levy": thinned.to_dict(),
            "remainder_base": state.tilted_base.to_dict(), "fixed_atoms": atoms}
