"""Configuration and the sparse feature-allocation data model."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .laplace import GroupLevySpec, Levy, StableBeta, group_spec_from_dict, levy_from_dict, psi_group


@dataclass(frozen=True)
class BaseCrmSpec:
    """Base CRM: Lévy density ``levy`` times total mass ``mass`` (gamma_0)."""
    levy: Levy
    mass: float = 1.0

    def errors(self) -> list[str]:
        errs = list(self.levy.errors())
        if not self.mass > 0:
            errs.append(f"base mass gamma0 must be > 0 (got {self.mass})")
        if isinstance(self.levy, StableBeta) and self.levy.tilt:
            errs.append("base stable-Beta spec must not carry a tilt")
        return errs

    def laplace(self, kappa: float) -> float:
        """gamma0 * int (1 - exp(-kappa t)) tau0(t) dt."""
        return self.mass * self.levy.laplace(kappa)

    def tilted(self, kappa: float) -> "BaseCrmSpec":
        return BaseCrmSpec(self.levy.tilted(kappa), self.mass)

    def to_dict(self) -> dict:
        return {**self.levy.to_dict(), "mass": self.mass}


def base_from_dict(d: dict) -> BaseCrmSpec:
    d = dict(d)
    mass = float(d.pop("mass", 1.0))
    return BaseCrmSpec(levy_from_dict(d), mass)


@dataclass(frozen=True)
class GroupConfig:
    spec: GroupLevySpec
    M: int

    def to_dict(self) -> dict:
        return {**self.spec.to_dict(), "M": self.M}


@dataclass(frozen=True)
class HibpConfig:
    base: BaseCrmSpec
    groups: tuple[GroupConfig, ...]
    seed: int = 0

    @property
    def J(self) -> int:
        return len(self.groups)

    def psis(self) -> np.ndarray:
        return np.array([psi_group(g.spec, g.M) for g in self.groups])

    def kappa(self) -> float:
        return math.fsum(self.psis())

    def pis(self) -> np.ndarray:
        p = self.psis()
        return p / p.sum()

    def phi(self) -> float:
        """Expected number of distinct features."""
        return self.base.laplace(self.kappa())

    def with_rows(self, j: int, M: int) -> "HibpConfig":
        groups = list(self.groups)
        groups[j] = GroupConfig(groups[j].spec, M)
        return replace(self, groups=tuple(groups))

    def with_group(self, spec: GroupLevySpec, M: int = 0) -> "HibpConfig":
        return replace(self, groups=self.groups + (GroupConfig(spec, M),))

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "groups": [g.to_dict() for g in self.groups],
                "seed": self.seed}


def validate(config: HibpConfig) -> list[str]:
    """Exhaustive list of configuration errors (empty when valid)."""
    errs = [f"base: {e}" for e in config.base.errors()]
    if config.J < 1:
        errs.append("need at least one group (J >= 1)")
    for j, g in enumerate(config.groups, 1):
        errs += [f"group {j}: {e}" for e in g.spec.errors()]
        if not (isinstance(g.M, (int, np.integer)) and g.M >= 0):
            errs.append(f"group {j}: M must be an integer >= 0 (got {g.M!r})")
    if not errs:
        try:
            k = config.kappa()
        except (ArithmeticError, ValueError) as exc:
            errs.append(f"kappa evaluation failed: {exc}")
        else:
            if not math.isfinite(k):
                errs.append("kappa = sum_j psi_j(M_j) is not finite")
    return errs


def check_config(config: HibpConfig) -> HibpConfig:
    errs = validate(config)
    if errs:
        raise ParameterError("; ".join(errs))
    return config


def config_from_dict(d: dict) -> HibpConfig:
    try:
        base = base_from_dict(d["base"])
        groups = []
        for g in d["groups"]:
            g = dict(g)
            M = g.pop("M")
            if isinstance(M, float) and M.is_integer():
                M = int(M)
            repeat = int(g.pop("repeat", 1))
            spec = group_spec_from_dict(g)
            groups += [GroupConfig(spec, M)] * repeat
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"malformed config: {exc!r}") from exc
    return HibpConfig(base, tuple(groups), int(d.get("seed", 0)))


def format_float(x: float) -> str:
    """17 significant digits (exact round trip); integral values keep a '.0'."""
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    return s if any(c in s for c in ".e") else s + ".0"


def dumps_json(obj, indent: int | None = None) -> str:
    """json.dumps with sorted keys and floats written by format_float."""
    def enc(o, level):
        if isinstance(o, (bool, np.bool_)) or o is None or isinstance(o, str):
            return json.dumps(o if not isinstance(o, np.bool_) else bool(o))
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return format_float(o)
        if indent is None:
            pad = inner = ""
            sep = ", "
        else:
            pad = "\n" + " " * (indent * level)
            inner = "\n" + " " * (indent * (level + 1))
            sep = ","
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{json.dumps(str(k))}: {enc(o[k], level + 1)}" for k in sorted(o)]
            return "{" + inner + (sep + inner).join(items) + pad + "}"
        if isinstance(o, (list, tuple, np.ndarray)):
            if len(o) == 0:
                return "[]"
            return "[" + inner + (sep + inner).join(enc(v, level + 1) for v in o) + pad + "]"
        raise TypeError(f"cannot serialize {type(o).__name__}")
    return enc(obj, 0)


def load_config(path) -> HibpConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


@dataclass(frozen=True)
class ScoreVector:
    """Sparse nonzero entries (row index, value) of one selection's score vector."""
    rows: tuple[int, ...]
    values: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.values)


@dataclass(frozen=True)
class FeatureColumn:
    """One selected base atom with its per-group score vectors.

    ``scores[j]`` holds the ``n_{j,k}`` score vectors of group j. Latent jumps
    are optional: ``base_jump`` is L_k, ``group_jumps[j]`` the S_{j,k,l}.
    """
    atom: float
    scores: tuple[tuple[ScoreVector, ...], ...]
    base_jump: float | None = None
    group_jumps: tuple[tuple[float, ...], ...] | None = None

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.scores)

    @property
    def n(self) -> int:
        return sum(len(s) for s in self.scores)


@dataclass(frozen=True)
class FeatureAllocation:
    config: HibpConfig
    columns: tuple[FeatureColumn, ...] = ()

    @property
    def r(self) -> int:
        return len(self.columns)

    @cached_property
    def counts(self) -> np.ndarray:
        """r x J matrix of n_{j,k}."""
        if not self.columns:
            return np.zeros((0, self.config.J), dtype=np.int64)
        return np.array([c.counts for c in self.columns], dtype=np.int64)

    @property
    def n_k(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def d(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def errors(self) -> list[str]:
        errs = validate(self.config)
        J = self.config.J
        atoms = set()
        for k, col in enumerate(self.columns):
            if len(col.scores) != J:
                errs.append(f"column {k}: expected {J} groups, got {len(col.scores)}")
                continue
            if col.n < 1:
                errs.append(f"column {k}: empty column")
            if col.atom in atoms:
                errs.append(f"column {k}: duplicate atom {col.atom}")
            atoms.add(col.atom)
            for j, svs in enumerate(col.scores):
                M, slab = self.config.groups[j].M, self.config.groups[j].spec.slab
                for sv in svs:
                    if len(sv.rows) == 0 or len(sv.rows) != len(sv.values):
                        errs.append(f"column {k}, group {j + 1}: null or ragged score vector")
                    elif any(v <= 0 for v in sv.values):
                        errs.append(f"column {k}, group {j + 1}: nonpositive stored score")
                    elif any(not 0 <= i < M for i in sv.rows) or len(set(sv.rows)) != len(sv.rows):
                        errs.append(f"column {k}, group {j + 1}: row index out of range or repeated")
                    elif slab.kind == "bernoulli" and any(v != 1 for v in sv.values):
                        errs.append(f"column {k}, group {j + 1}: Bernoulli scores must be 0/1")
        return errs

    def check(self) -> "FeatureAllocation":
        errs = self.errors()
        if errs:
            raise ParameterError("; ".join(errs[:10]))
        return self

    def to_dense(self, j: int) -> np.ndarray:
        """M_j x r matrix of summed scores for group j (0-based)."""
        if not 0 <= j < self.config.J:
            raise ParameterError(f"group index {j} out of range for J={self.config.J}")
        out = np.zeros((self.config.groups[j].M, self.r), dtype=np.int64)
        for k, col in enumerate(self.columns):
            for sv in col.scores[j]:
                out[list(sv.rows), k] += sv.values
        return out

    def to_indicator(self, j: int) -> np.ndarray:
        """M_j x r 0/1 matrix: row i has at least one selection of feature k."""
        return (self.to_dense(j) > 0).astype(np.int8)

    def row_totals(self, j: int) -> np.ndarray:
        return self.to_dense(j).sum(axis=1)

    def permute_rows(self, j: int, perm: Sequence[int]) -> "FeatureAllocation":
        """Relabel rows of group j: old row i becomes row perm[i]."""
        perm = list(perm)
        if sorted(perm) != list(range(self.config.groups[j].M)):
            raise ParameterError("perm must be a permutation of the group's rows")
        cols = []
        for col in self.columns:
            scores = list(col.scores)
            scores[j] = tuple(_relabel(sv, perm) for sv in scores[j])
            cols.append(replace(col, scores=tuple(scores)))
        return replace(self, columns=tuple(cols))

    def permute_columns(self, order: Sequence[int]) -> "FeatureAllocation":
        return replace(self, columns=tuple(self.columns[k] for k in order))

    def strip_jumps(self) -> "FeatureAllocation":
        return replace(self, columns=tuple(replace(c, base_jump=None, group_jumps=None)
                                           for c in self.columns))

    # ---- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        cols = []
        for col in self.columns:
            d = {"atom": col.atom,
                 "scores": [[[list(sv.rows), list(sv.values)] for sv in svs] for svs in col.scores]}
            if col.base_jump is not None:
                d["base_jump"] = col.base_jump
            if col.group_jumps is not None:
                d["group_jumps"] = [list(g) for g in col.group_jumps]
            cols.append(d)
        return {"config": self.config.to_dict(), "columns": cols}

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    def to_csv(self) -> str:
        """Long format group,row,feature_index,count (1-based group and row)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "row", "feature_index", "count"])
        for j in range(self.config.J):
            dense = self.to_dense(j)
            for i, k in zip(*np.nonzero(dense)):
                w.writerow([j + 1, int(i) + 1, int(k), int(dense[i, k])])
        return buf.getvalue()


def _relabel(sv: ScoreVector, perm) -> ScoreVector:
    pairs = sorted((int(perm[i]), v) for i, v in zip(sv.rows, sv.values))
    return ScoreVector(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


def allocation_from_dict(d: dict) -> FeatureAllocation:
    try:
        config = config_from_dict(d["config"])
        cols = []
        for c in d["columns"]:
            scores = tuple(tuple(ScoreVector(tuple(int(i) for i in rows), tuple(int(v) for v in vals))
                                 for rows, vals in svs) for svs in c["scores"])
            gj = c.get("group_jumps")
            cols.append(FeatureColumn(float(c["atom"]), scores, c.get("base_jump"),
                                      None if gj is None else tuple(tuple(g) for g in gj)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterError(f"malformed allocation: {exc!r}") from exc
    return FeatureAllocation(config, tuple(cols))


def load_allocation(path) -> FeatureAllocation:
    with open(path) as fh:
        return allocation_from_dict(json.load(fh)).check()


def empty_allocation(config: HibpConfig) -> FeatureAllocation:
    return FeatureAllocation(config, ())

