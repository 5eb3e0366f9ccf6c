"""Frequency-of-frequency statistics and chi-square harnesses."""
from __future__ import annotations

import csv
import io
from collections import Counter
from typing import Callable, Iterable

import numpy as np
from scipy import stats

from .errors import ParameterError
from .model import FeatureAllocation


def fof(alloc: FeatureAllocation, level: str = "total", group: int | None = None) -> dict[int, int]:
    """Map count c -> number of features whose count equals c.

    level="total" uses n_k (selections per atom over all groups);
    level="group" uses n_{j,k} of one group (zero counts skipped);
    level="dense" uses summed score totals over all rows and groups.
    """
    if level == "total":
        vals = alloc.n_k
    elif level == "group":
        if group is None or not 0 <= group < alloc.config.J:
            raise ParameterError("level='group' needs a valid 0-based group index")
        vals = alloc.counts[:, group]
    elif level == "dense":
        vals = np.array([sum(sv.total for svs in c.scores for sv in svs) for c in alloc.columns],
                        dtype=np.int64)
    else:
        raise ParameterError(f"unknown FoF level {level!r}")
    c = Counter(int(v) for v in vals if v > 0)
    return dict(sorted(c.items()))


def fof_slope(freq: dict[int, int]) -> float:
    """Least-squares slope of log frequency on log count."""
    if len(freq) < 2:
        return float("nan")
    x = np.log(np.fromiter(freq.keys(), float))
    y = np.log(np.fromiter(freq.values(), float))
    return float(np.polyfit(x, y, 1)[0])


def fof_to_csv(freq: dict[int, int]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["count", "frequency"])
    for c, f in sorted(freq.items()):
        w.writerow([c, f])
    return buf.getvalue()


def _pool(expected: np.ndarray, observed: np.ndarray, min_bin: float):
    """Greedy left-to-right pooling until each bin's expectation reaches min_bin."""
    e_out, o_out = [], []
    e_acc = o_acc = 0.0
    for e, o in zip(expected, observed):
        e_acc += e
        o_acc += o
        if e_acc >= min_bin:
            e_out.append(e_acc)
            o_out.append(o_acc)
            e_acc = o_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        if e_out:
            e_out[-1] += e_acc
            o_out[-1] += o_acc
        else:
            e_out.append(e_acc)
            o_out.append(o_acc)
    return np.array(e_out), np.array(o_out)


def chi_square_gof(samples: Iterable[int], pmf: Callable[[int], float], min_bin: float = 5,
                   support_min: int | None = None) -> float:
    """Pearson goodness-of-fit p-value of integer samples against a fully specified pmf.

    Bins run over support_min..max(samples); the mass beyond the largest
    observed value is added to the last bin so expectations sum to n.
    """
    x = np.asarray(list(samples), dtype=np.int64)
    if x.size < 100:
        raise ParameterError(f"chi_square_gof needs >= 100 samples, got {x.size}")
    lo = int(x.min()) if support_min is None else support_min
    if x.min() < lo:
        raise ParameterError("samples fall below the stated support")
    hi = int(x.max())
    ks = np.arange(lo, hi + 1)
    p = np.array([pmf(int(k)) for k in ks], dtype=float)
    p[-1] += max(0.0, 1.0 - p.sum())
    observed = np.bincount(x - lo, minlength=ks.size).astype(float)
    e, o = _pool(x.size * p, observed, min_bin)
    if e.size < 2:
        raise ParameterError("fewer than two bins after pooling")
    stat = float(((o - e) ** 2 / e).sum())
    return float(stats.chi2.sf(stat, e.size - 1))


def two_sample_test(a: Iterable[int], b: Iterable[int], min_bin: float = 5) -> float:
    """Chi-square homogeneity p-value for two integer samples on pooled bins."""
    a = np.asarray(list(a), dtype=np.int64)
    b = np.asarray(list(b), dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise ParameterError("two_sample_test needs nonempty samples")
    lo = min(a.min(), b.min())
    K = max(a.max(), b.max()) - lo + 1
    ta = np.bincount(a - lo, minlength=K).astype(float)
    tb = np.bincount(b - lo, minlength=K).astype(float)
    # pool on the smaller of the two expected counts per bin
    tot = ta + tb
    frac = min(a.size, b.size) / (a.size + b.size)
    groups, acc = [], []
    for k in range(K):
        acc.append(k)
        if tot[acc].sum() * frac >= min_bin:
            groups.append(acc)
            acc = []
    if acc:
        if groups:
            groups[-1] += acc
        else:
            groups.append(acc)
    if len(groups) < 2:
        return 1.0
    table = np.array([[ta[g].sum() for g in groups], [tb[g].sum() for g in groups]])
    if np.array_equal(table[0] / a.size, table[1] / b.size):
        return 1.0
    return float(stats.chi2_contingency(table, correction=False)[1])
