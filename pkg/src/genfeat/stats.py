"""Classification metrics, one-way ANOVA and Tukey's HSD.

Studentized-range probabilities are computed by nested Gauss-Legendre
quadrature:

    P(Q <= q; k, df) = integral_0^inf W(q s; k) f_df(s) ds
    W(w; k) = k * integral phi(z) [Phi(z) - Phi(z - w)]^(k-1) dz

where f_df is the density of sqrt(chi2_df / df).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize, special

GL_NODES = 64
_Z_PANELS = 6
_S_PANELS = 6
_Z_LIMIT = 9.0


# ---------------------------------------------------------------------------
# classification metrics


def confusion_matrix(truths, predictions, n_classes: int = 7) -> np.ndarray:
    truths, predictions = np.asarray(truths, int), np.asarray(predictions, int)
    if truths.shape != predictions.shape:
        raise ValueError("truths and predictions differ in length")
    for arr in (truths, predictions):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"labels must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truths, predictions), 1)
    return cm


def per_class_prf(cm) -> tuple:
    cm = np.asarray(cm, float)
    tp = np.diag(cm)
    predicted, actual = cm.sum(axis=0), cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return precision, recall, f1


def macro_prf(cm) -> tuple:
    """Unweighted means of per-class precision, recall and F1 (0 when undefined)."""
    p, r, f = per_class_prf(cm)
    return float(p.mean()), float(r.mean()), float(f.mean())


# ---------------------------------------------------------------------------
# distributions


def f_sf(f: float, df_between: float, df_within: float) -> float:
    """Upper tail of the F distribution via the regularized incomplete beta."""
    if not np.isfinite(f):
        return float("nan")
    if f <= 0:
        return 1.0
    x = df_within / (df_within + df_between * f)
    return float(special.betainc(df_within / 2.0, df_between / 2.0, x))


def _gauss_legendre(lo: float, hi: float, panels: int, nodes: int = GL_NODES):
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return pts, wts


def _range_cdf(w: np.ndarray, k: int) -> np.ndarray:
    """P(range of k iid standard normals <= w), vectorized over w."""
    z, wz = _gauss_legendre(-_Z_LIMIT, _Z_LIMIT, _Z_PANELS)
    w = np.atleast_1d(np.asarray(w, float))
    inner = special.ndtr(z)[None, :] - special.ndtr(z[None, :] - w[:, None])
    phi = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    vals = k * (np.clip(inner, 0.0, 1.0) ** (k - 1) * phi[None, :]) @ wz
    return np.clip(vals, 0.0, 1.0)


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    if k < 2:
        raise ValueError("studentized range needs k >= 2")
    if q <= 0:
        return 0.0
    if not np.isfinite(df) or df > 1e5:
        return float(_range_cdf(q, k)[0])
    spread = 10.0 / math.sqrt(df)
    s, ws = _gauss_legendre(max(0.0, 1.0 - spread), 1.0 + spread + 1.0, _S_PANELS)
    half = df / 2.0
    log_f = (math.log(2.0) + half * math.log(half) - special.gammaln(half)
             + (df - 1.0) * np.log(s) - half * s * s)
    return float(np.clip((_range_cdf(q * s, k) * np.exp(log_f)) @ ws, 0.0, 1.0))


def studentized_range_sf(q: float, k: int, df: float) -> float:
    return 1.0 - studentized_range_cdf(q, k, df)


def studentized_range_ppf(prob: float, k: int, df: float) -> float:
    return optimize.brentq(lambda q: studentized_range_cdf(q, k, df) - prob, 1e-6, 100.0,
                           xtol=1e-10)


# ---------------------------------------------------------------------------
# ANOVA and Tukey HSD


@dataclass
class AnovaRow:
    source: str
    df: int
    sum_sq: float
    mean_sq: float
    F: float
    p: float


@dataclass
class TukeyRow:
    group1: str
    group2: str
    diff: float
    lower: float
    upper: float
    q: float
    p: float
    reject: bool


def _named_groups(groups):
    if isinstance(groups, dict):
        names, values = list(groups), list(groups.values())
    else:
        values = list(groups)
        names = [f"g{i}" for i in range(len(values))]
    return names, [np.asarray(v, float) for v in values]


def one_way_anova(groups) -> list:
    """Between/within rows: df, sum of squares, mean square, F and p."""
    _, values = _named_groups(groups)
    if len(values) < 2:
        raise ValueError("ANOVA needs at least two groups")
    if any(len(v) < 2 for v in values):
        raise ValueError("every ANOVA group needs at least two values")
    allv = np.concatenate(values)
    grand = allv.mean()
    ss_between = float(sum(len(v) * (v.mean() - grand) ** 2 for v in values))
    ss_within = float(sum(((v - v.mean()) ** 2).sum() for v in values))
    df_b, df_w = len(values) - 1, len(allv) - len(values)
    ms_b, ms_w = ss_between / df_b, ss_within / df_w
    f = ms_b / ms_w if ms_w > 0 else (0.0 if ms_b == 0 else float("inf"))
    return [
        AnovaRow("between", df_b, ss_between, ms_b, f, f_sf(f, df_b, df_w)),
        AnovaRow("within", df_w, ss_within, ms_w, float("nan"), float("nan")),
    ]


def tukey_hsd(groups, alpha: float = 0.05) -> list:
    """All pairwise comparisons for balanced groups.

    ``q = |mean_i - mean_j| / sqrt(MS_within / n)``; intervals are
    ``diff +/- q_crit * sqrt(MS_within / n)``.
    """
    names, values = _named_groups(groups)
    if len(values) < 2:
        raise ValueError("Tukey HSD needs at least two groups")
    sizes = {len(v) for v in values}
    if len(sizes) != 1:
        raise ValueError("Tukey HSD here requires balanced groups (equal sizes)")
    n = sizes.pop()
    k = len(values)
    df_w = k * n - k
    ms_w = sum(((v - v.mean()) ** 2).sum() for v in values) / df_w
    se = math.sqrt(ms_w / n)
    q_crit = studentized_range_ppf(1.0 - alpha, k, df_w)
    rows = []
    for (a, va), (b, vb) in itertools.combinations(zip(names, values), 2):
        diff = abs(va.mean() - vb.mean())
        q = diff / se if se > 0 else (0.0 if diff == 0 else float("inf"))
        p = studentized_range_sf(q, k, df_w) if np.isfinite(q) else 0.0
        rows.append(TukeyRow(a, b, float(diff), float(diff - q_crit * se),
                             float(diff + q_crit * se), float(q), float(p), bool(p < alpha)))
    return rows


@dataclass
class StatReport:
    anova: list
    tukey: list

    def to_json(self) -> str:
        def clean(d):
            return {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                    for k, v in d.items()}
        return json.dumps({"anova": [clean(asdict(r)) for r in self.anova],
                           "tukey": [clean(asdict(r)) for r in self.tukey]}, indent=2)


def format_anova(rows) -> str:
    lines = [f"{'source':<8} {'df':>5} {'sum_sq':>10} {'mean_sq':>10} {'F':>8} {'p':>10}"]
    for r in rows:
        f = "NaN" if np.isnan(r.F) else f"{r.F:.2f}"
        p = "NaN" if np.isnan(r.p) else f"{r.p:.5f}"
        lines.append(f"{r.source:<8} {r.df:>5} {r.sum_sq:>10.2f} {r.mean_sq:>10.2f} {f:>8} {p:>10}")
    return "\n".join(lines) + "\n"


def format_tukey(rows) -> str:
    lines = [f"{'group1':<8} {'group2':<8} {'diff':>7} {'lower':>8} {'upper':>8} "
             f"{'q':>7} {'p':>7} reject"]
    for r in rows:
        lines.append(f"{r.group1:<8} {r.group2:<8} {r.diff:>7.3f} {r.lower:>8.3f} "
                     f"{r.upper:>8.3f} {r.q:>7.3f} {r.p:>7.3f} {r.reject}")
    return "\n".join(lines) + "\n"
