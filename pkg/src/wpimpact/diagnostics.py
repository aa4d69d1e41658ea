"""Model checks for the shift regression: alternative responses, residuals,
autocorrelation and variance-stabilizing row weights."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy import stats

from .errors import ValidationError

LOGIT_CLAMP = 1e-6
REWEIGHT_TARGETS = {"y4": 1.0, "y5": 0.03, "y6": 0.12}
TAGS = ("y1", "y2", "y3", "y4", "y5", "y6")


def default_bins(n_bins: int = 10) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_bins + 1)


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``1..max_lag`` (biased denominator)."""
    x = np.asarray(series, dtype=float)
    if x.size <= max_lag + 1:
        raise ValidationError(f"series of length {x.size} too short for lag {max_lag}")
    xc = x - x.mean()
    denom = xc @ xc
    if denom == 0:
        raise ValidationError("autocorrelation undefined for a constant series")
    return np.array([xc[:-k] @ xc[k:] / denom for k in range(1, max_lag + 1)])


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def transform_response(wp_start, wp_end, tag: str, clamp: bool = False) -> np.ndarray:
    """Alternative responses built from shift start/end probabilities.

    ``y1`` is the change in win probability, ``y2`` the change in log-odds
    and ``y3`` the inverse logit of ``(1 + y1) / 2``.  ``y2`` rejects
    probabilities of exactly 0 or 1 unless ``clamp`` is set, in which case
    they are pulled to ``[1e-6, 1 - 1e-6]``.
    """
    p0 = np.asarray(wp_start, dtype=float)
    p1 = np.asarray(wp_end, dtype=float)
    y1 = p1 - p0
    if tag == "y1":
        return y1
    if tag == "y2":
        if clamp:
            p0 = np.clip(p0, LOGIT_CLAMP, 1 - LOGIT_CLAMP)
            p1 = np.clip(p1, LOGIT_CLAMP, 1 - LOGIT_CLAMP)
        elif np.any((p0 <= 0) | (p0 >= 1) | (p1 <= 0) | (p1 >= 1)):
            raise ValidationError("log-odds response needs probabilities strictly inside (0, 1)")
        return logit(p1) - logit(p0)
    if tag == "y3":
        return 1.0 / (1.0 + np.exp(-(1.0 + y1) / 2.0))
    raise ValidationError(f"unknown response transform {tag!r}")


def _bin_index(start_wp, edges) -> np.ndarray:
    x = np.asarray(start_wp, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if np.any(x < edges[0]) or np.any(x > edges[-1]):
        raise ValidationError("starting win probability outside the bin edges")
    return np.clip(np.searchsorted(edges, x, side="right") - 1, 0, edges.size - 2)


@dataclass(frozen=True)
class BinnedSD:
    edges: np.ndarray
    sd: np.ndarray
    counts: np.ndarray

    @property
    def flagged(self) -> np.ndarray:
        """Bins with fewer than two rows (SD undefined, reported as NaN)."""
        return self.counts < 2


def binned_sd(responses, start_wps, edges) -> BinnedSD:
    y = np.asarray(responses, dtype=float)
    idx = _bin_index(start_wps, edges)
    nb = len(edges) - 1
    counts = np.bincount(idx, minlength=nb)
    sd = np.full(nb, np.nan)
    for b in range(nb):
        if counts[b] >= 2:
            vals = y[idx == b]
            sd[b] = 0.0 if np.ptp(vals) == 0 else np.std(vals, ddof=1)
    return BinnedSD(np.asarray(edges, dtype=float), sd, counts)


def reweight_dataset(ds, edges, target_sd: float):
    """Scale each row so every start-probability bin has response SD ``target_sd``.

    Response, predictors and intercept multiplier of a row are all
    multiplied by ``target_sd / sd(bin)``.
    """
    if ds.wp_start is None:
        raise ValidationError("reweighting needs per-row starting win probabilities")
    if not target_sd > 0:
        raise ValidationError("target SD must be positive")
    b = binned_sd(ds.y, ds.wp_start, edges)
    idx = _bin_index(ds.wp_start, edges)
    used = np.unique(idx)
    bad = [int(k) for k in used if not (b.counts[k] >= 2 and b.sd[k] > 0)]
    if bad:
        raise ValidationError(f"bins {bad} have zero or undefined response SD")
    w = target_sd / b.sd[idx]
    W = sp.diags(w)
    out = replace(ds, y=ds.y * w, X=sp.csr_matrix(W @ ds.X), intercept=ds.intercept * w)
    return out, w


@dataclass(frozen=True)
class ResponseVariant:
    tag: str
    values: np.ndarray
    weights: np.ndarray | None = None
    target_sd: float | None = None


def response_variant(ds, tag: str, edges=None, clamp: bool = True):
    """Dataset carrying response variant ``tag`` plus its description."""
    if ds.wp_start is None or ds.wp_end is None:
        raise ValidationError("response variants need per-row win probabilities")
    if tag in REWEIGHT_TARGETS:
        edges = default_bins() if edges is None else edges
        base = ds.with_response(transform_response(ds.wp_start, ds.wp_end, "y1"))
        out, w = reweight_dataset(base, edges, REWEIGHT_TARGETS[tag])
        return out, ResponseVariant(tag, out.y, w, REWEIGHT_TARGETS[tag])
    y = transform_response(ds.wp_start, ds.wp_end, tag, clamp=clamp)
    return ds.with_response(y), ResponseVariant(tag, y)


@dataclass(frozen=True)
class ResidualSet:
    fitted: np.ndarray
    residuals: np.ndarray
    qq_theoretical: np.ndarray
    qq_sample: np.ndarray
    qq_studentized: np.ndarray


def residual_diagnostics(ds, draws) -> ResidualSet:
    """Posterior-mean fitted values, residuals and normal QQ pairs."""
    if tuple(draws.names) != tuple(ds.coef_names):
        raise ValidationError("draws and dataset have different coefficient columns")
    fitted = ds.intercept * draws.mu.mean() + ds.X @ draws.coef.mean(axis=0)
    fitted = np.asarray(fitted).ravel()
    resid = ds.y - fitted
    n = resid.size
    theo = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    srt = np.sort(resid)
    sd = resid.std(ddof=1) if n > 1 else 0.0
    stud = srt / sd if sd > 0 else np.zeros_like(srt)
    return ResidualSet(fitted, resid, theo, srt, stud)


def histogram_counts(values, bins=50):
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins)
    return counts, edges
