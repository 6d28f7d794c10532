"""Pure numpy implementations of the hot kernels.

Signatures mirror ``vidmeter._kernels`` exactly; :mod:`vidmeter._core`
picks one at import time.
"""

import numpy as np


def ap_from_flags(rel, n_relevant):
    """Average precision of a ranked 0/1 relevance vector against ``n_relevant``."""
    rel = np.asarray(rel, dtype=np.int8)
    if n_relevant <= 0:
        return 0.0
    hits = np.cumsum(rel, dtype=np.int64)
    ranks = np.arange(1, rel.size + 1, dtype=np.float64)
    mask = rel != 0
    return float(np.sum(hits[mask] / ranks[mask]) / n_relevant)


def xinfap_scan(stratum, status, rates, eps):
    """Sum over judged-relevant ranks of ``E[P@k] / rate``.

    ``stratum[k]`` is the stratum index of the shot at rank ``k+1`` (-1 when
    the shot is not in the pool); ``status[k]`` is 1, 0 or -1 (unjudged).
    """
    stratum = np.asarray(stratum, dtype=np.int32)
    status = np.asarray(status, dtype=np.int8)
    rates = np.asarray(rates, dtype=np.float64)
    n, n_strata = stratum.size, rates.size
    rel_pos = np.flatnonzero((status == 1) & (stratum >= 0))
    if rel_pos.size == 0 or n_strata == 0:
        return 0.0
    onehot = np.zeros((n, n_strata), dtype=np.int32)
    pooled = stratum >= 0
    onehot[np.flatnonzero(pooled), stratum[pooled]] = 1
    rel = onehot * (status == 1)[:, None]
    non = onehot * (status == 0)[:, None]

    def above(a):
        c = np.cumsum(a, axis=0)
        return (c - a)[rel_pos].astype(np.float64)

    p_a, r_a, n_a = above(onehot), above(rel), above(non)
    ratio = (r_a + eps) / (r_a + n_a + 2.0 * eps)
    k = rel_pos.astype(np.float64) + 1.0
    expected = (1.0 + np.sum(p_a * ratio, axis=1)) / k
    return float(np.sum(expected / rates[stratum[rel_pos]]))


def signflip_exact_count(diffs, threshold):
    """Number of the ``2**T`` sign assignments with ``|sum(s * d)| >= threshold``."""
    diffs = np.asarray(diffs, dtype=np.float64)
    sums = np.zeros(1)
    for d in diffs:
        sums = np.concatenate((sums + d, sums - d))
    return int(np.count_nonzero(np.abs(sums) >= threshold))
