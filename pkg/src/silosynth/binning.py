"""Secure quantile binning across silos and its inverse.

Training columns are obliviously sorted, the 0.25/0.5/0.75 cut points are
linearly interpolated at public positions, and every cell is mapped to
3 - (x < Q0) - (x < Q1) - (x < Q2). Strict less-than follows the comparison
primitive, so a value equal to a cut is not below it. Per-bin means and
counters are kept secret-shared for later inverse discretization; held-out
data is binned with the training cuts only (no sort, no means).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fixedpoint as fx
from .circuits import mul_shares, trunc_shares
from .primitives import div_fx, eq_zero, lt, sort_columns
from .runtime import Party
from .sharing import ShareMatrix, ShareVector, concat_shares

QUANTILES = (0.25, 0.5, 0.75)


class DegenerateInputError(ValueError):
    pass


@dataclass
class QuantileCuts:
    """Secret cut points, shape (n_genes, 3), non-decreasing per gene."""

    cuts: ShareVector


@dataclass
class BinMeans:
    """Secret per-bin means and occupancy counters, shape (n_genes, 4)."""

    means: ShareVector
    counters: ShareVector


def compute_quantiles(party: Party, sorted_cols: ShareVector, n_rows: int) -> QuantileCuts:
    """Interpolated quantiles of pre-sorted columns at public positions."""
    if n_rows < 2:
        raise DegenerateInputError("quantile binning needs at least 2 rows")
    f = party.fp.frac_bits
    per_r = []
    needs_trunc = []
    for r in QUANTILES:
        pos = (n_rows - 1) * r
        i = int(np.floor(pos))
        frac = pos - i
        base = sorted_cols[i, :]
        if frac == 0.0:
            per_r.append(base)
            needs_trunc.append(None)
        else:
            diff = sorted_cols[i + 1, :] - base
            per_r.append(base)
            needs_trunc.append(diff.scale_by(fx.encode_scalar(frac, f)))
    pending = [t for t in needs_trunc if t is not None]
    if pending:
        stacked = ShareVector(np.stack([t.a for t in pending]), np.stack([t.b for t in pending]))
        corrected = trunc_shares(party, stacked, f)
        j = 0
        for idx, t in enumerate(needs_trunc):
            if t is not None:
                per_r[idx] = per_r[idx] + corrected[j]
                j += 1
    cuts = ShareVector(np.stack([q.a for q in per_r], axis=1), np.stack([q.b for q in per_r], axis=1))
    return QuantileCuts(cuts)


def bin_columns(party: Party, data: ShareVector, cuts: QuantileCuts) -> ShareVector:
    """Map every cell to its bin index in {0,1,2,3} via three comparisons."""
    n, d = data.shape
    tiled = ShareVector(np.tile(data.a, (3, 1, 1)), np.tile(data.b, (3, 1, 1)))
    cut_t = ShareVector(
        np.broadcast_to(cuts.cuts.a.T[:, None, :], (3, n, d)).copy(),
        np.broadcast_to(cuts.cuts.b.T[:, None, :], (3, n, d)).copy(),
    )
    below = lt(party, tiled, cut_t)
    total = ShareVector(below.a.sum(axis=0, dtype=np.uint64), below.b.sum(axis=0, dtype=np.uint64))
    return party.add_public(-total, np.uint64(3))


def compute_bin_means(party: Party, binned: ShareVector, originals: ShareVector,
                      cuts: QuantileCuts) -> BinMeans:
    """Per-bin means with oblivious empty-bin fallback to cut midpoints."""
    n, d = binned.shape
    f = party.fp.frac_bits
    offsets = np.arange(4, dtype=np.uint64).reshape(4, 1, 1)
    stacked = ShareVector(np.tile(binned.a, (4, 1, 1)), np.tile(binned.b, (4, 1, 1)))
    indicator = eq_zero(party, party.add_public(stacked, (np.uint64(0) - offsets) * np.ones((4, n, d), dtype=np.uint64)))
    orig_b = ShareVector(
        np.broadcast_to(originals.a, (4, n, d)).copy(),
        np.broadcast_to(originals.b, (4, n, d)).copy(),
    )
    weighted = mul_shares(party, indicator, orig_b)
    sums = ShareVector(weighted.a.sum(axis=1, dtype=np.uint64), weighted.b.sum(axis=1, dtype=np.uint64))
    counters = ShareVector(indicator.a.sum(axis=1, dtype=np.uint64), indicator.b.sum(axis=1, dtype=np.uint64))

    empty = eq_zero(party, counters)
    denom = (counters + empty).scale_by(np.uint64(1) << np.uint64(f))
    raw_means = div_fx(party, sums, denom)

    c = cuts.cuts  # (d, 3)
    inner = trunc_shares(
        party,
        ShareVector(
            np.stack([c.a[:, 0] + c.a[:, 1], c.a[:, 1] + c.a[:, 2]]),
            np.stack([c.b[:, 0] + c.b[:, 1], c.b[:, 1] + c.b[:, 2]]),
        ),
        1,
    )
    fallback = ShareVector(
        np.stack([c.a[:, 0], inner.a[0], inner.a[1], c.a[:, 2]]),
        np.stack([c.b[:, 0], inner.b[0], inner.b[1], c.b[:, 2]]),
    )
    means = raw_means + mul_shares(party, empty, fallback - raw_means)
    return BinMeans(means.transpose(), counters.transpose())


def bin_train(party: Party, matrix: ShareMatrix, compute_means: bool = True):
    """Quantile binning of the gene columns (training path).

    Returns the binned matrix (labels pass through), the cuts, and the bin
    means (None when compute_means is off, the optimization for folds that
    never de-bin).
    """
    genes = matrix.genes()
    with party.protocol("bin"):
        with party.protocol("sort"):
            sorted_cols = sort_columns(party, genes)
        cuts = compute_quantiles(party, sorted_cols, matrix.n_rows)
        binned = bin_columns(party, genes, cuts)
        means = compute_bin_means(party, binned, genes, cuts) if compute_means else None
    data = concat_shares([binned, matrix.labels().reshape(-1, 1)], axis=1)
    return ShareMatrix(data, matrix.n_genes), cuts, means


def bin_with_cuts(party: Party, matrix: ShareMatrix, cuts: QuantileCuts) -> ShareMatrix:
    """Bin held-out rows with training cuts: three comparisons per cell only."""
    with party.protocol("bin_test"):
        if matrix.n_rows == 0:
            return matrix
        binned = bin_columns(party, matrix.genes(), cuts)
    data = concat_shares([binned, matrix.labels().reshape(-1, 1)], axis=1)
    return ShareMatrix(data, matrix.n_genes)


def inv_bin(party: Party, matrix: ShareMatrix, means: BinMeans) -> ShareMatrix:
    """Replace every binned gene cell with its bin's secret mean."""
    with party.protocol("inv_bin"):
        binned = matrix.genes()
        n, d = binned.shape
        offsets = np.arange(4, dtype=np.uint64).reshape(4, 1, 1)
        stacked = ShareVector(np.tile(binned.a, (4, 1, 1)), np.tile(binned.b, (4, 1, 1)))
        indicator = eq_zero(party, party.add_public(stacked, (np.uint64(0) - offsets) * np.ones((4, n, d), dtype=np.uint64)))
        means_b = ShareVector(
            np.broadcast_to(means.means.a.T[:, None, :], (4, n, d)).copy(),
            np.broadcast_to(means.means.b.T[:, None, :], (4, n, d)).copy(),
        )
        selected = mul_shares(party, indicator, means_b)
        debinned = ShareVector(selected.a.sum(axis=0, dtype=np.uint64), selected.b.sum(axis=0, dtype=np.uint64))
    data = concat_shares([debinned, matrix.labels().reshape(-1, 1)], axis=1)
    return ShareMatrix(data, matrix.n_genes)
