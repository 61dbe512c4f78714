"""Noisy marginal measurement over binned data via indicator polynomials.

For the gene domain {0,1,2,3} and label domain {0..4}, each indicator is a
Lagrange basis polynomial that is 1 at one domain point and 0 at the rest.
Numerators are exact ring-integer products (binned cells live at integer
scale), accumulated per marginal cell and divided once by the exact divisor
k = 2^v * m: multiply by the modular inverse of the odd part m, then an
exact v-bit truncation. At sigma=0 the counts are bit-for-bit equal to
brute-force counting.

Measured workload: d 1-way gene marginals, the 1-way label marginal, and
the d gene-label 2-way marginals flattened to length 20 (index r*5 + f).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fixedpoint as fx
from .circuits import mul_shares_many, trunc_shares
from .primitives import gauss01
from .runtime import Party
from .sharing import ShareMatrix, ShareVector

GENE_DOMAIN = 4
LABEL_DOMAIN = 5

# Lagrange divisors: products prod_{j != b} (b - j) over each domain.
GENE_DIVISORS = (6, 2, 2, 6)          # all positive with the factor order used
LABEL_DIVISORS = (24, -6, 4, -6, 24)


@dataclass(frozen=True)
class DomainSpec:
    n_genes: int

    @property
    def measurement_count(self) -> int:
        return 2 * self.n_genes + 1

    @property
    def cells_per_dataset(self) -> int:
        return self.n_genes * GENE_DOMAIN + LABEL_DOMAIN + self.n_genes * GENE_DOMAIN * LABEL_DOMAIN


@dataclass(frozen=True)
class NoiseCalibration:
    eps_s: float
    delta_s: float
    measurement_count: int
    eps_q: float
    delta_q: float
    sigma_q: float


def calibrate(eps_s: float, delta_s: float, measurement_count: int) -> NoiseCalibration:
    """Uniform sequential-composition split and Gaussian-mechanism scale (sensitivity 1)."""
    if eps_s <= 0 or not 0 < delta_s < 1:
        raise ValueError("privacy budget must satisfy eps_s > 0 and 0 < delta_s < 1")
    if measurement_count < 1:
        raise ValueError("measurement_count must be positive")
    eps_q = eps_s / measurement_count
    delta_q = delta_s / measurement_count
    sigma_q = math.sqrt(2.0 * math.log(1.25 / delta_q)) / eps_q
    return NoiseCalibration(eps_s, delta_s, measurement_count, eps_q, delta_q, sigma_q)


@dataclass
class MarginalSet:
    """Secret marginals at fixed-point scale: (d,4) gene, (5,) label, (d,20) two-way."""

    gene: ShareVector
    label: ShareVector
    gene_label: ShareVector


def _exact_divide(party: Party, acc: ShareVector, divisors: np.ndarray) -> ShareVector:
    """acc holds divisor*count exactly; recover count via inverse-of-odd-part + shift."""
    div = np.asarray(divisors)
    sign = np.where(div < 0, -1, 1)
    mag = np.abs(div).astype(np.int64)
    v = np.zeros(mag.shape, dtype=np.int64)
    m = mag.copy()
    while np.any(m % 2 == 0):
        even = m % 2 == 0
        m[even] //= 2
        v[even] += 1
    inv = np.array([pow(int(o), -1, 1 << 64) for o in m.ravel()], dtype=object)
    inv = fx.to_u64(inv.reshape(m.shape))
    signed_acc = acc.scale_by(fx.to_u64(sign.astype(np.int64)))
    scaled = signed_acc.scale_by(inv)
    return trunc_shares(party, scaled, np.broadcast_to(v, scaled.shape))


def gene_indicator_numerators(party: Party, x: ShareVector) -> ShareVector:
    """Stacked numerators (4, ...) of the gene indicators; exact 6/2/2/6 multiples."""
    s1 = party.add_public(-x, 1)
    s2 = party.add_public(-x, 2)
    s3 = party.add_public(-x, 3)
    s11 = party.add_public(x, fx.neg_const(1))
    s21 = party.add_public(x, fx.neg_const(2))
    u, v = mul_shares_many(party, [(s2, s3), (x, s11)])
    n0, n1, n2, n3 = mul_shares_many(party, [(s1, u), (x, u), (v, s3), (v, s21)])
    return ShareVector(np.stack([n0.a, n1.a, n2.a, n3.a]), np.stack([n0.b, n1.b, n2.b, n3.b]))


def label_indicator_numerators(party: Party, y: ShareVector) -> ShareVector:
    """Stacked numerators (5, ...) of the label indicators (prefix/suffix products)."""
    s = [party.add_public(y, fx.neg_const(j)) if j else y for j in range(5)]
    pre2, suf2 = mul_shares_many(party, [(s[0], s[1]), (s[3], s[4])])
    pre3, suf1 = mul_shares_many(party, [(pre2, s[2]), (s[2], suf2)])
    pre4, suf0, l1, l2, l3 = mul_shares_many(
        party, [(pre3, s[3]), (s[1], suf1), (s[0], suf1), (pre2, suf2), (pre3, s[4])]
    )
    l0, l4 = suf0, pre4
    return ShareVector(
        np.stack([l0.a, l1.a, l2.a, l3.a, l4.a]),
        np.stack([l0.b, l1.b, l2.b, l3.b, l4.b]),
    )


def indicator4(party: Party, x: ShareVector) -> ShareVector:
    """The four gene indicator bits (exactly one opens to 1 on the domain)."""
    nums = gene_indicator_numerators(party, x)
    div = np.array(GENE_DIVISORS).reshape((4,) + (1,) * x.a.ndim)
    return _exact_divide(party, nums, np.broadcast_to(div, nums.shape))


def indicator5(party: Party, y: ShareVector) -> ShareVector:
    nums = label_indicator_numerators(party, y)
    div = np.array(LABEL_DIVISORS).reshape((5,) + (1,) * y.a.ndim)
    return _exact_divide(party, nums, np.broadcast_to(div, nums.shape))


def marginal_counts(party: Party, matrix: ShareMatrix) -> MarginalSet:
    """Exact secret counts (integer scale) of the measured workload."""
    d = matrix.n_genes
    y = matrix.labels()
    x = matrix.genes()

    ln = label_indicator_numerators(party, y)          # (5, N)
    label_acc = ShareVector(ln.a.sum(axis=1, dtype=np.uint64), ln.b.sum(axis=1, dtype=np.uint64))
    label = _exact_divide(party, label_acc, np.array(LABEL_DIVISORS))

    gn = gene_indicator_numerators(party, x)           # (4, N, d)
    gene_acc = ShareVector(gn.a.sum(axis=1, dtype=np.uint64), gn.b.sum(axis=1, dtype=np.uint64))
    gene = _exact_divide(party, gene_acc, np.broadcast_to(np.array(GENE_DIVISORS)[:, None], (4, d)))

    pairs = []
    for r in range(GENE_DOMAIN):
        for f_ in range(LABEL_DOMAIN):
            lf = ShareVector(ln.a[f_][:, None], ln.b[f_][:, None])
            pairs.append((gn[r], lf))
    prods = mul_shares_many(party, pairs)              # each (N, d)
    cell_divs = np.array([GENE_DIVISORS[r] * LABEL_DIVISORS[f_]
                          for r in range(GENE_DOMAIN) for f_ in range(LABEL_DOMAIN)])
    acc2 = ShareVector(
        np.stack([p.a.sum(axis=0, dtype=np.uint64) for p in prods]),   # (20, d)
        np.stack([p.b.sum(axis=0, dtype=np.uint64) for p in prods]),
    )
    two_way = _exact_divide(party, acc2, np.broadcast_to(cell_divs[:, None], (20, d)))

    return MarginalSet(gene.transpose(), label, two_way.transpose())


def flatten_marginals(ms: MarginalSet) -> ShareVector:
    """Canonical cell order: gene block (row-major), label, two-way block."""
    return ShareVector(
        np.concatenate([ms.gene.a.ravel(), ms.label.a.ravel(), ms.gene_label.a.ravel()]),
        np.concatenate([ms.gene.b.ravel(), ms.label.b.ravel(), ms.gene_label.b.ravel()]),
    )


def unflatten_marginals(flat: ShareVector, d: int) -> MarginalSet:
    g = flat[np.arange(0, 4 * d)].reshape(d, 4)
    lab = flat[np.arange(4 * d, 4 * d + 5)]
    gl = flat[np.arange(4 * d + 5, 4 * d + 5 + 20 * d)].reshape(d, 20)
    return MarginalSet(g, lab, gl)


def noisy_marginals(party: Party, matrix: ShareMatrix, sigma_q: float) -> MarginalSet:
    """Exact counts lifted to fixed-point scale plus independent Gaussian noise."""
    f = party.fp.frac_bits
    with party.protocol("noisy_marg"):
        counts = marginal_counts(party, matrix)
        flat = flatten_marginals(counts).scale_by(np.uint64(1) << np.uint64(f))
        if sigma_q > 0.0:
            noise = gauss01(party, flat.size)
            scaled = trunc_shares(party, noise.scale_by(fx.encode_scalar(sigma_q, f)), f)
            flat = flat + scaled
        return unflatten_marginals(flat, matrix.n_genes)
