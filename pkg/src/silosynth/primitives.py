"""Secure building blocks on replicated shares.

All primitives are data-oblivious: message counts, sizes and order depend
only on public shapes, never on secret values. Comparison and equality ride
on the component adder from circuits.py; division is a Newton-Raphson
reciprocal after oblivious normalization to [0.5, 1); sorting is a bitonic
network of secure compare-swaps.
"""

from __future__ import annotations

import numpy as np

from . import fixedpoint as fx
from .circuits import (
    add_components,
    and_packed,
    b2a,
    b2a_many,
    bit_extract,
    mul_shares,
    not_packed,
    or_packed,
    shift_packed,
    trunc_shares,
    xor_packed,
)
from .runtime import Party
from .sharing import ShareVector

# Newton-Raphson reciprocal: public linear initial guess on [0.5, 1) and a
# fixed, public iteration count.
RECIP_INIT = 2.9142
NR_ITERATIONS = 5


def lt(party: Party, x: ShareVector, y: ShareVector) -> ShareVector:
    """Secret bit: 1 iff x < y under the signed interpretation (strict)."""
    diff = x - y
    sum_bits, _, _ = add_components(party, diff)
    return b2a(party, bit_extract(sum_bits, 63))


def is_negative(party: Party, x: ShareVector) -> ShareVector:
    sum_bits, _, _ = add_components(party, x)
    return b2a(party, bit_extract(sum_bits, 63))


def lt_public(party: Party, x: ShareVector, c) -> ShareVector:
    return is_negative(party, party.add_public(x, fx.neg_const(int(fx.to_u64(c)))))


def eq(party: Party, x: ShareVector, y: ShareVector) -> ShareVector:
    """Secret bit: 1 iff x == y."""
    return eq_zero(party, x - y)


def eq_public(party: Party, x: ShareVector, c) -> ShareVector:
    return eq_zero(party, party.add_public(x, fx.neg_const(int(fx.to_u64(c)))))


def eq_zero(party: Party, x: ShareVector) -> ShareVector:
    sum_bits, _, _ = add_components(party, x)
    t = not_packed(party, sum_bits)
    for k in (32, 16, 8, 4, 2, 1):
        t = and_packed(party, t, shift_packed(t, -k))
    return b2a(party, bit_extract(t, 0))


def abs_shares(party: Party, x: ShareVector) -> ShareVector:
    """|x| as s = (x < 0); x - 2*s*x."""
    s = is_negative(party, x)
    return x - mul_shares(party, s, x).scale_by(2)


def mul_fx(party: Party, x: ShareVector, y: ShareVector) -> ShareVector:
    """Fixed-point product: integer multiply then exact truncation."""
    return trunc_shares(party, mul_shares(party, x, y), party.fp.frac_bits)


def reciprocal_fx(party: Party, b: ShareVector) -> ShareVector:
    """Fixed-point 1/b for secret b with 0 < b (ring value below 2^(2f)).

    Normalizes b to b' in [0.5, 1) by an obliviously selected power of two
    (prefix-OR over the decomposed bits picks the leading-one position),
    runs a fixed number of Newton-Raphson steps, then undoes the scaling.
    """
    f = party.fp.frac_bits
    sum_bits, _, _ = add_components(party, b)
    pref = sum_bits
    for k in (1, 2, 4, 8, 16, 32):
        pref = or_packed(party, pref, shift_packed(pref, -k))
    leading = xor_packed(pref, shift_packed(pref, -1))
    # factor = 2^(2f-1-t) for leading bit t; bits above 2f-1 are zero by the
    # range precondition, so the weighted recomposition stays in the ring.
    bit_words = [bit_extract(leading, t) for t in range(2 * f)]
    bits_arith = b2a_many(party, bit_words)
    factor = bits_arith[0].scale_by(np.uint64(1) << np.uint64(2 * f - 1))
    for t in range(1, 2 * f):
        factor = factor + bits_arith[t].scale_by(np.uint64(1) << np.uint64(2 * f - 1 - t))

    b_norm = trunc_shares(party, mul_shares(party, b, factor), f)
    two = fx.encode_scalar(2.0, f)
    x = party.add_public(-(b_norm + b_norm), fx.encode_scalar(RECIP_INIT, f))
    for _ in range(NR_ITERATIONS):
        e = party.add_public(-mul_fx(party, b_norm, x), two)
        x = mul_fx(party, x, e)
    return mul_fx(party, x, factor)


def div_fx(party: Party, a: ShareVector, b: ShareVector) -> ShareVector:
    """Fixed-point a/b with one residual-correction step for absolute accuracy."""
    recip = reciprocal_fx(party, b)
    q = mul_fx(party, a, recip)
    residual = a - mul_fx(party, q, b)
    return q + mul_fx(party, residual, recip)


# -- oblivious sorting ---------------------------------------------------------

def _bitonic_layers(m: int):
    """Compare-swap index pairs (p, q) per layer; after each pair arr[p] <= arr[q]."""
    layers = []
    size = 2
    while size <= m:
        stride = size // 2
        while stride >= 1:
            i = np.arange(m)
            partner = i ^ stride
            sel = partner > i
            lo, hi = i[sel], partner[sel]
            ascending = (lo & size) == 0
            p = np.where(ascending, lo, hi)
            q = np.where(ascending, hi, lo)
            layers.append((p, q))
            stride //= 2
        size *= 2
    return layers


def sort_shares(party: Party, values: ShareVector) -> ShareVector:
    """Bitonic sort; opens to the input multiset in non-decreasing order."""
    n = values.size
    if n <= 1:
        return values.copy()
    m = 1 << (n - 1).bit_length()
    sentinel = np.uint64(1) << np.uint64(31 + party.fp.frac_bits)
    pad = party.const_share(np.full(m - n, sentinel, dtype=np.uint64))
    arr = ShareVector(np.concatenate([values.a, pad.a]), np.concatenate([values.b, pad.b]))
    for p_idx, q_idx in _bitonic_layers(m):
        xp, xq = arr[p_idx], arr[q_idx]
        swap = lt(party, xq, xp)
        delta = mul_shares(party, swap, xq - xp)
        arr.a[p_idx] = xp.a + delta.a
        arr.b[p_idx] = xp.b + delta.b
        arr.a[q_idx] = xq.a - delta.a
        arr.b[q_idx] = xq.b - delta.b
    return arr[np.arange(n)]


def sort_columns(party: Party, matrix: ShareVector) -> ShareVector:
    """Sort each column of a (N, d) share matrix in one batched schedule."""
    n, d = matrix.shape
    if n <= 1:
        return matrix.copy()
    m = 1 << (n - 1).bit_length()
    sentinel = np.uint64(1) << np.uint64(31 + party.fp.frac_bits)
    pad = party.const_share(np.full((m - n, d), sentinel, dtype=np.uint64))
    arr = ShareVector(np.concatenate([matrix.a, pad.a], axis=0), np.concatenate([matrix.b, pad.b], axis=0))
    for p_idx, q_idx in _bitonic_layers(m):
        xp, xq = arr[p_idx, :], arr[q_idx, :]
        swap = lt(party, xq, xp)
        delta = mul_shares(party, swap, xq - xp)
        arr.a[p_idx, :] = xp.a + delta.a
        arr.b[p_idx, :] = xp.b + delta.b
        arr.a[q_idx, :] = xq.a - delta.a
        arr.b[q_idx, :] = xq.b - delta.b
    return arr[np.arange(n), :]


# -- shared randomness -----------------------------------------------------------

def rand_uniform01(party: Party, n: int) -> ShareVector:
    """Secret uniform values on the 2^-f grid of [0, 1).

    Each of the three pairwise streams contributes f random bits per sample;
    the XOR of the three is converted to an arithmetic sharing bit by bit.
    """
    f = party.fp.frac_bits
    if party._test_uniform_override is not None:
        word = fx.encode_scalar(party._test_uniform_override, f)
        return party.const_share(np.full(n, np.uint64(word), dtype=np.uint64))
    words = party.shared_random_words((n,))
    low = ShareVector(words.a & np.uint64((1 << f) - 1), words.b & np.uint64((1 << f) - 1))
    bit_words = [bit_extract(low, t) for t in range(f)]
    bits = b2a_many(party, bit_words)
    acc = bits[0]
    for t in range(1, f):
        acc = acc + bits[t].scale_by(np.uint64(1) << np.uint64(t))
    return acc


def gauss01(party: Party, n: int) -> ShareVector:
    """Standard normal samples by the 12-uniform sum approximation."""
    u = rand_uniform01(party, 12 * n).reshape(12, n)
    total = ShareVector(u.a.sum(axis=0, dtype=np.uint64), u.b.sum(axis=0, dtype=np.uint64))
    return party.add_public(total, fx.neg_const(fx.encode_scalar(6.0, party.fp.frac_bits)))


def avg_shares(party: Party, metric_sum: ShareVector, k: int) -> ShareVector:
    """Fold average as a zero-communication local scaling by encode(1/K).

    The result carries doubled fractional scale (2f); callers that need the
    plain scale compare against K-scaled values instead (see secret_vote).
    """
    return metric_sum.scale_by(fx.encode_scalar(1.0 / k, party.fp.frac_bits))
