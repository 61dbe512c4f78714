"""Secure evaluation of synthetic data: workload error and logistic regression.

Workload error is the mean L1 distance between the normalized exact
marginals of the real and synthetic datasets over the measured workload
(2d+1 marginals); nothing here is noised because the result stays secret.

The logistic-regression utility metric trains a multiclass model by
full-batch gradient descent on secret shares. Binned gene values {0..3} are
fed directly as integer features (plus a constant bias column), so forward
and gradient matmuls need no truncation; softmax uses a max-subtracted
degree-5 polynomial exponential on [-8, 0] normalized by the reciprocal
primitive. Inference (accuracy) needs only an argmax over logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fixedpoint as fx
from .circuits import matmul_shares, mul_shares, trunc_shares
from .marginals import flatten_marginals, marginal_counts
from .primitives import abs_shares, div_fx, eq, is_negative, lt, mul_fx, reciprocal_fx
from .runtime import Party
from .sharing import ShareMatrix, ShareVector, concat_shares

# exp(t) on [-8, 0] as p(t/4)^4 with p a degree-5 least-squares fit of exp on
# [-2, 0] constrained to value/slope 1 at 0; composite relative error < 0.03%
# on [-4, 0] and the squaring keeps it positive everywhere.
EXP_POLY = (1.0, 1.0, 0.49851800548831027, 0.16104815581810794,
            0.03400828206221408, 0.003579794786255805)
SOFTMAX_FLOOR = -8.0
N_CLASSES = 5


@dataclass
class LrModel:
    """Secret weights, shape (d+2, 5): gene rows, then the bias row."""

    weights: ShareVector
    epochs: int
    learning_rate: float


@dataclass
class MetricPair:
    """Secret evaluation metrics; never opened inside the tuning loop."""

    wle: ShareVector
    accuracy: ShareVector


def wle(party: Party, real: ShareMatrix, synth: ShareMatrix) -> ShareVector:
    """Normalized workload error between two binned datasets."""
    d = real.n_genes
    with party.protocol("wle"):
        f = party.fp.frac_bits
        mu_real = flatten_marginals(marginal_counts(party, real))
        mu_synth = flatten_marginals(marginal_counts(party, synth))
        scaled_real = mu_real.scale_by(fx.encode_scalar(1.0 / real.n_rows, f))
        scaled_synth = mu_synth.scale_by(fx.encode_scalar(1.0 / synth.n_rows, f))
        diffs = abs_shares(party, scaled_real - scaled_synth)
        total = ShareVector(
            diffs.a.sum(dtype=np.uint64, keepdims=True),
            diffs.b.sum(dtype=np.uint64, keepdims=True),
        )
        n_measurements = 2 * d + 1
        err = trunc_shares(party, total.scale_by(fx.encode_scalar(1.0 / n_measurements, f)), f)
    return err.reshape(())


def _with_bias(party: Party, features: ShareVector) -> ShareVector:
    ones = party.const_share(np.ones((features.shape[0], 1), dtype=np.uint64))
    return concat_shares([features, ones], axis=1)


def _row_max(party: Party, z: ShareVector) -> ShareVector:
    """Row-wise maximum over the 5 class columns (oblivious tree)."""
    def max_pair(x, y):
        b = lt(party, x, y)
        return x + mul_shares(party, b, y - x)

    pair_lo = ShareVector(np.stack([z.a[:, 0], z.a[:, 2]]), np.stack([z.b[:, 0], z.b[:, 2]]))
    pair_hi = ShareVector(np.stack([z.a[:, 1], z.a[:, 3]]), np.stack([z.b[:, 1], z.b[:, 3]]))
    m = max_pair(pair_lo, pair_hi)          # (2, N): max01, max23
    m2 = max_pair(m[0], m[1])               # (N,)
    return max_pair(m2, z[:, 4])


def _poly_exp(party: Party, t: ShareVector) -> ShareVector:
    f = party.fp.frac_bits
    u = trunc_shares(party, t, 2)  # exact t/4 into the fit interval
    acc = party.const_share(np.full(t.shape, np.uint64(fx.encode_scalar(EXP_POLY[5], f))))
    for k in (4, 3, 2, 1, 0):
        acc = party.add_public(mul_fx(party, acc, u), fx.encode_scalar(EXP_POLY[k], f))
    sq = mul_fx(party, acc, acc)
    return mul_fx(party, sq, sq)


def _softmax_probs(party: Party, z: ShareVector) -> ShareVector:
    f = party.fp.frac_bits
    m = _row_max(party, z)
    t = z - ShareVector(np.broadcast_to(m.a[:, None], z.shape).copy(),
                        np.broadcast_to(m.b[:, None], z.shape).copy())
    # clamp to the polynomial's domain floor
    under = is_negative(party, party.add_public(t, fx.encode_scalar(-SOFTMAX_FLOOR, f)))
    floor_minus_t = party.add_public(-t, fx.encode_scalar(SOFTMAX_FLOOR, f))
    t = t + mul_shares(party, under, floor_minus_t)
    p = _poly_exp(party, t)
    denom = ShareVector(p.a.sum(axis=1, dtype=np.uint64), p.b.sum(axis=1, dtype=np.uint64))
    r = reciprocal_fx(party, denom)
    return mul_fx(party, p, r.reshape(-1, 1))


def _label_onehot(party: Party, labels: ShareVector) -> ShareVector:
    from .marginals import indicator5

    bits = indicator5(party, labels)                       # (5, N)
    lifted = bits.scale_by(np.uint64(1) << np.uint64(party.fp.frac_bits))
    return lifted.transpose()                              # (N, 5)


def lr_train(party: Party, train: ShareMatrix, epochs: int, learning_rate: float) -> LrModel:
    """Full-batch softmax-regression training on shares; deterministic.

    Input prep (bias column, one-hot labels) happens outside the lr ledger
    label so recorded bytes scale exactly linearly with the epoch count.
    """
    f = party.fp.frac_bits
    x = _with_bias(party, train.genes())                   # (N, d+1), integer scale
    n = train.n_rows
    onehot = _label_onehot(party, train.labels())          # (N, 5), scale f
    w = ShareVector(
        np.zeros((x.shape[1], N_CLASSES), dtype=np.uint64),
        np.zeros((x.shape[1], N_CLASSES), dtype=np.uint64),
    )
    eta = fx.encode_scalar(learning_rate / n, f)
    xt = x.transpose()
    with party.protocol("lr"):
        for _ in range(epochs):
            logits = matmul_shares(party, x, w)            # scale f
            probs = _softmax_probs(party, logits)
            delta = probs - onehot
            grad = matmul_shares(party, xt, delta)         # scale f
            w = w - trunc_shares(party, grad.scale_by(eta), f)
    return LrModel(w, epochs, learning_rate)


def _argmax_logits(party: Party, z: ShareVector) -> ShareVector:
    """Row argmax with lowest-index tie-break (strict comparisons)."""
    best = z[:, 0]
    idx = party.const_share(np.zeros(z.shape[0], dtype=np.uint64))
    for c in range(1, N_CLASSES):
        zc = z[:, c]
        b = lt(party, best, zc)
        best = best + mul_shares(party, b, zc - best)
        idx = idx + mul_shares(party, b, party.add_public(-idx, np.uint64(c)))
    return idx


def lr_accuracy(party: Party, model: LrModel, test: ShareMatrix) -> ShareVector:
    """Secret fraction of test rows whose predicted class equals the label."""
    if test.n_rows == 0:
        raise ValueError("empty test set")
    f = party.fp.frac_bits
    with party.protocol("acc"):
        x = _with_bias(party, test.genes())
        logits = matmul_shares(party, x, model.weights)
        predicted = _argmax_logits(party, logits)
        hits = eq(party, predicted, test.labels())
        count = ShareVector(hits.a.sum(dtype=np.uint64, keepdims=True),
                            hits.b.sum(dtype=np.uint64, keepdims=True))
        scale = np.uint64(1) << np.uint64(f)
        acc = div_fx(party, count.scale_by(scale),
                     party.const_share(np.full(1, np.uint64(test.n_rows) * scale, dtype=np.uint64)))
    return acc.reshape(())


def evaluate(party: Party, synth_train: ShareMatrix, real_test: ShareMatrix,
             real_train: ShareMatrix, epochs: int, learning_rate: float) -> MetricPair:
    """Fidelity (workload error vs real train) and utility (train on synthetic,
    test on held-out real rows); both metrics stay secret-shared."""
    with party.protocol("eval"):
        fidelity = wle(party, real_train, synth_train)
        model = lr_train(party, synth_train, epochs, learning_rate)
        acc = lr_accuracy(party, model, real_test)
    return MetricPair(fidelity, acc)
