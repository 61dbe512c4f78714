"""Replicated 3-party secret sharing over Z_{2^64}.

A secret x is split as x = x1 + x2 + x3 mod 2^64 and party S_i holds the
component pair (x_i, x_{i+1}). ShareVector stores one party's pair for a
whole ndarray of secrets; all linear operations are local. Multiplication
and everything interactive lives in primitives.py since it needs a party
context and transport.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fixedpoint import to_u64
from .rng import CounterStream


class IntegrityError(RuntimeError):
    """Overlapping replicated components disagree; the run must abort."""


@dataclass
class ShareVector:
    """One party's replicated share of an array of ring values.

    ``a`` is the party's own component x_i, ``b`` the next component x_{i+1}.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = to_u64(self.a)
        self.b = to_u64(self.b)
        if self.a.shape != self.b.shape:
            raise ValueError("component shape mismatch")

    @property
    def shape(self):
        return self.a.shape

    @property
    def size(self):
        return self.a.size

    def __add__(self, other: "ShareVector") -> "ShareVector":
        return ShareVector(self.a + other.a, self.b + other.b)

    def __sub__(self, other: "ShareVector") -> "ShareVector":
        return ShareVector(self.a - other.a, self.b - other.b)

    def __neg__(self) -> "ShareVector":
        zero = np.uint64(0)
        return ShareVector(zero - self.a, zero - self.b)

    def scale_by(self, c) -> "ShareVector":
        """Multiply by a public ring constant (local)."""
        c = to_u64(c)
        return ShareVector(self.a * c, self.b * c)

    def __getitem__(self, idx) -> "ShareVector":
        return ShareVector(self.a[idx], self.b[idx])

    def reshape(self, *shape) -> "ShareVector":
        return ShareVector(self.a.reshape(*shape), self.b.reshape(*shape))

    def ravel(self) -> "ShareVector":
        return ShareVector(self.a.ravel(), self.b.ravel())

    def transpose(self) -> "ShareVector":
        return ShareVector(np.ascontiguousarray(self.a.T), np.ascontiguousarray(self.b.T))

    def copy(self) -> "ShareVector":
        return ShareVector(self.a.copy(), self.b.copy())


def concat_shares(parts: list[ShareVector], axis: int = 0) -> ShareVector:
    return ShareVector(
        np.concatenate([p.a for p in parts], axis=axis),
        np.concatenate([p.b for p in parts], axis=axis),
    )


def stack_shares(parts: list[ShareVector], axis: int = 0) -> ShareVector:
    return ShareVector(
        np.stack([p.a for p in parts], axis=axis),
        np.stack([p.b for p in parts], axis=axis),
    )


def share_values(values, stream: CounterStream) -> list[ShareVector]:
    """Split public/owned values into the three parties' replicated shares."""
    x = to_u64(values)
    x1 = stream.next_words(x.size).reshape(x.shape)
    x2 = stream.next_words(x.size).reshape(x.shape)
    x3 = x - x1 - x2
    return [
        ShareVector(x1.copy(), x2.copy()),
        ShareVector(x2.copy(), x3.copy()),
        ShareVector(x3.copy(), x1.copy()),
    ]


def reconstruct(shares: list[ShareVector]) -> np.ndarray:
    """Combine all three parties' pairs, checking the replication overlap."""
    s1, s2, s3 = shares
    for left, right, who in ((s1.b, s2.a, "S1/S2"), (s2.b, s3.a, "S2/S3"), (s3.b, s1.a, "S3/S1")):
        if not np.array_equal(left, right):
            raise IntegrityError(f"replicated components disagree between {who}")
    return s1.a + s2.a + s3.a


@dataclass
class ShareMatrix:
    """Secret-shared dataset: rows are samples, the last column is the label."""

    data: ShareVector  # shape (N, n_genes + 1)
    n_genes: int

    def __post_init__(self):
        if self.data.a.ndim != 2:
            raise ValueError("ShareMatrix data must be 2-D")
        if self.data.shape[1] != self.n_genes + 1:
            raise ValueError("column count does not match n_genes + 1")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    def gene_column(self, g: int) -> ShareVector:
        return self.data[:, g]

    def genes(self) -> ShareVector:
        return self.data[:, : self.n_genes]

    def labels(self) -> ShareVector:
        return self.data[:, self.n_genes]

    def take_rows(self, idx: np.ndarray) -> "ShareMatrix":
        return ShareMatrix(self.data[idx, :], self.n_genes)
