"""End-to-end publish loop: concat, K-fold tuning, secret voting, publish.

One loop per hyperparameter candidate (in configured order): split by a
seeded public fold plan, bin the training rows, bin the held-out rows with
the training cuts, measure noisy marginals, generate synthetic rows via the
enclave bridge, and evaluate. Fold metrics are summed and the unanimous
threshold vote compares the sums against K-scaled thresholds (met-at-
equality semantics, exact). The only value ever opened during tuning is the
per-loop vote bit; at publish, additionally the final de-binned synthetic
matrix.

The tuning loop spends no cumulative budget: nothing it computes is ever
published, so the allotted (eps_s, delta_s) reset every loop and the final
claim is a single (eps_s + eps_p, delta_s + delta_p).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .binning import bin_train, bin_with_cuts, inv_bin
from .circuits import mul_shares
from .evaluation import MetricPair, evaluate
from .generator import generate_bridge
from .marginals import DomainSpec, calibrate, noisy_marginals
from .primitives import eq_public, lt
from .rng import CounterStream, derive_key
from .runtime import Party
from .sharing import ShareMatrix, ShareVector, concat_shares

PUBLISH_CONTEXT = (0xFFFF, 0xFFFF)  # generator rng context for the publish run

FIRST_PASS = "first-pass"
EXHAUSTIVE = "exhaustive"


class IngestionError(ValueError):
    pass


@dataclass
class PipelineConfig:
    """Public run parameters, identical at every party (hash-checked)."""

    k_folds: int = 5
    max_loops: int = 4
    hyperparams: tuple[int, ...] = (10, 15, 25, 30)
    eps_s: float = 5.0
    delta_s: float = 1e-5
    eps_p: float = 1.0
    delta_p: float = 1e-6
    seed: int = 42
    frac_bits: int = 16
    n_custodians: int = 2
    mode: str = FIRST_PASS
    synthetic_rows: int = 0          # 0: same length as the combined data
    lr_epochs: int = 150
    lr_rate: float = 0.05

    def validate(self):
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.max_loops < 1:
            raise ValueError("max_loops must be >= 1")
        if not self.hyperparams:
            raise ValueError("hyperparams must be non-empty")
        if self.eps_s <= 0 or not 0 < self.delta_s < 1:
            raise ValueError("synthesis privacy budget must be positive")
        if self.eps_p < 0 or not 0 <= self.delta_p < 1:
            raise ValueError("preprocessing privacy budget must be non-negative")
        if self.n_custodians < 1:
            raise ValueError("need at least one custodian")
        if self.mode not in (FIRST_PASS, EXHAUSTIVE):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class ThresholdSet:
    """Per-custodian secret quality bars: column 0 max wle, column 1 min accuracy."""

    shares: ShareVector  # (n_custodians, 2)


@dataclass
class LoopRecord:
    hyperparam: int
    vote_bit: int


@dataclass
class TuningResult:
    publish: bool
    h_selected: int | None
    loops: list[LoopRecord] = field(default_factory=list)


def concat_matrices(party: Party, mats: list[ShareMatrix]) -> ShareMatrix:
    """Row-stack custodian matrices; pure share stacking, zero communication."""
    with party.protocol("concat"):
        widths = {m.n_genes for m in mats}
        if len(widths) != 1:
            raise IngestionError(f"custodian schemas disagree on gene count: {sorted(widths)}")
        data = concat_shares([m.data for m in mats], axis=0)
    return ShareMatrix(data, mats[0].n_genes)


def fold_plan(master_seed: int, loop_index: int, n_rows: int, k: int):
    """Seeded public shuffle into K contiguous test blocks (sizes differ <= 1)."""
    gen = CounterStream(derive_key(master_seed, "fold-plan", loop_index)).generator_at()
    perm = gen.permutation(n_rows)
    folds = []
    for j in range(k):
        lo, hi = j * n_rows // k, (j + 1) * n_rows // k
        test = perm[lo:hi]
        train = np.concatenate([perm[:lo], perm[hi:]])
        folds.append((train, test))
    return folds


def kfold_split(matrix: ShareMatrix, plan, j: int):
    if not 0 <= j < len(plan):
        raise ValueError(f"fold index {j} out of range")
    train_idx, test_idx = plan[j]
    return matrix.take_rows(train_idx), matrix.take_rows(test_idx)


def secret_vote(party: Party, wle_sum: ShareVector, acc_sum: ShareVector,
                thresholds: ThresholdSet, k_folds: int) -> int:
    """Unanimous vote on fold-summed metrics vs K-scaled secret thresholds.

    A custodian's vote survives only if both metrics meet its bars, where
    "meets" includes equality (workload error at most the cap, accuracy at
    least the floor). Individual thresholds, metrics and the tally stay
    secret; only the final unanimity bit is opened.
    """
    n_cust = thresholds.shares.shape[0]
    with party.protocol("vote"):
        scaled = thresholds.shares.scale_by(np.uint64(k_folds))
        w_caps = scaled[:, 0]
        a_floors = scaled[:, 1]
        w_rep = ShareVector(np.broadcast_to(wle_sum.a, (n_cust,)).copy(),
                            np.broadcast_to(wle_sum.b, (n_cust,)).copy())
        a_rep = ShareVector(np.broadcast_to(acc_sum.a, (n_cust,)).copy(),
                            np.broadcast_to(acc_sum.b, (n_cust,)).copy())
        fail_w = lt(party, w_caps, w_rep)       # cap strictly below the metric
        fail_a = lt(party, a_rep, a_floors)     # metric strictly below the floor
        pass_w = party.add_public(-fail_w, 1)
        pass_a = party.add_public(-fail_a, 1)
        pass_bits = mul_shares(party, pass_w, pass_a)
        tally = ShareVector(pass_bits.a.sum(dtype=np.uint64, keepdims=True),
                            pass_bits.b.sum(dtype=np.uint64, keepdims=True))
        unanimous = eq_public(party, tally, np.uint64(n_cust))
        bit = party.open(unanimous, "vote")
    return int(bit[0])


def run_fold(party: Party, matrix: ShareMatrix, plan, loop_index: int, fold_index: int,
             h: int, config: PipelineConfig, sigma_q: float) -> MetricPair:
    train, test = kfold_split(matrix, plan, fold_index)
    binned_train, cuts, _ = bin_train(party, train, compute_means=False)
    binned_test = bin_with_cuts(party, test, cuts)
    ms = noisy_marginals(party, binned_train, sigma_q)
    synth = generate_bridge(party, ms, binned_train.n_rows, h,
                            config.seed, (loop_index, fold_index))
    return evaluate(party, synth, binned_test, binned_train,
                    config.lr_epochs, config.lr_rate)


def tuning_loop(party: Party, matrix: ShareMatrix, thresholds: ThresholdSet,
                config: PipelineConfig) -> TuningResult:
    sigma_q = calibrate(config.eps_s, config.delta_s,
                        DomainSpec(matrix.n_genes).measurement_count).sigma_q
    result = TuningResult(publish=False, h_selected=None)
    candidates: list[tuple[int, ShareVector]] = []  # (loop idx, secret wle sum) of passers
    n_loops = min(config.max_loops, len(config.hyperparams))
    for loop_index in range(n_loops):
        h = config.hyperparams[loop_index]
        plan = fold_plan(config.seed, loop_index, matrix.n_rows, config.k_folds)
        wle_sum = acc_sum = None
        for fold_index in range(config.k_folds):
            metrics = run_fold(party, matrix, plan, loop_index, fold_index,
                               h, config, sigma_q)
            wle_sum = metrics.wle if wle_sum is None else wle_sum + metrics.wle
            acc_sum = metrics.accuracy if acc_sum is None else acc_sum + metrics.accuracy
        # fold averaging folds into the vote: sums compare against K-scaled
        # thresholds, which keeps met-at-equality semantics exact
        bit = secret_vote(party, wle_sum, acc_sum, thresholds, config.k_folds)
        result.loops.append(LoopRecord(h, bit))
        if bit == 1:
            if config.mode == FIRST_PASS:
                result.publish = True
                result.h_selected = h
                return result
            candidates.append((loop_index, wle_sum.reshape(1)))
    if config.mode == EXHAUSTIVE and candidates:
        result.publish = True
        result.h_selected = config.hyperparams[_select_lowest(party, candidates)]
    return result


def _select_lowest(party: Party, candidates: list[tuple[int, ShareVector]]) -> int:
    """Oblivious argmin of secret fold sums among (publicly) passing loops."""
    with party.protocol("h_select"):
        best_val = candidates[0][1]
        best_idx = party.const_share(np.full(1, np.uint64(candidates[0][0])))
        for loop_index, value in candidates[1:]:
            b = lt(party, value, best_val)
            best_val = best_val + mul_shares(party, b, value - best_val)
            delta = party.add_public(-best_idx, np.uint64(loop_index))
            best_idx = best_idx + mul_shares(party, b, delta)
        opened = party.open(best_idx, "h-select")
    return int(opened[0])


@dataclass
class PublishOutput:
    cells: np.ndarray          # opened ring words, shape (rows, d+1)
    n_rows: int


def publish_path(party: Party, matrix: ShareMatrix, h_selected: int,
                 config: PipelineConfig) -> PublishOutput:
    """Re-run preprocessing and generation on the full data, de-bin, reveal."""
    sigma_q = calibrate(config.eps_s, config.delta_s,
                        DomainSpec(matrix.n_genes).measurement_count).sigma_q
    binned, cuts, means = bin_train(party, matrix, compute_means=True)
    ms = noisy_marginals(party, binned, sigma_q)
    n_out = config.synthetic_rows or matrix.n_rows
    synth = generate_bridge(party, ms, n_out, h_selected, config.seed, PUBLISH_CONTEXT)
    debinned = inv_bin(party, synth, means)
    with party.protocol("publish"):
        cells = party.open(debinned.data, "publish")
    return PublishOutput(cells, n_out)


@dataclass
class RunResult:
    publish: bool
    h_selected: int | None
    loops: list[LoopRecord]
    synthetic: np.ndarray | None   # opened ring words (rows, d+1) or None
    ledger: dict
    opening_log: list
    reveal_log: list


def run_pipeline(party: Party, custodian_matrices: list[ShareMatrix],
                 thresholds: ThresholdSet, config: PipelineConfig) -> RunResult:
    """Algorithm body executed identically by each party after ingestion."""
    combined = concat_matrices(party, custodian_matrices)
    tuning = tuning_loop(party, combined, thresholds, config)
    synthetic = None
    if tuning.publish:
        out = publish_path(party, combined, tuning.h_selected, config)
        synthetic = out.cells
    return RunResult(
        publish=tuning.publish,
        h_selected=tuning.h_selected,
        loops=tuning.loops,
        synthetic=synthetic,
        ledger=party.ledger.snapshot(),
        opening_log=list(party.opening_log),
        reveal_log=list(party.reveal_log),
    )
