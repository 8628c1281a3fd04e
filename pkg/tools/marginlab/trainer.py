"""
MarginLab - Training loop for MarginMatch and its baselines

Per epoch t:
  1. flexible thresholds from the previous epoch's weak-view predictions
  2. per batch: weak views of labeled/unlabeled, strong views of unlabeled and
     erroneous; trust scores updated from unlabeled weak logits and erroneous
     strong logits; gated losses; one SGD step
  3. gamma <- q-th percentile of the erroneous cohort's virtual-class score
"""
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from . import augment
from .config import TrainConfig
from .dataflow import SslDataset, TrainingView, batches, batches_per_epoch, build_dataset
from .errors import TrainingAborted
from .ledger import ScoreTracker
from .metrics import DecisionSink, LedgerSink, MetricsSink, PseudoLabelAudit, score_percentiles
from .nncore import (
    LrSchedule, NetworkParams, OptimizerState,
    cosine_lr, forward, init_params, loss_and_grads, sgd_step, softmax,
)
from .rng import make_rng
from .sslloss import (
    decide_masks, erroneous_loss, sum_divisors, supervised_loss, term_weights, total_loss, unlabeled_loss,
)
from .thresholds import ThresholdState, apm_threshold, flexible_thresholds, learning_status
from .types import EpochMetrics, MaskDecision, Method

logger = logging.getLogger(__name__)

Audit = Callable[[Sequence[MaskDecision]], Tuple[Optional[float], Optional[float], int, int]]


@dataclass
class RunResult:
    """Outcome of one training run"""
    params: NetworkParams
    metrics: List[EpochMetrics]
    final_test_error: Optional[float]
    wall_clock_sec: float
    aborted: bool = False
    split_sizes: dict = field(default_factory=dict)


@dataclass
class BatchOutcome:
    """Loss terms and gating of one optimizer step"""
    total: float
    loss_s: float
    loss_u: float
    loss_e: float
    lr: float
    decisions: List[MaskDecision]


def evaluate(params: NetworkParams, features: np.ndarray, labels: np.ndarray, num_classes: int) -> float:
    """
    Error rate with the virtual class excluded from the argmax.

    Args:
        params: Trained network
        features: (m, d) inputs
        labels: (m,) gold task classes
        num_classes: C

    Returns:
        Fraction of misclassified examples
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty split")
    logits, _ = forward(params, features)
    pred = logits[:, :num_classes].argmax(axis=1)
    return float(np.mean(pred != labels))


class SslTrainer:
    """
    Runs one configured method over a training view.

    The trainer never sees gold labels of the unlabeled pool; pseudo-label
    quality is summarized by the ``audit`` callable it is handed.
    """

    def __init__(self,
                 config: TrainConfig,
                 view: TrainingView,
                 audit: Optional[Audit] = None,
                 metrics_sink: Optional[MetricsSink] = None,
                 decision_sink: Optional[DecisionSink] = None,
                 ledger_sink: Optional[LedgerSink] = None,
                 abort_path: Optional[str] = None):
        self.config = config
        self.view = view
        self.audit = audit
        self.metrics_sink = metrics_sink
        self.decision_sink = decision_sink
        self.ledger_sink = ledger_sink
        self.abort_path = abort_path

        self.method = Method(config.method)
        self.num_classes = view.num_classes
        self.virtual_class = view.num_classes
        self.num_outputs = view.num_classes + 1
        n = len(view.features)

        train_ids = np.concatenate([view.labeled_ids, view.unlabeled_ids, view.erroneous_ids])
        self.aug_scale = augment.feature_scale(view.features[train_ids], config.augment)
        self.aug_rng = make_rng(config.seed, "augment")

        layer_sizes = [view.features.shape[1], *config.network.hidden, self.num_outputs]
        self.params = init_params(layer_sizes, make_rng(config.seed, "init"))
        self.opt = OptimizerState.create(self.params)

        self.steps_per_epoch = batches_per_epoch(len(view.unlabeled_ids), config.batch_size, config.nu)
        total = config.total_steps or config.epochs * self.steps_per_epoch
        self.schedule = LrSchedule(total_steps=total, base_lr=config.base_lr)

        self.thresholds = ThresholdState(num_outputs=self.num_outputs, tau=config.tau, q=config.q)
        self.tracker: Optional[ScoreTracker] = None
        if self.method is Method.MARGINMATCH:
            self.tracker = ScoreTracker(config.measure, config.combine, config.delta, n, self.num_outputs)

        # latest weak-view prediction of each unlabeled example, per epoch
        self._prev_conf = np.full(n, np.nan)
        self._prev_pred = np.full(n, -1, dtype=np.int64)
        self._cur_conf = np.full(n, np.nan)
        self._cur_pred = np.full(n, -1, dtype=np.int64)

    def _weak(self, ids: np.ndarray) -> np.ndarray:
        return augment.weak(self.view.features[ids], self.config.augment, self.aug_rng, self.aug_scale)

    def _strong(self, ids: np.ndarray) -> np.ndarray:
        return augment.strong(self.view.features[ids], self.config.augment, self.aug_rng, self.aug_scale)

    def _refresh_flex(self, epoch: int) -> None:
        if epoch == 1:
            alpha = np.zeros(self.num_outputs, dtype=np.int64)
        else:
            seen = self._prev_pred >= 0
            alpha = learning_status(self._prev_conf[seen], self._prev_pred[seen], self.config.tau, self.num_outputs)
        self.thresholds.flex = flexible_thresholds(alpha, self.config.tau)

    def train_step(self, epoch: int, batch_index: int, plan) -> BatchOutcome:
        """Gate, score and take one optimizer step on a batch plan"""
        cfg = self.config
        view = self.view
        lab, unl, err = plan.labeled_ids, plan.unlabeled_ids, plan.erroneous_ids
        use_unlabeled = self.method is not Method.SUPERVISED
        use_erroneous = self.method is Method.MARGINMATCH

        inputs = [self._weak(lab)]
        targets = [view.labeled_targets[lab]]
        decisions: List[MaskDecision] = []
        included = np.zeros(0, dtype=bool)

        if use_unlabeled:
            x_weak = self._weak(unl)
            logits_weak, _ = forward(self.params, x_weak)
            probs_weak = softmax(logits_weak)
            self._cur_conf[unl] = probs_weak.max(axis=1)
            self._cur_pred[unl] = probs_weak.argmax(axis=1)

            gate_values = None
            if self.tracker is not None:
                self.tracker.observe(unl, logits_weak, epoch)
                gate_values = self.tracker.gate_values(unl, probs_weak.argmax(axis=1))

            decisions = decide_masks(self.method, unl, probs_weak, self.thresholds,
                                     self.virtual_class, gate_values)
            included = np.array([d.included for d in decisions], dtype=bool)
            pseudo = np.array([d.pseudo_label for d in decisions], dtype=np.int64)

            # the classic pseudo-label baseline trains on the weak view itself
            inputs.append(x_weak if self.method is Method.PSEUDO_LABEL else self._strong(unl))
            targets.append(pseudo)

        if use_erroneous:
            x_err = self._strong(err)
            logits_err, _ = forward(self.params, x_err)
            self.tracker.observe(err, logits_err, epoch, skip_seen=True)
            inputs.append(x_err)
            targets.append(np.full(len(err), self.virtual_class, dtype=np.int64))

        n_l = len(lab)
        n_u = len(unl) if use_unlabeled else 0
        n_e = len(err) if use_erroneous else 0
        w = term_weights(n_l, cfg.lam, cfg.batch_size, cfg.nu, cfg.normalize_sums)
        weights = np.concatenate([
            np.full(n_l, w.supervised),
            np.where(included, w.unlabeled, 0.0),
            np.full(n_e, w.erroneous),
        ])

        result = loss_and_grads(self.params, np.vstack(inputs), np.concatenate(targets), weights)
        if not math.isfinite(result.total):
            raise TrainingAborted("non-finite loss", epoch=epoch, batch=batch_index)

        probs = result.probs
        loss_s = supervised_loss(probs[:n_l], targets[0])
        loss_u = unlabeled_loss(decisions, probs[n_l:n_l + n_u]) if n_u else 0.0
        loss_e = erroneous_loss(probs[n_l + n_u:], self.virtual_class) if n_e else 0.0

        div_u, div_e = sum_divisors(cfg.batch_size, cfg.nu, cfg.normalize_sums)
        expected = total_loss(loss_s, loss_u / div_u, loss_e / div_e, cfg.lam)
        if not math.isclose(result.total, expected, rel_tol=1e-9, abs_tol=1e-12):
            raise TrainingAborted(f"weighted loss {result.total} disagrees with its terms ({expected})",
                                  epoch=epoch, batch=batch_index)

        lr = cosine_lr(self.opt.step_count, self.schedule)
        try:
            sgd_step(self.params, result.grads, self.opt, lr, cfg.momentum)
        except TrainingAborted as exc:
            raise TrainingAborted(str(exc), epoch=epoch, batch=batch_index) from exc

        if self.decision_sink is not None and decisions:
            self.decision_sink.append_batch(epoch, batch_index, decisions)
        return BatchOutcome(result.total, loss_s, loss_u, loss_e, lr, decisions)

    def _erroneous_scores(self) -> Tuple[np.ndarray, np.ndarray]:
        """(raw scores, gate values) of erroneous examples tracked at least once"""
        err = self.view.erroneous_ids
        err = err[self.tracker.ledger.updates_seen[err] > 0]
        classes = np.full(len(err), self.virtual_class)
        return self.tracker.scores(err, classes), self.tracker.gate_values(err, classes)

    def run_epoch(self, epoch: int) -> EpochMetrics:
        cfg = self.config
        self._refresh_flex(epoch)
        gamma_in_force = self.thresholds.gamma
        self._cur_conf.fill(np.nan)
        self._cur_pred.fill(-1)

        outcomes = [
            self.train_step(epoch, b, plan)
            for b, plan in enumerate(batches(self.view, cfg.batch_size, cfg.nu, cfg.seed, epoch))
        ]
        decisions = [d for o in outcomes for d in o.decisions]

        e_stats = score_percentiles(None)
        if self.tracker is not None:
            raw, gate = self._erroneous_scores()
            e_stats = score_percentiles(raw)
            if len(gate):
                self.thresholds.gamma = apm_threshold(gate, cfg.q)
            else:
                logger.warning(f"Epoch {epoch}: no erroneous example tracked yet, gamma unchanged")
            if self.ledger_sink is not None:
                self._dump_ledger(epoch, decisions, gamma_in_force)

        self._prev_conf, self._cur_conf = self._cur_conf, self._prev_conf
        self._prev_pred, self._cur_pred = self._cur_pred, self._prev_pred

        if self.audit is not None:
            rate, impure, n_included, presentations = self.audit(decisions)
        else:
            rate, impure = None, None
            n_included = sum(1 for d in decisions if d.included)
            presentations = len(decisions)

        view = self.view
        test_error = None
        if len(view.test_ids):
            test_error = evaluate(self.params, view.features[view.test_ids], view.test_targets, self.num_classes)
        train_error = evaluate(self.params, view.features[view.labeled_ids],
                               view.labeled_targets[view.labeled_ids], self.num_classes)

        return EpochMetrics(
            epoch=epoch,
            method=self.method.value,
            seed=cfg.seed,
            lr=outcomes[-1].lr,
            loss_s=float(np.mean([o.loss_s for o in outcomes])),
            loss_u=float(np.mean([o.loss_u for o in outcomes])),
            loss_e=float(np.mean([o.loss_e for o in outcomes])),
            mask_rate=rate,
            impurity=impure,
            included=n_included,
            presentations=presentations,
            train_error=train_error,
            test_error=test_error,
            gamma=gamma_in_force if self.tracker is not None else None,
            **e_stats,
        )

    def _dump_ledger(self, epoch: int, decisions: List[MaskDecision], gamma: float) -> None:
        by_id = {d.example_id: d for d in decisions}
        unl = np.array(sorted(by_id), dtype=np.int64)
        self.ledger_sink.append_rows(epoch, "unlabeled", unl, self.tracker.score_vectors(unl), gamma, by_id)
        err = self.view.erroneous_ids
        self.ledger_sink.append_rows(epoch, "erroneous", err, self.tracker.score_vectors(err), gamma)

    def _abort_requested(self) -> bool:
        return self.abort_path is not None and os.path.exists(self.abort_path)

    def fit(self) -> Tuple[List[EpochMetrics], bool]:
        """Run all epochs; returns (metrics, aborted)"""
        history: List[EpochMetrics] = []
        epochs = tqdm(range(1, self.config.epochs + 1), unit="epoch",
                      desc=f"{self.method.value} s{self.config.seed}",
                      disable=not self.config.show_progress)
        for epoch in epochs:
            row = self.run_epoch(epoch)
            history.append(row)
            if self.metrics_sink is not None:
                self.metrics_sink.append_epoch(row)
            epochs.set_postfix(test_err=row.test_error, mask=row.mask_rate)

            if self._abort_requested():
                logger.warning(f"Abort file found after epoch {epoch}, stopping")
                return history, True
        return history, False


def run(config: TrainConfig,
        dataset: Optional[SslDataset] = None,
        metrics_sink: Optional[MetricsSink] = None,
        decision_sink: Optional[DecisionSink] = None,
        ledger_sink: Optional[LedgerSink] = None,
        abort_path: Optional[str] = None) -> RunResult:
    """
    Train one configured method end to end.

    Args:
        config: Run configuration
        dataset: Pre-built split dataset (built from ``config.dataset`` if None)
        metrics_sink: Receives one EpochMetrics row per epoch
        decision_sink: Receives every MaskDecision
        ledger_sink: Receives per-epoch score dumps (MarginMatch only)
        abort_path: Stop between epochs once this file exists

    Returns:
        RunResult
    """
    if dataset is None:
        dataset = build_dataset(config.dataset, config.seed)
    split_sizes = dataset.split_sizes()
    logger.info(f"Run {config.method.value} seed={config.seed}: splits {split_sizes}")

    trainer = SslTrainer(
        config,
        dataset.training_view(),
        audit=PseudoLabelAudit(dataset.gold_oracle()),
        metrics_sink=metrics_sink,
        decision_sink=decision_sink,
        ledger_sink=ledger_sink,
        abort_path=abort_path,
    )
    start = time.time()
    history, aborted = trainer.fit()
    elapsed = time.time() - start

    final_error = history[-1].test_error if history else None
    logger.info(f"Finished {len(history)} epochs in {elapsed:.1f}s, final test error {final_error}")
    return RunResult(
        params=trainer.params,
        metrics=history,
        final_test_error=final_error,
        wall_clock_sec=elapsed,
        aborted=aborted,
        split_sizes=split_sizes,
    )
