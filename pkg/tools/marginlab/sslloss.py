"""
MarginLab - Loss terms and masking rules

Supervised loss is averaged over the labeled batch; the unlabeled and
erroneous losses are plain sums over their batches unless ``normalize_sums``
is set. Pseudo-labels are hard argmax labels of the weak view and carry no
gradient.
"""
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .thresholds import ThresholdState
from .types import MaskDecision, Method


class TermWeights(NamedTuple):
    """Per-term multipliers that turn summed cross-entropies into the total loss"""
    supervised: float
    unlabeled: float
    erroneous: float


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """H(one_hot(target), p) for each row"""
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    with np.errstate(divide="ignore"):
        return -np.log(p[np.arange(len(targets)), targets])


def supervised_loss(weak_probs: np.ndarray, labels: np.ndarray) -> float:
    """(1/B) * sum H(y_i, p(y | weak(x_i)))"""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(labels) == 0:
        raise ValueError("supervised loss needs at least one labeled example")
    return float(cross_entropy(weak_probs, labels).mean())


def mask_fixed(confidence: np.ndarray, tau: float) -> np.ndarray:
    return np.asarray(confidence) > tau


def mask_flex(confidence: np.ndarray, pseudo_label: np.ndarray, flex: np.ndarray) -> np.ndarray:
    return np.asarray(confidence) > np.asarray(flex)[np.asarray(pseudo_label, dtype=np.int64)]


def margin_gates(confidence: np.ndarray,
                 pseudo_label: np.ndarray,
                 flex: np.ndarray,
                 apm: np.ndarray,
                 gamma: float,
                 virtual_class: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(conf_gate, apm_gate, included) of the MarginMatch rule, elementwise"""
    pseudo = np.asarray(pseudo_label, dtype=np.int64)
    conf_gate = mask_flex(confidence, pseudo, flex)
    apm_gate = np.asarray(apm) > gamma
    legal = pseudo != virtual_class if virtual_class is not None else np.ones_like(conf_gate)
    return conf_gate, apm_gate, conf_gate & apm_gate & legal


def mask_margin(confidence: float,
                pseudo_label: int,
                flex: np.ndarray,
                apm: float,
                gamma: float,
                virtual_class: Optional[int] = None,
                example_id: int = -1) -> MaskDecision:
    """Both gates: accumulated trust above gamma and confidence above T_c"""
    conf_gate, apm_gate, included = margin_gates(confidence, pseudo_label, flex, apm, gamma, virtual_class)
    return MaskDecision(
        example_id=example_id,
        pseudo_label=int(pseudo_label),
        confidence=float(confidence),
        conf_gate=bool(conf_gate),
        apm_gate=bool(apm_gate),
        included=bool(included),
    )


def decide_masks(method: Method,
                 ids: np.ndarray,
                 weak_probs: np.ndarray,
                 state: ThresholdState,
                 virtual_class: int,
                 gate_values: Optional[np.ndarray] = None) -> List[MaskDecision]:
    """
    Gate one unlabeled batch.

    Args:
        method: Which masking rule applies
        ids: Example ids of the batch
        weak_probs: (batch, C+1) weak-view class distributions
        state: Current thresholds
        virtual_class: Index of the virtual class, never a legal pseudo-label
        gate_values: Accumulated trust of each example's pseudo-label (MarginMatch only)

    Returns:
        One MaskDecision per example, in batch order
    """
    method = Method(method)
    probs = np.atleast_2d(weak_probs)
    pseudo = probs.argmax(axis=1)
    conf = probs.max(axis=1)

    if method is Method.MARGINMATCH:
        if gate_values is None:
            raise ValueError("MarginMatch gating needs accumulated trust values")
        conf_gate, apm_gate, included = margin_gates(conf, pseudo, state.flex, gate_values,
                                                     state.gamma, virtual_class)
    else:
        if method in (Method.FIXMATCH, Method.PSEUDO_LABEL):
            conf_gate = mask_fixed(conf, state.tau)
        else:
            conf_gate = mask_flex(conf, pseudo, state.flex)
        apm_gate = np.ones(len(pseudo), dtype=bool)
        included = conf_gate & (pseudo != virtual_class)
    return [
        MaskDecision(
            example_id=int(i),
            pseudo_label=int(p),
            confidence=float(c),
            conf_gate=bool(cg),
            apm_gate=bool(ag),
            included=bool(inc),
        )
        for i, p, c, cg, ag, inc in zip(ids, pseudo, conf, conf_gate, apm_gate, included)
    ]


def unlabeled_loss(decisions: List[MaskDecision], strong_probs: np.ndarray) -> float:
    """Sum of H(pseudo_label, p(y | strong(x))) over included examples"""
    if not decisions:
        return 0.0
    mask = np.array([d.included for d in decisions])
    if not mask.any():
        return 0.0
    labels = np.array([d.pseudo_label for d in decisions])
    probs = np.atleast_2d(strong_probs)
    return float(cross_entropy(probs[mask], labels[mask]).sum())


def erroneous_loss(strong_probs: np.ndarray, virtual_class: int) -> float:
    """Sum of H(C+1, p(y | strong(x))) over the erroneous batch"""
    probs = np.atleast_2d(strong_probs)
    if probs.shape[0] == 0:
        raise ValueError("erroneous loss needs at least one example")
    return float(cross_entropy(probs, np.full(probs.shape[0], virtual_class)).sum())


def total_loss(loss_s: float, loss_u: float, loss_e: float, lam: float) -> float:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return loss_s + lam * (loss_u + loss_e)


def sum_divisors(batch_size: int, nu: int, normalize_sums: bool = False) -> Tuple[float, float]:
    """
    Divisors of the summed unlabeled and erroneous losses.

    ``normalize_sums`` divides L_u by nu*B and L_e by B, the configured batch
    sizes, so a ragged final batch keeps the same per-example weight. This
    departs from the summed form and exists for scale experiments.
    """
    if batch_size < 1 or nu < 1:
        raise ValueError("batch_size and nu must be >= 1")
    if not normalize_sums:
        return 1.0, 1.0
    return float(nu * batch_size), float(batch_size)


def term_weights(n_labeled: int,
                 lam: float,
                 batch_size: int,
                 nu: int,
                 normalize_sums: bool = False) -> TermWeights:
    """
    Multipliers for per-term cross-entropies so that their weighted sum is
    total_loss(L_s, L_u / div_u, L_e / div_e, lam), with the divisors from
    sum_divisors.
    """
    div_u, div_e = sum_divisors(batch_size, nu, normalize_sums)
    w_s = 1.0 / n_labeled if n_labeled else 0.0
    return TermWeights(w_s, lam / div_u, lam / div_e)
