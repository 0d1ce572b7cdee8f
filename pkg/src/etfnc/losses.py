"""Cross-entropy and dot-regression losses with exact gradients.

Both losses act on a feature h in R^d and a classifier matrix W in
R^{d x K} whose k-th column scores class k. The negative CE gradient
splits into a "pull" term toward the own-class column and a "push" term
away from the other columns; the DR loss keeps only an (exact) pull.
Gradients here are per-sample (no 1/N); batch objectives average.
"""

from dataclasses import dataclass

import numpy as np

from .batches import FeatureBatch
from .etf import FixedClassifier


@dataclass(frozen=True)
class PullPush:
    """Additive split of a negative gradient: pull + push == -gradient."""

    pull: np.ndarray
    push: np.ndarray

    def neg_gradient(self) -> np.ndarray:
        return self.pull + self.push


def softmax_probs(h: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Class probabilities p_k proportional to exp(h . w_k).

    Computed with max-logit subtraction so large logits cannot overflow.
    """
    with np.errstate(invalid="ignore"):
        logits = np.asarray(h, dtype=float) @ np.asarray(W, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits in softmax")
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _batch_probs(features: np.ndarray, W: np.ndarray) -> np.ndarray:
    logits = features @ W
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits in softmax")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def ce_loss(h: np.ndarray, label: int, W: np.ndarray) -> float:
    """-log p_label(h), evaluated through log-sum-exp."""
    logits = np.asarray(h, dtype=float) @ np.asarray(W, dtype=float)
    m = logits.max()
    return float(np.log(np.exp(logits - m).sum()) + m - logits[label])


def decompose_pull_push_feature(h: np.ndarray, label: int, W: np.ndarray) -> PullPush:
    """Split -dL_CE/dh into pull = (1-p_c) w_c and push = -sum_{k!=c} p_k w_k."""
    W = np.asarray(W, dtype=float)
    p = softmax_probs(h, W)
    pull = (1.0 - p[label]) * W[:, label]
    others = np.arange(W.shape[1]) != label
    push = -(W[:, others] @ p[others])
    return PullPush(pull=pull, push=push)


def ce_grad_feature(h: np.ndarray, label: int, W: np.ndarray) -> np.ndarray:
    """dL_CE/dh = -(1-p_c) w_c + sum_{k!=c} p_k w_k."""
    return -decompose_pull_push_feature(h, label, W).neg_gradient()


def _classifier_pull_push(batch: FeatureBatch, W: np.ndarray, k: int) -> PullPush:
    if batch.size == 0:
        raise ValueError("empty batch")
    if not 0 <= k < batch.num_classes:
        raise ValueError(f"class index {k} out of range")
    W = np.asarray(W, dtype=float)
    P = _batch_probs(batch.features, W)
    own = batch.labels == k
    pull = (1.0 - P[own, k]) @ batch.features[own] if own.any() else np.zeros(batch.dim)
    # accumulate the push in class-major order for determinism
    push = np.zeros(batch.dim)
    for c in range(batch.num_classes):
        if c == k:
            continue
        rows = batch.labels == c
        if rows.any():
            push -= P[rows, k] @ batch.features[rows]
    return PullPush(pull=pull, push=push)


def ce_grad_classifier(batch: FeatureBatch, W: np.ndarray, k: int) -> np.ndarray:
    """dL_CE/dw_k over a batch (sum over samples, no 1/N)."""
    return -_classifier_pull_push(batch, W, k).neg_gradient()


def decompose_pull_push_classifier(batch: FeatureBatch, W: np.ndarray, k: int) -> PullPush:
    """Pull from own-class features, push from all other-class features."""
    return _classifier_pull_push(batch, W, k)


def _dr_target(classifier: FixedClassifier, c: int, e_h: float) -> float:
    # per-class length in both target and normalizer (class-weighted variant)
    return float(classifier.lengths[c] * np.sqrt(e_h))


def dr_loss(h: np.ndarray, classifier: FixedClassifier, c: int, e_h: float) -> float:
    """(w_c . h - sqrt(E_{w_c} E_H))^2 / (2 sqrt(E_{w_c} E_H))."""
    t = _dr_target(classifier, c, e_h)
    dot = float(np.asarray(h, dtype=float) @ classifier.scaled_columns[:, c])
    return (dot - t) ** 2 / (2.0 * t)


def dr_grad(h: np.ndarray, classifier: FixedClassifier, c: int, e_h: float) -> np.ndarray:
    """Exact gradient of dr_loss: ((w_c . h)/t - 1) w_c with t = sqrt(E_{w_c} E_H).

    On the sphere |h|^2 = E_H with uniform lengths this equals the cosine
    form -(1 - cos(h, w_c)) w_c; off the sphere the quadratic form is the
    true gradient and is what we return.
    """
    t = _dr_target(classifier, c, e_h)
    w = classifier.scaled_columns[:, c]
    dot = float(np.asarray(h, dtype=float) @ w)
    return (dot / t - 1.0) * w


def ce_batch_loss(features: np.ndarray, labels: np.ndarray, W: np.ndarray) -> float:
    """Mean CE loss over a batch (the 1/N objective)."""
    logits = features @ W
    m = logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - m).sum(axis=1)) + m[:, 0]
    return float(np.mean(lse - logits[np.arange(len(labels)), labels]))


def dr_batch_loss(
    features: np.ndarray, labels: np.ndarray, scaled_columns: np.ndarray, targets: np.ndarray
) -> float:
    """Mean DR loss; targets[k] = sqrt(E_{w_k} E_H)."""
    dots = np.einsum("ij,ji->i", features, scaled_columns[:, labels])
    t = targets[labels]
    return float(np.mean((dots - t) ** 2 / (2.0 * t)))
