"""Click-through-rate metrics and the split evaluation harness.

AUC is rank-based (Mann-Whitney) with ties resolved by average ranks,
which makes it equal -- exactly, not approximately -- to the quadratic
count of correctly ordered positive/negative pairs with ties worth one
half.  ACC thresholds scores at a fixed cut.

Scoring a split is read-only over frozen parameters; examples whose user
has no train history (hence no ripple set) are skipped and counted, not
silently dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass
class MetricReport:
    split: str
    auc: float
    acc: float
    n_examples: int
    skipped: int = 0
    seed: int = 0

    CSV_HEADER = "split,auc,acc,n,skipped,seed"

    def to_csv_row(self):
        return f"{self.split},{self.auc:.6f},{self.acc:.6f},{self.n_examples},{self.skipped},{self.seed}"


def auc(scores, labels):
    """Probability a random positive outranks a random negative; ties count half.

    Computed from average ranks, so the result coincides exactly with
    the pairwise count (#pos>neg + 0.5 * #ties) / (#pos * #neg).  Raises
    when either class is absent, since the quantity is undefined there.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores, method="average")
    numerator = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(numerator / (n_pos * n_neg))


def acc(scores, labels, threshold=0.5):
    """Fraction of thresholded predictions (score >= threshold) matching labels."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if len(scores) == 0:
        raise ValueError("ACC of an empty score list is undefined")
    predictions = (scores >= threshold).astype(labels.dtype)
    return float(np.mean(predictions == labels))


def evaluate(params, records, kg, ripple_sets, hp, item_entities, seed=0, split="test", batch_size=4096):
    """Score every (user, item) of a split with the full forward pass.

    ``records`` is an (n, 3) array of (user, item, label).  Users absent
    from ``ripple_sets`` are skipped and counted in the report.  The
    neighbor trees drawn while scoring derive from ``seed``, so the
    report is reproducible.
    """
    from . import model  # local import; model imports this module for fit()

    records = np.asarray(records)
    if len(records) == 0:
        raise ValueError(f"cannot evaluate an empty {split} split")
    if hp.user_table:
        keep = np.ones(len(records), dtype=bool)
    else:
        keep = np.array([int(u) in ripple_sets for u in records[:, 0]])
    skipped = int((~keep).sum())
    kept = records[keep]
    if len(kept) == 0:
        raise ValueError(f"{split} split has no scorable examples (all users lack train history)")

    scores = np.empty(len(kept), dtype=np.float64)
    rng = np.random.default_rng([seed, 60221023])  # fixed stream tag for scoring draws
    for start in range(0, len(kept), batch_size):
        batch = kept[start:start + batch_size]
        scores[start:start + len(batch)] = model.score_batch(
            params, batch, kg, ripple_sets, hp, item_entities, rng,
        )
    return MetricReport(
        split=split,
        auc=auc(scores, kept[:, 2]),
        acc=acc(scores, kept[:, 2], threshold=hp.acc_threshold),
        n_examples=int(len(kept)),
        skipped=skipped,
        seed=seed,
    )
