"""Scikit-learn style front door for the peeling detector."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ingest import partition_roles
from .metric import MetricParams
from .peeling import detect
from .tensors import CoupledTensors, FiberKey, ModeSchema, build_coupled
from .validation import as_transfer_records, check_alpha


class DenseFlowDetector(BaseEstimator):
    """Detects the densest balanced two-step transfer flow in a transaction log.

    The estimator models transactions as a coupled sparse tensor pair
    (source -> middle and middle -> destination) and greedily peels it
    down to the block that maximizes the flow-anomalousness score:
    throughput through middle accounts minus an ``alpha``-weighted
    penalty on money they retain, per account/fiber retained.

    Parameters
    ----------
    alpha : float, default=0.8
        Imbalance cost rate in [0, 1]. 0 rewards raw throughput; 1
        penalizes any in/out imbalance at full weight.
    role_ratio : float, default=2.0
        Threshold used to partition accounts into source, middle, and
        destination candidates when ``fit`` is not given roles.
    attribute_names : tuple of str, default=("time_bin",)
        Names of the attribute modes each input row carries (the first
        is conventionally the time bin).
    keep_peel_order : bool, default=False
        Record the full removal order on the result (diagnostics only).

    Attributes
    ----------
    result_ : DetectionResult
        Best block with both score variants and iteration count.
    block_ : FlowBlock
        Retained source accounts, destination accounts, and fibers.
    score_ : float
        Anomalousness of the detected block (the peeling objective).
    tensors_ : CoupledTensors
        The coupled pair the detector ran on.

    Examples
    --------
    >>> rows = [("a", "m", 0, 100.0), ("m", "b", 0, 100.0)]
    >>> det = DenseFlowDetector().fit(rows, roles=({"a"}, {"m"}, {"b"}))
    >>> sorted(det.block_.x_set)
    ['a']
    """

    def __init__(self, alpha=0.8, role_ratio=2.0, attribute_names=("time_bin",),
                 keep_peel_order=False):
        self.alpha = alpha
        self.role_ratio = role_ratio
        self.attribute_names = attribute_names
        self.keep_peel_order = keep_peel_order

    def fit(self, X, y=None, *, roles=None):
        """Detect the best flow block in ``X``.

        ``X`` may be a CoupledTensors, a sequence of TransferRecord, a
        sequence of (src, dst, *attrs, amount) rows, or a dataframe with
        columns ``src``, ``dst``, the attribute names, and ``amount``.
        ``roles`` optionally pins the (x_ids, y_ids, z_ids) candidate
        sets; otherwise accounts are partitioned by ``role_ratio``.
        """
        params = MetricParams(check_alpha(self.alpha))
        if isinstance(X, CoupledTensors):
            tensors = X
        else:
            names = tuple(self.attribute_names)
            records = as_transfer_records(X, len(names), names)
            if roles is None:
                if float(self.role_ratio) <= 1.0:
                    raise ValueError("role_ratio must exceed 1")
                roles = partition_roles(records, float(self.role_ratio))
            x_ids, y_ids, z_ids = roles
            tensors = build_coupled(records, x_ids, y_ids, z_ids, ModeSchema(names))
        self.tensors_ = tensors
        self.result_ = detect(tensors, params,
                              keep_peel_order=bool(self.keep_peel_order))
        self.block_ = self.result_.block
        self.score_ = self.result_.score_algorithmic
        return self

    def predict(self, X):
        """Label rows: -1 for transfers inside the detected flow, else 1."""
        check_is_fitted(self, "block_")
        names = tuple(self.attribute_names)
        records = as_transfer_records(X, len(names), names)
        block = self.block_
        labels = np.ones(len(records), dtype=int)
        for i, rec in enumerate(records):
            key = FiberKey(rec.dst, rec.attrs)
            if rec.src in block.x_set and key in block.fiber_set:
                labels[i] = -1
                continue
            key = FiberKey(rec.src, rec.attrs)
            if rec.dst in block.z_set and key in block.fiber_set:
                labels[i] = -1
        return labels

    def fit_predict(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).predict(X)

    def score(self, X=None, y=None):
        """Anomalousness of the fitted block (inputs are ignored)."""
        check_is_fitted(self, "score_")
        return self.score_

    def account_sets(self):
        """Detected accounts per role: {"x": ..., "y": ..., "z": ...}."""
        check_is_fitted(self, "block_")
        return self.block_.account_sets()
