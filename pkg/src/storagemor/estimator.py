"""Scikit-learn style wrapper around balanced truncation."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .baltrunc import balance_truncate, hankel_svd, minimal_order
from .gramians import gramians
from .lti import LtiRealization

__all__ = ["BalancedTruncation"]


class BalancedTruncation(TransformerMixin, BaseEstimator):
    """Balanced truncation of an LTI realization.

    ``fit`` takes an :class:`LtiRealization` (or anything with a
    ``to_realization`` method) instead of a data matrix.  ``transform``
    maps full states (rows) to reduced coordinates, ``inverse_transform``
    lifts them back.

    Parameters
    ----------
    n_components : int, optional
        Reduced order.  Ignored when ``alpha`` is given.
    alpha : float, optional
        Threshold on the selection criterion; the order becomes the
        smallest one reaching it.
    rank_tol : float, optional
        Relative eigenvalue cut for the Gramian factors.
    """

    def __init__(self, n_components=None, alpha=None, rank_tol=None):
        self.n_components = n_components
        self.alpha = alpha
        self.rank_tol = rank_tol

    def fit(self, X, y=None):
        r = X.to_realization() if hasattr(X, "to_realization") else X
        if not isinstance(r, LtiRealization):
            raise TypeError("fit expects an LtiRealization")
        gp = gramians(r, self.rank_tol)
        svd = hankel_svd(gp)
        if self.alpha is not None:
            ell = minimal_order(svd.sigma, self.alpha)
        elif self.n_components is not None:
            ell = min(int(self.n_components), svd.n0)
        else:
            ell = svd.n0
        red = balance_truncate(r, gp, ell, svd)
        self.gramians_ = gp
        self.hankel_singular_values_ = svd.sigma
        self.n_components_ = ell
        self.n_features_in_ = r.n
        self.T_plus_ = red.T_plus
        self.T_minus_ = red.T_minus
        self.reduced_ = red.reduced
        return self

    def transform(self, X):
        check_is_fitted(self, "T_plus_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} state entries, got {X.shape[1]}")
        return X @ self.T_plus_.T

    def inverse_transform(self, X):
        check_is_fitted(self, "T_minus_")
        X = check_array(X)
        if X.shape[1] != self.n_components_:
            raise ValueError(f"expected {self.n_components_} reduced entries, got {X.shape[1]}")
        return X @ self.T_minus_.T
