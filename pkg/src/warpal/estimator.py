"""Scikit-learn style front door to the warped-GP machinery.

``WarpedGPRegressor`` bundles hyperparameter fitting, optional warp
training, and posterior prediction behind the usual fit/predict pair.
Predictions always come from the plain-input surrogate; the trained warp
only shapes ``propose``, which suggests the next input to evaluate.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import acquisition, gp
from .seeding import child_rng, child_seed_int
from .warp_training import WarpTrainConfig, train_warp
from .warps import make_warp


class WarpedGPRegressor(BaseEstimator, RegressorMixin):
    """GP regression on the unit cube with an optional acquisition warp.

    Parameters mirror the training defaults: ``warp_kind`` one of
    identity / kumaraswamy / crqs, ``objective`` self_supervised or mll,
    and the warp optimizer's step and probe counts.
    """

    def __init__(self, warp_kind="identity", objective="self_supervised",
                 steps=400, n_probes=1024, n_bins=8, n_layers=4,
                 standardize=True, random_state=0):
        self.warp_kind = warp_kind
        self.objective = objective
        self.steps = steps
        self.n_probes = n_probes
        self.n_bins = n_bins
        self.n_layers = n_layers
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        dataset = gp.Dataset(X, y)
        self.n_features_in_ = dataset.n_dims
        self.hyperparams_ = gp.fit_hyperparams(
            dataset, standardize=self.standardize).hyperparams
        self.warp_ = make_warp(self.warp_kind, dataset.n_dims,
                               n_bins=self.n_bins, n_layers=self.n_layers,
                               random_state=child_rng(self.random_state,
                                                      "warp_init"))
        self.warp_flag_ = ""
        if self.warp_.n_params:
            cfg = WarpTrainConfig(objective=self.objective, steps=self.steps,
                                  n_probes=self.n_probes)
            result = train_warp(dataset, self.hyperparams_, self.warp_, cfg,
                                probe_seed=child_seed_int(self.random_state,
                                                          "probes"))
            self.warp_ = result.warp
            self.warp_flag_ = result.flag
        self.state_ = gp.condition(dataset, self.hyperparams_,
                                   standardize=self.standardize)
        self.warped_state_ = gp.condition(dataset, self.hyperparams_,
                                          warp=self.warp_,
                                          standardize=self.standardize)
        return self

    def predict(self, X, return_std=False):
        check_is_fitted(self, "state_")
        mean, var = gp.posterior_batch(self.state_, X)
        if return_std:
            return mean, np.sqrt(var)
        return mean

    def propose(self, config=None):
        """Next input suggested by information gain on the warped GP."""
        check_is_fitted(self, "warped_state_")
        rng = child_rng(self.random_state, "acq")
        return acquisition.propose(self.warped_state_, rng, config).x
