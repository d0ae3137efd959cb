"""scikit-learn style wrappers around the quantizer, the abstraction and the
synthesized controller."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .abstraction import AbstractionParams, abstract_linear, abstract_nonlinear_sampled
from .game import refine_control, solve_reach, solve_safe
from .lattice import Lattice, quantize
from .sysmodel import Box, LinearSystem


class LatticeQuantizer(TransformerMixin, BaseEstimator):
    """Map continuous states to the nearest point of the ``eta`` lattice.

    ``fit`` records the bounding box of the data (or ``region`` if given) and
    clamps later queries to it.
    """

    def __init__(self, eta=0.1, region=None):
        self.eta = eta
        self.region = region

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        if self.region is not None:
            self.region_ = Box.from_dict(self.region)
        else:
            self.region_ = Box(X.min(axis=0), X.max(axis=0))
        self.lattice_ = Lattice(self.eta, X.shape[1], clip=self.region_)
        return self

    def transform(self, X):
        check_is_fitted(self, "lattice_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return quantize(self.lattice_, X)


class SymbolicAbstraction(BaseEstimator):
    """Fit builds the symbolic model of ``system``; ``transform`` maps states to ids.

    ``X`` passed to ``fit`` is ignored; the model depends only on the
    system and the parameters.
    """

    def __init__(self, system=None, epsilon=0.5, tau=1.0, eta=0.1, mu=0.1, mu_label=None,
                 state_region=None, mode="strict", control_labels=None,
                 disturbance_labels=None, mu_u=None, mu_v=None):
        self.system = system
        self.epsilon = epsilon
        self.tau = tau
        self.eta = eta
        self.mu = mu
        self.mu_label = mu_label
        self.state_region = state_region
        self.mode = mode
        self.control_labels = control_labels
        self.disturbance_labels = disturbance_labels
        self.mu_u = mu_u
        self.mu_v = mu_v

    def _params(self):
        region = self.state_region if self.state_region is not None else self.system.region
        return AbstractionParams(self.epsilon, self.tau, self.eta, self.mu,
                                 Box.from_dict(region), self.mu_label, self.mode)

    def fit(self, X=None, y=None):
        if self.system is None:
            raise ValueError("system is required")
        params = self._params()
        if isinstance(self.system, LinearSystem):
            self.model_ = abstract_linear(self.system, params, self.control_labels,
                                          self.disturbance_labels)
        else:
            if self.mu_u is None or self.mu_v is None:
                raise ValueError("mu_u and mu_v are required for nonlinear systems")
            self.model_ = abstract_nonlinear_sampled(self.system, params, self.mu_u, self.mu_v)
        self.n_features_in_ = self.model_.ts.n
        return self

    def transform(self, X):
        """Abstract-state ids (object array) of the rows of ``X``."""
        check_is_fitted(self, "model_")
        X = check_array(X)
        return np.array([self.model_.state_of(x) for x in X], dtype=object)


class RobustController(BaseEstimator):
    """Reach or safety controller on a fitted ``SymbolicAbstraction``.

    ``predict`` returns the first winning label per state (``None`` outside
    the winning set); ``predict_input`` refines it to a piecewise-constant
    input for linear systems.
    """

    def __init__(self, abstraction=None, target=(), objective="reach", horizon=1, segments=10):
        self.abstraction = abstraction
        self.target = target
        self.objective = objective
        self.horizon = horizon
        self.segments = segments

    def fit(self, X=None, y=None):
        if self.abstraction is None:
            raise ValueError("abstraction is required")
        if not hasattr(self.abstraction, "model_"):
            self.abstraction.fit()
        T = self.abstraction.model_.ts
        if self.objective == "reach":
            self.strategy_ = solve_reach(T, self.target, self.horizon)
        elif self.objective == "safe":
            self.strategy_ = solve_safe(T, self.target)
        else:
            raise ValueError(f"unknown objective {self.objective!r}")
        self.n_features_in_ = T.n
        return self

    def predict(self, X):
        check_is_fitted(self, "strategy_")
        ids = self.abstraction.transform(X)
        return np.array([self.strategy_.choose(q) if q in self.strategy_.labels else None
                         for q in ids], dtype=object)

    def predict_input(self, X):
        check_is_fitted(self, "strategy_")
        model = self.abstraction.model_
        system = self.abstraction.system
        out = []
        for a in self.predict(X):
            if a is None:
                out.append(None)
            else:
                out.append(refine_control(system, model.control_points[a], model.params.tau,
                                          self.segments).values)
        return out
