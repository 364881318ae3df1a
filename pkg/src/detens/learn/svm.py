"""Per-class linear SVMs trained with hard-negative mining."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..core import FeatureVector
from ..exceptions import AlignmentError, DegenerateTrainingError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_C = 1e-3
CACHE_CAP = 50_000


def hinge_objective(w, b, X, y, C) -> float:
    """``0.5 * ||w||^2 + C * sum(max(0, 1 - y * (X @ w + b)))``."""
    margins = 1.0 - y * (X @ w + b)
    return 0.5 * float(w @ w) + C * float(np.maximum(margins, 0.0).sum())


def hinge_subgradient(w, b, X, y, C):
    """Gradient of :func:`hinge_objective` wherever no margin equals exactly 1.

    Returns ``(grad_w, grad_b)``.
    """
    active = (1.0 - y * (X @ w + b)) > 0
    coeff = -C * y * active
    return w + X.T @ coeff, float(coeff.sum())


def _as_matrix(vectors, name):
    if isinstance(vectors, np.ndarray):
        arr = vectors
    else:
        vectors = list(vectors)
        if not vectors:
            arr = np.empty((0, 0))
        else:
            arr = np.vstack([v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=np.float64)
                             for v in vectors])
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D array of feature vectors")
    return arr


class LinearSVM(ClassifierMixin, BaseEstimator):
    """L1-loss linear SVM solved by dual coordinate descent.

    The bias is learned as the weight of a constant feature of value
    ``bias_scale``, so it carries a small ``0.5 * (b / bias_scale)**2``
    penalty. Inputs are rescaled so the mean row norm equals
    ``feature_norm`` before solving; the scale is folded back into
    ``coef_``. Training stops when the relative duality gap drops below
    ``tol`` or after ``max_epochs`` passes; the iterate with the lowest
    primal objective seen is kept, so ``objective_history_`` never increases.

    Labels may be ``{-1, +1}`` or ``{0, 1}``.
    """

    def __init__(self, C=DEFAULT_C, bias_scale=10.0, feature_norm=20.0, max_epochs=200, tol=1e-6,
                 random_state=0):
        self.C = C
        self.bias_scale = bias_scale
        self.feature_norm = feature_norm
        self.max_epochs = max_epochs
        self.tol = tol
        self.random_state = random_state

    def _scale(self, X):
        if not self.feature_norm:
            return 1.0
        mean_norm = float(np.linalg.norm(X, axis=1).mean())
        return self.feature_norm / mean_norm if mean_norm > 0 else 1.0

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape[0] != X.shape[0]:
            raise ValidationError(f"{X.shape[0]} samples but {y.shape[0]} labels")
        y = np.where(y > 0, 1.0, -1.0)
        if not (np.any(y > 0) and np.any(y < 0)):
            raise DegenerateTrainingError("SVM training needs at least one positive and one negative")
        if self.C <= 0:
            raise ValidationError(f"C must be positive, got {self.C}")

        scale = self._scale(X)
        Xa = np.hstack([X * scale, np.full((X.shape[0], 1), float(self.bias_scale))])
        n = Xa.shape[0]
        U = float(self.C)
        qdiag = np.einsum("ij,ij->i", Xa, Xa)
        alpha = np.zeros(n)
        w = np.zeros(Xa.shape[1])
        rng = np.random.default_rng(self.random_state)

        best_w, best_obj = w.copy(), hinge_objective(w, 0.0, Xa, y, U)
        history = []
        epoch = 0
        rows = list(Xa)
        for epoch in range(1, self.max_epochs + 1):
            for i in rng.permutation(n):
                xi = rows[i]
                yi = y[i]
                g = yi * float(w @ xi) - 1.0
                a = alpha[i]
                if a == 0.0:
                    pg = min(g, 0.0)
                elif a == U:
                    pg = max(g, 0.0)
                else:
                    pg = g
                if pg != 0.0:
                    new = min(max(a - g / qdiag[i], 0.0), U)
                    if new != a:
                        w += (new - a) * yi * xi
                        alpha[i] = new
            primal = hinge_objective(w, 0.0, Xa, y, U)
            dual = float(alpha.sum()) - 0.5 * float(w @ w)
            if primal < best_obj:
                best_obj, best_w = primal, w.copy()
            history.append(best_obj)
            if primal - dual <= self.tol * max(abs(primal), 1e-300):
                break

        self.coef_ = best_w[:-1] * scale
        self.intercept_ = float(best_w[-1] * self.bias_scale)
        self.feature_scale_ = scale
        self.n_iter_ = epoch
        self.objective_history_ = history
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        return np.where(self.decision_function(X) > 0, 1, -1)

    def objective(self, X, y):
        """Objective of the fitted model on ``(X, y)`` with an unpenalised bias."""
        y = np.where(np.asarray(y).ravel() > 0, 1.0, -1.0)
        return hinge_objective(self.coef_, self.intercept_, np.asarray(X, dtype=np.float64), y, self.C)

    def to_model(self, class_name="", **metadata) -> "SvmModel":
        check_is_fitted(self, "coef_")
        meta = {"iterations": int(self.n_iter_), "feature_scale": float(self.feature_scale_)}
        meta.update(metadata)
        return SvmModel(class_name, self.coef_.copy(), self.intercept_, float(self.C), meta)


@dataclass(frozen=True, eq=False)
class SvmModel:
    """A trained linear scorer ``w . x + b`` for one class."""

    class_name: str
    weights: np.ndarray = field(repr=False)
    bias: float
    c_param: float = DEFAULT_C
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ValidationError(f"SVM for {self.class_name!r} has non-finite parameters")
        if self.c_param <= 0:
            raise ValidationError(f"c_param must be positive, got {self.c_param}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def feature_dim(self):
        return self.weights.size

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.feature_dim:
            raise ValidationError(f"SVM for {self.class_name!r} expects dim {self.feature_dim}, got {X.shape[-1]}")
        return X @ self.weights + self.bias

    def __eq__(self, other):
        if not isinstance(other, SvmModel):
            return NotImplemented
        return (self.class_name == other.class_name and np.array_equal(self.weights, other.weights)
                and self.bias == other.bias and self.c_param == other.c_param)

    __hash__ = None


def _stack_labelled(positives, negatives):
    P = _as_matrix(positives, "positives")
    N = _as_matrix(negatives, "negatives")
    if P.shape[0] == 0 or P.size == 0:
        raise DegenerateTrainingError("SVM training needs at least one positive example")
    if N.shape[0] == 0 or N.size == 0:
        raise DegenerateTrainingError("SVM training needs at least one negative example")
    if P.shape[1] != N.shape[1]:
        raise ValidationError(f"positive dim {P.shape[1]} != negative dim {N.shape[1]}")
    X = np.vstack([P, N])
    y = np.concatenate([np.ones(len(P)), -np.ones(len(N))])
    return X, y


def train_svm(positives, negatives, c_param=DEFAULT_C, class_name="", seed=0, **solver) -> SvmModel:
    """Fit one class's SVM on explicit positive and negative feature sets."""
    X, y = _stack_labelled(positives, negatives)
    svm = LinearSVM(C=c_param, random_state=seed, **solver).fit(X, y)
    return svm.to_model(class_name, mined_rounds=0)


def mine_hard_negatives(model: SvmModel, pool) -> np.ndarray:
    """Indices of pool vectors inside or beyond the margin (score > -1), best first."""
    pool = _as_matrix(pool, "pool")
    if pool.size == 0:
        return np.empty(0, dtype=np.intp)
    scores = model.decision_function(pool)
    hard = np.flatnonzero(scores > -1.0)
    order = np.argsort(-scores[hard], kind="stable")
    return hard[order]


def train_svm_with_mining(positives, negative_source, c_param=DEFAULT_C, rounds=3, class_name="",
                          cache_cap=CACHE_CAP, initial_per_image=None, seed=0, **solver) -> SvmModel:
    """Alternate SVM fitting and hard-negative mining over per-image pools.

    ``negative_source`` is a list of ``(n_i, d)`` arrays, one per image. The
    first cache holds ``initial_per_image`` random negatives from every image
    (all of them when ``None``). Each later round adds every pool vector
    scoring above -1 that is not cached yet; when the cache exceeds
    ``cache_cap`` the lowest-scoring entries are evicted. Training stops
    early once a round finds nothing new.
    """
    if rounds < 1:
        raise ValidationError(f"rounds must be >= 1, got {rounds}")
    P = _as_matrix(positives, "positives")
    pools = [_as_matrix(p, "negative pool") for p in negative_source]
    rng = np.random.default_rng(seed)

    cache = []
    for pi, pool in enumerate(pools):
        n = pool.shape[0] if pool.size else 0
        if initial_per_image is None or n <= initial_per_image:
            picks = range(n)
        else:
            picks = np.sort(rng.choice(n, size=initial_per_image, replace=False))
        cache.extend((pi, int(r)) for r in picks)
    cached = set(cache)

    def cache_matrix():
        if not cache:
            return np.empty((0, P.shape[1] if P.size else 0))
        return np.vstack([pools[pi][r] for pi, r in cache])

    model = None
    for rnd in range(1, rounds + 1):
        model = train_svm(P, cache_matrix(), c_param, class_name, seed, **solver)
        model = replace(model, metadata={**model.metadata, "mined_rounds": rnd, "cache_size": len(cache)})
        if rnd == rounds:
            break
        added = 0
        for pi, pool in enumerate(pools):
            for r in mine_hard_negatives(model, pool):
                key = (pi, int(r))
                if key not in cached:
                    cache.append(key)
                    cached.add(key)
                    added += 1
        log.debug("class %s round %d: %d new hard negatives", class_name, rnd, added)
        if added == 0:
            break
        if len(cache) > cache_cap:
            scores = model.decision_function(cache_matrix())
            keep = np.sort(np.argsort(-scores, kind="stable")[:cache_cap])
            cache = [cache[i] for i in keep]
            cached = set(cache)
    return model


def train_concat_svm(feature_stores, labels, c_param=DEFAULT_C, class_name="", seed=0, **solver) -> SvmModel:
    """Train one SVM on the concatenation of several networks' features.

    ``labels`` maps ``(image_id, box_index)`` keys to +1/-1; every store must
    hold exactly the same key set.
    """
    stores = list(feature_stores)
    if not stores:
        raise ValidationError("need at least one feature store")
    ref = stores[0].keys
    ref_set = set(ref)
    for st in stores[1:]:
        if set(st.keys) != ref_set:
            diff = sorted(ref_set.symmetric_difference(st.keys))
            raise AlignmentError(f"feature stores are not aligned; first mismatched key {diff[0]}")
    pos_keys = [k for k, v in labels.items() if v > 0]
    neg_keys = [k for k, v in labels.items() if v <= 0]
    P = np.hstack([st.rows(pos_keys) for st in stores]) if pos_keys else np.empty((0, 0))
    N = np.hstack([st.rows(neg_keys) for st in stores]) if neg_keys else np.empty((0, 0))
    return train_svm(P, N, c_param, class_name, seed, **solver)
