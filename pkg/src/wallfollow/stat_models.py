"""Linear discriminant analysis, Gaussian naive Bayes, k-NN and an RBF SVM.

The SVM is trained from first principles: one sequential-minimal-optimization
dual solver per one-vs-rest binary machine.  All models are deterministic
given (data, hyperparameters, seed) and predict with lowest-class-index tie
breaking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import N_CLASSES
from .rng import Xoshiro256StarStar, derive_seed

LDA_RIDGE = 1e-8
GNB_SMOOTHING = 1e-9


def _check_classes_present(labels: np.ndarray, n_classes: int, min_rows: int = 1) -> np.ndarray:
    counts = np.bincount(labels, minlength=n_classes)
    for k in range(n_classes):
        if counts[k] == 0:
            raise ValueError(f"class {k} absent from training data")
        if counts[k] < min_rows:
            raise ValueError(f"class {k} has fewer than {min_rows} training rows")
    return counts


# ---------------------------------------------------------------------------
# Linear discriminant analysis
# ---------------------------------------------------------------------------

@dataclass
class LDAModel:
    means: np.ndarray  # (K, d)
    priors: np.ndarray  # (K,)
    covariance: np.ndarray  # pooled, ridge-regularized (d, d)
    coef: np.ndarray  # (K, d) rows = Sigma^-1 mu_k
    intercept: np.ndarray  # (K,)


def fit_lda(features: np.ndarray, labels: np.ndarray, n_classes: int = N_CLASSES) -> LDAModel:
    """Pooled-covariance LDA with a small ridge before factorization.

    The discriminant is delta_k(x) = x' S^-1 mu_k - mu_k' S^-1 mu_k / 2 + log pi_k
    with S the pooled within-class covariance over n - K degrees of freedom,
    regularized by (1e-8 * trace(S) / d) I.
    """
    counts = _check_classes_present(labels, n_classes, min_rows=2)
    n, d = features.shape
    means = np.stack([features[labels == k].mean(axis=0) for k in range(n_classes)])
    pooled = np.zeros((d, d))
    for k in range(n_classes):
        centered = features[labels == k] - means[k]
        pooled += centered.T @ centered
    pooled /= n - n_classes
    ridge = LDA_RIDGE * np.trace(pooled) / d
    pooled = pooled + ridge * np.eye(d)
    try:
        np.linalg.cholesky(pooled)
    except np.linalg.LinAlgError as exc:
        raise ValueError("pooled covariance not positive definite after ridge") from exc
    priors = counts / n
    # C-contiguous so predictions match a serialization round trip bitwise
    coef = np.ascontiguousarray(np.linalg.solve(pooled, means.T).T)
    intercept = -0.5 * (means * coef).sum(axis=1) + np.log(priors)
    return LDAModel(means=means, priors=priors, covariance=pooled, coef=coef,
                    intercept=intercept)


def lda_decision_scores(model: LDAModel, features: np.ndarray) -> np.ndarray:
    return features @ model.coef.T + model.intercept


def predict_lda(model: LDAModel, features: np.ndarray) -> np.ndarray:
    return lda_decision_scores(model, features).argmax(axis=1)


class LinearDiscriminant:
    def __init__(self, n_classes: int = N_CLASSES):
        self.n_classes = n_classes
        self.model: LDAModel | None = None

    def fit(self, features, labels):
        self.model = fit_lda(features, labels, self.n_classes)
        return self

    def predict(self, features):
        return predict_lda(self.model, features)


# ---------------------------------------------------------------------------
# Gaussian naive Bayes
# ---------------------------------------------------------------------------

@dataclass
class GNBModel:
    priors: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    variances: np.ndarray  # (K, d), already smoothed
    smoothing: float


def fit_gnb(features: np.ndarray, labels: np.ndarray, n_classes: int = N_CLASSES) -> GNBModel:
    """Per-class Gaussian fit; variances smoothed by 1e-9 * max feature variance."""
    counts = _check_classes_present(labels, n_classes)
    n = features.shape[0]
    smoothing = GNB_SMOOTHING * float(features.var(axis=0).max())
    means = np.stack([features[labels == k].mean(axis=0) for k in range(n_classes)])
    variances = np.stack(
        [features[labels == k].var(axis=0) + smoothing for k in range(n_classes)]
    )
    return GNBModel(priors=counts / n, means=means, variances=variances, smoothing=smoothing)


def gnb_log_posteriors(model: GNBModel, features: np.ndarray) -> np.ndarray:
    scores = np.empty((features.shape[0], model.means.shape[0]))
    for k in range(model.means.shape[0]):
        var = model.variances[k]
        log_density = -0.5 * (
            np.log(2.0 * np.pi * var) + (features - model.means[k]) ** 2 / var
        ).sum(axis=1)
        scores[:, k] = np.log(model.priors[k]) + log_density
    return scores


def predict_gnb(model: GNBModel, features: np.ndarray) -> np.ndarray:
    return gnb_log_posteriors(model, features).argmax(axis=1)


class GaussianNaiveBayes:
    def __init__(self, n_classes: int = N_CLASSES):
        self.n_classes = n_classes
        self.model: GNBModel | None = None

    def fit(self, features, labels):
        self.model = fit_gnb(features, labels, self.n_classes)
        return self

    def predict(self, features):
        return predict_gnb(self.model, features)


# ---------------------------------------------------------------------------
# k-nearest neighbours
# ---------------------------------------------------------------------------

@dataclass
class KNNModel:
    train_features: np.ndarray
    train_labels: np.ndarray
    k: int


def fit_knn(features: np.ndarray, labels: np.ndarray, k: int = 5) -> KNNModel:
    if not 1 <= k <= features.shape[0]:
        raise ValueError("k must be in 1..n_train")
    return KNNModel(train_features=features, train_labels=labels, k=k)


def predict_knn_batch(model: KNNModel, queries: np.ndarray) -> np.ndarray:
    """Exact k-NN with majority vote.

    Distance ties resolve to the lower training-row index (stable sort);
    vote ties resolve to the lowest class index.
    """
    n, d = model.train_features.shape
    m = queries.shape[0]
    out = np.empty(m, dtype=np.int64)
    chunk = max(1, int(8_000_000 // max(1, n * d)))
    for start in range(0, m, chunk):
        q = queries[start:start + chunk]
        diff = q[:, None, :] - model.train_features[None, :, :]
        d2 = (diff * diff).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, : model.k]
        votes = np.zeros((q.shape[0], N_CLASSES), dtype=np.int64)
        rows = np.repeat(np.arange(q.shape[0]), model.k)
        np.add.at(votes, (rows, model.train_labels[nearest].reshape(-1)), 1)
        out[start:start + chunk] = votes.argmax(axis=1)
    return out


def predict_knn(model: KNNModel, query: np.ndarray) -> int:
    return int(predict_knn_batch(model, query[None, :])[0])


class KNearestNeighbours:
    def __init__(self, k: int = 5):
        self.k = k
        self.model: KNNModel | None = None

    def fit(self, features, labels):
        self.model = fit_knn(features, labels, self.k)
        return self

    def predict(self, features):
        return predict_knn_batch(self.model, features)


# ---------------------------------------------------------------------------
# SVM via sequential minimal optimization
# ---------------------------------------------------------------------------

@dataclass
class SMOResult:
    alpha: np.ndarray
    bias: float
    converged: bool
    passes: int


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||a_i - b_j||^2), computed chunk-wise."""
    out = np.empty((a.shape[0], b.shape[0]))
    chunk = max(1, int(8_000_000 // max(1, b.shape[0] * a.shape[1])))
    for start in range(0, a.shape[0], chunk):
        diff = a[start:start + chunk, None, :] - b[None, :, :]
        d2 = (diff * diff).sum(axis=2)
        out[start:start + chunk] = np.exp(-gamma * d2)
    return out


def rbf_kernel_symmetric(x: np.ndarray, gamma: float) -> np.ndarray:
    k = rbf_kernel(x, x, gamma)
    k = (k + k.T) / 2.0
    np.fill_diagonal(k, 1.0)
    return k


def scale_gamma(features: np.ndarray) -> float:
    """1 / (d * mean per-feature variance), the 'scale'-style kernel width."""
    mean_var = max(float(features.var(axis=0).mean()), 1e-12)
    return 1.0 / (features.shape[1] * mean_var)


def smo_solve(
    y: np.ndarray,
    kernel: np.ndarray,
    c: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 2000,
    seed: int = 0,
) -> SMOResult:
    """Solve the binary SVM dual by SMO (Platt-style pair selection).

    ``y`` holds labels in {-1, +1} and ``kernel`` the full Gram matrix.
    The outer loop alternates sweeps over all examples and over non-bound
    examples until a full sweep changes nothing, i.e. every example meets
    the KKT conditions within ``tol``; the fallback second-choice scans are
    started at positions drawn from the given seed.
    """
    y = np.asarray(y, dtype=np.float64)
    if not ((y == 1).any() and (y == -1).any()):
        raise ValueError("need at least one example of each sign")
    n = y.shape[0]
    rng = Xoshiro256StarStar(seed)
    alpha = np.zeros(n)
    bias = 0.0
    errors = -y.copy()  # f(x) - y with f = 0 initially

    def take_step(i1: int, i2: int) -> bool:
        nonlocal bias
        if i1 == i2:
            return False
        a1_old, a2_old = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if s > 0:
            low, high = max(0.0, a1_old + a2_old - c), min(c, a1_old + a2_old)
        else:
            low, high = max(0.0, a2_old - a1_old), min(c, c + a2_old - a1_old)
        if low == high:
            return False
        k11, k12, k22 = kernel[i1, i1], kernel[i1, i2], kernel[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2 = a2_old + y2 * (e1 - e2) / eta
            a2 = min(max(a2, low), high)
        else:
            # degenerate curvature: evaluate the dual objective at both ends
            f1 = y1 * (e1 + bias) - a1_old * k11 - s * a2_old * k12
            f2 = y2 * (e2 + bias) - s * a1_old * k12 - a2_old * k22
            l1 = a1_old + s * (a2_old - low)
            h1 = a1_old + s * (a2_old - high)
            obj_low = (
                l1 * f1 + low * f2 + 0.5 * l1 * l1 * k11 + 0.5 * low * low * k22
                + s * low * l1 * k12
            )
            obj_high = (
                h1 * f1 + high * f2 + 0.5 * h1 * h1 * k11 + 0.5 * high * high * k22
                + s * high * h1 * k12
            )
            if obj_low < obj_high - 1e-12:
                a2 = low
            elif obj_low > obj_high + 1e-12:
                a2 = high
            else:
                return False
        if abs(a2 - a2_old) < 1e-12 * (a2 + a2_old + 1e-12):
            return False
        a1 = a1_old + s * (a2_old - a2)
        a1 = min(max(a1, 0.0), c)
        d1, d2 = y1 * (a1 - a1_old), y2 * (a2 - a2_old)
        b1 = bias - e1 - d1 * k11 - d2 * k12
        b2 = bias - e2 - d1 * k12 - d2 * k22
        if 0.0 < a1 < c:
            new_bias = b1
        elif 0.0 < a2 < c:
            new_bias = b2
        else:
            new_bias = (b1 + b2) / 2.0
        errors[:] += d1 * kernel[i1] + d2 * kernel[i2] + (new_bias - bias)
        alpha[i1], alpha[i2] = a1, a2
        bias = new_bias
        return True

    def examine(i2: int) -> bool:
        y2, a2, e2 = y[i2], alpha[i2], errors[i2]
        r2 = e2 * y2
        if not ((r2 < -tol and a2 < c) or (r2 > tol and a2 > 0)):
            return False
        non_bound = np.nonzero((alpha > 0) & (alpha < c))[0]
        if non_bound.size > 1:
            i1 = int(non_bound[np.argmax(np.abs(errors[non_bound] - e2))])
            if take_step(i1, i2):
                return True
        if non_bound.size:
            offset = rng.below(non_bound.size)
            for j in range(non_bound.size):
                if take_step(int(non_bound[(offset + j) % non_bound.size]), i2):
                    return True
        offset = rng.below(n)
        for j in range(n):
            if take_step((offset + j) % n, i2):
                return True
        return False

    converged = False
    examine_all = True
    passes = 0
    while passes < max_passes:
        changed = 0
        if examine_all:
            for i in range(n):
                changed += examine(i)
        else:
            for i in np.nonzero((alpha > 0) & (alpha < c))[0]:
                changed += examine(int(i))
        passes += 1
        if examine_all:
            if changed == 0:
                converged = True
                break
            examine_all = False
        elif changed == 0:
            examine_all = True
    return SMOResult(alpha=alpha, bias=bias, converged=converged, passes=passes)


@dataclass
class BinaryMachine:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for retained vectors
    bias: float
    converged: bool


@dataclass
class SVMModel:
    machines: list[BinaryMachine]  # one-vs-rest, class order 0..K-1
    gamma: float
    c: float


def fit_svm(
    features: np.ndarray,
    labels: np.ndarray,
    c: float = 1.0,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_passes: int = 2000,
    seed: int = 0,
    n_classes: int = N_CLASSES,
) -> SVMModel:
    """One RBF binary machine per class (one-vs-rest), trained by SMO.

    The Gram matrix is computed once and shared by the four solvers.
    Non-convergence is recorded on the machine, not raised.
    """
    _check_classes_present(labels, n_classes)
    if gamma is None:
        gamma = scale_gamma(features)
    kernel = rbf_kernel_symmetric(features, gamma)
    machines = []
    for k in range(n_classes):
        yk = np.where(labels == k, 1.0, -1.0)
        result = smo_solve(yk, kernel, c, tol, max_passes, derive_seed(seed, k))
        support = np.nonzero(result.alpha > 0)[0]
        machines.append(
            BinaryMachine(
                support_vectors=features[support].copy(),
                dual_coef=result.alpha[support] * yk[support],
                bias=result.bias,
                converged=result.converged,
            )
        )
    return SVMModel(machines=machines, gamma=gamma, c=c)


def svm_decision_values(model: SVMModel, features: np.ndarray) -> np.ndarray:
    values = np.empty((features.shape[0], len(model.machines)))
    for k, machine in enumerate(model.machines):
        if machine.support_vectors.shape[0]:
            cross = rbf_kernel(features, machine.support_vectors, model.gamma)
            values[:, k] = cross @ machine.dual_coef + machine.bias
        else:
            values[:, k] = machine.bias
    return values


def predict_svm(model: SVMModel, features: np.ndarray) -> np.ndarray:
    return svm_decision_values(model, features).argmax(axis=1)


class SupportVectorMachine:
    def __init__(self, c: float = 1.0, gamma: float | None = None, tol: float = 1e-3,
                 max_passes: int = 2000, seed: int = 0, n_classes: int = N_CLASSES):
        self.c = c
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes
        self.seed = seed
        self.n_classes = n_classes
        self.model: SVMModel | None = None

    def fit(self, features, labels):
        self.model = fit_svm(features, labels, self.c, self.gamma, self.tol,
                             self.max_passes, self.seed, self.n_classes)
        return self

    def predict(self, features):
        return predict_svm(self.model, features)

    @property
    def converged(self) -> bool:
        return all(m.converged for m in self.model.machines)
