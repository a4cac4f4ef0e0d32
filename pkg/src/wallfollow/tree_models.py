"""CART decision trees plus the two tree ensembles (random forest, boosting).

All trees split on ``value <= threshold`` (left) vs ``> threshold`` (right),
with candidate thresholds at midpoints between consecutive distinct sorted
values.  Ties are broken by lowest feature index, then lowest threshold, so
fits are fully deterministic.  An impure node may take a zero-gain split:
greedy Gini gain alone cannot separate XOR-style layouts, and the trees are
expected to drive training error to zero whenever the data is consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import CLASS_NAMES, N_CLASSES
from .rng import Xoshiro256StarStar, derive_seed


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (class counts)."""

    feature: int | None = None
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    counts: np.ndarray | None = None  # leaf class-count vector

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class RegressionNode:
    """Regression tree node; leaves carry a real-valued score."""

    feature: int | None = None
    threshold: float = 0.0
    left: "RegressionNode | None" = None
    right: "RegressionNode | None" = None
    value: float = 0.0
    # training-row indices that landed in this leaf; used once to set values
    member_rows: np.ndarray | None = None


@dataclass
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2

    def __post_init__(self):
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")


@dataclass
class ForestModel:
    trees: list[TreeNode]
    seed: int
    features_per_split: int


@dataclass
class BoostModel:
    init_scores: np.ndarray  # per-class log prior, length 4
    stages: list[tuple[RegressionNode, ...]]  # one regression tree per class
    learning_rate: float
    params: TreeParams = field(default_factory=lambda: TreeParams(max_depth=3))


def gini_impurity(counts) -> float:
    """1 - sum(p_i^2) for a class-count vector; 0 for pure, 0.75 for uniform."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini_impurity needs at least one sample")
    p = counts / total
    return float(1.0 - (p * p).sum())


def _class_matrix(labels: np.ndarray) -> np.ndarray:
    return (labels[:, None] == np.arange(N_CLASSES)[None, :]).astype(np.float64)


def best_split(features: np.ndarray, labels: np.ndarray, candidate_features):
    """Best (feature, threshold, impurity decrease) over the candidates.

    Returns None when the node is pure or no threshold separates the rows.
    Zero-gain splits of impure nodes are returned (see module docstring).
    """
    n = labels.shape[0]
    if n < 2:
        return None
    totals = np.bincount(labels, minlength=N_CLASSES).astype(np.float64)
    parent = 1.0 - ((totals / n) ** 2).sum()
    if parent == 0.0:
        return None
    onehot = _class_matrix(labels)
    best = None  # (decrease, feature, threshold)
    for f in sorted(candidate_features):
        col = features[:, f]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        cuts = np.nonzero(sv[:-1] != sv[1:])[0]
        if cuts.size == 0:
            continue
        cum = np.cumsum(onehot[order], axis=0)
        left = cum[cuts]
        right = totals[None, :] - left
        n_left = (cuts + 1).astype(np.float64)
        n_right = n - n_left
        gini_left = 1.0 - ((left / n_left[:, None]) ** 2).sum(axis=1)
        gini_right = 1.0 - ((right / n_right[:, None]) ** 2).sum(axis=1)
        decrease = parent - (n_left * gini_left + n_right * gini_right) / n
        i = int(np.argmax(decrease))  # first max -> lowest threshold
        if best is None or decrease[i] > best[0]:
            threshold = (sv[cuts[i]] + sv[cuts[i] + 1]) / 2.0
            best = (float(decrease[i]), f, float(threshold))
    if best is None:
        return None
    return best[1], best[2], best[0]


def fit_decision_tree(
    features: np.ndarray,
    labels: np.ndarray,
    params: TreeParams | None = None,
    seed: int = 0,
    features_per_split: int | None = None,
    allowed_features=None,
) -> TreeNode:
    """Grow a CART classification tree.

    ``features_per_split`` resamples that many candidate features at every
    split (random-forest mode, drawn from ``seed``); by default every feature
    is a candidate.  ``allowed_features`` restricts the candidate pool.
    """
    if features.shape[0] == 0:
        raise ValueError("empty training set")
    params = params or TreeParams()
    d = features.shape[1]
    pool = list(range(d)) if allowed_features is None else sorted(allowed_features)
    rng = Xoshiro256StarStar(seed)

    def grow(rows: np.ndarray, depth: int) -> TreeNode:
        y = labels[rows]
        counts = np.bincount(y, minlength=N_CLASSES)
        if (
            (counts > 0).sum() == 1
            or rows.shape[0] < params.min_samples_split
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            return TreeNode(counts=counts)
        if features_per_split is not None and features_per_split < len(pool):
            picks = rng.sample_indices(len(pool), features_per_split)
            candidates = sorted(pool[i] for i in picks)
        else:
            candidates = pool
        found = best_split(features[rows], y, candidates)
        if found is None:
            return TreeNode(counts=counts)
        f, threshold, _ = found
        mask = features[rows, f] <= threshold
        return TreeNode(
            feature=f,
            threshold=threshold,
            left=grow(rows[mask], depth + 1),
            right=grow(rows[~mask], depth + 1),
        )

    return grow(np.arange(features.shape[0]), 0)


def predict_tree(root: TreeNode, features: np.ndarray) -> np.ndarray:
    """Route rows to leaves; argmax of leaf counts, lowest class on ties."""
    out = np.empty(features.shape[0], dtype=np.int64)

    def walk(node: TreeNode, rows: np.ndarray) -> None:
        if rows.size == 0:
            return
        if node.is_leaf:
            out[rows] = int(np.argmax(node.counts))
            return
        mask = features[rows, node.feature] <= node.threshold
        walk(node.left, rows[mask])
        walk(node.right, rows[~mask])

    walk(root, np.arange(features.shape[0]))
    return out


class DecisionTree:
    """Uniform fit/predict wrapper around ``fit_decision_tree``."""

    def __init__(self, params: TreeParams | None = None, seed: int = 0, allowed_features=None):
        self.params = params or TreeParams()
        self.seed = seed
        self.allowed_features = allowed_features
        self.root: TreeNode | None = None

    def fit(self, features, labels):
        self.root = fit_decision_tree(
            features, labels, self.params, self.seed, allowed_features=self.allowed_features
        )
        return self

    def predict(self, features):
        return predict_tree(self.root, features)


def default_features_per_split(d: int) -> int:
    return int(np.ceil(np.sqrt(d)))


def fit_random_forest(
    features: np.ndarray,
    labels: np.ndarray,
    n_trees: int = 100,
    params: TreeParams | None = None,
    seed: int = 0,
    bootstrap: bool = True,
    features_per_split: int | None = None,
) -> ForestModel:
    """Bagged CART trees with per-split feature resampling (default ceil(sqrt(d)))."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if features.shape[0] == 0:
        raise ValueError("empty training set")
    n, d = features.shape
    m = default_features_per_split(d) if features_per_split is None else features_per_split
    if not 1 <= m <= d:
        raise ValueError("features_per_split must be in 1..d")
    trees = []
    for t in range(n_trees):
        tree_seed = derive_seed(seed, t)
        if bootstrap:
            rng = Xoshiro256StarStar(derive_seed(tree_seed, 0))
            rows = np.array([rng.below(n) for _ in range(n)], dtype=np.int64)
        else:
            rows = np.arange(n)
        trees.append(
            fit_decision_tree(
                features[rows],
                labels[rows],
                params,
                seed=derive_seed(tree_seed, 1),
                features_per_split=m if m < d else None,
            )
        )
    return ForestModel(trees=trees, seed=seed, features_per_split=m)


def predict_forest(model: ForestModel, features: np.ndarray) -> np.ndarray:
    """Majority vote over trees; lowest class index on ties."""
    votes = np.zeros((features.shape[0], N_CLASSES), dtype=np.int64)
    for tree in model.trees:
        pred = predict_tree(tree, features)
        votes[np.arange(features.shape[0]), pred] += 1
    return votes.argmax(axis=1)


class RandomForest:
    def __init__(self, n_trees: int = 100, params: TreeParams | None = None, seed: int = 0,
                 bootstrap: bool = True, features_per_split: int | None = None):
        self.n_trees = n_trees
        self.params = params
        self.seed = seed
        self.bootstrap = bootstrap
        self.features_per_split = features_per_split
        self.model: ForestModel | None = None

    def fit(self, features, labels):
        self.model = fit_random_forest(
            features, labels, self.n_trees, self.params, self.seed,
            self.bootstrap, self.features_per_split,
        )
        return self

    def predict(self, features):
        return predict_forest(self.model, features)


# ---------------------------------------------------------------------------
# Regression trees for gradient boosting
# ---------------------------------------------------------------------------

def _fit_regression_tree(
    features: np.ndarray, target: np.ndarray, max_depth: int, min_samples_split: int = 2
) -> RegressionNode:
    d = features.shape[1]

    def grow(rows: np.ndarray, depth: int) -> RegressionNode:
        t = target[rows]
        if (
            depth >= max_depth
            or rows.shape[0] < min_samples_split
            or np.ptp(t) == 0.0
        ):
            return RegressionNode(member_rows=rows)
        best = None  # (child_sse, feature, threshold)
        for f in range(d):
            col = features[rows, f]
            order = np.argsort(col, kind="stable")
            sv = col[order]
            cuts = np.nonzero(sv[:-1] != sv[1:])[0]
            if cuts.size == 0:
                continue
            ts = t[order]
            cum = np.cumsum(ts)
            cum2 = np.cumsum(ts * ts)
            n_left = (cuts + 1).astype(np.float64)
            n_right = rows.shape[0] - n_left
            sse_left = cum2[cuts] - cum[cuts] ** 2 / n_left
            sse_right = (cum2[-1] - cum2[cuts]) - (cum[-1] - cum[cuts]) ** 2 / n_right
            child = sse_left + sse_right
            i = int(np.argmin(child))  # first min -> lowest threshold
            if best is None or child[i] < best[0]:
                best = (float(child[i]), f, float((sv[cuts[i]] + sv[cuts[i] + 1]) / 2.0))
        if best is None:
            return RegressionNode(member_rows=rows)
        _, f, threshold = best
        mask = features[rows, f] <= threshold
        return RegressionNode(
            feature=f,
            threshold=threshold,
            left=grow(rows[mask], depth + 1),
            right=grow(rows[~mask], depth + 1),
        )

    return grow(np.arange(features.shape[0]), 0)


def _leaves(node: RegressionNode):
    if node.feature is None:
        yield node
    else:
        yield from _leaves(node.left)
        yield from _leaves(node.right)


def predict_regression_tree(root: RegressionNode, features: np.ndarray) -> np.ndarray:
    out = np.empty(features.shape[0], dtype=np.float64)

    def walk(node: RegressionNode, rows: np.ndarray) -> None:
        if rows.size == 0:
            return
        if node.feature is None:
            out[rows] = node.value
            return
        mask = features[rows, node.feature] <= node.threshold
        walk(node.left, rows[mask])
        walk(node.right, rows[~mask])

    walk(root, np.arange(features.shape[0]))
    return out


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def fit_gradient_boost(
    features: np.ndarray,
    labels: np.ndarray,
    n_stages: int = 100,
    learning_rate: float = 0.1,
    max_depth: int = 3,
    seed: int = 0,
) -> BoostModel:
    """Multiclass gradient boosting with softmax (multinomial deviance) loss.

    Stage m fits one depth-limited regression tree per class to the
    pseudo-residuals ``one_hot - softmax(F)`` evaluated at the scores before
    the stage, then sets each leaf by the one-step Newton estimate
    ``(K-1)/K * sum(r) / sum(p (1 - p))``.
    """
    if learning_rate <= 0:
        raise ValueError("learning rate must be positive")
    if n_stages < 0:
        raise ValueError("stage count must be >= 0")
    n = features.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    del seed  # no subsampling; fits are deterministic
    counts = np.bincount(labels, minlength=N_CLASSES).astype(np.float64)
    priors = np.maximum(counts / n, 1e-12)
    init_scores = np.log(priors)
    onehot = _class_matrix(labels)
    scores = np.tile(init_scores, (n, 1))
    stages: list[tuple[RegressionNode, ...]] = []
    for _ in range(n_stages):
        probs = _softmax_rows(scores)
        residual = onehot - probs
        stage = []
        for k in range(N_CLASSES):
            tree = _fit_regression_tree(features, residual[:, k], max_depth)
            for leaf in _leaves(tree):
                rows = leaf.member_rows
                numerator = residual[rows, k].sum() * (N_CLASSES - 1) / N_CLASSES
                p = probs[rows, k]
                denominator = (p * (1.0 - p)).sum()
                leaf.value = 0.0 if abs(denominator) < 1e-150 else float(numerator / denominator)
                scores[rows, k] += learning_rate * leaf.value
                leaf.member_rows = None
            stage.append(tree)
        stages.append(tuple(stage))
    return BoostModel(
        init_scores=init_scores,
        stages=stages,
        learning_rate=learning_rate,
        params=TreeParams(max_depth=max_depth),
    )


def boost_raw_scores(model: BoostModel, features: np.ndarray) -> np.ndarray:
    scores = np.tile(model.init_scores, (features.shape[0], 1))
    for stage in model.stages:
        for k, tree in enumerate(stage):
            scores[:, k] += model.learning_rate * predict_regression_tree(tree, features)
    return scores


def predict_boost_proba(model: BoostModel, features: np.ndarray) -> np.ndarray:
    return _softmax_rows(boost_raw_scores(model, features))


def predict_boost(model: BoostModel, features: np.ndarray) -> np.ndarray:
    return predict_boost_proba(model, features).argmax(axis=1)


class GradientBoost:
    def __init__(self, n_stages: int = 100, learning_rate: float = 0.1,
                 max_depth: int = 3, seed: int = 0):
        self.n_stages = n_stages
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.seed = seed
        self.model: BoostModel | None = None

    def fit(self, features, labels):
        self.model = fit_gradient_boost(
            features, labels, self.n_stages, self.learning_rate, self.max_depth, self.seed
        )
        return self

    def predict(self, features):
        return predict_boost(self.model, features)

    def predict_proba(self, features):
        return predict_boost_proba(self.model, features)


def export_tree_text(root: TreeNode, feature_names: list[str]) -> str:
    """DOT digraph of a classification tree; node ids follow preorder."""
    lines = ["digraph tree {", "  node [shape=box];"]
    counter = 0

    def emit(node: TreeNode) -> int:
        nonlocal counter
        node_id = counter
        counter += 1
        if node.is_leaf:
            cls = CLASS_NAMES[int(np.argmax(node.counts))]
            counts = ", ".join(str(int(c)) for c in node.counts)
            lines.append(f'  n{node_id} [label="{cls}\\ncounts=[{counts}]"];')
        else:
            lines.append(
                f'  n{node_id} [label="{feature_names[node.feature]} <= {node.threshold!r}"];'
            )
            left_id = emit(node.left)
            lines.append(f"  n{node_id} -> n{left_id};")
            right_id = emit(node.right)
            lines.append(f"  n{node_id} -> n{right_id};")
        return node_id

    emit(root)
    lines.append("}")
    return "\n".join(lines) + "\n"
