"""Versioned, lossless serialization for every trained model.

Models are stored as a single JSON document: ``{"format": "wallfollow-model",
"version": 1, "kind": ..., "payload": ...}``.  Floats survive the round trip
bit-for-bit (shortest-repr encoding), so reloaded models predict identically
to the originals.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import neural, stat_models, tree_models

FORMAT_NAME = "wallfollow-model"
FORMAT_VERSION = 1


def _tree_to_dict(node: tree_models.TreeNode) -> dict:
    if node.is_leaf:
        return {"counts": [int(c) for c in node.counts]}
    return {
        "f": node.feature,
        "t": node.threshold,
        "l": _tree_to_dict(node.left),
        "r": _tree_to_dict(node.right),
    }


def _tree_from_dict(data: dict) -> tree_models.TreeNode:
    if "counts" in data:
        return tree_models.TreeNode(counts=np.array(data["counts"], dtype=np.int64))
    return tree_models.TreeNode(
        feature=data["f"],
        threshold=data["t"],
        left=_tree_from_dict(data["l"]),
        right=_tree_from_dict(data["r"]),
    )


def _reg_tree_to_dict(node: tree_models.RegressionNode) -> dict:
    if node.feature is None:
        return {"v": node.value}
    return {
        "f": node.feature,
        "t": node.threshold,
        "l": _reg_tree_to_dict(node.left),
        "r": _reg_tree_to_dict(node.right),
    }


def _reg_tree_from_dict(data: dict) -> tree_models.RegressionNode:
    if "v" in data:
        return tree_models.RegressionNode(value=data["v"])
    return tree_models.RegressionNode(
        feature=data["f"],
        threshold=data["t"],
        left=_reg_tree_from_dict(data["l"]),
        right=_reg_tree_from_dict(data["r"]),
    )


def _layer_to_dict(layer) -> dict:
    if isinstance(layer, neural.SharedInputLayer):
        return {"type": "shared", "d": layer.d, "activation": layer.activation,
                "w": layer.w.tolist(), "b": layer.b.tolist()}
    if isinstance(layer, neural.Dense):
        return {"type": "dense", "n_in": layer.n_in, "n_out": layer.n_out,
                "weight": layer.weight.tolist(), "bias": layer.bias.tolist()}
    if isinstance(layer, neural.BatchNorm):
        return {"type": "batchnorm", "units": layer.units, "momentum": layer.momentum,
                "eps": layer.eps, "gamma": layer.gamma.tolist(),
                "beta": layer.beta.tolist(),
                "running_mean": layer.running_mean.tolist(),
                "running_var": layer.running_var.tolist()}
    if isinstance(layer, neural.Relu):
        return {"type": "relu"}
    if isinstance(layer, neural.Dropout):
        return {"type": "dropout", "rate": layer.rate}
    raise TypeError(f"cannot serialize layer {type(layer).__name__}")


def _layer_from_dict(data: dict):
    kind = data["type"]
    if kind == "shared":
        layer = neural.SharedInputLayer(data["d"], data["activation"])
        layer.w = np.array(data["w"])
        layer.b = np.array(data["b"])
        return layer
    if kind == "dense":
        layer = neural.Dense(data["n_in"], data["n_out"])
        layer.weight = np.array(data["weight"])
        layer.bias = np.array(data["bias"])
        return layer
    if kind == "batchnorm":
        layer = neural.BatchNorm(data["units"], data["momentum"], data["eps"])
        layer.gamma = np.array(data["gamma"])
        layer.beta = np.array(data["beta"])
        layer.running_mean = np.array(data["running_mean"])
        layer.running_var = np.array(data["running_var"])
        return layer
    if kind == "relu":
        return neural.Relu()
    if kind == "dropout":
        return neural.Dropout(data["rate"])
    raise ValueError(f"unknown layer type {kind!r}")


def encode_model(model) -> dict:
    if isinstance(model, tree_models.DecisionTree):
        kind, payload = "decision_tree", {"root": _tree_to_dict(model.root)}
    elif isinstance(model, tree_models.RandomForest):
        kind, payload = "random_forest", {
            "trees": [_tree_to_dict(t) for t in model.model.trees],
            "seed": model.model.seed,
            "features_per_split": model.model.features_per_split,
        }
    elif isinstance(model, tree_models.GradientBoost):
        kind, payload = "gradient_boost", {
            "init_scores": model.model.init_scores.tolist(),
            "learning_rate": model.model.learning_rate,
            "stages": [[_reg_tree_to_dict(t) for t in stage] for stage in model.model.stages],
        }
    elif isinstance(model, stat_models.LinearDiscriminant):
        m = model.model
        kind, payload = "lda", {
            "means": m.means.tolist(), "priors": m.priors.tolist(),
            "covariance": m.covariance.tolist(), "coef": m.coef.tolist(),
            "intercept": m.intercept.tolist(),
        }
    elif isinstance(model, stat_models.GaussianNaiveBayes):
        m = model.model
        kind, payload = "gnb", {
            "priors": m.priors.tolist(), "means": m.means.tolist(),
            "variances": m.variances.tolist(), "smoothing": m.smoothing,
        }
    elif isinstance(model, stat_models.KNearestNeighbours):
        m = model.model
        kind, payload = "knn", {
            "train_features": m.train_features.tolist(),
            "train_labels": m.train_labels.tolist(), "k": m.k,
        }
    elif isinstance(model, stat_models.SupportVectorMachine):
        m = model.model
        kind, payload = "svm", {
            "gamma": m.gamma, "c": m.c,
            "machines": [
                {"support_vectors": b.support_vectors.tolist(),
                 "dual_coef": b.dual_coef.tolist(), "bias": b.bias,
                 "converged": b.converged}
                for b in m.machines
            ],
        }
    elif isinstance(model, neural.Network):
        kind, payload = "network", {
            "name": model.name,
            "layers": [_layer_to_dict(layer) for layer in model.layers],
        }
    else:
        raise TypeError(f"cannot serialize model of type {type(model).__name__}")
    return {"format": FORMAT_NAME, "version": FORMAT_VERSION, "kind": kind,
            "payload": payload}


def decode_model(document: dict):
    if document.get("format") != FORMAT_NAME:
        raise ValueError("not a wallfollow model document")
    if document.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {document.get('version')}")
    kind = document["kind"]
    payload = document["payload"]
    if kind == "decision_tree":
        model = tree_models.DecisionTree()
        model.root = _tree_from_dict(payload["root"])
        return model
    if kind == "random_forest":
        model = tree_models.RandomForest()
        model.model = tree_models.ForestModel(
            trees=[_tree_from_dict(t) for t in payload["trees"]],
            seed=payload["seed"],
            features_per_split=payload["features_per_split"],
        )
        return model
    if kind == "gradient_boost":
        model = tree_models.GradientBoost()
        model.model = tree_models.BoostModel(
            init_scores=np.array(payload["init_scores"]),
            stages=[tuple(_reg_tree_from_dict(t) for t in stage)
                    for stage in payload["stages"]],
            learning_rate=payload["learning_rate"],
        )
        return model
    if kind == "lda":
        model = stat_models.LinearDiscriminant()
        model.model = stat_models.LDAModel(
            means=np.array(payload["means"]), priors=np.array(payload["priors"]),
            covariance=np.array(payload["covariance"]), coef=np.array(payload["coef"]),
            intercept=np.array(payload["intercept"]),
        )
        return model
    if kind == "gnb":
        model = stat_models.GaussianNaiveBayes()
        model.model = stat_models.GNBModel(
            priors=np.array(payload["priors"]), means=np.array(payload["means"]),
            variances=np.array(payload["variances"]), smoothing=payload["smoothing"],
        )
        return model
    if kind == "knn":
        model = stat_models.KNearestNeighbours(payload["k"])
        model.model = stat_models.KNNModel(
            train_features=np.array(payload["train_features"]),
            train_labels=np.array(payload["train_labels"], dtype=np.int64),
            k=payload["k"],
        )
        return model
    if kind == "svm":
        model = stat_models.SupportVectorMachine(payload["c"], payload["gamma"])
        model.model = stat_models.SVMModel(
            machines=[
                stat_models.BinaryMachine(
                    support_vectors=np.array(m["support_vectors"]).reshape(
                        len(m["support_vectors"]), -1),
                    dual_coef=np.array(m["dual_coef"]),
                    bias=m["bias"],
                    converged=m["converged"],
                )
                for m in payload["machines"]
            ],
            gamma=payload["gamma"],
            c=payload["c"],
        )
        return model
    if kind == "network":
        return neural.Network([_layer_from_dict(d) for d in payload["layers"]],
                              name=payload["name"])
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(
        json.dumps(encode_model(model), allow_nan=False), encoding="utf-8"
    )


def load_model(path):
    return decode_model(json.loads(Path(path).read_text(encoding="utf-8")))
