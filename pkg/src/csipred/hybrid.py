"""Two-stage hybrid predictor: recurrent forecasts feed the additive model.

Stage 1 trains a recurrent model on the training windows. Stage 2 runs it
over every window of every split to produce D-step forecasts. Stage 3 trains
the additive model with those forecasts attached as a known-future regressor,
so it learns to correct the recurrent output.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractViolation
from .nprophet import NpConfig, NpModel, np_predict_batch, np_train
from .recurrent import RecurrentModel, predict_batch, train_recurrent


def _digest(payload) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass
class HybridModel:
    rnn: RecurrentModel
    np_model: NpModel
    provenance: dict

    def to_dict(self):
        return {"format": "csipred-hybrid-v1",
                "rnn": self.rnn.to_dict(),
                "np": self.np_model.to_dict(),
                "provenance": self.provenance}

    @classmethod
    def from_dict(cls, payload):
        if payload.get("format") != "csipred-hybrid-v1":
            raise ContractViolation(
                f"unsupported checkpoint format {payload.get('format')!r}")
        return cls(rnn=RecurrentModel.from_dict(payload["rnn"]),
                   np_model=NpModel.from_dict(payload["np"]),
                   provenance=payload["provenance"])

    def param_count(self):
        return self.rnn.param_count() + self.np_model.param_count()


def build_hybrid(splits, rnn_model: RecurrentModel, np_cfg: NpConfig, seed=0,
                 dataset_digest=""):
    """Train the two stages on identical window splits.

    `splits` maps split names (at least "train") to SupervisedWindowSet; the
    recurrent model and the additive model consume the same windows.
    Returns (HybridModel, rnn loss history, np loss history, regressors dict).
    """
    if "train" not in splits:
        raise ContractViolation("splits must include a 'train' set")
    train = splits["train"]
    if train.d != rnn_model.d or train.D != rnn_model.D:
        raise ContractViolation("window shape does not match recurrent model")
    rnn_history = train_recurrent(rnn_model, train, seed=seed)
    regressors = {name: predict_batch(rnn_model, ws.X)
                  for name, ws in splits.items()}
    np_cfg = replace(np_cfg, d=train.d, D=train.D, regressor_enabled=True)
    np_model, np_history = np_train(train, np_cfg, seed=seed,
                                    regressors=regressors["train"])
    provenance = {
        "seed": seed,
        "dataset_digest": dataset_digest,
        "rnn_config": {"arch": rnn_model.arch, **vars(rnn_model.config)},
        "np_config": {**vars(np_cfg),
                      "seasonalities": [list(s) for s in np_cfg.seasonalities]},
        "rnn_weights_digest": _digest(rnn_model.to_dict()["params"]),
    }
    provenance["digest"] = _digest(provenance)
    return HybridModel(rnn=rnn_model, np_model=np_model,
                       provenance=provenance), rnn_history, np_history, regressors


def hybrid_predict(model: HybridModel, lags, t):
    """Compose the stages: recurrent forecast becomes the regressor input."""
    lags = np.asarray(lags, dtype=float)
    if lags.shape != (model.rnn.d,):
        raise ContractViolation(
            f"expected {model.rnn.d} lags, got shape {lags.shape}")
    rnn_out = predict_batch(model.rnn, lags[None, :])
    out, _ = model.np_model.forward(np.array([t]), lags[None, :], rnn_out)
    return out[0]


def hybrid_predict_batch(model: HybridModel, t_origins, X):
    rnn_out = predict_batch(model.rnn, X)
    return np_predict_batch(model.np_model, t_origins, X, rnn_out)
