"""Experiment orchestration: config -> data -> per-feature models -> metrics.

Each (antenna, real/imag) stream trains its own predictor; results are
recombined into complex channel vectors for evaluation. All randomness flows
from the config seeds, so a rerun with the same config is bit-identical.
"""
from __future__ import annotations

import numpy as np

from . import datapipe, synthchan
from .config import config_digest, parse_seasonalities
from .errors import ConfigError, ContractViolation
from .evalx import (MetricReport, aggregate_nmse, assemble_complex,
                    cosine_similarity, nmse)
from .hybrid import HybridModel, build_hybrid, hybrid_predict_batch
from .nprophet import NpConfig, NpModel, np_predict_batch, np_train
from .recurrent import RecurrentModel, TrainConfig, predict_batch, train_recurrent

CHECKPOINT_FORMAT = "csipred-experiment-v1"


def get_series(cfg) -> datapipe.CsiSeries:
    if cfg["dataset"] == "synth":
        fading = synthchan.FadingConfig(
            carrier_hz=cfg["carrier_hz"],
            speed_mps=cfg["speed_kmph"] / 3.6,
            sample_interval=cfg["sample_interval"],
            path_count=cfg["path_count"],
            antenna_count=cfg["antenna_count"],
            sample_count=cfg["sample_count"],
            seed=cfg["data_seed"])
        return synthchan.generate_fading(fading)
    return datapipe.load_csi(cfg["dataset"], sample_interval=cfg["sample_interval"])


def prepare(cfg, series=None):
    if series is None:
        series = get_series(cfg)
    fractions = (cfg["train_frac"], cfg["val_frac"], cfg["test_frac"])
    return datapipe.prepare_dataset(series, cfg["d"], cfg["D"],
                                    fractions=fractions,
                                    stride=cfg["window_stride"])


def recurrent_config(cfg) -> TrainConfig:
    return TrainConfig(learning_rate=cfg["rnn_learning_rate"],
                       epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                       huber_beta=cfg["huber_beta"], dropout=cfg["dropout"])


def np_config(cfg, regressor=False) -> NpConfig:
    return NpConfig(
        d=cfg["d"], D=cfg["D"],
        learning_rate=cfg["np_learning_rate"], epochs=cfg["epochs"],
        batch_size=cfg["batch_size"], huber_beta=cfg["huber_beta"],
        n_changepoints=cfg["n_changepoints"],
        changepoint_range=cfg["changepoint_range"],
        discontinuous_growth=cfg["discontinuous_growth"],
        trend_enabled=cfg["trend_enabled"],
        seasonality_enabled=cfg["seasonality_enabled"],
        seasonalities=parse_seasonalities(cfg["seasonalities"]),
        samples_per_day=cfg["samples_per_day"],
        ar_enabled=cfg["ar_enabled"], ar_layers=cfg["np_layers"],
        ar_hidden=cfg["np_hidden"], ar_linear=cfg["ar_linear"],
        regressor_enabled=regressor)


def _feature_seed(seed, index):
    return seed * 10007 + index


def train_feature(cfg, kind, prepared: datapipe.PreparedFeature, seed,
                  dataset_digest=""):
    """Train one model of the given kind on one feature stream."""
    windows = prepared.windows
    if kind in ("rnn", "lstm", "bilstm"):
        model = RecurrentModel(kind, cfg["d"], cfg["D"],
                               hidden_size=cfg["rnn_hidden"],
                               layers=cfg["rnn_layers"],
                               bilstm_combine=cfg["bilstm_combine"],
                               config=recurrent_config(cfg), seed=seed)
        history = train_recurrent(model, windows["train"], seed=seed)
        return model, {"train": history}
    if kind == "np":
        model, history = np_train(windows["train"], np_config(cfg), seed=seed)
        return model, {"train": history}
    if kind == "hybrid":
        source = RecurrentModel(cfg["hybrid_source"], cfg["d"], cfg["D"],
                                hidden_size=cfg["rnn_hidden"],
                                layers=cfg["rnn_layers"],
                                bilstm_combine=cfg["bilstm_combine"],
                                config=recurrent_config(cfg), seed=seed)
        model, rnn_hist, np_hist, _ = build_hybrid(
            windows, source, np_config(cfg, regressor=True), seed=seed,
            dataset_digest=dataset_digest)
        return model, {"stage1": rnn_hist, "stage2": np_hist}
    raise ConfigError(f"unknown model kind {kind!r}")


def predict_windows(kind, model, ws: datapipe.SupervisedWindowSet):
    """Normalized-domain predictions for every window in the set."""
    if kind in ("rnn", "lstm", "bilstm"):
        return predict_batch(model, ws.X)
    if kind == "np":
        return np_predict_batch(model, ws.t, ws.X)
    if kind == "hybrid":
        return hybrid_predict_batch(model, ws.t, ws.X)
    raise ConfigError(f"unknown model kind {kind!r}")


def train_experiment(cfg, series=None):
    """Train the configured model on every feature stream.

    Returns (checkpoint dict, per-feature loss histories).
    """
    prepared, digest = prepare(cfg, series)
    kind = cfg["model"]
    features = {}
    histories = {}
    for idx, pf in enumerate(prepared):
        seed = _feature_seed(cfg["seed"], idx)
        model, history = train_feature(cfg, kind, pf, seed,
                                       dataset_digest=digest)
        features[pf.feature.feature_id] = {
            "model": model.to_dict(),
            "scaler": {"shift": pf.scaler.shift,
                       "half_range": pf.scaler.half_range},
        }
        histories[pf.feature.feature_id] = history
    checkpoint = {"format": CHECKPOINT_FORMAT, "kind": kind,
                  "config": dict(cfg), "dataset_digest": digest,
                  "features": features}
    return checkpoint, histories


def _model_from_payload(kind, payload):
    if kind in ("rnn", "lstm", "bilstm"):
        return RecurrentModel.from_dict(payload)
    if kind == "np":
        return NpModel.from_dict(payload)
    if kind == "hybrid":
        return HybridModel.from_dict(payload)
    raise ConfigError(f"unknown model kind {kind!r}")


def evaluate_checkpoint(checkpoint, split="test", series=None):
    """Per-antenna and aggregate NMSE / cosine similarity on one split.

    Predictions are de-normalized before real/imag recombination so metrics
    are computed on original-scale complex values.
    """
    if checkpoint.get("format") != CHECKPOINT_FORMAT:
        raise ContractViolation("not an experiment checkpoint")
    cfg = checkpoint["config"]
    kind = checkpoint["kind"]
    prepared, digest = prepare(cfg, series)
    if digest != checkpoint["dataset_digest"]:
        raise ContractViolation(
            "dataset digest mismatch: checkpoint was trained on different windows")
    by_feature = {}
    for pf in prepared:
        feat_id = pf.feature.feature_id
        if feat_id not in checkpoint["features"]:
            raise ContractViolation(f"checkpoint lacks feature {feat_id}")
        entry = checkpoint["features"][feat_id]
        model = _model_from_payload(kind, entry["model"])
        scaler = datapipe.Scaler(**entry["scaler"])
        ws = pf.windows[split]
        pred = scaler.inverse(predict_windows(kind, model, ws))
        truth = scaler.inverse(ws.Y)
        by_feature[feat_id] = (pred, truth, len(ws))
    reports = []
    parts = []
    cos_parts = []
    antennas = sorted({f.split("_")[0] for f in by_feature})
    track = cfg["dataset"] if cfg["dataset"] != "synth" else f"synth-{cfg['data_seed']}"
    digest16 = config_digest(cfg)
    for ant in antennas:
        pred_c = assemble_complex(by_feature[f"{ant}_re"][0],
                                  by_feature[f"{ant}_im"][0])
        truth_c = assemble_complex(by_feature[f"{ant}_re"][1],
                                   by_feature[f"{ant}_im"][1])
        count = by_feature[f"{ant}_re"][2]
        v_nmse = nmse(pred_c, truth_c)
        v_cos = cosine_similarity(pred_c, truth_c)
        reports.append(MetricReport(model_id=kind, track=track, seed=cfg["seed"],
                                    nmse=v_nmse, cosine=v_cos,
                                    window_count=count, config_digest=digest16,
                                    antenna=ant))
        parts.append((v_nmse, count))
        cos_parts.append((v_cos, count))
    reports.append(MetricReport(model_id=kind, track=track, seed=cfg["seed"],
                                nmse=aggregate_nmse(parts),
                                cosine=aggregate_nmse(cos_parts),
                                window_count=sum(c for _, c in parts),
                                config_digest=digest16, antenna="all"))
    return reports


def predictions_table(checkpoint, split="test", series=None):
    """Rows (feature, origin t, horizon step, prediction, truth), de-normalized."""
    cfg = checkpoint["config"]
    kind = checkpoint["kind"]
    prepared, _ = prepare(cfg, series)
    rows = []
    for pf in prepared:
        feat_id = pf.feature.feature_id
        entry = checkpoint["features"][feat_id]
        model = _model_from_payload(kind, entry["model"])
        scaler = datapipe.Scaler(**entry["scaler"])
        ws = pf.windows[split]
        pred = scaler.inverse(predict_windows(kind, model, ws))
        truth = scaler.inverse(ws.Y)
        for i, t in enumerate(ws.t):
            for h in range(ws.D):
                rows.append((feat_id, int(t), h + 1,
                             float(pred[i, h]), float(truth[i, h])))
    return rows
