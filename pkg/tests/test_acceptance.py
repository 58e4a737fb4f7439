"""Acceptance gate: one test per release criterion.

Run with ``pytest -v tests/test_acceptance.py`` to get one pass/fail line per
criterion. The published reference results for the private over-the-air
dataset are not reproducible here (criterion 1); every other criterion is a
property-based substitute computed on synthetic data.
"""
import hashlib
import json
import statistics
import time

import numpy as np
import pytest

from csipred import experiment, synthchan
from csipred.config import resolve_config
from csipred.datapipe import (CsiSeries, SupervisedWindowSet, clean,
                              complex_to_features, fit_scaler, make_windows,
                              prepare_dataset, split_chronological)
from csipred.evalx import cosine_similarity, nmse, to_db
from csipred.numcore import finite_diff_grad, huber_grad, huber_loss
from csipred.nprophet import (NpConfig, NpModel, TrendParams, ar_net_forward,
                              classic_ar_eval, np_predict_batch, np_train,
                              seasonality_eval, trend_eval)
from csipred.recurrent import RecurrentModel, TrainConfig

GRAD_REL_TOL = 1e-4
GRAD_ABS_FLOOR = 1e-7


def test_criterion_1_reference_results_not_reproducible():
    """The published hybrid-vs-additive NMSE table (e.g. 0.006 vs 0.076 on the
    first measurement track) came from a private over-the-air dataset that is
    not distributed with this package. Those numbers are therefore NOT
    reproduction targets; criteria 2-8 are the property-based substitutes."""
    reference_track1 = {"hybrid": 0.006, "np": 0.076}
    # We keep only the qualitative ordering as a requirement (criterion 6).
    assert reference_track1["hybrid"] < reference_track1["np"]


def _check_recurrent_grads(arch, seed):
    rng = np.random.default_rng(seed)
    model = RecurrentModel(arch, lag_depth=3, horizon=2, hidden_size=2,
                           layers=1, config=TrainConfig(dropout=0.0),
                           seed=seed)
    X = rng.normal(size=(2, 3))
    Y = rng.normal(size=(2, 2)) * 0.1
    _, grads = model.loss_and_grads(X, Y)
    analytic = model.flat_grads(grads)
    flat = model.get_flat()

    def f(v):
        model.set_flat(v)
        loss, _ = model.loss_and_grads(X, Y)
        return loss

    fd = finite_diff_grad(f, flat.copy())
    err = np.abs(analytic - fd) / np.maximum(np.abs(fd), GRAD_ABS_FLOOR)
    assert err.max() < GRAD_REL_TOL, f"{arch} seed {seed}: {err.max():.3g}"


def _check_ar_net_grads(seed):
    rng = np.random.default_rng(seed)
    cfg = NpConfig(d=4, D=2, trend_enabled=False, seasonality_enabled=False,
                   ar_layers=2, ar_hidden=3)
    model = NpModel(cfg, seed=seed)
    for k in model.params:
        model.params[k] = rng.normal(size=model.params[k].shape) * 0.5
    t = rng.uniform(0, 10, size=3)
    lags = rng.normal(size=(3, 4))
    Y = rng.normal(size=(3, 2))
    names = sorted(model.params)

    def get_flat():
        return np.concatenate([model.params[k].ravel() for k in names])

    def set_flat(v):
        pos = 0
        for k in names:
            n = model.params[k].size
            model.params[k] = v[pos:pos + n].reshape(model.params[k].shape).copy()
            pos += n

    y_hat, cache = model.forward(t, lags)
    g = model.grads(huber_grad(Y, y_hat, 1.0), cache)
    analytic = np.concatenate([g[k].ravel() for k in names])
    flat = get_flat()

    def f(v):
        set_flat(v)
        out, _ = model.forward(t, lags)
        return huber_loss(Y, out, 1.0)

    fd = finite_diff_grad(f, flat.copy())
    err = np.abs(analytic - fd) / np.maximum(np.abs(fd), GRAD_ABS_FLOOR)
    assert err.max() < GRAD_REL_TOL, f"ar-net seed {seed}: {err.max():.3g}"


def test_criterion_2_gradient_suite():
    start = time.monotonic()
    for seed in range(20):
        for arch in ("rnn", "lstm", "bilstm"):
            _check_recurrent_grads(arch, seed)
        _check_ar_net_grads(seed)
    assert time.monotonic() - start < 30.0


def test_criterion_3_oracle_equivalence():
    rng = np.random.default_rng(0)
    # AR network in linear-passthrough configuration == classic AR with q=0.
    theta = rng.normal(size=8)
    weights = [theta[None, :]]
    for _ in range(100):
        lags = rng.normal(size=8)
        net = float(ar_net_forward(lags, weights, [], linear=True)[0])
        assert abs(net - classic_ar_eval(lags, theta)) < 1e-12
    # Trend evaluator vs brute-force indicator summation.
    for _ in range(50):
        m = int(rng.integers(0, 8))
        cps = np.sort(rng.uniform(0, 1, size=m))
        p = TrendParams(growth=rng.normal(), offset=rng.normal(),
                        growth_adj=rng.normal(size=m),
                        offset_adj=rng.normal(size=m), changepoints=cps)
        t = float(rng.uniform(0, 1))
        slope, inter = p.growth, p.offset
        for j in range(m):
            if t >= cps[j]:
                slope += p.growth_adj[j]
                inter += p.offset_adj[j]
        assert abs(trend_eval(t, p) - (slope * t + inter)) < 1e-12
    # Seasonality evaluator vs term-by-term Fourier summation.
    for _ in range(50):
        k = int(rng.integers(1, 8))
        a, b = rng.normal(size=k), rng.normal(size=k)
        period = float(rng.uniform(2, 1000))
        t = float(rng.uniform(0, 2000))
        ref = sum(a[r - 1] * np.cos(2 * np.pi * r * t / period)
                  + b[r - 1] * np.sin(2 * np.pi * r * t / period)
                  for r in range(1, k + 1))
        assert abs(seasonality_eval(t, period, a, b) - ref) < 1e-12


def _one_step_windows(z, d, lo, hi):
    origins = np.arange(max(d, lo), hi)
    X = np.stack([z[t - d:t] for t in origins])
    Y = z[origins][:, None]
    return SupervisedWindowSet(d=d, D=1, feature_id="", t=origins, X=X, Y=Y)


def test_criterion_4_recovery():
    # (a) AR(3): the fitted linear AR network must reproduce the noise-free
    # conditional mean (classic AR one-step prediction) with NMSE < 1e-3.
    start = time.monotonic()
    theta = np.array([0.5, -0.2, 0.1])
    z = synthchan.generate_ar(theta, noise_sigma=0.1, n=260000, seed=0)
    wtr = _one_step_windows(z, 3, 3, 250000)
    wte = _one_step_windows(z, 3, 250000, len(z))
    cfg = NpConfig(d=3, D=1, trend_enabled=False, seasonality_enabled=False,
                   ar_layers=1, ar_hidden=8, ar_linear=True,
                   learning_rate=0.05, lr_decay=0.9, epochs=60,
                   batch_size=1024)
    model, _ = np_train(wtr, cfg, seed=0)
    pred = np_predict_batch(model, wte.t, wte.X)[:, 0]
    oracle = np.array([classic_ar_eval(x[::-1], theta) for x in wte.X])
    ar_nmse = float(np.sum((pred - oracle) ** 2) / np.sum(oracle ** 2))
    assert ar_nmse < 1e-3, f"AR recovery NMSE {ar_nmse:.3g}"
    assert time.monotonic() - start < 60.0

    # (b) trend-only fit of y = 2t + 1 recovers the slope within 5%.
    start = time.monotonic()
    y = synthchan.generate_line(2.0, 1.0, 400)
    scaler = fit_scaler(y)
    w = make_windows(scaler.transform(y), 4, 2)
    cfg = NpConfig(d=4, D=2, n_changepoints=0, seasonality_enabled=False,
                   ar_enabled=False, learning_rate=0.05, epochs=200,
                   batch_size=64)
    model, _ = np_train(w, cfg, seed=0)
    slope = (model.params["trend_g0"][0] / model.t_span) * scaler.half_range
    assert abs(slope - 2.0) / 2.0 < 0.05, f"recovered slope {slope:.4f}"
    assert time.monotonic() - start < 60.0

    # (c) seasonality-only fit of an exactly representable sinusoid.
    start = time.monotonic()
    n = 4000
    y = synthchan.generate_sinusoid(0.8, 200.0, n)
    cut = int(0.9 * n)
    wtr = make_windows(y[:cut], 4, 2)
    wte = make_windows(y[cut:], 4, 2, start_index=cut)
    cfg = NpConfig(d=4, D=2, trend_enabled=False, ar_enabled=False,
                   seasonalities=((3, 0.1),), samples_per_day=2000.0,
                   learning_rate=0.05, lr_decay=0.97, epochs=150,
                   batch_size=256)
    model, _ = np_train(wtr, cfg, seed=0)
    pred = np_predict_batch(model, wte.t, wte.X)
    season_nmse = float(np.mean(np.sum((pred - wte.Y) ** 2, axis=1)
                                / np.sum(wte.Y ** 2, axis=1)))
    assert season_nmse < 1e-3, f"seasonality recovery NMSE {season_nmse:.3g}"
    assert time.monotonic() - start < 60.0


def test_criterion_5_metric_identities():
    rng = np.random.default_rng(1)
    h = rng.normal(size=(8, 6)) + 1j * rng.normal(size=(8, 6))
    assert nmse(h, h) == 0.0
    assert nmse(np.zeros_like(h), h) == pytest.approx(1.0, abs=1e-12)
    for _ in range(20):
        c = complex(rng.uniform(0.1, 5), rng.uniform(-5, 5))
        assert cosine_similarity(c * h, h) == pytest.approx(1.0, abs=1e-9)
    for _ in range(50):
        v = float(rng.uniform(1e-6, 100.0))
        assert abs(10.0 ** (to_db(v) / 10.0) - v) <= 1e-9 * max(v, 1.0)


# Frozen desk-scale configuration for the end-to-end comparison: reduced
# hidden size / epochs, strided windows, no dropout, and a lowered additive-
# model learning rate (0.01 destabilizes trend extrapolation at this scale).
E2E_OVERRIDES = {
    "epochs": "15",
    "window_stride": "8",
    "rnn_hidden": "32",
    "rnn_layers": "1",
    "dropout": "0.0",
    "np_hidden": "32",
    "np_layers": "1",
    "np_learning_rate": "0.003",
}
E2E_SEEDS = (0, 1, 2, 3, 4)


def test_criterion_6_end_to_end_comparison():
    start = time.monotonic()
    base = resolve_config(E2E_OVERRIDES)
    series = experiment.get_series(base)
    assert base["sample_count"] == 20000 and base["antenna_count"] == 1
    assert base["d"] == 48 and base["D"] == 24

    def run(model, seed):
        cfg = resolve_config(E2E_OVERRIDES, {"model": model, "seed": seed})
        checkpoint, _ = experiment.train_experiment(cfg, series=series)
        reports = experiment.evaluate_checkpoint(checkpoint, split="test",
                                                 series=series)
        return next(r for r in reports if r.antenna == "all").nmse

    results = {}
    for model in ("rnn", "bilstm"):
        results[model] = [run(model, 0)]
    for model in ("np", "hybrid"):
        results[model] = [run(model, s) for s in E2E_SEEDS]
    for model, values in results.items():
        for v in values:
            assert v < 0.5, f"{model}: test NMSE {v:.3g} >= 0.5"
    hybrid_median = statistics.median(results["hybrid"])
    np_median = statistics.median(results["np"])
    assert hybrid_median <= np_median, (
        f"hybrid median {hybrid_median:.3g} > additive median {np_median:.3g}")
    assert time.monotonic() - start < 900.0


def test_criterion_7_determinism():
    cfg = resolve_config({"sample_count": "600", "d": "8", "D": "4",
                          "window_stride": "4", "epochs": "2",
                          "rnn_hidden": "8", "rnn_layers": "1",
                          "dropout": "0.0"})
    digests = []
    for _ in range(2):
        checkpoint, histories = experiment.train_experiment(cfg)
        blob = json.dumps({"checkpoint": checkpoint, "histories": histories},
                          sort_keys=True).encode()
        digests.append(hashlib.sha256(blob).hexdigest())
    assert digests[0] == digests[1]
    # Evaluation is equally deterministic.
    checkpoint, _ = experiment.train_experiment(cfg)
    rows = [r.csv_row() for r in experiment.evaluate_checkpoint(checkpoint)]
    rows2 = [r.csv_row() for r in experiment.evaluate_checkpoint(checkpoint)]
    assert rows == rows2


def test_criterion_8_data_pipeline_invariants():
    rng = np.random.default_rng(2)
    t = np.arange(500)
    values = (np.sin(2 * np.pi * t / 41.0)
              + 1j * np.cos(2 * np.pi * t / 59.0))[None, :]
    values = values + 0.01 * (rng.normal(size=values.shape)
                              + 1j * rng.normal(size=values.shape))
    series = CsiSeries(5e-4, 0, values)

    # Split partition: segments are contiguous, ordered, and exhaustive.
    tr, va, te = split_chronological(series)
    assert va.length == int(500 * 0.1) and te.length == int(500 * 0.1)
    rebuilt = np.concatenate([tr.values, va.values, te.values], axis=1)
    assert np.array_equal(rebuilt, series.values)

    # Window counts agree with brute-force enumeration for assorted shapes.
    for n, d, D in ((20, 4, 3), (50, 8, 4), (100, 1, 1), (13, 5, 6)):
        v = rng.normal(size=n)
        w = make_windows(v, d, D)
        brute = [x for x in range(n) if x - d >= 0 and x + D < n]
        assert w.t.tolist() == brute
        assert len(w) == n - d - D

    prepared, digest = prepare_dataset(series, d=8, D=4)
    assert len(digest) == 64
    bounds = {"train": (0, tr.length),
              "val": (tr.length, tr.length + va.length),
              "test": (tr.length + va.length, 500)}
    for pf in prepared:
        # No leakage: the scaler is fitted on the training split only.
        feat = next(f for f in complex_to_features(clean(series)[0])
                    if f.feature_id == pf.feature.feature_id)
        ref = fit_scaler(feat.values[:tr.length])
        assert pf.scaler.shift == ref.shift
        assert pf.scaler.half_range == ref.half_range
        # Normalization round-trips exactly enough for float64.
        norm = pf.scaler.transform(feat.values)
        assert np.allclose(pf.scaler.inverse(norm), feat.values, atol=1e-12)
        assert norm[:tr.length].min() == -1.0
        assert norm[:tr.length].max() == 1.0
        # No window straddles a split boundary.
        for name, w in pf.windows.items():
            lo, hi = bounds[name]
            assert np.all(w.t - w.d >= lo)
            assert np.all(w.t + w.D <= hi - 1)
