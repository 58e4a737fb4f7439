"""Decomposable forecaster: trend + Fourier seasonality + AR network.

Prediction for each horizon step is the sum of a piecewise-linear trend with
change-points, per-period Fourier seasonalities, a feed-forward autoregressive
block on the d lag values, and (optionally) a linear head over an exogenous
future-regressor vector. All parameters train jointly with Adam on Huber loss;
gradients are hand-derived (every component is linear in its parameters except
the AR network, which is a standard MLP).

Conventions:
- trend time is normalized to [0, 1] over the training span;
- seasonality uses absolute sample indices, with periods given in virtual
  "days" mapped to samples via ``samples_per_day``;
- AR lag vectors are ordered most-recent-first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datapipe import SupervisedWindowSet
from .errors import ContractViolation, DivergenceError
from .numcore import Adam, clip_grad_norm, huber_grad, huber_loss, init_uniform, relu

DEFAULT_SEASONALITIES = ((6, 365.25), (3, 7.0), (6, 1.0))


# ---------------------------------------------------------------------------
# Stand-alone component evaluators (also serve as oracle targets)


@dataclass
class TrendParams:
    growth: float
    offset: float
    growth_adj: np.ndarray      # (m,)
    offset_adj: np.ndarray      # (m,)
    changepoints: np.ndarray    # (m,) strictly increasing


def changepoint_indicator(t, n_j):
    return 1.0 if t >= n_j else 0.0


def trend_eval(t, p: TrendParams):
    """R_t = (growth + G.adj_g) * t + (offset + G.adj_o), G the indicator vector."""
    gamma = np.array([changepoint_indicator(t, n) for n in p.changepoints])
    return ((p.growth + float(gamma @ p.growth_adj)) * t
            + (p.offset + float(gamma @ p.offset_adj)))


def seasonality_eval(t, period, a, b):
    """Truncated Fourier sum of order k = len(a) for one period."""
    if period <= 0 or len(a) < 1 or len(a) != len(b):
        raise ContractViolation("invalid seasonality parameters")
    r = np.arange(1, len(a) + 1)
    ang = 2.0 * np.pi * r * t / period
    return float(np.asarray(a) @ np.cos(ang) + np.asarray(b) @ np.sin(ang))


def classic_ar_eval(lags, theta, q=0.0):
    """Noise-free AR: q + sum_e theta_e * z_{t-e}; lags ordered z_{t-1} first."""
    lags = np.asarray(lags, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if lags.shape != theta.shape:
        raise ContractViolation("lag count does not match AR order")
    return q + float(theta @ lags)


def ar_net_forward(z_lags, weights, biases, linear=False):
    """MLP: relu(U_i . + b_i) through hidden layers, linear output layer.

    `weights` is [U_1 .. U_{l+1}], `biases` is [b_1 .. b_l]; `z_lags` is a
    single lag vector or a (B, d) batch, most recent lag first.
    """
    z = np.atleast_2d(np.asarray(z_lags, dtype=float))
    if z.shape[1] != weights[0].shape[1]:
        raise ContractViolation("lag count does not match first layer")
    act = (lambda x: x) if linear else relu
    h = z
    for U, b in zip(weights[:-1], biases):
        h = act(h @ U.T + b)
    out = h @ weights[-1].T
    return out[0] if np.asarray(z_lags).ndim == 1 else out


# ---------------------------------------------------------------------------
# Joint model


@dataclass
class NpConfig:
    d: int = 48
    D: int = 24
    learning_rate: float = 0.01
    lr_decay: float = 1.0       # per-epoch multiplicative decay
    epochs: int = 50
    batch_size: int = 32
    huber_beta: float = 1.0
    grad_clip: float = 5.0
    # trend
    trend_enabled: bool = True
    n_changepoints: int = 30
    changepoint_range: float = 0.9
    discontinuous_growth: bool = True
    # seasonality
    seasonality_enabled: bool = True
    seasonalities: tuple = DEFAULT_SEASONALITIES  # ((order k, period days), ...)
    samples_per_day: float = 2000.0
    # autoregression
    ar_enabled: bool = True
    ar_layers: int = 3
    ar_hidden: int = 32
    ar_linear: bool = False
    # exogenous future regressor
    regressor_enabled: bool = False


class NpModel:
    """Additive forecaster; see module docstring for conventions."""

    def __init__(self, cfg: NpConfig, seed=0, t0=0.0, t_span=1.0):
        self.cfg = cfg
        self.seed = seed
        self.t0 = float(t0)
        self.t_span = float(max(t_span, 1.0))
        self.trained = False
        m = cfg.n_changepoints
        # Uniformly spaced over the first `changepoint_range` of the span,
        # in normalized time.
        self.changepoints = (cfg.changepoint_range
                             * np.arange(1, m + 1) / (m + 1.0)) if m else np.zeros(0)
        self.params = self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng):
        cfg = self.cfg
        p = {}
        m = cfg.n_changepoints
        p["trend_g0"] = np.zeros(1)
        p["trend_r0"] = np.zeros(1)
        p["trend_dg"] = np.zeros(m)
        p["trend_dr"] = np.zeros(m)
        for i, (k, _period) in enumerate(cfg.seasonalities):
            p[f"season{i}_a"] = np.zeros(k)
            p[f"season{i}_b"] = np.zeros(k)
        dims = [cfg.d] + [cfg.ar_hidden] * cfg.ar_layers + [cfg.D]
        for i in range(len(dims) - 1):
            p[f"ar_U{i + 1}"] = init_uniform(rng, (dims[i + 1], dims[i]), dims[i])
            if i < len(dims) - 2:
                p[f"ar_b{i + 1}"] = init_uniform(rng, (dims[i + 1],), dims[i])
        p["reg_W"] = np.zeros((cfg.D, cfg.D))  # zero init: no contribution untrained
        return p

    # -- forward -----------------------------------------------------------

    def _horizon_times(self, t_origins):
        t = np.asarray(t_origins, dtype=float)[:, None] + np.arange(1, self.cfg.D + 1)
        return t  # absolute sample index, shape (B, D)

    def _offset_adj(self):
        """Free in discontinuous mode; -cp_j * growth_adj_j in continuous mode."""
        if self.cfg.discontinuous_growth:
            return self.params["trend_dr"]
        return -self.changepoints * self.params["trend_dg"]

    def forward_components(self, t_origins, lags, regressors=None):
        cfg = self.cfg
        p = self.params
        t_abs = self._horizon_times(t_origins)
        B = t_abs.shape[0]
        comps = {}
        cache = {"t_abs": t_abs}
        if cfg.trend_enabled:
            tn = (t_abs - self.t0) / self.t_span
            ind = (tn[:, :, None] >= self.changepoints).astype(float)
            comps["trend"] = ((p["trend_g0"][0] + ind @ p["trend_dg"]) * tn
                              + (p["trend_r0"][0] + ind @ self._offset_adj()))
            cache["tn"], cache["ind"] = tn, ind
        else:
            comps["trend"] = np.zeros((B, cfg.D))
        if cfg.seasonality_enabled:
            F = np.zeros((B, cfg.D))
            angs = []
            for i, (k, period_days) in enumerate(cfg.seasonalities):
                period = period_days * cfg.samples_per_day
                r = np.arange(1, k + 1)
                ang = 2.0 * np.pi * r[None, None, :] * t_abs[:, :, None] / period
                F += (np.cos(ang) @ p[f"season{i}_a"]
                      + np.sin(ang) @ p[f"season{i}_b"])
                angs.append(ang)
            comps["seasonality"] = F
            cache["angs"] = angs
        else:
            comps["seasonality"] = np.zeros((B, cfg.D))
        if cfg.ar_enabled:
            z = np.asarray(lags, dtype=float)[:, ::-1]  # most recent lag first
            if z.shape[1] != cfg.d:
                raise ContractViolation(
                    f"expected {cfg.d} lags, got {z.shape[1]}")
            hs = [z]
            pre = []
            h = z
            for i in range(1, cfg.ar_layers + 1):
                a = h @ p[f"ar_U{i}"].T + p[f"ar_b{i}"]
                pre.append(a)
                h = a if cfg.ar_linear else relu(a)
                hs.append(h)
            comps["ar"] = h @ p[f"ar_U{cfg.ar_layers + 1}"].T
            cache["ar_hs"], cache["ar_pre"] = hs, pre
        else:
            comps["ar"] = np.zeros((B, cfg.D))
        if cfg.regressor_enabled:
            if regressors is None:
                raise ContractViolation("model expects a future regressor")
            reg = np.asarray(regressors, dtype=float)
            comps["regressor"] = reg @ p["reg_W"].T
            cache["reg"] = reg
        else:
            comps["regressor"] = np.zeros((B, cfg.D))
        return comps, cache

    def forward(self, t_origins, lags, regressors=None):
        comps, cache = self.forward_components(t_origins, lags, regressors)
        total = comps["trend"] + comps["seasonality"] + comps["ar"] + comps["regressor"]
        return total, cache

    # -- backward ----------------------------------------------------------

    def grads(self, dY, cache):
        cfg = self.cfg
        p = self.params
        g = {k: np.zeros_like(v) for k, v in p.items()}
        if cfg.trend_enabled:
            tn, ind = cache["tn"], cache["ind"]
            g["trend_g0"][0] = float((dY * tn).sum())
            g["trend_r0"][0] = float(dY.sum())
            if cfg.n_changepoints:
                dg = np.einsum("bd,bdm->m", dY * tn, ind)
                dr = np.einsum("bd,bdm->m", dY, ind)
                if cfg.discontinuous_growth:
                    g["trend_dg"] = dg
                    g["trend_dr"] = dr
                else:
                    g["trend_dg"] = dg - self.changepoints * dr
        if cfg.seasonality_enabled:
            for i, ang in enumerate(cache["angs"]):
                g[f"season{i}_a"] = np.einsum("bd,bdk->k", dY, np.cos(ang))
                g[f"season{i}_b"] = np.einsum("bd,bdk->k", dY, np.sin(ang))
        if cfg.ar_enabled:
            hs, pre = cache["ar_hs"], cache["ar_pre"]
            L = cfg.ar_layers
            g[f"ar_U{L + 1}"] = dY.T @ hs[L]
            dh = dY @ p[f"ar_U{L + 1}"]
            for i in range(L, 0, -1):
                da = dh if cfg.ar_linear else dh * (pre[i - 1] > 0)
                g[f"ar_U{i}"] = da.T @ hs[i - 1]
                g[f"ar_b{i}"] = da.sum(axis=0)
                dh = da @ p[f"ar_U{i}"]
        if cfg.regressor_enabled:
            g["reg_W"] = dY.T @ cache["reg"]
        return g

    # -- persistence -------------------------------------------------------

    def to_dict(self):
        return {
            "format": "csipred-npmodel-v1",
            "config": {**vars(self.cfg),
                       "seasonalities": [list(s) for s in self.cfg.seasonalities]},
            "seed": self.seed, "t0": self.t0, "t_span": self.t_span,
            "trained": self.trained,
            "changepoints": self.changepoints.tolist(),
            "sections": {
                "trend": {k: self.params[k].tolist() for k in self.params
                          if k.startswith("trend_")},
                "seasonality": {k: self.params[k].tolist() for k in self.params
                                if k.startswith("season")},
                "ar": {k: self.params[k].tolist() for k in self.params
                       if k.startswith("ar_")},
                "regressor": {k: self.params[k].tolist() for k in self.params
                              if k.startswith("reg_")},
            },
        }

    @classmethod
    def from_dict(cls, payload):
        if payload.get("format") != "csipred-npmodel-v1":
            raise ContractViolation(
                f"unsupported checkpoint format {payload.get('format')!r}")
        raw = dict(payload["config"])
        raw["seasonalities"] = tuple(tuple(s) for s in raw["seasonalities"])
        model = cls(NpConfig(**raw), seed=payload["seed"], t0=payload["t0"],
                    t_span=payload["t_span"])
        model.changepoints = np.asarray(payload["changepoints"], dtype=float)
        params = {}
        for section in payload["sections"].values():
            for k, v in section.items():
                params[k] = np.asarray(v, dtype=float)
        model.params = params
        model.trained = payload["trained"]
        return model

    def param_count(self):
        return sum(v.size for v in self.params.values())


def np_forecast(t, lags, model: NpModel, regressor=None):
    """D-step forecast from one window at origin t."""
    lags = np.asarray(lags, dtype=float)
    if lags.shape != (model.cfg.d,):
        raise ContractViolation(f"expected {model.cfg.d} lags, got {lags.shape}")
    reg = None if regressor is None else np.asarray(regressor, dtype=float)[None, :]
    out, _ = model.forward(np.array([t]), lags[None, :], reg)
    return out[0]


def np_train(data: SupervisedWindowSet, cfg: NpConfig, seed=0, regressors=None):
    """Joint Adam fit of all enabled components; returns (model, loss history)."""
    if len(data) == 0:
        raise ContractViolation("empty training dataset")
    if data.d != cfg.d or data.D != cfg.D:
        raise ContractViolation(
            f"window shape (d={data.d}, D={data.D}) does not match config "
            f"(d={cfg.d}, D={cfg.D})")
    if cfg.regressor_enabled:
        if regressors is None:
            raise ContractViolation("config enables a regressor but none given")
        regressors = np.asarray(regressors, dtype=float)
        if regressors.shape != data.Y.shape:
            raise ContractViolation("regressor array must be (N, D)")
    t0 = float(data.t.min() - data.d)
    t_span = float(data.t.max() + data.D - t0)
    model = NpModel(cfg, seed=seed, t0=t0, t_span=t_span)
    rng = np.random.default_rng(seed)
    opt = Adam()
    history = []
    n = len(data)
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for b0 in range(0, n, cfg.batch_size):
            idx = order[b0:b0 + cfg.batch_size]
            reg = None if regressors is None else regressors[idx]
            y_hat, cache = model.forward(data.t[idx], data.X[idx], reg)
            loss = huber_loss(data.Y[idx], y_hat, cfg.huber_beta)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, b0 // cfg.batch_size, loss)
            dY = huber_grad(data.Y[idx], y_hat, cfg.huber_beta)
            grads = clip_grad_norm(model.grads(dY, cache), cfg.grad_clip)
            model.params = opt.step(model.params, grads, lr)
            losses.append(loss)
        history.append(float(np.mean(losses)))
        lr *= cfg.lr_decay
    model.trained = True
    return model, history


def np_predict_batch(model: NpModel, t_origins, X, regressors=None):
    out, _ = model.forward(t_origins, X, regressors)
    return out
