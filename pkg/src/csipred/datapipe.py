"""Dataset ingestion, cleaning, normalization, splitting, and window building.

CSV contract (bit-exact): header ``t,antenna,re,im``, one row per
(sample index, antenna), UTF-8, LF line endings. Sample indices per antenna
must cover one contiguous range (gaps are repaired by `clean` up to a limit).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (ContractViolation, DataError, DegenerateScaleError,
                     ParseError, UnrecoverableGapError)

MAX_INTERP_GAP = 10


@dataclass
class CsiSeries:
    """Uniformly indexed complex channel gains, one row per antenna.

    `values` may contain NaN entries for missing samples until `clean` runs.
    `duplicate_rows` records exact duplicates collapsed at load time; `clean`
    moves them into its report.
    """

    sample_interval: float
    start_index: int
    values: np.ndarray  # complex128, shape (antennas, n)
    track: str = "synthetic"
    duplicate_rows: list = field(default_factory=list)

    @property
    def antenna_count(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass
class CleaningReport:
    duplicates_collapsed: int = 0
    samples_interpolated: int = 0

    @property
    def empty(self) -> bool:
        return self.duplicates_collapsed == 0 and self.samples_interpolated == 0


@dataclass
class FeatureSeries:
    """One real-valued stream: a single antenna's real or imaginary part."""

    feature_id: str
    antenna: int
    part: str  # "re" or "im"
    values: np.ndarray
    start_index: int


@dataclass
class Scaler:
    """Invertible per-feature min-max map onto [-1, 1]."""

    shift: float
    half_range: float

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.shift) / self.half_range - 1.0

    def inverse(self, y):
        return (np.asarray(y, dtype=float) + 1.0) * self.half_range + self.shift


@dataclass
class SupervisedWindowSet:
    """Aligned (lag vector, horizon vector) pairs with absolute origins.

    For origin t, lags are samples t-d..t-1 (ascending time) and labels are
    t+1..t+D; sample t itself is not used.
    """

    d: int
    D: int
    feature_id: str
    t: np.ndarray  # (N,) int origins
    X: np.ndarray  # (N, d)
    Y: np.ndarray  # (N, D)

    def __len__(self):
        return self.t.shape[0]


def load_csi(path, sample_interval=5e-4, track=None) -> CsiSeries:
    """Parse the CSI CSV format into a (possibly gap-containing) series."""
    per_antenna: dict[int, dict[int, complex]] = {}
    duplicates = []
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if header != "t,antenna,re,im":
            raise ParseError(f"{path}: bad header {header!r}")
        for ln, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ParseError(f"{path}: line {ln}: expected 4 fields")
            try:
                t = int(parts[0])
                ant = int(parts[1])
                re = float(parts[2])
                im = float(parts[3])
            except ValueError as exc:
                raise ParseError(f"{path}: line {ln}: {exc}") from None
            for col, v in (("re", re), ("im", im)):
                if not np.isfinite(v):
                    raise ParseError(
                        f"{path}: line {ln}: non-finite value in column {col!r}")
            row = per_antenna.setdefault(ant, {})
            if t in row:
                if row[t] == complex(re, im):
                    duplicates.append((ant, t))
                else:
                    raise ParseError(
                        f"{path}: line {ln}: conflicting duplicate for t={t}, "
                        f"antenna={ant}")
            else:
                row[t] = complex(re, im)
    if not per_antenna:
        raise ParseError(f"{path}: no data rows")
    antennas = sorted(per_antenna)
    t_min = min(min(r) for r in per_antenna.values())
    t_max = max(max(r) for r in per_antenna.values())
    for ant in antennas:
        r = per_antenna[ant]
        if min(r) != t_min or max(r) != t_max:
            raise ParseError(
                f"{path}: antenna {ant} does not cover the common index range "
                f"[{t_min}, {t_max}]")
    n = t_max - t_min + 1
    values = np.full((len(antennas), n), np.nan + 0j, dtype=complex)
    for k, ant in enumerate(antennas):
        for t, v in per_antenna[ant].items():
            values[k, t - t_min] = v
    return CsiSeries(sample_interval=sample_interval, start_index=t_min,
                     values=values, track=track or str(path),
                     duplicate_rows=duplicates)


def save_csi(series: CsiSeries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,antenna,re,im\n")
        for t in range(series.length):
            for ant in range(series.antenna_count):
                v = series.values[ant, t]
                fh.write(f"{series.start_index + t},{ant},"
                         f"{float(v.real)!r},{float(v.imag)!r}\n")


def clean(series: CsiSeries, max_gap=MAX_INTERP_GAP):
    """Fill missing samples by linear interpolation; report every action."""
    report = CleaningReport(duplicates_collapsed=len(series.duplicate_rows))
    values = series.values.copy()
    for ant in range(values.shape[0]):
        row = values[ant]
        missing = np.isnan(row.real) | np.isnan(row.imag)
        if not missing.any():
            continue
        # Gap-length check before interpolating.
        idx = np.flatnonzero(missing)
        run = 1
        for i in range(1, len(idx)):
            run = run + 1 if idx[i] == idx[i - 1] + 1 else 1
            if run > max_gap:
                raise UnrecoverableGapError(
                    f"antenna {ant}: gap longer than {max_gap} samples "
                    f"around index {series.start_index + idx[i]}")
        good = ~missing
        if missing[0] or missing[-1]:
            raise UnrecoverableGapError(
                f"antenna {ant}: missing samples at the series boundary")
        xs = np.arange(len(row))
        row.real[missing] = np.interp(xs[missing], xs[good], row.real[good])
        row.imag[missing] = np.interp(xs[missing], xs[good], row.imag[good])
        report.samples_interpolated += int(missing.sum())
    return CsiSeries(sample_interval=series.sample_interval,
                     start_index=series.start_index, values=values,
                     track=series.track, duplicate_rows=[]), report


def split_chronological(series: CsiSeries, fractions=(0.8, 0.1, 0.1),
                        min_segment=1):
    """Contiguous train/validation/test segments; remainder goes to training."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ContractViolation("split fractions must sum to 1")
    n = series.length
    n_val = int(n * fractions[1])
    n_test = int(n * fractions[2])
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < min_segment:
        raise DataError(
            f"series of length {n} too short for split {fractions} with "
            f"minimum segment {min_segment}")
    out = []
    pos = 0
    for seg in (n_train, n_val, n_test):
        out.append(CsiSeries(sample_interval=series.sample_interval,
                             start_index=series.start_index + pos,
                             values=series.values[:, pos:pos + seg].copy(),
                             track=series.track))
        pos += seg
    return tuple(out)


def complex_to_features(series: CsiSeries):
    """Each antenna yields two real streams: ant{k}_re and ant{k}_im."""
    feats = []
    for ant in range(series.antenna_count):
        row = series.values[ant]
        feats.append(FeatureSeries(f"ant{ant}_re", ant, "re",
                                   row.real.copy(), series.start_index))
        feats.append(FeatureSeries(f"ant{ant}_im", ant, "im",
                                   row.imag.copy(), series.start_index))
    return feats


def recombine_features(features) -> np.ndarray:
    """Inverse of `complex_to_features` (bijection check)."""
    by_ant: dict[int, dict[str, np.ndarray]] = {}
    for f in features:
        by_ant.setdefault(f.antenna, {})[f.part] = f.values
    ants = sorted(by_ant)
    return np.stack([by_ant[a]["re"] + 1j * by_ant[a]["im"] for a in ants])


def fit_scaler(train_values) -> Scaler:
    v = np.asarray(train_values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if hi - lo <= 0.0:
        raise DegenerateScaleError("constant feature: zero range on training split")
    return Scaler(shift=lo, half_range=(hi - lo) / 2.0)


def make_windows(values, d, D, start_index=0, feature_id="", stride=1
                 ) -> SupervisedWindowSet:
    """One window per valid origin t: lags t-d..t-1 predict labels t+1..t+D."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n < d + D + 1:
        raise ContractViolation(
            f"series of length {n} too short for d={d}, D={D}")
    origins = np.arange(d, n - D, stride)
    X = np.stack([v[t - d:t] for t in origins])
    Y = np.stack([v[t + 1:t + 1 + D] for t in origins])
    return SupervisedWindowSet(d=d, D=D, feature_id=feature_id,
                               t=origins + start_index, X=X, Y=Y)


@dataclass
class PreparedFeature:
    feature: FeatureSeries
    scaler: Scaler
    windows: dict  # split name -> SupervisedWindowSet (normalized values)


def prepare_dataset(series: CsiSeries, d, D, fractions=(0.8, 0.1, 0.1),
                    stride=1):
    """Full preprocessing: clean, split, separate re/im, normalize, window.

    The scaler for every feature is fitted on the training split only; windows
    are built per split so none straddles a boundary. Returns the prepared
    features plus a digest over all window arrays (fairness contract).
    """
    cleaned, _ = clean(series)
    min_seg = d + D + 3
    splits = dict(zip(("train", "val", "test"),
                      split_chronological(cleaned, fractions, min_segment=min_seg)))
    train_feats = {f.feature_id: f for f in complex_to_features(splits["train"])}
    prepared = []
    digest = hashlib.sha256()
    for feat_id, train_feat in train_feats.items():
        scaler = fit_scaler(train_feat.values)
        windows = {}
        for split_name, seg in splits.items():
            feat = next(f for f in complex_to_features(seg)
                        if f.feature_id == feat_id)
            norm = scaler.transform(feat.values)
            windows[split_name] = make_windows(
                norm, d, D, start_index=feat.start_index, feature_id=feat_id,
                stride=stride)
            digest.update(windows[split_name].X.tobytes())
            digest.update(windows[split_name].Y.tobytes())
        prepared.append(PreparedFeature(feature=train_feat, scaler=scaler,
                                        windows=windows))
    return prepared, digest.hexdigest()
