"""Target-durability series: ingestion and exponential decay fitting.

The trapped-ion signal versus ablation shot number on a single target spot
is fit to s(n) = A exp(-n / n0) + C.  The PMT calibration of roughly
2.5 photons/ms per trapped ion converts the amplitude to an ion-number
estimate.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

SHOT_HEADER = "shot,signal_photons_per_ms"

#: photons/ms scattered into the PMT by a single ion
PHOTONS_PER_MS_PER_ION = 2.5

#: fitted lifetimes beyond this are reported as non-decaying
NONDECAY_N0 = 1e6


class FitError(ValueError):
    """Raised for under-determined or degenerate series."""


@dataclass(frozen=True)
class ShotSeries:
    shots: np.ndarray          # strictly increasing integers
    signals: np.ndarray        # photons/ms, >= 0
    target: str = ""

    def __post_init__(self):
        shots = np.asarray(self.shots, dtype=int)
        signals = np.asarray(self.signals, dtype=float)
        if shots.ndim != 1 or shots.shape != signals.shape:
            raise FitError("shots and signals must be matching 1-D arrays")
        if np.any(np.diff(shots) <= 0):
            raise FitError("shot numbers must be strictly increasing")
        if np.any(signals < 0):
            raise FitError("signals must be >= 0")
        object.__setattr__(self, "shots", shots)
        object.__setattr__(self, "signals", signals)

    @classmethod
    def from_csv(cls, path, target: str = "") -> "ShotSeries":
        shots, signals = [], []
        with open(path) as f:
            reader = csv.reader(f)
            header = next(reader)
            if [h.strip() for h in header] != SHOT_HEADER.split(","):
                raise FitError(f"{path}: expected header {SHOT_HEADER!r}")
            for row in reader:
                if not row:
                    continue
                shots.append(int(row[0]))
                signals.append(float(row[1]))
        return cls(np.array(shots), np.array(signals), target=target)

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(SHOT_HEADER + "\n")
            for n, s in zip(self.shots, self.signals):
                f.write(f"{n},{repr(float(s))}\n")


@dataclass(frozen=True)
class DecayFit:
    amplitude: float            # A, photons/ms
    durability: float           # n0, shots
    baseline: float             # C, photons/ms
    residual_rms: float
    non_decaying: bool

    @property
    def estimated_ions(self) -> float:
        return self.amplitude / PHOTONS_PER_MS_PER_ION


def _initializations(n, s):
    s_first = float(np.mean(s[: max(1, len(s) // 5)]))
    s_last = float(np.mean(s[-max(1, len(s) // 5):]))
    span = float(n[-1] - n[0]) or 1.0

    inits = [(s_first - s_last, span / 3.0, s_last)]

    # log-linear estimate on the positive part of s - min(s)
    resid = s - s.min()
    pos = resid > 1e-12 * max(s.max(), 1.0)
    if np.sum(pos) >= 2:
        slope, icpt = np.polyfit(n[pos], np.log(resid[pos]), 1)
        if slope < 0:
            inits.append((float(np.exp(icpt)), -1.0 / slope, float(s.min())))
    # flat series
    inits.append((0.0, span, float(np.mean(s))))
    return inits


def fit_target_decay(series: ShotSeries) -> DecayFit:
    """Least-squares fit of s(n) = A exp(-n/n0) + C (Levenberg-Marquardt),
    multi-started from heuristic initializations; the best residual wins.

    A series whose fitted n0 exceeds NONDECAY_N0 (or whose amplitude is
    negligible) is flagged non-decaying.
    """
    n = series.shots.astype(float)
    s = series.signals
    if len(n) < 5:
        raise FitError("need at least 5 rows to fit the decay model")
    if np.all(s == 0):
        raise FitError("all-zero signal series")

    def resid(p):
        a, log_n0, c = p
        return a * np.exp(-n / np.exp(log_n0)) + c - s

    best = None
    for a0, n00, c0 in _initializations(n, s):
        n00 = min(max(n00, 1e-2), NONDECAY_N0 * 10)
        try:
            sol = least_squares(resid, x0=[a0, np.log(n00), c0], method="lm",
                                max_nfev=2000)
        except Exception:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise FitError("all fit starts failed")

    a, log_n0, c = best.x
    n0 = float(np.exp(log_n0))
    rms = float(np.sqrt(np.mean(best.fun ** 2)))
    scale = max(float(np.max(np.abs(s))), 1e-12)
    # an amplitude within the residual noise is not a resolvable decay
    amp_small = abs(a) < max(1e-3 * scale, 3.0 * rms)
    non_decaying = (n0 > NONDECAY_N0) or amp_small
    if non_decaying:
        # report the flat-model parameters rather than the degenerate branch
        c = float(np.mean(s)) if amp_small else c
        a = a if not amp_small else 0.0
    return DecayFit(amplitude=float(a), durability=n0, baseline=float(c),
                    residual_rms=rms, non_decaying=bool(non_decaying))
