"""Black-box minimization of detection cost over the threshold box.

Budgeted optimization: seeded Latin-hypercube starts, then a Gaussian
process surrogate (squared-exponential kernel, fixed hyperparameters) with
expected-improvement acquisition picks the remaining points. Twenty
evaluations cannot support fitting kernel hyperparameters, so they are
fixed: length scale 0.2x the box width per dimension, observation noise
1e-4 on standardized costs. A pure random-search mode runs under the same
budget as a fallback and baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .corpus import Manifest, StopRecord
from .detect import (
    DetectorThresholds,
    apply_thresholds,
    evaluate_detection,
    score_chunks,
)
from .errors import NearfieldError, ObjectiveEvaluationError

THRESHOLD_BOUNDS: tuple[tuple[float, float], ...] = ((0.0, 1.0), (0.0, 1.0), (0.25, 2.0))


@dataclass(frozen=True)
class TuneSpec:
    bounds: tuple[tuple[float, float], ...] = THRESHOLD_BOUNDS
    budget: int = 20
    init_samples: int = 5
    seed: int = 0
    mode: str = "gp"
    candidates_per_step: int = 4096

    def __post_init__(self) -> None:
        if not self.budget >= self.init_samples >= 1:
            raise ValueError("need budget >= init_samples >= 1")
        if self.mode not in ("gp", "random"):
            raise ValueError(f"unknown mode {self.mode!r}")
        for lo, hi in self.bounds:
            if hi <= lo:
                raise ValueError(f"empty bound ({lo}, {hi})")


@dataclass(frozen=True)
class TracePoint:
    point: tuple[float, ...]
    cost: float
    iteration: int


@dataclass(frozen=True)
class TuneResult:
    best_point: tuple[float, ...]
    best_cost: float
    trace: tuple[TracePoint, ...]


def _latin_hypercube(rng: np.random.Generator, n: int, bounds) -> np.ndarray:
    dims = len(bounds)
    unit = np.empty((n, dims))
    for d in range(dims):
        perm = rng.permutation(n)
        unit[:, d] = (perm + rng.uniform(size=n)) / n
    lows = np.array([lo for lo, _ in bounds])
    highs = np.array([hi for _, hi in bounds])
    return lows + unit * (highs - lows)


def _se_kernel(a: np.ndarray, b: np.ndarray, length_scales: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] / length_scales - b[None, :, :] / length_scales
    return np.exp(-0.5 * np.sum(diff ** 2, axis=2))


def _expected_improvement(x_seen: np.ndarray, y_seen: np.ndarray,
                          candidates: np.ndarray,
                          length_scales: np.ndarray,
                          noise: float = 1e-4) -> np.ndarray:
    y_mean = y_seen.mean()
    y_std = y_seen.std()
    if y_std < 1e-12:
        y_std = 1.0
    ys = (y_seen - y_mean) / y_std

    k = _se_kernel(x_seen, x_seen, length_scales) + noise * np.eye(len(x_seen))
    chol = np.linalg.cholesky(k)
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, ys))
    k_star = _se_kernel(x_seen, candidates, length_scales)
    mu = k_star.T @ alpha
    v = np.linalg.solve(chol, k_star)
    var = np.clip(1.0 - np.sum(v ** 2, axis=0), 1e-12, None)
    sigma = np.sqrt(var)

    best = ys.min()
    improvement = best - mu
    z = improvement / sigma
    pdf = np.exp(-0.5 * z ** 2) / np.sqrt(2 * np.pi)
    return improvement * ndtr(z) + sigma * pdf


def optimize(objective: Callable[[tuple[float, ...]], float],
             spec: TuneSpec) -> TuneResult:
    """Minimize the objective inside the bounds box under the budget.

    Returns the best evaluated point (never a surrogate optimum) and the
    full trace, whose length equals the budget exactly. Objective errors
    propagate wrapped with the offending point.
    """
    rng = np.random.default_rng(spec.seed)
    bounds = spec.bounds
    lows = np.array([lo for lo, _ in bounds])
    highs = np.array([hi for _, hi in bounds])
    length_scales = 0.2 * (highs - lows)

    def evaluate(point: np.ndarray, iteration: int) -> TracePoint:
        tup = tuple(float(v) for v in point)
        try:
            cost = float(objective(tup))
        except Exception as exc:
            raise ObjectiveEvaluationError(str(exc), tup) from exc
        return TracePoint(point=tup, cost=cost, iteration=iteration)

    trace: list[TracePoint] = []
    if spec.mode == "random":
        points = lows + rng.uniform(size=(spec.budget, len(bounds))) * (highs - lows)
        for i, p in enumerate(points):
            trace.append(evaluate(p, i))
    else:
        for i, p in enumerate(_latin_hypercube(rng, spec.init_samples, bounds)):
            trace.append(evaluate(p, i))
        for i in range(spec.init_samples, spec.budget):
            x_seen = np.array([t.point for t in trace])
            y_seen = np.array([t.cost for t in trace])
            candidates = lows + rng.uniform(
                size=(spec.candidates_per_step, len(bounds))) * (highs - lows)
            ei = _expected_improvement(x_seen, y_seen, candidates, length_scales)
            trace.append(evaluate(candidates[int(np.argmax(ei))], i))

    best = min(trace, key=lambda t: t.cost)
    return TuneResult(best_point=best.point, best_cost=best.cost, trace=tuple(trace))


def tune_detector(validation: Manifest,
                  load_audio: Callable[[StopRecord], np.ndarray],
                  resolve_audio_path: Callable[[StopRecord], str],
                  vad, officer_scorer, transcriber,
                  spec: TuneSpec) -> tuple[DetectorThresholds, TuneResult]:
    """Pick thresholds minimizing mean detection WER over validation stops.

    Chunk scores are threshold-independent, so they are computed once per
    stop; each objective evaluation only re-gates, re-merges, transcribes,
    and scores.
    """
    if len(validation) == 0:
        raise NearfieldError("validation manifest is empty")

    prepared = []
    for stop in validation.stops:
        samples = load_audio(stop)
        path = resolve_audio_path(stop)
        prepared.append((stop, path, score_chunks(samples, vad, officer_scorer)))

    def objective(point: tuple[float, ...]) -> float:
        thresholds = DetectorThresholds(*point)
        costs = []
        for stop, path, chunk_scores in prepared:
            detected = [d.segment for d in apply_thresholds(chunk_scores, thresholds)]
            result = evaluate_detection(detected, stop, transcriber, path)
            costs.append(result.wer.value)
        return float(np.mean(costs))

    result = optimize(objective, spec)
    return DetectorThresholds(*result.best_point), result
