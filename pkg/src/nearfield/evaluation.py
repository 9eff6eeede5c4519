"""Subgroup WER reporting and mixed-effects regression.

Per-utterance WER varies strongly with per-stop recording quality, so
subgroup effects are estimated with a random-intercept model: WER is
regressed on role/race/gender fixed effects with the stop as a random
effect. The variance ratio is profiled out of a restricted likelihood and
maximized by golden-section search; with the ratio fixed, the coefficients
have a closed generalized-least-squares form.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Gender, Manifest, Race, SpeakerRole
from .errors import NearfieldError
from .metrics import wer

# Two-sided normal critical value at alpha = 0.05.
_Z_CRITICAL = 1.959963984540054

COEFFICIENT_NAMES = ("intercept", "role_officer", "race_black", "gender_female")

_OFFICER_ROLES = (SpeakerRole.PRIMARY_OFFICER, SpeakerRole.SECONDARY_OFFICER)


@dataclass(frozen=True)
class EvalRow:
    """One utterance's WER plus regression covariates.

    Pipeline rows always carry non-negative WER (enforced when rows are
    read from files); the fitting machinery itself accepts any real
    response, which simulation-based checks rely on.
    """

    stop_id: str
    utterance_id: str
    wer_value: float
    role: SpeakerRole
    race: Race
    gender: Gender


def build_eval_rows(manifest: Manifest,
                    hypotheses: Mapping[tuple[str, str], str]) -> list[EvalRow]:
    """Score every transcribed utterance; degenerate zero-reference rows drop.

    Officer rows carry the officer's race/gender, community rows the
    driver's; other roles carry unknowns.
    """
    rows: list[EvalRow] = []
    for stop in manifest.stops:
        for utt in stop.utterances:
            key = (stop.stop_id, utt.id)
            if key not in hypotheses:
                continue
            score = wer(utt.raw_text, hypotheses[key])
            if score.degenerate:
                continue
            if utt.speaker_role in _OFFICER_ROLES:
                race, gender = stop.officer_race, stop.officer_gender
            elif utt.speaker_role is SpeakerRole.COMMUNITY_MEMBER:
                race, gender = stop.driver_race, stop.driver_gender
            else:
                race, gender = Race.UNKNOWN, Gender.UNKNOWN
            rows.append(EvalRow(
                stop_id=stop.stop_id, utterance_id=utt.id,
                wer_value=score.value, role=utt.speaker_role,
                race=race, gender=gender))
    return rows


def load_eval_rows(path: str | Path) -> list[EvalRow]:
    """Read rows from CSV (with header) or JSONL, keyed stop_id/utt_id/wer/role/race/gender."""
    path = Path(path)
    records: list[dict]
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            records = list(csv.DictReader(fh))
    else:
        with open(path, encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
    rows = []
    for rec in records:
        value = float(rec["wer"])
        if value < 0:
            raise NearfieldError(
                f"row {rec.get('utt_id')!r}: wer must be non-negative, got {value}")
        rows.append(EvalRow(
            stop_id=rec["stop_id"], utterance_id=rec["utt_id"],
            wer_value=value, role=SpeakerRole(rec["role"]),
            race=Race(rec["race"]), gender=Gender(rec["gender"])))
    return rows


def save_eval_rows(rows: Sequence[EvalRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stop_id", "utt_id", "wer", "role", "race", "gender"])
            for r in rows:
                writer.writerow([r.stop_id, r.utterance_id, r.wer_value,
                                 r.role.value, r.race.value, r.gender.value])
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for r in rows:
                fh.write(json.dumps({
                    "stop_id": r.stop_id, "utt_id": r.utterance_id,
                    "wer": r.wer_value, "role": r.role.value,
                    "race": r.race.value, "gender": r.gender.value}) + "\n")


# ---------------------------------------------------------------------------
# Subgroup tables


@dataclass(frozen=True)
class SubgroupCell:
    group: tuple[tuple[str, str], ...]
    count: int
    mean_wer: float


def _field_value(row: EvalRow, field: str) -> str:
    if field == "role":
        if row.role in _OFFICER_ROLES:
            return "officer"
        if row.role is SpeakerRole.COMMUNITY_MEMBER:
            return "community"
        return row.role.value
    if field == "race":
        return row.race.value
    if field == "gender":
        return row.gender.value
    raise ValueError(f"unknown grouping field {field!r}")


def subgroup_table(rows: Sequence[EvalRow],
                   grouping: Sequence[str] = ("role", "race")) -> list[SubgroupCell]:
    """Mean WER and count per group, ordered by group key."""
    buckets: dict[tuple[tuple[str, str], ...], list[float]] = {}
    for row in rows:
        key = tuple((f, _field_value(row, f)) for f in grouping)
        buckets.setdefault(key, []).append(row.wer_value)
    # Summing in sorted order makes means exactly row-order invariant.
    cells = [SubgroupCell(group=key, count=len(vals),
                          mean_wer=float(np.mean(np.sort(vals))))
             for key, vals in buckets.items()]
    return sorted(cells, key=lambda c: c.group)


def format_subgroup_table(cells: Sequence[SubgroupCell]) -> str:
    """Plain-text table; bracketed counts next to each group's mean WER."""
    lines = []
    for cell in cells:
        label = " ".join(v.capitalize() for _, v in cell.group)
        lines.append(f"{label:<28s} [{cell.count}]  {100 * cell.mean_wer:6.2f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Mixed-effects regression


@dataclass(frozen=True)
class RegressionResult:
    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    variance_components: tuple[float, float]  # (sigma2_stop, sigma2_residual)
    significant: dict[str, bool]
    n_rows: int
    n_stops: int
    excluded: dict[str, int]
    log_lambda: float

    def to_json(self) -> dict:
        return {
            "coefficients": self.coefficients,
            "standard_errors": self.standard_errors,
            "variance_components": {
                "sigma2_stop": self.variance_components[0],
                "sigma2_residual": self.variance_components[1],
            },
            "significant": self.significant,
            "n_rows": self.n_rows,
            "n_stops": self.n_stops,
            "excluded_rows": self.excluded,
            "estimator": "random-intercept GLS, profiled restricted likelihood",
            "significance_test": "two-sided normal, alpha=0.05",
        }


def _design(rows: Sequence[EvalRow]) -> tuple[np.ndarray, np.ndarray, list[str], dict[str, int]]:
    excluded = {"role": 0, "race": 0, "gender": 0}
    xs, ys, stops = [], [], []
    for row in rows:
        if row.role in _OFFICER_ROLES:
            role = 1.0
        elif row.role is SpeakerRole.COMMUNITY_MEMBER:
            role = 0.0
        else:
            excluded["role"] += 1
            continue
        if row.race is Race.BLACK:
            race = 1.0
        elif row.race is Race.WHITE:
            race = 0.0
        else:
            excluded["race"] += 1
            continue
        if row.gender is Gender.FEMALE:
            gender = 1.0
        elif row.gender is Gender.MALE:
            gender = 0.0
        else:
            excluded["gender"] += 1
            continue
        xs.append([1.0, role, race, gender])
        ys.append(row.wer_value)
        stops.append(row.stop_id)
    return np.asarray(xs), np.asarray(ys), stops, excluded


def _group_indices(stops: list[str]) -> list[np.ndarray]:
    order: dict[str, list[int]] = {}
    for i, sid in enumerate(stops):
        order.setdefault(sid, []).append(i)
    return [np.asarray(ix) for ix in order.values()]


def gls_fit(x: np.ndarray, y: np.ndarray, groups: list[np.ndarray],
            lam: float) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Closed-form GLS at a fixed variance ratio lam = s2_stop / s2_res.

    V = I + lam * ZZ' is block diagonal; Sherman-Morrison gives
    V_g^{-1} = I - (lam / (1 + lam n_g)) * 11'. Returns (beta,
    (X'V^{-1}X)^{-1}, r'V^{-1}r, log|V|). lam = 0 reduces exactly to OLS.
    """
    p = x.shape[1]
    xtvx = np.zeros((p, p))
    xtvy = np.zeros(p)
    logdet_v = 0.0
    for idx in groups:
        xg, yg = x[idx], y[idx]
        n_g = len(idx)
        c = lam / (1.0 + lam * n_g)
        xg_sum = xg.sum(axis=0)
        yg_sum = yg.sum()
        xtvx += xg.T @ xg - c * np.outer(xg_sum, xg_sum)
        xtvy += xg.T @ yg - c * xg_sum * yg_sum
        logdet_v += math.log1p(lam * n_g)
    xtvx_inv = np.linalg.inv(xtvx)
    beta = xtvx_inv @ xtvy
    r = y - x @ beta
    rvr = 0.0
    for idx in groups:
        rg = r[idx]
        c = lam / (1.0 + lam * len(idx))
        rvr += float(rg @ rg - c * rg.sum() ** 2)
    return beta, xtvx_inv, rvr, logdet_v


def restricted_loglik(x: np.ndarray, y: np.ndarray, groups: list[np.ndarray],
                      lam: float) -> float:
    """Profiled restricted log-likelihood at lam (constants dropped)."""
    n, p = x.shape
    _, xtvx_inv, rvr, logdet_v = gls_fit(x, y, groups, lam)
    if rvr <= 0.0:
        return -np.inf
    sign, logdet_xtvx_inv = np.linalg.slogdet(xtvx_inv)
    if sign <= 0:
        return -np.inf
    # log|X'V^{-1}X| = -log|(X'V^{-1}X)^{-1}|
    return -0.5 * (logdet_v + (n - p) * math.log(rvr) - logdet_xtvx_inv)


def _golden_section_max(fn, lo: float, hi: float, rel_tol: float = 1e-6) -> float:
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fn(c), fn(d)
    while abs(b - a) > rel_tol * max(1.0, abs(a) + abs(b)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def fit_mixed_effects(rows: Sequence[EvalRow],
                      log_lambda_range: tuple[float, float] = (-10.0, 10.0),
                      ) -> RegressionResult:
    """Random-intercept regression of WER on role/race/gender.

    Rows with out-of-coding demographic levels are excluded and counted.
    Needs at least two stops and a full-rank design. The sign convention
    matches the reporting tables: negative role_officer means officers'
    utterances score lower (better) WER.
    """
    x, y, stops, excluded = _design(rows)
    if len(x) == 0:
        raise NearfieldError("no usable rows after exclusions")
    groups = _group_indices(stops)
    if len(groups) < 2:
        raise NearfieldError("mixed-effects fit requires rows from at least 2 stops")
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise NearfieldError(
            "design matrix is rank deficient; a covariate level is missing")
    _, _, rvr0, _ = gls_fit(x, y, groups, 0.0)
    if rvr0 <= 1e-12 * max(1.0, float(y @ y)):
        raise NearfieldError(
            "responses are perfectly explained; residual variance is zero")

    def criterion(log_lam: float) -> float:
        return restricted_loglik(x, y, groups, math.exp(log_lam))

    log_lam = _golden_section_max(criterion, *log_lambda_range)
    lam = math.exp(log_lam)
    beta, xtvx_inv, rvr, _ = gls_fit(x, y, groups, lam)
    n, p = x.shape
    sigma2_res = rvr / (n - p)
    sigma2_stop = lam * sigma2_res
    cov = sigma2_res * xtvx_inv
    ses = np.sqrt(np.diag(cov))

    coefficients = dict(zip(COEFFICIENT_NAMES, (float(b) for b in beta)))
    standard_errors = dict(zip(COEFFICIENT_NAMES, (float(s) for s in ses)))
    significant = {name: bool(abs(coefficients[name]) > _Z_CRITICAL * standard_errors[name])
                   for name in COEFFICIENT_NAMES}
    return RegressionResult(
        coefficients=coefficients,
        standard_errors=standard_errors,
        variance_components=(float(sigma2_stop), float(sigma2_res)),
        significant=significant,
        n_rows=n,
        n_stops=len(groups),
        excluded=excluded,
        log_lambda=float(log_lam),
    )


def format_regression_table(result: RegressionResult) -> str:
    """Coefficient table with stars on significant entries."""
    labels = {
        "role_officer": "Role [Officer]",
        "race_black": "Race [Black]",
        "gender_female": "Gender [F]",
        "intercept": "Intercept",
    }
    lines = []
    for name in ("role_officer", "race_black", "gender_female", "intercept"):
        star = "*" if result.significant[name] else " "
        lines.append(f"{labels[name]:<16s} {result.coefficients[name]:+.3f}{star}"
                     f"  (se {result.standard_errors[name]:.3f})")
    s_stop, s_res = result.variance_components
    lines.append(f"{'Var [stop]':<16s} {s_stop:.4f}")
    lines.append(f"{'Var [residual]':<16s} {s_res:.4f}")
    return "\n".join(lines)
