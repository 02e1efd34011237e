"""
BARIMA: a two-class Gaussian naive Bayes rule that picks S-ARIMA (class A)
or RARIMA (class B) before each prediction.

The single attribute of a model is its forecast minus the training traffic
flow constant. Class A wins a decision when

    P(A) N(eps_A; mu_A, sigma_A) > P(B) N(eps_B; mu_B, sigma_B)

and class B wins otherwise, ties included. Priors are add-one smoothed.
"""
from __future__ import annotations

import datetime
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from paxcast import forecast
from paxcast import stats
from paxcast.errors import DegenerateSeriesError
from paxcast.errors import InsufficientDataError
from paxcast.errors import InvalidInputError
from paxcast.errors import SchemaError
from paxcast.errors import UndertrainedClassError
from paxcast.forecast import ModelKind

logger = logging.getLogger(__name__)

MIN_TRAINING_STEPS = 10
MIN_CLASS_SAMPLES = 2

DECISION_COLUMNS = [
    "date",
    "attribute_a",
    "attribute_b",
    "log_score_a",
    "log_score_b",
    "score_a",
    "score_b",
    "chosen",
]


@dataclass(frozen=True)
class HybridSelector:
    prior_a: float
    prior_b: float
    gauss_a: stats.GaussianFit | None
    gauss_b: stats.GaussianFit | None
    n_total: int
    n_a: int
    n_b: int
    # training traffic flow constant, frozen at fit time
    constant: float
    fallback: bool = False
    fallback_reason: str | None = None

    def __post_init__(self):
        if not math.isclose(self.prior_a + self.prior_b, 1.0, abs_tol=1e-12):
            raise InvalidInputError("class priors must sum to 1")
        if not self.fallback and (self.gauss_a is None or self.gauss_b is None):
            raise InvalidInputError("a trained selector needs both class densities")

    def to_dict(self):
        return {
            "kind": "selector",
            "prior_a": self.prior_a,
            "prior_b": self.prior_b,
            "gauss_a": None if self.gauss_a is None else self.gauss_a.to_dict(),
            "gauss_b": None if self.gauss_b is None else self.gauss_b.to_dict(),
            "counts": {"N": self.n_total, "N_A": self.n_a, "N_B": self.n_b},
            "constant": self.constant,
            "fallback": self.fallback,
            "fallback_reason": self.fallback_reason,
        }

    @classmethod
    def from_dict(cls, payload):
        def _gauss(value):
            return None if value is None else stats.GaussianFit(**value)

        try:
            return cls(
                prior_a=float(payload["prior_a"]),
                prior_b=float(payload["prior_b"]),
                gauss_a=_gauss(payload.get("gauss_a")),
                gauss_b=_gauss(payload.get("gauss_b")),
                n_total=int(payload["counts"]["N"]),
                n_a=int(payload["counts"]["N_A"]),
                n_b=int(payload["counts"]["N_B"]),
                constant=float(payload["constant"]),
                fallback=bool(payload.get("fallback", False)),
                fallback_reason=payload.get("fallback_reason"),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise SchemaError(f"malformed selector document: {err}") from err


@dataclass(frozen=True)
class SelectionDecision:
    chosen: ModelKind
    score_a: float
    score_b: float
    attribute_a: float
    attribute_b: float
    date: datetime.date | None = None
    fallback: bool = False
    # log(prior * density); -inf for a class without a density
    log_score_a: float = -math.inf
    log_score_b: float = -math.inf

    def to_row(self):
        def _finite(value):
            return value if math.isfinite(value) else None

        return {
            "date": None if self.date is None else self.date.isoformat(),
            "attribute_a": self.attribute_a,
            "attribute_b": self.attribute_b,
            "log_score_a": _finite(self.log_score_a),
            "log_score_b": _finite(self.log_score_b),
            "score_a": self.score_a,
            "score_b": self.score_b,
            "chosen": ModelKind(self.chosen).value,
        }


def train_selector(train_truth, fc_a, fc_b, constant, strict=False):
    """
    Train the selector on in-sample one-step forecasts.

    Each step is labeled with the model of smaller absolute error (ties go
    to A); priors are (N_i + 1) / (N + 2) and each class density is fitted
    on its own model's attribute over the steps that class won.

    Args:
        train_truth: SegmentSeries or array of true counts over the training tail
        fc_a: S-ARIMA one-step forecasts aligned with train_truth
        fc_b: RARIMA one-step forecasts aligned with train_truth
        constant: training traffic flow constant d
        strict: raise UndertrainedClassError instead of falling back

    Returns:
        HybridSelector; when a class has fewer than two samples it is flagged
        as fallback and always chooses RARIMA
    """
    truth = np.asarray(getattr(train_truth, "counts", train_truth), dtype=float)
    fc_a = np.asarray(fc_a, dtype=float)
    fc_b = np.asarray(fc_b, dtype=float)
    if not len(truth) == len(fc_a) == len(fc_b):
        raise InvalidInputError(
            f"truth and forecasts differ in length ({len(truth)}, {len(fc_a)}, {len(fc_b)})",
        )
    if len(truth) < MIN_TRAINING_STEPS:
        raise InsufficientDataError(
            f"selector needs {MIN_TRAINING_STEPS} training steps, got {len(truth)}",
        )
    if not (np.all(np.isfinite(truth)) and np.all(np.isfinite(fc_a)) and np.all(np.isfinite(fc_b))):
        raise InvalidInputError("selector training data must be finite")

    a_wins = np.abs(truth - fc_a) <= np.abs(truth - fc_b)
    n_total = len(truth)
    n_a = int(a_wins.sum())
    n_b = n_total - n_a
    prior_a = (n_a + 1) / (n_total + 2)

    attribute_a = fc_a - constant
    attribute_b = fc_b - constant

    problems = []
    gauss = {}
    for name, samples in (("A", attribute_a[a_wins]), ("B", attribute_b[~a_wins])):
        if len(samples) < MIN_CLASS_SAMPLES:
            problems.append(f"class {name} has {len(samples)} labeled samples")
            gauss[name] = None
            continue
        try:
            gauss[name] = stats.fit_gaussian(samples)
        except DegenerateSeriesError:
            problems.append(f"class {name} attributes are all identical")
            gauss[name] = None

    reason = "; ".join(problems) or None
    if reason:
        if strict:
            raise UndertrainedClassError(reason)
        logger.warning(f"selector undertrained ({reason}); falling back to RARIMA")

    return HybridSelector(
        prior_a=prior_a,
        prior_b=1.0 - prior_a,
        gauss_a=gauss["A"],
        gauss_b=gauss["B"],
        n_total=n_total,
        n_a=n_a,
        n_b=n_b,
        constant=float(constant),
        fallback=reason is not None,
        fallback_reason=reason,
    )


def _log_score(prior, gauss, attribute):
    if gauss is None:
        return -math.inf
    return math.log(prior) + gauss.logpdf(attribute)


def select(selector, fc_a, fc_b, constant=None):
    """
    Apply the decision rule to one pair of forecasts.

    Scores are compared in log space. log_score_a and log_score_b carry
    the compared values; score_a and score_b report prior * density and
    may underflow to zero for attributes far out in a class tail.
    """
    constant = selector.constant if constant is None else constant
    attribute_a = float(fc_a.pre_clamp - constant)
    attribute_b = float(fc_b.pre_clamp - constant)
    if not (math.isfinite(attribute_a) and math.isfinite(attribute_b)):
        raise InvalidInputError("selection attributes must be finite")

    log_a = _log_score(selector.prior_a, selector.gauss_a, attribute_a)
    log_b = _log_score(selector.prior_b, selector.gauss_b, attribute_b)

    if selector.fallback:
        chosen = ModelKind.RARIMA
    else:
        chosen = ModelKind.S_ARIMA if log_a > log_b else ModelKind.RARIMA

    return SelectionDecision(
        chosen=chosen,
        score_a=math.exp(log_a),
        score_b=math.exp(log_b),
        attribute_a=attribute_a,
        attribute_b=attribute_b,
        date=fc_a.date if fc_a.date is not None else fc_b.date,
        fallback=selector.fallback,
        log_score_a=log_a,
        log_score_b=log_b,
    )


def combine(selector, fc_a, fc_b, constant=None):
    """The chosen forecast, re-tagged as BARIMA and carrying the decision"""
    decision = select(selector, fc_a, fc_b, constant)
    chosen = fc_a if decision.chosen is ModelKind.S_ARIMA else fc_b
    return forecast.Forecast.of(
        chosen.pre_clamp,
        ModelKind.BARIMA,
        date=chosen.date,
        origin=chosen.origin,
        decision=decision,
    )


def predict_hybrid(selector, model_a, model_b, history, date=None):
    """
    Forecast with both models and return the selected one.

    Both models must afterwards observe the same truth through
    forecast.observe() so their innovation histories stay complete.
    """
    fc_a = forecast.predict_one(model_a, history, date)
    fc_b = forecast.predict_one(model_b, history, date)
    return combine(selector, fc_a, fc_b)


def decisions_frame(decisions):
    """Per-step decisions as a DataFrame with the decision CSV columns"""
    return pd.DataFrame([d.to_row() for d in decisions], columns=DECISION_COLUMNS)
