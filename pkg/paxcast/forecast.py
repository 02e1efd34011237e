"""
Point forecasts for one segment: the classical SARIMA baseline, S-ARIMA
(top correlated day-lags on raw counts), RARIMA (the same lags on the
fluctuations around the traffic flow constant) and the RW and SM baselines.

Every lag model is written in the flat form

    x_n = c + sum_j alpha_j x_{n - ar_j} + sum_m beta_m a_{n - ma_m}

where x is the (optionally differenced) count or fluctuation series and a the
innovations. Coefficients come from two-stage conditional least squares:
a pure autoregression on all lags yields residual estimates, then the
series is regressed on its AR lags and the lagged stage-one residuals.
Innovations before the first fitted point are taken as zero.

Functions:
    - expand_order_lags(): Flat AR/MA lag sets implied by a SARIMA order.
    - default_order_grid(): Candidate orders searched for the baseline.
    - fit_lag_model(): Shared estimator for explicit lag sets.
    - fit_baseline_sarima(), fit_s_arima(), fit_rarima(): Model fitting.
    - predict_one(), observe(): One-step forecast and innovation update.
    - baseline_rw(), baseline_sm(): Naive baselines.
    - select_order(): Pick a baseline order by adjusted R^2.
    - fitted_values(): In-sample one-step forecasts of a fitted model.
"""
from __future__ import annotations

import datetime
import itertools
import logging
import math
from dataclasses import dataclass
from dataclasses import replace
from enum import Enum

import numpy as np

from paxcast import stats
from paxcast.errors import DegenerateSeriesError
from paxcast.errors import EmptyInputError
from paxcast.errors import InsufficientDataError
from paxcast.errors import InsufficientHistoryError
from paxcast.errors import InvalidInputError
from paxcast.errors import NoViableOrderError
from paxcast.errors import RankDeficiencyError
from paxcast.errors import SchemaError
from paxcast.errors import SequencingError

logger = logging.getLogger(__name__)

DEFAULT_SEASON = 5
MAX_RESTRICTED_LAGS = 3
# stage-one residuals this small relative to the series mean no MA signal is left
NEGLIGIBLE_RESIDUAL = 1e-9


class ModelKind(str, Enum):
    SARIMA_BASELINE = "sarima_baseline"
    S_ARIMA = "s_arima"
    RARIMA = "rarima"
    RW = "rw"
    SM = "sm"
    BARIMA = "barima"


RESTRICTED_KINDS = (ModelKind.S_ARIMA, ModelKind.RARIMA)


@dataclass(frozen=True)
class SarimaOrder:
    p: int
    d: int
    q: int
    P: int
    D: int
    Q: int
    s: int = DEFAULT_SEASON

    def __post_init__(self):
        if min(self.p, self.q, self.P, self.Q) < 0:
            raise InvalidInputError(f"negative degree in order {self.label}")
        if self.p + self.q + self.P + self.Q < 1:
            raise InvalidInputError(f"order {self.label} has no AR or MA term")
        if self.d not in (0, 1) or self.D not in (0, 1):
            raise InvalidInputError(f"order {self.label}: d and D must be 0 or 1")
        if self.s < 2:
            raise InvalidInputError(f"order {self.label}: season must be at least 2")

    @property
    def label(self):
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})_{self.s}"

    def as_tuple(self):
        return (self.p, self.d, self.q, self.P, self.D, self.Q, self.s)

    @property
    def n_params(self):
        ar_lags, ma_lags = expand_order_lags(self)
        return len(ar_lags) + len(ma_lags)


@dataclass(frozen=True)
class LagModel:
    kind: ModelKind
    ar_lags: tuple
    ar_coeffs: tuple
    ma_lags: tuple = ()
    ma_coeffs: tuple = ()
    constant: float = 0.0
    intercept: float = 0.0
    innovations: tuple = ()
    diff_order: int = 0
    seasonal_diff_order: int = 0
    season: int = DEFAULT_SEASON
    order: SarimaOrder | None = None
    # index of the first training point with a fitted forecast
    fit_start: int = 0
    last_date: datetime.date | None = None
    train_start: datetime.date | None = None
    segment: str | None = None
    station_id: str | None = None
    train_mae: float | None = None
    adj_r2: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "ar_lags", tuple(int(v) for v in self.ar_lags))
        object.__setattr__(self, "ma_lags", tuple(int(v) for v in self.ma_lags))
        object.__setattr__(self, "ar_coeffs", tuple(float(v) for v in self.ar_coeffs))
        object.__setattr__(self, "ma_coeffs", tuple(float(v) for v in self.ma_coeffs))
        object.__setattr__(self, "innovations", tuple(float(v) for v in self.innovations))
        if len(self.ar_lags) != len(self.ar_coeffs):
            raise InvalidInputError("ar_lags and ar_coeffs differ in length")
        if len(self.ma_lags) != len(self.ma_coeffs):
            raise InvalidInputError("ma_lags and ma_coeffs differ in length")
        if any(lag < 1 for lag in self.ar_lags + self.ma_lags):
            raise InvalidInputError("lags must be positive")
        if self.kind in RESTRICTED_KINDS and (
            len(self.ar_lags) > MAX_RESTRICTED_LAGS
            or len(self.ma_lags) > MAX_RESTRICTED_LAGS
        ):
            raise InvalidInputError(
                f"{self.kind.value} uses at most {MAX_RESTRICTED_LAGS} lags",
            )

    @property
    def name(self):
        lags = ",".join(str(lag) for lag in self.ar_lags)
        if self.kind is ModelKind.S_ARIMA:
            return f"S-ARIMA({lags})"
        if self.kind is ModelKind.RARIMA:
            return f"RARIMA({lags})"
        if self.order is not None:
            return f"SARIMA{self.order.label}"
        return f"{self.kind.value}({lags})"

    def to_dict(self):
        def _iso(value):
            return None if value is None else value.isoformat()

        def _finite(value):
            return value if value is not None and math.isfinite(value) else None

        return {
            "kind": self.kind.value,
            "name": self.name,
            "ar_lags": list(self.ar_lags),
            "ar_coeffs": list(self.ar_coeffs),
            "ma_lags": list(self.ma_lags),
            "ma_coeffs": list(self.ma_coeffs),
            "constant": self.constant,
            "intercept": self.intercept,
            "innovations": list(self.innovations),
            "diff_order": self.diff_order,
            "seasonal_diff_order": self.seasonal_diff_order,
            "season": self.season,
            "order": None if self.order is None else list(self.order.as_tuple()),
            "fit_start": self.fit_start,
            "training": {
                "start": _iso(self.train_start),
                "end": _iso(self.last_date),
                "segment": self.segment,
                "station": self.station_id,
                "mae": _finite(self.train_mae),
                "adj_r2": _finite(self.adj_r2),
            },
        }

    @classmethod
    def from_dict(cls, payload):
        def _date(value):
            return None if value is None else datetime.date.fromisoformat(value)

        try:
            training = payload.get("training", {})
            order = payload.get("order")
            return cls(
                kind=payload["kind"],
                ar_lags=payload["ar_lags"],
                ar_coeffs=payload["ar_coeffs"],
                ma_lags=payload.get("ma_lags", ()),
                ma_coeffs=payload.get("ma_coeffs", ()),
                constant=float(payload.get("constant", 0.0)),
                intercept=float(payload.get("intercept", 0.0)),
                innovations=payload.get("innovations", ()),
                diff_order=int(payload.get("diff_order", 0)),
                seasonal_diff_order=int(payload.get("seasonal_diff_order", 0)),
                season=int(payload.get("season", DEFAULT_SEASON)),
                order=None if order is None else SarimaOrder(*order),
                fit_start=int(payload.get("fit_start", 0)),
                last_date=_date(training.get("end")),
                train_start=_date(training.get("start")),
                segment=training.get("segment"),
                station_id=training.get("station"),
                train_mae=training.get("mae"),
                adj_r2=training.get("adj_r2"),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise SchemaError(f"malformed model document: {err}") from err


@dataclass(frozen=True)
class Forecast:
    date: datetime.date | None
    point: float
    model_kind: ModelKind
    pre_clamp: float
    # last history date the forecast was computed from
    origin: datetime.date | None = None
    decision: object = None

    def __post_init__(self):
        object.__setattr__(self, "model_kind", ModelKind(self.model_kind))
        if self.point != max(0.0, self.pre_clamp):
            raise InvalidInputError("forecast point must equal max(0, pre_clamp)")

    @classmethod
    def of(cls, value, kind, date=None, origin=None, decision=None):
        value = float(value)
        return cls(
            date=date,
            point=max(0.0, value),
            model_kind=kind,
            pre_clamp=value,
            origin=origin,
            decision=decision,
        )


def _counts(series):
    return np.asarray(getattr(series, "counts", series), dtype=float)


def expand_order_lags(order):
    """
    Flat AR and MA lag sets of phi_p(B) Phi_P(B^s) and theta_q(B) Theta_Q(B^s).

    For example (2,0,2)(1,0,0)_5 gives AR lags (1, 2, 5, 6, 7), MA lags (1, 2).
    """
    ar_lags = {i + k * order.s for i in range(order.p + 1) for k in range(order.P + 1)}
    ma_lags = {i + k * order.s for i in range(order.q + 1) for k in range(order.Q + 1)}
    return tuple(sorted(ar_lags - {0})), tuple(sorted(ma_lags - {0}))


def default_order_grid(season=DEFAULT_SEASON):
    """p, q in {1, 2, 3}, P in {0, 1}, d = D = Q = 0"""
    return [
        SarimaOrder(p, 0, q, P, 0, 0, season)
        for p, q, P in itertools.product((1, 2, 3), (1, 2, 3), (0, 1))
    ]


def _difference_poly(diff_order, seasonal_diff_order, season):
    poly = np.array([1.0])
    if diff_order:
        poly = np.convolve(poly, [1.0, -1.0])
    if seasonal_diff_order:
        poly = np.convolve(poly, np.r_[1.0, np.zeros(season - 1), -1.0])
    return poly


def _apply_difference(y, poly):
    if len(poly) == 1:
        return y.copy()
    if len(y) < len(poly):
        return np.empty(0)
    return np.convolve(y, poly, mode="valid")


def _lagged(x, lags, start):
    n = len(x)
    return [x[start - lag:n - lag] for lag in lags]


def _solve(columns, target, lags):
    design = np.column_stack(columns)
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise RankDeficiencyError(lags, rank=rank, columns=design.shape[1])
    coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
    return coeffs


def _recursive_innovations(x, start, intercept, ar_lags, alpha, ma_lags, beta):
    innovations = np.zeros(len(x))
    for t in range(start, len(x)):
        prediction = intercept
        for lag, coeff in zip(ar_lags, alpha):
            prediction += coeff * x[t - lag]
        for lag, coeff in zip(ma_lags, beta):
            prediction += coeff * innovations[t - lag]
        innovations[t] = x[t] - prediction
    return innovations


def _estimate(x, ar_lags, ma_lags, intercept):
    """Two-stage conditional least squares on the working series x"""
    all_lags = sorted(set(ar_lags) | set(ma_lags))
    start = max(all_lags, default=0)
    rows = len(x) - start
    n_regressors = len(ar_lags) + len(ma_lags)
    if rows < n_regressors + int(intercept) + 2:
        raise InsufficientDataError(
            f"{len(x)} points cannot fit lags {all_lags} ({rows} usable rows)",
        )

    target = x[start:]
    ones = [np.ones(rows)] if intercept else []

    ma_active = bool(ma_lags)
    if ma_active:
        coeffs = _solve(ones + _lagged(x, all_lags, start), target, all_lags)
        stage_one = np.zeros(len(x))
        stage_one[start:] = target - np.column_stack(ones + _lagged(x, all_lags, start)) @ coeffs
        scale = max(1.0, float(np.mean(np.abs(x))))
        if np.std(stage_one[start:]) <= NEGLIGIBLE_RESIDUAL * scale:
            logger.debug(f"stage-one residuals vanish for lags {all_lags}; MA terms set to zero")
            ma_active = False

    columns = ones + _lagged(x, ar_lags, start)
    if ma_active:
        columns += _lagged(stage_one, ma_lags, start)
    if len(columns) == 0:
        raise InvalidInputError("a lag model needs at least one regressor")
    coeffs = _solve(columns, target, tuple(ar_lags) + tuple(ma_lags))

    offset = int(intercept)
    const = float(coeffs[0]) if intercept else 0.0
    alpha = coeffs[offset:offset + len(ar_lags)]
    beta = coeffs[offset + len(ar_lags):] if ma_active else np.zeros(len(ma_lags))

    innovations = _recursive_innovations(x, start, const, ar_lags, alpha, ma_lags, beta)

    residuals = innovations[start:]
    sst = float(np.sum((target - target.mean()) ** 2))
    if sst == 0.0:
        raise DegenerateSeriesError("training target has zero variance")
    r2 = 1.0 - float(residuals @ residuals) / sst
    n_active = len(ar_lags) + (len(ma_lags) if ma_active else 0)
    dof = rows - n_active - 1
    adj_r2 = 1.0 - (1.0 - r2) * (rows - 1) / dof if dof > 0 else -math.inf

    return {
        "intercept": const,
        "alpha": alpha,
        "beta": beta,
        "innovations": innovations,
        "start": start,
        "mae": float(np.mean(np.abs(residuals))),
        "adj_r2": adj_r2,
    }


def fit_lag_model(
    series,
    ar_lags,
    ma_lags=(),
    kind=ModelKind.S_ARIMA,
    intercept=True,
    constant=0.0,
    diff_order=0,
    seasonal_diff_order=0,
    season=DEFAULT_SEASON,
    order=None,
):
    """
    Fit a lag model with explicit lag sets.

    Args:
        series: SegmentSeries or 1-d array of counts
        ar_lags, ma_lags: day offsets, in the order the coefficients are reported
        kind: ModelKind recorded on the result
        intercept: fit the constant c of the flat form
        constant: subtracted from the counts before fitting, added back at prediction
        diff_order, seasonal_diff_order: differencing applied before fitting (0 or 1)
        season: season length used by seasonal differencing

    Returns:
        LagModel
    """
    counts = _counts(series)
    poly = _difference_poly(diff_order, seasonal_diff_order, season)
    x = _apply_difference(counts - constant, poly)
    fit = _estimate(x, tuple(ar_lags), tuple(ma_lags), intercept)

    # innovations live on the undifferenced axis
    shift = len(poly) - 1
    innovations = np.concatenate([np.zeros(shift), fit["innovations"]])

    model = LagModel(
        kind=kind,
        ar_lags=tuple(ar_lags),
        ar_coeffs=tuple(fit["alpha"]),
        ma_lags=tuple(ma_lags),
        ma_coeffs=tuple(fit["beta"]),
        constant=float(constant),
        intercept=fit["intercept"],
        innovations=tuple(innovations),
        diff_order=diff_order,
        seasonal_diff_order=seasonal_diff_order,
        season=season,
        order=order,
        fit_start=shift + fit["start"],
        last_date=getattr(series, "end", None),
        train_start=getattr(series, "start", None),
        segment=_segment_value(series),
        station_id=getattr(series, "station_id", None),
        train_mae=fit["mae"],
        adj_r2=fit["adj_r2"],
    )
    logger.debug(
        f"fitted {model.name}: alpha={np.round(fit['alpha'], 4).tolist()}"
        + f" beta={np.round(fit['beta'], 4).tolist()} mae={fit['mae']:.3f}",
    )
    return model


def _segment_value(series):
    segment = getattr(series, "segment", None)
    return None if segment is None else getattr(segment, "value", str(segment))


def _check_length(series, season):
    needed = 4 * season + 10
    if len(_counts(series)) < needed:
        raise InsufficientDataError(
            f"need at least {needed} training days for season {season},"
            + f" got {len(_counts(series))}",
        )


def fit_baseline_sarima(series, order):
    """Classical SARIMA with every lag implied by order, plus an intercept"""
    _check_length(series, order.s)
    ar_lags, ma_lags = expand_order_lags(order)
    return fit_lag_model(
        series,
        ar_lags,
        ma_lags,
        kind=ModelKind.SARIMA_BASELINE,
        intercept=True,
        diff_order=order.d,
        seasonal_diff_order=order.D,
        season=order.s,
        order=order,
    )


def _needs_difference(values, difference):
    """Difference once when the ADF test does not confirm stationarity"""
    if difference is not None:
        return bool(difference)
    try:
        report = stats.adf_stationarity(values)
    except (InsufficientDataError, DegenerateSeriesError):
        return False
    if not report.passed:
        logger.info(
            f"ADF statistic {report.statistic:.3f} above critical"
            + f" {report.critical_or_pvalue:.3f}; differencing once",
        )
    return not report.passed


def _restricted_lags(values, acf_result, k, max_lag, season, differenced):
    if acf_result is None:
        working = np.diff(values) if differenced else values
        acf_result = stats.acf(working, max_lag or 2 * season)
    return stats.top_lags(acf_result, min(k, MAX_RESTRICTED_LAGS))


def fit_s_arima(series, acf_result=None, k=3, season=DEFAULT_SEASON, max_lag=None, difference=None):
    """
    S-ARIMA(top.1, top.2, top.3): AR and MA terms at the k lags with the
    largest |autocorrelation|, fitted on raw counts with an intercept.

    Args:
        series: training SegmentSeries
        acf_result: AcfResult of the (differenced if needed) training counts;
            computed up to max_lag (default 2 * season) when omitted
        difference: force (True) or forbid (False) one differencing pass;
            None decides with the ADF test
    """
    _check_length(series, season)
    counts = _counts(series)
    differenced = _needs_difference(counts, difference)
    lags = _restricted_lags(counts, acf_result, k, max_lag, season, differenced)
    return fit_lag_model(
        series,
        lags,
        lags,
        kind=ModelKind.S_ARIMA,
        intercept=True,
        diff_order=int(differenced),
        season=season,
    )


def fit_rarima(series, acf_of_fluct=None, k=3, season=DEFAULT_SEASON, max_lag=None, difference=None):
    """
    RARIMA: the S-ARIMA lag structure fitted on the fluctuations around the
    traffic flow constant d, without intercept; forecasts add d back.
    """
    decomposition = stats.decompose(series)
    fluctuations = decomposition.fluctuations

    if np.ptp(fluctuations) == 0.0:
        lags = () if acf_of_fluct is None else tuple(stats.top_lags(acf_of_fluct, min(k, MAX_RESTRICTED_LAGS)))
        logger.info("fluctuations are identically zero; RARIMA reduces to the constant")
        return LagModel(
            kind=ModelKind.RARIMA,
            ar_lags=lags,
            ar_coeffs=(0.0,) * len(lags),
            ma_lags=lags,
            ma_coeffs=(0.0,) * len(lags),
            constant=decomposition.constant,
            innovations=(0.0,) * decomposition.source_len,
            season=season,
            fit_start=max(lags, default=0),
            last_date=getattr(series, "end", None),
            train_start=getattr(series, "start", None),
            segment=_segment_value(series),
            station_id=getattr(series, "station_id", None),
            train_mae=0.0,
        )

    _check_length(series, season)
    differenced = _needs_difference(fluctuations, difference)
    lags = _restricted_lags(fluctuations, acf_of_fluct, k, max_lag, season, differenced)
    return fit_lag_model(
        series,
        lags,
        lags,
        kind=ModelKind.RARIMA,
        intercept=False,
        constant=decomposition.constant,
        diff_order=int(differenced),
        season=season,
    )


def predict_one(model, history, date=None):
    """
    One-step forecast from history (raw counts, oldest first).

    Args:
        model: LagModel
        history: SegmentSeries or 1-d array of counts ending where the model's
            innovation history ends
        date: target date recorded on the Forecast

    Returns:
        Forecast with point = max(0, pre_clamp)
    """
    counts = _counts(history)
    end = getattr(history, "end", None)
    if model.last_date is not None and end is not None and end != model.last_date:
        raise SequencingError(
            f"history ends {end} but {model.name} has observed up to {model.last_date}",
        )

    poly = _difference_poly(model.diff_order, model.seasonal_diff_order, model.season)
    y = counts - model.constant
    x = _apply_difference(y, poly)
    for lag in model.ar_lags:
        if lag > len(x):
            raise InsufficientHistoryError(
                f"history of {len(counts)} days does not cover AR lag {lag}",
            )
    for lag in model.ma_lags:
        if lag > len(model.innovations):
            raise InsufficientHistoryError(
                f"innovation history of {len(model.innovations)} does not cover MA lag {lag}",
            )
    if len(y) < len(poly) - 1:
        raise InsufficientHistoryError(
            f"history of {len(counts)} days is too short to undo differencing",
        )

    value = model.intercept
    for lag, coeff in zip(model.ar_lags, model.ar_coeffs):
        value += coeff * x[-lag]
    for lag, coeff in zip(model.ma_lags, model.ma_coeffs):
        value += coeff * model.innovations[-lag]
    for j in range(1, len(poly)):
        value -= poly[j] * y[-j]

    return Forecast.of(value + model.constant, model.kind, date=date, origin=end)


def observe(model, truth, forecast):
    """Append the innovation truth - forecast.pre_clamp; coefficients are unchanged"""
    if forecast.model_kind is not model.kind:
        raise SequencingError(
            f"{forecast.model_kind.value} forecast fed to a {model.kind.value} model",
        )
    if model.last_date is not None and forecast.origin is not None and forecast.origin != model.last_date:
        raise SequencingError(
            f"forecast made from {forecast.origin} but {model.name} is at {model.last_date}",
        )
    truth = float(truth)
    if not math.isfinite(truth):
        raise InvalidInputError(f"observed value {truth} is not finite")
    return replace(
        model,
        innovations=model.innovations + (truth - forecast.pre_clamp,),
        last_date=forecast.date if forecast.date is not None else model.last_date,
    )


def baseline_rw(history, date=None):
    """Random walk: tomorrow equals the last observation"""
    counts = _counts(history)
    if counts.size == 0:
        raise EmptyInputError("random walk needs at least one observation")
    return Forecast.of(counts[-1], ModelKind.RW, date=date, origin=getattr(history, "end", None))


def baseline_sm(training, date=None):
    """Segment mean: the training average for this time of day"""
    counts = _counts(training)
    if counts.size == 0:
        raise EmptyInputError("segment mean needs a non-empty training set")
    return Forecast.of(stats.decompose(counts).constant, ModelKind.SM, date=date)


def select_order(series, candidate_orders):
    """
    Fit every candidate baseline order and keep the highest adjusted R^2;
    ties go to fewer parameters, then to the lexicographically smaller order,
    then to the earlier candidate.
    """
    candidate_orders = list(candidate_orders)
    if len(candidate_orders) < 2:
        raise InvalidInputError("select_order needs at least two candidate orders")

    fitted = []
    for index, order in enumerate(candidate_orders):
        try:
            model = fit_baseline_sarima(series, order)
        except (RankDeficiencyError, InsufficientDataError, DegenerateSeriesError) as err:
            logger.info(f"order {order.label} rejected: {err}")
            continue
        fitted.append((index, order, model))

    if not fitted:
        raise NoViableOrderError(
            f"none of {len(candidate_orders)} candidate orders could be fitted",
        )

    _, best, model = min(
        fitted,
        key=lambda item: (-item[2].adj_r2, item[1].n_params, item[1].as_tuple(), item[0]),
    )
    logger.info(f"selected SARIMA{best.label} with adjusted R^2 {model.adj_r2:.4f}")
    return best


def fitted_values(model, series):
    """
    In-sample one-step forecasts (pre-clamp, count scale) of a model on the
    series it was fitted on.

    Returns:
        (dates, forecasts) for the training points from model.fit_start on
    """
    counts = _counts(series)
    n_train = len(counts)
    innovations = np.asarray(model.innovations[:n_train])
    if len(innovations) != n_train:
        raise SequencingError("model innovations do not cover the training series")
    forecasts = counts[model.fit_start:] - innovations[model.fit_start:]
    dates = getattr(series, "dates", None)
    if dates is not None:
        dates = dates[model.fit_start:]
    return dates, forecasts
