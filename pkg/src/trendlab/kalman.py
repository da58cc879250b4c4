"""Two-dimensional linear-Gaussian state-space model used as the price forecaster.

Model::

    x[t+1] = Phi x[t] + c[t] + w[t],   w ~ N(0, Q)
    z[t]   = H x[t] + v[t],            v ~ N(0, R)

with the fifteen coefficients ``p1..p15`` mapped to the matrices by
:func:`build_matrices`. The state is ``(level, slope)``-like but nothing
forces that interpretation; the optimizer is free to use the coefficients
however the trading objective prefers.

The step functions (:func:`predict`, :func:`forecast_observation`,
:func:`update`) work on numpy arrays and are meant for inspection and
testing. :func:`filter_and_forecast` runs the same recursion with the 2x2
algebra unrolled on Python floats, since it sits inside the optimizer loop.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .errors import EmptySeries, NonFiniteInput

N_PARAMS = 15


def variance_floor(z_hat: float) -> float:
    """Lower bound applied to the innovation variance."""
    return 1e-12 * max(1.0, z_hat * z_hat)


@dataclass(frozen=True)
class KalmanParams:
    """Raw model coefficients. Any real values are accepted; variance
    coefficients (p9, p10, p11) are projected to be nonnegative when the
    matrices are built."""

    p1: float = 0.0
    p2: float = 0.0
    p3: float = 0.0
    p4: float = 0.0
    p5: float = 0.0
    p6: float = 0.0
    p7: float = 0.0
    p8: float = 0.0
    p9: float = 0.0
    p10: float = 0.0
    p11: float = 0.0
    p12: float = 0.0
    p13: float = 0.0
    p14: float = 0.0
    p15: float = 0.0

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> "KalmanParams":
        if len(values) != N_PARAMS:
            raise ValueError(f"expected {N_PARAMS} coefficients, got {len(values)}")
        return cls(*(float(v) for v in values))

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    @staticmethod
    def names() -> list[str]:
        return [f"p{i}" for i in range(1, N_PARAMS + 1)]


@dataclass(frozen=True)
class ModelMatrices:
    Phi: np.ndarray  # (2, 2), Phi[1, 0] == 0
    H: np.ndarray  # (2,), observation row
    Q: np.ndarray  # (2, 2), L L^T
    R: float
    P0: np.ndarray  # (2, 2), diagonal
    control: tuple[float, float, float, float]  # (p12, p13, p14, p15)


@dataclass(frozen=True)
class KalmanState:
    x: np.ndarray
    P: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class Forecast:
    z_hat: float
    s: float


@dataclass(frozen=True)
class Forecasts:
    """One-step-ahead forecasts; ``z_hat[t]`` predicts ``closes[t + 1]``."""

    z_hat: np.ndarray
    s: np.ndarray

    def __len__(self) -> int:
        return len(self.z_hat)

    def __getitem__(self, i: int) -> Forecast:
        return Forecast(float(self.z_hat[i]), float(self.s[i]))


def build_matrices(params: KalmanParams) -> ModelMatrices:
    p = params
    Phi = np.array([[p.p1, p.p2], [0.0, p.p3]])
    H = np.array([p.p4, p.p5])
    L = np.array([[p.p6, 0.0], [p.p7, p.p8]])
    Q = L @ L.T
    Q = 0.5 * (Q + Q.T)
    P0 = np.diag([max(p.p10, 0.0), max(p.p11, 0.0)])
    return ModelMatrices(
        Phi=Phi,
        H=H,
        Q=Q,
        R=max(p.p9, 0.0),
        P0=P0,
        control=(p.p12, p.p13, p.p14, p.p15),
    )


def control_term(params: KalmanParams, k_ref: float) -> np.ndarray:
    """Control input ``c_t`` for reference level ``k_ref``."""
    return np.array(
        [params.p12 * (params.p13 - k_ref), params.p14 * (params.p15 - k_ref)]
    )


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def predict(state: KalmanState, m: ModelMatrices, c: np.ndarray) -> KalmanState:
    x = m.Phi @ state.x + c
    P = _symmetrize(m.Phi @ state.P @ m.Phi.T + m.Q)
    return KalmanState(x=x, P=P, t=state.t + 1)


def forecast_observation(state: KalmanState, m: ModelMatrices) -> Forecast:
    z_hat = float(m.H @ state.x)
    s = float(m.H @ state.P @ m.H) + m.R
    return Forecast(z_hat=z_hat, s=max(s, variance_floor(z_hat)))


def update(state: KalmanState, m: ModelMatrices, z: float) -> KalmanState:
    """Condition the predicted state on observation ``z``."""
    fc = forecast_observation(state, m)
    PHt = state.P @ m.H
    K = PHt / fc.s
    x = state.x + K * (z - fc.z_hat)
    P = _symmetrize((np.eye(2) - np.outer(K, m.H)) @ state.P)
    return KalmanState(x=x, P=P, t=state.t)


def initial_state(params: KalmanParams, first_close: float) -> KalmanState:
    return KalmanState(
        x=np.array([float(first_close), 0.0]), P=build_matrices(params).P0.copy(), t=0
    )


def filter_and_forecast(
    params: KalmanParams, closes: Sequence[float], k_ref: Optional[float] = None
) -> Forecasts:
    """Run the filter over ``closes`` and return one-step-ahead forecasts.

    Args:
        params: model coefficients.
        closes: observed closes, oldest first.
        k_ref: constant reference level for the control term. ``None`` uses
            the most recent observed close at each prediction.

    Returns:
        ``len(closes) - 1`` forecasts; entry ``t`` uses ``closes[:t + 1]`` only.
    """
    z = np.asarray(closes, dtype=float)
    if z.ndim != 1 or len(z) < 2:
        raise EmptySeries("need at least 2 closes to produce a forecast")
    if not np.all(np.isfinite(z)):
        raise NonFiniteInput("closes contain NaN or infinite values")

    p = params
    p1, p2, p3, h0, h1 = p.p1, p.p2, p.p3, p.p4, p.p5
    q00 = p.p6 * p.p6
    q01 = p.p6 * p.p7
    q11 = p.p7 * p.p7 + p.p8 * p.p8
    r = max(p.p9, 0.0)
    p12, p13, p14, p15 = p.p12, p.p13, p.p14, p.p15

    zs = z.tolist()
    n = len(zs)
    out_z = [0.0] * (n - 1)
    out_s = [0.0] * (n - 1)

    a, b = zs[0], 0.0
    P00, P01, P11 = max(p.p10, 0.0), 0.0, max(p.p11, 0.0)
    for t in range(n - 1):
        k = zs[t] if k_ref is None else k_ref
        # predict
        a, b = p1 * a + p2 * b + p12 * (p13 - k), p3 * b + p14 * (p15 - k)
        u0 = p1 * P00 + p2 * P01
        u1 = p1 * P01 + p2 * P11
        n00 = u0 * p1 + u1 * p2 + q00
        n01 = u1 * p3
        n10 = p3 * P01 * p1 + p3 * P11 * p2
        P00, P01, P11 = n00, 0.5 * (n01 + n10) + q01, p3 * P11 * p3 + q11
        # forecast
        z_hat = h0 * a + h1 * b
        ph0 = P00 * h0 + P01 * h1
        ph1 = P01 * h0 + P11 * h1
        s = h0 * ph0 + h1 * ph1 + r
        floor = 1e-12 * max(1.0, z_hat * z_hat)
        if s < floor:
            s = floor
        out_z[t] = z_hat
        out_s[t] = s
        # update on the next close
        k0 = ph0 / s
        k1 = ph1 / s
        innov = zs[t + 1] - z_hat
        a += k0 * innov
        b += k1 * innov
        m01 = P01 - k0 * ph1
        m10 = P01 - k1 * ph0
        P00, P01, P11 = P00 - k0 * ph0, 0.5 * (m01 + m10), P11 - k1 * ph1

    return Forecasts(z_hat=np.array(out_z), s=np.array(out_s))


def run_filter(
    params: KalmanParams, closes: Sequence[float], k_ref: Optional[float] = None
) -> list[KalmanState]:
    """Filtered states for every close, built from the numpy step functions.

    Slower than :func:`filter_and_forecast`; useful for diagnostics.
    """
    z = np.asarray(closes, dtype=float)
    if len(z) < 1:
        raise EmptySeries("no closes")
    if not np.all(np.isfinite(z)):
        raise NonFiniteInput("closes contain NaN or infinite values")
    m = build_matrices(params)
    state = initial_state(params, z[0])
    states = [state]
    for t in range(len(z) - 1):
        k = z[t] if k_ref is None else k_ref
        state = update(predict(state, m, control_term(params, k)), m, z[t + 1])
        states.append(state)
    return states

