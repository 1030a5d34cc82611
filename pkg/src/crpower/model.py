"""Domain types and per-realization closed-form power laws for the underlay link.

The secondary transmitter shares spectrum with a primary link and is limited
by an average transmit power (ATP) budget and an average interference power
(AIP) budget at the primary receiver.  Given Lagrange multipliers for those
budgets (and, for the energy-efficiency problem, a Dinkelbach cost factor),
the optimal per-fading-state transmit power is a water-filling expression
evaluated independently for each channel realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

LN2 = math.log(2.0)


class WaterLevelUnboundedError(ValueError):
    """Raised when every multiplier weighting the power is zero, so the
    water level (and the optimal power) is unbounded."""


def _require_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the link."""

    p_p: float = 0.06        # primary base station transmit power (W)
    noise_var: float = 0.01  # noise variance at the secondary receiver (W)
    zeta: float = 0.2        # amplifier coefficient
    p_c: float = 0.05        # constant circuit power (W)
    p_th: float = 0.1        # average transmit power budget (W)
    p_in: float = 0.06       # average interference power budget (W)

    def __post_init__(self):
        _require_finite(p_p=self.p_p, noise_var=self.noise_var, zeta=self.zeta,
                        p_c=self.p_c, p_th=self.p_th, p_in=self.p_in)
        if self.p_p < 0:
            raise ValueError("p_p must be >= 0")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be > 0")
        if self.zeta < 0:
            raise ValueError("zeta must be >= 0")
        if self.p_c < 0:
            raise ValueError("p_c must be >= 0")
        if self.zeta == 0 and self.p_c == 0:
            raise ValueError("zeta and p_c cannot both be zero "
                             "(power cost would vanish)")
        if self.p_th <= 0:
            raise ValueError("p_th must be > 0")
        if self.p_in <= 0:
            raise ValueError("p_in must be > 0")


@dataclass(frozen=True)
class ChannelRealization:
    """One block-fading draw of the three channel power gains."""

    g_ss: float  # secondary transmitter -> secondary receiver
    g_sp: float  # secondary transmitter -> primary receiver
    h_ps: float  # primary transmitter -> secondary receiver

    def __post_init__(self):
        _require_finite(g_ss=self.g_ss, g_sp=self.g_sp, h_ps=self.h_ps)
        if self.g_ss < 0 or self.g_sp < 0 or self.h_ps < 0:
            raise ValueError("channel power gains must be >= 0")


@dataclass(frozen=True)
class DualState:
    """Lagrange multipliers for the ATP/AIP budgets plus the Dinkelbach
    cost factor (zero for spectral-efficiency problems)."""

    tau: float
    mu: float
    eta: float = 0.0

    def __post_init__(self):
        _require_finite(tau=self.tau, mu=self.mu, eta=self.eta)
        if self.tau < 0 or self.mu < 0 or self.eta < 0:
            raise ValueError("tau, mu, eta must be >= 0")


class PolicyKind(Enum):
    SE = "se"
    EE = "ee"


def instantaneous_rate(p, ch: ChannelRealization, params: SystemParams):
    """Achievable rate (bits/s/Hz) of the secondary link at transmit power p."""
    _require_finite(p=p)
    if p < 0:
        raise ValueError("transmit power must be >= 0")
    return math.log2(1.0 + ch.g_ss * p / (ch.h_ps * params.p_p + params.noise_var))


def power_cost(p, params: SystemParams):
    """Total consumed power (W): amplifier draw plus circuit power."""
    _require_finite(p=p)
    if p < 0:
        raise ValueError("transmit power must be >= 0")
    return params.zeta * p + params.p_c


def power_se(ch: ChannelRealization, duals: DualState, params: SystemParams):
    """Rate-optimal transmit power for one realization (water-filling clip)."""
    return _power_closed_form(ch, duals.tau, duals.mu, 0.0, params)


def power_ee(ch: ChannelRealization, duals: DualState, params: SystemParams):
    """Energy-efficient transmit power; reduces to power_se when eta == 0."""
    return _power_closed_form(ch, duals.tau, duals.mu, duals.eta, params)


def _power_closed_form(ch, tau, mu, eta, params):
    denom = eta * params.zeta + tau + mu * ch.g_sp
    if denom <= 0.0:
        raise WaterLevelUnboundedError(
            "all multipliers weighting the power are zero; water level unbounded")
    if ch.g_ss == 0.0:
        return 0.0
    bracket = 1.0 / (denom * LN2) - (ch.h_ps * params.p_p + params.noise_var) / ch.g_ss
    return bracket if bracket > 0.0 else 0.0


# Array variants used by the solver and dataset labeling; same arithmetic as the
# scalar forms, applied elementwise.

def power_array(g_ss, g_sp, h_ps, tau, mu, eta, params: SystemParams):
    denom = (eta * params.zeta + tau + mu * np.asarray(g_sp)) * LN2
    if np.any(denom <= 0.0):
        raise WaterLevelUnboundedError(
            "all multipliers weighting the power are zero; water level unbounded")
    g_ss = np.asarray(g_ss)
    with np.errstate(divide="ignore"):
        bracket = 1.0 / denom - (np.asarray(h_ps) * params.p_p + params.noise_var) / g_ss
    return np.where(g_ss > 0.0, np.maximum(bracket, 0.0), 0.0)


def rate_array(p, g_ss, h_ps, params: SystemParams):
    return np.log2(1.0 + np.asarray(g_ss) * np.asarray(p)
                   / (np.asarray(h_ps) * params.p_p + params.noise_var))
