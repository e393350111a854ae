"""Algebra linking the free parameters (lambda, Q1) to the far-field sheets.

Downstream, each fluid sheet is a uniform stream of thickness h_i whose
surface speed obeys Bernoulli with constant lambda:

    Q1     = sqrt(2*lam - 2*g*h1) * h1
    Q - Q1 = sqrt(2*lam - 2*g*h2) * h2

All quantities are density-normalised (pressure in velocity^2 units).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .errors import (
    DomainError,
    FluxTooSmall,
    GeometryOrderViolation,
    NonPositive,
    ParameterBelowMinimum,
)

log = logging.getLogger(__name__)

_BISECT_ITERS = 200
# Relative slack when comparing lambda to lambda_min, absorbs round-off of
# states built at h = H exactly.
_LAMBDA_SLACK = 1e-13


@dataclass(frozen=True)
class JetParameters:
    Q: float
    g: float
    H: float
    H1: float
    H2: float
    p_atm: float = 0.0

    @property
    def critical_flux(self) -> float:
        return 2.0 * math.sqrt(self.g * self.H**3)


@dataclass(frozen=True)
class DownstreamState:
    lam: float
    Q1: float
    h1: float
    h2: float

    @classmethod
    def from_params(cls, lam, Q1, jet: JetParameters) -> "DownstreamState":
        h1, h2 = heights_from_params(lam, Q1, jet.Q, jet.g, jet.H)
        return cls(float(lam), float(Q1), h1, h2)

    @classmethod
    def from_heights(cls, h1, h2, jet: JetParameters) -> "DownstreamState":
        Q1 = q1_from_heights(h1, h2, jet.Q, jet.g, H=jet.H)
        if h1 > 0:
            lam = lambda_from_height(Q1, h1, jet.g)
        else:
            lam = lambda_from_height(jet.Q - Q1, h2, jet.g)
        return cls(lam, Q1, float(h1), float(h2))

    def speeds(self, g):
        """Free-surface speeds sqrt(2 lam - 2 g h_i) on the two sheets."""
        return (math.sqrt(max(2 * self.lam - 2 * g * self.h1, 0.0)),
                math.sqrt(max(2 * self.lam - 2 * g * self.h2, 0.0)))


@dataclass(frozen=True)
class AsymptoticState:
    region: str
    u_inf: float
    band: tuple
    intercept: float
    slope: float

    def pressure(self, y):
        return self.intercept + self.slope * y


def validate_params(p: JetParameters) -> JetParameters:
    if not (p.g > 0 and p.Q > 0):
        raise NonPositive(f"need g > 0 and Q > 0, got g={p.g}, Q={p.Q}")
    if not (0 < p.H < p.H1 < p.H2):
        raise GeometryOrderViolation(
            f"need 0 < H < H1 < H2, got H={p.H}, H1={p.H1}, H2={p.H2}")
    if not p.Q > p.critical_flux:
        raise FluxTooSmall(
            f"Q={p.Q} must exceed 2*sqrt(g*H^3)={p.critical_flux}")
    return p


def lambda_min(Q1, Q, H, g):
    """Smallest Bernoulli constant compatible with sheets no thicker than H."""
    if not (0 <= Q1 <= Q):
        raise DomainError(f"Q1={Q1} outside [0, Q={Q}]")
    return max(Q1 * Q1, (Q - Q1) ** 2) / (2 * H * H) + g * H


def lambda_from_height(Q1, h, g):
    if not h > 0:
        raise DomainError(f"sheet height must be positive, got {h}")
    return Q1 * Q1 / (2 * h * h) + g * h


def q1_from_heights(h1, h2, Q, g, H=None):
    """Left flux for which both sheets share one Bernoulli constant.

    Eliminating lambda gives a quadratic in Q1; its admissible root is
    evaluated in rationalised form (sum in the denominator) to avoid
    cancellation near h1 == h2.
    """
    if h1 < 0 or h2 < 0 or (h1 == 0 and h2 == 0):
        raise DomainError(f"invalid heights h1={h1}, h2={h2}")
    if H is not None:
        if h1 > H or h2 > H:
            raise DomainError(f"heights must not exceed H={H}")
        if not Q > 2 * math.sqrt(g * H**3):
            raise DomainError("flux below the admissible threshold")
    scale = max(h1, h2) if H is None else H
    if h1 == 0:
        return 0.0
    if h2 == 0:
        return float(Q)
    if abs(h2 - h1) < 1e-14 * scale:
        return Q / 2.0
    disc = Q * Q + 2 * g * (h2 * h2 - h1 * h1) * (h2 - h1)
    return h1 * (Q * Q + 2 * g * (h2 - h1) * h2 * h2) / (Q * h1 + math.sqrt(disc) * h2)


def _decreasing_root(flux, lam, g, top):
    """Root of flux^2/(2t^2) + g t = lam on the decreasing branch in (0, top]."""
    if flux * flux == 0:  # also catches fluxes whose square underflows
        return 0.0
    t0 = (flux * flux / g) ** (1.0 / 3.0)
    hi = min(t0, top)
    f = lambda t: flux * flux / (2 * t * t) + g * t - lam
    if f(hi) >= 0:
        return hi
    lo = 0.0
    tol = 1e-12 * top
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def heights_from_params(lam, Q1, Q, g, H):
    """Asymptotic sheet thicknesses (h1, h2) for given (lambda, Q1)."""
    lmin = lambda_min(Q1, Q, H, g)
    if lam < lmin * (1 - _LAMBDA_SLACK):
        raise ParameterBelowMinimum(f"lambda={lam} below lambda_min={lmin}")
    h1 = _decreasing_root(Q1, lam, g, H)
    Q2 = Q - Q1
    h2 = _decreasing_root(Q2, lam, g, H)
    if Q2 > 0:
        t0 = (Q2 * Q2 / g) ** (1.0 / 3.0)
        if t0 < H and abs(Q2 * Q2 / (2 * H * H) + g * H - lam) <= 1e-12 * lam:
            log.warning("lambda coincides with the right branch value at t=H; "
                        "returning the decreasing-branch root h2=%r", h2)
    return h1, h2


def asymptotic_states(s: DownstreamState, p: JetParameters):
    """Far-field (left, right, upstream) uniform states."""
    Q, g = p.Q, p.g
    left = AsymptoticState("left_downstream", -s.Q1 / s.h1 if s.h1 > 0 else 0.0,
                           (0.0, s.h1), p.p_atm + g * s.h1, -g)
    right = AsymptoticState("right_downstream", (Q - s.Q1) / s.h2 if s.h2 > 0 else 0.0,
                            (0.0, s.h2), p.p_atm + g * s.h2, -g)
    w = p.H2 - p.H1
    up = AsymptoticState("upstream", Q / w, (p.H1, p.H2),
                         p.p_atm + s.lam - Q * Q / (2 * w * w), -g)
    return left, right, up


def upstream_pressure_alt(y, s: DownstreamState, p: JetParameters):
    """Upstream pressure written through the left sheet (equal to the direct form)."""
    return (p.p_atm + p.g * (s.h1 - y) + s.Q1**2 / (2 * s.h1**2)
            - p.Q**2 / (2 * (p.H1 - p.H2) ** 2))
