"""Evaluable space-time fields with the structure metadata the quadrature uses.

A ScalarField bundles a vectorized evaluator with whatever is known about
the field's shape: a uniform bound, how fast it dies out into the past, an
exact Gaussian-smoothing closure when one exists, a spatial window outside
which the field equals declared limits, or a growth envelope.  Evaluation
routines pick their integration strategy from this metadata and fall back
to generic Gauss-Hermite sampling when nothing better is declared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

HOLDER = "holder"
SMOOTH = "smooth"


@dataclass
class ScalarField:
    """A field u(x, t) with declared bound/decay/structure metadata.

    evalf takes points of shape (..., n) and times of shape (...) and
    returns values of shape (...).  sup_bound is a uniform bound (or the
    bounded part when a growth envelope is declared).
    """

    evalf: Callable
    sup_bound: float
    n: int = 1
    smoothness_tag: str = SMOOTH
    # Optional structure, all consumed by the quadrature dispatch:
    heat_smoothed: Callable | None = None      # (x, t, sig) -> Gaussian average at scale sig
    past_envelope: Callable | None = None      # (sig, t) -> sup_y |u(y, t - sig)|
    freq_hint: float = 0.0                     # dominant spatial frequency, if oscillatory
    window: tuple | None = None                # (lo, hi): outside, u equals the limits below
    limits: tuple = (0.0, 0.0)                 # (left, right) values beyond the window
    growth: tuple | None = None                # (coef, power): |u| <= sup_bound + coef*|y|^power
    space_breakpoints: tuple = ()
    time_breakpoints: tuple = ()
    time_independent: bool = False
    space_independent: bool = False
    time_exp_rate: float | None = None         # u(y, tau) = e^{rate*tau} * g(y) when set
    heat_residual: Callable | None = None      # (x, t) -> (d/dt - Laplacian) u, when analytic

    def __call__(self, x, t):
        return self.evalf(np.asarray(x, dtype=float), np.asarray(t, dtype=float))

    def value_at(self, x, t) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(self.evalf(x.reshape(1, -1), np.asarray([t], dtype=float))[0])

    def envelope(self, sig: np.ndarray, t: float) -> np.ndarray:
        if self.past_envelope is not None:
            return np.asarray(self.past_envelope(sig, t), dtype=float)
        return np.full_like(np.asarray(sig, dtype=float), self.sup_bound)


def shifted(u: ScalarField, dx, dt: float) -> ScalarField:
    """The translate u(. - dx, . - dt) with metadata moved along."""
    dx = np.atleast_1d(np.asarray(dx, dtype=float))

    def ev(x, t):
        return u.evalf(x - dx, t - dt)

    out = replace(u, evalf=ev)
    if u.heat_smoothed is not None:
        out.heat_smoothed = lambda x, t, s: u.heat_smoothed(np.asarray(x) - dx, t - dt, s)
    if u.past_envelope is not None:
        out.past_envelope = lambda s, t: u.past_envelope(s, t - dt)
    if u.window is not None:
        out.window = (u.window[0] + dx[0], u.window[1] + dx[0])
    out.space_breakpoints = tuple(b + dx[0] for b in u.space_breakpoints)
    out.time_breakpoints = tuple(b + dt for b in u.time_breakpoints)
    if u.heat_residual is not None:
        out.heat_residual = lambda x, t: u.heat_residual(np.asarray(x) - dx, t - dt)
    return out


def parabolic_rescale(u: ScalarField, r: float) -> ScalarField:
    """u_r(x, t) = u(x / r, t / r^2) with metadata rescaled."""

    def ev(x, t):
        return u.evalf(x / r, t / (r * r))

    out = replace(u, evalf=ev)
    if u.heat_smoothed is not None:
        out.heat_smoothed = lambda x, t, s: u.heat_smoothed(
            np.asarray(x) / r, t / (r * r), np.asarray(s) / (r * r)
        )
    if u.past_envelope is not None:
        out.past_envelope = lambda s, t: u.past_envelope(np.asarray(s) / (r * r), t / (r * r))
    if u.window is not None:
        out.window = (u.window[0] * r, u.window[1] * r)
    out.freq_hint = u.freq_hint / r
    out.space_breakpoints = tuple(b * r for b in u.space_breakpoints)
    out.time_breakpoints = tuple(b * r * r for b in u.time_breakpoints)
    out.heat_residual = None
    return out


def combine(a: float, u: ScalarField, b: float, v: ScalarField) -> ScalarField:
    """a*u + b*v, keeping whatever joint metadata survives the sum."""
    if u.n != v.n:
        raise ValueError("fields live in different dimensions")

    def ev(x, t):
        return a * u.evalf(x, t) + b * v.evalf(x, t)

    hs = None
    if u.heat_smoothed is not None and v.heat_smoothed is not None:
        hs = lambda x, t, s: a * u.heat_smoothed(x, t, s) + b * v.heat_smoothed(x, t, s)
    env = lambda s, t: abs(a) * u.envelope(np.asarray(s), t) + abs(b) * v.envelope(np.asarray(s), t)
    hr = None
    if u.heat_residual is not None and v.heat_residual is not None:
        hr = lambda x, t: a * u.heat_residual(x, t) + b * v.heat_residual(x, t)
    return ScalarField(
        evalf=ev,
        sup_bound=abs(a) * u.sup_bound + abs(b) * v.sup_bound,
        n=u.n,
        smoothness_tag=u.smoothness_tag if u.smoothness_tag == v.smoothness_tag else HOLDER,
        heat_smoothed=hs,
        past_envelope=env,
        freq_hint=max(u.freq_hint, v.freq_hint),
        space_breakpoints=tuple(u.space_breakpoints) + tuple(v.space_breakpoints),
        time_breakpoints=tuple(u.time_breakpoints) + tuple(v.time_breakpoints),
        time_independent=u.time_independent and v.time_independent,
        space_independent=u.space_independent and v.space_independent,
        heat_residual=hr,
    )


def constant_field(c: float, n: int = 1) -> ScalarField:
    def ev(x, t):
        return np.full(np.broadcast(np.asarray(x)[..., 0], np.asarray(t)).shape, float(c))

    return ScalarField(
        evalf=ev,
        sup_bound=abs(c),
        n=n,
        heat_smoothed=lambda x, t, s: np.full_like(np.asarray(s, dtype=float), float(c)),
        past_envelope=lambda s, t: np.full_like(np.asarray(s, dtype=float), abs(c)),
        time_independent=True,
        space_independent=True,
        time_exp_rate=0.0,
        heat_residual=lambda x, t: 0.0,
    )


def exp_cos_field(lam: float, xi, n: int = 1) -> ScalarField:
    """u(x, t) = e^{lam t} cos(xi . x); eigenfunction of the heat semigroup.

    Its Gaussian smoothing is exact: averaging at scale sig multiplies the
    value at (x, t - sig) by e^{-sig |xi|^2}.
    """
    if lam < 0:
        raise ValueError("rate must be nonnegative for the history integral to converge")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != n:
        raise ValueError("frequency vector length must equal n")
    xi2 = float(xi @ xi)

    def ev(x, t):
        x = np.asarray(x, dtype=float)
        return np.exp(lam * np.asarray(t, dtype=float)) * np.cos(x @ xi)

    def smoothed(x, t, sig):
        sig = np.asarray(sig, dtype=float)
        x = np.asarray(x, dtype=float)
        return np.exp(lam * (t - sig) - sig * xi2) * math.cos(float(x @ xi))

    def env(sig, t):
        return np.exp(lam * (t - np.asarray(sig, dtype=float)))

    def residual(x, t):
        x = np.asarray(x, dtype=float)
        return (lam + xi2) * math.exp(lam * t) * math.cos(float(x @ xi))

    return ScalarField(
        evalf=ev,
        sup_bound=1.0,  # bounded by e^{lam t} at evaluation time; envelope handles the rest
        n=n,
        heat_smoothed=smoothed,
        past_envelope=env,
        freq_hint=float(np.sqrt(xi2)),
        time_independent=(lam == 0.0),
        space_independent=(xi2 == 0.0),
        time_exp_rate=lam,
        heat_residual=residual,
    )


def exp_field(lam: float) -> ScalarField:
    """Space-independent u(t) = e^{lam t}."""
    return exp_cos_field(lam, np.zeros(1), n=1)


def spatial_cos(xi, n: int = 1) -> ScalarField:
    """Time-independent u(x) = cos(xi . x)."""
    return exp_cos_field(0.0, xi, n=n)


def gaussian_bump(amplitude: float = 1.0, x_center=0.0, t_center: float = 0.0,
                  x_width: float = 1.0, t_width: float = 1.0, n: int = 1) -> ScalarField:
    """Separable space-time Gaussian; its scale-sig smoothing is closed form."""
    c = np.atleast_1d(np.asarray(x_center, dtype=float))
    if c.size != n:
        c = np.full(n, float(x_center))
    dx2 = x_width * x_width

    def ev(x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        q = ((x - c) ** 2).sum(axis=-1) / dx2
        return amplitude * np.exp(-q - ((t - t_center) / t_width) ** 2)

    def smoothed(x, t, sig):
        sig = np.asarray(sig, dtype=float)
        x = np.asarray(x, dtype=float)
        width = dx2 + 4.0 * sig
        factor = (dx2 / width) ** (0.5 * n)
        q = ((x - c) ** 2).sum() / width
        tpart = np.exp(-(((t - sig) - t_center) / t_width) ** 2)
        return amplitude * factor * np.exp(-q) * tpart

    def env(sig, t):
        return abs(amplitude) * np.exp(-(((t - np.asarray(sig, dtype=float)) - t_center) / t_width) ** 2)

    def residual(x, t):
        x = np.asarray(x, dtype=float)
        r2 = ((x - c) ** 2).sum()
        val = amplitude * math.exp(-r2 / dx2 - ((t - t_center) / t_width) ** 2)
        dt_part = -2.0 * (t - t_center) / (t_width * t_width)
        lap = (4.0 * r2 / dx2 - 2.0 * n) / dx2
        return val * (dt_part - lap)

    return ScalarField(
        evalf=ev,
        sup_bound=abs(amplitude),
        n=n,
        heat_smoothed=smoothed,
        past_envelope=env,
        heat_residual=residual,
    )


def smoothstep(t):
    """C^2 quintic step: 0 below 0, 1 above 1, 6t^5 - 15t^4 + 10t^3 between."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def smoothstep7(t):
    """C^3 septic step: first three derivatives vanish at both ends."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))


def cutoff_bump(n: int = 1) -> ScalarField:
    """Reference bump: 1 on the half cylinder |x| <= 1/2, |t| <= 1/2, 0 outside
    the unit cylinder, quintic-smoothstep transitions in between."""

    def prof(r):
        return 1.0 - smoothstep(2.0 * (np.abs(r) - 0.5))

    def ev(x, t):
        x = np.asarray(x, dtype=float)
        rad = np.sqrt((x * x).sum(axis=-1))
        return prof(rad) * prof(np.asarray(t, dtype=float))

    def env(sig, t):
        return prof(np.abs(t - np.asarray(sig, dtype=float)))

    return ScalarField(
        evalf=ev,
        sup_bound=1.0,
        n=n,
        past_envelope=env,
        window=(-1.0, 1.0),
        limits=(0.0, 0.0),
        time_breakpoints=(-1.0, -0.5, 0.5, 1.0),
    )


def scaled_cutoff(r: float, x_center=0.0, t_center: float = 0.0, n: int = 1) -> ScalarField:
    """cutoff_bump rescaled to B_r(x_center) x (t_center - r^2, t_center + r^2)."""
    base = parabolic_rescale(cutoff_bump(n=n), r)
    return shifted(base, np.full(n, float(x_center)) if np.isscalar(x_center) else x_center, t_center)


def half_space_power(s: float) -> ScalarField:
    """Time-independent u(y) = max(y, 0)^s on the line; grows like |y|^s."""
    if not 0 < s < 1:
        raise ValueError("power must lie in (0,1)")

    def ev(x, t):
        x = np.asarray(x, dtype=float)[..., 0]
        return np.where(x > 0, np.maximum(x, 0.0) ** s, 0.0)

    return ScalarField(
        evalf=ev,
        sup_bound=1.0,
        n=1,
        smoothness_tag=HOLDER,
        growth=(1.0, s),
        space_breakpoints=(0.0,),
        time_independent=True,
        time_exp_rate=0.0,
    )


def tanh_front(scale: float = math.sqrt(2.0), n: int = 1) -> ScalarField:
    """Monotone front tanh(x_n / scale) with limits -1, +1; time-independent."""

    def ev(x, t):
        x = np.asarray(x, dtype=float)[..., -1]
        return np.tanh(x / scale)

    halfwidth = 20.0 * scale
    return ScalarField(
        evalf=ev,
        sup_bound=1.0,
        n=n,
        window=(-halfwidth, halfwidth),
        limits=(-1.0, 1.0),
        time_independent=True,
        time_exp_rate=0.0,
    )


def step_sides(left: float, right: float, edge_lo: float, edge_hi: float, n: int = 1) -> ScalarField:
    """Piecewise-constant side data: left for x_n < edge_lo, right for x_n > edge_hi.

    Used as exterior data; values between the edges are never read.
    """

    def ev(x, t):
        x = np.asarray(x, dtype=float)[..., -1]
        out = np.where(x <= edge_lo, float(left), 0.0)
        out = np.where(x >= edge_hi, float(right), out)
        return np.broadcast_to(out, np.broadcast(out, np.asarray(t, dtype=float)).shape).copy()

    return ScalarField(
        evalf=ev,
        sup_bound=max(abs(left), abs(right)),
        n=n,
        window=(edge_lo, edge_hi),
        limits=(float(left), float(right)),
        time_independent=True,
        time_exp_rate=0.0,
    )


def product_space_time(X: Callable, T: Callable, sup_bound: float,
                       x_breaks: Sequence[float] = (), t_breaks: Sequence[float] = (),
                       window: tuple | None = None, limits: tuple = (0.0, 0.0)) -> ScalarField:
    """Separable field u(x, t) = X(x) T(t) on the line."""

    def ev(x, t):
        x = np.asarray(x, dtype=float)[..., 0]
        return X(x) * T(np.asarray(t, dtype=float))

    return ScalarField(
        evalf=ev,
        sup_bound=sup_bound,
        n=1,
        smoothness_tag=HOLDER,
        window=window,
        limits=limits,
        space_breakpoints=tuple(x_breaks),
        time_breakpoints=tuple(t_breaks),
    )
