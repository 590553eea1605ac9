"""Discrete kernel machinery for grid operators and time marching.

Fields on a space-time grid are treated as piecewise constant on space cells
of width h and time slabs of duration dt.  Every coupling weight is the
exact kernel mass of a (cell x slab) box, evaluated by erf-based closed
forms in space and Gauss-Legendre rules in the lag, so all weights are
nonnegative and row sums match the kernel's total mass by construction.
The singular self box (own cell, newest slab) is excluded from both sides
of the balance; its leading Taylor moments are available separately for
near-diagonal corrections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf as _erf, erfc as _erfc

from .config import FracParams
from .errors import ValidationError
from .fields import ScalarField
from .quadrature import gauss_legendre_panels, geometric_edges, hermgauss
from .special import normalization_constant


def _cell_mass(lo, hi, sig):
    """integral over z in (lo, hi) of e^{-z^2/(4 sig)} dz."""
    root = 2.0 * np.sqrt(sig)
    return np.sqrt(math.pi * sig) * (_erf(hi / root) - _erf(lo / root))


@dataclass
class GridField:
    """Samples of a field on a uniform space-time grid over a cylinder.

    values[m, i] is the field at node i and level t_start + (m+1) dt.
    """

    box: tuple
    t_start: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValidationError("grid samples must be (levels, nodes)")

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def levels(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        a, b = self.box
        return (b - a) / self.nx

    def nodes(self) -> np.ndarray:
        a, _ = self.box
        return a + (np.arange(self.nx) + 0.5) * self.h

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(1, self.levels + 1)


@dataclass
class SlabWeights:
    """Per-lag convolution weights for a uniform 1D grid.

    rows[l, d + nx - 1] couples a node to the cell offset by d cells, at lag
    slab l; the self entry rows[0, nx-1] is zero by construction.  All
    entries carry the kernel normalization.
    """

    p: FracParams
    h: float
    dt: float
    nx: int
    n_lags: int
    rows: np.ndarray
    mu_rows: np.ndarray
    slab_mass: np.ndarray
    m0_excl: float
    mt_cell: float
    mzz_cell: float
    T_cut: float
    tail_mass: float
    sig_nodes: list  # per-lag (sigma, weight) quadrature nodes, lag 0 log-spaced
    far_nodes: tuple  # (sigma, weight) covering (n_lags*dt, T_cut]

    @property
    def c0(self) -> float:
        """Total retained kernel mass per node: the implicit diagonal weight."""
        C = normalization_constant(self.p)
        s = self.p.s
        full = C * math.sqrt(4.0 * math.pi) * (self.dt ** (-s) - self.T_cut ** (-s)) / s
        return self.m0_excl + full


def build_slab_weights(p: FracParams, h: float, dt: float, nx: int, n_lags: int,
                       tail_rel: float = 1e-12) -> SlabWeights:
    if p.n != 1:
        raise ValidationError("slab weights are built for 1D grids")
    s = p.s
    C = normalization_constant(p)
    pow_ = p.sigma_power
    offsets = np.arange(-(nx - 1), nx) * h
    lo_edges = offsets - 0.5 * h
    hi_edges = offsets + 0.5 * h

    # Truncation of the history beyond T_cut: relative mass tail_rel.
    T_cut = dt * tail_rel ** (-1.0 / s)
    rows = np.zeros((n_lags, 2 * nx - 1))
    mu_rows = np.zeros((n_lags, 2 * nx - 1))
    slab_mass = np.zeros(n_lags)
    sig_nodes = []

    # Lag-0 slab: log-spaced panels absorb the sigma -> 0 boundary layer.
    edges0 = np.geomspace(dt * 1e-12, dt, 29)
    sig0, w0 = gauss_legendre_panels(edges0, 6)
    sig_nodes.append((sig0, w0))
    core = C * w0 * sig0 ** (-pow_)
    cells0 = _cell_mass(lo_edges[None, :], hi_edges[None, :], sig0[:, None])
    rows[0] = core @ cells0
    mu_rows[0] = (core * sig0) @ cells0
    rows[0, nx - 1] = 0.0
    mu_rows[0, nx - 1] = 0.0
    slab_mass[0] = float(np.sum(core * np.sqrt(4.0 * math.pi * sig0)))

    for lag in range(1, n_lags):
        a, b = lag * dt, (lag + 1) * dt
        sig, w = gauss_legendre_panels(np.array([a, b]), 6)
        sig_nodes.append((sig, w))
        core = C * w * sig ** (-pow_)
        cells = _cell_mass(lo_edges[None, :], hi_edges[None, :], sig[:, None])
        rows[lag] = core @ cells
        mu_rows[lag] = (core * (sig - a)) @ cells
        slab_mass[lag] = C * math.sqrt(4.0 * math.pi) * (a ** (-s) - b ** (-s)) / s

    # Far history quadrature nodes, (n_lags dt, T_cut].
    if T_cut > n_lags * dt:
        fedges = geometric_edges(n_lags * dt, T_cut, 1.6)
        far_nodes = gauss_legendre_panels(fedges, 8)
    else:
        far_nodes = (np.array([]), np.array([]))

    # Self-box exclusions and Taylor moments.
    ecut = np.geomspace(min(h * h, dt) * 1e-8, dt, 33)
    sgc, wc = gauss_legendre_panels(ecut, 8)
    m0_excl = float(np.sum(
        C * wc * sgc ** (-pow_) * np.sqrt(4.0 * math.pi * sgc)
        * _erfc(h / (4.0 * np.sqrt(sgc)))
    ))
    mt_cell = float(np.sum(
        C * wc * sgc ** (1.0 - pow_) * _cell_mass(-0.5 * h, 0.5 * h, sgc)
    ))
    a_half = 0.5 * h
    z2_inner = sgc * (np.sqrt(4.0 * math.pi * sgc) * _erf(a_half / (2.0 * np.sqrt(sgc)))
                      - 2.0 * a_half * np.exp(-a_half * a_half / (4.0 * sgc)))
    mzz_cell = float(np.sum(C * wc * sgc ** (-pow_) * 0.5 * z2_inner))

    tail_mass = C * math.sqrt(4.0 * math.pi) * T_cut ** (-s) / s
    return SlabWeights(
        p=p, h=h, dt=dt, nx=nx, n_lags=n_lags, rows=rows, mu_rows=mu_rows,
        slab_mass=slab_mass,
        m0_excl=m0_excl, mt_cell=mt_cell, mzz_cell=mzz_cell,
        T_cut=T_cut, tail_mass=tail_mass, sig_nodes=sig_nodes, far_nodes=far_nodes,
    )


def gauss_smear(field: ScalarField, xs: np.ndarray, sig: np.ndarray, t_ref: float,
                k_gh: int = 21) -> np.ndarray:
    """G[i, q] = integral over y of field(y, t_ref - sig_q) e^{-(xs_i - y)^2/(4 sig_q)} dy.

    Uses the field's Gaussian-smoothing closure when present, the declared
    window/limits decomposition otherwise, and raw Gauss-Hermite sampling as
    the fallback.
    """
    xs = np.asarray(xs, dtype=float)
    sig = np.asarray(sig, dtype=float)
    root = 2.0 * np.sqrt(sig)
    if field.heat_smoothed is not None:
        out = np.empty((xs.size, sig.size))
        for i, xi in enumerate(xs):
            out[i] = math.sqrt(math.pi) * root * np.asarray(
                field.heat_smoothed(np.array([xi]), t_ref, sig), dtype=float
            )
        return out
    if field.window is not None:
        lo, hi = field.window
        limL, limR = field.limits
        mid = 0.5 * (lo + hi)
        e = _erf((mid - xs[:, None]) / root[None, :])
        out = np.sqrt(math.pi * sig)[None, :] * (limL * (1.0 + e) + limR * (1.0 - e))
        if field.sup_bound > 0.0:
            yg, wg = gauss_legendre_panels(np.linspace(lo, hi, 13), 10)
            base = np.where(yg >= mid, limR, limL)
            for q in range(sig.size):
                vals = field.evalf(yg[:, None], np.full(yg.size, t_ref - sig[q]))
                gauss = np.exp(-((yg[None, :] - xs[:, None]) ** 2) / (4.0 * sig[q]))
                out[:, q] += gauss @ ((vals - base) * wg)
        return out
    nodes, wts = hermgauss(k_gh)
    out = np.empty((xs.size, sig.size))
    for q in range(sig.size):
        y = xs[:, None] + root[q] * nodes[None, :]
        vals = field.evalf(y[..., None], np.full(y.shape, t_ref - sig[q]))
        out[:, q] = root[q] * (vals @ wts)
    return out


def _require_separable(field: ScalarField, what: str) -> float:
    if field.time_exp_rate is None:
        raise ValidationError(
            f"{what} closure must declare time_exp_rate (exponential-in-time or constant)"
        )
    return float(field.time_exp_rate)


def history_suffix_terms(w: SlabWeights, xs: np.ndarray, hist: ScalarField,
                         damp: float = 0.0):
    """Precompute S[i, m] with the history contribution at level m equal to
    e^{rate * t_m} * S[i, m], for separable histories u(y, tau) = e^{rate tau} g(y).

    Level m sees lags from m*dt outward: uniform slabs m..n_lags-1 plus the
    geometric far block up to T_cut.
    """
    rate = _require_separable(hist, "history")
    C = normalization_constant(w.p)
    pow_ = w.p.sigma_power
    L = w.n_lags
    pieces = np.zeros((xs.size, L))
    for lag in range(1, L):
        sig, wq = w.sig_nodes[lag]
        G = gauss_smear(hist, xs, sig, 0.0)  # includes the field's e^{-rate sig}
        core = C * wq * sig ** (-pow_) * np.exp(-damp * sig)
        pieces[:, lag] = G @ core
    far = np.zeros(xs.size)
    sigf, wf = w.far_nodes
    if sigf.size:
        G = gauss_smear(hist, xs, sigf, 0.0)
        core = C * wf * sigf ** (-pow_) * np.exp(-damp * sigf)
        far = G @ core
    suffix = np.zeros((xs.size, L + 1))
    suffix[:, L] = far
    for m in range(L - 1, 0, -1):
        suffix[:, m] = suffix[:, m + 1] + pieces[:, m]
    return suffix  # use columns 1..L; column m valid for level m


def exterior_prefix_terms(w: SlabWeights, xs: np.ndarray, ext: ScalarField,
                          box: tuple[float, float]):
    """Precompute P[i, m] with the exterior contribution at level m equal to
    e^{rate * t_m} * P[i, m], for separable exteriors.

    Lags 0..m-1 are inside the marched window, so level m accumulates the
    prefix of per-slab exterior integrals.
    """
    rate = _require_separable(ext, "exterior")
    C = normalization_constant(w.p)
    pow_ = w.p.sigma_power
    A, B = box
    L = w.n_lags
    per = np.zeros((xs.size, L))
    for lag in range(L):
        sig, wq = w.sig_nodes[lag]
        core = C * wq * sig ** (-pow_)
        Y = _exterior_smear(ext, xs, sig, A, B, rate)
        per[:, lag] = Y @ core
    prefix = np.zeros((xs.size, L + 1))
    for m in range(1, L + 1):
        prefix[:, m] = prefix[:, m - 1] + per[:, m - 1]
    return prefix  # column m valid for level m (lags 0..m-1)


def _exterior_smear(ext: ScalarField, xs, sig, A, B, rate: float):
    """Y[i, q] = integral over y outside (A, B) of ext(y, -sig_q) e^{-(xs_i-y)^2/(4 sig_q)} dy."""
    xs = np.asarray(xs, dtype=float)
    sig = np.asarray(sig, dtype=float)
    root = 2.0 * np.sqrt(sig)
    # Constant-per-side exteriors admit closed forms.
    if ext.window is not None and ext.window[0] >= A and ext.window[1] <= B:
        gl_, gr_ = ext.limits
        left = np.sqrt(math.pi * sig)[None, :] * _erfc((xs[:, None] - A) / root[None, :]) * gl_
        right = np.sqrt(math.pi * sig)[None, :] * _erfc((B - xs[:, None]) / root[None, :]) * gr_
        return (left + right) * np.exp(-rate * sig)[None, :]
    out = np.empty((xs.size, sig.size))
    for q in range(sig.size):
        reach = 14.0 * math.sqrt(sig[q]) + (B - A)
        edges = np.concatenate([[0.0], np.geomspace(1e-3 * math.sqrt(sig[q]), reach, 16)])
        yl, wl = gauss_legendre_panels(edges, 8)
        for side, edge, sgn in (("L", A, -1.0), ("R", B, 1.0)):
            y = edge + sgn * yl
            vals = ext.evalf(y[:, None], np.full(y.size, -sig[q]))
            gauss = np.exp(-((y[None, :] - xs[:, None]) ** 2) / (4.0 * sig[q]))
            contrib = gauss @ (vals * wl)
            if side == "L":
                out[:, q] = contrib
            else:
                out[:, q] += contrib
    return out


def level_rows(w: SlabWeights):
    """Effective per-level convolution rows under linear-in-slab interpolation.

    Level m - l receives R[l]; the pre-initial floor value (field at t_start)
    receives mu_rows[m-1]/dt when the march is at level m.  All rows are
    nonnegative because the first moment of a slab never exceeds dt times its
    mass.
    """
    R = w.rows - w.mu_rows / w.dt
    R[1:] += w.mu_rows[:-1] / w.dt
    return R


def _wrapped_cell_row(nxp: int, hp: float, period: float, sig: float) -> np.ndarray:
    """Circular cell masses on a ring: images of e^{-z^2/(4 sig)} summed over
    the period; flat once the Gaussian is much wider than the period."""
    if sig > 9.0 * period * period:
        return np.full(nxp, math.sqrt(4.0 * math.pi * sig) / nxp)
    d = np.arange(nxp) * hp
    d = np.where(d > 0.5 * period, d - period, d)  # symmetric circular offsets
    kmax = int(math.ceil(14.0 * math.sqrt(sig) / period)) + 1
    out = np.zeros(nxp)
    for k in range(-kmax, kmax + 1):
        out += _cell_mass(d - 0.5 * hp + k * period, d + 0.5 * hp + k * period, sig)
    return out


@dataclass
class SlabWeights2D:
    """Mode-space convolution tables for a 2D grid, periodic transverse axis.

    khat_level[l, mu, :] couples level m-l, khat_old[l, mu, :] couples
    level m-l-1, both in (transverse-mode, padded x_n frequency) space.
    """

    p: FracParams
    hp: float
    hn: float
    dt: float
    nxp: int
    nx: int
    period: float
    n_lags: int
    nfft: int
    khat_level: np.ndarray
    khat_old: np.ndarray
    self_row_hat: np.ndarray      # lag-0 level kernel, for A assembly (Mu, 2nx-1)
    m0_excl: float
    mt_cell: float
    mzz_p: float
    mzz_n: float
    T_cut: float
    tail_mass: float

    @property
    def c0(self) -> float:
        C = normalization_constant(self.p)
        s = self.p.s
        full = C * 4.0 * math.pi * (self.dt ** (-s) - self.T_cut ** (-s)) / s
        return self.m0_excl + full


def build_slab_weights_2d(p: FracParams, hp: float, nxp: int, period: float,
                          hn: float, nx: int, dt: float, n_lags: int,
                          tail_rel: float = 1e-12) -> SlabWeights2D:
    if p.n != 2:
        raise ValidationError("2D weights need n = 2 parameters")
    s = p.s
    C = normalization_constant(p)
    pow_ = p.sigma_power
    T_cut = dt * tail_rel ** (-1.0 / s)
    offsets = np.arange(-(nx - 1), nx) * hn
    lo_edges = offsets - 0.5 * hn
    hi_edges = offsets + 0.5 * hn
    nfft = 1
    while nfft < 3 * nx:
        nfft *= 2
    Mu = nxp // 2 + 1
    nfreq = nfft // 2 + 1
    khat_level = np.zeros((n_lags, Mu, nfreq), dtype=complex)
    khat_old = np.zeros((n_lags, Mu, nfreq), dtype=complex)
    self_row = np.zeros((Mu, 2 * nx - 1))
    # Transform of the padded x_n delta at the diagonal cell, used to excise
    # the singular self box from the lag-0 tables in mode space.
    freqs = np.arange(nfreq)
    delta_hat = np.exp(-2j * math.pi * freqs * (nx - 1) / nfft)

    for lag in range(n_lags):
        if lag == 0:
            edges = np.geomspace(dt * 1e-12, dt, 29)
            sig, wq = gauss_legendre_panels(edges, 6)
        else:
            sig, wq = gauss_legendre_panels(np.array([lag * dt, (lag + 1) * dt]), 6)
        core = C * wq * sig ** (-pow_)
        frac_old = (sig - lag * dt) / dt
        for q in range(sig.size):
            arow = _wrapped_cell_row(nxp, hp, period, sig[q])
            brow = _cell_mass(lo_edges, hi_edges, sig[q])
            ah = np.fft.rfft(arow).real
            bh = np.fft.rfft(brow, n=nfft)
            lev = core[q] * (1.0 - frac_old[q])
            old = core[q] * frac_old[q]
            tensor = ah[:, None] * bh[None, :]
            if lag == 0:
                self_amp = arow[0] * brow[nx - 1]
                tensor = tensor - self_amp * delta_hat[None, :]
                self_row += lev * ah[:, None] * brow[None, :]
                self_row[:, nx - 1] -= lev * self_amp
            khat_level[lag] += lev * tensor
            khat_old[lag] += old * tensor

    # Self-box exclusions and moments (transverse cell x normal cell x slab 0).
    ecut = np.geomspace(min(hp * hp, hn * hn, dt) * 1e-8, dt, 37)
    sgc, wc = gauss_legendre_panels(ecut, 8)
    A0 = np.array([_wrapped_cell_row(nxp, hp, period, s_)[0] for s_ in sgc])
    B0 = _cell_mass(-0.5 * hn, 0.5 * hn, sgc)
    full = np.sqrt(4.0 * math.pi * sgc)
    m0_excl = float(np.sum(C * wc * sgc ** (-pow_) * (full * full - A0 * B0)))
    mt_cell = float(np.sum(C * wc * sgc ** (1.0 - pow_) * A0 * B0))
    a_half = 0.5 * hn
    z2n = sgc * (np.sqrt(4.0 * math.pi * sgc) * _erf(a_half / (2.0 * np.sqrt(sgc)))
                 - 2.0 * a_half * np.exp(-a_half * a_half / (4.0 * sgc)))
    mzz_n = float(np.sum(C * wc * sgc ** (-pow_) * A0 * 0.5 * z2n))
    a_half = 0.5 * hp
    z2p = sgc * (np.sqrt(4.0 * math.pi * sgc) * _erf(a_half / (2.0 * np.sqrt(sgc)))
                 - 2.0 * a_half * np.exp(-a_half * a_half / (4.0 * sgc)))
    mzz_p = float(np.sum(C * wc * sgc ** (-pow_) * B0 * 0.5 * z2p))

    tail_mass = C * 4.0 * math.pi * T_cut ** (-s) / s
    return SlabWeights2D(
        p=p, hp=hp, hn=hn, dt=dt, nxp=nxp, nx=nx, period=period, n_lags=n_lags,
        nfft=nfft, khat_level=khat_level, khat_old=khat_old,
        self_row_hat=self_row, m0_excl=m0_excl, mt_cell=mt_cell,
        mzz_p=mzz_p, mzz_n=mzz_n, T_cut=T_cut, tail_mass=tail_mass,
    )
