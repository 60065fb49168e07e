"""Euler-Maruyama time stepping of the slow-fast system and its controlled
variant, plus empirical occupation-measure diagnostics.

The fast component advances on a refined grid (the noise grid); the slow
component is stepped alongside with left-point evaluation of all integrands,
which is the correct reading of both the pathwise integral against the
rough driver (valid for H > 1/2) and the Ito integral against Brownian
motion.  The singular drift of the slow motion keeps the same left-point
rule; no corrector scheme is applied here (correctors belong to the limit
analytics, not the simulator).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cameron_martin import HurstContext, apply_KH_dot
from .errors import DivergenceError, InvalidInputError
from .fbm_gen import NoiseBundle
from .gridpath import GridPath, l2_norm


@dataclass
class SlowFastSpec:
    """Coefficients, dimensions, Hurst index and scales of the system.

    Coefficient callables follow the signatures b(y), c(x, y),
    sigma1(x, y), sigma2(x, y), f(y), g(x, y), tau(y) and must broadcast
    over numpy arrays.  Scalar returns are promoted to the declared
    dimensions (diagonal promotion for matrices).
    """

    b: object
    c: object
    sigma1: object
    sigma2: object
    f: object
    g: object
    tau: object
    hurst: float
    eps: float
    eta: float
    x0: np.ndarray
    y0: np.ndarray
    m: int = 1
    dy: int = 1
    k: int = 1
    ell: int = 1
    beta: float | None = None

    def __post_init__(self):
        if self.eps <= 0 or self.eta <= 0:
            raise InvalidInputError(f"need eps, eta > 0, got {self.eps}, {self.eta}")
        if not (0.5 < self.hurst < 1.0):
            raise InvalidInputError(f"Hurst index must lie in (1/2,1), got {self.hurst}")
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        self.y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        if self.x0.shape != (self.m,) or self.y0.shape != (self.dy,):
            raise InvalidInputError("initial conditions do not match declared dimensions")

    def sigma1_depends_on_y(self):
        dep = getattr(self.sigma1, "depends_on_y", None)
        if dep is not None:
            return bool(dep)
        # numeric probe at a few displaced fast states
        x = self.x0
        base = np.asarray(self.sigma1(x, self.y0), dtype=float)
        for shift in (0.7, -1.3):
            if not np.allclose(base, np.asarray(self.sigma1(x, self.y0 + shift), dtype=float)):
                return True
        return False


@dataclass
class ControlPair:
    """Deterministic control pair (v1 = pre-image of the fBm shift, du2/dt).

    When a bound is declared the pair must satisfy the energy constraint
    ||v1||^2 + ||u2dot||^2 <= bound^2 in L2.
    """

    v1: GridPath | None = None
    u2dot: GridPath | None = None
    bound: float | None = None

    def __post_init__(self):
        if self.bound is not None:
            energy = 0.0
            if self.v1 is not None:
                energy += l2_norm(self.v1.values, self.v1.dt) ** 2
            if self.u2dot is not None:
                energy += l2_norm(self.u2dot.values, self.u2dot.dt) ** 2
            if energy > self.bound**2 * (1 + 1e-12):
                raise InvalidInputError(
                    f"control energy {energy:.6g} exceeds declared bound {self.bound**2:.6g}"
                )

    def is_zero(self):
        return self.v1 is None and self.u2dot is None


@dataclass
class OccupationHistogram:
    """dt-weighted histogram over (control, control, fast-state) coordinates."""

    edges: list
    counts: np.ndarray
    total_time: float
    axis_names: list = field(default_factory=list)

    def marginal(self, axis):
        axes = tuple(i for i in range(self.counts.ndim) if i != axis)
        return self.counts.sum(axis=axes)

    @property
    def total_mass(self):
        return float(self.counts.sum())


def _as_vec(val, d):
    arr = np.asarray(val, dtype=float).reshape(-1)
    if arr.size == d:
        return arr
    if arr.size == 1:
        return np.full(d, arr[0])
    raise InvalidInputError(f"coefficient returned size {arr.size}, expected {d}")


def _as_mat(val, rows, cols):
    arr = np.asarray(val, dtype=float)
    if arr.shape == (rows, cols):
        return arr
    if arr.size == 1:
        out = np.zeros((rows, cols))
        np.fill_diagonal(out, float(arr.reshape(-1)[0]))
        return out
    if arr.ndim == 1 and rows == cols == arr.size:
        return np.diag(arr)
    raise InvalidInputError(f"coefficient returned shape {arr.shape}, expected ({rows},{cols})")


def default_substeps(dt_out, eta, factor=10.0, cap=4096):
    """Fast-grid refinement so dt_fast resolves the eta time scale."""
    sub = max(1, math.ceil(factor * dt_out / eta))
    if sub > cap:
        warnings.warn(
            f"substeps {sub} capped at {cap}; fast scale eta={eta} is under-resolved",
            RuntimeWarning,
        )
        sub = cap
    return sub


def _grad_norm_probe(fn, y0, d):
    delta = 1e-4
    rows = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = delta
        hi = _as_vec(fn(y0 + e), d)
        lo = _as_vec(fn(y0 - e), d)
        rows.append((hi - lo) / (2 * delta))
    return float(np.linalg.norm(np.column_stack(rows), 2))


def _check_noise(spec, noise, substeps):
    n_fine = noise.bh.n
    if (n_fine - 1) % substeps != 0:
        raise InvalidInputError(
            f"noise grid ({n_fine} points) does not refine the output grid by {substeps}"
        )
    if noise.bh.dim != spec.k:
        raise InvalidInputError(f"fBm dimension {noise.bh.dim} != k={spec.k}")
    if noise.w.dim != spec.ell:
        raise InvalidInputError(f"Brownian dimension {noise.w.dim} != ell={spec.ell}")
    dtf = noise.bh.dt
    gnorm = _grad_norm_probe(spec.f, spec.y0, spec.dy)
    if gnorm > 0 and spec.eta < 2.0 * dtf * gnorm:
        warnings.warn(
            f"fast Euler step may be unstable: eta={spec.eta:.3g} < 2*dt_fast*|grad f|"
            f"={2 * dtf * gnorm:.3g}",
            RuntimeWarning,
        )


def _interp_to_fine(path: GridPath, t_fine):
    cols = [np.interp(t_fine, path.times(), path.component(j)) for j in range(path.dim)]
    return np.column_stack(cols)


def simulate(spec: SlowFastSpec, noise: NoiseBundle, substeps=1):
    """Integrate the slow-fast system along one noise realization.

    Returns the pair of slow and fast paths on the coarse grid (the noise
    grid thinned by ``substeps``).  Raises ``DivergenceError`` with the
    first bad time if the state leaves the finite range.
    """
    return _simulate(spec, noise, substeps, None)


def simulate_controlled(spec: SlowFastSpec, noise: NoiseBundle, ctrl: ControlPair, substeps=1):
    """Controlled variant: the fBm shift enters the slow drift through the
    lifted derivative of v1, the Brownian shift through u2dot, and the fast
    drift picks up the rescaled tau u2dot forcing."""
    return _simulate(spec, noise, substeps, ctrl)


def _simulate(spec, noise, substeps, ctrl):
    _check_noise(spec, noise, substeps)
    n_fine = noise.bh.n
    dtf = noise.bh.dt
    n_out = (n_fine - 1) // substeps + 1
    dt_out = dtf * substeps
    t_fine = noise.bh.times()

    u1dot_f = None
    u2dot_f = None
    if ctrl is not None and ctrl.v1 is not None:
        if ctrl.v1.dim != spec.k:
            raise InvalidInputError(f"v1 dimension {ctrl.v1.dim} != k={spec.k}")
        ctx = HurstContext(spec.hurst, ctrl.v1.n, ctrl.v1.dt)
        u1dot = apply_KH_dot(ctrl.v1, ctx)
        u1dot_f = _interp_to_fine(u1dot, t_fine)
    if ctrl is not None and ctrl.u2dot is not None:
        if ctrl.u2dot.dim != spec.ell:
            raise InvalidInputError(f"u2dot dimension {ctrl.u2dot.dim} != ell={spec.ell}")
        u2dot_f = _interp_to_fine(ctrl.u2dot, t_fine)

    se = math.sqrt(spec.eps)
    sh = math.sqrt(spec.eta)
    seh = math.sqrt(spec.eps * spec.eta)
    m, dy, k, ell = spec.m, spec.dy, spec.k, spec.ell

    x = spec.x0.copy()
    y = spec.y0.copy()
    xs = np.empty((n_out, m))
    ys = np.empty((n_out, dy))
    xs[0], ys[0] = x, y
    db = np.diff(noise.bh.values, axis=0)
    dw = np.diff(noise.w.values, axis=0)

    out_idx = 1
    for i in range(n_fine - 1):
        bv = _as_vec(spec.b(y), m)
        cv = _as_vec(spec.c(x, y), m)
        s1 = _as_mat(spec.sigma1(x, y), m, k)
        s2 = _as_mat(spec.sigma2(x, y), m, ell)
        fv = _as_vec(spec.f(y), dy)
        gv = _as_vec(spec.g(x, y), dy)
        tv = _as_mat(spec.tau(y), dy, ell)

        dx = (se / sh * bv + cv) * dtf + se * (s1 @ db[i] + s2 @ dw[i])
        dyv = (fv / spec.eta + gv / seh) * dtf + (tv @ dw[i]) / sh
        if u1dot_f is not None:
            dx += s1 @ u1dot_f[i] * dtf
        if u2dot_f is not None:
            dx += s2 @ u2dot_f[i] * dtf
            dyv += (tv @ u2dot_f[i]) / seh * dtf
        x = x + dx
        y = y + dyv
        if (i + 1) % substeps == 0:
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise DivergenceError(
                    f"trajectory diverged at t={t_fine[i + 1]:.6g}", first_bad_time=t_fine[i + 1]
                )
            xs[out_idx], ys[out_idx] = x, y
            out_idx += 1

    return GridPath(0.0, dt_out, xs), GridPath(0.0, dt_out, ys)


def empirical_occupation(y_path: GridPath, ctrl: ControlPair, bins=16):
    """dt-weighted histogram of (v1(s), u2dot(s), Y_s) over the horizon.

    Controls that are absent contribute a zero-valued coordinate (their
    marginal is a point mass at 0).  Total mass equals the horizon up to
    round-off.
    """
    n = y_path.n
    dt = y_path.dt
    cols = []
    names = []
    k_dim = ctrl.v1.dim if ctrl.v1 is not None else 1
    for j in range(k_dim):
        if ctrl.v1 is not None:
            if not ctrl.v1.same_grid(y_path):
                raise InvalidInputError("v1 grid does not match the fast path")
            cols.append(ctrl.v1.component(j)[: n - 1])
        else:
            cols.append(np.zeros(n - 1))
        names.append(f"u1_{j}")
    ell_dim = ctrl.u2dot.dim if ctrl.u2dot is not None else 1
    for j in range(ell_dim):
        if ctrl.u2dot is not None:
            if not ctrl.u2dot.same_grid(y_path):
                raise InvalidInputError("u2dot grid does not match the fast path")
            cols.append(ctrl.u2dot.component(j)[: n - 1])
        else:
            cols.append(np.zeros(n - 1))
        names.append(f"u2_{j}")
    for j in range(y_path.dim):
        cols.append(y_path.component(j)[: n - 1])
        names.append(f"y_{j}")

    data = np.column_stack(cols)
    counts, edges = np.histogramdd(data, bins=bins, weights=np.full(n - 1, dt))
    return OccupationHistogram(
        edges=list(edges), counts=counts, total_time=(n - 1) * dt, axis_names=names
    )
