"""Cell problem of the fast dynamics: invariant density, centered Poisson
solve, coefficient averaging, and the effective noise matrix.

The one-dimensional generator (tau^2/2) d2/dy2 + f d/dy admits the
closed-form stationary density rho ~ (1/tau^2) exp(int 2f/tau^2) and a
double-quadrature Poisson solve; both are evaluated on a truncated grid
whose tails are checked explicitly.  Multi-dimensional fast spaces are
supported only through the analytic Ornstein-Uhlenbeck family, which is all
the rate-function machinery needs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import CenteringError, InvalidInputError, TruncationError


def _cumulative(values, dy):
    """Cumulative Simpson integral from the first grid point, initial 0."""
    return cumulative_simpson(values, dx=dy, axis=0, initial=0.0)


def _cumulative_from_zero(integrand, y):
    """Cumulative integral of integrand anchored at y = 0 (grid centered)."""
    cum = _cumulative(integrand, y[1] - y[0])
    i0 = y.size // 2
    return cum - cum[i0]


@dataclass
class InvariantMeasure:
    """Stationary density of the fast generator on a truncated 1-d domain."""

    grid: np.ndarray
    density: np.ndarray
    normalization: float

    @property
    def dy(self):
        return float(self.grid[1] - self.grid[0])

    def average(self, values):
        """Trapezoid integral of grid values against the density."""
        return np.trapezoid(values * self.density, self.grid, axis=-1)

    def quantile_edges(self, nbins):
        """Bin edges splitting the measure into nbins equal-mass cells."""
        cdf = np.concatenate(
            ([0.0], np.cumsum(0.5 * (self.density[1:] + self.density[:-1]) * np.diff(self.grid)))
        )
        cdf /= cdf[-1]
        qs = np.linspace(0.0, 1.0, nbins + 1)
        return np.interp(qs, cdf, self.grid)


@dataclass
class PoissonSolution:
    """Corrector and its gradient on the grid (or the analytic OU family).

    ``psi`` and ``grad`` have shape (n, m) for an m-dimensional slow space
    (one fast dimension).  The analytic flag marks the closed-form
    Ornstein-Uhlenbeck branch with a spatially constant gradient.
    """

    grid: np.ndarray
    psi: np.ndarray
    grad: np.ndarray
    analytic: bool = False

    def grad_at(self, y):
        y = np.asarray(y, dtype=float)
        return np.stack(
            [np.interp(y, self.grid, self.grad[:, j]) for j in range(self.grad.shape[1])], axis=-1
        )


def invariant_density_1d(f, tau, L, n, tail_ratio=1e-8, norm_tol=1e-6):
    """Stationary density of (tau^2/2) d2 + f d on [-L, L].

    rho(y) ~ (1/tau^2(y)) exp(int_0^y 2 f / tau^2), the zero-flux form of
    the stationary equation.  Fails with a truncation error when the
    boundary values are not negligible against the mode.
    """
    if L <= 0 or n < 8:
        raise InvalidInputError(f"bad domain: L={L}, n={n}")
    y = np.linspace(-L, L, int(n))
    tau2 = np.broadcast_to(np.asarray(tau(y), dtype=float), y.shape) ** 2
    if np.any(tau2 <= 0):
        raise InvalidInputError("tau^2 must be positive on the domain")
    drift = np.broadcast_to(np.asarray(f(y), dtype=float), y.shape)
    pot = _cumulative_from_zero(2.0 * drift / tau2, y)
    raw = np.exp(pot - pot.max()) / tau2
    z = float(np.trapezoid(raw, y))
    rho = raw / z
    peak = rho.max()
    if rho[0] > tail_ratio * peak or rho[-1] > tail_ratio * peak:
        raise TruncationError(
            f"density at the boundary ({max(rho[0], rho[-1]):.2e} of peak {peak:.2e}) "
            "is not negligible; enlarge L"
        )
    total = float(np.trapezoid(rho, y))
    if abs(total - 1.0) > norm_tol:
        raise InvalidInputError(f"normalization failed: integral = {total}")
    return InvariantMeasure(grid=y, density=rho, normalization=z)


def _b_matrix(b, y):
    """Slow-drift values as an (n, m) array regardless of scalar/vector b."""
    bv = np.asarray(b(y), dtype=float)
    if bv.ndim == 0:
        bv = np.full(y.size, float(bv))
    if bv.ndim == 1:
        bv = bv[:, None]
    if bv.shape[0] != y.size:
        bv = bv.T
    return bv


def solve_poisson_1d(b, f, tau, mu: InvariantMeasure, centering_tol=1e-4):
    """Centered solution of (tau^2/2) psi'' + f psi' = -b on the grid.

    Integrating the divergence form (tau^2 rho psi')' = -2 b rho twice gives
    psi'(y) = -(2/(tau^2 rho))(y) int_{-L}^y b rho, then psi by quadrature
    and a final centering shift.  The gradient comes from the quadrature
    formula directly, not from differencing psi.
    """
    y = mu.grid
    rho = mu.density
    dy = mu.dy
    bv = _b_matrix(b, y)
    means = np.trapezoid(bv * rho[:, None], y, axis=0)
    if np.max(np.abs(means)) > centering_tol:
        raise CenteringError(f"drift is not centered: int b dmu = {means}", b_mean=means)
    tau2 = np.broadcast_to(np.asarray(tau(y), dtype=float), y.shape) ** 2
    cum = _cumulative(bv * rho[:, None], dy)
    grad = -2.0 * cum / (tau2 * rho)[:, None]
    psi = _cumulative(grad, dy)
    psi -= np.trapezoid(psi * rho[:, None], y, axis=0)[None, :]
    return PoissonSolution(grid=y, psi=psi, grad=grad, analytic=False)


def analytic_ou_solution(alpha, lam, mu: InvariantMeasure):
    """Closed-form corrector for f = -alpha y, tau = sqrt(2 alpha), b = lam y."""
    if alpha <= 0:
        raise InvalidInputError("OU relaxation rate must be positive")
    y = mu.grid
    psi = (lam / alpha) * y[:, None]
    grad = np.full((y.size, 1), lam / alpha)
    return PoissonSolution(grid=y, psi=psi, grad=grad, analytic=True)


def average_coeff(phi, mu: InvariantMeasure, x=None):
    """mu-average of phi(x, .) (or phi(.) when x is None) by quadrature.

    phi may return scalars, vectors or matrices per grid point; arrays must
    carry the fast variable on the leading axis.
    """
    y = mu.grid
    vals = np.asarray(phi(y) if x is None else phi(x, y), dtype=float)
    if vals.ndim == 0:
        vals = np.full(y.size, float(vals))
    elif vals.shape[0] != y.size:
        # independent of the fast variable: average is the value itself
        vals = np.broadcast_to(vals, (y.size,) + vals.shape)
    weights = mu.density.reshape((y.size,) + (1,) * (vals.ndim - 1))
    return np.trapezoid(vals * weights, y, axis=0)


def generator_residual(psol: PoissonSolution, b, f, tau):
    """Interior sup-norm of (tau^2/2) psi'' + f psi' + b on the grid."""
    y = psol.grid
    dy = y[1] - y[0]
    d1 = np.gradient(psol.psi, dy, axis=0, edge_order=2)
    d2 = np.gradient(d1, dy, axis=0, edge_order=2)
    tau2 = np.broadcast_to(np.asarray(tau(y), dtype=float), y.shape) ** 2
    drift = np.broadcast_to(np.asarray(f(y), dtype=float), y.shape)
    res = 0.5 * tau2[:, None] * d2 + drift[:, None] * d1 + _b_matrix(b, y)
    # central half of the domain: outside it the density tails make the
    # quadrature-over-density quotient meaningless
    interior = slice(y.size // 4, -(y.size // 4))
    return float(np.max(np.abs(res[interior])))


def _sigma2_matrix(spec, x, yv):
    from .multiscale_sim import _as_mat

    return _as_mat(spec.sigma2(np.asarray(x), yv), spec.m, spec.ell)


def _tau_row(spec, yv):
    from .multiscale_sim import _as_mat

    # one fast dimension: tau(y) is a (1 x ell) row
    return _as_mat(spec.tau(yv), 1, spec.ell) if spec.ell != 1 else np.asarray(
        spec.tau(yv), dtype=float
    ).reshape(1, 1)


def effective_q(spec, psol: PoissonSolution, mu: InvariantMeasure, x, degeneracy_tol=1e-8):
    """Effective noise map y -> grad-psi(y) tau(y) + sigma2(x, y) and its Gram.

    Returns a dict with the pointwise sampler ``q`` (y -> (m, ell) matrix),
    the averaged Gram ``qqt_bar`` (m x m), its minimum eigenvalue and a
    degeneracy flag.  Degeneracy is a flag rather than an error: degenerate
    systems are simply outside the general evaluator's domain.
    """
    if spec.dy != 1:
        raise InvalidInputError("numeric effective Q supports one fast dimension")
    m = spec.m
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def q_at(yv):
        yv = float(yv)
        grad = psol.grad_at(yv).reshape(m, 1)
        return grad @ _tau_row(spec, yv) + _sigma2_matrix(spec, x, yv)

    y = mu.grid
    if m == 1 and spec.ell == 1:
        tau_vals = np.broadcast_to(np.asarray(spec.tau(y), dtype=float), y.shape)
        s2_vals = np.broadcast_to(np.asarray(spec.sigma2(x, y), dtype=float), y.shape)
        qv = psol.grad[:, 0] * tau_vals + s2_vals
        qqt_bar = np.array([[float(np.trapezoid(qv**2 * mu.density, y))]])
    else:
        qq = np.empty((y.size, m, m))
        for i, yv in enumerate(y):
            qi = q_at(yv)
            qq[i] = qi @ qi.T
        qqt_bar = np.trapezoid(qq * mu.density[:, None, None], y, axis=0)
    eigs = np.linalg.eigvalsh(qqt_bar)
    return {
        "q": q_at,
        "qqt_bar": qqt_bar,
        "min_eigenvalue": float(eigs[0]),
        "degenerate": bool(eigs[0] <= degeneracy_tol),
    }


def domain_halfwidth(f, tau, sigmas=8.0, probe_half=30.0, n=4001):
    """Truncation half-width: ``sigmas`` standard deviations of the density."""
    y = np.linspace(-probe_half, probe_half, n)
    tau2 = np.broadcast_to(np.asarray(tau(y), dtype=float), y.shape) ** 2
    drift = np.broadcast_to(np.asarray(f(y), dtype=float), y.shape)
    pot = _cumulative_from_zero(2.0 * drift / tau2, y)
    raw = np.exp(pot - pot.max()) / tau2
    raw /= np.trapezoid(raw, y)
    var = np.trapezoid(y**2 * raw, y) - np.trapezoid(y * raw, y) ** 2
    return float(sigmas * np.sqrt(max(var, 1e-12)))
