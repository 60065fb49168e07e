"""Large-deviations rate functionals of the homogenized slow dynamics.

Four evaluators share one differentiation convention (``GridPath.derivative``)
and one set of averaged coefficients (``LimitDrift``):

* ``eval_rate_explicit`` - the closed quadratic form available when the
  singular drift and the Brownian diffusion vanish and the averaged rough
  diffusion is invertible; equals half the squared inverse-lift norm of the
  forced displacement.
* ``eval_rate_general`` - the operator form: assemble the effective
  diffusivity Gram operator, solve for the adjoint state, and read off both
  the value and the minimizing control pair.
* ``eval_rate_fw_half`` / ``eval_rate_tilde_half`` - the two classical-noise
  quadratic forms; they differ exactly by replacing the average of the
  squared coefficient with the square of the averaged coefficient.
* ``h_limit_study`` - the rough-noise values along a list of Hurst indices
  against both classical forms, exhibiting the limit gap.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .cameron_martin import HurstContext, kdot_inverse
from .errors import (
    AdmissibilityError,
    DegeneracyError,
    IllConditionedError,
    InvalidInputError,
    RegularityError,
)
from .gridpath import GridPath, l2_norm, trapezoid_weights
from .multiscale_sim import ControlPair, _as_mat, _as_vec
from .poisson_cell import InvariantMeasure, PoissonSolution, average_coeff, effective_q


@dataclass
class LimitDrift:
    """Averaged coefficient set entering the limiting dynamics.

    All callables take a slow state (m,) and return averaged quantities:
    ``cbar`` and ``grad_psi_g_bar`` the drift pieces, ``sigma1_bar`` the
    naively averaged rough diffusion (m x k), ``sigma1_sq_bar`` the averaged
    squared coefficient (m x m), ``qqt_bar`` the effective Brownian Gram
    (m x m).  ``q_bins`` carries the quantile-binned effective noise map for
    feedback-control representations: (nbins, m, ell) per state, with bin
    masses ``bin_mass``.
    """

    m: int
    k: int
    ell: int
    cbar: object
    grad_psi_g_bar: object
    sigma1_bar: object
    sigma1_sq_bar: object
    qqt_bar: object
    q_bins: object
    bin_mass: np.ndarray
    bin_centers: np.ndarray
    q_depends_on_x: bool = True


def build_limit_drift(spec, psol: PoissonSolution, mu: InvariantMeasure, nbins=64):
    """Average the coefficients of a slow-fast system against the invariant
    measure and bin the effective noise map on measure quantiles."""
    m, k, ell = spec.m, spec.k, spec.ell
    y = mu.grid
    rho = mu.density
    edges = mu.quantile_edges(nbins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    # bin masses and per-bin density weights on the grid
    bin_idx = np.clip(np.searchsorted(edges, y, side="right") - 1, 0, nbins - 1)
    masses = np.zeros(nbins)
    wq = trapezoid_weights(y.size, y[1] - y[0])
    for bidx in range(nbins):
        masses[bidx] = float(np.sum(wq[bin_idx == bidx] * rho[bin_idx == bidx]))
    masses /= masses.sum()

    grad = psol.grad  # (ny, m)
    tau_vals = np.asarray(spec.tau(y), dtype=float)
    tau_rows = np.broadcast_to(np.atleast_1d(tau_vals).reshape(-1, 1), (y.size, ell))

    def cbar(x):
        return _as_vec(average_coeff(lambda xx, yy: spec.c(xx, yy), mu, x), m)

    def grad_psi_g_bar(x):
        gv = np.asarray(spec.g(np.asarray(x), y), dtype=float)
        gv = np.broadcast_to(np.atleast_1d(gv), (y.size,)) if gv.ndim <= 1 else gv
        vals = grad * gv[:, None]  # one fast dimension
        return np.trapezoid(vals * rho[:, None], y, axis=0)

    def sigma1_bar(x):
        s1 = np.asarray(spec.sigma1(np.asarray(x), y), dtype=float)
        if s1.ndim <= 1:
            avg = float(np.trapezoid(np.broadcast_to(np.atleast_1d(s1), (y.size,)) * rho, y))
            return _as_mat(avg, m, k)
        return _as_mat(np.trapezoid(s1 * rho.reshape((-1,) + (1,) * (s1.ndim - 1)), y, axis=0), m, k)

    def sigma1_sq_bar(x):
        s1 = np.asarray(spec.sigma1(np.asarray(x), y), dtype=float)
        if s1.ndim <= 1:
            vals = np.broadcast_to(np.atleast_1d(s1), (y.size,))
            avg = float(np.trapezoid(vals**2 * rho, y))
            out = np.zeros((m, m))
            np.fill_diagonal(out, avg)
            return out
        mats = np.stack([_as_mat(s1[i], m, k) for i in range(y.size)])
        grams = np.einsum("iac,ibc->iab", mats, mats)
        return np.trapezoid(grams * rho[:, None, None], y, axis=0)

    def qqt_bar(x):
        return effective_q(spec, psol, mu, x)["qqt_bar"]

    def q_bins(x):
        s2 = np.asarray(spec.sigma2(np.asarray(x), y), dtype=float)
        s2 = np.broadcast_to(np.atleast_1d(s2), (y.size,)) if s2.ndim <= 1 else s2
        out = np.zeros((nbins, m, ell))
        for bidx in range(nbins):
            sel = bin_idx == bidx
            wsel = wq[sel] * rho[sel]
            tot = wsel.sum()
            if tot <= 0:
                continue
            gavg = (wsel[:, None] * grad[sel]).sum(axis=0) / tot  # (m,)
            tavg = (wsel[:, None] * tau_rows[sel]).sum(axis=0) / tot  # (ell,)
            if s2.ndim == 1:
                s2avg = _as_mat(float((wsel * s2[sel]).sum() / tot), m, ell)
            else:
                s2avg = _as_mat((wsel[:, None] * s2[sel]).sum(axis=0) / tot, m, ell)
            out[bidx] = gavg[:, None] @ tavg[None, :] + s2avg
        return out

    # Q depends on the slow state only through sigma2; probe it
    x_probe = np.atleast_1d(np.asarray(spec.x0, dtype=float))
    s2_a = np.asarray(spec.sigma2(x_probe, y[:: max(1, y.size // 16)]), dtype=float)
    s2_b = np.asarray(spec.sigma2(x_probe + 0.83, y[:: max(1, y.size // 16)]), dtype=float)
    q_dep_x = not np.array_equal(s2_a, s2_b)

    return LimitDrift(
        m=m,
        k=k,
        ell=ell,
        cbar=cbar,
        grad_psi_g_bar=grad_psi_g_bar,
        sigma1_bar=sigma1_bar,
        sigma1_sq_bar=sigma1_sq_bar,
        qqt_bar=qqt_bar,
        q_bins=q_bins,
        bin_mass=masses,
        bin_centers=centers,
        q_depends_on_x=q_dep_x,
    )


@dataclass
class RateEvalResult:
    """Rate value with its minimizing control representation and method tag."""

    value: float
    method: str
    minimizer: object = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def finite(self):
        return np.isfinite(self.value)


def _forced_displacement(phi: GridPath, drift: LimitDrift, include_psi_g=True):
    """phi-dot minus the homogenized drift, shape (n, m)."""
    dphi = phi.derivative()
    r = np.empty_like(dphi)
    for i in range(phi.n):
        x = phi.values[i]
        rr = dphi[i] - drift.cbar(x)
        if include_psi_g:
            rr = rr - _as_vec(drift.grad_psi_g_bar(x), drift.m)
        r[i] = rr
    return r


def _sigma1_path(phi: GridPath, drift: LimitDrift, tol):
    """sigma1-bar along the path with a singularity check, shape (n, m, k)."""
    n, m, k = phi.n, drift.m, drift.k
    if m != k:
        raise DegeneracyError(f"explicit form needs square sigma1-bar, got {m}x{k}")
    s1 = np.empty((n, m, k))
    for i in range(n):
        s1[i] = drift.sigma1_bar(phi.values[i])
        smin = np.linalg.svd(s1[i], compute_uv=False)[-1]
        if smin < tol:
            raise DegeneracyError(
                f"sigma1-bar singular along the path (min singular value {smin:.3g} at node {i})"
            )
    return s1


def eval_rate_explicit(phi: GridPath, drift: LimitDrift, ctx: HurstContext, tol=1e-8):
    """Quadratic-form rate for vanishing singular drift and Brownian noise.

    Forms psi(t) = sigma1-bar(phi_t)^{-1} [phi-dot - cbar(phi_t)] and returns
    half the squared L2 norm of the inverse lift of psi; the minimizer is
    the corresponding pre-image control.  A divergent inverse lift marks the
    path inadmissible: the value is infinity with a reason, not an error.
    """
    if phi.n != ctx.n or abs(phi.dt - ctx.dt) > 1e-12 * ctx.dt:
        raise InvalidInputError("path grid does not match the Hurst context")
    r = _forced_displacement(phi, drift, include_psi_g=False)
    s1 = _sigma1_path(phi, drift, tol)
    psi = np.stack([np.linalg.solve(s1[i], r[i]) for i in range(phi.n)])
    try:
        v = kdot_inverse(psi, ctx)
    except RegularityError as exc:
        return RateEvalResult(
            value=float("inf"),
            method="explicit",
            diagnostics={"reason": f"inverse lift diverged: {exc}"},
        )
    val = 0.5 * l2_norm(v, phi.dt) ** 2
    ctrl = ControlPair(v1=GridPath(0.0, phi.dt, v))
    return RateEvalResult(
        value=float(val),
        method="explicit",
        minimizer=ctrl,
        diagnostics={"psi_sup": float(np.max(np.abs(psi)))},
    )


@dataclass
class DiscreteQH:
    """Grid matrix of the effective diffusivity operator.

    ``a_u1`` maps weighted-coordinate controls of the rough noise to
    weighted-coordinate slow forcings ((n m) x (n k)); the Brownian part is
    pointwise in time and carried as per-node bin maps ``b_u2``
    ((n, m, ell*nbins), already mass-weighted).
    """

    ctx: HurstContext
    a_u1: np.ndarray
    b_u2: np.ndarray
    bin_mass: np.ndarray
    weights: np.ndarray
    shape: tuple

    def gram(self, qqt_path=None):
        """(n m) x (n m) Gram matrix; the Brownian block is exact when the
        pointwise averaged Gram is supplied, binned otherwise."""
        n, m = self.shape
        g = self.a_u1 @ self.a_u1.T
        for i in range(n):
            if qqt_path is not None:
                blk = qqt_path[i]
            else:
                bi = self.b_u2[i]
                blk = bi @ bi.T
            g[i * m : (i + 1) * m, i * m : (i + 1) * m] += blk
        return g

    def operator_norm(self):
        n, m = self.shape
        mat = self.gram()
        v = np.ones(n * m) / np.sqrt(n * m)
        for _ in range(30):
            v = mat @ v
            v /= np.linalg.norm(v)
        return float(np.sqrt(v @ (mat @ v)))


def assemble_QH(phi: GridPath, drift: LimitDrift, ctx: HurstContext, nbins=None):
    """Discrete effective-diffusivity operator along a path.

    The rough-noise block composes the naively averaged coefficient with the
    lifted-derivative kernel matrix; the Brownian block acts pointwise in
    time through the measure-binned effective noise map.
    """
    if phi.n != ctx.n or abs(phi.dt - ctx.dt) > 1e-12 * ctx.dt:
        raise InvalidInputError("path grid does not match the Hurst context")
    n, m, k, ell = phi.n, drift.m, drift.k, drift.ell
    w = trapezoid_weights(n, phi.dt)
    sw = np.sqrt(w)
    kd = ctx.kdot_matrix()
    s1 = np.stack([_as_mat(drift.sigma1_bar(phi.values[i]), m, k) for i in range(n)])
    # A[(i,a),(j,c)] = sqrt(w_i) s1[i,a,c] kd[i,j] / sqrt(w_j)
    a = np.einsum("iac,ij->iajc", s1, kd * (sw[:, None] / sw[None, :]))
    a = a.reshape(n * m, n * k)
    nb = len(drift.bin_mass) if nbins is None else nbins
    b = np.zeros((n, m, ell * nb))
    qb0 = None
    for i in range(n):
        if drift.q_depends_on_x or qb0 is None:
            qb0 = drift.q_bins(phi.values[i])  # (nbins, m, ell)
        b[i] = (qb0 * np.sqrt(drift.bin_mass)[:, None, None]).transpose(1, 2, 0).reshape(m, ell * nb)
    return DiscreteQH(ctx=ctx, a_u1=a, b_u2=b, bin_mass=drift.bin_mass, weights=w, shape=(n, m))


def _condition_estimate(gram, chol):
    rng = np.random.default_rng(0)
    v = rng.standard_normal(gram.shape[0])
    for _ in range(20):
        v = gram @ v
        v /= np.linalg.norm(v)
    lam_max = float(v @ (gram @ v))
    u = rng.standard_normal(gram.shape[0])
    for _ in range(20):
        u = cho_solve(chol, u)
        u /= np.linalg.norm(u)
    lam_min = float(u @ (gram @ u))
    return lam_max, lam_min


def eval_rate_general(
    phi: GridPath,
    drift: LimitDrift,
    ctx: HurstContext,
    tol=1e-8,
    condition_limit=1e8,
    exact_u2_gram=True,
):
    """Operator-form rate: solve the Gram system of the effective diffusivity.

    Assembles G = Q Q* (positive definite on the admissible domain), solves
    G w = phi-dot - cbar - grad-psi-g-bar, and returns half the pairing plus
    the minimizing pair (time control for the rough noise, feedback bins for
    the Brownian noise).
    """
    n, m = phi.n, drift.m
    dq = assemble_QH(phi, drift, ctx)
    qqt_path = None
    if exact_u2_gram:
        if drift.q_depends_on_x:
            qqt_path = np.stack([drift.qqt_bar(phi.values[i]) for i in range(n)])
        else:
            qqt_path = np.broadcast_to(drift.qqt_bar(phi.values[0]), (n, m, m))
    gram = dq.gram(qqt_path=qqt_path)
    r = _forced_displacement(phi, drift)
    sw = np.sqrt(dq.weights)
    r_w = (r * sw[:, None]).reshape(n * m)
    # the initial node is fixed by phi(0) = x0, not by its velocity, and the
    # lifted-derivative row vanishes there; solve on nodes 1..n-1
    keep = slice(m, n * m)
    gram_k = gram[keep, keep]
    try:
        chol = cho_factor(gram_k, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError(f"effective diffusivity Gram is not positive definite: {exc}")
    lam_max, lam_min = _condition_estimate(gram_k, chol)
    if lam_min <= tol * max(lam_max, 1.0):
        raise DegeneracyError(
            f"Gram operator degenerate: eigenvalue range [{lam_min:.3g}, {lam_max:.3g}]"
        )
    cond = lam_max / lam_min
    if cond > condition_limit:
        raise IllConditionedError(
            f"Gram solve condition {cond:.3g} exceeds limit {condition_limit:.3g}", condition=cond
        )
    w_sol = np.zeros(n * m)
    w_sol[keep] = cho_solve(chol, r_w[keep])
    val = 0.5 * float(r_w[keep] @ w_sol[keep])
    # minimizers: u1* = Kdot* Sigma1-bar^T w ; u2* = Q^T w (per bin)
    u1_w = dq.a_u1.T @ w_sol
    u1 = (u1_w.reshape(n, drift.k) / sw[:, None])
    w_nat = (w_sol.reshape(n, m)) / sw[:, None]
    nb = len(drift.bin_mass)
    u2 = np.zeros((n, nb, drift.ell))
    qb = None
    for i in range(n):
        if drift.q_depends_on_x or qb is None:
            qb = drift.q_bins(phi.values[i])  # (nb, m, ell)
        u2[i] = np.einsum("bme,m->be", qb, w_nat[i])
    ctrl = ControlPair(v1=GridPath(0.0, phi.dt, u1))
    return RateEvalResult(
        value=val,
        method="general",
        minimizer={"v1": ctrl.v1, "u2_feedback": u2, "bin_centers": drift.bin_centers},
        diagnostics={"condition": cond, "lambda_min": lam_min, "lambda_max": lam_max},
    )


def _quadratic_form_rate(phi, r, mats, method):
    n = phi.n
    w = trapezoid_weights(n, phi.dt)
    total = 0.0
    for i in range(n):
        eigs = np.linalg.eigvalsh(mats[i])
        if eigs[0] <= 1e-12:
            raise DegeneracyError(f"{method}: effective matrix degenerate at node {i}")
        total += w[i] * float(r[i] @ np.linalg.solve(mats[i], r[i]))
    return 0.5 * total


def eval_rate_fw_half(phi: GridPath, drift: LimitDrift, q_half=None):
    """Classical-noise rate with the fully averaged effective matrix.

    ``q_half`` overrides the default matrix function
    x -> sigma1 sigma1^T-bar(x) + Q Q^T-bar(x).
    """
    r = _forced_displacement(phi, drift)
    if q_half is None:
        mats = [
            np.atleast_2d(drift.sigma1_sq_bar(phi.values[i]) + drift.qqt_bar(phi.values[i]))
            for i in range(phi.n)
        ]
    else:
        mats = [np.atleast_2d(np.asarray(q_half(phi.values[i]), dtype=float)) for i in range(phi.n)]
    val = _quadratic_form_rate(phi, r, mats, "fw_half")
    return RateEvalResult(value=val, method="fw_half")


def eval_rate_tilde_half(phi: GridPath, drift: LimitDrift):
    """Classical-form rate with the square of the naively averaged coefficient."""
    r = _forced_displacement(phi, drift, include_psi_g=False)
    mats = []
    for i in range(phi.n):
        s1 = drift.sigma1_bar(phi.values[i])
        mats.append(np.atleast_2d(s1 @ s1.T))
    val = _quadratic_form_rate(phi, r, mats, "tilde_half")
    return RateEvalResult(value=val, method="tilde_half")


def admissibility_check(phi: GridPath, drift: LimitDrift, exponent=1.05, factor=4.0, decade=10):
    """Near-zero weighted-boundedness heuristic for the limit study.

    Checks that psi(t)/t^exponent does not blow up over the first decade of
    grid points (psi the normalized forced displacement).  This is a grid
    heuristic, not a certificate; results carry it as a flag.
    """
    r = _forced_displacement(phi, drift, include_psi_g=False)
    s1 = _sigma1_path(phi, drift, 1e-12)
    t = phi.times()
    hi = min(decade, phi.n - 1)
    ratios = []
    for i in range(1, hi + 1):
        psi_i = np.linalg.solve(s1[i], r[i])
        ratios.append(np.linalg.norm(psi_i) / t[i] ** exponent)
    ratios = np.asarray(ratios)
    scale = max(ratios[-1], 1e-12 * ratios.max())
    ok = bool(ratios.max() <= factor * scale)
    return ok, ratios


def h_limit_study(phi: GridPath, drift: LimitDrift, h_list, check_admissibility=True):
    """Rate values along a Hurst schedule against both classical forms.

    Returns a dict with one row per Hurst index plus the two classical
    values and the terminal gaps.  Raises an admissibility error when the
    near-zero heuristic clearly fails.
    """
    ok, ratios = admissibility_check(phi, drift)
    if check_admissibility and not ok:
        raise AdmissibilityError(
            "path fails the near-zero weighted-regularity heuristic "
            f"(ratios {ratios[:3]}... vs {ratios[-1]})"
        )
    rows = []
    for h in h_list:
        ctx = HurstContext(h, phi.n, phi.dt)
        res = eval_rate_explicit(phi, drift, ctx)
        rows.append({"hurst": float(h), "value": res.value})
    tilde = eval_rate_tilde_half(phi, drift)
    fw = eval_rate_fw_half(phi, drift)
    gaps = [abs(row["value"] - tilde.value) for row in rows]
    return {
        "rows": rows,
        "tilde_half": tilde.value,
        "fw_half": fw.value,
        "gap_to_tilde": gaps,
        "gap_to_fw": [abs(row["value"] - fw.value) for row in rows],
        "admissibility_heuristic": ok,
    }


def replay_minimizer(phi: GridPath, drift: LimitDrift, ctx: HurstContext, result: RateEvalResult):
    """Integrate the limiting controlled dynamics driven by a minimizer.

    Closes the consistency loop: the returned path should reproduce the
    input within discretization tolerance when the minimizer came from one
    of the evaluators on the same drift.
    """
    n, m = phi.n, drift.m
    dt = phi.dt
    if isinstance(result.minimizer, ControlPair):
        v1 = result.minimizer.v1
        u2 = None
    else:
        v1 = result.minimizer["v1"]
        u2 = result.minimizer["u2_feedback"]
    kd = ctx.kdot_matrix()
    u1dot = kd @ v1.values  # (n, k)
    x = phi.values[0].copy()
    out = np.empty((n, m))
    out[0] = x
    qb = None
    for i in range(n - 1):
        dx = drift.cbar(x) + _as_vec(drift.grad_psi_g_bar(x), m)
        dx = dx + _as_mat(drift.sigma1_bar(x), m, drift.k) @ u1dot[i]
        if u2 is not None:
            if drift.q_depends_on_x or qb is None:
                qb = drift.q_bins(x)  # (nb, m, ell)
            dx = dx + np.einsum("bme,be,b->m", qb, u2[i], drift.bin_mass)
        x = x + dt * dx
        out[i + 1] = x
    return GridPath(0.0, dt, out)
