import math

import numpy as np
import pytest

from fracrate import coefficients as cf
from fracrate.cameron_martin import c_H
from fracrate.errors import DivergenceError, InvalidInputError
from fracrate.fbm_gen import NoiseBundle, sample_noise_bundle
from fracrate.gridpath import GridPath
from fracrate.multiscale_sim import (
    ControlPair,
    SlowFastSpec,
    default_substeps,
    empirical_occupation,
    simulate,
    simulate_controlled,
)
from scipy.special import gamma

from conftest import SQRT2, ou_spec


def make_noise(spec, n_out, horizon, sub, seed=0, stream=0):
    n_fine = (n_out - 1) * sub + 1
    return sample_noise_bundle(spec.hurst, n_fine, horizon, k=spec.k, ell=spec.ell, seed=seed, stream=stream)


class TestSimulate:
    def test_frozen_state_with_zero_coefficients(self):
        spec = ou_spec(eta=0.1)
        noise = make_noise(spec, 51, 1.0, 4, seed=1)
        x_path, _ = simulate(spec, noise, substeps=4)
        assert np.all(x_path.values == spec.x0)

    def test_pure_fbm_telescopes(self):
        # b = c = sigma2 = 0, sigma1 = I: X = x0 + sqrt(eps) B^H exactly
        spec = ou_spec(eta=0.1, sigma1=("constant", {"value": 1.0}), x0=2.0)
        noise = make_noise(spec, 26, 1.0, 8, seed=3)
        x_path, _ = simulate(spec, noise, substeps=8)
        expected = 2.0 + math.sqrt(spec.eps) * noise.bh.values[::8, 0]
        assert np.max(np.abs(x_path.scalar() - expected)) < 1e-13

    def test_homogenization_ou(self):
        # averaging oracle: the homogenized flow of c(x,y) = -x + y is x0 e^{-t}
        spec = ou_spec(eps=0.01, eta=0.01**1.5, c=("linear_xy", {"ax": -1.0, "ay": 1.0}), x0=1.0)
        sub = default_substeps(1.0 / 100, spec.eta)
        errs = []
        for trial in range(10):
            noise = make_noise(spec, 101, 1.0, sub, seed=42, stream=trial)
            x_path, _ = simulate(spec, noise, substeps=sub)
            t = x_path.times()
            errs.append(np.max(np.abs(x_path.scalar() - np.exp(-t))))
        assert np.mean(errs) < 0.1

    def test_determinism(self):
        spec = ou_spec(eta=0.1, sigma1=("constant", {"value": 0.5}), c=("linear_xy", {"ax": -0.5}))
        noise = make_noise(spec, 51, 1.0, 2, seed=9)
        a, _ = simulate(spec, noise, substeps=2)
        b, _ = simulate(spec, noise, substeps=2)
        assert np.array_equal(a.values, b.values)

    def test_refinement_cauchy(self):
        # one master noise path, coarsened consistently: doubling the
        # resolution shrinks the terminal discrepancy
        spec = ou_spec(eps=0.05, eta=0.02, sigma1=("constant", {"value": 1.0}),
                       c=("linear_xy", {"ax": -1.0, "ay": 0.5}), x0=1.0)
        master = make_noise(spec, 101, 1.0, 16, seed=11)
        terminals = []
        for sub in (2, 4, 8, 16):
            stride = 16 // sub
            bh = GridPath(0.0, master.bh.dt * stride, master.bh.values[::stride])
            w = GridPath(0.0, master.w.dt * stride, master.w.values[::stride])
            noise = type(master)(bh=bh, w=w, seed=master.seed, hurst=master.hurst)
            x_path, _ = simulate(spec, noise, substeps=sub)
            terminals.append(x_path.values[-1, 0])
        d1 = abs(terminals[1] - terminals[0])
        d3 = abs(terminals[3] - terminals[2])
        assert d3 < d1

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_divergence_reported(self):
        # super-linear drift pushed unstably: expect a divergence error
        spec = SlowFastSpec(
            b=cf.build("b", "zero"),
            c=cf.build("c", "linear_xy", ax=80.0),
            sigma1=cf.build("sigma1", "zero"),
            sigma2=cf.build("sigma2", "zero"),
            f=cf.build("f", "ou", rate=1.0),
            g=cf.build("g", "zero"),
            tau=cf.build("tau", "constant", value=SQRT2),
            hurst=0.7,
            eps=1.0,
            eta=1.0,
            x0=1e305,
            y0=0.0,
        )
        noise = make_noise(spec, 201, 10.0, 1, seed=1)
        with pytest.raises(DivergenceError) as err:
            simulate(spec, noise, substeps=1)
        assert err.value.first_bad_time is not None

    def test_grid_mismatch_rejected(self):
        spec = ou_spec()
        noise = make_noise(spec, 51, 1.0, 4, seed=1)
        with pytest.raises(InvalidInputError):
            simulate(spec, noise, substeps=3)

    def test_stability_warning(self):
        spec = ou_spec(eta=1e-5)
        noise = make_noise(spec, 11, 1.0, 1, seed=1)
        with pytest.warns(RuntimeWarning):
            simulate(spec, noise, substeps=1)


class TestControlled:
    def test_zero_control_matches_uncontrolled(self):
        spec = ou_spec(eta=0.1, sigma1=("constant", {"value": 1.0}), c=("linear_xy", {"ax": -1.0}))
        noise = make_noise(spec, 51, 1.0, 4, seed=17)
        a, ya = simulate(spec, noise, substeps=4)
        b, yb = simulate_controlled(spec, noise, ControlPair(), substeps=4)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(ya.values, yb.values)

    def test_constant_v1_closed_form(self):
        # noise off, v1 = 1, sigma1 = 1: X = x0 + int Kdot[1] in closed form
        spec = ou_spec(eps=1.0, eta=1.0, hurst=0.7, sigma1=("constant", {"value": 1.0}))
        n_out, sub = 201, 4
        n_fine = (n_out - 1) * sub + 1
        dtf = 1.0 / (n_fine - 1)
        zeros = GridPath(0.0, dtf, np.zeros((n_fine, 1)))
        noise = NoiseBundle(bh=zeros, w=zeros, seed=0, hurst=0.7)
        dt_out = 1.0 / (n_out - 1)
        ctrl = ControlPair(v1=GridPath(0.0, dt_out, np.ones(n_out)))
        x_path, _ = simulate_controlled(spec, noise, ctrl, substeps=sub)
        t = x_path.times()
        h = 0.7
        exact = c_H(h) * gamma(1.5 - h) * t ** (h + 0.5) / (h + 0.5)
        assert np.max(np.abs(x_path.scalar() - exact)) < 5e-3

    def test_constant_u2dot_duhamel_mean_shift(self):
        # variation-of-constants for the forced relaxation: the fast mean
        # settles at eta * tau c_hat / sqrt(eps eta) = tau c_hat sqrt(eta/eps)
        eps, eta = 0.04, 0.01
        spec = ou_spec(eps=eps, eta=eta)
        c_hat = 1.0
        n_out, sub = 101, 20
        dt_out = 1.0 / (n_out - 1)
        ctrl = ControlPair(u2dot=GridPath(0.0, dt_out, c_hat * np.ones(n_out)))
        means = []
        for trial in range(40):
            noise = make_noise(spec, n_out, 1.0, sub, seed=31, stream=trial)
            _, y_path = simulate_controlled(spec, noise, ctrl, substeps=sub)
            means.append(np.mean(y_path.scalar()[n_out // 2 :]))
        target = c_hat * SQRT2 * math.sqrt(eta / eps)
        assert abs(np.mean(means) - target) < 0.1 * target

    def test_energy_bound_enforced(self):
        dt = 1.0 / 100
        v1 = GridPath(0.0, dt, 2.0 * np.ones(101))
        with pytest.raises(InvalidInputError):
            ControlPair(v1=v1, bound=1.0)
        ControlPair(v1=v1, bound=2.5)  # fits


class TestOccupation:
    def test_total_mass_is_horizon(self):
        spec = ou_spec(eta=0.01)
        noise = make_noise(spec, 201, 2.0, 5, seed=2)
        _, y_path = simulate(spec, noise, substeps=5)
        hist = empirical_occupation(y_path, ControlPair(), bins=12)
        assert abs(hist.total_mass - 2.0) < 1e-9
        assert hist.total_time == pytest.approx(2.0)

    def test_invariant_marginal_tv(self):
        # long horizon, uncontrolled: Y-marginal close to the standard normal
        spec = ou_spec(eps=0.1, eta=0.002)
        n_out = 2001
        sub = 100
        noise = make_noise(spec, n_out, 20.0, sub, seed=5)
        _, y_path = simulate(spec, noise, substeps=sub)
        hist = empirical_occupation(y_path, ControlPair(), bins=16)
        y_axis = len(hist.edges) - 1
        marg = hist.marginal(y_axis) / hist.total_mass
        edges = hist.edges[y_axis]
        from scipy.stats import norm

        probs = np.diff(norm.cdf(edges))
        probs /= probs.sum()
        tv = 0.5 * np.sum(np.abs(marg - probs))
        assert tv < 0.05

    def test_point_mass_for_zero_controls(self):
        spec = ou_spec(eta=0.01)
        noise = make_noise(spec, 101, 1.0, 4, seed=2)
        _, y_path = simulate(spec, noise, substeps=4)
        hist = empirical_occupation(y_path, ControlPair(), bins=7)
        u1_marg = hist.marginal(0)
        assert np.isclose(u1_marg.max(), hist.total_mass)

    def test_decoupling_with_bounded_controls(self):
        # sqrt(eta)/sqrt(eps) = 0.1: controlled Y-marginal stays near the
        # uncontrolled invariant density in total variation
        eps = 0.1
        eta = (0.1 * math.sqrt(eps)) ** 2
        spec = ou_spec(eps=eps, eta=eta)
        n_out = 801
        dt_out = 8.0 / (n_out - 1)
        sub = default_substeps(dt_out, spec.eta)
        ctrl = ControlPair(u2dot=GridPath(0.0, dt_out, 0.5 * np.sin(np.arange(n_out))[:, None]))
        noise = make_noise(spec, n_out, 8.0, sub, seed=6)
        _, y_path = simulate_controlled(spec, noise, ctrl, substeps=sub)
        hist = empirical_occupation(y_path, ControlPair(u2dot=ctrl.u2dot), bins=24)
        y_axis = len(hist.edges) - 1
        marg = hist.marginal(y_axis) / hist.total_mass
        from scipy.stats import norm

        probs = np.diff(norm.cdf(hist.edges[y_axis]))
        probs /= probs.sum()
        assert 0.5 * np.sum(np.abs(marg - probs)) < 0.1


def test_default_substeps_cap_warns():
    with pytest.warns(RuntimeWarning):
        sub = default_substeps(0.1, 1e-9, cap=64)
    assert sub == 64
