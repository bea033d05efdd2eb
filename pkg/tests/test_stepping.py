"""One-step solvers: closed forms, convergence behaviour, energy identity."""

import numpy as np
import pytest

import ns3d as m

from conftest import random_divfree_field


def shear_cfg(scheme, k=0.01, nu=1.0, **kw):
    return m.SchemeConfig(k=k, nu=nu, scheme=scheme, **kw)


class TestClosedForms:
    @pytest.mark.parametrize("scheme", [m.SEMI_IMPLICIT, m.FULLY_IMPLICIT])
    def test_shear_decay_one_step(self, grid16, scheme):
        # the shear mode has |k| = 1 and zero self-advection, so each step
        # divides the amplitude by 1 + nu k exactly
        u = m.make_field(grid16, m.Shear(1.0))
        cfg = shear_cfg(scheme)
        res = m.step(u, m.zero_field(grid16), cfg)
        assert np.max(np.abs(res.u_new.coeffs - u.coeffs / 1.01)) <= 1e-14
        assert res.fp_iters <= 3
        assert res.fp_residual <= cfg.fp_tol

    @pytest.mark.parametrize("scheme", [m.SEMI_IMPLICIT, m.FULLY_IMPLICIT])
    def test_shear_decay_many_steps(self, grid16, scheme):
        u = m.make_field(grid16, m.Shear(1.0))
        cfg = shear_cfg(scheme)
        f = m.zero_field(grid16)
        for _ in range(10):
            u = m.step(u, f, cfg).u_new
        expected = 4 * np.pi**3 / 1.01**20
        assert m.norms(u).l2_sq == pytest.approx(expected, rel=1e-12)

    def test_zero_stays_zero(self, grid8):
        cfg = shear_cfg(m.SEMI_IMPLICIT)
        res = m.step(m.zero_field(grid8), m.zero_field(grid8), cfg)
        assert np.all(res.u_new.coeffs == 0)
        assert res.energy_identity_residual == 0.0

    def test_discrete_steady_state(self, grid16):
        # f = nu A (sin z, 0, 0) balances the diffusion of u = A (sin z, 0, 0)
        nu, A = 0.7, 1.3
        u = m.make_field(grid16, m.Shear(A))
        f = m.make_field(grid16, m.Shear(nu * A))
        cfg = m.SchemeConfig(k=0.05, nu=nu, scheme=m.SEMI_IMPLICIT)
        res = m.semi_implicit_step(u, f, cfg)
        assert np.max(np.abs(res.u_new.coeffs - u.coeffs)) <= 1e-14
        assert res.fp_iters == 1

    def test_fully_implicit_small_forcing_expansion(self, grid16):
        # from rest, one step gives u = k fhat/(1 + nu k |k|^2) + O(k^2 eps^2)
        eps, k, nu = 1e-6, 0.01, 1.0
        f = m.ForcingEvaluator(
            m.FixedModes(
                (
                    ((0, 0, 1), (-0.5j * eps, 0.0, 0.0)),
                    ((0, 1, 0), (0.25j * eps, 0.0, 0.25 * eps)),
                )
            ),
            grid16,
        ).at(0.0)
        cfg = m.SchemeConfig(k=k, nu=nu, scheme=m.FULLY_IMPLICIT)
        res = m.fully_implicit_step(m.zero_field(grid16), f, cfg)
        first_order = k * f.coeffs / (1.0 + nu * k * grid16.k2)
        err = np.max(np.abs(res.u_new.coeffs - first_order))
        assert err <= 1e-6 * k * eps
        assert res.fp_iters <= 3


class TestConvergenceControl:
    def test_nonconvergence_raises(self, grid16):
        # low-mode data with O(10) pointwise velocity: k N(u) dwarfs the
        # Stokes damping and the inner map amplifies instead of contracting
        u = m.make_field(grid16, m.RandomDivFree(seed=40, slope=-2.0, amplitude=100.0, kmax=2))
        cfg = m.SchemeConfig(k=1e3, nu=1.0, scheme=m.FULLY_IMPLICIT, fp_max_iter=50)
        with pytest.raises(m.NonConvergence):
            m.fully_implicit_step(u, m.zero_field(grid16), cfg)

    def test_wrong_scheme_tag(self, grid8):
        u = m.zero_field(grid8)
        cfg = m.SchemeConfig(k=0.01, nu=1.0, scheme=m.SEMI_IMPLICIT)
        with pytest.raises(ValueError):
            m.fully_implicit_step(u, u, cfg)
        cfg2 = m.SchemeConfig(k=0.01, nu=1.0, scheme=m.FULLY_IMPLICIT)
        with pytest.raises(ValueError):
            m.semi_implicit_step(u, u, cfg2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            m.SchemeConfig(k=-0.1, nu=1.0)
        with pytest.raises(ValueError):
            m.SchemeConfig(k=0.1, nu=0.0)
        with pytest.raises(ValueError):
            m.SchemeConfig(k=0.1, nu=1.0, scheme="leapfrog")
        with pytest.raises(ValueError):
            m.SchemeConfig(k=0.1, nu=1.0, fp_max_iter=0)

    def test_invariants_after_steps(self, grid16):
        u = random_divfree_field(grid16, seed=41, amplitude=0.3)
        f = m.make_field(grid16, m.RandomDivFree(seed=42, amplitude=0.05))
        for scheme in (m.SEMI_IMPLICIT, m.FULLY_IMPLICIT):
            cfg = shear_cfg(scheme)
            res = m.step(u, f, cfg)
            res.u_new.check_invariants(tol=1e-9)

    def test_increment_h1(self, grid16):
        u = random_divfree_field(grid16, seed=43, amplitude=0.3)
        cfg = shear_cfg(m.SEMI_IMPLICIT)
        res = m.step(u, m.zero_field(grid16), cfg)
        diff = res.u_new - u
        assert res.increment_h1_sq == pytest.approx(m.norms(diff).h1_sq, rel=1e-12)


class TestEnergyIdentity:
    def test_exact_on_converged_step(self, grid16):
        u = m.make_field(grid16, m.Shear(1.0))
        cfg = shear_cfg(m.SEMI_IMPLICIT)
        res = m.semi_implicit_step(u, m.zero_field(grid16), cfg)
        assert res.energy_identity_residual <= 1e-12

    def test_zero_fields(self, grid8):
        cfg = shear_cfg(m.SEMI_IMPLICIT)
        z = m.zero_field(grid8)
        assert m.energy_identity_residual(z, z, z, cfg) == 0.0

    def test_detects_perturbation(self, grid16):
        u = m.make_field(grid16, m.Shear(1.0))
        cfg = shear_cfg(m.SEMI_IMPLICIT)
        res = m.semi_implicit_step(u, m.zero_field(grid16), cfg)
        c = res.u_new.coeffs.copy()
        idx = (0, 0, 0, 1)
        c[idx] += 1e-3
        c[0, 0, 0, -1] += 1e-3  # keep the Hermitian pair consistent
        tampered = m.SpectralField(grid16, c)
        resid = m.energy_identity_residual(u, tampered, m.zero_field(grid16), cfg)
        assert resid > 1e-6

    @pytest.mark.parametrize("scheme", [m.SEMI_IMPLICIT, m.FULLY_IMPLICIT])
    def test_small_data_run(self, grid16, scheme):
        u = random_divfree_field(grid16, seed=44, amplitude=0.2)
        f = m.make_field(grid16, m.RandomDivFree(seed=45, amplitude=0.02))
        cfg = shear_cfg(scheme)
        for _ in range(25):
            res = m.step(u, f, cfg)
            assert res.energy_identity_residual <= 1e-9
            u = res.u_new


class TestRecurrences:
    def test_l2_recurrence_every_step(self, grid16):
        # (1 + nu k/c0) |u_n|^2 <= |u_{n-1}|^2 + k |f_n|_{H^-1}^2 / nu holds
        # for every converged step, with no smallness assumption
        nu, k = 0.8, 0.02
        u = random_divfree_field(grid16, seed=46, amplitude=0.5)
        f = m.make_field(grid16, m.RandomDivFree(seed=47, amplitude=0.1))
        f_hm1 = m.norms(f).hm1_sq
        for scheme in (m.SEMI_IMPLICIT, m.FULLY_IMPLICIT):
            cfg = m.SchemeConfig(k=k, nu=nu, scheme=scheme)
            v = u
            for _ in range(50):
                res = m.step(v, f, cfg)
                lhs = (1 + nu * k) * m.norms(res.u_new).l2_sq
                rhs = m.norms(v).l2_sq + k * f_hm1 / nu
                assert lhs <= rhs * (1 + 1e-12)
                v = res.u_new

    def test_dissipation_without_forcing(self, grid16):
        u = random_divfree_field(grid16, seed=48, amplitude=0.5)
        cfg = shear_cfg(m.FULLY_IMPLICIT)
        prev = m.norms(u).l2_sq
        for _ in range(10):
            u = m.step(u, m.zero_field(grid16), cfg).u_new
            cur = m.norms(u).l2_sq
            assert cur < prev
            prev = cur


class TestTemporalAccuracy:
    def _advance(self, u0, f, scheme, k, n_steps, nu=1.0):
        cfg = m.SchemeConfig(k=k, nu=nu, scheme=scheme)
        u = u0
        for _ in range(n_steps):
            u = m.step(u, f, cfg).u_new
        return u

    @pytest.mark.parametrize("scheme", [m.SEMI_IMPLICIT, m.FULLY_IMPLICIT])
    def test_first_order_self_convergence(self, grid16, scheme):
        # |u_k(T) - u_{k/2}(T)| should halve with k for a first-order scheme
        u0 = random_divfree_field(grid16, seed=49, amplitude=0.3)
        f = m.make_field(grid16, m.RandomDivFree(seed=50, amplitude=0.05))
        T = 0.08
        ks = [0.04, 0.02, 0.01, 0.005]
        finals = [self._advance(u0, f, scheme, k, round(T / k)) for k in ks]
        diffs = [
            np.sqrt(m.norms(finals[i] - finals[i + 1]).l2_sq) for i in range(len(ks) - 1)
        ]
        orders = m.convergence_orders(diffs)
        for order in orders:
            assert 0.8 <= order <= 1.2

    def test_schemes_agree_to_second_order(self, grid16):
        # one step from identical smooth data: semi and fully implicit differ
        # by O(k^2); smoothness keeps nu k |k|^2 small so the asymptotic
        # regime is reached at these k
        u0 = m.make_field(grid16, m.RandomDivFree(seed=51, slope=-2.0, amplitude=0.3, kmax=2))
        f = m.zero_field(grid16)
        diffs = []
        for k in (0.02, 0.01, 0.005):
            semi = m.step(u0, f, m.SchemeConfig(k=k, nu=1.0, scheme=m.SEMI_IMPLICIT))
            full = m.step(u0, f, m.SchemeConfig(k=k, nu=1.0, scheme=m.FULLY_IMPLICIT))
            diffs.append(np.sqrt(m.norms(semi.u_new - full.u_new).l2_sq))
        orders = m.convergence_orders(diffs)
        for order in orders:
            assert 1.6 <= order <= 2.4
