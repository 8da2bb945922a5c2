"""Tests for pathlaw.transforms: the exact algebra of T_z, T̃, T_α and R."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathlaw.functionals import exp_quad_A, z_of
from pathlaw.pathcore import AugmentedPath, Path, QuadRule, RngStream, make_grid, ramp, sample_bm
from pathlaw.transforms import (
    LawId,
    compose_durations,
    law_residual,
    path_distance,
    pcac_bounds,
    quadrature_consistency,
    reverse,
    t_alpha,
    t_alpha_direct,
    t_tilde,
    t_z,
)
from pathlaw.util import DomainError, NumericOverflow

TOL = 1e-9


def _brownian(seed: int, n_steps: int = 64, n_paths: int | None = None, t: float = 1.0) -> AugmentedPath:
    return exp_quad_A(sample_bm(make_grid(t, n_steps), 0.0, RngStream(seed, 1), n_paths))


@pytest.fixture
def batch():
    return _brownian(11, n_steps=256, n_paths=20)


# ---------------------------------------------------------------------------
# Individual transforms
# ---------------------------------------------------------------------------


class TestTz:
    """Tests for t_z."""

    def test_zero_is_identity(self, batch):
        out = t_z(batch, 0.0)
        np.testing.assert_array_equal(out.values, batch.values)
        np.testing.assert_array_equal(out.a_values, batch.a_values)

    def test_output_is_rule_propagated(self, batch):
        assert t_z(batch, 0.5).is_rule_propagated

    def test_endpoint_shift(self, batch):
        out = t_z(batch, 0.7)
        np.testing.assert_allclose(out.values[:, -1], batch.values[:, -1] - 0.7, atol=1e-12)
        np.testing.assert_allclose(out.a_terminal, math.exp(-0.7) * batch.a_terminal, rtol=1e-12)

    def test_per_path_parameters(self, batch):
        z = np.linspace(-1.0, 1.0, batch.values.shape[0])
        out = t_z(batch, z)
        np.testing.assert_allclose(out.values[:, -1], batch.values[:, -1] - z, atol=1e-12)

    def test_starts_at_phi_zero(self, batch):
        np.testing.assert_array_equal(t_z(batch, 1.3).values[:, 0], 0.0)

    def test_huge_z_overflows(self, batch):
        with pytest.raises(NumericOverflow):
            t_z(batch, 800.0)

    def test_per_path_overflow_index(self, batch):
        z = np.zeros(batch.values.shape[0])
        z[7] = -1000.0
        with pytest.raises(NumericOverflow) as info:
            t_z(batch, z)
        assert info.value.path_index == 7


class TestTildeAndAlpha:
    """Tests for t_tilde and t_alpha."""

    def test_tilde_negates_endpoint(self, batch):
        out = t_tilde(batch)
        np.testing.assert_allclose(out.values[:, -1], -batch.values[:, -1], atol=1e-12)

    def test_tilde_on_ramp(self):
        aug = exp_quad_A(ramp(1.0, 32), QuadRule.PIECEWISE_LINEAR_EXACT)
        out = t_tilde(aug)
        assert out.values[-1] == pytest.approx(-1.0)
        assert out.a_terminal == pytest.approx(math.exp(-2.0) * aug.a_terminal)

    def test_alpha_matches_direct_formula(self, batch):
        np.testing.assert_allclose(t_alpha(batch, 0.8).values, t_alpha_direct(batch, 0.8), atol=1e-12)

    def test_alpha_zero_is_identity(self, batch):
        np.testing.assert_allclose(t_alpha(batch, 0.0).values, batch.values, atol=0)

    def test_negative_alpha_rejected(self, batch):
        with pytest.raises(DomainError):
            t_alpha(batch, -0.1)


class TestReverse:
    """Tests for the time reversal R."""

    def test_reverse_endpoint(self, batch):
        np.testing.assert_allclose(reverse(batch).values[:, -1], -batch.values[:, -1], atol=1e-12)

    def test_reverse_twice_is_identity_when_started_at_zero(self, batch):
        assert path_distance(reverse(reverse(batch)), batch) < TOL

    def test_reverse_twice_removes_start_value(self):
        grid = make_grid(1.0, 16)
        shifted = Path(grid, 0.3 + grid.nodes)
        aug = exp_quad_A(shifted)
        twice = reverse(reverse(aug))
        np.testing.assert_allclose(twice.values, aug.values - 0.3, atol=1e-12)

    def test_reverse_a_is_exact_for_trapezoid(self):
        aug = _brownian(5, n_steps=128)
        requad = exp_quad_A(reverse(aug).path, QuadRule.TRAPEZOID)
        np.testing.assert_allclose(reverse(aug).a_values, requad.a_values, rtol=1e-12)


class TestDurations:
    """Tests for compose_durations."""

    def test_both_sides_agree(self):
        aug_long = _brownian(9, n_steps=96, n_paths=5, t=1.5)
        pair = compose_durations(aug_long, 1.0)
        assert pair.lhs.grid.n_steps == 64
        assert path_distance(pair.lhs, pair.rhs) < TOL

    def test_non_node_time_rejected(self):
        with pytest.raises(DomainError):
            compose_durations(_brownian(9, n_steps=96, t=1.5), 0.3333)


# ---------------------------------------------------------------------------
# law_residual on every law
# ---------------------------------------------------------------------------


class TestLawResidual:
    """Each closed-form law holds to floating-point precision."""

    @pytest.mark.parametrize("law", [law for law in LawId if law not in (LawId.PCAC1, LawId.PCAC2, LawId.DURATION_COMPOSITION)])
    def test_law_holds(self, law, batch):
        assert law_residual(law, batch, z=0.9, z_prime=-1.4, alpha=1.2) < TOL

    def test_duration_composition(self):
        aug_long = _brownian(4, n_steps=160, n_paths=8, t=1.25)
        assert law_residual(LawId.DURATION_COMPOSITION, aug_long, t=1.0) < TOL

    def test_duration_composition_needs_t(self, batch):
        with pytest.raises(DomainError):
            law_residual(LawId.DURATION_COMPOSITION, batch)

    @pytest.mark.parametrize("law, which", [(LawId.PCAC1, 0), (LawId.PCAC2, 1)])
    def test_pcac_inside_guard(self, law, which, batch):
        bound = pcac_bounds(batch)[which]
        assert law_residual(law, batch, x=0.5 * bound) < TOL

    @pytest.mark.parametrize("law, which", [(LawId.PCAC1, 0), (LawId.PCAC2, 1)])
    def test_pcac_guard_violation(self, law, which, batch):
        bound = pcac_bounds(batch)[which]
        with pytest.raises(DomainError, match="guard violated"):
            law_residual(law, batch, x=1.1 * bound)

    def test_r_commute_needs_zero_start(self):
        grid = make_grid(1.0, 8)
        aug = exp_quad_A(Path(grid, 0.2 + grid.nodes))
        with pytest.raises(DomainError):
            law_residual(LawId.R_COMMUTE, aug)

    def test_broken_transform_detected(self, batch):
        assert path_distance(t_z(batch, batch.values[:, -1]), t_tilde(batch)) > 1e-3


class TestReverseOnShiftedStart:
    """R∘T̃∘R∘R = T̃∘R when φ_0 ≠ 0."""

    def test_ramp(self):
        shifted = exp_quad_A(Path(make_grid(1.0, 64), 0.3 + ramp(1.0, 64).values))
        lhs = reverse(t_tilde(reverse(reverse(shifted))))
        assert path_distance(lhs, t_tilde(reverse(shifted))) < TOL

    def test_brownian_batch(self, batch):
        shifted = exp_quad_A(Path(batch.grid, batch.values - 0.3))
        lhs = reverse(t_tilde(reverse(reverse(shifted))))
        assert path_distance(lhs, t_tilde(reverse(shifted))) < TOL

    def test_double_reverse_drops_start(self):
        shifted = exp_quad_A(Path(make_grid(1.0, 64), 0.3 + ramp(1.0, 64).values))
        twice = reverse(reverse(shifted))
        np.testing.assert_allclose(twice.values, shifted.values - 0.3, atol=1e-12)
        np.testing.assert_allclose(twice.a_values, math.exp(-0.6) * shifted.a_values, rtol=1e-12)

    def test_single_tilde_does_not_commute(self):
        shifted = exp_quad_A(Path(make_grid(1.0, 64), 0.3 + ramp(1.0, 64).values))
        assert path_distance(reverse(t_tilde(shifted)), t_tilde(reverse(shifted))) > 1e-3


class TestQuadratureConsistency:
    """Rule-propagated A versus re-quadrature after T̃."""

    def test_gap_shrinks_with_refinement(self):
        gaps = []
        for n in (64, 256, 1024):
            aug = _brownian(21, n_steps=n, n_paths=50)
            gaps.append(float(np.sqrt(np.mean(quadrature_consistency(t_tilde(aug)) ** 2))))
        assert gaps[0] > gaps[1] > gaps[2]

    def test_reversal_is_consistent_for_trapezoid(self):
        aug = _brownian(22, n_steps=64, n_paths=10)
        assert np.max(quadrature_consistency(reverse(aug))) < 1e-12


# ---------------------------------------------------------------------------
# Property-based checks
# ---------------------------------------------------------------------------


seeds = st.integers(min_value=0, max_value=2**32)
params = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)


class TestAlgebraProperties:
    """Hypothesis checks of the transform algebra over random paths and parameters."""

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds, z=params, z_prime=params)
    def test_semigroup(self, seed, z, z_prime):
        aug = _brownian(seed)
        assert path_distance(t_z(t_z(aug, z_prime), z), t_z(aug, z + z_prime)) < TOL

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds, z=params)
    def test_z_invariance(self, seed, z):
        aug = _brownian(seed)
        np.testing.assert_allclose(z_of(t_z(aug, z))[1:], z_of(aug)[1:], rtol=1e-11)

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds)
    def test_tilde_involution(self, seed):
        aug = _brownian(seed)
        assert path_distance(t_tilde(t_tilde(aug)), aug) < TOL

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds, z=params)
    def test_r_conjugation(self, seed, z):
        aug = _brownian(seed)
        assert path_distance(t_z(reverse(t_z(aug, z)), z), reverse(aug)) < TOL

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds, alpha=st.floats(min_value=0.0, max_value=5.0, allow_nan=False))
    def test_alpha_representations(self, seed, alpha):
        aug = _brownian(seed)
        assert law_residual(LawId.LEXPR_CT, aug, alpha=alpha) < TOL
        assert law_residual(LawId.LEXPR_TA, aug, alpha=alpha) < TOL

    @settings(max_examples=30, deadline=None)
    @given(seed=seeds, frac=st.floats(min_value=0.0, max_value=0.95))
    def test_pcac(self, seed, frac):
        aug = _brownian(seed)
        bound1, bound2 = pcac_bounds(aug)
        assert law_residual(LawId.PCAC1, aug, x=frac * bound1) < TOL
        assert law_residual(LawId.PCAC2, aug, x=frac * bound2) < TOL
