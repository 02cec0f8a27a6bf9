"""Tests for classical-space construction, the axiom verifier, and both
CHSH normalizations."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bellctx.chsh import CELLS, all_combinations
from bellctx.gleason import random_context, random_density, random_rank_profile
from bellctx.kolmogorov import (
    ClassicalProbabilitySpace,
    SettingsSpec,
    build_mixed_context_space,
    build_mixed_context_space_from_tables,
    build_single_context_space,
    optimal_settings,
    parse_atom_label,
    per_context_chsh,
    szabo_chsh,
    verify_kolmogorov,
)
from bellctx.quantum import (
    Context,
    Projector,
    computational_context,
    joint_outcome_distribution,
    maximally_mixed,
    photon_pair_state,
    polarization_observable,
    pure_state,
)

RT2 = math.sqrt(2.0)


class TestClassicalSpace:
    def test_valid_space_renormalizes_exactly(self):
        space = ClassicalProbabilitySpace(("a", "b"), (0.5 + 1e-14, 0.5))
        assert space.probs.sum() == pytest.approx(1.0, abs=1e-15)

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            ClassicalProbabilitySpace(("a", "b"), (-0.1, 1.1))

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError, match="sum"):
            ClassicalProbabilitySpace(("a", "b"), (0.5, 0.6))

    def test_rejects_duplicate_atoms(self):
        with pytest.raises(ValueError, match="unique"):
            ClassicalProbabilitySpace(("a", "a"), (0.5, 0.5))

    def test_unchecked_carries_invalid_tables(self):
        space = ClassicalProbabilitySpace.unchecked(("a", "b"), (0.5, 0.6))
        assert space.probs.sum() == pytest.approx(1.1)

    def test_event_probability(self):
        space = ClassicalProbabilitySpace(("a", "b", "c"), (0.2, 0.3, 0.5))
        assert space.event_probability([0, 2]) == pytest.approx(0.7)

    def test_table_and_json(self):
        space = ClassicalProbabilitySpace(("a", "b"), (0.25, 0.75))
        assert "0.75" in space.to_table()
        assert '"atoms"' in space.to_json()

    @given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=12))
    def test_random_weights_always_yield_valid_space(self, weights):
        probs = np.array(weights) / np.sum(weights)
        space = ClassicalProbabilitySpace(
            tuple(f"w{i}" for i in range(len(probs))), probs)
        assert space.probs.min() >= 0.0
        assert abs(space.probs.sum() - 1.0) <= 1e-12


class TestSettingsSpec:
    def test_uniform_constructor(self):
        spec = SettingsSpec.uniform((0.0, 1.0), (2.0,))
        assert spec.alice_probs == (0.5, 0.5)
        assert spec.bob_probs == (1.0,)

    def test_rejects_bad_distribution(self):
        with pytest.raises(ValueError, match="sum"):
            SettingsSpec((0.0,), (0.5,), (0.0,), (1.0,))


class TestSingleContextSpace:
    def test_mixed_qubit_in_computational_basis(self):
        space = build_single_context_space(maximally_mixed(2), computational_context(2))
        assert space.atoms == ("P0", "P1")
        assert space.probs == pytest.approx([0.5, 0.5])

    def test_trivial_single_projector_context(self):
        space = build_single_context_space(
            maximally_mixed(3), Context((Projector(np.eye(3)),)))
        assert len(space) == 1
        assert space.probs[0] == pytest.approx(1.0)

    def test_pair_state_joint_context_probabilities(self):
        # Oracle: direct trace computation of the four joint projectors.
        rho = photon_pair_state()
        a = polarization_observable(0.0)
        b = polarization_observable(math.pi / 8)
        expected = []
        for pa in (a.plus, a.minus):
            for pb in (b.plus, b.minus):
                proj = np.kron(pa.matrix, pb.matrix)
                expected.append(float(np.trace(rho.matrix @ proj).real))
        joint = Context(tuple(
            Projector(np.kron(pa.matrix, pb.matrix))
            for pa in (a.plus, a.minus) for pb in (b.plus, b.minus)))
        space = build_single_context_space(rho, joint)
        assert space.probs == pytest.approx(expected, abs=1e-12)
        assert space.probs == pytest.approx(
            [(2 + RT2) / 8, (2 - RT2) / 8, (2 - RT2) / 8, (2 + RT2) / 8], abs=1e-12)


class TestMixedContextSpace:
    def test_sixteen_atoms_for_two_by_two(self):
        space = build_mixed_context_space(photon_pair_state(), optimal_settings())
        assert len(space) == 16

    def test_total_probability_one(self):
        space = build_mixed_context_space(photon_pair_state(), optimal_settings())
        assert space.probs.sum() == pytest.approx(1.0, abs=1e-15)

    def test_maximally_mixed_gives_sixteenth_each(self):
        space = build_mixed_context_space(maximally_mixed(4), optimal_settings())
        assert space.probs == pytest.approx([1 / 16] * 16)

    def test_quarter_factorization_cellwise(self):
        rho = photon_pair_state()
        spec = optimal_settings()
        space = build_mixed_context_space(rho, spec)
        for label, prob in zip(space.atoms, space.probs):
            ix, a, iy, b = parse_atom_label(label)
            table = joint_outcome_distribution(
                rho, spec.alice_observable(ix), spec.bob_observable(iy))
            assert prob == pytest.approx(table[(a, b)] / 4, abs=1e-12)

    def test_named_atom_probability(self):
        spec = optimal_settings()
        space = build_mixed_context_space(photon_pair_state(), spec)
        index = space.atoms.index(
            f"x0@{0.0:.12g}:a+1|y0@{math.pi / 8:.12g}:b+1")
        assert space.probs[index] == pytest.approx((2 + RT2) / 8 / 4, abs=1e-12)

    def test_marginal_consistency(self):
        spec = SettingsSpec((0.0, 0.5), (0.3, 0.7), (0.1, 0.9), (0.25, 0.75))
        space = build_mixed_context_space(photon_pair_state(), spec)
        marginals = {}
        for label, prob in zip(space.atoms, space.probs):
            ix, _, iy, _ = parse_atom_label(label)
            marginals[(ix, iy)] = marginals.get((ix, iy), 0.0) + prob
        for (ix, iy), total in marginals.items():
            assert total == pytest.approx(
                spec.alice_probs[ix] * spec.bob_probs[iy], abs=1e-12)

    def test_weighted_table_list_is_mixed(self):
        spec = optimal_settings()
        table_up = {cell: {(1, 1): 1.0, (1, -1): 0.0, (-1, 1): 0.0, (-1, -1): 0.0}
                    for cell in CELLS}
        table_down = {cell: {(1, 1): 0.0, (1, -1): 0.0, (-1, 1): 0.0, (-1, -1): 1.0}
                      for cell in CELLS}
        space = build_mixed_context_space_from_tables(
            [(0.25, table_up), (0.75, table_down)], spec)
        ix_up = space.atoms.index(f"x0@{0.0:.12g}:a+1|y0@{math.pi / 8:.12g}:b+1")
        assert space.probs[ix_up] == pytest.approx(0.25 / 4)


class TestVerifier:
    def test_single_context_spaces_pass(self):
        report = verify_kolmogorov(
            build_single_context_space(maximally_mixed(2), computational_context(2)))
        assert report.all_ok
        assert report.worst_violation <= 1e-12
        assert report.additivity_mode == "exhaustive"

    def test_hand_built_space_fails_normalization(self):
        report = verify_kolmogorov(
            ClassicalProbabilitySpace.unchecked(("a", "b"), (0.5, 0.6)))
        assert not report.normalization_ok
        assert report.positivity_ok

    def test_negative_probability_fails_positivity(self):
        report = verify_kolmogorov(
            ClassicalProbabilitySpace.unchecked(("a", "b"), (1.2, -0.2)))
        assert not report.positivity_ok
        assert report.worst_violation >= 0.2

    def test_mixed_space_passes_exhaustively(self):
        space = build_mixed_context_space(photon_pair_state(), optimal_settings())
        report = verify_kolmogorov(space)
        assert report.all_ok
        assert report.additivity_mode == "exhaustive"
        assert report.n_additivity_checks == 3 ** 16

    def test_sampled_mode_above_limit(self):
        space = build_mixed_context_space(photon_pair_state(), optimal_settings())
        report = verify_kolmogorov(space, exhaustive_limit=8, seed=5)
        assert report.additivity_mode == "sampled"
        assert report.n_additivity_checks == 10_000
        assert report.all_ok

    def test_sampled_mode_is_seed_deterministic(self):
        space = ClassicalProbabilitySpace.unchecked(
            tuple(f"a{i}" for i in range(20)),
            np.full(20, 1 / 20) + np.linspace(-1e-9, 1e-9, 20))
        first = verify_kolmogorov(space, exhaustive_limit=4, seed=9)
        second = verify_kolmogorov(space, exhaustive_limit=4, seed=9)
        assert first.worst_violation == second.worst_violation

    def test_thousand_random_state_context_pairs(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            dim = int(rng.integers(2, 5))
            rho = random_density(dim, rng)
            ctx = random_context(dim, random_rank_profile(dim, rng), rng)
            report = verify_kolmogorov(build_single_context_space(rho, ctx))
            assert report.all_ok
            assert report.worst_violation <= 1e-12


def grid_search_max_s(steps: int = 24) -> float:
    """Independent oracle: coarse maximization of S over analyzer angles
    using only the cos-2-delta law (itself brute-forced in test_quantum)."""
    angles = np.linspace(0.0, np.pi, steps, endpoint=False)
    best = 0.0
    for a0 in angles:
        for a1 in angles:
            for b0 in angles:
                for b1 in angles:
                    e = np.cos(2 * np.array([a0 - b0, a0 - b1, a1 - b0, a1 - b1]))
                    s = e[0] - e[1] + e[2] + e[3]
                    best = max(best, abs(s))
    return best


class TestPerContextChsh:
    def test_pair_state_hits_two_root_two(self):
        s = per_context_chsh(photon_pair_state(), optimal_settings())
        assert s == pytest.approx(2 * RT2, abs=1e-10)

    def test_optimal_angles_agree_with_grid_search(self):
        assert grid_search_max_s() <= 2 * RT2 + 1e-9
        # The standard set achieves the grid maximum up to grid resolution.
        assert per_context_chsh(photon_pair_state(), optimal_settings()) >= grid_search_max_s() - 1e-9

    def test_maximally_mixed_gives_zero(self):
        s = per_context_chsh(maximally_mixed(4), optimal_settings())
        assert s == pytest.approx(0.0, abs=1e-12)

    def test_product_state_respects_local_bound(self):
        hh = pure_state([1, 0, 0, 0])
        rng = np.random.default_rng(11)
        for _ in range(50):
            angles = rng.uniform(0, np.pi, size=4)
            spec = SettingsSpec.uniform(angles[:2], angles[2:])
            for combination in all_combinations():
                assert abs(per_context_chsh(hh, spec, combination)) <= 2.0 + 1e-10

    def test_requires_two_settings_per_side(self):
        spec = SettingsSpec.uniform((0.0,), (0.0, 1.0))
        with pytest.raises(ValueError, match="two settings"):
            per_context_chsh(photon_pair_state(), spec)


class TestSzaboChsh:
    def test_pair_state_reduces_to_quarter(self):
        space = build_mixed_context_space(photon_pair_state(), optimal_settings())
        assert szabo_chsh(space) == pytest.approx(RT2 / 2, abs=1e-10)

    def test_equals_quarter_of_s_for_random_states_and_angles(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            rho = random_density(4, rng)
            angles = rng.uniform(-np.pi, np.pi, size=4)
            spec = SettingsSpec.uniform(angles[:2], angles[2:])
            s = per_context_chsh(rho, spec)
            s_prime = szabo_chsh(build_mixed_context_space(rho, spec))
            assert s_prime == pytest.approx(s / 4, abs=1e-12)

    def test_maximally_mixed_gives_zero(self):
        space = build_mixed_context_space(maximally_mixed(4), optimal_settings())
        assert szabo_chsh(space) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_non_mixed_structure(self):
        space = build_single_context_space(maximally_mixed(2), computational_context(2))
        with pytest.raises(ValueError, match="16-atom"):
            szabo_chsh(space)

    def test_relabeling_invariance_of_max_abs(self):
        # a -> -a on Alice's first setting, with the compensating sign
        # flips in the combination, leaves |S| and |S'| alone.
        rng = np.random.default_rng(13)
        rho = random_density(4, rng)
        spec = SettingsSpec.uniform(rng.uniform(0, np.pi, 2), rng.uniform(0, np.pi, 2))
        space = build_mixed_context_space(rho, spec)

        def flipped(space):
            atoms, probs = [], []
            for label, prob in zip(space.atoms, space.probs):
                ix, a, iy, b = parse_atom_label(label)
                a = -a if ix == 0 else a
                atoms.append(f"x{ix}@0:a{a:+d}|y{iy}@0:b{b:+d}")
                probs.append(prob)
            order = np.argsort(atoms)
            return ClassicalProbabilitySpace(
                tuple(np.array(atoms)[order]), np.array(probs)[order])

        original = max(abs(szabo_chsh(space, c)) for c in all_combinations())
        relabeled = max(abs(szabo_chsh(flipped(space), c)) for c in all_combinations())
        assert relabeled == pytest.approx(original, abs=1e-12)

    def test_malformed_atom_label_rejected(self):
        space = ClassicalProbabilitySpace(
            tuple(f"atom{i}" for i in range(16)), np.full(16, 1 / 16))
        with pytest.raises(ValueError, match="malformed"):
            szabo_chsh(space)
