import itertools

import numpy as np
import pytest

from stagewise.errors import InfeasibleSetError
from stagewise.tasks.permutations import (
    PermutationSet,
    generate_permutation_set,
    nest_levels,
    pairwise_hamming_matrix,
    read_permutation_csv,
    write_permutation_csv,
)


def brute_force_stats(members):
    """Independent pairwise-Hamming oracle via explicit loops."""
    members = [tuple(int(v) for v in row) for row in members]
    dists = [
        sum(x != y for x, y in zip(a, b))
        for a, b in itertools.combinations(members, 2)
    ]
    return sum(dists) / len(dists), min(dists)


class TestGenerate:
    def test_standard_2000_set(self, base_permset_2000):
        # Cardinality 2000 with average Hamming near 8.0.
        ps = base_permset_2000
        assert len(ps) == 2000
        assert 7.5 <= ps.avg_hamming <= 8.5
        assert ps.min_pairwise_hamming() >= 3

    def test_two_elements_exhausts_group(self):
        ps = generate_permutation_set(2, 2, seed=0, min_pairwise_hamming=1)
        members = {tuple(int(v) for v in row) for row in ps.members}
        assert members == {(0, 1), (1, 0)}
        assert ps.avg_hamming == 2.0

    def test_four_of_four_against_s4_enumeration(self):
        ps = generate_permutation_set(4, 4, seed=0, min_pairwise_hamming=2)
        all_perms = set(itertools.permutations(range(4)))
        rows = [tuple(int(v) for v in row) for row in ps.members]
        assert all(r in all_perms for r in rows)
        avg, minimum = brute_force_stats(ps.members)
        assert minimum >= 2
        assert avg == pytest.approx(ps.avg_hamming)
        matrix = pairwise_hamming_matrix(ps.members)
        off_diag = matrix[~np.eye(4, dtype=bool)]
        assert int(off_diag.min()) == minimum

    def test_infeasible_cardinality(self):
        with pytest.raises(InfeasibleSetError, match="exceeds"):
            generate_permutation_set(3, 7, seed=0)

    def test_unreachable_floor_reports_achieved_stats(self):
        # At most 3 permutations of 3 elements are mutually >= 3 apart.
        with pytest.raises(InfeasibleSetError, match="avg_hamming"):
            generate_permutation_set(3, 5, seed=0, min_pairwise_hamming=3, max_pool_rounds=5)

    def test_deterministic_per_seed(self):
        a = generate_permutation_set(6, 50, seed=42)
        b = generate_permutation_set(6, 50, seed=42)
        c = generate_permutation_set(6, 50, seed=43)
        assert np.array_equal(a.members, b.members)
        assert not np.array_equal(a.members, c.members)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            generate_permutation_set(1, 1, seed=0)
        with pytest.raises(ValueError):
            generate_permutation_set(4, 0, seed=0)
        with pytest.raises(ValueError):
            generate_permutation_set(4, 4, seed=0, min_pairwise_hamming=5)


class TestSetType:
    def test_rejects_non_bijections(self):
        with pytest.raises(ValueError, match="bijection"):
            PermutationSet.from_members(np.array([[0, 0, 1]]), seed=0)

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="distinct"):
            PermutationSet.from_members(np.array([[0, 1], [0, 1]]), seed=0)

    def test_members_are_read_only(self, permset_s4_full):
        with pytest.raises(ValueError):
            permset_s4_full.members[0, 0] = 3


class TestNestLevels:
    def test_default_cardinalities_stay_in_window(self, base_permset_2000):
        levels = nest_levels(base_permset_2000, [500, 1000, 2000])
        assert [len(l) for l in levels] == [500, 1000, 2000]
        for small, big in zip(levels, levels[1:]):
            assert small.is_prefix_of(big)
        for level in levels:
            assert 7.5 <= level.avg_hamming <= 8.5

    def test_full_prefix_is_identity(self, permset_s4_full):
        (only,) = nest_levels(permset_s4_full, [24])
        assert np.array_equal(only.members, permset_s4_full.members)
        assert only.avg_hamming == pytest.approx(permset_s4_full.avg_hamming)

    def test_levels_match_bruteforce_hamming(self, permset_s4_full):
        levels = nest_levels(permset_s4_full, [6, 12, 24])
        for level in levels:
            avg, minimum = brute_force_stats(level.members)
            assert level.avg_hamming == pytest.approx(avg)
            assert level.min_pairwise_hamming() == minimum
        assert levels[0].is_prefix_of(levels[1])
        assert levels[1].is_prefix_of(levels[2])

    def test_oversized_cardinality_rejected(self, permset_s4_full):
        with pytest.raises(ValueError, match="exceeds"):
            nest_levels(permset_s4_full, [25])
        with pytest.raises(ValueError, match="ascending"):
            nest_levels(permset_s4_full, [12, 6])


class TestCsv:
    def test_roundtrip_and_byte_identity(self, tmp_path, permset_s4_full):
        path_a = tmp_path / "a.csv"
        path_b = tmp_path / "b.csv"
        write_permutation_csv(path_a, permset_s4_full)
        write_permutation_csv(path_b, permset_s4_full)
        assert path_a.read_bytes() == path_b.read_bytes()
        loaded = read_permutation_csv(path_a)
        assert np.array_equal(loaded.members, permset_s4_full.members)
        assert loaded.avg_hamming == pytest.approx(permset_s4_full.avg_hamming)
        header = path_a.read_text().splitlines()[0]
        assert header.startswith("# n=4 cardinality=24 seed=0 avg_hamming=")
