"""Permutation sets for the jigsaw pretext task.

Task difficulty is controlled by the cardinality of a fixed permutation set
while element similarity is held constant: sets are built by greedy
farthest-point selection so the average pairwise Hamming distance stays close
to n-1 (about 8.0 for the standard 3x3 grid), and difficulty levels are
order-prefix subsets of one generated base set, so level sets nest exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from stagewise.errors import InfeasibleSetError

# Average-Hamming window enforced for 9-element sets.
HAMMING_TARGET_RANGE = (7.5, 8.5)

DEFAULT_CARDINALITIES = (500, 1000, 2000)


def pairwise_hamming_matrix(members: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Full (k, k) matrix of pairwise Hamming distances between permutations."""
    k = members.shape[0]
    out = np.empty((k, k), dtype=np.int32)
    for start in range(0, k, chunk):
        stop = min(start + chunk, k)
        out[start:stop] = (members[start:stop, None, :] != members[None, :, :]).sum(axis=2)
    return out


def _hamming_stats(members: np.ndarray) -> tuple[float, int]:
    """(average, minimum) pairwise Hamming distance over unordered pairs."""
    k = members.shape[0]
    if k < 2:
        return 0.0, 0
    dist = pairwise_hamming_matrix(members)
    total = int(dist.sum()) // 2
    pairs = k * (k - 1) // 2
    off_diag = dist[~np.eye(k, dtype=bool)]
    return total / pairs, int(off_diag.min())


@dataclass(frozen=True)
class PermutationSet:
    """Ordered collection of distinct permutations of {0..n-1}.

    Member order is part of the contract: difficulty levels are prefixes of
    one base set, so reordering members would break level nesting.
    """

    n_elements: int
    members: np.ndarray  # (cardinality, n_elements) int16, read-only
    seed: int
    avg_hamming: float

    @classmethod
    def from_members(cls, members: np.ndarray, seed: int) -> "PermutationSet":
        members = np.ascontiguousarray(members, dtype=np.int16)
        if members.ndim != 2 or members.shape[0] < 1:
            raise ValueError(f"expected a (k, n) array of permutations, got shape {members.shape}")
        n = members.shape[1]
        expected = np.arange(n, dtype=np.int16)
        if not np.all(np.sort(members, axis=1) == expected):
            raise ValueError("every member must be a bijection on {0..n-1}")
        if np.unique(members, axis=0).shape[0] != members.shape[0]:
            raise ValueError("permutation set members must be distinct")
        avg, _ = _hamming_stats(members)
        members.setflags(write=False)
        return cls(n_elements=n, members=members, seed=seed, avg_hamming=avg)

    def __len__(self) -> int:
        return int(self.members.shape[0])

    @property
    def cardinality(self) -> int:
        return len(self)

    def min_pairwise_hamming(self) -> int:
        return _hamming_stats(self.members)[1]

    def prefix(self, cardinality: int) -> "PermutationSet":
        """Prefix subset in member order, with its own recomputed statistics."""
        if not 1 <= cardinality <= len(self):
            raise ValueError(f"prefix cardinality {cardinality} out of range [1, {len(self)}]")
        return PermutationSet.from_members(self.members[:cardinality].copy(), seed=self.seed)

    def is_prefix_of(self, other: "PermutationSet") -> bool:
        return len(self) <= len(other) and bool(np.array_equal(self.members, other.members[: len(self)]))


def _sample_pool(rng: np.random.Generator, pool_size: int, n: int) -> np.ndarray:
    base = np.tile(np.arange(n, dtype=np.int16), (pool_size, 1))
    return rng.permuted(base, axis=1)


def generate_permutation_set(
    n_elements: int,
    cardinality: int,
    seed: int,
    min_pairwise_hamming: int = 3,
    *,
    pool_size: int = 128,
    max_pool_rounds: int = 40,
) -> PermutationSet:
    """Greedy farthest-point construction of a permutation set.

    Starts from one seeded random permutation, then repeatedly samples a
    seeded candidate pool and keeps the candidate whose minimum Hamming
    distance to the already-chosen members is largest, rejecting candidates
    below the distance floor. Deterministic for a given seed.
    """
    if n_elements < 2:
        raise ValueError(f"need at least 2 elements, got {n_elements}")
    if cardinality < 1:
        raise ValueError(f"cardinality must be positive, got {cardinality}")
    if cardinality > math.factorial(n_elements):
        raise InfeasibleSetError(
            f"cardinality {cardinality} exceeds {n_elements}! = {math.factorial(n_elements)} "
            f"distinct permutations"
        )
    if not 0 <= min_pairwise_hamming <= n_elements:
        raise ValueError(f"min_pairwise_hamming {min_pairwise_hamming} outside [0, {n_elements}]")

    rng = np.random.default_rng(seed)
    chosen = np.empty((cardinality, n_elements), dtype=np.int16)
    chosen[0] = rng.permutation(n_elements).astype(np.int16)
    count = 1
    floor = max(min_pairwise_hamming, 1)  # distance >= 1 also enforces distinctness

    while count < cardinality:
        for _ in range(max_pool_rounds):
            pool = _sample_pool(rng, pool_size, n_elements)
            min_dist = (pool[:, None, :] != chosen[None, :count, :]).sum(axis=2).min(axis=1)
            feasible = min_dist >= floor
            if feasible.any():
                pick = int(np.argmax(np.where(feasible, min_dist, -1)))
                chosen[count] = pool[pick]
                count += 1
                break
        else:
            partial = PermutationSet.from_members(chosen[:count].copy(), seed=seed)
            raise InfeasibleSetError(
                f"could not extend set beyond {count}/{cardinality} members with min pairwise "
                f"Hamming >= {min_pairwise_hamming} after {max_pool_rounds} pools of {pool_size}; "
                f"achieved avg_hamming={partial.avg_hamming:.3f}, "
                f"min_hamming={partial.min_pairwise_hamming()}"
            )

    result = PermutationSet.from_members(chosen, seed=seed)
    lo, hi = HAMMING_TARGET_RANGE
    if n_elements == 9 and not lo <= result.avg_hamming <= hi:
        raise InfeasibleSetError(
            f"9-element set landed outside the average-Hamming window [{lo}, {hi}]: "
            f"avg_hamming={result.avg_hamming:.4f} at cardinality {cardinality}"
        )
    return result


def nest_levels(base: PermutationSet, cardinalities: list[int] | tuple[int, ...]) -> list[PermutationSet]:
    """Prefix-nested difficulty levels of a base set (level i is a subset of level i+1)."""
    cards = list(cardinalities)
    if not cards:
        raise ValueError("need at least one cardinality")
    if any(b <= a for a, b in zip(cards, cards[1:])):
        raise ValueError(f"cardinalities must be strictly ascending, got {cards}")
    if cards[-1] > len(base):
        raise ValueError(f"cardinality {cards[-1]} exceeds base set size {len(base)}")
    return [base.prefix(c) for c in cards]


def write_permutation_csv(path, pset: PermutationSet) -> None:
    """CSV interchange: header comment with stats, one zero-based permutation per row."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(
            f"# n={pset.n_elements} cardinality={pset.cardinality} "
            f"seed={pset.seed} avg_hamming={pset.avg_hamming!r}\n"
        )
        for row in pset.members:
            fh.write(",".join(str(int(v)) for v in row) + "\n")


def read_permutation_csv(path) -> PermutationSet:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header.startswith("# "):
            raise ValueError(f"{path}: missing stats header")
        fields = dict(item.split("=", 1) for item in header[2:].split())
        rows = [[int(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    pset = PermutationSet.from_members(np.asarray(rows, dtype=np.int16), seed=int(fields["seed"]))
    if pset.n_elements != int(fields["n"]) or pset.cardinality != int(fields["cardinality"]):
        raise ValueError(f"{path}: header does not match row content")
    return pset
