"""Classical probability spaces built from quantum data, and their audit.

A fixed measurement context induces an ordinary finite probability space
(one atom per projector). A randomly switched two-party experiment with
setting distributions P(x), P(y) induces the larger product space whose
atoms are (x, a, y, b) tuples with

    prob(x, a, y, b) = P(x) * P(y) * P(ab|xy),

which for uniform binary settings has 16 atoms each carrying a factor
1/4. Both constructions are verified against the probability axioms
(positivity, normalization, additivity on disjoint events). The spaces
here are finite, so countable additivity coincides with the finite
additivity that is actually checked; the report says so explicitly.

Two CHSH normalizations are computed: the per-context S from conditional
correlations E(x,y), and the globally normalized S' from unconditioned
correlations E'(x,y) over the mixed space. For uniform binary settings
S' = S/4 identically, which moves the quantum 2*sqrt(2) down to
sqrt(2)/2 without changing the physics -- only the normalization.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import numpy as np

from .chsh import CELLS, ChshCombination, DEFAULT_COMBINATION, chsh_value
from .quantum import (
    Context,
    DensityOperator,
    OUTCOME_PAIRS,
    context_distribution,
    correlation,
    joint_outcome_distribution,
    polarization_observable,
)

SPACE_TOL = 1e-12

ADDITIVITY_NOTE = (
    "finite additivity checked; on a finite sample space this coincides "
    "with countable additivity"
)

_ATOM_RE = re.compile(
    r"^x(?P<ix>\d+)@(?P<ax>[^:]+):a(?P<a>[+-]1)\|y(?P<iy>\d+)@(?P<by>[^:]+):b(?P<b>[+-]1)$"
)


@dataclass(frozen=True)
class ClassicalProbabilitySpace:
    """Finite sample space with the full power set as event algebra.

    ``atoms`` are string labels; ``probs`` is the aligned probability
    vector, validated (>= 0, sums to 1 within SPACE_TOL) and then
    renormalized exactly. Use :meth:`unchecked` to carry deliberately
    invalid tables into the verifier.
    """

    atoms: tuple[str, ...]
    probs: np.ndarray
    validated: bool = True

    def __post_init__(self) -> None:
        atoms = tuple(str(a) for a in self.atoms)
        probs = np.asarray(self.probs, dtype=float).reshape(-1).copy()
        if len(atoms) != len(probs):
            raise ValueError("atoms and probabilities have different lengths")
        if len(atoms) == 0:
            raise ValueError("sample space must have at least one atom")
        if len(set(atoms)) != len(atoms):
            raise ValueError("atom labels must be unique")
        if self.validated:
            if float(probs.min(initial=0.0)) < 0.0:
                raise ValueError(f"negative probability {probs.min()}")
            total = float(probs.sum())
            if abs(total - 1.0) > SPACE_TOL:
                raise ValueError(f"probabilities sum to {total}, not 1")
            probs /= total
        probs.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def unchecked(cls, atoms, probs) -> "ClassicalProbabilitySpace":
        """Build without validation or renormalization (verifier fodder)."""
        return cls(tuple(atoms), np.asarray(probs, dtype=float), validated=False)

    def __len__(self) -> int:
        return len(self.atoms)

    def event_probability(self, atom_indices) -> float:
        """P(A) for the event A given by a collection of atom indices."""
        return float(self.probs[np.asarray(list(atom_indices), dtype=int)].sum())

    def to_json(self) -> str:
        return json.dumps(
            {"atoms": list(self.atoms), "probs": [float(p) for p in self.probs]},
            sort_keys=True,
        )

    def to_table(self) -> str:
        """Two-column text table: atom label, probability."""
        width = max(len(a) for a in self.atoms)
        return "\n".join(f"{a:<{width}}  {p:.17g}" for a, p in zip(self.atoms, self.probs))


@dataclass(frozen=True)
class SettingsSpec:
    """Angles and selection probabilities for the two analyzer sides."""

    alice_angles: tuple[float, ...]
    alice_probs: tuple[float, ...]
    bob_angles: tuple[float, ...]
    bob_probs: tuple[float, ...]

    def __post_init__(self) -> None:
        for name in ("alice", "bob"):
            angles = tuple(float(t) for t in getattr(self, f"{name}_angles"))
            probs = np.asarray(getattr(self, f"{name}_probs"), dtype=float)
            if len(angles) != len(probs) or len(angles) == 0:
                raise ValueError(f"{name}: angles and probabilities must align and be non-empty")
            if float(probs.min()) < 0.0:
                raise ValueError(f"{name}: negative setting probability")
            total = float(probs.sum())
            if abs(total - 1.0) > SPACE_TOL:
                raise ValueError(f"{name}: setting probabilities sum to {total}, not 1")
            object.__setattr__(self, f"{name}_angles", angles)
            object.__setattr__(self, f"{name}_probs", tuple(float(p) for p in probs / total))

    @classmethod
    def uniform(cls, alice_angles, bob_angles) -> "SettingsSpec":
        na, nb = len(alice_angles), len(bob_angles)
        return cls(tuple(alice_angles), (1.0 / na,) * na,
                   tuple(bob_angles), (1.0 / nb,) * nb)

    @property
    def n_alice(self) -> int:
        return len(self.alice_angles)

    @property
    def n_bob(self) -> int:
        return len(self.bob_angles)

    def alice_observable(self, index: int):
        return polarization_observable(self.alice_angles[index])

    def bob_observable(self, index: int):
        return polarization_observable(self.bob_angles[index])


# The standard angle set at which the pair state reaches S = 2*sqrt(2).
OPTIMAL_ALICE_ANGLES = (0.0, np.pi / 4)
OPTIMAL_BOB_ANGLES = (np.pi / 8, 3 * np.pi / 8)


def optimal_settings() -> SettingsSpec:
    return SettingsSpec.uniform(OPTIMAL_ALICE_ANGLES, OPTIMAL_BOB_ANGLES)


@dataclass(frozen=True)
class KolmogorovReport:
    """Outcome of the axiom audit of one probability space."""

    positivity_ok: bool
    normalization_ok: bool
    additivity_ok: bool
    worst_violation: float
    n_additivity_checks: int
    n_atoms: int
    additivity_mode: str  # "exhaustive" | "sampled"
    note: str = ADDITIVITY_NOTE

    @property
    def all_ok(self) -> bool:
        return self.positivity_ok and self.normalization_ok and self.additivity_ok

    def to_json(self) -> str:
        return json.dumps(
            {
                "positivity_ok": self.positivity_ok,
                "normalization_ok": self.normalization_ok,
                "additivity_ok": self.additivity_ok,
                "worst_violation": self.worst_violation,
                "n_additivity_checks": self.n_additivity_checks,
                "n_atoms": self.n_atoms,
                "additivity_mode": self.additivity_mode,
                "note": self.note,
            },
            sort_keys=True,
        )


def build_single_context_space(rho: DensityOperator, c: Context) -> ClassicalProbabilitySpace:
    """One atom per projector of the context; trace-rule probabilities."""
    probs = context_distribution(rho, c)
    atoms = tuple(f"P{k}" for k in range(len(c)))
    return ClassicalProbabilitySpace(atoms, probs)


def atom_label(ix: int, alice_angle: float, a: int, iy: int, bob_angle: float, b: int) -> str:
    """Mixed-space atom label; encodes setting indices and angles so event
    logs (which carry x_index/y_index) stay joinable."""
    return f"x{ix}@{alice_angle:.12g}:a{a:+d}|y{iy}@{bob_angle:.12g}:b{b:+d}"


def parse_atom_label(label: str) -> tuple[int, int, int, int]:
    """(x_index, a, y_index, b) from a mixed-space atom label."""
    m = _ATOM_RE.match(label)
    if m is None:
        raise ValueError(f"malformed mixed-space atom label {label!r}")
    return int(m["ix"]), int(m["a"]), int(m["iy"]), int(m["b"])


def _mixture_table(tables) -> dict[tuple[int, int], dict[tuple[int, int], float]]:
    """Normalize either one table mapping or a weighted list into one mapping.

    A "table mapping" maps (x_index, y_index) to {(a, b): P(ab|xy)}. A
    weighted list [(w, mapping), ...] represents a hidden variable with
    more than one value; the mixture sum_w w * P(ab|xy,w) is formed here.
    """
    if isinstance(tables, dict):
        return tables
    weighted = list(tables)
    if not weighted:
        raise ValueError("empty table list")
    total_w = sum(w for w, _ in weighted)
    if abs(total_w - 1.0) > SPACE_TOL:
        raise ValueError(f"table weights sum to {total_w}, not 1")
    cells = weighted[0][1].keys()
    out: dict[tuple[int, int], dict[tuple[int, int], float]] = {}
    for cell in cells:
        out[cell] = {
            pair: sum(w * mapping[cell][pair] for w, mapping in weighted) / total_w
            for pair in OUTCOME_PAIRS
        }
    return out


def build_mixed_context_space_from_tables(tables, spec: SettingsSpec) -> ClassicalProbabilitySpace:
    """Product space over settings and outcomes from conditional tables.

    Atoms are (x, a, y, b) tuples with prob = P(x) P(y) P(ab|xy); for a
    2x2 uniform-setting experiment that is 16 atoms at P(ab|xy)/4.
    """
    mixture = _mixture_table(tables)
    atoms: list[str] = []
    probs: list[float] = []
    for ix in range(spec.n_alice):
        for a in (1, -1):
            for iy in range(spec.n_bob):
                for b in (1, -1):
                    cell = mixture[(ix, iy)]
                    atoms.append(atom_label(ix, spec.alice_angles[ix], a,
                                            iy, spec.bob_angles[iy], b))
                    probs.append(spec.alice_probs[ix] * spec.bob_probs[iy] * cell[(a, b)])
    return ClassicalProbabilitySpace(tuple(atoms), np.asarray(probs))


def build_mixed_context_space(rho: DensityOperator, spec: SettingsSpec) -> ClassicalProbabilitySpace:
    """Mixed-context space of a state measured with randomly drawn settings."""
    tables = {
        (ix, iy): joint_outcome_distribution(
            rho, spec.alice_observable(ix), spec.bob_observable(iy))
        for ix in range(spec.n_alice)
        for iy in range(spec.n_bob)
    }
    return build_mixed_context_space_from_tables(tables, spec)


def _subset_probabilities(probs: np.ndarray) -> np.ndarray:
    """P(A) for every subset A of atoms, indexed by bitmask."""
    n = len(probs)
    table = np.zeros(1 << n)
    for k in range(n):
        size = 1 << k
        table[size:2 * size] = table[:size] + probs[k]
    return table


def _ternary_masks(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Masks (A, B) of every disjoint ordered pair over n atoms.

    Code digit per atom: 0 (in neither), 1 (in A), 2 (in B); 3^n codes.
    """
    a = np.zeros(1, dtype=np.uint32)
    b = np.zeros(1, dtype=np.uint32)
    for k in range(n):
        bit = np.uint32(1 << k)
        a = np.concatenate([a, a | bit, a])
        b = np.concatenate([b, b, b | bit])
    return a, b


def _exhaustive_additivity(probs: np.ndarray) -> tuple[float, int]:
    """Worst |P(A u B) - P(A) - P(B)| over all disjoint ordered pairs."""
    n = len(probs)
    table = _subset_probabilities(probs)
    n_low = min(n, 8)
    a_low, b_low = _ternary_masks(n_low)
    a_high, b_high = _ternary_masks(n - n_low)
    a_high = a_high << np.uint32(n_low)
    b_high = b_high << np.uint32(n_low)
    worst = 0.0
    block = max(1, (1 << 20) // len(a_low))
    for start in range(0, len(a_high), block):
        ah = a_high[start:start + block, None]
        bh = b_high[start:start + block, None]
        mask_a = (ah | a_low[None, :]).ravel()
        mask_b = (bh | b_low[None, :]).ravel()
        diff = np.abs(table[mask_a | mask_b] - table[mask_a] - table[mask_b])
        worst = max(worst, float(diff.max()))
    return worst, 3 ** n


def _sampled_additivity(probs: np.ndarray, n_pairs: int, seed: int) -> tuple[float, int]:
    """Worst violation over a seeded random sample of disjoint pairs."""
    n = len(probs)
    rng = np.random.default_rng(seed)
    digits = rng.integers(0, 3, size=(n_pairs, n))
    in_a = digits == 1
    in_b = digits == 2
    p_a = in_a @ probs
    p_b = in_b @ probs
    p_union = (in_a | in_b) @ probs
    worst = float(np.max(np.abs(p_union - p_a - p_b), initial=0.0))
    return worst, n_pairs


def verify_kolmogorov(
    space: ClassicalProbabilitySpace,
    exhaustive_limit: int = 16,
    n_sampled_pairs: int = 10_000,
    seed: int = 0,
) -> KolmogorovReport:
    """Audit positivity, normalization, and disjoint-event additivity.

    Additivity is checked exhaustively (all 3^n ordered disjoint pairs,
    via subset coding) while the space has at most ``exhaustive_limit``
    atoms, else on a seeded random sample of ``n_sampled_pairs`` pairs.
    """
    probs = space.probs
    positivity_deficit = max(0.0, -float(probs.min()))
    normalization_dev = abs(float(probs.sum()) - 1.0)
    if len(space) <= exhaustive_limit:
        additivity_worst, n_checks = _exhaustive_additivity(probs)
        mode = "exhaustive"
    else:
        additivity_worst, n_checks = _sampled_additivity(probs, n_sampled_pairs, seed)
        mode = "sampled"
    return KolmogorovReport(
        positivity_ok=positivity_deficit == 0.0,
        normalization_ok=normalization_dev <= SPACE_TOL,
        additivity_ok=additivity_worst <= SPACE_TOL,
        worst_violation=max(positivity_deficit, normalization_dev, additivity_worst),
        n_additivity_checks=n_checks,
        n_atoms=len(space),
        additivity_mode=mode,
    )


def _require_two_by_two(spec: SettingsSpec) -> None:
    if spec.n_alice != 2 or spec.n_bob != 2:
        raise ValueError(
            f"CHSH needs exactly two settings per side, got {spec.n_alice}x{spec.n_bob}")


def per_context_chsh(
    rho: DensityOperator,
    spec: SettingsSpec,
    combination: ChshCombination = DEFAULT_COMBINATION,
) -> float:
    """S from the four conditional correlations E(x,y)."""
    _require_two_by_two(spec)
    correlations = {
        (ix, iy): correlation(rho, spec.alice_observable(ix), spec.bob_observable(iy))
        for ix, iy in CELLS
    }
    return float(chsh_value(correlations, combination))


def szabo_chsh(
    space: ClassicalProbabilitySpace,
    combination: ChshCombination = DEFAULT_COMBINATION,
) -> float:
    """S' from unconditioned correlations E'(x,y) = sum_ab ab * P(x,a,y,b).

    The space must have the 16-atom (x, a, y, b) structure produced by
    build_mixed_context_space with two settings per side.
    """
    if len(space) != 16:
        raise ValueError(f"expected the 16-atom mixed-context structure, got {len(space)} atoms")
    e_prime: dict[tuple[int, int], float] = {cell: 0.0 for cell in CELLS}
    seen: set[tuple[int, int, int, int]] = set()
    for label, prob in zip(space.atoms, space.probs):
        ix, a, iy, b = parse_atom_label(label)
        if (ix, iy) not in e_prime:
            raise ValueError(f"atom {label!r} indexes settings outside the 2x2 layout")
        seen.add((ix, a, iy, b))
        e_prime[(ix, iy)] += a * b * float(prob)
    if len(seen) != 16:
        raise ValueError("mixed-space atoms do not cover all 16 (x,a,y,b) combinations")
    return float(chsh_value(e_prime, combination))
