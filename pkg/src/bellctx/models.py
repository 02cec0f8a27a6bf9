"""Outcome models for a two-party, two-setting, two-outcome experiment.

Each model answers one question: given settings (x, y), what is the
joint distribution of the +/-1 outcomes (a, b)? Five mechanisms are
implemented:

- ``QuantumModel``: trace-rule tables from a shared state and analyzer
  angles. Tables exist only per settings pair; no joint distribution
  over all four pairs at once is ever formed.
- ``DeterministicStrategy`` / ``MixedLhvModel``: local hidden variables,
  i.e. convex mixtures of the 16 deterministic assignments.
- ``SuperdeterministicModel``: the hidden variable's distribution is
  allowed to depend on the settings (measurement independence dropped).
- ``PrBoxModel``: perfectly correlated/anticorrelated no-signalling
  tables that reach S = 4 (parameter independence dropped at the
  mechanism level: one wing's outcome rule references the remote
  setting).
- ``SignallingModel``: deliberate negative control whose Bob marginal
  depends on Alice's setting; its tables are signalling.

Models are immutable value objects; they never own RNG state. Samplers
take a Generator from the caller.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .chsh import CELLS, ChshCombination, DEFAULT_COMBINATION, all_combinations, chsh_value
from .quantum import (
    DensityOperator,
    OUTCOME_PAIRS,
    joint_outcome_distribution,
    operator_from_json,
    operator_to_json,
    polarization_observable,
)

TABLE_TOL = 1e-12

JointTable = dict[tuple[int, int], float]


class SignallingTablesError(ValueError):
    """Tables whose marginals depend on the remote setting: the hidden
    variable membership question is ill-posed for them."""


class OutcomeModel(ABC):
    """Generator of (a, b) outcome statistics given settings (x, y)."""

    kind: str = "abstract"

    # Which Bell-theorem assumption the model's mechanism breaks, if any.
    violates_parameter_independence: bool = False
    violates_measurement_independence: bool = False

    @property
    @abstractmethod
    def n_alice(self) -> int: ...

    @property
    @abstractmethod
    def n_bob(self) -> int: ...

    @abstractmethod
    def exact_joint_table(self, x_index: int, y_index: int) -> JointTable: ...

    @abstractmethod
    def to_json_dict(self) -> dict: ...

    def _check_cell(self, x_index: int, y_index: int) -> None:
        if not (0 <= x_index < self.n_alice and 0 <= y_index < self.n_bob):
            raise ValueError(
                f"settings ({x_index}, {y_index}) outside the "
                f"{self.n_alice}x{self.n_bob} layout")


def exact_joint_table(model: OutcomeModel, x_index: int, y_index: int) -> JointTable:
    """Module-level spelling of model.exact_joint_table."""
    return model.exact_joint_table(x_index, y_index)


def table_vector(table: JointTable) -> np.ndarray:
    """Table as a 4-vector in OUTCOME_PAIRS order."""
    return np.array([table[pair] for pair in OUTCOME_PAIRS])


def table_correlation(table: JointTable):
    return (table[(1, 1)] + table[(-1, -1)] - table[(1, -1)] - table[(-1, 1)])


def validate_table(table: JointTable, tol: float = 1e-9) -> None:
    missing = [pair for pair in OUTCOME_PAIRS if pair not in table]
    if missing:
        raise ValueError(f"table is missing outcome pairs {missing}")
    values = table_vector(table)
    if float(values.min()) < -tol:
        raise ValueError(f"table has negative entry {values.min()}")
    total = float(values.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"table sums to {total}, not 1")


@dataclass(frozen=True)
class DeterministicStrategy(OutcomeModel):
    """Fixed local assignment: a(x) and b(y) in {-1, +1} for every setting."""

    a_of_x: tuple[int, ...]
    b_of_y: tuple[int, ...]

    kind = "deterministic"

    def __post_init__(self) -> None:
        for name, values in (("a_of_x", self.a_of_x), ("b_of_y", self.b_of_y)):
            values = tuple(int(v) for v in values)
            if not values or any(v not in (-1, 1) for v in values):
                raise ValueError(f"{name} must be non-empty with values in {{-1, +1}}")
            object.__setattr__(self, name, values)

    @property
    def n_alice(self) -> int:
        return len(self.a_of_x)

    @property
    def n_bob(self) -> int:
        return len(self.b_of_y)

    def outcomes(self, x_index: int, y_index: int) -> tuple[int, int]:
        self._check_cell(x_index, y_index)
        return self.a_of_x[x_index], self.b_of_y[y_index]

    def exact_joint_table(self, x_index: int, y_index: int) -> JointTable:
        fixed = self.outcomes(x_index, y_index)
        return {pair: 1.0 if pair == fixed else 0.0 for pair in OUTCOME_PAIRS}

    def chsh(self, combination: ChshCombination = DEFAULT_COMBINATION) -> int:
        """Exact integer S of the strategy (two settings per side only)."""
        correlations = {(ix, iy): self.a_of_x[ix] * self.b_of_y[iy] for ix, iy in CELLS}
        return int(chsh_value(correlations, combination))

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "a_of_x": list(self.a_of_x), "b_of_y": list(self.b_of_y)}


def enumerate_deterministic_strategies(n_alice: int = 2, n_bob: int = 2):
    """All 16 deterministic strategies of the two-setting scenario.

    Ordered lexicographically by (a(x), a(x'), b(y), b(y')) with +1
    before -1, so witnesses and reports are reproducible.
    """
    if n_alice != 2 or n_bob != 2:
        raise ValueError(
            f"strategy enumeration is defined for two settings per side, "
            f"got {n_alice}x{n_bob}")
    return [
        DeterministicStrategy((a0, a1), (b0, b1))
        for a0, a1, b0, b1 in itertools.product((1, -1), repeat=4)
    ]


def lhv_max_chsh() -> int:
    """Exhaustive max |S| over all strategies and all eight sign patterns.

    Pure integer arithmetic; the answer is the exact local bound 2.
    """
    return max(
        abs(strategy.chsh(combination))
        for strategy in enumerate_deterministic_strategies()
        for combination in all_combinations()
    )


def maximizing_strategies(combination: ChshCombination = DEFAULT_COMBINATION):
    """Strategies reaching the signed maximum S = +2 at the combination."""
    strategies = enumerate_deterministic_strategies()
    best = max(s.chsh(combination) for s in strategies)
    return [s for s in strategies if s.chsh(combination) == best]


@dataclass(frozen=True)
class MixedLhvModel(OutcomeModel):
    """Convex mixture of deterministic strategies (a shared hidden variable)."""

    strategies: tuple[DeterministicStrategy, ...]
    weights: tuple[float, ...]

    kind = "mixed_lhv"

    def __post_init__(self) -> None:
        strategies = tuple(self.strategies)
        weights = np.asarray(self.weights, dtype=float)
        if len(strategies) == 0 or len(strategies) != len(weights):
            raise ValueError("strategies and weights must align and be non-empty")
        shape = (strategies[0].n_alice, strategies[0].n_bob)
        if any((s.n_alice, s.n_bob) != shape for s in strategies):
            raise ValueError("strategies declare inconsistent setting counts")
        if float(weights.min()) < 0.0:
            raise ValueError("negative mixture weight")
        total = float(weights.sum())
        if abs(total - 1.0) > TABLE_TOL:
            raise ValueError(f"mixture weights sum to {total}, not 1")
        object.__setattr__(self, "strategies", strategies)
        object.__setattr__(self, "weights", tuple(float(w) for w in weights / total))

    @classmethod
    def uniform_over_all(cls) -> "MixedLhvModel":
        strategies = enumerate_deterministic_strategies()
        return cls(tuple(strategies), (1.0 / len(strategies),) * len(strategies))

    @property
    def n_alice(self) -> int:
        return self.strategies[0].n_alice

    @property
    def n_bob(self) -> int:
        return self.strategies[0].n_bob

    def exact_joint_table(self, x_index: int, y_index: int) -> JointTable:
        self._check_cell(x_index, y_index)
        table = dict.fromkeys(OUTCOME_PAIRS, 0.0)
        for strategy, weight in zip(self.strategies, self.weights):
            table[strategy.outcomes(x_index, y_index)] += weight
        return table

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "strategies": [s.to_json_dict() for s in self.strategies],
            "weights": list(self.weights),
        }


@dataclass(frozen=True)
class QuantumModel(OutcomeModel):
    """Shared state plus per-side analyzer angles.

    The conditional table is computed per requested settings pair and
    never assembled into one joint distribution over incompatible pairs:
    the state alone does not carry outcome statistics until a context is
    named.
    """

    rho: DensityOperator
    alice_angles: tuple[float, ...]
    bob_angles: tuple[float, ...]

    kind = "quantum"

    def __post_init__(self) -> None:
        object.__setattr__(self, "alice_angles", tuple(float(t) for t in self.alice_angles))
        object.__setattr__(self, "bob_angles", tuple(float(t) for t in self.bob_angles))
        if not self.alice_angles or not self.bob_angles:
            raise ValueError("each side needs at least one analyzer angle")
        if self.rho.dim != 4:
            raise ValueError(f"two-qubit state required (dim 4), got dim {self.rho.dim}")

    @property
    def n_alice(self) -> int:
        return len(self.alice_angles)

    @property
    def n_bob(self) -> int:
        return len(self.bob_angles)

    def exact_joint_table(self, x_index: int, y_index: int) -> JointTable:
        self._check_cell(x_index, y_index)
        return joint_outcome_distribution(
            self.rho,
            polarization_observable(self.alice_angles[x_index]),
            polarization_observable(self.bob_angles[y_index]),
        )

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "state": operator_to_json(self.rho.matrix),
            "alice_angles": list(self.alice_angles),
            "bob_angles": list(self.bob_angles),
        }


@dataclass(frozen=True)
class PrBoxModel(OutcomeModel):
    """Extremal no-signalling box: outcomes agree except on one cell.

    Marginals are uniform on both wings for every settings pair, yet the
    correlations are +/-1 arranged to hit S = 4 on the combination whose
    negative cell matches ``negative_cell``. Mechanistically b is a
    function of (x, y, a), so parameter independence is the assumption
    being dropped.
    """

    negative_cell: tuple[int, int] = (0, 1)

    kind = "pr_box"
    violates_parameter_independence = True

    def __post_init__(self) -> None:
        cell = (int(self.negative_cell[0]), int(self.negative_cell[1]))
        if cell not in CELLS:
            raise ValueError(f"negative_cell must be one of {CELLS}, got {cell}")
        object.__setattr__(self, "negative_cell", cell)

    @property
    def n_alice(self) -> int:
        return 2

    @property
    def n_bob(self) -> int:
        return 2

    def exact_joint_table(self, x_index: int, y_index: int) -> JointTable:
        self._check_cell(x_index, y_index)
        if (x_index, y_index) == self.negative_cell:
            return {(1, 1): 0.0, (1, -1): 0.5, (-1, 1): 0.5, (-1, -1): 0.0}
        return {(1, 1): 0.5, (1, -1): 0.0, (-1, 1): 0.0, (-1, -1): 0.5}

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "negative_cell": list(self.negative_cell)}


@dataclass(frozen=True)
class SuperdeterministicModel(OutcomeModel):
    """Hidden-variable model whose lambda distribution depends on (x, y).

    ``conditional`` maps each settings cell to a weighted list of
    deterministic strategies. Outcomes given lambda are purely local
    (a from x alone, b from y alone), so parameter independence holds at
    the mechanism level; what is given up is the independence of the
    hidden variable from the settings.
    """

    conditional: Mapping[tuple[int, int], tuple[tuple[DeterministicStrategy, float], ...]]

    kind = "superdeterministic"

    def __post_init__(self) -> None:
        conditional = {}
        for cell in CELLS:
            if cell not in self.conditional:
                raise ValueError(f"conditional lambda distribution missing for cell {cell}")
            entries = tuple((s, float(w)) for s, w in self.conditional[cell])
            weights = np.array([w for _, w in entries])
            if float(weights.min()) < 0.0 or abs(float(weights.sum()) - 1.0) > TABLE_TOL:
                raise ValueError(f"conditional weights for cell {cell} are not a distribution")
            conditional[cell] = entries
        object.__setattr__(self, "conditional", conditional)

    @property
    def n_alice(self) -> int:
        return 2

    @property
    def n_bob(self) -> int:
        return 2

    @property
    def violates_measurement_independence(self) -> bool:  # type: ignore[override]
        """True when the lambda marginal actually varies with the settings."""
        reference = self.conditional[CELLS[0]]
        return any(self.conditional[cell] != reference for cell in CELLS[1:])

    def exact_joint_table(self, x_index: int, y_index: int) -> JointTable:
        self._check_cell(x_index, y_index)
        table = dict.fromkeys(OUTCOME_PAIRS, 0.0)
        for strategy, weight in self.conditional[(x_index, y_index)]:
            table[strategy.outcomes(x_index, y_index)] += weight
        return table

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "conditional": {
                f"{ix},{iy}": [[s.to_json_dict(), w] for s, w in entries]
                for (ix, iy), entries in sorted(self.conditional.items())
            },
        }


def superdeterministic_s4_example(
    combination: ChshCombination = DEFAULT_COMBINATION,
) -> SuperdeterministicModel:
    """Settings-dependent hidden variable reaching S = 4.

    Per settings cell the conditional is an even mixture of two
    strategies: one answers (+1, sign), the other (-1, -sign), where
    sign is the combination's sign for that cell. Each cell's
    correlation is exactly the sign, so S = 4, while both wings'
    marginals stay uniform and the observable tables are identical to
    the extremal box's tables. A point mass per cell cannot do this: a
    deterministic no-signalling table set is a product strategy and
    therefore bounded by |S| <= 2.
    """
    conditional = {}
    for ix, iy in CELLS:
        sign = combination.sign(ix, iy)
        b_plus = tuple(sign if j == iy else 1 for j in range(2))
        b_minus = tuple(-sign if j == iy else -1 for j in range(2))
        conditional[(ix, iy)] = (
            (DeterministicStrategy((1, 1), b_plus), 0.5),
            (DeterministicStrategy((-1, -1), b_minus), 0.5),
        )
    return SuperdeterministicModel(conditional)


@dataclass(frozen=True)
class SignallingModel(OutcomeModel):
    """Negative control: Bob's outcome is a function of Alice's setting."""

    b_of_x: tuple[int, int] = (1, -1)

    kind = "signalling"
    violates_parameter_independence = True

    def __post_init__(self) -> None:
        values = tuple(int(v) for v in self.b_of_x)
        if len(values) != 2 or any(v not in (-1, 1) for v in values):
            raise ValueError("b_of_x must be two values in {-1, +1}")
        object.__setattr__(self, "b_of_x", values)

    @property
    def n_alice(self) -> int:
        return 2

    @property
    def n_bob(self) -> int:
        return 2

    def exact_joint_table(self, x_index: int, y_index: int) -> JointTable:
        self._check_cell(x_index, y_index)
        b = self.b_of_x[x_index]
        return {pair: 0.5 if pair[1] == b else 0.0 for pair in OUTCOME_PAIRS}

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "b_of_x": list(self.b_of_x)}


def sample_trial(
    model: OutcomeModel,
    x_index: int,
    y_index: int,
    rng: np.random.Generator,
) -> tuple[int, int]:
    """One (a, b) draw from the model at the given settings.

    Superdeterministic models first draw the hidden strategy from the
    settings-conditioned distribution, then evaluate it locally; all
    other kinds draw directly from the exact conditional table.
    """
    if isinstance(model, SuperdeterministicModel):
        entries = model.conditional[(x_index, y_index)]
        u = rng.random()
        cumulative = 0.0
        for strategy, weight in entries:
            cumulative += weight
            if u < cumulative:
                return strategy.outcomes(x_index, y_index)
        return entries[-1][0].outcomes(x_index, y_index)
    table = model.exact_joint_table(x_index, y_index)
    u = rng.random()
    cumulative = 0.0
    for pair in OUTCOME_PAIRS:
        cumulative += table[pair]
        if u < cumulative:
            return pair
    return OUTCOME_PAIRS[-1]


def model_correlations(model: OutcomeModel) -> dict[tuple[int, int], float]:
    """Exact E(x, y) for every settings cell of a 2x2 model."""
    if model.n_alice != 2 or model.n_bob != 2:
        raise ValueError("correlation table needs the 2x2 layout")
    return {cell: float(table_correlation(model.exact_joint_table(*cell))) for cell in CELLS}


def model_chsh(model: OutcomeModel, combination: ChshCombination = DEFAULT_COMBINATION) -> float:
    """Exact S of a 2x2 model at the given sign pattern."""
    return float(chsh_value(model_correlations(model), combination))


def no_signalling_deltas(tables: Mapping[tuple[int, int], JointTable]) -> float:
    """Worst marginal discrepancy across remote settings, over both wings."""
    worst = 0.0
    for ix in (0, 1):
        marginals = [tables[(ix, iy)][(1, 1)] + tables[(ix, iy)][(1, -1)] for iy in (0, 1)]
        worst = max(worst, abs(marginals[0] - marginals[1]))
    for iy in (0, 1):
        marginals = [tables[(ix, iy)][(1, 1)] + tables[(ix, iy)][(-1, 1)] for ix in (0, 1)]
        worst = max(worst, abs(marginals[0] - marginals[1]))
    return worst


@dataclass(frozen=True)
class PolytopeResult:
    """Verdict of the local-model membership test for four tables."""

    is_local: bool
    max_abs_s: float
    witness_combination: ChshCombination | None
    witness_s: float | None

    def describe(self) -> str:
        if self.is_local:
            return f"local: a strategy mixture reproduces all tables (max |S| = {self.max_abs_s:.6g})"
        return (f"nonlocal: violates CHSH, S = {self.witness_s:.4f} "
                f"at pattern {self.witness_combination.to_string()}")


def local_polytope_membership(
    tables: Mapping[tuple[int, int], JointTable],
    tol: float = 1e-9,
) -> PolytopeResult:
    """Decide whether one strategy mixture reproduces all four tables.

    For no-signalling tables in the two-setting/two-outcome scenario the
    eight CHSH inequalities (with positivity and normalization) cut out
    exactly the mixtures of the 16 deterministic strategies, so checking
    them is a complete decision procedure and no solver is needed.
    Signalling tables are rejected up front: asking for a shared local
    variable behind them is ill-posed.
    """
    for cell in CELLS:
        if cell not in tables:
            raise ValueError(f"tables missing settings cell {cell}")
        validate_table(tables[cell], tol=max(tol, 1e-9))
    delta = no_signalling_deltas(tables)
    if delta > tol:
        raise SignallingTablesError(
            f"tables are signalling (worst marginal shift {delta:.3g}); "
            "local-model membership is ill-posed")
    correlations = {cell: table_correlation(tables[cell]) for cell in CELLS}
    worst_combination = None
    worst_s = 0.0
    for combination in all_combinations():
        s = float(chsh_value(correlations, combination))
        if abs(s) > abs(worst_s):
            worst_s = s
            worst_combination = combination
    if abs(worst_s) <= 2.0 + tol:
        return PolytopeResult(True, abs(worst_s), None, None)
    return PolytopeResult(False, abs(worst_s), worst_combination, worst_s)


def _project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - 1.0
    indices = np.arange(1, len(v) + 1)
    feasible = u - cumulative / indices > 0
    rho = int(indices[feasible][-1])
    theta = cumulative[rho - 1] / rho
    return np.clip(v - theta, 0.0, None)


def nearest_lhv_mixture(
    tables: Mapping[tuple[int, int], JointTable],
    n_iterations: int = 4000,
) -> tuple[np.ndarray, float]:
    """Approximate least-squares projection onto the strategy mixtures.

    Accelerated projected gradient on the simplex of weights over the 16
    deterministic strategies. Returns (weights, residual) where residual
    is the Euclidean distance between the stacked target tables and the
    best mixture found. This is a coarse independent cross-check of
    local_polytope_membership, not a boundary-precision decision: for
    clearly local tables the residual is tiny, for boxes beyond the
    bound it stays bounded away from zero.
    """
    strategies = enumerate_deterministic_strategies()
    columns = []
    for strategy in strategies:
        stacked = np.concatenate([table_vector(strategy.exact_joint_table(*cell))
                                  for cell in CELLS])
        columns.append(stacked)
    design = np.column_stack(columns)
    target = np.concatenate([table_vector(tables[cell]) for cell in CELLS])
    gram = design.T @ design
    step = 1.0 / float(np.linalg.eigvalsh(gram).max())
    weights = np.full(len(strategies), 1.0 / len(strategies))
    momentum = weights.copy()
    t_prev = 1.0
    for _ in range(n_iterations):
        gradient = design.T @ (design @ momentum - target)
        new_weights = _project_to_simplex(momentum - step * gradient)
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t_prev * t_prev)) / 2.0
        momentum = new_weights + ((t_prev - 1.0) / t_next) * (new_weights - weights)
        weights, t_prev = new_weights, t_next
    residual = float(np.linalg.norm(design @ weights - target))
    return weights, residual


_MODEL_REGISTRY = {
    "deterministic": lambda d: DeterministicStrategy(tuple(d["a_of_x"]), tuple(d["b_of_y"])),
    "mixed_lhv": lambda d: MixedLhvModel(
        tuple(DeterministicStrategy(tuple(s["a_of_x"]), tuple(s["b_of_y"]))
              for s in d["strategies"]),
        tuple(d["weights"])),
    "quantum": lambda d: QuantumModel(
        DensityOperator(operator_from_json(d["state"])),
        tuple(d["alice_angles"]), tuple(d["bob_angles"])),
    "pr_box": lambda d: PrBoxModel(tuple(d.get("negative_cell", (0, 1)))),
    "superdeterministic": lambda d: SuperdeterministicModel({
        tuple(int(t) for t in key.split(",")): tuple(
            (DeterministicStrategy(tuple(s["a_of_x"]), tuple(s["b_of_y"])), float(w))
            for s, w in entries)
        for key, entries in d["conditional"].items()
    }),
    "signalling": lambda d: SignallingModel(tuple(d.get("b_of_x", (1, -1)))),
}


def model_from_json(data: dict | str) -> OutcomeModel:
    """Rebuild a model from its JSON description (kind tag + parameters)."""
    if isinstance(data, str):
        data = json.loads(data)
    kind = data.get("kind")
    if kind not in _MODEL_REGISTRY:
        raise ValueError(f"unknown model kind {kind!r}; known: {sorted(_MODEL_REGISTRY)}")
    return _MODEL_REGISTRY[kind](data)


def model_to_json(model: OutcomeModel) -> str:
    return json.dumps(model.to_json_dict(), sort_keys=True)


def model_description_hash(model: OutcomeModel) -> str:
    """Stable hash of the model's JSON description, for log headers."""
    return hashlib.sha256(model_to_json(model).encode()).hexdigest()


def tables_from_json(data: dict | str) -> dict[tuple[int, int], JointTable]:
    """Parse {"x,y": {"++": p, "+-": p, "-+": p, "--": p}} table sets."""
    if isinstance(data, str):
        data = json.loads(data)
    pair_keys = {"++": (1, 1), "+-": (1, -1), "-+": (-1, 1), "--": (-1, -1)}
    tables = {}
    for key, cell_table in data.items():
        ix, iy = (int(t) for t in key.split(","))
        tables[(ix, iy)] = {pair_keys[k]: float(v) for k, v in cell_table.items()}
    return tables


def tables_to_json(tables: Mapping[tuple[int, int], JointTable]) -> str:
    pair_keys = {(1, 1): "++", (1, -1): "+-", (-1, 1): "-+", (-1, -1): "--"}
    return json.dumps({
        f"{ix},{iy}": {pair_keys[pair]: float(v) for pair, v in table.items()}
        for (ix, iy), table in sorted(tables.items())
    }, sort_keys=True)


def model_tables(model: OutcomeModel) -> dict[tuple[int, int], JointTable]:
    """All four conditional tables of a 2x2 model."""
    return {cell: model.exact_joint_table(*cell) for cell in CELLS}
