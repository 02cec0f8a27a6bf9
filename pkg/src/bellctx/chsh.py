"""CHSH sign patterns and the S value they induce on a correlation table.

A CHSH combination assigns a sign to each of the four settings cells
(x_index, y_index) with the product of the four signs equal to -1; there
are exactly eight such patterns. The default is the widely used
S = E(0,0) + E(1,0) + E(1,1) - E(0,1).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

CELLS: tuple[tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class ChshCombination:
    """Signs per settings cell, row-major ((0,0), (0,1), (1,0), (1,1))."""

    signs: tuple[int, int, int, int]

    def __post_init__(self) -> None:
        if len(self.signs) != 4 or any(s not in (-1, 1) for s in self.signs):
            raise ValueError(f"signs must be four values in {{-1, +1}}, got {self.signs}")
        if self.signs[0] * self.signs[1] * self.signs[2] * self.signs[3] != -1:
            raise ValueError("CHSH signs must have product -1")

    def sign(self, x_index: int, y_index: int) -> int:
        return self.signs[CELLS.index((x_index, y_index))]

    @property
    def negative_cells(self) -> tuple[tuple[int, int], ...]:
        return tuple(c for c, s in zip(CELLS, self.signs) if s == -1)

    @classmethod
    def from_string(cls, text: str) -> "ChshCombination":
        """Parse e.g. '+-++' (row-major cell order)."""
        cleaned = text.strip().replace(" ", "").replace(",", "")
        if len(cleaned) != 4 or any(ch not in "+-" for ch in cleaned):
            raise ValueError(f"combination string must be four of '+'/'-', got {text!r}")
        return cls(tuple(1 if ch == "+" else -1 for ch in cleaned))  # type: ignore[arg-type]

    def to_string(self) -> str:
        return "".join("+" if s == 1 else "-" for s in self.signs)


# S = E(0,0) - E(0,1) + E(1,0) + E(1,1): minus on the (first Alice,
# second Bob) cell.
DEFAULT_COMBINATION = ChshCombination((1, -1, 1, 1))


def all_combinations() -> tuple[ChshCombination, ...]:
    """All eight valid sign patterns, in lexicographic sign order."""
    out = []
    for signs in itertools.product((1, -1), repeat=4):
        if signs[0] * signs[1] * signs[2] * signs[3] == -1:
            out.append(ChshCombination(signs))
    return tuple(out)


def chsh_value(correlations, combination: ChshCombination = DEFAULT_COMBINATION):
    """Signed sum of the four cell correlations.

    ``correlations`` maps (x_index, y_index) to a number; integer tables
    stay integer so exhaustive bounds can be exact.
    """
    missing = [cell for cell in CELLS if cell not in correlations]
    if missing:
        raise ValueError(f"correlation table is missing cells {missing}")
    return sum(combination.sign(x, y) * correlations[(x, y)] for x, y in CELLS)
