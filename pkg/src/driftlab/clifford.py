"""Single-qubit Clifford quotient group built by closure over +-pi/2 generators.

A word is a tuple of generator ids in time order, so the unitary of
``(g1, g2, g3)`` is ``U_g3 @ U_g2 @ U_g1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dynamics import IDENTITY, rotation

GENERATOR_TARGETS: dict[str, np.ndarray] = {
    "Xp": rotation("x", np.pi / 2),
    "Xm": rotation("x", -np.pi / 2),
    "Zp": rotation("z", np.pi / 2),
    "Zm": rotation("z", -np.pi / 2),
}
GENERATOR_IDS = tuple(sorted(GENERATOR_TARGETS))
GROUP_ORDER = 24
EQUIV_TOL = 1e-9


class GroupConstructionError(RuntimeError):
    pass


def phase_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    return float(abs(np.trace(u.conj().T @ v)) ** 2 / 4.0)


def equivalent(u: np.ndarray, v: np.ndarray, tol: float = EQUIV_TOL) -> bool:
    """U ~ V up to global phase."""
    return phase_fidelity(u, v) > 1.0 - tol


def normalize_phase(u: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the first nonzero entry is real positive."""
    flat = u.ravel()
    k = int(np.flatnonzero(np.abs(flat) > 1e-12)[0])
    return u * (abs(flat[k]) / flat[k])


def word_unitary(word: Sequence[str], generators: Mapping[str, np.ndarray] = GENERATOR_TARGETS):
    u = IDENTITY.copy()
    for g in word:
        u = generators[g] @ u
    return u


@dataclass(frozen=True)
class CliffordElement:
    index: int
    unitary: np.ndarray
    word: tuple[str, ...]


class CliffordGroup:
    """24 elements with product and inverse tables.

    ``product[a, b]`` is the class of ``U_a @ U_b`` (apply b first).
    """

    def __init__(self, elements: list[CliffordElement], product: np.ndarray, inverse: np.ndarray):
        self.elements = elements
        self.product = product
        self.inverse = inverse

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i) -> CliffordElement:
        return self.elements[i]

    def index_of(self, u: np.ndarray) -> int:
        for el in self.elements:
            if equivalent(el.unitary, u):
                return el.index
        raise KeyError("unitary is not in the Clifford group")

    def compose(self, indices: Sequence[int]) -> int:
        """Class of the circuit applying ``indices`` in time order."""
        acc = 0
        for k in indices:
            acc = int(self.product[k, acc])
        return acc


def build_clifford_group(generators: Mapping[str, np.ndarray] = GENERATOR_TARGETS) -> CliffordGroup:
    """Breadth-first closure with the lexicographically smallest shortest word per class."""
    ids = sorted(generators)
    reps: list[np.ndarray] = [normalize_phase(IDENTITY.copy())]
    words: list[tuple[str, ...]] = [()]
    frontier = [0]
    while frontier:
        new_reps: list[np.ndarray] = []
        new_words: list[tuple[str, ...]] = []
        for cls in frontier:
            for g in ids:
                w = words[cls] + (g,)
                u = generators[g] @ reps[cls]
                if any(equivalent(r, u) for r in reps):
                    continue
                for j, r in enumerate(new_reps):
                    if equivalent(r, u):
                        if w < new_words[j]:
                            new_words[j] = w
                        break
                else:
                    new_reps.append(normalize_phase(u))
                    new_words.append(w)
                if len(reps) + len(new_reps) > GROUP_ORDER:
                    raise GroupConstructionError("closure exceeded 24 classes")
        order = sorted(range(len(new_words)), key=lambda j: new_words[j])
        frontier = []
        for j in order:
            frontier.append(len(reps))
            reps.append(new_reps[j])
            words.append(new_words[j])
    if len(reps) != GROUP_ORDER:
        raise GroupConstructionError(f"closure produced {len(reps)} classes, expected 24")

    # representatives rebuilt from the words so every element is exactly its word product
    elements = [CliffordElement(i, normalize_phase(word_unitary(w, generators)), w)
                for i, w in enumerate(words)]
    n = len(elements)
    product = np.empty((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(n):
            u = elements[a].unitary @ elements[b].unitary
            matches = [c for c in range(n) if equivalent(elements[c].unitary, u)]
            if len(matches) != 1:
                raise GroupConstructionError(f"product {a}*{b} matched {len(matches)} classes")
            product[a, b] = matches[0]
    inverse = np.empty(n, dtype=np.int64)
    for a in range(n):
        inv = [b for b in range(n) if product[a, b] == 0]
        if len(inv) != 1:
            raise GroupConstructionError(f"element {a} has {len(inv)} inverses")
        inverse[a] = inv[0]
    return CliffordGroup(elements, product, inverse)
