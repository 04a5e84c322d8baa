"""Exact generators for Contact, IS and Spont on tiny boxes, used as oracles.

States of a box of n sites are encoded in base 3 with digit ``s + 1`` per site, site 0
least significant, so the chain has 3**n states (81 for n = 4).  Neighbour counts only see
sites inside the box; the Spont blocking rate is the full ``2 d lam (1 - p)`` at every site,
matching the ghost-arrow convention of the simulator.  As in the simulator, the contact
chain built from ``(lam, p)`` has birth rate ``lam * p``.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy import linalg

from .dynamics import ProcessKind
from .lattice import Box, BoundaryRule, Configuration, neighbor_table

MAX_SITES = 6


class SmallChain:
    def __init__(self, kind: ProcessKind | str, lam: float, p: float, box: Box,
                 rule: BoundaryRule | str = BoundaryRule.ABSORBING):
        self.kind = ProcessKind.parse(kind)
        if box.volume > MAX_SITES:
            raise ValueError(f"exact chains are limited to {MAX_SITES} sites")
        self.box = box
        self.lam = float(lam)
        self.p = float(p)
        self.nbr = neighbor_table(box, rule)
        n = box.volume
        self.states = np.array(list(itertools.product((-1, 0, 1), repeat=n)), dtype=np.int8)[:, ::-1]
        self.Q = self._generator()

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    def encode(self, states) -> int:
        s = np.asarray(states, dtype=np.int64).reshape(-1)
        return int(np.sum((s + 1) * 3 ** np.arange(s.size)))

    def _generator(self) -> np.ndarray:
        n = self.box.volume
        lam, p = self.lam, self.p
        fertile_rate = lam * p
        sterile_rate = 0.0 if self.kind is ProcessKind.Contact else lam * (1.0 - p)
        spont_rate = 2 * self.box.d * sterile_rate
        Q = np.zeros((self.n_states, self.n_states))
        for i, s in enumerate(self.states):
            for x in range(n):
                nb = self.nbr[x][self.nbr[x] >= 0]
                n1 = int(np.count_nonzero(s[nb] == 1))
                moves = []
                if s[x] == 1:
                    moves.append((0, 1.0))
                elif s[x] == -1:
                    moves.append((0, 1.0))
                else:
                    moves.append((1, fertile_rate * n1))
                    if self.kind is ProcessKind.IS:
                        moves.append((-1, sterile_rate * n1))
                    elif self.kind is ProcessKind.Spont:
                        moves.append((-1, spont_rate))
                for new, rate in moves:
                    if rate > 0:
                        j = i + (new - int(s[x])) * 3 ** x
                        Q[i, j] += rate
            Q[i, i] = -Q[i].sum()
        return Q

    def fertile_free(self) -> np.ndarray:
        return ~np.any(self.states == 1, axis=1)

    def transient(self, t: float, initial: Configuration) -> np.ndarray:
        """Distribution at time t started from ``initial``."""
        row = np.zeros(self.n_states)
        row[self.encode(initial.states)] = 1.0
        return row @ linalg.expm(self.Q * t)

    def survival_at(self, t: float, initial: Configuration) -> float:
        """P(some fertile site at time t)."""
        return float(self.transient(t, initial)[~self.fertile_free()].sum())

    def hit_before_extinction(self, initial: Configuration, target: set[tuple[int, ...]]) -> float:
        """P(a site of ``target`` holds a 1 before the fertile population dies out)."""
        idx = [self.box.index(x) for x in target]
        hit = np.any(self.states[:, idx] == 1, axis=1)
        dead = self.fertile_free()
        free = ~(hit | dead)
        A = self.Q[np.ix_(free, free)]
        b = self.Q[np.ix_(free, hit)].sum(axis=1)
        h = np.zeros(self.n_states)
        h[hit] = 1.0
        h[free] = linalg.solve(A, -b)
        return float(h[self.encode(initial.states)])

    def dual_sides(self, zeta: Configuration, t: float) -> tuple[float, float]:
        """(P_zeta(A_t nonempty), P_full(A(zeta) meets A_t)) for the contact chain."""
        if self.kind is not ProcessKind.Contact:
            raise ValueError("duality is checked for the contact process")
        lhs = self.survival_at(t, zeta)
        dist = self.transient(t, Configuration.full(self.box, 1))
        support = zeta.states == 1
        meets = np.any((self.states == 1) & support[None, :], axis=1)
        return lhs, float(dist[meets].sum())
