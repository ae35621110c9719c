"""Persistence-of-excitation checks and short exciting hybrid inputs."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .graph import build_graph, is_connected, spanning_tree
from .model import DiscreteState, HybridInput, SwitchedModel, SwitchingSequence
from .signals import generate_input
from .transforms import assemble_transitions, solve_all

PE = "PE"
NOT_PE = "notPE"
PE_VIA_GRAPH = "PEviaGraph"


@dataclass
class PEReport:
    per_pair: dict[tuple[int, int], dict]
    chain_complete: bool
    graph_connected: bool
    verdict: str
    tree: tuple[tuple[int, int], ...] = ()

    @property
    def is_pe(self) -> bool:
        return self.verdict != NOT_PE

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "chain_complete": self.chain_complete,
            "graph_connected": self.graph_connected,
            "tree": [list(e) for e in self.tree],
            "pairs": [
                {"pair": list(p), **info} for p, info in sorted(self.per_pair.items())
            ],
        }


def check_pe(
    reps: dict[int, DiscreteState],
    omega: HybridInput,
    y,
    rank_tol: float | None = None,
) -> PEReport:
    """Decide whether the data pin down every mode's basis up to one common transform.

    ``PE`` when every consecutive pair ``(t, t+1)`` is solvable; ``PEviaGraph``
    when that chain is incomplete but the solvable pairs still connect all
    modes; ``notPE`` otherwise.

    Raises:
        DwellTimeError: if the switching has a segment shorter than ``n``.
    """
    sigma = omega.phi.sigma
    if sigma == 1:
        return PEReport({}, True, True, PE)
    td = assemble_transitions(reps, omega.phi, omega.u, y, rank_tol)
    per_pair = {
        pair: {
            "cardinality": pd.cardinality,
            "rank": pd.rank,
            "solvable": pd.rank == td.n,
            "psi_cond": pd.psi_cond,
        }
        for pair, pd in td.pairs.items()
    }
    chain = all(td.solvable((t, t + 1)) for t in range(1, sigma))
    g = build_graph(solve_all(td, rank_tol), sigma)
    connected = is_connected(g)
    tree = spanning_tree(g) if connected else ()
    if chain:
        verdict = PE
    elif connected:
        verdict = PE_VIA_GRAPH
    else:
        verdict = NOT_PE
    return PEReport(per_pair, chain, connected, verdict, tree)


def sweep_switching(sigma: int, n: int, dwell: int) -> SwitchingSequence:
    """``n`` back-to-back sweeps ``1 -> 2 -> ... -> sigma``, each segment ``dwell`` long."""
    phi = np.tile(np.repeat(np.arange(1, sigma + 1), dwell), n)
    return SwitchingSequence(phi, sigma=sigma)


def design_pe_input(
    model: SwitchedModel,
    dwell: int | None = None,
    input_kind: str = "white",
    seed=None,
    input_params: dict | None = None,
) -> HybridInput:
    """Short exciting hybrid input of length ``n * sigma * dwell``.

    Every consecutive transition ``t -> t+1`` occurs exactly ``n`` times; the
    seams between sweeps add ``n - 1`` extra ``sigma -> 1`` transitions.
    ``dwell`` defaults to ``3 n``.
    """
    n = model.n
    dwell = 3 * n if dwell is None else int(dwell)
    if dwell < n:
        raise PreconditionError(f"dwell {dwell} must be at least n = {n}")
    phi = sweep_switching(model.sigma, n, dwell)
    u = generate_input(input_kind, model.m, phi.N, input_params, seed)
    return HybridInput(phi, u)


def count_transitions(phi: SwitchingSequence) -> Counter:
    """How many times each ordered switch ``(nu, mu)`` occurs."""
    return Counter((nu, mu) for _, nu, mu in phi.transitions())
