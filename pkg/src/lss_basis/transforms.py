"""Recovery of basis-transform products from input-output data.

For every switch from mode ``nu`` into mode ``mu`` the data give one column
pair ``(kappa, Z)`` with ``Z = O_mu @ Upsilon(nu, mu) @ kappa``, where
``Upsilon(nu, mu) = T_mu^-1 T_nu`` relates the two representatives' bases.
Stacking all switches of the same ordered pair gives a linear system that
fixes ``Upsilon(nu, mu)`` once the ``kappa`` columns span the state space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    DwellTimeError,
    ObservabilityError,
    PreconditionError,
    SingularTransformError,
    UnsolvablePairError,
)
from .linalg import pinv, svd_rank
from .model import (
    DiscreteState,
    HybridInput,
    SimilarityTransform,
    SwitchedModel,
    SwitchingSequence,
    apply_similarity,
)
from .signals import simulate

Pair = tuple[int, int]


@dataclass(frozen=True, eq=False)
class ObservabilityStack:
    """Extended observability matrix and input-output Toeplitz matrix over ``q + 1`` samples."""

    O: np.ndarray
    Gamma: np.ndarray
    q: int
    rank: int

    @property
    def n(self) -> int:
        return self.O.shape[1]


def build_observability(
    state: DiscreteState, q: int, rank_tol: float | None = None, check: bool = True
) -> ObservabilityStack:
    """Stack ``[C; CA; ...; CA^q]`` and the lower block-triangular Toeplitz of
    ``D, CB, CAB, ...``.

    Raises:
        PreconditionError: if ``q < n - 1``.
        ObservabilityError: if ``check`` and the stack has rank below ``n``.
    """
    n, m, p = state.n, state.m, state.p
    if q < n - 1:
        raise PreconditionError(f"horizon q = {q} is below n - 1 = {n - 1}")
    rows = [state.C]
    for _ in range(q):
        rows.append(rows[-1] @ state.A)
    O = np.vstack(rows)
    markov = state.markov(q + 1)
    Gamma = np.zeros(((q + 1) * p, (q + 1) * m))
    for r in range(q + 1):
        for s in range(r + 1):
            Gamma[r * p:(r + 1) * p, s * m:(s + 1) * m] = markov[r - s]
    rank = svd_rank(O, rank_tol)
    if check and rank < n:
        raise ObservabilityError(
            f"observability stack has rank {rank} < n = {n}; the estimate is unobservable"
        )
    return ObservabilityStack(O, Gamma, q, rank)


def estimate_state(stack: ObservabilityStack, Y, U, tol: float | None = None) -> np.ndarray:
    """Least-squares initial state ``O^+ (Y - Gamma U)`` of a data window.

    ``Y`` and ``U`` are either ``(q + 1, p)``/``(q + 1, m)`` arrays or their
    row-major flattenings.
    """
    Y = np.asarray(Y, dtype=float).reshape(-1)
    U = np.asarray(U, dtype=float).reshape(-1)
    if Y.size != stack.O.shape[0] or U.size != stack.Gamma.shape[1]:
        raise DimensionError(
            f"window sizes ({Y.size}, {U.size}) do not match the stack "
            f"({stack.O.shape[0]}, {stack.Gamma.shape[1]})"
        )
    if stack.rank < stack.n:
        raise ObservabilityError("cannot estimate a state from a rank-deficient stack")
    return pinv(stack.O, tol) @ (Y - stack.Gamma @ U)


def _track(a, N: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def compute_kappa(
    estimate: DiscreteState,
    xhat,
    u,
    t: int,
    k_i: int,
    k_prev: int | None = None,
) -> np.ndarray:
    """State reached at the switch ``k_i`` when propagated from ``xhat`` at time ``t``.

    Equals ``A^(k_i - t) xhat + sum_{l=t}^{k_i-1} A^(k_i-l-1) B u(l)``; ``u``
    is the full 1-based input track.
    """
    n = estimate.n
    if n < 2:
        raise PreconditionError("state dimension must be at least 2")
    if t > k_i - n:
        raise PreconditionError(f"start time t = {t} exceeds k_i - n = {k_i - n}")
    if t < 1 or (k_prev is not None and t < k_prev):
        raise PreconditionError(f"start time t = {t} precedes the segment start")
    u = _track(u)
    z = np.asarray(xhat, dtype=float).reshape(n)
    for l in range(t, k_i):
        z = estimate.A @ z + estimate.B @ u[l - 1]
    return z


def zeta_stack(estimate_mu: DiscreteState, y, u, k_i: int, q: int) -> np.ndarray:
    """Output minus the in-segment input response, for ``k = k_i .. k_i + q``.

    Row ``j`` is ``zeta(k_i + j)``; shape ``(q + 1, p)``.
    """
    y, u = _track(y), _track(u)
    A, B, C, D = estimate_mu.A, estimate_mu.B, estimate_mu.C, estimate_mu.D
    w = np.zeros(estimate_mu.n)
    out = np.empty((q + 1, estimate_mu.p))
    for j in range(q + 1):
        k = k_i + j
        out[j] = y[k - 1] - D @ u[k - 1] - C @ w
        w = A @ w + B @ u[k - 1]
    return out


def compute_zeta(
    estimate_mu: DiscreteState,
    y,
    u,
    k: int,
    k_i: int,
    k_next: int | None = None,
) -> np.ndarray:
    """``y(k) - D u(k) - sum_{l=k_i}^{k-1} C A^(k-l-1) B u(l)`` for ``k`` in ``[k_i, k_next)``."""
    if k < k_i or (k_next is not None and k >= k_next):
        raise PreconditionError(f"time {k} lies outside the segment starting at {k_i}")
    return zeta_stack(estimate_mu, y, u, k_i, k - k_i)[-1]


@dataclass(frozen=True, eq=False)
class PairData:
    """All switches from ``nu`` into ``mu``, stacked column-wise in increasing ``i``."""

    pair: Pair
    indices: tuple[int, ...]
    Z: np.ndarray
    Psi: np.ndarray
    O: np.ndarray
    rank: int

    @property
    def cardinality(self) -> int:
        return len(self.indices)

    @property
    def psi_cond(self) -> float:
        s = np.linalg.svd(self.Psi, compute_uv=False)
        n = self.Psi.shape[0]
        if s.size < n or s[n - 1] == 0.0:
            return float("inf")
        return float(s[0] / s[n - 1])

    def summary(self) -> dict:
        return {
            "pair": list(self.pair),
            "indices": list(self.indices),
            "cardinality": self.cardinality,
            "rank": self.rank,
            "psi_cond": self.psi_cond,
        }


@dataclass(frozen=True, eq=False)
class TransitionData:
    n: int
    q: int
    pairs: dict[Pair, PairData]
    kappas: dict[int, np.ndarray] = field(default_factory=dict)

    def index_set(self, pair: Pair) -> tuple[int, ...]:
        pd = self.pairs.get(pair)
        return pd.indices if pd else ()

    def solvable(self, pair: Pair) -> bool:
        pd = self.pairs.get(pair)
        return pd is not None and pd.rank == self.n

    def solvable_pairs(self) -> list[Pair]:
        return [p for p in sorted(self.pairs) if self.solvable(p)]


def assemble_transitions(
    reps: dict[int, DiscreteState],
    phi: SwitchingSequence,
    u,
    y,
    rank_tol: float | None = None,
) -> TransitionData:
    """Build ``(kappa, Z)`` for every switch and group them by ordered mode pair.

    Uses the fixed policy ``t_{i-1} = k_{i-1}`` and horizon
    ``q = min_dwell - 1`` for both the state estimate before each switch and
    the ``zeta`` stack after it.

    Raises:
        DwellTimeError: if some segment is shorter than ``n``.
        ObservabilityError: if a representative is unobservable at horizon ``q``.
    """
    n = next(iter(reps.values())).n
    u, y = _track(u), _track(y)
    if u.shape[0] != phi.N or y.shape[0] != phi.N:
        raise DimensionError("signal lengths must match the switching sequence")
    if phi.min_dwell < n:
        short = int(np.argmin(phi.dwell_times))
        raise DwellTimeError(
            f"segment {short} (k = {int(phi.segment_starts[short])}) dwells "
            f"{phi.min_dwell} < n = {n} samples; learning data needs dwell >= n"
        )
    q = phi.min_dwell - 1
    modes = {int(v) for v in phi.segment_modes}
    missing = modes - set(reps)
    if missing:
        raise PreconditionError(f"no representative for modes {sorted(missing)}")
    stacks = {v: build_observability(reps[v], q, rank_tol) for v in sorted(modes)}

    starts = phi.segment_starts
    cols: dict[Pair, list[tuple[int, np.ndarray, np.ndarray]]] = {}
    kappas = {}
    for i, nu, mu in phi.transitions():
        k_prev, k_i = int(starts[i - 1]), int(starts[i])
        w = slice(k_prev - 1, k_prev + q)
        xhat = estimate_state(stacks[nu], y[w], u[w], rank_tol)
        kappa = compute_kappa(reps[nu], xhat, u, k_prev, k_i, k_prev)
        Z = zeta_stack(reps[mu], y, u, k_i, q).reshape(-1)
        kappas[i] = kappa
        cols.setdefault((nu, mu), []).append((i, Z, kappa))

    pairs = {}
    for pair, items in sorted(cols.items()):
        Zm = np.column_stack([z for _, z, _ in items])
        Psi = np.column_stack([k for _, _, k in items])
        pairs[pair] = PairData(
            pair,
            tuple(i for i, _, _ in items),
            Zm,
            Psi,
            stacks[pair[1]].O,
            svd_rank(Psi, rank_tol),
        )
    return TransitionData(n, q, pairs, kappas)


@dataclass(frozen=True, eq=False)
class UpsilonSolution:
    pair: Pair
    upsilon: np.ndarray
    residual: float
    z_norm: float
    rank: int
    cardinality: int
    psi_cond: float

    def summary(self) -> dict:
        return {
            "pair": list(self.pair),
            "residual": self.residual,
            "relative_residual": self.residual / self.z_norm if self.z_norm else 0.0,
            "rank": self.rank,
            "cardinality": self.cardinality,
            "psi_cond": self.psi_cond,
            "upsilon": self.upsilon.tolist(),
        }


def solve_upsilon(td: TransitionData, pair: Pair, tol: float | None = None) -> UpsilonSolution:
    """Least-squares ``Upsilon(nu, mu) = O^+ Z Psi^+`` for one ordered pair.

    Raises:
        UnsolvablePairError: if the pair never occurs or its ``Psi`` has rank < n.
    """
    nu, mu = pair
    if nu == mu:
        return UpsilonSolution(pair, np.eye(td.n), 0.0, 0.0, td.n, 0, 1.0)
    pd = td.pairs.get(pair)
    if pd is None:
        raise UnsolvablePairError(f"no switch from mode {nu} into mode {mu} in the data")
    if pd.rank < td.n:
        raise UnsolvablePairError(
            f"Psi{pair} has rank {pd.rank} < n = {td.n} ({pd.cardinality} switches)"
        )
    U = pinv(pd.O, tol) @ pd.Z @ pinv(pd.Psi, tol)
    residual = float(np.linalg.norm(pd.O @ U @ pd.Psi - pd.Z))
    return UpsilonSolution(
        pair, U, residual, float(np.linalg.norm(pd.Z)), pd.rank, pd.cardinality, pd.psi_cond
    )


def solve_all(td: TransitionData, tol: float | None = None) -> dict[Pair, UpsilonSolution]:
    """Solve every ordered pair whose ``Psi`` has full row rank."""
    return {pair: solve_upsilon(td, pair, tol) for pair in td.solvable_pairs()}


def correct_basis(
    reps: dict[int, DiscreteState],
    anchored: dict[int, np.ndarray],
    max_cond: float = 1e12,
) -> SwitchedModel:
    """Move every representative into mode 1's basis.

    Mode ``mu`` becomes ``(U A U^-1, U B, C U^-1, D)`` with ``U = Upsilon(mu, 1)``.
    """
    modes = sorted(reps)
    if modes != list(range(1, len(modes) + 1)):
        raise PreconditionError(f"representatives must cover modes 1..sigma, got {modes}")
    missing = [v for v in modes if v not in anchored]
    if missing:
        raise PreconditionError(f"no anchored transform for modes {missing}")
    out = []
    for v in modes:
        U = np.asarray(anchored[v], dtype=float)
        try:
            Uinv = SimilarityTransform(np.linalg.inv(U), max_cond)
        except np.linalg.LinAlgError as exc:
            raise SingularTransformError(f"Upsilon({v}, 1) is singular") from exc
        out.append(apply_similarity(reps[v], Uinv))
    return SwitchedModel(tuple(out))


def estimate_initial_state(
    model: SwitchedModel,
    omega: HybridInput,
    y,
    horizon: int | None = None,
    tol: float | None = None,
) -> np.ndarray:
    """Estimate ``x(1)`` of ``model`` from the start of a record.

    When the first segment holds at least ``n`` samples the estimate uses only
    that segment (an LTI window of mode ``phi(1)``). Otherwise the window
    spans switches and the stack is built from the switched state transition.
    """
    n = model.n
    y = _track(y)
    first = int(omega.phi.dwell_times[0])
    if first >= n:
        L = min(first, horizon or max(2 * n, first))
        stack = build_observability(model[omega.phi(1)], L - 1, tol)
        return estimate_state(stack, y[:L], omega.u[:L], tol)

    L = min(omega.N, horizon or 2 * n)
    while True:
        rows, P = [], np.eye(n)
        for k in range(L):
            s = model[int(omega.phi.phi[k])]
            rows.append(s.C @ P)
            P = s.A @ P
        O = np.vstack(rows)
        if svd_rank(O, tol) == n or L == omega.N:
            break
        L = min(omega.N, 2 * L)
    if svd_rank(O, tol) < n:
        raise ObservabilityError("initial state is not observable from the record")
    head = HybridInput(
        SwitchingSequence(omega.phi.phi[:L], sigma=omega.phi.sigma, surjective=False),
        omega.u[:L],
    )
    forced = simulate(model, head, np.zeros(n)).y
    return pinv(O, tol) @ (y[:L] - forced).reshape(-1)


@dataclass(frozen=True, eq=False)
class TransformSet:
    """Solved pair transforms, the mode-1 anchored transforms and the corrected model."""

    pairwise: dict[Pair, UpsilonSolution]
    anchored: dict[int, np.ndarray]
    corrected: SwitchedModel
    tree: tuple[Pair, ...] = ()

    def to_dict(self) -> dict:
        return {
            "anchored": {str(j): np.asarray(U).tolist() for j, U in sorted(self.anchored.items())},
            "tree": [list(e) for e in self.tree],
            "pairwise": [s.summary() for _, s in sorted(self.pairwise.items())],
        }
