"""Switched state-space models, switching sequences and hybrid inputs.

Time is 1-based everywhere in this package: ``phi[k - 1]`` is the mode at
time ``k`` and a sequence of length ``N`` covers ``k = 1..N``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import DimensionError, PreconditionError, SingularTransformError
from .linalg import condition_number

DEFAULT_D1 = ((0.9, -0.7), (0.71, -0.5))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=2, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteState:
    """One LTI submodel ``(A, B, C, D)``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in "ABCD":
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"A must be square, got {self.A.shape}")
        m, p = self.B.shape[1], self.C.shape[0]
        if self.B.shape != (n, m):
            raise DimensionError(f"B must be {n}x{m}, got {self.B.shape}")
        if self.C.shape != (p, n):
            raise DimensionError(f"C must be {p}x{n}, got {self.C.shape}")
        if self.D.shape != (p, m):
            raise DimensionError(f"D must be {p}x{m}, got {self.D.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def markov(self, count: int) -> list[np.ndarray]:
        """Return ``[D, CB, CAB, ..., CA^(count-2)B]`` (``count`` terms)."""
        out = [np.array(self.D)]
        AkB = self.B
        for _ in range(count - 1):
            out.append(self.C @ AkB)
            AkB = self.A @ AkB
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "ABCD"}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteState":
        return cls(d["A"], d["B"], d["C"], d["D"])


@dataclass(frozen=True, eq=False)
class SwitchedModel:
    """An ordered set of ``sigma`` discrete states sharing ``(n, m, p)``.

    Modes are addressed 1-based: ``model[1]`` is the first state.
    """

    states: tuple[DiscreteState, ...]

    def __post_init__(self):
        states = tuple(self.states)
        object.__setattr__(self, "states", states)
        if not states:
            raise DimensionError("a switched model needs at least one state")
        dims = {(s.n, s.m, s.p) for s in states}
        if len(dims) != 1:
            raise DimensionError(f"states disagree on (n, m, p): {sorted(dims)}")
        if states[0].n < 2:
            raise PreconditionError("state dimension n must be at least 2")

    def __getitem__(self, mode: int) -> DiscreteState:
        if not 1 <= mode <= len(self.states):
            raise IndexError(f"mode {mode} outside 1..{len(self.states)}")
        return self.states[mode - 1]

    def __iter__(self) -> Iterator[DiscreteState]:
        return iter(self.states)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def n(self) -> int:
        return self.states[0].n

    @property
    def m(self) -> int:
        return self.states[0].m

    @property
    def p(self) -> int:
        return self.states[0].p

    @property
    def sigma(self) -> int:
        return len(self.states)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "states": [s.to_dict() for s in self.states],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchedModel":
        model = cls(tuple(DiscreteState.from_dict(s) for s in d["states"]))
        for key in ("n", "m", "p"):
            if key in d and d[key] != getattr(model, key):
                raise DimensionError(
                    f"declared {key}={d[key]} but matrices give {getattr(model, key)}"
                )
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SwitchedModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class SwitchingSequence:
    """Mode track ``phi(k)`` for ``k = 1..N`` and its segment structure.

    ``segment_starts`` holds ``k_0 = 1, k_1, ..., k_{i*}``; segment ``i`` is the
    half-open range ``[k_i, k_{i+1})`` with ``k_{i*+1} = N + 1``.
    """

    phi: np.ndarray
    sigma: int | None = None
    surjective: bool = True

    def __post_init__(self):
        phi = np.asarray(self.phi)
        if phi.ndim != 1 or phi.size == 0:
            raise DimensionError("phi must be a non-empty 1-D sequence")
        if not np.all(np.equal(np.mod(phi, 1), 0)):
            raise PreconditionError("modes must be integers")
        phi = phi.astype(int)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        sigma = int(phi.max()) if self.sigma is None else int(self.sigma)
        object.__setattr__(self, "sigma", sigma)
        if phi.min() < 1 or phi.max() > sigma:
            raise PreconditionError(f"modes must lie in 1..{sigma}")
        if self.surjective and len(np.unique(phi)) != sigma:
            missing = sorted(set(range(1, sigma + 1)) - set(phi.tolist()))
            raise PreconditionError(f"switching sequence never visits modes {missing}")
        change = np.flatnonzero(np.diff(phi)) + 2
        starts = np.concatenate(([1], change)).astype(int)
        starts.setflags(write=False)
        object.__setattr__(self, "_starts", starts)

    @property
    def N(self) -> int:
        return int(self.phi.size)

    def __len__(self) -> int:
        return self.N

    def __call__(self, k: int) -> int:
        if not 1 <= k <= self.N:
            raise PreconditionError(f"time {k} outside 1..{self.N}")
        return int(self.phi[k - 1])

    @property
    def segment_starts(self) -> np.ndarray:
        return self._starts

    @property
    def switch_times(self) -> np.ndarray:
        """The switch set ``k_1 < ... < k_{i*}`` (excludes ``k_0 = 1``)."""
        return self._starts[1:]

    @property
    def num_segments(self) -> int:
        return int(self._starts.size)

    @property
    def segment_bounds(self) -> list[tuple[int, int]]:
        ends = np.concatenate((self._starts[1:], [self.N + 1]))
        return [(int(a), int(b)) for a, b in zip(self._starts, ends)]

    @property
    def segment_modes(self) -> np.ndarray:
        return self.phi[self._starts - 1]

    @property
    def dwell_times(self) -> np.ndarray:
        return np.diff(np.concatenate((self._starts, [self.N + 1])))

    @property
    def min_dwell(self) -> int:
        return int(self.dwell_times.min())

    def segment_of(self, k: int) -> int:
        """Index ``i`` of the segment containing time ``k``."""
        self(k)
        return int(np.searchsorted(self._starts, k, side="right") - 1)

    def transitions(self) -> list[tuple[int, int, int]]:
        """``(i, nu, mu)`` for every switch ``i`` from mode ``nu`` into ``mu``."""
        modes = self.segment_modes
        return [(i, int(modes[i - 1]), int(modes[i])) for i in range(1, modes.size)]


@dataclass(frozen=True, eq=False)
class HybridInput:
    """Paired mode and continuous-input tracks; ``u`` has shape ``(N, m)``."""

    phi: SwitchingSequence
    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if u.ndim != 2 or u.shape[0] != self.phi.N:
            raise DimensionError(
                f"input track has shape {u.shape}, expected ({self.phi.N}, m)"
            )
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def N(self) -> int:
        return self.phi.N

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def entries(self) -> list[tuple[int, np.ndarray]]:
        return [(int(mode), self.u[i]) for i, mode in enumerate(self.phi.phi)]


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """An invertible change of state basis with bounded condition number."""

    T: np.ndarray
    max_cond: float = 1e6

    def __post_init__(self):
        T = _frozen(self.T)
        object.__setattr__(self, "T", T)
        if T.shape[0] != T.shape[1]:
            raise DimensionError(f"transform must be square, got {T.shape}")
        cond = condition_number(T)
        if not np.isfinite(cond) or cond > self.max_cond:
            raise SingularTransformError(
                f"transform condition number {cond:.3g} exceeds {self.max_cond:.3g}"
            )
        object.__setattr__(self, "T_inv", _frozen(np.linalg.inv(T)))

    @property
    def n(self) -> int:
        return self.T.shape[0]

    def inverse(self) -> "SimilarityTransform":
        return SimilarityTransform(self.T_inv, self.max_cond)


def feature_M(X) -> float:
    """Sum of the moduli of the eigenvalues of a square matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"feature_M needs a square matrix, got {X.shape}")
    return float(np.sum(np.abs(np.linalg.eigvals(X))))


def apply_similarity(state: DiscreteState, T) -> DiscreteState:
    """Return ``(T^-1 A T, T^-1 B, C T, D)``."""
    if not isinstance(T, SimilarityTransform):
        T = SimilarityTransform(T)
    if T.n != state.n:
        raise DimensionError(f"transform is {T.n}x{T.n} but state has n={state.n}")
    Ti = T.T_inv
    return DiscreteState(Ti @ state.A @ T.T, Ti @ state.B, state.C @ T.T, state.D)


def controllability_matrix(A, B) -> np.ndarray:
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(A, C, horizon: int | None = None) -> np.ndarray:
    """Stack ``[C; CA; ...; CA^(horizon-1)]``; ``horizon`` defaults to ``n``."""
    horizon = A.shape[0] if horizon is None else horizon
    blocks = [C]
    for _ in range(horizon - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def _rank_ratio(X) -> float:
    s = np.linalg.svd(X, compute_uv=False)
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


@dataclass
class CheckResult:
    passed: bool
    measured: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "measured": self.measured}


@dataclass
class ValidationReport:
    checks: dict[str, CheckResult]
    tolerances: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[str]:
        return [name for name, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "tolerances": self.tolerances,
        }


def validate_model(
    model: SwitchedModel,
    tol: float = 1e-6,
    stability_margin: float = 1e-9,
    rank_tol: float = 1e-8,
    invertibility_tol: float = 1e-12,
) -> ValidationReport:
    """Check the standing model assumptions and report the measured quantities.

    Never raises on a failed check; inspect ``report.passed`` instead.

    Args:
        model: The switched model to check.
        tol: Relative gap below which two clustering features count as equal:
            ``|M_i - M_j| < tol * max(1, M_i)``.
        stability_margin: Spectral radius must not exceed ``1 - stability_margin``.
        rank_tol: Kalman matrices are full rank when ``s_min > rank_tol * s_max``.
        invertibility_tol: Smallest eigenvalue modulus accepted for ``A``.
    """
    radii, min_moduli, ctrb, obsv, feats = [], [], [], [], []
    for s in model:
        eig = np.abs(np.linalg.eigvals(s.A))
        radii.append(float(eig.max()))
        min_moduli.append(float(eig.min()))
        ctrb.append(_rank_ratio(controllability_matrix(s.A, s.B)))
        obsv.append(_rank_ratio(observability_matrix(s.A, s.C)))
        feats.append(feature_M(s.A))

    gaps = {}
    distinct = True
    for i, j in itertools.combinations(range(model.sigma), 2):
        gap = abs(feats[i] - feats[j])
        gaps[f"{i + 1}-{j + 1}"] = gap
        if gap < tol * max(1.0, feats[i]):
            distinct = False

    checks = {
        "stability": CheckResult(
            all(r <= 1 - stability_margin for r in radii), {"spectral_radius": radii}
        ),
        "invertibility": CheckResult(
            all(v > invertibility_tol for v in min_moduli),
            {"min_eigenvalue_modulus": min_moduli},
        ),
        "controllability": CheckResult(
            all(v > rank_tol for v in ctrb), {"sv_ratio": ctrb}
        ),
        "observability": CheckResult(
            all(v > rank_tol for v in obsv), {"sv_ratio": obsv}
        ),
        "distinguishability": CheckResult(
            distinct, {"features": feats, "pairwise_gap": gaps}
        ),
    }
    tolerances = {
        "distinguishability": tol,
        "stability_margin": stability_margin,
        "rank": rank_tol,
        "invertibility": invertibility_tol,
    }
    return ValidationReport(checks, tolerances)


def _check_times(phi: SwitchingSequence, k: int, l: int) -> None:
    if not (1 <= l <= k <= phi.N):
        raise PreconditionError(f"need 1 <= l <= k <= {phi.N}, got k={k}, l={l}")


def state_transition(model: SwitchedModel, phi: SwitchingSequence, k: int, l: int) -> np.ndarray:
    """``Phi(k, l) = A_phi(k-1) ... A_phi(l)``, with ``Phi(k, k) = I``."""
    _check_times(phi, k, l)
    out = np.eye(model.n)
    for t in range(l, k):
        out = model[phi(t)].A @ out
    return out


def markov_parameter(model: SwitchedModel, phi: SwitchingSequence, k: int, l: int) -> np.ndarray:
    """Weight ``h(k, l)`` from input at time ``l`` to output at time ``k``."""
    _check_times(phi, k, l)
    if l == k:
        return np.array(model[phi(k)].D)
    return model[phi(k)].C @ state_transition(model, phi, k, l + 1) @ model[phi(l)].B


def lagged_markov(model: SwitchedModel, phi: SwitchingSequence, lag: int, ks) -> np.ndarray:
    """Stack ``h(k, k - lag)`` for each ``k`` in ``ks``; shape ``(len(ks), p, m)``."""
    return np.stack([markov_parameter(model, phi, k, k - lag) for k in ks])


def example_model(d1=DEFAULT_D1) -> SwitchedModel:
    """The three-mode, n = 3, m = p = 2 benchmark system.

    The first mode's feedthrough is printed as a 3x2 matrix in the source
    material; ``d1`` supplies the 2x2 replacement (default: its top block).
    """
    s1 = DiscreteState(
        [[0.32, 0.31, 0.0], [-0.32, 0.31, 0.0], [0.0, 0.0, -0.18]],
        [[0.90, -0.70], [0.71, -0.50], [0.80, 0.47]],
        [[-0.55, 0.20, 0.80], [0.45, 0.30, 0.58]],
        d1,
    )
    s2 = DiscreteState(
        [[-0.10, -0.40, 0.0], [0.50, -0.40, 0.0], [0.0, 0.0, 0.26]],
        [[0.10, -0.60], [0.32, -0.66], [0.30, 0.82]],
        [[-0.80, -0.10, 0.70], [0.30, 0.48, 0.90]],
        [[0.50, 0.30], [-0.20, -0.50]],
    )
    s3 = DiscreteState(
        [[0.4, 0.1, 0.0], [0.8, 0.4, 0.0], [0.0, 0.0, 0.8]],
        [[1.5, 0.9], [1.0, -1.0], [-1.5, 2.3]],
        [[0.8, 1.1, 2.0], [-1.3, 0.7, 1.7]],
        [[1.0, 0.0], [1.0, 2.0]],
    )
    return SwitchedModel((s1, s2, s3))


def random_state(
    n: int,
    m: int,
    p: int,
    rng: np.random.Generator,
    radius: tuple[float, float] = (0.5, 0.9),
    min_modulus: float = 0.05,
) -> DiscreteState:
    """Draw a stable, invertible, minimal random submodel."""
    while True:
        A = rng.standard_normal((n, n))
        eig = np.abs(np.linalg.eigvals(A))
        A *= rng.uniform(*radius) / eig.max()
        if np.abs(np.linalg.eigvals(A)).min() < min_modulus:
            continue
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        D = rng.standard_normal((p, m))
        if (
            _rank_ratio(controllability_matrix(A, B)) > 1e-4
            and _rank_ratio(observability_matrix(A, C)) > 1e-4
        ):
            return DiscreteState(A, B, C, D)


def random_model(sigma: int, n: int, m: int, p: int, rng: np.random.Generator,
                 min_gap: float = 0.05) -> SwitchedModel:
    """Random switched model whose clustering features are pairwise ``min_gap`` apart."""
    states: list[DiscreteState] = []
    while len(states) < sigma:
        s = random_state(n, m, p, rng)
        f = feature_M(s.A)
        if all(abs(f - feature_M(o.A)) >= min_gap for o in states):
            states.append(s)
    return SwitchedModel(tuple(states))
