"""Simulation of switched systems and generation of excitation signals."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, PreconditionError
from .model import HybridInput, SwitchedModel, SwitchingSequence

INPUT_KINDS = ("white", "harmonics", "pulse")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """State track ``x(1..N+1)`` (rows) and output track ``y(1..N)``."""

    x: np.ndarray
    y: np.ndarray

    def residual(self, model: SwitchedModel, omega: HybridInput) -> float:
        """Largest violation of the state/output recursion over the whole run."""
        worst = 0.0
        for k in range(omega.N):
            s = model[int(omega.phi.phi[k])]
            u = omega.u[k]
            worst = max(
                worst,
                np.abs(s.A @ self.x[k] + s.B @ u - self.x[k + 1]).max(),
                np.abs(s.C @ self.x[k] + s.D @ u - self.y[k]).max(),
            )
        return float(worst)


def simulate(model: SwitchedModel, omega: HybridInput, x0=None) -> Trajectory:
    """Run ``x(k+1) = A x(k) + B u(k)``, ``y(k) = C x(k) + D u(k)`` from ``x(1) = x0``."""
    if omega.m != model.m:
        raise DimensionError(f"input has {omega.m} channels, model expects {model.m}")
    if omega.phi.phi.max() > model.sigma:
        raise PreconditionError(
            f"switching uses mode {omega.phi.phi.max()} but the model has {model.sigma}"
        )
    x0 = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != model.n:
        raise DimensionError(f"x0 has length {x0.size}, expected {model.n}")
    N = omega.N
    x = np.empty((N + 1, model.n))
    y = np.empty((N, model.p))
    x[0] = x0
    mats = [(s.A, s.B, s.C, s.D) for s in model]
    for k, mode in enumerate(omega.phi.phi):
        A, B, C, D = mats[mode - 1]
        u = omega.u[k]
        y[k] = C @ x[k] + D @ u
        x[k + 1] = A @ x[k] + B @ u
    return Trajectory(x, y)


def generate_switching(
    sigma: int,
    N: int,
    min_dwell: int,
    seed=None,
    max_dwell: int | None = None,
) -> SwitchingSequence:
    """Random surjective switching sequence with every dwell time >= ``min_dwell``.

    Dwell times are uniform on ``[min_dwell, max_dwell]``; the next mode is
    uniform over the modes different from the current one. The first
    ``sigma`` segments visit a random permutation of all modes so the
    sequence is always surjective. A leftover shorter than ``min_dwell`` is
    merged into the final segment.
    """
    if sigma < 1 or N < 1 or min_dwell < 1:
        raise PreconditionError("sigma, N and min_dwell must be positive")
    if min_dwell * sigma > N:
        raise PreconditionError(
            f"cannot fit {sigma} segments of length >= {min_dwell} into N = {N}"
        )
    rng = np.random.default_rng(seed)
    if sigma == 1:
        return SwitchingSequence(np.ones(N, dtype=int), sigma=1)
    if max_dwell is None:
        max_dwell = max(min_dwell, 2 * N // (5 * sigma))
    if max_dwell < min_dwell:
        raise PreconditionError("max_dwell must be >= min_dwell")

    order = rng.permutation(sigma) + 1
    phi = np.empty(N, dtype=int)
    pos, j, prev = 0, 0, 0
    while pos < N:
        remaining = N - pos
        if j < sigma:
            mode = int(order[j])
        else:
            choices = [v for v in range(1, sigma + 1) if v != prev]
            mode = int(rng.choice(choices))
        reserve = max(0, sigma - j - 1) * min_dwell
        hi = min(max_dwell, remaining - reserve)
        d = int(rng.integers(min_dwell, max(hi, min_dwell) + 1))
        if remaining - d < min_dwell:
            d = remaining
        phi[pos:pos + d] = mode
        pos += d
        prev = mode
        j += 1
    return SwitchingSequence(phi, sigma=sigma)


def generate_input(kind: str, m: int, N: int, params: dict | None = None, seed=None) -> np.ndarray:
    """Continuous input track of shape ``(N, m)``.

    Args:
        kind: ``"white"`` (i.i.d. standard normal, optional ``scale``),
            ``"harmonics"`` (per channel, a sum of ``H`` sinusoids
            ``a sin(2 pi f k + theta)``) or ``"pulse"`` (unit impulse at
            ``k = 1`` on the 1-based ``channels``, default all).
        m: Number of channels.
        N: Number of samples.
        params: Kind-specific settings. For harmonics: ``H`` (5),
            ``freq_range`` ((0, 0.45)), ``amp_range`` ((0.5, 2)), or explicit
            ``amplitudes``/``frequencies``/``phases`` arrays of shape (m, H).
        seed: Seed for every random draw.
    """
    if N < 1 or m < 1:
        raise PreconditionError("N and m must be positive")
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind == "white":
        return float(params.get("scale", 1.0)) * rng.standard_normal((N, m))
    if kind == "harmonics":
        H = int(params.get("H", 5))
        f_lo, f_hi = params.get("freq_range", (0.0, 0.45))
        a_lo, a_hi = params.get("amp_range", (0.5, 2.0))
        amps = np.asarray(params.get("amplitudes", rng.uniform(a_lo, a_hi, (m, H))), float)
        freqs = np.asarray(params.get("frequencies", rng.uniform(f_lo, f_hi, (m, H))), float)
        phases = np.asarray(params.get("phases", rng.uniform(0, 2 * np.pi, (m, H))), float)
        for name, arr in (("amplitudes", amps), ("frequencies", freqs), ("phases", phases)):
            if arr.shape != (m, H):
                raise DimensionError(f"{name} must have shape {(m, H)}, got {arr.shape}")
        k = np.arange(1, N + 1)[:, None, None]
        return np.sum(amps * np.sin(2 * np.pi * freqs * k + phases), axis=2)
    if kind == "pulse":
        u = np.zeros((N, m))
        channels = params.get("channels") or list(range(1, m + 1))
        for c in channels:
            u[0, int(c) - 1] = 1.0
        return u
    raise ConfigError(f"unknown input kind {kind!r}; expected one of {INPUT_KINDS}")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_signals(path, omega: HybridInput, y=None) -> None:
    """Write ``k,phi,u1..um[,y1..yp]`` CSV, one row per time step."""
    header = ["k", "phi"] + [f"u{j + 1}" for j in range(omega.m)]
    if y is not None:
        y = np.asarray(y, dtype=float).reshape(omega.N, -1)
        header += [f"y{j + 1}" for j in range(y.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(omega.N):
            row = [str(k + 1), str(int(omega.phi.phi[k]))]
            row += [_fmt(v) for v in omega.u[k]]
            if y is not None:
                row += [_fmt(v) for v in y[k]]
            w.writerow(row)


def read_signals(path, sigma: int | None = None) -> tuple[HybridInput, np.ndarray | None]:
    """Inverse of :func:`write_signals`; returns ``(omega, y or None)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["k", "phi"]:
        raise ConfigError(f"{path}: header must start with k,phi")
    ucols = [i for i, h in enumerate(header) if h.startswith("u")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    data = np.array(body, dtype=float) if body else np.zeros((0, len(header)))
    ks = data[:, 0].astype(int)
    if not np.array_equal(ks, np.arange(1, len(ks) + 1)):
        raise ConfigError(f"{path}: k column must run 1..N")
    phi = SwitchingSequence(data[:, 1].astype(int), sigma=sigma, surjective=False)
    omega = HybridInput(phi, data[:, ucols])
    y = data[:, ycols] if ycols else None
    return omega, y
