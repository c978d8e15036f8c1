"""Finite-state semi-Markov (Markov renewal) engine.

A model is an embedded row-stochastic matrix P over named states plus one
sojourn distribution per state.  The module provides model validation,
ergodic analytics (stationary laws rho and pi, mean sojourns, the projector
Pi_tilde and the potential operator R0_tilde of the embedded chain) and
renewal-path sampling, both one path at a time and vectorized across paths.

Conventions: rho is the stationary law of the embedded chain (rho P = rho),
pi(x) = rho(x) m(x) / m_bar weights it by mean sojourn time, q(x) = 1/m(x),
q_bar = 1/m_bar, and R0_tilde = (I - P + Pi_tilde)^-1 - Pi_tilde satisfies
R0_tilde (P - I) = Pi_tilde - I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    BadSojourn,
    NonStochasticRow,
    ReducibleChain,
    SingularSystem,
)

__all__ = [
    "Exponential",
    "Deterministic",
    "Gamma",
    "Uniform",
    "SemiMarkovModel",
    "ErgodicSummary",
    "SemiMarkovPath",
    "validate_model",
    "stationary_embedded",
    "ergodic_summary",
    "sample_path",
    "initial_state_indices",
]

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-12
POTENTIAL_TOL = 1e-10


# ---------------------------------------------------------------------------
# Sojourn catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Exponential:
    rate: float

    def mean(self) -> float:
        return 1.0 / self.rate

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(1.0 / self.rate, size=size)

    def check(self) -> None:
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise BadSojourn(f"exponential rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class Deterministic:
    value: float

    def mean(self) -> float:
        return self.value

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def check(self) -> None:
        if not (math.isfinite(self.value) and self.value > 0):
            raise BadSojourn(f"deterministic sojourn must be positive, got {self.value}")


@dataclass(frozen=True)
class Gamma:
    shape: float
    scale: float

    def mean(self) -> float:
        return self.shape * self.scale

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.shape, self.scale, size=size)

    def check(self) -> None:
        if not (math.isfinite(self.shape) and self.shape > 0):
            raise BadSojourn(f"gamma shape must be positive, got {self.shape}")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise BadSojourn(f"gamma scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.lo, self.hi, size=size)

    def check(self) -> None:
        ok = math.isfinite(self.lo) and math.isfinite(self.hi)
        if not (ok and 0.0 <= self.lo < self.hi):
            raise BadSojourn(f"uniform sojourn needs 0 <= lo < hi, got [{self.lo}, {self.hi}]")


Sojourn = Exponential | Deterministic | Gamma | Uniform


# ---------------------------------------------------------------------------
# Model and ergodic summary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SemiMarkovModel:
    """Finite semi-Markov switching model.

    Parameters
    ----------
    states : tuple of str
        State labels (length n >= 1).
    P : ndarray, shape (n, n)
        Embedded transition matrix, row-stochastic and irreducible.
    sojourns : tuple of sojourn distributions, one per state.
    """

    states: tuple[str, ...]
    P: np.ndarray
    sojourns: tuple[Sojourn, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "P", np.array(self.P, dtype=float))
        object.__setattr__(self, "sojourns", tuple(self.sojourns))

    @property
    def n(self) -> int:
        return len(self.states)

    def mean_sojourns(self) -> np.ndarray:
        return np.array([s.mean() for s in self.sojourns])

    def state_index(self, label: str) -> int:
        return self.states.index(label)


@dataclass(frozen=True)
class ErgodicSummary:
    """Ergodic analytics of a validated model (all arrays length/order n)."""

    rho: np.ndarray        # stationary law of the embedded chain
    pi: np.ndarray         # time-stationary law, pi = rho * m / m_bar
    m_vec: np.ndarray      # mean sojourns m(x)
    m_bar: float           # rho-average of m
    q_vec: np.ndarray      # 1 / m(x)
    q_bar: float           # 1 / m_bar
    Pi_tilde: np.ndarray   # projector, every row equals rho
    R0_tilde: np.ndarray   # potential operator of the embedded chain


def validate_model(model: SemiMarkovModel) -> SemiMarkovModel:
    """Check all structural invariants, returning the model unchanged.

    Raises
    ------
    NonStochasticRow, ReducibleChain, BadSojourn
    """
    P = model.P
    n = model.n
    if P.shape != (n, n):
        raise NonStochasticRow(f"P has shape {P.shape}, expected ({n}, {n})")
    if np.any(P < 0):
        i, j = np.argwhere(P < 0)[0]
        raise NonStochasticRow(f"P[{i},{j}] = {P[i, j]} is negative")
    row_err = np.abs(P.sum(axis=1) - 1.0)
    if np.any(row_err > ROW_SUM_TOL):
        i = int(np.argmax(row_err))
        raise NonStochasticRow(f"row {i} ({model.states[i]!r}) sums to {P[i].sum():.17g}")
    if len(model.sojourns) != n:
        raise BadSojourn(f"{len(model.sojourns)} sojourn specs for {n} states")
    for s in model.sojourns:
        s.check()
    if n > 1:
        ncomp, _ = connected_components(csr_matrix(P > 0), connection="strong")
        if ncomp != 1:
            raise ReducibleChain(f"support of P has {ncomp} strongly connected components")
    return model


def stationary_embedded(P: np.ndarray) -> np.ndarray:
    """Stationary probability vector of a row-stochastic irreducible P.

    Solves rho P = rho, sum rho = 1 by a dense linear solve and checks the
    residual to 1e-12.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if n == 1:
        return np.array([1.0])
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        rho = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"stationary solve failed: {exc}") from exc
    if np.any(rho < -1e-9):
        raise SingularSystem(f"stationary solve produced negative mass {rho.min():.3e}")
    rho = np.clip(rho, 0.0, None)
    rho /= rho.sum()
    resid = np.max(np.abs(rho @ P - rho))
    if resid > STATIONARY_TOL:
        raise SingularSystem(f"stationary residual {resid:.3e} exceeds {STATIONARY_TOL}")
    return rho


def ergodic_summary(model: SemiMarkovModel) -> ErgodicSummary:
    """Compute rho, pi, sojourn analytics, Pi_tilde and R0_tilde.

    R0_tilde is obtained from the fundamental matrix,
    (I - P + Pi_tilde)^-1 - Pi_tilde, and the defining identity
    R0_tilde (P - I) = Pi_tilde - I is verified to 1e-10.
    """
    validate_model(model)
    P = model.P
    n = model.n
    rho = stationary_embedded(P)
    m_vec = model.mean_sojourns()
    m_bar = float(rho @ m_vec)
    pi = rho * m_vec / m_bar
    q_vec = 1.0 / m_vec
    q_bar = 1.0 / m_bar
    Pi_tilde = np.tile(rho, (n, 1))
    try:
        Z = np.linalg.solve(np.eye(n) - P + Pi_tilde, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"fundamental-matrix solve failed: {exc}") from exc
    R0 = Z - Pi_tilde
    resid = np.max(np.abs(R0 @ (P - np.eye(n)) - (Pi_tilde - np.eye(n))))
    if resid > POTENTIAL_TOL:
        raise SingularSystem(f"potential-operator residual {resid:.3e} exceeds {POTENTIAL_TOL}")
    return ErgodicSummary(rho=rho, pi=pi, m_vec=m_vec, m_bar=m_bar,
                          q_vec=q_vec, q_bar=q_bar, Pi_tilde=Pi_tilde, R0_tilde=R0)


# ---------------------------------------------------------------------------
# Path sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SemiMarkovPath:
    """One renewal path: tau_0 = 0 < tau_1 < ... with visited states.

    ``states[k]`` is the state entered at ``renewal_times[k]`` and held for
    ``sojourns[k] = renewal_times[k+1] - renewal_times[k]``.
    """

    renewal_times: np.ndarray
    states: np.ndarray
    sojourns: np.ndarray = field(default=None)

    def __post_init__(self):
        times = np.asarray(self.renewal_times, dtype=float)
        states = np.asarray(self.states)
        sojourns = self.sojourns
        if sojourns is None:
            sojourns = np.diff(times)
        sojourns = np.asarray(sojourns, dtype=float)
        if len(states) != len(times):
            raise ValueError("states and renewal_times must have equal length")
        if len(sojourns) != len(times) - 1:
            raise ValueError("need one sojourn per renewal interval")
        if np.any(sojourns <= 0):
            raise ValueError("sojourns must be strictly positive")
        object.__setattr__(self, "renewal_times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "sojourns", sojourns)

    def count_renewals(self, t: float) -> int:
        """nu(t) = number of renewals in (0, t]."""
        return int(np.searchsorted(self.renewal_times[1:], t, side="right"))

    def state_at(self, t: float) -> int:
        k = int(np.searchsorted(self.renewal_times, t, side="right")) - 1
        return int(self.states[min(k, len(self.states) - 1)])


def initial_state_indices(model: SemiMarkovModel, summary: ErgodicSummary,
                          dist, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n starting states.

    ``dist`` is "pi" (default for limit-theorem experiments), "rho", a state
    label, or an explicit probability vector.
    """
    if isinstance(dist, str):
        if dist == "pi":
            p = summary.pi
        elif dist == "rho":
            p = summary.rho
        elif dist in model.states:
            return np.full(n, model.state_index(dist), dtype=np.int64)
        else:
            raise ValueError(f"unknown initial state spec {dist!r}")
    else:
        p = np.asarray(dist, dtype=float)
    return rng.choice(model.n, size=n, p=p)


def sample_path(model: SemiMarkovModel, horizon: float,
                rng: np.random.Generator, start: int | str = 0) -> SemiMarkovPath:
    """Sample one renewal path covering [0, horizon].

    The path is extended until the last renewal time is >= horizon, so the
    state occupied at every t <= horizon is defined.  Reproducible for a
    fixed generator state.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if isinstance(start, str):
        start = model.state_index(start)
    cumP = np.cumsum(model.P, axis=1)
    times = [0.0]
    states = [int(start)]
    t = 0.0
    x = int(start)
    while t < horizon:
        theta = float(model.sojourns[x].sample(rng))
        t += theta
        x = int(np.searchsorted(cumP[x], rng.random(), side="right"))
        times.append(t)
        states.append(x)
    return SemiMarkovPath(np.array(times), np.array(states, dtype=np.int64))


# Vectorized helpers shared with the prelimit engine: both draw per-state in
# ascending state order so the stream consumption pattern is deterministic.

def draw_sojourns(model: SemiMarkovModel, states_idx: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    out = np.empty(states_idx.shape, dtype=float)
    for s in range(model.n):
        sel = states_idx == s
        cnt = int(sel.sum())
        if cnt:
            out[sel] = model.sojourns[s].sample(rng, size=cnt)
    return out


def draw_next_states(model: SemiMarkovModel, states_idx: np.ndarray,
                     rng: np.random.Generator,
                     cumP: np.ndarray | None = None) -> np.ndarray:
    if cumP is None:
        cumP = np.cumsum(model.P, axis=1)
    out = np.empty(states_idx.shape, dtype=np.int64)
    for s in range(model.n):
        sel = states_idx == s
        cnt = int(sel.sum())
        if cnt:
            out[sel] = np.searchsorted(cumP[s], rng.random(cnt), side="right")
    return np.minimum(out, model.n - 1)
