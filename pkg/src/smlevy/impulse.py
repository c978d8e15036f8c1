"""Impulse families: bounded coefficient fields plus a finite-atom jump kernel.

A family prescribes, per switching state x, the small-impulse law through its
moment ingredients: first-order drift a1(u;x), second-order drift a(u;x),
second-moment field c(u;x), and a finite-atom kernel G_{u,x} whose atoms sit
at fixed locations v_j with weights w_j, optionally modulated by a bounded
positive factor s(u).  For a series parameter eps the impulse is drawn from
the canonical mixture

    with prob p = eps^2 lam(u;x):  v ~ normalized atoms (w_j / sum w),
    otherwise:                     v = mu_s + eps Z,

    mu_s = (eps a1 + eps^2 (a - a0)) / (1 - p),
    Z ~ Normal(0, (c - c0 - a1 a1*) / (1 - p)),

where lam = s(u) sum w_j, a0 = s(u) sum w_j v_j and c0 = s(u) sum w_j v_j v_j*.
The mixture has mean exactly eps a1 + eps^2 a and second moment
eps^2 c + r(eps) with a closed-form residue r of order eps^3 (see
:func:`second_moment_residue`), which is what makes every downstream moment
check an exact oracle rather than an approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BalanceViolated, EpsTooLarge, NoisePSDViolated, UnboundedSpec

__all__ = [
    "Const",
    "Tanh",
    "Sine",
    "ScalarField",
    "VectorField",
    "MatrixField",
    "JumpKernel",
    "ImpulseFamily",
    "FamilyValidationReport",
    "validate_family",
    "moments",
    "second_moment_residue",
    "moment_residue_bound",
    "sample_impulse",
    "test_function_integral",
    "recenter_a1",
    "C3_CATALOG",
]

NOISE_PSD_TOL = 1e-9


# ---------------------------------------------------------------------------
# Scalar catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float

    def __call__(self, s):
        return np.broadcast_to(np.float64(self.value), np.shape(s)).copy() \
            if np.ndim(s) else float(self.value)

    def range(self):
        return (self.value, self.value)

    def check(self):
        if not math.isfinite(self.value):
            raise UnboundedSpec(f"const value must be finite, got {self.value}")


@dataclass(frozen=True)
class Tanh:
    amp: float
    slope: float
    center: float = 0.0

    def __call__(self, s):
        return self.amp * np.tanh(self.slope * (np.asarray(s, dtype=float) - self.center))

    def range(self):
        return (-abs(self.amp), abs(self.amp))

    def check(self):
        if not all(map(math.isfinite, (self.amp, self.slope, self.center))):
            raise UnboundedSpec(f"tanh parameters must be finite: {self}")


@dataclass(frozen=True)
class Sine:
    amp: float
    freq: float
    phase: float = 0.0

    def __call__(self, s):
        return self.amp * np.sin(self.freq * np.asarray(s, dtype=float) + self.phase)

    def range(self):
        return (-abs(self.amp), abs(self.amp))

    def check(self):
        if not all(map(math.isfinite, (self.amp, self.freq, self.phase))):
            raise UnboundedSpec(f"sine parameters must be finite: {self}")


CatalogFn = Const | Tanh | Sine


@dataclass(frozen=True)
class ScalarField:
    """One catalog function of the scalar u[axis], plus a constant shift.

    The shift exists so that re-centering the first-order drift (balance
    projection) stays inside the catalog.
    """

    fn: CatalogFn
    axis: int = 0
    shift: float = 0.0

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        s = u[..., self.axis]
        return self.fn(s) + self.shift

    def range(self):
        lo, hi = self.fn.range()
        return (lo + self.shift, hi + self.shift)

    def bound(self):
        lo, hi = self.range()
        return max(abs(lo), abs(hi))

    def check(self, dim: int):
        self.fn.check()
        if not math.isfinite(self.shift):
            raise UnboundedSpec(f"field shift must be finite, got {self.shift}")
        if not 0 <= self.axis < dim:
            raise UnboundedSpec(f"field axis {self.axis} out of range for dim {dim}")


def _as_scalar_field(obj) -> ScalarField:
    if isinstance(obj, ScalarField):
        return obj
    return ScalarField(fn=obj)


@dataclass(frozen=True)
class VectorField:
    """Length-d vector of scalar fields, u -> R^d."""

    entries: tuple[ScalarField, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(_as_scalar_field(e) for e in self.entries))

    @property
    def dim(self):
        return len(self.entries)

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape[:-1] + (self.dim,))
        for i, e in enumerate(self.entries):
            out[..., i] = e.evaluate(u)
        return out

    def bound(self):
        return float(np.linalg.norm([e.bound() for e in self.entries]))

    def check(self, dim: int):
        if self.dim != dim:
            raise UnboundedSpec(f"vector field has {self.dim} entries, expected {dim}")
        for e in self.entries:
            e.check(dim)


@dataclass(frozen=True)
class MatrixField:
    """Symmetric d x d matrix of scalar fields (entries[i][j] == entries[j][i])."""

    entries: tuple[tuple[ScalarField, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(_as_scalar_field(e) for e in row) for row in self.entries)
        object.__setattr__(self, "entries", rows)

    @property
    def dim(self):
        return len(self.entries)

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        d = self.dim
        out = np.empty(u.shape[:-1] + (d, d))
        for i in range(d):
            for j in range(d):
                out[..., i, j] = self.entries[i][j].evaluate(u)
        return out

    def check(self, dim: int):
        if self.dim != dim or any(len(r) != dim for r in self.entries):
            raise UnboundedSpec(f"matrix field is not {dim} x {dim}")
        for i in range(dim):
            for j in range(dim):
                self.entries[i][j].check(dim)
                if self.entries[i][j] != self.entries[j][i]:
                    raise UnboundedSpec(f"matrix field not symmetric at ({i},{j})")


def const_vector(values) -> VectorField:
    return VectorField(tuple(ScalarField(Const(float(v))) for v in values))


def const_matrix(mat) -> MatrixField:
    mat = np.asarray(mat, dtype=float)
    return MatrixField(tuple(tuple(ScalarField(Const(float(mat[i, j])))
                                   for j in range(mat.shape[1]))
                             for i in range(mat.shape[0])))


# ---------------------------------------------------------------------------
# Jump kernel and family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpKernel:
    """Finitely many atoms (v_j, w_j), weights optionally modulated by s(u).

    ``atoms`` has shape (k, d) with nonzero rows; ``weights`` shape (k,),
    strictly positive.  ``modulation`` is a bounded positive scalar field
    (None means s == 1).
    """

    atoms: np.ndarray
    weights: np.ndarray
    modulation: ScalarField | None = None

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if atoms.size == 0:
            atoms = atoms.reshape(0, max(1, atoms.shape[-1] if atoms.ndim else 1))
        weights = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    def check(self, dim: int):
        if self.n_atoms and self.atoms.shape[1] != dim:
            raise UnboundedSpec(f"atoms have dim {self.atoms.shape[1]}, expected {dim}")
        if len(self.weights) != self.n_atoms:
            raise UnboundedSpec("one weight per atom required")
        if self.n_atoms:
            if np.any(~np.isfinite(self.atoms)) or np.any(~np.isfinite(self.weights)):
                raise UnboundedSpec("atoms and weights must be finite")
            if np.any(np.all(self.atoms == 0.0, axis=1)):
                raise UnboundedSpec("atoms must be nonzero displacements")
            if np.any(self.weights <= 0):
                raise UnboundedSpec("atom weights must be positive")
        if self.modulation is not None:
            self.modulation.check(dim)
            lo, hi = self.modulation.range()
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise UnboundedSpec(
                    f"modulation must have range inside (0, inf), got [{lo}, {hi}]")

    # raw (eps-free) kernel functionals; all vectorized over leading axes of u
    def s_of(self, u):
        if self.modulation is None:
            u = np.asarray(u, dtype=float)
            return np.ones(u.shape[:-1])
        return self.modulation.evaluate(u)

    def s_bounds(self):
        if self.modulation is None:
            return (1.0, 1.0)
        return self.modulation.range()

    def total_weight(self):
        return float(self.weights.sum()) if self.n_atoms else 0.0

    def intensity(self, u):
        """lam(u;x) = s(u) sum_j w_j."""
        return self.s_of(u) * self.total_weight()

    def mean(self, u):
        """a0(u;x) = s(u) sum_j w_j v_j, shape (..., d)."""
        base = self.weights @ self.atoms if self.n_atoms else np.zeros(self.atoms.shape[1])
        return self.s_of(u)[..., None] * base

    def second_moment(self, u):
        """c0(u;x) = s(u) sum_j w_j v_j v_j*, shape (..., d, d)."""
        d = self.atoms.shape[1]
        base = np.einsum("j,ji,jk->ik", self.weights, self.atoms, self.atoms) \
            if self.n_atoms else np.zeros((d, d))
        return self.s_of(u)[..., None, None] * base

    def normalized_weights(self):
        """Atom probabilities of the normalized law (modulation cancels)."""
        if not self.n_atoms:
            return np.zeros(0)
        return self.weights / self.weights.sum()


@dataclass(frozen=True)
class ImpulseFamily:
    """Per-state impulse ingredients on R^d.

    ``theta_scale`` enables the optional negligible-term hook: an independent
    Normal(0, (theta_scale * eps^3)^2 I) perturbation added to every impulse,
    used to probe robustness of the limit against vanishing contamination.
    """

    dim: int
    a1: tuple[VectorField, ...]
    a: tuple[VectorField, ...]
    c: tuple[MatrixField, ...]
    jumps: tuple[JumpKernel, ...]
    theta_scale: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a1", tuple(self.a1))
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "c", tuple(self.c))
        object.__setattr__(self, "jumps", tuple(self.jumps))

    @property
    def n_states(self):
        return len(self.a1)

    def check(self):
        n, d = self.n_states, self.dim
        if d < 1:
            raise UnboundedSpec(f"dimension must be >= 1, got {d}")
        if not (len(self.a) == len(self.c) == len(self.jumps) == n):
            raise UnboundedSpec("per-state field tuples must have equal length")
        for x in range(n):
            self.a1[x].check(d)
            self.a[x].check(d)
            self.c[x].check(d)
            self.jumps[x].check(d)
        if not (math.isfinite(self.theta_scale) and self.theta_scale >= 0):
            raise UnboundedSpec(f"theta_scale must be finite and >= 0, got {self.theta_scale}")

    # per-state evaluation, vectorized over leading axes of u (..., d)
    def a1_at(self, u, x):
        return self.a1[x].evaluate(u)

    def a_at(self, u, x):
        return self.a[x].evaluate(u)

    def c_at(self, u, x):
        return self.c[x].evaluate(u)

    def noise_cov(self, u, x):
        """c - c0 - a1 a1*, the (unnormalized) small-noise covariance."""
        a1 = self.a1_at(u, x)
        return self.c_at(u, x) - self.jumps[x].second_moment(u) \
            - a1[..., :, None] * a1[..., None, :]

    def max_jump_intensity(self):
        """Upper bound of lam(u;x) over all u and states."""
        best = 0.0
        for k in self.jumps:
            _, hi = k.s_bounds()
            best = max(best, hi * k.total_weight())
        return best

    def eps_max(self, margin: float = 1.0):
        """Largest eps with eps^2 * lam < margin everywhere."""
        lam = self.max_jump_intensity()
        return math.inf if lam == 0 else math.sqrt(margin / lam)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FamilyValidationReport:
    passed: bool
    max_balance_residual: float
    balance_arg: float | None
    min_noise_eig: float
    noise_arg: tuple[float, int] | None
    tol: float

    def summary(self) -> str:
        bal = f"max |rho-mean of a1| = {self.max_balance_residual:.3e}"
        if self.balance_arg is not None:
            bal += f" at u = {self.balance_arg:.6g}"
        psd = f"min eig(c - c0 - a1 a1*) = {self.min_noise_eig:.3e}"
        if self.noise_arg is not None:
            psd += f" at (u, state) = ({self.noise_arg[0]:.6g}, {self.noise_arg[1]})"
        return f"{'pass' if self.passed else 'FAIL'}: {bal}; {psd}; tol = {self.tol:g}"


def validate_family(family: ImpulseFamily, rho: np.ndarray, u_grid,
                    tol: float = NOISE_PSD_TOL) -> FamilyValidationReport:
    """Check the balance condition and small-noise positive semidefiniteness.

    ``u_grid`` is a sequence of evaluation points, either scalars (d = 1) or
    d-vectors.  Raises BalanceViolated or NoisePSDViolated on failure (the
    report is attached to the exception), UnboundedSpec on catalog misuse.
    """
    family.check()
    rho = np.asarray(rho, dtype=float)
    if len(rho) != family.n_states:
        raise UnboundedSpec(f"rho has {len(rho)} entries for {family.n_states} states")
    U = np.atleast_2d(np.asarray(u_grid, dtype=float).reshape(len(u_grid), -1))
    if U.shape[1] != family.dim:
        if U.shape[1] == 1:
            U = np.repeat(U, family.dim, axis=1)
        else:
            raise UnboundedSpec(f"u_grid points have dim {U.shape[1]}, expected {family.dim}")

    bal = np.zeros((len(U), family.dim))
    for x in range(family.n_states):
        bal += rho[x] * family.a1_at(U, x)
    bal_res = np.abs(bal).max(axis=1)
    i_bal = int(np.argmax(bal_res))
    max_bal = float(bal_res[i_bal])

    min_eig = math.inf
    noise_arg = None
    for x in range(family.n_states):
        cov = family.noise_cov(U, x)
        if family.dim == 1:
            eigs = cov[..., 0, 0]
        else:
            eigs = np.linalg.eigvalsh(cov).min(axis=-1)
        j = int(np.argmin(eigs))
        if eigs[j] < min_eig:
            min_eig = float(eigs[j])
            noise_arg = (float(U[j, 0]), x)

    report = FamilyValidationReport(
        passed=(max_bal <= tol and min_eig >= -tol),
        max_balance_residual=max_bal,
        balance_arg=float(U[i_bal, 0]),
        min_noise_eig=min_eig,
        noise_arg=noise_arg,
        tol=tol,
    )
    if max_bal > tol:
        exc = BalanceViolated(report.summary())
        exc.report = report
        raise exc
    if min_eig < -tol:
        exc = NoisePSDViolated(report.summary())
        exc.report = report
        raise exc
    return report


def recenter_a1(family: ImpulseFamily, rho: np.ndarray, u_grid,
                tol: float = 1e-9) -> ImpulseFamily:
    """Subtract the (constant) rho-mean of a1 from every state.

    Restores balance after all states' a1 were shifted by a common constant
    vector; idempotent on balanced families.  Raises ValueError when the
    rho-mean actually varies over the grid (no constant shift can fix that).
    """
    rho = np.asarray(rho, dtype=float)
    U = np.atleast_2d(np.asarray(u_grid, dtype=float).reshape(len(u_grid), -1))
    mean = np.zeros((len(U), family.dim))
    for x in range(family.n_states):
        mean += rho[x] * family.a1_at(U, x)
    spread = mean.max(axis=0) - mean.min(axis=0)
    if np.any(spread > tol):
        raise ValueError(
            f"rho-mean of a1 varies by {spread.max():.3e} over the grid; "
            "a constant shift cannot restore balance")
    offset = mean.mean(axis=0)
    new_a1 = []
    for vf in family.a1:
        entries = tuple(replace(e, shift=e.shift - float(offset[i]))
                        for i, e in enumerate(vf.entries))
        new_a1.append(VectorField(entries))
    return replace(family, a1=tuple(new_a1))


# ---------------------------------------------------------------------------
# Exact moments
# ---------------------------------------------------------------------------

def _check_eps(p) -> None:
    if np.any(np.asarray(p) >= 1.0):
        raise EpsTooLarge(f"eps^2 * lambda = {np.max(p):.6g} >= 1")


def moments(family: ImpulseFamily, u, x: int, eps: float):
    """Exact mean and second moment of the canonical mixture at (u, x, eps).

    Returns ``(mean, second)`` with shapes (d,) and (d, d).  The mean is
    exactly eps a1 + eps^2 a; the second moment is eps^2 c plus the
    closed-form residue from :func:`second_moment_residue` (plus the hook
    variance when theta_scale > 0).
    """
    u = np.asarray(u, dtype=float).reshape(family.dim)
    lam = float(family.jumps[x].intensity(u[None, :])[0])
    p = eps * eps * lam
    _check_eps(p)
    a1 = family.a1_at(u, x)
    a = family.a_at(u, x)
    c = family.c_at(u, x)
    mean = eps * a1 + eps * eps * a
    second = eps * eps * c + second_moment_residue(family, u, x, eps)
    if family.theta_scale > 0:
        second = second + (family.theta_scale * eps ** 3) ** 2 * np.eye(family.dim)
    return mean, second


def second_moment_residue(family: ImpulseFamily, u, x: int, eps: float) -> np.ndarray:
    """Closed-form O(eps^3) residue r(eps) of the mixture second moment.

    r = [eps^3 (a1 D* + D a1*) + eps^4 (lam a1 a1* + D D*)] / (1 - p)
    with D = a - a0 and p = eps^2 lam; excludes the hook term.
    """
    u = np.asarray(u, dtype=float).reshape(family.dim)
    U = u[None, :]
    lam = float(family.jumps[x].intensity(U)[0])
    p = eps * eps * lam
    _check_eps(p)
    a1 = family.a1_at(u, x)
    delta = family.a_at(u, x) - family.jumps[x].mean(U)[0]
    cross = np.outer(a1, delta) + np.outer(delta, a1)
    quad = lam * np.outer(a1, a1) + np.outer(delta, delta)
    return (eps ** 3 * cross + eps ** 4 * quad) / (1.0 - p)


def moment_residue_bound(family: ImpulseFamily, x: int, eps: float) -> float:
    """Constant C with ||r(eps')||_2 <= C eps'^3 for all u and eps' <= eps."""
    b_a1 = family.a1[x].bound()
    _, s_hi = family.jumps[x].s_bounds()
    b_a0 = s_hi * float(np.linalg.norm(
        family.jumps[x].weights @ family.jumps[x].atoms)) if family.jumps[x].n_atoms else 0.0
    b_delta = family.a[x].bound() + b_a0
    lam_hi = s_hi * family.jumps[x].total_weight()
    p = eps * eps * lam_hi
    _check_eps(p)
    return (2 * b_a1 * b_delta + eps * (lam_hi * b_a1 ** 2 + b_delta ** 2)) / (1.0 - p)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _gaussian_factor(cov, tol=NOISE_PSD_TOL):
    """Factor L with L L* = cov for stacked symmetric (..., d, d) covariances.

    Eigenvalues in [-tol, 0) are clipped to 0; below -tol raises.
    """
    d = cov.shape[-1]
    if d == 1:
        v = cov[..., 0, 0]
        if np.any(v < -tol):
            raise NoisePSDViolated(f"noise variance {v.min():.3e} < -{tol:g}")
        return np.sqrt(np.clip(v, 0.0, None))[..., None, None]
    w, V = np.linalg.eigh(cov)
    if np.any(w < -tol):
        raise NoisePSDViolated(f"noise eigenvalue {w.min():.3e} < -{tol:g}")
    return V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]


def _sample_batch(family: ImpulseFamily, U: np.ndarray, x: int, eps: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Draw one impulse per row of U (m, d), all in state x.

    Stream consumption is a fixed pattern (branch uniforms, normals, atom
    uniforms, hook normals), independent of which branch each row takes.
    """
    m, d = U.shape
    kern = family.jumps[x]
    lam = kern.intensity(U)
    p = eps * eps * lam
    _check_eps(p)
    a1 = family.a1_at(U, x)
    a = family.a_at(U, x)
    mu_s = (eps * a1 + eps * eps * (a - kern.mean(U))) / (1.0 - p)[:, None]
    cov = family.noise_cov(U, x) / (1.0 - p)[:, None, None]
    L = _gaussian_factor(cov)

    u_branch = rng.random(m)
    z = rng.standard_normal((m, d))
    u_atom = rng.random(m)
    out = mu_s + eps * np.einsum("mij,mj->mi", L, z)
    is_jump = u_branch < p
    if kern.n_atoms and np.any(is_jump):
        cw = np.cumsum(kern.normalized_weights())
        idx = np.searchsorted(cw, u_atom[is_jump], side="right")
        idx = np.minimum(idx, kern.n_atoms - 1)
        out[is_jump] = kern.atoms[idx]
    if family.theta_scale > 0:
        out = out + (family.theta_scale * eps ** 3) * rng.standard_normal((m, d))
    return out


def sample_impulse(family: ImpulseFamily, u, x: int, eps: float,
                   rng: np.random.Generator, size: int | None = None):
    """Draw impulses at a fixed point u and state x.

    Returns shape (d,) when size is None, else (size, d).
    """
    u = np.asarray(u, dtype=float).reshape(family.dim)
    m = 1 if size is None else int(size)
    U = np.broadcast_to(u, (m, family.dim))
    out = _sample_batch(family, np.ascontiguousarray(U), x, eps, rng)
    return out[0] if size is None else out


def test_function_integral(family: ImpulseFamily, u, x: int, g) -> float:
    """G_g(u;x) = s(u) sum_j w_j g(v_j) over the state-x atoms.

    For d = 1 the test function receives scalars, otherwise (d,) vectors.
    """
    u = np.asarray(u, dtype=float).reshape(family.dim)
    kern = family.jumps[x]
    if not kern.n_atoms:
        return 0.0
    s = float(kern.s_of(u[None, :])[0])
    total = 0.0
    for v, w in zip(kern.atoms, kern.weights):
        arg = float(v[0]) if family.dim == 1 else v
        total += w * float(g(arg))
    return s * total


# ---------------------------------------------------------------------------
# C3-style test functions (vanish faster than |v|^2 at 0)
# ---------------------------------------------------------------------------

def _vnorm(v):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return np.abs(v)
    return np.linalg.norm(v, axis=-1)


def c3_cubic_capped(v):
    """min(|v|^3, 1)."""
    return float(np.minimum(_vnorm(v) ** 3, 1.0))


def c3_quad_saturating(v):
    """|v|^2 (1 - exp(-|v|^2))."""
    r2 = _vnorm(v) ** 2
    return float(r2 * (1.0 - np.exp(-r2)))


def c3_ring_bump(v, r_lo: float = 0.5, r_hi: float = 2.0):
    """Smooth bump supported on r_lo < |v| < r_hi, zero near 0."""
    r = float(_vnorm(v))
    if r <= r_lo or r >= r_hi:
        return 0.0
    t = (r - r_lo) * (r_hi - r)
    return float(math.exp(-((r_hi - r_lo) / 2.0) ** 2 / t) * math.e)


C3_CATALOG = {
    "cubic_capped": c3_cubic_capped,
    "quad_saturating": c3_quad_saturating,
    "ring_bump": c3_ring_bump,
}
