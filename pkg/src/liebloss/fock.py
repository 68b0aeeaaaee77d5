"""Truncated-Fock brute force for quadratic-plus-linear boson Hamiltonians.

A finite-mode Hamiltonian is specified by symmetric PSD blocks (a, b, d) and
a real linear vector y through the block operator T = [[a+b, b], [b, d+b]]
acting on generalized field operators.  On the real mode basis the
conjugation J is the identity, so all blocks are J-invariant by
construction, and expanding the generalized quadratic form gives

    H = sum_ij (a + d + 2b)_ij a*_i a_j
        + sum_ij b_ij (a*_i a*_j + a_i a_j)
        + 2 sum_i y_i (a*_i + a_i)
        + Tr(d + b).

The constant term is the vacuum expectation emerging from operator ordering,
not added by hand.  The ground energy of H is computed two independent ways:

* brute force: smallest eigenvalue on the occupation basis truncated by
  total occupation (variational, monotone nonincreasing in the cutoff);
* closed form: 1/2 Tr[(sqrt(a+d) (a+d+4b) sqrt(a+d))^(1/2) - a + d], the
  Bogolubov diagonalization value (for y = 0), shifted by the Weyl term
  <eta, (a+d+4b) eta> with eta solving (a+d+4b) eta = 2 y.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .errors import InvalidInputError, NumericalFailureError, PropertyViolationError

__all__ = [
    "QuadraticBlocks",
    "FockTruncation",
    "BogolubovPair",
    "build_dgamma",
    "ground_energy_bruteforce",
    "ground_energy_over_truncations",
    "bogolubov_ground_formula",
    "weyl_shift",
    "contraction_bound_check",
    "v_y_roundtrip_check",
    "positivity_theorem_check",
    "theta_embedding",
    "random_bogolubov",
    "symplectic_defect",
    "vacuum_expectation",
    "gram_functional",
    "y_star",
    "optimal_pair",
    "sqrtm_psd",
]

_SYM_TOL = 1e-10


def _check_sym_psd(mat, name, psd_tol=1e-10):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix")
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(mat - mat.T)) > _SYM_TOL * scale:
        raise InvalidInputError(f"{name} must be symmetric")
    eig_min = float(np.linalg.eigvalsh(mat)[0])
    if eig_min < -psd_tol * scale:
        raise InvalidInputError(f"{name} must be PSD (min eig {eig_min:.3e})")
    return 0.5 * (mat + mat.T)


def sqrtm_psd(mat):
    """Symmetric square root via eigendecomposition, clamping tiny negatives."""
    eig, vec = np.linalg.eigh(mat)
    return (vec * np.sqrt(np.maximum(eig, 0.0))[None, :]) @ vec.T


@dataclass(frozen=True)
class QuadraticBlocks:
    """Blocks (a, b, d) and linear vector y of a quadratic boson Hamiltonian."""

    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        a = _check_sym_psd(self.a, "a")
        b = _check_sym_psd(self.b, "b")
        d = _check_sym_psd(self.d, "d")
        y = np.asarray(self.y, dtype=float).ravel()
        n = a.shape[0]
        if b.shape != (n, n) or d.shape != (n, n) or y.shape != (n,):
            raise InvalidInputError("blocks a, b, d, y must share one mode count")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "y", y)

    @property
    def n_modes(self) -> int:
        return self.a.shape[0]

    def folded(self) -> np.ndarray:
        """q* T q = a + d + 4b, the J-folded single-mode operator."""
        return self.a + self.d + 4.0 * self.b

    def block_operator(self) -> np.ndarray:
        """T = [[a+b, b], [b, d+b]]; PSD whenever a, b, d are."""
        return np.block([[self.a + self.b, self.b], [self.b, self.d + self.b]])


@dataclass(frozen=True)
class FockTruncation:
    """Occupation basis {n : sum_i n_i <= N}; dimension C(N + n_modes, n_modes)."""

    n_modes: int
    max_total_occupation: int

    def __post_init__(self):
        if self.n_modes < 1 or self.max_total_occupation < 1:
            raise InvalidInputError("need n_modes >= 1 and max_total_occupation >= 1")

    @property
    def dimension(self) -> int:
        return comb(self.max_total_occupation + self.n_modes, self.n_modes)

    def basis(self):
        """Occupation tuples in deterministic (degree-then-lex) order."""
        n, cap = self.n_modes, self.max_total_occupation
        states = []
        for total in range(cap + 1):
            for bars in combinations_with_replacement(range(n), total):
                occ = [0] * n
                for m in bars:
                    occ[m] += 1
                states.append(tuple(occ))
        return states


def build_dgamma(blocks: QuadraticBlocks, trunc: FockTruncation,
                 dimension_cap: int = 20000) -> sp.csr_matrix:
    """Sparse matrix of the quadratic-plus-linear Hamiltonian on the basis."""
    if trunc.n_modes != blocks.n_modes:
        raise InvalidInputError("truncation mode count does not match blocks")
    dim = trunc.dimension
    if dim > dimension_cap:
        raise InvalidInputError(
            f"truncated dimension {dim} exceeds the cap {dimension_cap}"
        )
    n = blocks.n_modes
    h = blocks.a + blocks.d + 2.0 * blocks.b
    b = blocks.b
    y = blocks.y
    const = float(np.trace(blocks.d + blocks.b))
    states = trunc.basis()
    index = {s: ix for ix, s in enumerate(states)}
    rows, cols, vals = [], [], []

    def put(bra, col, val):
        ix = index.get(bra)
        if ix is not None and val != 0.0:
            rows.append(ix)
            cols.append(col)
            vals.append(val)

    for col, occ in enumerate(states):
        put(occ, col, const)
        for i in range(n):
            ni = occ[i]
            # number / hopping terms h_ij a*_i a_j
            if h[i, i] != 0.0 and ni:
                put(occ, col, h[i, i] * ni)
            for j in range(n):
                if j == i or occ[j] == 0 or h[i, j] == 0.0:
                    continue
                tgt = list(occ)
                tgt[j] -= 1
                amp = np.sqrt(occ[j] * (tgt[i] + 1))
                tgt[i] += 1
                put(tuple(tgt), col, h[i, j] * amp)
            # linear terms 2 y_i (a*_i + a_i)
            if y[i] != 0.0:
                up = list(occ)
                up[i] += 1
                put(tuple(up), col, 2.0 * y[i] * np.sqrt(ni + 1))
                if ni:
                    dn = list(occ)
                    dn[i] -= 1
                    put(tuple(dn), col, 2.0 * y[i] * np.sqrt(ni))
        # pairing terms b_ij (a*_i a*_j + a_i a_j)
        for i in range(n):
            for j in range(n):
                if b[i, j] == 0.0:
                    continue
                up = list(occ)
                amp = np.sqrt(up[j] + 1)
                up[j] += 1
                amp *= np.sqrt(up[i] + 1)
                up[i] += 1
                put(tuple(up), col, b[i, j] * amp)
                if occ[i] and occ[j] and not (i == j and occ[i] < 2):
                    dn = list(occ)
                    amp = np.sqrt(dn[j])
                    dn[j] -= 1
                    amp *= np.sqrt(dn[i])
                    dn[i] -= 1
                    put(tuple(dn), col, b[i, j] * amp)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    asym = abs(mat - mat.T)
    if asym.nnz and asym.max() > 1e-12 * max(1.0, abs(mat).max()):
        raise NumericalFailureError("assembled Fock matrix is not symmetric")
    return mat


def ground_energy_bruteforce(matrix) -> float:
    """Smallest eigenvalue of the truncated Hamiltonian."""
    if sp.issparse(matrix):
        dim = matrix.shape[0]
        if dim <= 1500:
            return float(np.linalg.eigvalsh(matrix.toarray())[0])
        v0 = np.full(dim, 1.0 / np.sqrt(dim))
        try:
            val = eigsh(matrix, k=1, which="SA", v0=v0, maxiter=10000)[0][0]
        except Exception as exc:
            raise NumericalFailureError(f"sparse eigensolver failed: {exc}")
        return float(val)
    return float(np.linalg.eigvalsh(np.asarray(matrix))[0])


def ground_energy_over_truncations(blocks: QuadraticBlocks, caps,
                                   dimension_cap: int = 20000):
    """Brute-force ground energies over a ladder of occupation cutoffs."""
    out = []
    for cap in caps:
        trunc = FockTruncation(blocks.n_modes, cap)
        out.append(ground_energy_bruteforce(build_dgamma(blocks, trunc, dimension_cap)))
    return np.asarray(out)


def bogolubov_ground_formula(a, b, d) -> float:
    """Ground energy 1/2 Tr[(sqrt(a+d)(a+d+4b) sqrt(a+d))^(1/2) - a + d]."""
    a = _check_sym_psd(a, "a")
    b = _check_sym_psd(b, "b")
    d = _check_sym_psd(d, "d")
    if float(np.linalg.eigvalsh(a)[0]) <= 0.0:
        raise InvalidInputError("a must be strictly positive definite")
    m = sqrtm_psd(a + d)
    inner = m @ (a + d + 4.0 * b) @ m
    s = sqrtm_psd(0.5 * (inner + inner.T))
    return 0.5 * float(np.trace(s) - np.trace(a) + np.trace(d))


def weyl_shift(blocks: QuadraticBlocks):
    """Displacement eta with (1/2)(a+d+4b) eta = y and the induced energy shift.

    The exact relation is E0(H[T, y]) = E0(H[T, 0]) - <eta, (a+d+4b) eta>.
    """
    folded = blocks.folded()
    try:
        chol = np.linalg.cholesky(folded)
    except np.linalg.LinAlgError:
        raise NumericalFailureError("folded operator a + d + 4b is singular")
    eta = 2.0 * np.linalg.solve(folded, blocks.y)
    del chol
    shift = float(eta @ (folded @ eta))
    return eta, shift


def contraction_bound_check(kappa, delta: float) -> float:
    """Spectral norm of kappa (delta^2 + kappa^T kappa)^(-1) kappa^T; must be <= 1."""
    if delta <= 0.0:
        raise InvalidInputError("delta must be positive")
    kappa = np.asarray(kappa, dtype=float)
    if kappa.ndim != 2:
        raise InvalidInputError("kappa must be a matrix")
    inner = delta**2 * np.eye(kappa.shape[1]) + kappa.T @ kappa
    mat = kappa @ np.linalg.solve(inner, kappa.T)
    norm = float(np.linalg.norm(0.5 * (mat + mat.T), 2))
    if norm > 1.0 + 1e-12:
        raise PropertyViolationError(
            f"contraction bound violated: norm {norm!r} > 1 + 1e-12"
        )
    return norm


def v_y_roundtrip_check(v):
    """Sandwich Tr[v^2] <= Tr[(y-1)^2] <= 4 (1 + 2||v||)^2 Tr[v^2] with y from v.

    y^(1/2) = v + sqrt(1 + v^2) inverts v = (y^(1/2) - y^(-1/2))/2.
    """
    v = _check_sym_psd(v, "v")
    eig, vec = np.linalg.eigh(v)
    y_eigs = (eig + np.sqrt(1.0 + eig**2)) ** 2
    tr_v2 = float(np.sum(eig**2))
    tr_ym1 = float(np.sum((y_eigs - 1.0) ** 2))
    vnorm = float(np.max(np.abs(eig))) if eig.size else 0.0
    upper = 4.0 * (1.0 + 2.0 * vnorm) ** 2 * tr_v2
    slack = 1e-10 * max(1.0, tr_ym1)
    if not (tr_v2 <= tr_ym1 + slack and tr_ym1 <= upper + slack):
        raise PropertyViolationError(
            f"roundtrip sandwich violated: {tr_v2!r} <= {tr_ym1!r} <= {upper!r}"
        )
    return tr_v2, tr_ym1, upper


def theta_embedding(k_diag, theta, w=None) -> QuadraticBlocks:
    """Blocks of the photon-sector Hamiltonian for a finite interaction matrix.

    a = 2K, b = K^(-1/2) Theta K^(-1/2), d = 0, and optionally
    y = K^(-1/2) Phi^T w with Phi any factor of Theta = Phi^T Phi.
    """
    k = np.asarray(k_diag, dtype=float).ravel()
    if np.any(k <= 0.0):
        raise InvalidInputError("mode energies must be positive")
    theta = _check_sym_psd(theta, "theta")
    inv_sqrt_k = 1.0 / np.sqrt(k)
    b = inv_sqrt_k[:, None] * theta * inv_sqrt_k[None, :]
    n = k.size
    if w is None:
        y = np.zeros(n)
    else:
        w = np.asarray(w, dtype=float).ravel()
        phi = sqrtm_psd(theta)
        if w.shape != (n,):
            raise InvalidInputError("w must have one entry per mode")
        y = inv_sqrt_k * (phi.T @ w)
    return QuadraticBlocks(a=2.0 * np.diag(k), b=b, d=np.zeros((n, n)), y=y)


def positivity_theorem_check(k_diag, theta, w, trunc: FockTruncation,
                             dimension_cap: int = 20000):
    """Finite-mode check that a complex phase cannot lower the total energy.

    Compares E_complex = (||w||^2 + E0(H[T, y]))/2 (phase configuration,
    y = K^(-1/2) Phi^T w) against E_modulus = E0(H[T, 0])/2.  The Weyl bound
    <eta, (q*Tq) eta> <= ||w||^2 makes E_complex >= E_modulus up to
    truncation error.
    """
    blocks_y = theta_embedding(k_diag, theta, w)
    blocks_0 = QuadraticBlocks(blocks_y.a, blocks_y.b, blocks_y.d,
                               np.zeros(blocks_y.n_modes))
    e_y = ground_energy_bruteforce(build_dgamma(blocks_y, trunc, dimension_cap))
    e_0 = ground_energy_bruteforce(build_dgamma(blocks_0, trunc, dimension_cap))
    w = np.asarray(w, dtype=float).ravel()
    e_complex = 0.5 * float(w @ w) + 0.5 * e_y
    e_modulus = 0.5 * e_0
    return e_complex, e_modulus


# ---------------------------------------------------------------------------
# Bogolubov pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BogolubovPair:
    """Coefficients (u, v) of a homogeneous Bogolubov transformation.

    With J the identity on the real mode basis the defining relations are
    u^T u - v^T v = 1 with v^T u and u v^T symmetric.
    """

    u: np.ndarray
    v: np.ndarray

    def block_matrix(self) -> np.ndarray:
        return np.block([[self.u, self.v], [self.v, self.u]])


def symplectic_defect(pair: BogolubovPair) -> float:
    """Max violation of B* S B = S and the symmetry relations."""
    u, v = pair.u, pair.v
    n = u.shape[0]
    d1 = np.max(np.abs(u.T @ u - v.T @ v - np.eye(n)))
    d2 = np.max(np.abs(v.T @ u - u.T @ v))
    d3 = np.max(np.abs(u @ v.T - v @ u.T))
    s = np.kron(np.diag([1.0, -1.0]), np.eye(n))
    bmat = pair.block_matrix()
    d4 = np.max(np.abs(bmat.T @ s @ bmat - s))
    return float(max(d1, d2, d3, d4))


def random_bogolubov(rng, n: int, strength: float = 0.7) -> BogolubovPair:
    """Random pair u = O1 cosh(Xi) O2^T, v = O1 sinh(Xi) O2^T."""
    def haar_orthogonal():
        q, r = np.linalg.qr(rng.standard_normal((n, n)))
        return q * np.sign(np.diag(r))[None, :]

    o1, o2 = haar_orthogonal(), haar_orthogonal()
    xi = rng.uniform(0.0, strength, size=n)
    u = (o1 * np.cosh(xi)[None, :]) @ o2.T
    v = (o1 * np.sinh(xi)[None, :]) @ o2.T
    return BogolubovPair(u, v)


def vacuum_expectation(pair: BogolubovPair, blocks: QuadraticBlocks) -> float:
    """<Omega| U_B H[T,0] U_B^* |Omega> = Tr[a v^T v + d u^T u] + 2 Tr[b v^T u]."""
    u, v = pair.u, pair.v
    return float(np.trace(blocks.a @ (v.T @ v)) + np.trace(blocks.d @ (u.T @ u))
                 + 2.0 * np.trace(blocks.b @ (v.T @ u)))


def gram_functional(y, a, b, d) -> float:
    """G(y) = Tr[m^2 y + (m^2 + 4b) y^(-1) + 2(d - a)], m^2 = a + d."""
    m2 = a + d
    y = np.asarray(y, dtype=float)
    return float(np.trace(m2 @ y) + np.trace((m2 + 4.0 * b) @ np.linalg.inv(y))
                 + 2.0 * np.trace(d - a))


def y_star(a, b, d) -> np.ndarray:
    """Stationary point m^(-1) (m (m^2+4b) m)^(1/2) m^(-1) of the functional G."""
    m = sqrtm_psd(a + d)
    m_inv = np.linalg.inv(m)
    inner = sqrtm_psd(m @ (a + d + 4.0 * b) @ m)
    return m_inv @ inner @ m_inv


def optimal_pair(a, b, d) -> BogolubovPair:
    """Minimizing Bogolubov pair built from y_*: u, v = (y^(1/2) +/- y^(-1/2))/2."""
    ys = y_star(a, b, d)
    eig, vec = np.linalg.eigh(0.5 * (ys + ys.T))
    eig = np.maximum(eig, 1.0)  # y_* >= 1 up to rounding
    sq = np.sqrt(eig)
    u = (vec * (0.5 * (sq + 1.0 / sq))[None, :]) @ vec.T
    v = (vec * (0.5 * (sq - 1.0 / sq))[None, :]) @ vec.T
    return BogolubovPair(u, v)
