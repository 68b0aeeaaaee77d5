"""Momentum-shell quadrature and the transverse interaction operator.

The photon momentum shell sigma <= |k| < Lambda is discretized by a product
rule: Gauss-Legendre in the radius (carrying the r^2 volume weight) times a
rotationally exact spherical rule (Gauss-Legendre in cos(theta) times a
uniform azimuthal grid).  Each node carries an orthonormal transverse frame
(e1, e2) perpendicular to k, so operators act on 2 polarization dofs per node
instead of 3 ambient components.

The interaction operator has the kernel form

    Theta[(i,a),(j,b)] = alpha (2 pi)^(-3/2) rho_hat(|k_i - k_j|)
                         sqrt(w_i w_j) (E_i^T E_j)_{ab},   rho = phi^2,

with rho_hat the radial Fourier transform of the pointwise-squared profile.
rho_hat is evaluated in closed form per grid cell (a Filon-type rule, exact
for the piecewise-linear profile), so the assembled matrix inherits the
positive-semidefinite Gram structure of the continuum operator up to
rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailureError
from .functional import RadialProfile, eval_norms

__all__ = [
    "ANGULAR_CATALOG",
    "ShellQuadrature",
    "ShellOperator",
    "ThetaAssembler",
    "build_shell",
    "transverse_frame",
    "radial_fourier",
    "density_fourier",
    "assemble_theta",
    "main_term_operator",
    "rotate_shell",
    "trace_convention_factor",
]

# Supported angular orders: order p integrates spherical harmonics up to
# degree p exactly with (p+1)/2 Gauss nodes in cos(theta) and p+1 azimuths.
ANGULAR_CATALOG = {p: ((p + 1) // 2, p + 1) for p in (5, 7, 9, 11, 13, 15, 17, 19, 23, 29, 35)}

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ShellQuadrature:
    """Product quadrature of the shell with per-node transverse frames."""

    nodes: np.ndarray      # (N, 3)
    weights: np.ndarray    # (N,) volume measure d^3k
    frames: np.ndarray     # (N, 3, 2) orthonormal pairs perpendicular to k
    sigma: float
    lam: float
    n_radial: int
    n_angular: int

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def volume(self) -> float:
        return float(np.sum(self.weights))

    @property
    def k_norms(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    @property
    def k_diag(self) -> np.ndarray:
        """|k| per polarization dof (each node carries two)."""
        return np.repeat(self.k_norms, 2)


@dataclass(frozen=True)
class ShellOperator:
    """Symmetric operator on the weighted polarization-coefficient space."""

    matrix: np.ndarray
    k_diag: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def scaled(self, factor: float) -> "ShellOperator":
        return ShellOperator(self.matrix * factor, self.k_diag)


def transverse_frame(khat: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal pair perpendicular to khat.

    e1 = normalize(z x khat), with an x-axis fallback when khat is parallel
    to z; e2 = khat x e1.
    """
    khat = np.asarray(khat, dtype=float)
    e1 = np.cross([0.0, 0.0, 1.0], khat)
    n1 = np.linalg.norm(e1)
    if n1 < 1e-12:
        e1 = np.cross([1.0, 0.0, 0.0], khat)
        n1 = np.linalg.norm(e1)
    e1 = e1 / n1
    e2 = np.cross(khat, e1)
    e2 = e2 / np.linalg.norm(e2)
    return np.stack([e1, e2], axis=1)


def _sphere_rule(order: int):
    if order not in ANGULAR_CATALOG:
        raise InvalidInputError(
            f"unsupported angular order {order}; supported: {sorted(ANGULAR_CATALOG)}"
        )
    n_mu, n_phi = ANGULAR_CATALOG[order]
    mu, wmu = np.polynomial.legendre.leggauss(n_mu)
    phi = _TWO_PI * np.arange(n_phi) / n_phi
    sin_th = np.sqrt(1.0 - mu**2)
    dirs = np.empty((n_mu * n_phi, 3))
    dirs[:, 0] = (sin_th[:, None] * np.cos(phi)[None, :]).ravel()
    dirs[:, 1] = (sin_th[:, None] * np.sin(phi)[None, :]).ravel()
    dirs[:, 2] = np.repeat(mu, n_phi)
    w = np.repeat(wmu, n_phi) * (_TWO_PI / n_phi)  # sums to 4 pi
    return dirs, w


def build_shell(sigma: float, lam: float, n_radial: int = 10,
                n_angular: int = 11) -> ShellQuadrature:
    """Product quadrature of the momentum shell sigma <= |k| < Lambda.

    sigma = 0 is allowed (ball).  The radial Gauss rule carries the r^2
    weight, so the total weight reproduces the shell volume exactly.
    """
    if not (0.0 <= sigma < lam):
        raise InvalidInputError("need 0 <= sigma < lambda")
    if n_radial < 4:
        raise InvalidInputError("n_radial must be at least 4")
    x, wx = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * (lam + sigma) + 0.5 * (lam - sigma) * x
    wr = 0.5 * (lam - sigma) * wx * r * r
    dirs, ws = _sphere_rule(n_angular)
    nodes = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    weights = (wr[:, None] * ws[None, :]).ravel()
    frames_sphere = np.stack([transverse_frame(d) for d in dirs])
    frames = np.broadcast_to(
        frames_sphere[None, :, :, :], (n_radial,) + frames_sphere.shape
    ).reshape(-1, 3, 2)
    return ShellQuadrature(nodes, weights, frames.copy(), float(sigma), float(lam),
                           n_radial, n_angular)


def rotate_shell(shell: ShellQuadrature, rot: np.ndarray) -> ShellQuadrature:
    """Rigidly rotate all nodes and rebuild frames by the deterministic rule."""
    nodes = shell.nodes @ np.asarray(rot).T
    k = np.linalg.norm(nodes, axis=1)
    frames = np.stack([transverse_frame(n / nk) for n, nk in zip(nodes, k)])
    return ShellQuadrature(nodes, shell.weights, frames, shell.sigma, shell.lam,
                           shell.n_radial, shell.n_angular)


# ---------------------------------------------------------------------------
# Radial Fourier transforms (Filon-type, exact per grid cell)
# ---------------------------------------------------------------------------

def _osc_kernels(s: np.ndarray):
    """Stable evaluation of the four oscillatory moment kernels.

    sinc(s), g(s) = (sin s - s cos s)/s^2, w(s) = ((s^2-2) sin s + 2 s cos s)/s^3,
    v(s) = (3(s^2-2) sin s - s(s^2-6) cos s)/s^4, with series branches for
    small s.
    """
    small = s < 0.35
    s_safe = np.where(small, 1.0, s)
    sin, cos = np.sin(s_safe), np.cos(s_safe)
    s2 = s * s
    sinc_c = sin / s_safe
    g_c = (sin - s_safe * cos) / s_safe**2
    w_c = ((s_safe**2 - 2) * sin + 2 * s_safe * cos) / s_safe**3
    v_c = (3 * (s_safe**2 - 2) * sin - s_safe * (s_safe**2 - 6) * cos) / s_safe**4
    sinc_s = 1 - s2 / 6 * (1 - s2 / 20 * (1 - s2 / 42 * (1 - s2 / 72)))
    g_s = s * (1 / 3 - s2 / 30 + s2 * s2 / 840 - s2 * s2 * s2 / 45360)
    w_s = 1 / 3 - s2 / 10 + s2 * s2 / 168 - s2 * s2 * s2 / 6480
    v_s = s * (1 / 5 - s2 / 42 + s2 * s2 / 1080 - s2 * s2 * s2 / 55440)
    return (np.where(small, sinc_s, sinc_c), np.where(small, g_s, g_c),
            np.where(small, w_s, w_c), np.where(small, v_s, v_c))


class CellSinTransform:
    """Exact sin-moments of per-cell cubics against a fixed set of q points.

    For F given on cell [r_i, r_{i+1}] in local coordinates u = r - c around
    the cell midpoint as p0 + p1 u + p2 u^2 + p3 u^3, computes
    sum_cells int F(r) sin(q r) dr for every q.  The four moment matrices
    depend only on (grid, q), so they are built once and each new F costs
    four matvecs.
    """

    def __init__(self, grid: np.ndarray, q: np.ndarray):
        h = np.diff(grid)
        c = 0.5 * (grid[:-1] + grid[1:])
        qc = q[:, None] * c[None, :]
        s = 0.5 * q[:, None] * h[None, :]
        sinc_k, g_k, w_k, v_k = _osc_kernels(s)
        sin_qc, cos_qc = np.sin(qc), np.cos(qc)
        self.a0 = sin_qc * (h[None, :] * sinc_k)
        self.a1 = cos_qc * (h[None, :] ** 2 / 2.0 * g_k)
        self.a2 = sin_qc * (h[None, :] ** 3 / 4.0 * w_k)
        self.a3 = cos_qc * (h[None, :] ** 4 / 8.0 * v_k)

    def apply(self, p0, p1, p2, p3):
        return self.a0 @ p0 + self.a1 @ p1 + self.a2 @ p2 + self.a3 @ p3


def _sin_moment_sum(grid, p0, p1, p2, p3, q):
    """One-shot version of CellSinTransform for throwaway q sets."""
    out = np.empty(q.shape, dtype=float)
    block = max(1, int(4e6 / max(grid.size - 1, 1)))
    for lo in range(0, q.size, block):
        xf = CellSinTransform(grid, q[lo:lo + block])
        out[lo:lo + block] = xf.apply(p0, p1, p2, p3)
    return out


def _profile_cell_polys(profile: RadialProfile, squared: bool):
    """Per-cell polynomial coefficients of F(r) = r * phi(r) (or r * phi^2)."""
    r, vals = profile.grid, profile.values
    h = np.diff(r)
    c = 0.5 * (r[:-1] + r[1:])
    slope = np.diff(vals) / h
    phi_c = vals[:-1] + slope * (c - r[:-1])
    if not squared:
        p0 = c * phi_c
        p1 = phi_c + c * slope
        p2 = slope
        p3 = np.zeros_like(c)
    else:
        rho_c = phi_c * phi_c
        p0 = c * rho_c
        p1 = rho_c + 2.0 * c * phi_c * slope
        p2 = 2.0 * phi_c * slope + c * slope * slope
        p3 = slope * slope
    return p0, p1, p2, p3


def _radial_transform(profile: RadialProfile, squared: bool):
    """Callable q -> (2 pi)^(-3/2) (4 pi / q) int r sin(q r) f(r) dr.

    f = phi or phi^2.  Real-valued, continuous at q = 0, exact for the
    piecewise representation of f.
    """
    p0, p1, p2, p3 = _profile_cell_polys(profile, squared)
    grid = profile.grid
    # q -> 0 limit and its curvature, from the plain moments.
    r2w = _moment(grid, profile.values, squared, power=2)
    r4w = _moment(grid, profile.values, squared, power=4)
    pref = (_TWO_PI) ** -1.5 * 4.0 * np.pi

    def fhat(q):
        q_arr = np.atleast_1d(np.asarray(q, dtype=float))
        flat = np.abs(q_arr).ravel()
        tiny = flat < 1e-8
        safe = np.where(tiny, 1.0, flat)
        vals = _sin_moment_sum(grid, p0, p1, p2, p3, safe) / safe
        vals = np.where(tiny, r2w - flat**2 * r4w / 6.0, vals)
        out = (pref * vals).reshape(q_arr.shape)
        return out if np.ndim(q) else float(out[0])

    return fhat


def _moment(grid, values, squared, power):
    """int r^power f(r) dr with f = phi or phi^2, exact per cell (Gauss-3/4)."""
    npts = 4 if squared or power > 2 else 3
    x, w = np.polynomial.legendre.leggauss(npts)
    h = np.diff(grid)
    mid = 0.5 * (grid[:-1] + grid[1:])
    xx = mid[:, None] + 0.5 * h[:, None] * x[None, :]
    ww = 0.5 * h[:, None] * w[None, :]
    slope = np.diff(values) / h
    f = values[:-1, None] + slope[:, None] * (xx - grid[:-1, None])
    if squared:
        f = f * f
    return float(np.sum(ww * xx**power * f))


def radial_fourier(profile: RadialProfile):
    """Radial Fourier transform phi_hat(q), unitary normalization."""
    return _radial_transform(profile, squared=False)


def density_fourier(profile: RadialProfile):
    """Fourier transform of the pointwise-squared profile rho = phi^2."""
    return _radial_transform(profile, squared=True)


# ---------------------------------------------------------------------------
# Operator assembly
# ---------------------------------------------------------------------------

class ThetaAssembler:
    """Shell-operator assembler bound to a fixed (shell, profile grid) pair.

    All q-dependent moment matrices are precomputed, so assembling the
    operator for a new profile on the same grid costs four matvecs plus the
    block scatter.  Exploits the product structure of the quadrature: only
    radial pairs (i <= j) crossed with the unique direction cosines need
    distinct kernel evaluations.
    """

    def __init__(self, shell: ShellQuadrature, grid: np.ndarray):
        self.shell = shell
        self.grid = np.asarray(grid, dtype=float)
        n_r = shell.n_radial
        n_sph = shell.n_nodes // n_r
        self.n_r, self.n_sph = n_r, n_sph
        dirs = shell.nodes[:n_sph] / np.linalg.norm(shell.nodes[:n_sph], axis=1)[:, None]
        self.radii = np.linalg.norm(shell.nodes[::n_sph], axis=1)
        cosmat = np.clip(dirs @ dirs.T, -1.0, 1.0)
        c_unique, inv = np.unique(np.round(cosmat, 12), return_inverse=True)
        self.inv = inv.reshape(n_sph, n_sph)
        self.n_cos = c_unique.size

        iu, ju = np.triu_indices(n_r)
        self.iu, self.ju = iu, ju
        ri, rj = self.radii[iu][:, None], self.radii[ju][:, None]
        q2 = ri * ri + rj * rj - 2.0 * ri * rj * c_unique[None, :]
        self.q_flat = np.sqrt(np.maximum(q2, 0.0)).ravel()
        self.tiny = self.q_flat < 1e-8
        self.q_safe = np.where(self.tiny, 1.0, self.q_flat)
        self.transform = CellSinTransform(self.grid, self.q_safe)

        frames = shell.frames[:n_sph]
        gram = np.einsum("aki,bkj->abij", frames, frames)
        self.gram_blocks = gram.transpose(0, 2, 1, 3).copy()  # (S, 2, S, 2)
        self.sqrt_w = np.sqrt(np.repeat(shell.weights, 2))

    def _fhat_table(self, profile: RadialProfile, squared: bool):
        if profile.grid.shape != self.grid.shape or not np.array_equal(profile.grid, self.grid):
            raise InvalidInputError("profile grid does not match the assembler grid")
        p0, p1, p2, p3 = _profile_cell_polys(profile, squared)
        vals = self.transform.apply(p0, p1, p2, p3) / self.q_safe
        if np.any(self.tiny):
            r2w = _moment(self.grid, profile.values, squared, power=2)
            r4w = _moment(self.grid, profile.values, squared, power=4)
            limit = r2w - self.q_flat[self.tiny] ** 2 * r4w / 6.0
            vals = vals.copy()
            vals[self.tiny] = limit
        pref = (_TWO_PI) ** -1.5 * 4.0 * np.pi
        table = np.zeros((self.n_r, self.n_r, self.n_cos))
        table[self.iu, self.ju] = (pref * vals).reshape(-1, self.n_cos)
        table[self.ju, self.iu] = table[self.iu, self.ju]
        return table

    def operator_matrix(self, profile: RadialProfile, prefactor: float,
                        squared: bool) -> np.ndarray:
        f_table = self._fhat_table(profile, squared)
        n_r, n_sph = self.n_r, self.n_sph
        n = self.shell.n_dofs
        mat = np.empty((n_r, n_sph, 2, n_r, n_sph, 2))
        for i in range(n_r):
            for j in range(i, n_r):
                fij = f_table[i, j, self.inv]  # (S, S)
                block = fij[:, None, :, None] * self.gram_blocks
                mat[i, :, :, j, :, :] = block
                if j > i:
                    mat[j, :, :, i, :, :] = block.transpose(2, 3, 0, 1)
        mat = mat.reshape(n, n)
        mat *= prefactor
        mat *= self.sqrt_w[:, None]
        mat *= self.sqrt_w[None, :]
        return 0.5 * (mat + mat.T)

    def theta(self, profile: RadialProfile, alpha: float, validate: bool = True,
              psd_tol: float = 1e-8) -> ShellOperator:
        if alpha < 0.0:
            raise InvalidInputError("alpha must be nonnegative")
        mat = self.operator_matrix(profile, alpha * (_TWO_PI) ** -1.5, squared=True)
        if validate:
            _validate_psd(mat, psd_tol, "interaction operator")
        return ShellOperator(mat, self.shell.k_diag)

    def main_term(self, profile: RadialProfile, validate: bool = True,
                  psd_tol: float = 1e-8) -> ShellOperator:
        mat = self.operator_matrix(profile, (_TWO_PI) ** -1.5, squared=False)
        if validate:
            _validate_psd(mat, psd_tol, "main-term operator")
        return ShellOperator(mat, self.shell.k_diag)


def _validate_psd(mat: np.ndarray, psd_tol: float, what: str) -> float:
    eigs = np.linalg.eigvalsh(mat)
    scale = max(float(eigs[-1]), abs(float(eigs[0])), 1e-300)
    if eigs[0] < -psd_tol * scale:
        raise NumericalFailureError(
            f"{what} lost positivity: min eigenvalue {eigs[0]:.3e} "
            f"vs scale {scale:.3e} (tol {psd_tol:.1e})"
        )
    return float(eigs[0])


def assemble_theta(profile: RadialProfile, alpha: float, shell: ShellQuadrature,
                   validate: bool = True, psd_tol: float = 1e-8) -> ShellOperator:
    """Interaction operator alpha (2 pi)^(-3/2) rho_hat(|k-k'|) E^T E on the shell.

    The kernel is the Gram form of the windowed multiplication by phi^2, so
    the matrix is PSD up to rounding; a violation beyond psd_tol (relative)
    raises NumericalFailureError.
    """
    return ThetaAssembler(shell, profile.grid).theta(profile, alpha, validate, psd_tol)


def main_term_operator(profile: RadialProfile, shell: ShellQuadrature,
                       validate: bool = True, psd_tol: float = 1e-8) -> ShellOperator:
    """Windowed multiplication by phi itself (no alpha): the main-term operator."""
    return ThetaAssembler(shell, profile.grid).main_term(profile, validate, psd_tol)


def trace_convention_factor(profile: RadialProfile, shell: ShellQuadrature) -> float:
    """Measured ratio of Tr[main-term operator] to (8 pi/3)(Lambda^3-sigma^3)||phi||_1.

    Adjudicates between the two trace normalizations found in the
    literature for this operator: the ratio comes out near 1 under one
    convention and near (2 pi)^-3 under the other.
    """
    op = main_term_operator(profile, shell, validate=False)
    l1 = eval_norms(profile)[0]
    denom = (8.0 * np.pi / 3.0) * (shell.lam**3 - shell.sigma**3) * l1
    return op.trace() / denom
