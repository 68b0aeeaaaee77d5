"""Auxiliary classical functional on radial profiles.

Everything here lives on nonnegative radial profiles phi(r) represented as
piecewise-linear functions on a grid with r_0 = 0.  The functional

    F_beta(phi) = 1/2 ||grad phi||_2^2 + beta ||phi||_1

is minimized over the set {phi >= 0, ||phi||_2 = 1}.  The minimizer has a
closed form built from the zeroth spherical Bessel function j0: it solves the
inhomogeneous Helmholtz equation (-Lap - mu^2) phi + beta = 0 on its support
ball, meets the boundary with C^1 contact, and its support radius scales as
beta^(-2/7).

All quadrature is exact for the piecewise-linear object: the three norms are
polynomial integrals per cell (degree <= 4), evaluated with 3-point
Gauss-Legendre, and the gradient term is analytic.  That makes the dilation
identity

    F_beta(phi_lam) = 1/2 lam^2 grad2(phi) + beta lam^(-3/2) l1(phi)

hold to machine precision on dilated grids, which in turn pins the
beta^(4/7) scaling of the minimum exactly at the discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded
from scipy.optimize import brentq

from .errors import InvalidInputError, NumericalFailureError

__all__ = [
    "RadialProfile",
    "BesselMinimizer",
    "MinimizeFConfig",
    "MinimizeFResult",
    "eval_norms",
    "eval_F",
    "bessel_minimizer",
    "bessel_support_radius",
    "minimize_F",
    "restricted_F",
    "dilate_profile",
    "gaussian_profile",
]

# 3-point Gauss-Legendre on [-1, 1]: exact for polynomials of degree <= 5,
# which covers the r^2 * phi^2 integrand (degree 4 per cell).
_GL3_X = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GL3_W = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class RadialProfile:
    """Nonnegative radial function, piecewise linear on a grid with r_0 = 0.

    ``values[i]`` is phi(grid[i]); phi vanishes for r >= support_radius.
    Nodes at or beyond the support radius are forced to zero at construction
    (an error if they carry non-negligible mass).
    """

    grid: np.ndarray
    values: np.ndarray
    support_radius: float
    normalized: bool = False
    normalization_tol: float = 1e-6

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise InvalidInputError("grid must be 1-D with at least 2 nodes")
        if grid[0] != 0.0:
            raise InvalidInputError("grid must start at r = 0")
        if not np.all(np.diff(grid) > 0.0):
            raise InvalidInputError("grid must be strictly increasing")
        if values.shape != grid.shape:
            raise InvalidInputError("values must match grid shape")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("values must be finite")
        if np.any(values < 0.0):
            raise InvalidInputError("profile values must be nonnegative")
        if not self.support_radius > 0.0:
            raise InvalidInputError("support radius must be positive")
        beyond = grid >= self.support_radius
        if np.any(beyond):
            scale = values.max() if values.size else 0.0
            if np.any(values[beyond] > 1e-8 * max(scale, 1.0)):
                raise InvalidInputError(
                    "profile carries mass at or beyond its support radius"
                )
            values = values.copy()
            values[beyond] = 0.0
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if self.normalized:
            l2 = eval_norms(self)[1]
            if abs(l2 - 1.0) >= self.normalization_tol:
                raise InvalidInputError(
                    f"profile flagged normalized but ||phi||_2 - 1 = {l2 - 1.0:.3e}"
                )

    def __call__(self, r):
        """Piecewise-linear evaluation; zero outside the support."""
        r = np.asarray(r, dtype=float)
        out = np.interp(r, self.grid, self.values, left=self.values[0], right=0.0)
        return np.where(r >= self.support_radius, 0.0, out)


def eval_norms(profile: RadialProfile):
    """Return (l1, l2, grad2) of a radial profile.

    l1 = 4 pi int r^2 phi dr, l2 = sqrt(4 pi int r^2 phi^2 dr),
    grad2 = 4 pi int r^2 phi'(r)^2 dr; all exact for the piecewise-linear
    interpolant.
    """
    r, v = profile.grid, profile.values
    h = np.diff(r)
    slope = np.diff(v) / h
    mid = 0.5 * (r[:-1] + r[1:])
    # Per-cell Gauss nodes (cells x 3) and the linear interpolant there.
    x = mid[:, None] + 0.5 * h[:, None] * _GL3_X[None, :]
    w = 0.5 * h[:, None] * _GL3_W[None, :]
    phi = v[:-1, None] + slope[:, None] * (x - r[:-1, None])
    x2 = x * x
    l1 = FOUR_PI * float(np.sum(w * x2 * phi))
    l2sq = FOUR_PI * float(np.sum(w * x2 * phi * phi))
    grad2 = FOUR_PI * float(np.sum(slope * slope * np.diff(r**3) / 3.0))
    return l1, np.sqrt(max(l2sq, 0.0)), grad2


def eval_F(profile: RadialProfile, beta: float) -> float:
    """Evaluate F_beta = 1/2 grad2 + beta l1; beta must be >= 0."""
    if beta < 0.0:
        raise InvalidInputError("beta must be nonnegative")
    l1, _, grad2 = eval_norms(profile)
    return 0.5 * grad2 + beta * l1


def dilate_profile(profile: RadialProfile, lam: float) -> RadialProfile:
    """Return phi_lam(r) = lam^(3/2) phi(lam r) on the pointwise-mapped grid."""
    if lam <= 0.0:
        raise InvalidInputError("dilation factor must be positive")
    return RadialProfile(
        grid=profile.grid / lam,
        values=profile.values * lam**1.5,
        support_radius=profile.support_radius / lam,
        normalized=profile.normalized,
    )


def gaussian_profile(width: float = 1.0, r_max: float = 10.0, m: int = 4000,
                     normalized: bool = True) -> RadialProfile:
    """L2-normalized Gaussian bump, handy as a smooth reference profile.

    With normalized=True the discrete samples are rescaled so the trial
    object itself has unit norm (the analytic normalization is only exact
    up to the sampling error).
    """
    grid = np.linspace(0.0, r_max, m + 1)
    values = np.exp(-0.5 * (grid / width) ** 2) * (np.pi * width**2) ** -0.75
    if not normalized:
        return RadialProfile(grid, values, support_radius=r_max)
    raw = RadialProfile(grid, values, support_radius=r_max)
    return RadialProfile(grid, values / eval_norms(raw)[1], support_radius=r_max,
                         normalized=True)


# ---------------------------------------------------------------------------
# Closed-form minimizer
# ---------------------------------------------------------------------------

def _j0(x):
    return np.sinc(np.asarray(x) / np.pi)


def _first_j0_stationary_point() -> float:
    """First positive root of j0'(x) = 0, i.e. of tan x = x, in (pi, 3 pi/2)."""
    f = lambda x: x * np.cos(x) - np.sin(x)
    try:
        return brentq(f, np.pi + 1e-12, 1.5 * np.pi - 1e-12, xtol=1e-14, rtol=8.9e-16)
    except ValueError as exc:  # pragma: no cover - bracket is analytic
        raise NumericalFailureError(f"root bracketing failed: {exc}")


def _shape_l2_integral(x1: float, n: int = 200) -> float:
    """int_0^x1 u^2 (1 - j0(u)/j0(x1))^2 du by fixed Gauss-Legendre."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    u = 0.5 * x1 * (nodes + 1.0)
    w = 0.5 * x1 * weights
    shape = 1.0 - _j0(u) / _j0(x1)
    return float(np.sum(w * u * u * shape * shape))


@dataclass(frozen=True)
class BesselMinimizer:
    """Closed-form minimizer phi(r) = C (1 - j0(mu r)/j0(x1)) on [0, R].

    R = x1/mu where x1 is the first positive stationary point of j0, so both
    phi(R) = 0 and phi'(R) = 0 hold; C = beta/mu^2 makes the interior
    Helmholtz equation (-Lap - mu^2) phi + beta = 0 exact; mu is fixed by
    ||phi||_2 = 1.
    """

    beta: float
    mu: float
    amplitude: float
    support_radius: float
    x1: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        vals = self.amplitude * (1.0 - _j0(self.mu * r) / _j0(self.x1))
        return np.where(r >= self.support_radius, 0.0, np.maximum(vals, 0.0))

    def profile(self, m: int = 6000) -> RadialProfile:
        """Sample onto a uniform grid; the samples are renormalized so the
        discrete trial object itself has unit L2 norm."""
        grid = np.linspace(0.0, self.support_radius, m + 1)
        values = self(grid)
        values[-1] = 0.0
        raw = RadialProfile(grid, values, support_radius=self.support_radius)
        values = values / eval_norms(raw)[1]
        return RadialProfile(grid, values, support_radius=self.support_radius,
                             normalized=True)

    def el_residual(self, n: int = 4000) -> float:
        """Sup-norm of (-Lap - mu^2) phi + beta on the interior (exact derivatives)."""
        r = np.linspace(self.support_radius / n, self.support_radius * (1 - 1.0 / n), n)
        x = self.mu * r
        sin, cos = np.sin(x), np.cos(x)
        j0p = cos / x - sin / x**2
        j0pp = -sin / x - 2 * cos / x**2 + 2 * sin / x**3
        c = -self.amplitude / _j0(self.x1)
        phi = self.amplitude + c * _j0(x)
        dphi = c * self.mu * j0p
        d2phi = c * self.mu**2 * j0pp
        residual = -(d2phi + 2.0 * dphi / r) - self.mu**2 * phi + self.beta
        return float(np.max(np.abs(residual)))


def bessel_minimizer(beta: float) -> BesselMinimizer:
    """Construct the closed-form minimizer of F_beta over normalized profiles."""
    if beta <= 0.0:
        raise InvalidInputError("beta must be positive")
    x1 = _first_j0_stationary_point()
    shape_int = _shape_l2_integral(x1)
    mu = (FOUR_PI * beta**2 * shape_int) ** (1.0 / 7.0)
    return BesselMinimizer(
        beta=beta,
        mu=mu,
        amplitude=beta / mu**2,
        support_radius=x1 / mu,
        x1=x1,
    )


def bessel_support_radius(beta: float) -> float:
    """Support radius R(beta) = x1/mu(beta) without building the full object."""
    return bessel_minimizer(beta).support_radius


# ---------------------------------------------------------------------------
# Grid minimization (projected gradient)
# ---------------------------------------------------------------------------

@dataclass
class MinimizeFConfig:
    m: int = 2000                     # number of cells
    support_cap: float | None = None  # default 3 beta^(-2/7)
    max_iter: int = 60000
    tol: float = 1e-11                # relative energy-change stop tolerance
    patience: int = 3                 # consecutive small changes required
    init_profile: RadialProfile | None = None


@dataclass
class MinimizeFResult:
    value: float
    profile: RadialProfile
    converged: bool
    n_iter: int
    energies: np.ndarray = field(repr=False)


def _fem_system(r: np.ndarray):
    """Assemble the 4 pi r^2-weighted PL mass/stiffness matrices and L1 vector.

    Returned as symmetric banded storage (2 x n): row 0 upper diagonal,
    row 1 main diagonal, matching scipy.linalg.solveh_banded.
    """
    n = r.size
    h = np.diff(r)
    mid = 0.5 * (r[:-1] + r[1:])
    x = mid[:, None] + 0.5 * h[:, None] * _GL3_X[None, :]
    w = FOUR_PI * 0.5 * h[:, None] * _GL3_W[None, :]
    t = (x - r[:-1, None]) / h[:, None]
    wx2 = w * x * x
    m00 = np.sum(wx2 * (1 - t) ** 2, axis=1)
    m01 = np.sum(wx2 * t * (1 - t), axis=1)
    m11 = np.sum(wx2 * t**2, axis=1)
    mass = np.zeros((2, n))
    mass[1, :-1] += m00
    mass[1, 1:] += m11
    mass[0, 1:] = m01
    kdiag = FOUR_PI * np.diff(r**3) / (3.0 * h * h)
    stiff = np.zeros((2, n))
    stiff[1, :-1] += kdiag
    stiff[1, 1:] += kdiag
    stiff[0, 1:] = -kdiag
    lvec = np.zeros(n)
    lvec[:-1] += np.sum(wx2 * (1 - t), axis=1)
    lvec[1:] += np.sum(wx2 * t, axis=1)
    return mass, stiff, lvec


def _banded_matvec(band, x):
    y = band[1] * x
    y[:-1] += band[0, 1:] * x[1:]
    y[1:] += band[0, 1:] * x[:-1]
    return y


def _project(v, mass, dirichlet_last: bool):
    """Clamp to >= 0 first, then renormalize in the discrete L2 norm."""
    v = np.maximum(v, 0.0)
    if dirichlet_last:
        v[-1] = 0.0
    nrm2 = float(v @ _banded_matvec(mass, v))
    if nrm2 <= 0.0:
        raise NumericalFailureError("projection hit the zero profile")
    return v / np.sqrt(nrm2)


def _kkt_residual(phi, grad, mass):
    """First-order optimality violation on {phi >= 0, ||phi||_M = 1}.

    Stationarity reads grad = lam * M phi + nu with nu >= 0 supported on the
    active set {phi_i = 0}; the violation is the part of the residual that no
    admissible multiplier can absorb.
    """
    lam = float(phi @ grad)
    resid = grad - lam * _banded_matvec(mass, phi)
    viol = np.where(phi > 0.0, resid, np.minimum(resid, 0.0))
    return float(np.max(np.abs(viol))) / (1.0 + float(np.max(np.abs(grad))))


def _pgd_minimize(r, beta, cfg: MinimizeFConfig):
    # Eliminate the Dirichlet node at r = r_max; phi there is identically 0.
    mass_full, stiff_full, lvec_full = _fem_system(r)
    mass, stiff, lvec = mass_full[:, :-1], stiff_full[:, :-1], lvec_full[:-1]
    if cfg.init_profile is not None:
        phi = np.maximum(cfg.init_profile(r[:-1]), 0.0)
    else:
        phi = np.maximum(1.0 - (r[:-1] / r[-1]) ** 2, 0.0)
    phi = _project(phi, mass, dirichlet_last=False)

    def energy(v):
        return 0.5 * float(v @ _banded_matvec(stiff, v)) + beta * float(lvec @ v)

    def sobolev_direction(g, v):
        # Precondition the tangential KKT residual in the shifted-H1 metric
        # (K + tau M), then project back onto the tangent space of the
        # normalization sphere.  The preconditioner acts on the free set
        # only (active rows/columns replaced by identity): smearing the
        # clamped components through the solve would break the descent
        # guarantee.
        lam = float(v @ g)
        resid = g - lam * _banded_matvec(mass, v)
        active = (v <= 0.0) & (resid > 0.0)
        resid[active] = 0.0
        tau = 2.0 * abs(lam) + beta ** (4.0 / 7.0)
        prec = stiff + tau * mass
        prec[1, active] = 1.0
        prec[0, active] = 0.0
        idx = np.flatnonzero(active)
        idx = idx[idx + 1 < prec.shape[1]]
        prec[0, idx + 1] = 0.0
        d = solveh_banded(prec, resid, lower=False)
        return d - float(v @ _banded_matvec(mass, d)) * v

    f_cur = energy(phi)
    energies = [f_cur]
    grad = _banded_matvec(stiff, phi) + beta * lvec
    step = 1.0
    small_streak = 0
    converged = False
    it = 0
    while it < cfg.max_iter:
        it += 1
        direction = sobolev_direction(grad, phi)
        accepted = False
        for _ in range(60):
            trial = _project(phi - step * direction, mass, dirichlet_last=False)
            f_trial = energy(trial)
            if f_trial <= f_cur:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = _kkt_residual(phi, grad, mass) < 1e4 * cfg.tol
            break
        step = min(step * 1.5, 1.0)
        rel_change = abs(f_cur - f_trial) / max(1.0, abs(f_trial))
        phi, f_cur = trial, f_trial
        grad = _banded_matvec(stiff, phi) + beta * lvec
        energies.append(f_cur)
        small_streak = small_streak + 1 if rel_change < cfg.tol else 0
        if small_streak >= cfg.patience:
            if _kkt_residual(phi, grad, mass) < 1e4 * cfg.tol:
                converged = True
                break
            small_streak = 0
    values = np.append(phi, 0.0)
    profile = RadialProfile(r, values, support_radius=r[-1], normalized=True)
    return MinimizeFResult(f_cur, profile, converged, it, np.asarray(energies))


def minimize_F(beta: float, cfg: MinimizeFConfig | None = None) -> MinimizeFResult:
    """Projected-gradient minimization of F_beta over {phi >= 0, ||phi||_2 = 1}.

    The returned value is the energy of a feasible grid profile, hence a
    certified upper bound on the discrete infimum; the energy log is
    monotone nonincreasing.  beta = 0 is rejected: the infimum 0 is not
    attained by any normalized profile.
    """
    if beta <= 0.0:
        raise InvalidInputError(
            "beta must be strictly positive: for beta = 0 the infimum is 0 "
            "and is not attained on the constraint set"
        )
    cfg = cfg or MinimizeFConfig()
    cap = cfg.support_cap if cfg.support_cap is not None else 3.0 * beta ** (-2.0 / 7.0)
    if cfg.m < 8:
        raise InvalidInputError("grid too coarse: need at least 8 cells")
    r = np.linspace(0.0, cap, cfg.m + 1)
    return _pgd_minimize(r, beta, cfg)


def restricted_F(beta: float, L: float, cfg: MinimizeFConfig | None = None) -> MinimizeFResult:
    """Minimize F_beta with the hard support constraint phi(r) = 0 for r >= L."""
    if beta <= 0.0:
        raise InvalidInputError("beta must be strictly positive")
    cfg = cfg or MinimizeFConfig()
    if cfg.m < 8:
        raise InvalidInputError("grid too coarse: need at least 8 cells")
    default_cap = 3.0 * beta ** (-2.0 / 7.0)
    if L < 2.0 * default_cap / cfg.m:
        raise InvalidInputError("support radius L smaller than 2 grid cells")
    r = np.linspace(0.0, L, cfg.m + 1)
    return _pgd_minimize(r, beta, cfg)
