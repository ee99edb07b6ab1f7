"""Manufactured problem builders, noise injection, and error metrics.

Forward/terminal validation cases use separable closed-form solutions whose
source terms follow from the product rule; the flux-identification cases
either sample closed-form fluxes and boundary data, or synthesize the
observations by solving the direct problem on a once-refined grid and
restricting (so the inversion never sees data produced by its own
discretization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cgm import InverseProblem, Observations
from .fracops import mittag_leffler
from .materials import Constant, PlasticityModel, RambergOsgood, Tabulated
from .mesh import (
    BoundaryFlux,
    BoundaryTrace,
    Edge,
    Field,
    Grid,
    restrict_to_edge,
    trace_norm,
)
from .solver import Direction, NonlinearProblem, PicardConfig, solve_nonlinear


@dataclass(frozen=True)
class NoiseSpec:
    """Relative Gaussian noise level and the generator seed."""

    gamma: float
    seed: int

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ValueError("noise level must be nonnegative")


@dataclass(frozen=True)
class ForwardExample:
    """A direct (or terminal-value) problem together with its exact solution."""

    problem: NonlinearProblem
    exact: Field


@dataclass(frozen=True)
class InverseExample:
    """A flux-identification problem: inputs, exact fluxes, clean observations."""

    problem: InverseProblem
    exact_flux: BoundaryFlux
    observations: Observations


EPSILON_BAR_CLEAN = 1.25e-7


def _meshed(grid: Grid):
    return np.meshgrid(grid.xs, grid.ys, indexing="ij")


def _flux(grid: Grid, f1: np.ndarray, f2: np.ndarray) -> BoundaryFlux:
    return BoundaryFlux(
        f1=BoundaryTrace(grid, Edge.GAMMA1, f1),
        f2=BoundaryTrace(grid, Edge.GAMMA2, f2),
    )


def _rational_model(a: float = 1.0, s_max: float = 2.5, n: int = 4001) -> Tabulated:
    """Densely tabulated k(s) = 1/(1 + a s) (smooth, monotone decreasing)."""
    return Tabulated.from_function(lambda s: 1.0 / (1.0 + a * s), s_max, n)


def make_forward_example1(beta: float, grid: Grid, a: float = 1.0) -> ForwardExample:
    """Direct problem with exact solution E_beta(-t^beta) (1-x)(1-y).

    The coefficient is k(s) = 1/(1 + a s).  Because the time factor solves
    the fractional relaxation equation, its fractional derivative is exactly
    its negative, so the source has the closed form
    F = psi (-E - 4 E^3 k'(s)) with s = E^2 ((1-y)^2 + (1-x)^2).
    """
    X, Y = _meshed(grid)
    psi = (1.0 - X) * (1.0 - Y)
    E = np.asarray(mittag_leffler(beta, -grid.ts**beta))
    s = (E**2)[None, None, :] * (((1.0 - Y) ** 2 + (1.0 - X) ** 2)[:, :, None])
    kp = -a / (1.0 + a * s) ** 2
    F = psi[:, :, None] * (-E[None, None, :] - 4.0 * E[None, None, :] ** 3 * kp)
    s1 = np.outer((1.0 - grid.ys) ** 2 + 1.0, E**2)
    f1 = -(1.0 / (1.0 + a * s1)) * np.outer(1.0 - grid.ys, E)
    s2 = np.outer(1.0 + (1.0 - grid.xs) ** 2, E**2)
    f2 = -(1.0 / (1.0 + a * s2)) * np.outer(1.0 - grid.xs, E)
    problem = NonlinearProblem(
        grid=grid,
        beta=beta,
        model=_rational_model(a),
        source=F,
        flux=_flux(grid, f1, f2),
        g=psi,
    )
    exact = Field(grid, psi[:, :, None] * E[None, None, :])
    return ForwardExample(problem=problem, exact=exact)


def make_adjoint_example2(beta: float, grid: Grid, a: float = 1.0) -> ForwardExample:
    """Terminal-value problem with exact solution (T-t)^(2 beta) (1-x)(1-y).

    The right-sided fractional derivative of the time factor is
    Gamma(2 beta + 1)/Gamma(beta + 1) (T-t)^beta; otherwise the same algebra
    as the direct case with V = (T-t)^(2 beta) in place of E.
    """
    X, Y = _meshed(grid)
    psi = (1.0 - X) * (1.0 - Y)
    T = grid.t_final
    V = (T - grid.ts) ** (2.0 * beta)
    c = math.gamma(2.0 * beta + 1.0) / math.gamma(beta + 1.0)
    s = (V**2)[None, None, :] * (((1.0 - Y) ** 2 + (1.0 - X) ** 2)[:, :, None])
    kp = -a / (1.0 + a * s) ** 2
    F = psi[:, :, None] * (
        c * ((T - grid.ts) ** beta)[None, None, :] - 4.0 * V[None, None, :] ** 3 * kp
    )
    s1 = np.outer((1.0 - grid.ys) ** 2 + 1.0, V**2)
    f1 = -(1.0 / (1.0 + a * s1)) * np.outer(1.0 - grid.ys, V)
    s2 = np.outer(1.0 + (1.0 - grid.xs) ** 2, V**2)
    f2 = -(1.0 / (1.0 + a * s2)) * np.outer(1.0 - grid.xs, V)
    problem = NonlinearProblem(
        grid=grid,
        beta=beta,
        model=_rational_model(a),
        source=F,
        flux=_flux(grid, f1, f2),
        g=np.zeros((grid.nx, grid.ny)),
        direction=Direction.BACKWARD,
    )
    exact = Field(grid, psi[:, :, None] * V[None, None, :])
    return ForwardExample(problem=problem, exact=exact)


def make_inverse_example1(beta: float, grid: Grid) -> InverseExample:
    """Identification case with exact solution t^beta log(2-x) (1-y).

    The coefficient is k(s) = 1/(1 + s); the exact fluxes and boundary data
    are the closed forms obtained by substitution, so no synthetic solve is
    involved and the observations carry no discretization bias.
    """
    X, Y = _meshed(grid)
    ts = grid.ts
    tb = ts**beta
    L = np.log(2.0 - X)
    oy = 1.0 - Y
    # source from D^beta u - div(k grad u) with u = t^beta L(x) (1-y)
    s = (tb**2)[None, None, :] * ((oy**2 / (2.0 - X) ** 2 + L**2)[:, :, None])
    k = 1.0 / (1.0 + s)
    kp = -1.0 / (1.0 + s) ** 2
    lap = -(tb[None, None, :]) * (oy / (2.0 - X) ** 2)[:, :, None]
    ux = -(tb[None, None, :]) * (oy / (2.0 - X))[:, :, None]
    uy = -(tb[None, None, :]) * L[:, :, None]
    sx = (tb**2)[None, None, :] * (
        (2.0 * oy**2 / (2.0 - X) ** 3)[:, :, None] - (2.0 * L / (2.0 - X))[:, :, None]
    )
    sy = -(tb**2)[None, None, :] * (2.0 * oy / (2.0 - X) ** 2)[:, :, None]
    F = (math.gamma(1.0 + beta) * L * oy)[:, :, None] - (k * lap + kp * (sx * ux + sy * uy))
    # exact fluxes -k du/dn on the two flux edges
    oyv = 1.0 - grid.ys
    s1 = np.outer(oyv**2 / 4.0 + math.log(2.0) ** 2, tb**2)
    f1 = -np.outer(oyv / 2.0, tb) / (1.0 + s1)
    Lx = np.log(2.0 - grid.xs)
    s2 = np.outer(1.0 / (2.0 - grid.xs) ** 2 + Lx**2, tb**2)
    f2 = -np.outer(Lx, tb) / (1.0 + s2)
    exact_flux = _flux(grid, f1, f2)
    # analytic observations on the two measured edges
    h1 = BoundaryTrace(grid, Edge.GAMMA1, np.outer(math.log(2.0) * oyv, tb))
    h2 = BoundaryTrace(grid, Edge.GAMMA2, np.outer(Lx, tb))
    problem = InverseProblem(
        grid=grid,
        beta=beta,
        model=_rational_model(a=1.0, s_max=2.0),
        source=F,
        g=np.zeros((grid.nx, grid.ny)),
    )
    obs = Observations(h1=h1, h2=h2, epsilon_bar=EPSILON_BAR_CLEAN)
    return InverseExample(problem=problem, exact_flux=exact_flux, observations=obs)


def _example2_data(grid: Grid):
    X, Y = _meshed(grid)
    ts = grid.ts
    tfac = np.exp(-ts) * (ts - ts**2)
    F = np.repeat(np.sin(2.0 * np.pi * X * Y)[:, :, None], grid.nt + 1, axis=2)
    f1 = np.outer(np.sin(3.0 * np.pi * grid.ys), tfac)
    f2 = np.outer(np.sin(2.0 * np.pi * grid.xs), tfac)
    return F, _flux(grid, f1, f2)


def _synthesize_observations(
    grid: Grid,
    beta: float,
    model: PlasticityModel,
    fine_source: np.ndarray,
    fine_flux: BoundaryFlux,
    picard: PicardConfig,
) -> tuple[BoundaryTrace, BoundaryTrace]:
    """Solve on the once-refined grid and restrict the boundary traces."""
    fine = fine_flux.grid
    problem = NonlinearProblem(
        grid=fine,
        beta=beta,
        model=model,
        source=fine_source,
        flux=fine_flux,
        g=np.zeros((fine.nx, fine.ny)),
    )
    u, _ = solve_nonlinear(problem, picard)
    h1 = BoundaryTrace(grid, Edge.GAMMA1, u.values[0, ::2, ::2].copy())
    h2 = BoundaryTrace(grid, Edge.GAMMA2, u.values[::2, 0, ::2].copy())
    return h1, h2


def _guarded_inverse_example(
    grid: Grid, beta: float, model: PlasticityModel
) -> InverseExample:
    F, exact_flux = _example2_data(grid)
    fine = grid.refined(2)
    F_fine, flux_fine = _example2_data(fine)
    picard = PicardConfig(theta_bar=1e-12, fixed_iters=20)
    h1, h2 = _synthesize_observations(grid, beta, model, F_fine, flux_fine, picard)
    problem = InverseProblem(grid=grid, beta=beta, model=model, source=F, g=np.zeros((grid.nx, grid.ny)))
    # attainable misfit floor: the inversion-grid solution at the exact flux
    nl = NonlinearProblem(grid, beta, model, F, exact_flux, np.zeros((grid.nx, grid.ny)))
    u, _ = solve_nonlinear(nl, picard)
    r1 = restrict_to_edge(u, Edge.GAMMA1).values - h1.values
    r2 = restrict_to_edge(u, Edge.GAMMA2).values - h2.values
    floor = 0.5 * (
        trace_norm(BoundaryTrace(grid, Edge.GAMMA1, r1)) ** 2
        + trace_norm(BoundaryTrace(grid, Edge.GAMMA2, r2)) ** 2
    )
    eps_bar = max(EPSILON_BAR_CLEAN, floor)
    obs = Observations(h1=h1, h2=h2, epsilon_bar=eps_bar)
    return InverseExample(problem=problem, exact_flux=exact_flux, observations=obs)


def make_inverse_example2(grid: Grid, beta: float = 0.3) -> InverseExample:
    """Identification case without a closed-form solution.

    F = sin(2 pi x y), f1 = e^-t (t - t^2) sin(3 pi y), f2 = e^-t (t - t^2)
    sin(2 pi x); observations are synthesized on the refined grid.  The stop
    threshold is the larger of the clean-data default and the misfit floor
    attainable on the inversion grid (the refined-grid data are not exactly
    reproducible at the inversion resolution).
    """
    return _guarded_inverse_example(grid, beta, Constant(1.0))


def make_inverse_example3(case: str, grid: Grid, beta: float = 0.5) -> InverseExample:
    """Ramberg-Osgood materials driven by the same fluxes as the implicit case.

    Soft: E = 110 GPa, T0^2 = 0.02; stiff: E = 210 GPa, T0^2 = 0.027; both
    with nu = 0.3 and hardening exponent 0.5.  The coefficient is expressed
    in units of the shear compliance 1/G (scale = G), so the elastic plateau
    is k = 1 and the PDE stays O(1).
    """
    if case not in ("soft", "stiff"):
        raise ValueError("case must be 'soft' or 'stiff'")
    e_young, t0_sq = (110.0, 0.02) if case == "soft" else (210.0, 0.027)
    model = RambergOsgood(e_young=e_young, nu=0.3, t0_sq=t0_sq, hardening=0.5)
    model = RambergOsgood(
        e_young=e_young, nu=0.3, t0_sq=t0_sq, hardening=0.5, scale=model.shear_modulus
    )
    return _guarded_inverse_example(grid, beta, model)


def add_noise(tr: BoundaryTrace, spec: NoiseSpec) -> tuple[BoundaryTrace, float]:
    """Perturb a trace by gamma * N(0,1) * ||trace||; returns the realized level."""
    if spec.gamma == 0.0:
        return tr, 0.0
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    z = rng.standard_normal(tr.values.shape)
    noisy = BoundaryTrace(tr.grid, tr.edge, tr.values + spec.gamma * z * trace_norm(tr))
    eps = trace_norm(BoundaryTrace(tr.grid, tr.edge, noisy.values - tr.values))
    return noisy, eps


def noisy_observations(obs: Observations, spec: NoiseSpec) -> Observations:
    """Attach noisy variants and raise the stop threshold to the realized level."""
    h1n, eps1 = add_noise(obs.h1, spec)
    h2n, eps2 = add_noise(obs.h2, NoiseSpec(gamma=spec.gamma, seed=spec.seed + 1))
    if spec.gamma == 0.0:
        return obs
    eps_bar = max(obs.epsilon_bar, 0.5 * (eps1**2 + eps2**2))
    return Observations(h1=obs.h1, h2=obs.h2, epsilon_bar=eps_bar, h1_noisy=h1n, h2_noisy=h2n)


def flux_error(fk: BoundaryFlux, fexact: BoundaryFlux) -> tuple[float, float]:
    """L2 boundary-cylinder errors of the two reconstructed flux components."""
    if fk.grid != fexact.grid:
        raise ValueError("flux pair on mismatched grids")
    g = fk.grid
    e1 = trace_norm(BoundaryTrace(g, Edge.GAMMA1, fk.f1.values - fexact.f1.values))
    e2 = trace_norm(BoundaryTrace(g, Edge.GAMMA2, fk.f2.values - fexact.f2.values))
    return e1, e2


PRESETS = {
    "Fwd1": lambda grid, beta=0.3: make_forward_example1(beta, grid),
    "Adj2": lambda grid, beta=0.3: make_adjoint_example2(beta, grid),
    "Inv1": lambda grid, beta=0.3: make_inverse_example1(beta, grid),
    "Inv2": lambda grid, beta=0.3: make_inverse_example2(grid, beta),
    "Inv3Soft": lambda grid, beta=0.5: make_inverse_example3("soft", grid, beta),
    "Inv3Stiff": lambda grid, beta=0.5: make_inverse_example3("stiff", grid, beta),
}
