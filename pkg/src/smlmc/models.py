"""PDE testbeds: deterministic maps from a scalar random input to a scalar QoI.

Two models ship:

* linear diffusion on (0, 4) with a random diffusion coefficient, solved by
  central differences in space and Crank-Nicolson in time (tridiagonal systems
  via the Thomas algorithm), QoI = 10 * integral of u^2 at t = 0.2;
* inviscid Burgers on (0, 2) with a random initial plateau, solved by the
  first-order Godunov finite-volume scheme, QoI = 10 * integral of u^2 at
  t = 0.5.

Both solvers are vectorized over a batch of input values: a level solve for a
batch of Monte Carlo samples runs the spatial loop once, with numpy arrays of
shape (space, batch).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

DIFFUSION_IC_WIDTH = 0.05


@dataclass(frozen=True)
class MeshHierarchy:
    """Geometric mesh family M_l = m0 * factor^l, levels 0..l_star."""

    m0: int
    factor: int = 2
    l_star: int = 7

    def __post_init__(self):
        if self.m0 <= 1:
            raise ValueError("coarsest mesh needs more than one cell")
        if self.factor < 2:
            raise ValueError("refinement factor must be at least 2")
        if self.l_star < 0:
            raise ValueError("l_star must be nonnegative")

    def cells(self, level: int) -> int:
        if not 0 <= level <= self.l_star:
            raise ValueError(f"level {level} outside 0..{self.l_star}")
        return self.m0 * self.factor**level


@dataclass(frozen=True)
class LevelPair:
    """Coupled QoI sample: fine and coarse solves driven by the same input."""

    fine: float
    coarse: Optional[float]
    level: int
    input_w: float


def thomas_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system by the Thomas algorithm.

    Parameters
    ----------
    lower, upper : arrays of shape (n-1,) or (n-1, B)
        Sub- and super-diagonal entries.
    diag : array of shape (n,) or (n, B)
        Main diagonal.
    rhs : array of shape (n,) or (n, B)
        Right-hand side(s); a trailing batch axis solves B independent systems
        in one sweep.

    The sweep assumes the usual diagonal-dominance; a vanishing pivot raises.
    """
    diag = np.asarray(diag, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = diag.shape[0]
    if n == 1:
        if np.any(diag == 0.0):
            raise FloatingPointError("zero pivot in tridiagonal solve")
        return rhs / diag
    cp = np.empty_like(upper if upper.ndim == rhs.ndim else rhs[: n - 1])
    dp = np.empty_like(rhs)
    piv = diag[0]
    if np.any(piv == 0.0):
        raise FloatingPointError("zero pivot in tridiagonal solve")
    cp[0] = upper[0] / piv
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - lower[i - 1] * cp[i - 1]
        if np.any(piv == 0.0):
            raise FloatingPointError("zero pivot in tridiagonal solve")
        if i < n - 1:
            cp[i] = upper[i] / piv
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / piv
    x = np.empty_like(rhs)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def diffusion_steps(cells: int, final_time: float, length: float, dt_over_dx: float = 1.0) -> int:
    """Number of Crank-Nicolson steps: dt tracks dx so time and space errors balance."""
    dx = length / cells
    return max(1, int(np.ceil(final_time / (dt_over_dx * dx) - 1e-12)))


def solve_diffusion_batch(
    d_coeffs,
    cells: int,
    final_time: float = 0.2,
    length: float = 4.0,
    dt_over_dx: float = 1.0,
):
    """Diffusion fields for a batch of coefficients.

    Returns an array of node values of shape (cells + 1, B).  Nodes are
    x_j = j * dx including the boundary nodes; the interior unknowns advance by
    Crank-Nicolson with the tridiagonal system solved by thomas_solve.  Walls
    are held at u(0) = -1 and u(length) = +1; the initial transition layer is
    tanh((x - 2) / 0.05).
    """
    d = np.atleast_1d(np.asarray(d_coeffs, dtype=float))
    if np.any(d <= 0):
        raise ValueError("diffusion coefficient must be positive")
    if cells < 2:
        raise ValueError("need at least two cells")
    B = d.shape[0]
    dx = length / cells
    n_steps = diffusion_steps(cells, final_time, length, dt_over_dx)
    dt = final_time / n_steps
    x = np.linspace(0.0, length, cells + 1)
    u = np.repeat(np.tanh((x - 2.0) / DIFFUSION_IC_WIDTH)[:, None], B, axis=1)
    u[0, :] = -1.0
    u[-1, :] = 1.0
    lam = d * dt / (2.0 * dx * dx)  # (B,)
    m = cells - 1
    # the Crank-Nicolson matrix (diag 1 + 2 lam, off-diag -lam) is constant in
    # time, so the Thomas forward-elimination coefficients are precomputed once
    cp = np.empty((m - 1, B))
    inv_piv = np.empty((m, B))
    piv = np.full(B, 1.0) + 2.0 * lam
    inv_piv[0] = 1.0 / piv
    for i in range(1, m):
        cp[i - 1] = -lam * inv_piv[i - 1]
        piv = (1.0 + 2.0 * lam) + lam * cp[i - 1]
        inv_piv[i] = 1.0 / piv
    low_scaled = lam * inv_piv[1:]  # multiplies dp[i-1] in the forward sweep
    dp = np.empty((m, B))
    for _ in range(n_steps):
        interior = u[1:-1, :]
        rhs = (1.0 - 2.0 * lam) * interior
        rhs[1:, :] += lam * interior[:-1, :]
        rhs[:-1, :] += lam * interior[1:, :]
        rhs[0, :] -= 2.0 * lam   # left wall value -1, same at old and new time
        rhs[-1, :] += 2.0 * lam  # right wall value +1
        dp[0] = rhs[0] * inv_piv[0]
        for i in range(1, m):
            dp[i] = rhs[i] * inv_piv[i] + low_scaled[i - 1] * dp[i - 1]
        x = u[1:-1, :]
        x[m - 1] = dp[m - 1]
        for i in range(m - 2, -1, -1):
            x[i] = dp[i] - cp[i] * x[i + 1]
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("diffusion solve produced non-finite values")
    return u


def solve_diffusion(d_coeff: float, cells: int, final_time: float = 0.2,
                    length: float = 4.0, dt_over_dx: float = 1.0):
    """Single diffusion field u(., final_time) on the node grid, shape (cells + 1,)."""
    return solve_diffusion_batch([d_coeff], cells, final_time, length, dt_over_dx)[:, 0]


def godunov_flux(u_left, u_right):
    """Exact Godunov flux for f(u) = u^2 / 2.

    Shock when u_left >= u_right (flux of the side the shock moves towards,
    by the sign of the shock speed (u_left + u_right) / 2); rarefaction
    otherwise, with zero flux across a transonic fan.  Vectorizes; equivalent
    to max(f(max(u_left, 0)), f(min(u_right, 0))).
    """
    ul = np.asarray(u_left, dtype=float)
    ur = np.asarray(u_right, dtype=float)
    fl = np.maximum(ul, 0.0) ** 2
    fr = np.minimum(ur, 0.0) ** 2
    out = 0.5 * np.maximum(fl, fr)
    if out.ndim == 0:
        return float(out)
    return out


def burgers_steps(cells: int, final_time: float = 0.5, length: float = 2.0,
                  max_speed: float = 2.0, cfl: float = 0.9) -> int:
    """Step count of the CFL-limited march (final step clipped onto final_time)."""
    dx = length / cells
    dt = cfl * dx / max_speed
    return int(np.ceil(final_time / dt - 1e-12))


def solve_burgers_batch(
    u1_values,
    cells: int,
    final_time: float = 0.5,
    length: float = 2.0,
    inflow: float = 2.0,
    outflow: float = 0.0,
    cfl: float = 0.9,
):
    """Burgers fields for a batch of initial plateau heights.

    Returns cell averages of shape (cells, B) at final_time.  Initial data is
    u1 on (0, 1] and 0 on (1, length); ghost cells carry the Dirichlet values
    (inflow on the left, outflow on the right).  The time step is CFL-limited
    by the largest wave speed of the batch, which the max principle bounds by
    max(|initial data|, inflow); the last step is clipped to land on final_time.
    """
    u1 = np.atleast_1d(np.asarray(u1_values, dtype=float))
    if cells < 2:
        raise ValueError("need at least two cells")
    B = u1.shape[0]
    dx = length / cells
    centers = (np.arange(cells) + 0.5) * dx
    u = np.where(centers[:, None] <= 1.0, u1[None, :], 0.0)
    max_speed = max(abs(inflow), abs(outflow), float(np.abs(u).max()), 1e-12)
    dt_cfl = cfl * dx / max_speed
    ghost_l = np.full((1, B), float(inflow))
    ghost_r = np.full((1, B), float(outflow))
    t = 0.0
    while t < final_time - 1e-14:
        dt = min(dt_cfl, final_time - t)
        ext = np.concatenate([ghost_l, u, ghost_r], axis=0)
        flux = godunov_flux(ext[:-1, :], ext[1:, :])  # (cells + 1, B) interfaces
        u = u - (dt / dx) * (flux[1:, :] - flux[:-1, :])
        t += dt
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("Burgers solve produced non-finite values")
    return u


def solve_burgers(u1: float, cells: int, **kwargs):
    """Single Burgers field u(., final_time) on cell centers, shape (cells,)."""
    return solve_burgers_batch([u1], cells, **kwargs)[:, 0]


def qoi_trapezoid(field, dx: float, scale: float = 10.0):
    """scale * trapezoid quadrature of field^2 on a node grid (boundary nodes included)."""
    f2 = np.asarray(field, dtype=float) ** 2
    return scale * dx * (0.5 * f2[0] + f2[1:-1].sum(axis=0) + 0.5 * f2[-1])


def qoi_midpoint(field, dx: float, scale: float = 10.0):
    """scale * midpoint quadrature of field^2 on a cell-average grid."""
    f2 = np.asarray(field, dtype=float) ** 2
    return scale * dx * f2.sum(axis=0)


@dataclass(frozen=True)
class ModelSpec:
    """One PDE testbed: identity, geometry, final time, and QoI scaling."""

    name: str                 # "diffusion" | "burgers"
    final_time: float
    domain_length: float
    qoi_scale: float = 10.0
    cfl: float = 0.9          # Burgers only
    inflow: float = 2.0       # Burgers only
    outflow: float = 0.0      # Burgers only

    def __post_init__(self):
        if self.name not in ("diffusion", "burgers"):
            raise ValueError(f"unknown model {self.name!r}")
        if self.final_time <= 0:
            raise ValueError("final_time must be positive")

    def qoi_batch(self, w, cells: int, dt_over_dx: float = 1.0):
        """QoI values for a batch of inputs at the given resolution."""
        if self.name == "diffusion":
            u = solve_diffusion_batch(
                w, cells, self.final_time, self.domain_length, dt_over_dx
            )
            return qoi_trapezoid(u, self.domain_length / cells, self.qoi_scale)
        u = solve_burgers_batch(
            w, cells, self.final_time, self.domain_length,
            self.inflow, self.outflow, self.cfl,
        )
        return qoi_midpoint(u, self.domain_length / cells, self.qoi_scale)

    def solve_field(self, w: float, cells: int):
        """Solution field for one input, on the model's natural grid."""
        if self.name == "diffusion":
            return solve_diffusion(w, cells, self.final_time, self.domain_length)
        return solve_burgers(
            w, cells, final_time=self.final_time, length=self.domain_length,
            inflow=self.inflow, outflow=self.outflow, cfl=self.cfl,
        )

    def steps(self, cells: int) -> int:
        if self.name == "diffusion":
            return diffusion_steps(cells, self.final_time, self.domain_length)
        return burgers_steps(
            cells, self.final_time, self.domain_length,
            max(abs(self.inflow), abs(self.outflow), 2.0), self.cfl,
        )

    def work_units(self, cells: int) -> float:
        """Deterministic work model: cells times time steps for one solve."""
        return float(cells) * self.steps(cells)


DIFFUSION = ModelSpec(name="diffusion", final_time=0.2, domain_length=4.0)
BURGERS = ModelSpec(name="burgers", final_time=0.5, domain_length=2.0)


def model_by_name(name: str) -> ModelSpec:
    if name == "diffusion":
        return DIFFUSION
    if name == "burgers":
        return BURGERS
    raise ValueError(f"unknown model {name!r}")


def sample_pair(model: ModelSpec, hierarchy: MeshHierarchy, w: float, level: int) -> LevelPair:
    """Coupled (fine, coarse) QoI evaluation at one level from a single input draw."""
    fine = float(model.qoi_batch([w], hierarchy.cells(level))[0])
    coarse = None
    if level > 0:
        coarse = float(model.qoi_batch([w], hierarchy.cells(level - 1))[0])
    return LevelPair(fine=fine, coarse=coarse, level=level, input_w=w)


def sample_pair_batch(model: ModelSpec, hierarchy: MeshHierarchy, w, level: int):
    """Batched sample_pair: returns (fine, coarse-or-None) arrays."""
    w = np.asarray(w, dtype=float)
    fine = model.qoi_batch(w, hierarchy.cells(level))
    coarse = model.qoi_batch(w, hierarchy.cells(level - 1)) if level > 0 else None
    return fine, coarse
