"""Static equilibrium of a cable net for a fixed input vector.

The potential assembled in :mod:`cablenet.model` is convex and piecewise
smooth, so its minimizer is the unique equilibrium.  We find it with a
damped (Levenberg-regularized) Newton iteration on the energy: the analytic
tangent stiffness supplies the Newton system and a backtracking line search
guarantees monotone energy decrease.  Convergence is declared on the
infinity norm of the nodal force residual, a per-node worst force imbalance
in newtons.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .model import (
    force_residual,
    input_jacobian,
    slack_edges,
    tangent_stiffness,
    total_energy,
)


@dataclass
class EquilibriumConfig:
    tol_force: float = 1e-8        # N, infinity norm of the residual
    max_iters: int = 200
    levenberg_min: float = 1e-10
    armijo_c: float = 1e-4
    backtrack_ratio: float = 0.5

    def __post_init__(self):
        if self.tol_force <= 0:
            raise ValueError("tol_force must be > 0")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must be in (0, 1)")
        if not 0 < self.backtrack_ratio < 1:
            raise ValueError("backtrack_ratio must be in (0, 1)")


@dataclass
class EquilibriumResult:
    cfg: np.ndarray                # (n_free, 3) equilibrium coordinates
    residual_norm: float           # N, infinity norm at cfg
    energy: float                  # J
    iterations: int
    slack_edges: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))


class ConvergenceError(RuntimeError):
    """Solver ran out of iterations; carries the best iterate found."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


class EquivalenceError(RuntimeError):
    """Energy minimizer and force balance disagree; carries the node index."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SingularStiffnessError(RuntimeError):
    """Tangent stiffness is singular where a factorization was required."""


def solve_equilibrium(net, u, warm_start, cfg=None, energy_trace=None):
    """Minimize the net's potential at fixed ``u`` to force balance.

    ``warm_start`` is any finite initial configuration; convexity makes the
    result independent of it.  Returns an :class:`EquilibriumResult` whose
    residual infinity norm is at most ``cfg.tol_force``; raises
    :class:`ConvergenceError` (carrying the best iterate) past
    ``cfg.max_iters``.  ``energy_trace``, if given a list, receives the
    energy of every accepted iterate.

    Steps are accepted on sufficient energy decrease; once energy
    differences fall below floating-point resolution (residuals near the
    tolerance), a full Newton step that shrinks the residual norm is
    accepted instead, which preserves the quadratic tail of the iteration.
    """
    cfg = cfg or EquilibriumConfig()
    r = np.array(warm_start, dtype=float).reshape(net.n_free, 3)
    if not np.all(np.isfinite(r)):
        raise ValueError("warm_start must be finite")
    lam = cfg.levenberg_min
    energy = total_energy(r, net, u)
    h = force_residual(r, net, u)
    res = float(np.abs(h).max())
    eye = np.eye(3 * net.n_free)
    if energy_trace is not None:
        energy_trace.append(energy)

    for it in range(1, cfg.max_iters + 1):
        if res <= cfg.tol_force:
            return EquilibriumResult(r, res, energy, it - 1,
                                     slack_edges(r, net, u))
        K = tangent_stiffness(r, net, u)
        step = None
        while step is None:
            try:
                fac = cho_factor(K + lam * eye, lower=True, check_finite=False)
                step = cho_solve(fac, -h, check_finite=False)
            except LinAlgError:
                lam = max(lam * 10.0, 1e-12)
                if lam > 1e20:
                    raise ConvergenceError(
                        "stiffness factorization failed",
                        EquilibriumResult(r, res, energy, it,
                                          slack_edges(r, net, u)))
        slope = float(h @ step)  # negative: step is a descent direction
        noise = 16.0 * np.finfo(float).eps * (1.0 + abs(energy))
        if -cfg.armijo_c * slope <= noise:
            # predicted decrease sits below the energy evaluation noise;
            # certify the Newton tail by residual decrease instead
            trial = r + step.reshape(net.n_free, 3)
            h_trial = force_residual(trial, net, u)
            res_trial = float(np.abs(h_trial).max())
            if res_trial < res:
                r = trial
                energy = total_energy(r, net, u)
                h, res = h_trial, res_trial
                lam = max(cfg.levenberg_min, lam * 0.25)
                if energy_trace is not None:
                    energy_trace.append(energy)
            else:
                lam = max(lam * 10.0, 1e-8)
            continue
        alpha = 1.0
        accepted = False
        for _ in range(40):
            trial = r + alpha * step.reshape(net.n_free, 3)
            e_trial = total_energy(trial, net, u)
            if e_trial <= energy + cfg.armijo_c * alpha * slope:
                accepted = True
                break
            alpha *= cfg.backtrack_ratio
        if not accepted:
            lam = max(lam * 10.0, 1e-8)
            continue
        r, energy = trial, e_trial
        h = force_residual(r, net, u)
        res = float(np.abs(h).max())
        lam = max(cfg.levenberg_min, lam * 0.25)
        if energy_trace is not None:
            energy_trace.append(energy)

    if res <= cfg.tol_force:
        return EquilibriumResult(r, res, energy, cfg.max_iters,
                                 slack_edges(r, net, u))
    raise ConvergenceError(
        f"no equilibrium within {cfg.max_iters} iterations "
        f"(residual {res:.3e} N > {cfg.tol_force:.3e} N)",
        EquilibriumResult(r, res, energy, cfg.max_iters, slack_edges(r, net, u)))


@dataclass
class EquivalenceReport:
    residual_norm: float
    min_energy_rise: float
    directions: int


def verify_equivalence(net, u, result, directions=50, rel_magnitude=1e-4,
                       seed=0, tol_force=None):
    """Certify that an energy minimizer is a force balance and vice versa.

    Recomputes the force residual at ``result.cfg`` and checks its infinity
    norm, then perturbs the configuration along ``directions`` random unit
    directions of magnitude ``rel_magnitude`` times the net scale and checks
    the energy rises each time.  Raises :class:`EquivalenceError` naming the
    worst node (residual check) or the offending direction index.
    """
    tol = tol_force if tol_force is not None else EquilibriumConfig().tol_force
    r = np.asarray(result.cfg, dtype=float).reshape(net.n_free, 3)
    h = force_residual(r, net, u)
    res = float(np.abs(h).max())
    if res > tol:
        node = int(np.argmax(np.abs(h)) // 3)
        raise EquivalenceError(
            f"force residual {res:.3e} N exceeds {tol:.3e} N at node {node}",
            node=node)
    base = total_energy(r, net, u)
    mag = rel_magnitude * net.scale()
    rng = np.random.default_rng(seed)
    min_rise = np.inf
    for k in range(directions):
        d = rng.standard_normal(r.shape)
        d *= mag / np.linalg.norm(d)
        rise = total_energy(r + d, net, u) - base
        min_rise = min(min_rise, rise)
        if rise <= 0.0:
            raise EquivalenceError(
                f"energy did not increase along perturbation {k} "
                f"(rise {rise:.3e} J)")
    return EquivalenceReport(res, float(min_rise), directions)


class ResponseMap:
    """The map ``u -> equilibrium configuration``, warm-started across calls.

    Successive calls with nearby inputs (line-search trials) reuse the last
    converged configuration as the starting point, which keeps the Newton
    iteration count low.
    """

    def __init__(self, net, warm_start, eq_cfg=None):
        self.net = net
        self.eq_cfg = eq_cfg or EquilibriumConfig()
        self._warm = np.array(warm_start, dtype=float).reshape(net.n_free, 3)

    def solve(self, u):
        result = solve_equilibrium(self.net, u, self._warm, self.eq_cfg)
        self._warm = result.cfg
        return result

    def __call__(self, u):
        return self.solve(u).cfg


def input_sensitivity(cfg, net, u):
    """Derivative of the equilibrium map: S = -K^-1 J_u at an equilibrium.

    ``K`` is the tangent stiffness and ``J_u`` the input Jacobian, both
    evaluated at ``cfg``.  Raises :class:`SingularStiffnessError` when the
    stiffness cannot be factorized (degenerate equilibrium).
    """
    K = tangent_stiffness(cfg, net, u)
    J = input_jacobian(cfg, net, u)
    try:
        fac = cho_factor(K, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise SingularStiffnessError(
            "tangent stiffness is singular at the equilibrium") from exc
    return -cho_solve(fac, J, check_finite=False)
