"""Feasible-iterate Gauss-Newton SQP for steering the net toward a target.

Each outer iteration linearizes the equilibrium map through the reduced
sensitivity ``S`` (see :func:`cablenet.equilibrium.input_sensitivity`),
solves the small weighted least-squares problem for an input step, and
line-searches the step length under Wolfe conditions whose directional
terms use the *actual* displacement of the re-solved equilibrium.  Every
trial point is itself an equilibrium, so the tracking cost doubles as the
line-search merit and any early termination still returns a physically
valid control.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .equilibrium import (
    EquilibriumConfig,
    ResponseMap,
    SingularStiffnessError,
    input_sensitivity,
)


@dataclass
class ControlProblem:
    """Target configuration, coordinate weights and algorithm constants."""

    r_des: np.ndarray              # (n_free, 3) target coordinates
    q_r: np.ndarray = 1.0          # diagonal weights, scalar or (3 n_free,)
    c_conv: float = 1e-6           # m, infinity norm of the combined iterate change
    max_outer: int = 100
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9

    def __post_init__(self):
        self.r_des = np.array(self.r_des, dtype=float)
        if self.r_des.ndim != 2 or self.r_des.shape[1] != 3:
            raise ValueError("r_des must have shape (n_free, 3)")
        n3 = self.r_des.size
        self.q_r = np.broadcast_to(np.asarray(self.q_r, dtype=float), (n3,)).copy()
        if np.any(self.q_r < 0):
            raise ValueError("q_r entries must be >= 0")
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ValueError("need 0 < wolfe_c1 < wolfe_c2 < 1")


@dataclass
class ControlIterate:
    u: np.ndarray
    cfg: np.ndarray                # equilibrium configuration for u
    cost: float
    step_alpha: float = 0.0
    delta_u: np.ndarray | None = None


@dataclass
class WolfeCertificate:
    """Both inequality sides at an accepted step, for post-hoc checks."""

    decrease_lhs: float            # f(next)
    decrease_rhs: float            # f(cur) + c1 * directional term
    curvature_lhs: float           # grad(next) . dr
    curvature_rhs: float           # c2 * grad(cur) . dr
    curvature_checked: bool = True

    @property
    def sufficient_decrease(self):
        return self.decrease_lhs <= self.decrease_rhs

    @property
    def curvature(self):
        return self.curvature_lhs >= self.curvature_rhs


@dataclass
class TraceRow:
    iter: int
    cost: float
    alpha: float
    delta_u_norm: float
    residual_norm: float
    kkt_measure: float
    u: np.ndarray
    wolfe: WolfeCertificate | None = None


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def costs(self):
        return np.array([row.cost for row in self.rows])


class RankDeficiencyError(RuntimeError):
    """Reduced normal matrix S^T Q S is singular (weight rank condition violated)."""


class LineSearchError(RuntimeError):
    """No acceptable step length; carries the best trial found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ControlRunError(RuntimeError):
    """A control run aborted; carries the last feasible iterate and trace."""

    def __init__(self, message, iterate=None, trace=None):
        super().__init__(message)
        self.iterate = iterate
        self.trace = trace


def tracking_cost(cfg, prob):
    """Weighted squared distance to the target: 0.5 sum q (r - r_des)^2."""
    d = np.asarray(cfg, dtype=float).reshape(-1) - prob.r_des.reshape(-1)
    if d.size != prob.q_r.size:
        raise ValueError("configuration/target dimension mismatch")
    return float(0.5 * prob.q_r @ d ** 2)


def cost_gradient(cfg, prob):
    """Gradient of :func:`tracking_cost` w.r.t. the flattened coordinates."""
    d = np.asarray(cfg, dtype=float).reshape(-1) - prob.r_des.reshape(-1)
    return prob.q_r * d


def solve_gn_step(sensitivity, q_r, residual):
    """Minimizer of 0.5 |residual + S du|_Q^2 via the normal equations."""
    sq = q_r[:, None] * sensitivity
    normal = sensitivity.T @ sq
    rhs = sq.T @ residual
    try:
        fac = cho_factor(normal, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise RankDeficiencyError(
            "reduced normal matrix is singular; the weight matrix does not "
            "give the sensitivity full column rank") from exc
    return -cho_solve(fac, rhs, check_finite=False)


def gn_direction(cfg, net, u, prob, sensitivity=None):
    """Gauss-Newton input step at a feasible iterate.

    Solves the reduced least-squares problem in the input space; the result
    is the input block of the full equality-constrained quadratic program
    and a descent direction for the reduced tracking cost.
    """
    S = input_sensitivity(cfg, net, u) if sensitivity is None else sensitivity
    d = np.asarray(cfg, dtype=float).reshape(-1) - prob.r_des.reshape(-1)
    return solve_gn_step(S, prob.q_r, d)


def kkt_measure(cfg, net, u, prob, sensitivity=None):
    """Infinity norm of the reduced cost gradient S^T Q (r - r_des)."""
    S = input_sensitivity(cfg, net, u) if sensitivity is None else sensitivity
    return float(np.abs(S.T @ cost_gradient(cfg, prob)).max())


def wolfe_line_search(response, u, delta_u, prob, current, max_trials=30):
    """Find a step length along ``delta_u`` satisfying both Wolfe conditions.

    ``current`` is the equilibrium result at ``u``.  Each trial solves the
    equilibrium at ``u + alpha delta_u`` (warm-started through ``response``),
    and the directional terms are evaluated with the realized configuration
    change.  Strategy: start at alpha = 1, halve while sufficient decrease
    fails, then bisect for curvature.  If the budget runs out with
    sufficient decrease in hand, that step is accepted with a warning.

    Returns ``(alpha, result, certificate)``.
    """
    f0 = tracking_cost(current.cfg, prob)
    g0 = cost_gradient(current.cfg, prob)
    r0 = np.asarray(current.cfg, dtype=float).reshape(-1)
    c1, c2 = prob.wolfe_c1, prob.wolfe_c2

    def probe(alpha):
        result = response.solve(u + alpha * delta_u)
        dr = result.cfg.reshape(-1) - r0
        d0 = float(g0 @ dr)
        f = tracking_cost(result.cfg, prob)
        gn = cost_gradient(result.cfg, prob)
        cert = WolfeCertificate(
            decrease_lhs=f,
            decrease_rhs=f0 + c1 * d0,
            curvature_lhs=float(gn @ dr),
            curvature_rhs=c2 * d0,
        )
        return result, cert

    alpha = 1.0
    result, cert = probe(alpha)
    trials = 1
    hi = None  # smallest alpha known to fail sufficient decrease
    while not cert.sufficient_decrease and trials < max_trials:
        hi = alpha
        alpha *= 0.5
        result, cert = probe(alpha)
        trials += 1
    if not cert.sufficient_decrease:
        raise LineSearchError(
            f"no sufficient decrease within {max_trials} trials", best=result)
    if cert.curvature:
        return alpha, result, cert

    # curvature failed: the step is too timid; bisect toward hi (or give up
    # at the full step, which cannot be exceeded)
    while hi is not None and trials < max_trials:
        mid = 0.5 * (alpha + hi)
        result_mid, cert_mid = probe(mid)
        trials += 1
        if cert_mid.sufficient_decrease:
            alpha, result, cert = mid, result_mid, cert_mid
            if cert.curvature:
                return alpha, result, cert
        else:
            hi = mid
    warnings.warn("curvature condition not met within the trial budget; "
                  "accepting the sufficient-decrease step", RuntimeWarning)
    # re-solve so the response map's warm start matches the returned point
    result, cert = probe(alpha)
    return alpha, result, cert


def run_control(net, u0, prob, eq_cfg=None, warm_start=None):
    """Drive the net toward ``prob.r_des`` by adjusting boundary rest lengths.

    Iterates Gauss-Newton steps with the Wolfe line search until the
    combined configuration/input change drops below ``prob.c_conv`` or
    ``prob.max_outer`` is reached.  Every iterate in the returned trace is a
    solved equilibrium, so the cost column is non-increasing and the run can
    be stopped anywhere with a usable input vector.

    Returns ``(final_iterate, trace)``.
    """
    eq_cfg = eq_cfg or EquilibriumConfig()
    u = np.array(u0, dtype=float).reshape(-1)
    response = ResponseMap(net, prob.r_des if warm_start is None else warm_start,
                           eq_cfg)
    result = response.solve(u)
    trace = RunTrace()
    prev_slack = _warn_on_slack_change(None, result)

    for k in range(prob.max_outer):
        cost_k = tracking_cost(result.cfg, prob)
        try:
            S = input_sensitivity(result.cfg, net, u)
            delta_u = gn_direction(result.cfg, net, u, prob, sensitivity=S)
        except (RankDeficiencyError, SingularStiffnessError) as exc:
            # a slack boundary edge zeroes its sensitivity column; the run
            # cannot proceed but the current iterate is a valid control
            trace.message = str(exc)
            raise ControlRunError(
                f"control run aborted at iteration {k}: {exc}",
                iterate=ControlIterate(u=u, cfg=result.cfg, cost=cost_k),
                trace=trace) from exc
        kkt = float(np.abs(S.T @ cost_gradient(result.cfg, prob)).max())
        du_norm = float(np.abs(delta_u).max()) if delta_u.size else 0.0

        # stop when the quadratic model cannot predict a decrease that
        # floating point could resolve: no line search can certify progress
        sdu = S @ delta_u
        model_decrease = float(cost_gradient(result.cfg, prob) @ sdu
                               + 0.5 * (prob.q_r * sdu) @ sdu)
        noise = 64.0 * np.finfo(float).eps * (1.0 + abs(cost_k))
        if du_norm == 0.0 or model_decrease >= -noise:
            trace.converged = True
            trace.message = "stationary: Gauss-Newton model decrease below resolution"
            break

        try:
            alpha, new_result, cert = wolfe_line_search(response, u, delta_u,
                                                        prob, result)
        except LineSearchError as exc:
            trace.message = str(exc)
            iterate = ControlIterate(u=u, cfg=result.cfg, cost=cost_k,
                                     delta_u=delta_u)
            raise ControlRunError(
                f"control run aborted at iteration {k}: {exc}",
                iterate=iterate, trace=trace) from exc
        u_new = u + alpha * delta_u
        step = max(float(np.abs(new_result.cfg - result.cfg).max()),
                   float(np.abs(u_new - u).max()))
        trace.rows.append(TraceRow(k, cost_k, alpha, du_norm,
                                   result.residual_norm, kkt, u.copy(), cert))
        u, result = u_new, new_result
        prev_slack = _warn_on_slack_change(prev_slack, result)

        if step < prob.c_conv:
            trace.converged = True
            trace.message = f"iterate change {step:.3e} m below {prob.c_conv:.3e} m"
            break
    else:
        trace.message = f"outer iteration cap {prob.max_outer} reached"

    final_cost = tracking_cost(result.cfg, prob)
    try:
        S = input_sensitivity(result.cfg, net, u)
        final_kkt = float(np.abs(S.T @ cost_gradient(result.cfg, prob)).max())
        final_du = gn_direction(result.cfg, net, u, prob, sensitivity=S)
        final_du_norm = float(np.abs(final_du).max())
    except (RankDeficiencyError, SingularStiffnessError):
        final_kkt, final_du, final_du_norm = float("nan"), None, float("nan")
    trace.rows.append(TraceRow(len(trace.rows), final_cost, 0.0,
                               final_du_norm, result.residual_norm,
                               final_kkt, u.copy()))
    iterate = ControlIterate(u=u, cfg=result.cfg, cost=final_cost,
                             step_alpha=trace.rows[-2].alpha if len(trace.rows) > 1 else 0.0,
                             delta_u=final_du)
    return iterate, trace


def _warn_on_slack_change(prev, result):
    cur = set(result.slack_edges.tolist())
    if prev is not None and cur != prev:
        warnings.warn(
            f"slack edge set changed during the run ({sorted(prev)} -> "
            f"{sorted(cur)}); the tensioned topology is not constant",
            RuntimeWarning)
    return cur
