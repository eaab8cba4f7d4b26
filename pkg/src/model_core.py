"""
Utility-model abstraction, finite-support posteriors and the receiver's
best-response solver.

Every evaluator takes ``(state, action)`` array-likes and broadcasts them the
way numpy ufuncs do, so a whole (state x action) grid can be evaluated in one
call. Scalar inputs give 0-d results.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .errors import ConcavityViolation, DomainError, NoInteriorRoot

logger = logging.getLogger(__name__)

FOC_TOL = 1e-10
BISECT_XTOL = 1e-13
SCAN_POINTS = 64
FD_STEP = 1e-4
PROB_SUM_TOL = 1e-12

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class StateActionModel:
    """Receiver utility U and sender utility V with their action partials.

    The optional higher partials fall back to central finite differences of
    the first/second partials when they are missing (see ``model_partials``).
    """

    state_domain: Tuple[float, float]
    action_domain: Tuple[float, float]
    eval_U: Evaluator
    eval_V: Evaluator
    eval_Ua: Evaluator
    eval_Uaa: Evaluator
    eval_Va: Evaluator
    eval_Uaw: Optional[Evaluator] = None
    eval_Uaaa: Optional[Evaluator] = None
    eval_Uaaw: Optional[Evaluator] = None
    eval_Vaa: Optional[Evaluator] = None
    eval_Vaw: Optional[Evaluator] = None
    family: str = 'custom'
    params: Mapping[str, object] = field(default_factory=dict)
    linear_receiver: bool = False

    def __post_init__(self):
        for name in ('state_domain', 'action_domain'):
            lo, hi = (float(x) for x in getattr(self, name))
            if not lo < hi:
                raise DomainError(f"{name} must be a proper interval, got [{lo}, {hi}]")
            object.__setattr__(self, name, (lo, hi))

    @property
    def has_closed_form_partials(self) -> bool:
        return all(f is not None for f in (
            self.eval_Uaw, self.eval_Uaaa, self.eval_Uaaw, self.eval_Vaa, self.eval_Vaw))

    def contains_states(self, states) -> bool:
        s = np.asarray(states, dtype=float)
        lo, hi = self.state_domain
        return bool(np.all((s >= lo) & (s <= hi)))

    def contains_actions(self, actions) -> bool:
        a = np.asarray(actions, dtype=float)
        lo, hi = self.action_domain
        return bool(np.all((a >= lo) & (a <= hi)))


@dataclass(frozen=True)
class Posterior:
    """Finite-support belief over states, kept in increasing-state order."""

    support: Tuple[float, ...]
    probabilities: Tuple[float, ...]

    def __post_init__(self):
        support = [float(s) for s in self.support]
        probs = [float(p) for p in self.probabilities]
        if len(support) != len(probs) or not support:
            raise ValueError("Posterior needs a non-empty support with one probability per state")
        order = sorted(range(len(support)), key=lambda i: support[i])
        support = [support[i] for i in order]
        probs = [probs[i] for i in order]
        if any(b <= a for a, b in zip(support, support[1:])):
            raise ValueError(f"Posterior support has duplicate states: {support}")
        if any(not np.isfinite(p) or p <= 0.0 for p in probs):
            raise ValueError(f"Posterior probabilities must be strictly positive: {probs}")
        if abs(sum(probs) - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"Posterior probabilities sum to {sum(probs)!r}, not 1")
        object.__setattr__(self, 'support', tuple(support))
        object.__setattr__(self, 'probabilities', tuple(probs))

    @classmethod
    def from_mapping(cls, mapping: Mapping[float, float]) -> 'Posterior':
        return cls(tuple(mapping.keys()), tuple(mapping.values()))

    @classmethod
    def point_mass(cls, state: float) -> 'Posterior':
        return cls((float(state),), (1.0,))

    @classmethod
    def normalized(cls, states: Sequence[float], weights: Sequence[float]) -> 'Posterior':
        """Build a posterior from nonnegative weights, dropping zero-weight states."""
        w = np.asarray(weights, dtype=float)
        s = np.asarray(states, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("Weights must be nonnegative with a positive total")
        keep = w > 0
        w = w[keep] / w[keep].sum()
        return cls(tuple(s[keep]), tuple(w))

    @property
    def states(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.probabilities, dtype=float)

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.states))

    def as_mapping(self) -> Dict[float, float]:
        return dict(zip(self.support, self.probabilities))

    def __len__(self) -> int:
        return len(self.support)


@dataclass(frozen=True)
class Partials:
    """Action partials of U and V at one or many (state, action) points."""

    u_a: np.ndarray
    u_aa: np.ndarray
    u_aw: np.ndarray
    u_aaa: np.ndarray
    u_aaw: np.ndarray
    v_a: np.ndarray
    v_aa: np.ndarray
    v_aw: np.ndarray


def _check_support(model: StateActionModel, post: Posterior):
    if not model.contains_states(post.states):
        raise DomainError(
            f"Posterior support {post.support} leaves state domain {model.state_domain}")


def expected_marginal(model: StateActionModel, post: Posterior, actions):
    """g(a) = sum_i pi_i * U_a(omega_i, a), vectorized over actions."""
    a = np.asarray(actions, dtype=float)
    values = model.eval_Ua(post.states.reshape((-1,) + (1,) * a.ndim), a)
    return np.tensordot(post.weights, values, axes=1)


def _expected_curvature(model: StateActionModel, post: Posterior, action: float) -> float:
    return float(np.dot(post.weights, model.eval_Uaa(post.states, action)))


def best_response(model: StateActionModel, post: Posterior, foc_tol: float = FOC_TOL) -> float:
    """Receiver's optimal action under ``post``.

    Scans the action domain for the sign change of the expected marginal
    utility, bisects down to BISECT_XTOL and finishes with one Newton step.
    """
    _check_support(model, post)
    lo, hi = model.action_domain
    scan = np.linspace(lo, hi, SCAN_POINTS)
    g_scan = np.asarray(expected_marginal(model, post, scan), dtype=float)

    exact = np.flatnonzero(g_scan == 0.0)
    if exact.size:
        return float(scan[exact[0]])

    crossings = np.flatnonzero((g_scan[:-1] > 0) & (g_scan[1:] < 0))
    if crossings.size == 0:
        raise NoInteriorRoot(
            f"Expected marginal utility has no sign change on {model.action_domain} "
            f"for posterior {post.as_mapping()}")
    left, right = scan[crossings[0]], scan[crossings[0] + 1]

    def g(a):
        return float(expected_marginal(model, post, a))

    root = optimize.bisect(g, left, right, xtol=BISECT_XTOL)
    g_root = g(root)
    slope = _expected_curvature(model, post, root)
    if slope < 0 and g_root != 0.0:
        polished = root - g_root / slope
        if left <= polished <= right:
            g_polished = g(polished)
            if abs(g_polished) <= abs(g_root):
                root, g_root = polished, g_polished
    if abs(g_root) > foc_tol:
        logger.warning(f"FOC residual {g_root:.3e} above tolerance at a*={root:.12g}")
    logger.debug(f"best response {root:.15g} bracket=[{left:.6g}, {right:.6g}] residual={g_root:.2e}")
    return float(root)


def state_optimum(model: StateActionModel, state: float) -> float:
    """a*(omega): best response to a point mass."""
    return best_response(model, Posterior.point_mass(state))


def ratio(model: StateActionModel, state, action):
    """V_a / (-U_aa), elementwise."""
    uaa = np.asarray(model.eval_Uaa(state, action), dtype=float)
    if np.any(~(uaa < 0)):
        raise ConcavityViolation(f"U_aa must be negative, got max {np.max(uaa):.6g}")
    out = np.asarray(model.eval_Va(state, action), dtype=float) / (-uaa)
    return float(out) if out.ndim == 0 else out


def sender_value(model: StateActionModel, post: Posterior) -> float:
    action = best_response(model, post)
    return float(np.dot(post.weights, model.eval_V(post.states, action)))


def finite_difference_partials(model: StateActionModel, state, action,
                               step: float = FD_STEP) -> Partials:
    """Central-difference estimates of the cross and third partials."""
    if step <= 0:
        raise ValueError("Finite-difference step must be positive")
    w = np.asarray(state, dtype=float)
    a = np.asarray(action, dtype=float)
    s_lo, s_hi = model.state_domain
    a_lo, a_hi = model.action_domain
    if np.any(w - step < s_lo) or np.any(w + step > s_hi) \
            or np.any(a - 2 * step < a_lo) or np.any(a + 2 * step > a_hi):
        raise DomainError(f"Finite-difference stencil with step {step} leaves the domain rectangle")

    def d_state(f):
        return (f(w + step, a) - f(w - step, a)) / (2 * step)

    def d_action(f):
        return (f(w, a + step) - f(w, a - step)) / (2 * step)

    return Partials(
        u_a=np.asarray(model.eval_Ua(w, a), dtype=float),
        u_aa=np.asarray(model.eval_Uaa(w, a), dtype=float),
        u_aw=d_state(model.eval_Ua),
        u_aaa=d_action(model.eval_Uaa),
        u_aaw=d_state(model.eval_Uaa),
        v_a=np.asarray(model.eval_Va(w, a), dtype=float),
        v_aa=d_action(model.eval_Va),
        v_aw=d_state(model.eval_Va),
    )


def model_partials(model: StateActionModel, state, action, step: float = FD_STEP) -> Partials:
    """Closed-form partials where the model has them, central differences otherwise."""
    w = np.asarray(state, dtype=float)
    a = np.asarray(action, dtype=float)
    fd = None if model.has_closed_form_partials else finite_difference_partials(model, w, a, step)

    def pick(closed, estimate):
        if closed is not None:
            return np.broadcast_to(np.asarray(closed(w, a), dtype=float), np.broadcast(w, a).shape)
        return getattr(fd, estimate)

    return Partials(
        u_a=np.asarray(model.eval_Ua(w, a), dtype=float),
        u_aa=np.asarray(model.eval_Uaa(w, a), dtype=float),
        u_aw=pick(model.eval_Uaw, 'u_aw'),
        u_aaa=pick(model.eval_Uaaa, 'u_aaa'),
        u_aaw=pick(model.eval_Uaaw, 'u_aaw'),
        v_a=np.asarray(model.eval_Va(w, a), dtype=float),
        v_aa=pick(model.eval_Vaa, 'v_aa'),
        v_aw=pick(model.eval_Vaw, 'v_aw'),
    )


def closed_form_discrepancy(model: StateActionModel, states, actions,
                            step: float = 1e-5) -> Dict[str, float]:
    """Max scaled gap between each closed-form partial and a central difference
    of the level or partial it differentiates."""
    w, a = np.meshgrid(np.asarray(states, dtype=float), np.asarray(actions, dtype=float),
                       indexing='ij')

    def d_action(f):
        return (f(w, a + step) - f(w, a - step)) / (2 * step)

    def d_state(f):
        return (f(w + step, a) - f(w - step, a)) / (2 * step)

    pairs = {
        'U_a': (model.eval_Ua, d_action(model.eval_U)),
        'U_aa': (model.eval_Uaa, d_action(model.eval_Ua)),
        'V_a': (model.eval_Va, d_action(model.eval_V)),
    }
    optional = {
        'U_aw': (model.eval_Uaw, model.eval_Ua, d_state),
        'U_aaa': (model.eval_Uaaa, model.eval_Uaa, d_action),
        'U_aaw': (model.eval_Uaaw, model.eval_Uaa, d_state),
        'V_aa': (model.eval_Vaa, model.eval_Va, d_action),
        'V_aw': (model.eval_Vaw, model.eval_Va, d_state),
    }
    for name, (closed, base, diff) in optional.items():
        if closed is not None:
            pairs[name] = (closed, diff(base))

    gaps = {}
    for name, (closed, estimate) in pairs.items():
        exact = np.broadcast_to(np.asarray(closed(w, a), dtype=float), w.shape)
        scale = max(float(np.max(np.abs(exact))), 1e-300)
        gaps[name] = float(np.max(np.abs(exact - estimate)) / scale)
    return gaps


def validate_model(model: StateActionModel, n_states: int = 9, n_actions: int = 65):
    """Check strict concavity and the interior-optimum sign change on a sample grid."""
    states = np.linspace(*model.state_domain, n_states)
    actions = np.linspace(*model.action_domain, n_actions)
    w, a = np.meshgrid(states, actions, indexing='ij')
    uaa = np.asarray(model.eval_Uaa(w, a), dtype=float)
    if np.any(~(uaa < 0)):
        raise ConcavityViolation(f"{model.family}: U_aa is not negative on the domain rectangle")
    ua = np.asarray(model.eval_Ua(w, a), dtype=float)
    if np.any(ua[:, 0] < 0) or np.any(ua[:, -1] > 0):
        raise NoInteriorRoot(f"{model.family}: U_a does not change sign on {model.action_domain}")


def bracket_action_domain(ua: Evaluator, states, lower: float, start: float = 1.0,
                          max_doublings: int = 80) -> float:
    """Smallest doubling of ``start`` at which U_a is negative for every state."""
    s = np.asarray(states, dtype=float)
    upper = max(start, 2 * lower)
    for _ in range(max_doublings):
        if np.all(np.asarray(ua(s, upper), dtype=float) < 0):
            return upper
        upper *= 2.0
    raise NoInteriorRoot(f"U_a stays nonnegative up to a = {upper:.3g}")


def with_state_shift(model: StateActionModel,
                     alpha_u: Optional[Callable] = None,
                     alpha_v: Optional[Callable] = None) -> StateActionModel:
    """Add state-only terms alpha(omega) to U and/or V."""
    eval_U, eval_V = model.eval_U, model.eval_V
    shifted_U = eval_U if alpha_u is None else (lambda w, a: eval_U(w, a) + alpha_u(np.asarray(w, dtype=float)))
    shifted_V = eval_V if alpha_v is None else (lambda w, a: eval_V(w, a) + alpha_v(np.asarray(w, dtype=float)))
    return replace(model, eval_U=shifted_U, eval_V=shifted_V)


def with_sender_scale(model: StateActionModel, factor: float) -> StateActionModel:
    """Multiply V and its partials by a positive constant."""
    if not factor > 0:
        raise ValueError(f"Sender scale must be positive, got {factor}")

    def scaled(f):
        return None if f is None else (lambda w, a: factor * f(w, a))

    return replace(model, eval_V=scaled(model.eval_V), eval_Va=scaled(model.eval_Va),
                   eval_Vaa=scaled(model.eval_Vaa), eval_Vaw=scaled(model.eval_Vaw))
