"""
Brute-force persuasion oracle on finite-state instances.

Binary split gains (direct and as integrals of V_a), the FOC change of
variables, the three-message decomposition of a pooled message, and
concavification of the sender's value over 2- and 3-state simplices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.spatial import ConvexHull, QhullError

from .errors import (
    DegenerateSimplex,
    InfeasibleWeights,
    MonotonicityViolation,
    NoOpposingStates,
)
from .model_core import Posterior, StateActionModel, best_response, sender_value, state_optimum

logger = logging.getLogger(__name__)

ENV_TOL = 1e-7
DEGENERATE_ACTION_TOL = 1e-12
GL_NODES = 16


class EnvelopeVerdict(str, Enum):
    FULL_DISCLOSURE_OPTIMAL = 'FULL_DISCLOSURE_OPTIMAL'
    FULL_DISCLOSURE_SUBOPTIMAL = 'FULL_DISCLOSURE_SUBOPTIMAL'


@dataclass(frozen=True)
class BinarySplitResult:
    """Pooling two states versus revealing them; states reordered so the
    low-action state comes first."""

    omega_low: float
    omega_high: float
    pi_low: float
    a_pool: float
    a_low: float
    a_high: float
    k: float
    gain: float
    effort_delta: float
    foc_residual: float = 0.0

    @property
    def pi_high(self) -> float:
        return 1.0 - self.pi_low

    @property
    def degenerate(self) -> bool:
        return abs(self.a_high - self.a_low) <= DEGENERATE_ACTION_TOL

    def to_record(self) -> Dict[str, float]:
        return {k: float(v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class ChangeOfVariablesResult:
    k: float
    residual: float
    samples: int


@dataclass(frozen=True)
class SubMessage:
    posterior: Optional[Posterior]
    weight: float


@dataclass(frozen=True)
class ThreeMessageDecomposition:
    pooled_action: float
    low: SubMessage
    high: SubMessage
    rest: SubMessage
    comp_residual: float

    def mixture(self) -> Dict[float, float]:
        """Total probability of each state across the three messages."""
        out: Dict[float, float] = {}
        for msg in (self.low, self.high, self.rest):
            if msg.posterior is None or msg.weight == 0:
                continue
            for s, p in msg.posterior.as_mapping().items():
                out[s] = out.get(s, 0.0) + msg.weight * p
        return out


@dataclass(frozen=True)
class EnvelopeResult:
    states: Tuple[float, ...]
    prior: Tuple[float, ...]
    sample_coords: np.ndarray
    sample_values: np.ndarray
    envelope_value_at_prior: float
    full_disclosure_value: float
    prior_value: float
    optimal_split: Tuple[Tuple[Tuple[float, ...], float], ...]
    verdict: EnvelopeVerdict
    margin: float
    max_gap: float
    envelope_values: Optional[np.ndarray] = None

    def samples_frame(self) -> pd.DataFrame:
        cols = {f'p_{i}': self.sample_coords[:, i] for i in range(len(self.states))}
        frame = pd.DataFrame(cols)
        frame['sender_value'] = self.sample_values
        if self.envelope_values is not None:
            frame['envelope'] = self.envelope_values
        return frame

    def split_mean(self) -> np.ndarray:
        return sum(w * np.asarray(c) for c, w in self.optimal_split)

    def to_record(self) -> Dict[str, object]:
        return {
            'states': list(self.states),
            'prior': list(self.prior),
            'envelope_value_at_prior': float(self.envelope_value_at_prior),
            'full_disclosure_value': float(self.full_disclosure_value),
            'prior_value': float(self.prior_value),
            'optimal_split': [{'posterior': [float(x) for x in c], 'weight': float(w)}
                              for c, w in self.optimal_split],
            'verdict': self.verdict.value,
            'margin': float(self.margin),
            'max_gap': float(self.max_gap),
            'samples': int(self.sample_values.size),
        }


@dataclass(frozen=True)
class PairScanReport:
    table: pd.DataFrame
    worst: Dict[str, float]
    env_tol: float

    @property
    def min_gain(self) -> float:
        return float(self.worst['gain'])

    @property
    def certificate(self) -> bool:
        return self.min_gain < -self.env_tol


def _split_setup(model, omega_1, omega_2, pi_1):
    if omega_1 == omega_2:
        raise ValueError("Binary split needs two distinct states")
    if not 0.0 < pi_1 < 1.0:
        raise ValueError(f"pi_1 must lie in (0, 1), got {pi_1}")
    a_1, a_2 = state_optimum(model, omega_1), state_optimum(model, omega_2)
    if a_1 <= a_2:
        return omega_1, omega_2, pi_1, a_1, a_2
    return omega_2, omega_1, 1.0 - pi_1, a_2, a_1


def binary_split_gain(model: StateActionModel, omega_1: float, omega_2: float,
                      pi_1: float) -> BinarySplitResult:
    """Sender's gain from revealing two states instead of pooling them."""
    w_lo, w_hi, p_lo, a_lo, a_hi = _split_setup(model, float(omega_1), float(omega_2), float(pi_1))
    p_hi = 1.0 - p_lo
    if abs(a_hi - a_lo) <= DEGENERATE_ACTION_TOL:
        return BinarySplitResult(w_lo, w_hi, p_lo, a_lo, a_lo, a_hi, 0.0, 0.0, 0.0)

    pooled = best_response(model, Posterior((w_lo, w_hi), (p_lo, p_hi)))
    ua_lo = float(model.eval_Ua(w_lo, pooled))
    ua_hi = float(model.eval_Ua(w_hi, pooled))
    V = model.eval_V
    gain = p_hi * (float(V(w_hi, a_hi)) - float(V(w_hi, pooled))) \
        - p_lo * (float(V(w_lo, pooled)) - float(V(w_lo, a_lo)))
    return BinarySplitResult(
        omega_low=w_lo, omega_high=w_hi, pi_low=p_lo,
        a_pool=pooled, a_low=a_lo, a_high=a_hi,
        k=p_lo * ua_lo,
        gain=gain,
        effort_delta=p_lo * a_lo + p_hi * a_hi - pooled,
        foc_residual=p_lo * ua_lo + p_hi * ua_hi,
    )


def _gauss_legendre(f, lo: float, hi: float, quad_points: int) -> float:
    if hi == lo:
        return 0.0
    panels = max(1, quad_points // GL_NODES)
    nodes, weights = np.polynomial.legendre.leggauss(GL_NODES)
    edges = np.linspace(lo, hi, panels + 1)
    total = 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        half = 0.5 * (right - left)
        x = 0.5 * (left + right) + half * nodes
        total += half * float(np.dot(weights, f(x)))
    return total


def gain_via_integrals(model: StateActionModel, omega_1: float, omega_2: float, pi_1: float,
                       quad_points: int = 64) -> float:
    """The split gain as the difference of two integrals of probability-weighted V_a."""
    split = binary_split_gain(model, omega_1, omega_2, pi_1)
    if split.degenerate:
        return 0.0
    upper = _gauss_legendre(lambda a: model.eval_Va(split.omega_high, a),
                            split.a_pool, split.a_high, quad_points)
    lower = _gauss_legendre(lambda a: model.eval_Va(split.omega_low, a),
                            split.a_low, split.a_pool, quad_points)
    return split.pi_high * upper - split.pi_low * lower


def change_of_variables_check(model: StateActionModel, omega_1: float, omega_2: float,
                              pi_1: float, samples: int = 257) -> ChangeOfVariablesResult:
    """Check that x1(a) = pi_low * U_a(w_low, a) and x2(a) = -pi_high * U_a(w_high, a)
    both sweep [k, 0] monotonically between the state optima and the pooled action."""
    split = binary_split_gain(model, omega_1, omega_2, pi_1)
    if not split.a_low < split.a_pool < split.a_high:
        raise ValueError("Change of variables needs a_low < a_pool < a_high")
    left = np.linspace(split.a_low, split.a_pool, samples)
    right = np.linspace(split.a_pool, split.a_high, samples)
    x1 = split.pi_low * np.asarray(model.eval_Ua(split.omega_low, left), dtype=float)
    x2 = -split.pi_high * np.asarray(model.eval_Ua(split.omega_high, right), dtype=float)
    if np.any(np.diff(x1) > 0):
        raise MonotonicityViolation(f"x1 increases on [{split.a_low:.6g}, {split.a_pool:.6g}]")
    if np.any(np.diff(x2) < 0):
        raise MonotonicityViolation(f"x2 decreases on [{split.a_pool:.6g}, {split.a_high:.6g}]")
    residual = max(abs(x1[0]), abs(x2[-1]), abs(x1[-1] - split.k), abs(x2[0] - split.k))
    return ChangeOfVariablesResult(k=split.k, residual=float(residual), samples=samples)


def three_message_decomposition(model: StateActionModel, post: Posterior,
                                low_index: Optional[int] = None,
                                high_index: Optional[int] = None) -> ThreeMessageDecomposition:
    """Split a pooled message into a point mass on a low state, a point mass on a
    high state and a remainder that still induces the pooled action.

    Without indices the first state with negative marginal utility and the last
    with positive marginal utility are used.
    """
    pooled = best_response(model, post)
    states, probs = post.states, post.weights
    marginals = np.asarray(model.eval_Ua(states, pooled), dtype=float)
    if low_index is None:
        negative = np.flatnonzero(marginals < 0)
        low_index = int(negative[0]) if negative.size else None
    if high_index is None:
        positive = np.flatnonzero(marginals > 0)
        high_index = int(positive[-1]) if positive.size else None
    if low_index is None or high_index is None \
            or not marginals[low_index] < 0 < marginals[high_index]:
        raise NoOpposingStates(f"No opposing states at a*={pooled:.6g} for {post.as_mapping()}")

    u_lo, u_hi = marginals[low_index], marginals[high_index]
    p_lo, p_hi = probs[low_index], probs[high_index]
    if len(post) == 2:
        theta_lo = theta_hi = 1.0
    else:
        balance = -(p_hi * u_hi) / (p_lo * u_lo)
        if not np.isfinite(balance) or balance <= 0:
            raise InfeasibleWeights(f"Cannot balance marginal utilities, ratio={balance}")
        if balance >= 1.0:
            theta_lo, theta_hi = 0.5, 0.5 / balance
        else:
            theta_lo, theta_hi = 0.5 * balance, 0.5

    w_lo, w_hi = theta_lo * p_lo, theta_hi * p_hi
    low = SubMessage(Posterior.point_mass(states[low_index]), float(w_lo))
    high = SubMessage(Posterior.point_mass(states[high_index]), float(w_hi))
    remaining = probs.copy()
    remaining[low_index] -= w_lo
    remaining[high_index] -= w_hi
    remaining[remaining < 0] = 0.0
    rest_weight = float(remaining.sum())
    if len(post) == 2 or rest_weight <= 0:
        rest = SubMessage(None, 0.0)
    else:
        rest = SubMessage(Posterior.normalized(states, remaining), rest_weight)
    residual = float(w_lo * u_lo + w_hi * u_hi)
    logger.debug(f"three-message split at a*={pooled:.6g}: weights {w_lo:.4g}/{w_hi:.4g}/{rest_weight:.4g}")
    return ThreeMessageDecomposition(pooled, low, high, rest, residual)


def _upper_hull(xs: np.ndarray, ys: np.ndarray) -> List[int]:
    """Indices of the upper hull, left to right (monotone chain)."""
    hull: List[int] = []
    for i in range(xs.size):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (xs[a] - xs[o]) * (ys[i] - ys[o]) - (ys[a] - ys[o]) * (xs[i] - xs[o])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def _full_disclosure_values(model: StateActionModel, states: Sequence[float]) -> np.ndarray:
    return np.array([float(model.eval_V(s, state_optimum(model, s))) for s in states])


def _value_at(model: StateActionModel, states: Sequence[float], coords) -> float:
    return sender_value(model, Posterior.normalized(states, coords))


def concavify_2state(model: StateActionModel, states: Sequence[float], prior_p: float,
                     resolution: int = 101, env_tol: float = ENV_TOL) -> EnvelopeResult:
    """Concave envelope of p -> sender value at posterior (1 - p, p) on two states."""
    lo, hi = (float(s) for s in states)
    if lo == hi:
        raise DegenerateSimplex("concavify_2state needs two distinct states")
    if lo > hi:
        lo, hi, prior_p = hi, lo, 1.0 - prior_p
    if not 0.0 < prior_p < 1.0:
        raise ValueError(f"Prior probability must lie in (0, 1), got {prior_p}")
    if resolution < 17:
        raise ValueError(f"Resolution must be at least 17, got {resolution}")

    ps = np.unique(np.append(np.linspace(0.0, 1.0, resolution), prior_p))
    values = np.array([_value_at(model, (lo, hi), (1.0 - p, p)) for p in ps])
    hull = _upper_hull(ps, values)
    envelope = np.interp(ps, ps[hull], values[hull])

    fd = _full_disclosure_values(model, (lo, hi))
    chord = (1.0 - ps) * fd[0] + ps * fd[1]
    full_value = float((1.0 - prior_p) * fd[0] + prior_p * fd[1])
    prior_value = float(values[np.searchsorted(ps, prior_p)])
    env_value = float(np.interp(prior_p, ps[hull], values[hull]))

    hull_ps = ps[hull]
    right = int(np.searchsorted(hull_ps, prior_p, side='left'))
    if hull_ps[right] == prior_p:
        split = (((1.0 - prior_p, prior_p), 1.0),)
    else:
        p_l, p_r = hull_ps[right - 1], hull_ps[right]
        w_r = (prior_p - p_l) / (p_r - p_l)
        split = (((1.0 - p_l, p_l), 1.0 - w_r), ((1.0 - p_r, p_r), w_r))

    gap = float(np.max(values - chord))
    optimal = gap <= env_tol
    verdict = EnvelopeVerdict.FULL_DISCLOSURE_OPTIMAL if optimal else EnvelopeVerdict.FULL_DISCLOSURE_SUBOPTIMAL
    margin = full_value - prior_value if optimal else env_value - full_value
    logger.info(f"concavify_2state {verdict.value} margin={margin:.6g} max_gap={gap:.3e}")
    return EnvelopeResult((lo, hi), (1.0 - prior_p, prior_p), np.column_stack([1.0 - ps, ps]), values,
                          env_value, full_value, prior_value, split, verdict, margin, gap, envelope)


def simplex_grid(resolution: int) -> np.ndarray:
    """Barycentric points (i, j, k) / resolution with i + j + k = resolution."""
    pts = [(i, j, resolution - i - j) for i in range(resolution + 1) for j in range(resolution + 1 - i)]
    return np.asarray(pts, dtype=float) / resolution


def _hull_envelope(coords: np.ndarray, values: np.ndarray, prior: np.ndarray):
    """Highest upward facet of the lifted hull above the prior."""
    lifted = np.column_stack([coords[:, 1], coords[:, 2], values])
    hull = ConvexHull(lifted)
    target = prior[1:]
    best = None
    for simplex, eq in zip(hull.simplices, hull.equations):
        if eq[2] <= 1e-12:
            continue
        tri = lifted[simplex, :2]
        mat = np.array([[tri[0, 0] - tri[2, 0], tri[1, 0] - tri[2, 0]],
                        [tri[0, 1] - tri[2, 1], tri[1, 1] - tri[2, 1]]])
        if abs(np.linalg.det(mat)) < 1e-15:
            continue
        l1, l2 = np.linalg.solve(mat, target - tri[2])
        bary = np.array([l1, l2, 1.0 - l1 - l2])
        if np.any(bary < -1e-9):
            continue
        value = -(eq[0] * target[0] + eq[1] * target[1] + eq[3]) / eq[2]
        if best is None or value > best[0]:
            bary = np.clip(bary, 0.0, None)
            best = (value, simplex, bary / bary.sum())
    if best is None:
        raise QhullError("no upward facet above the prior")
    value, simplex, bary = best
    split = tuple((tuple(coords[i]), float(b)) for i, b in zip(simplex, bary) if b > 0)
    return float(value), split


def _lp_envelope(coords: np.ndarray, values: np.ndarray, prior: np.ndarray):
    """max sum lambda_i v_i subject to sum lambda_i x_i = prior, lambda >= 0."""
    res = optimize.linprog(-values, A_eq=coords.T, b_eq=prior, bounds=(0, None), method='highs')
    if not res.success:
        raise DegenerateSimplex(f"Envelope LP failed: {res.message}")
    keep = res.x > 1e-12
    weights = res.x[keep] / res.x[keep].sum()
    split = tuple((tuple(c), float(w)) for c, w in zip(coords[keep], weights))
    return float(-res.fun), split


def concavify_3state(model: StateActionModel, states: Sequence[float], prior: Posterior,
                     resolution: int = 60, env_tol: float = ENV_TOL) -> EnvelopeResult:
    """Concave envelope over the 2-simplex of posteriors on three states."""
    states = tuple(float(s) for s in states)
    if len(states) != 3 or len(set(states)) != 3:
        raise DegenerateSimplex(f"concavify_3state needs three distinct states, got {states}")
    states = tuple(sorted(states))
    if tuple(prior.support) != states:
        raise ValueError(f"Prior must be fully supported on {states}, got {prior.support}")
    prior_vec = prior.weights

    coords = np.vstack([simplex_grid(resolution), prior_vec])
    values = np.array([_value_at(model, states, c) for c in coords])
    fd = _full_disclosure_values(model, states)
    plane = coords @ fd
    full_value = float(prior_vec @ fd)
    prior_value = float(values[-1])

    design = np.column_stack([coords[:, 1], coords[:, 2], np.ones(len(coords))])
    fit, *_ = np.linalg.lstsq(design, values, rcond=None)
    flat = np.max(np.abs(design @ fit - values)) <= env_tol * 1e-3
    try:
        if flat:
            raise QhullError("lifted samples are coplanar")
        env_value, split = _hull_envelope(coords, values, prior_vec)
    except QhullError as e:
        logger.info(f"solving the envelope LP instead of the hull ({str(e).splitlines()[0]})")
        env_value, split = _lp_envelope(coords, values, prior_vec)

    gap = float(np.max(values - plane))
    optimal = gap <= env_tol
    verdict = EnvelopeVerdict.FULL_DISCLOSURE_OPTIMAL if optimal else EnvelopeVerdict.FULL_DISCLOSURE_SUBOPTIMAL
    margin = full_value - prior_value if optimal else env_value - full_value
    logger.info(f"concavify_3state {verdict.value} margin={margin:.6g} samples={values.size}")
    return EnvelopeResult(states, tuple(prior_vec), coords, values, env_value, full_value,
                          prior_value, split, verdict, margin, gap)


def binary_pair_scan(model: StateActionModel, prior_support: Sequence[float], pi_grid: int = 11,
                     env_tol: float = ENV_TOL) -> PairScanReport:
    """Split gains for every support pair and every interior pi_1 on a uniform grid."""
    support = sorted(float(s) for s in prior_support)
    if len(support) < 2:
        raise ValueError("binary_pair_scan needs at least two support states")
    if pi_grid < 3:
        raise ValueError("pi_grid must have at least one interior point")
    pis = np.linspace(0.0, 1.0, pi_grid)[1:-1]
    rows = []
    for omega_1, omega_2 in combinations(support, 2):
        for pi_1 in pis:
            split = binary_split_gain(model, omega_1, omega_2, pi_1)
            rows.append({'omega_1': omega_1, 'omega_2': omega_2, 'pi_1': float(pi_1),
                         **split.to_record()})
    table = pd.DataFrame(rows)
    worst = table.sort_values(['gain', 'omega_1', 'omega_2', 'pi_1'], kind='mergesort').iloc[0]
    report = PairScanReport(table, {k: float(v) for k, v in worst.items()}, env_tol)
    logger.info(f"pair scan: {len(rows)} splits, min gain {report.min_gain:.6g}, "
                f"certificate={report.certificate}")
    return report
