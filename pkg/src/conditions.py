"""
Grid checkers for the full-disclosure conditions.

Every checker returns a ``ConditionVerdict``. A verdict is evidence at the
grid's resolution, never a proof over the continuum.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, MissingDerivatives, NotLinearReceiver
from .model_core import (
    StateActionModel,
    model_partials,
    ratio,
    state_optimum,
)

logger = logging.getLogger(__name__)

MARGIN_TOL_REL = 1e-9
DERIV_TOL = 1e-9
DERIV_MARGIN_TOL = 1e-9
LINEAR_FORM_TOL = 1e-9
MAX_WITNESSES = 16


class Status(str, Enum):
    HOLDS_STRICTLY = 'HOLDS_STRICTLY'
    HOLDS_WEAKLY = 'HOLDS_WEAKLY'
    VIOLATED = 'VIOLATED'
    VACUOUS = 'VACUOUS'
    NONE_FOUND = 'NONE_FOUND'


class Disclosure(str, Enum):
    OPTIMAL = 'OPTIMAL'
    SUBOPTIMAL = 'SUBOPTIMAL'
    INCONCLUSIVE = 'INCONCLUSIVE'


@dataclass(frozen=True)
class GridSpec:
    """Uniform or custom (state x action) grid."""

    state_points: Tuple[float, ...]
    action_points: Tuple[float, ...]

    def __post_init__(self):
        states = tuple(float(s) for s in self.state_points)
        actions = tuple(float(a) for a in self.action_points)
        for name, pts in (('state', states), ('action', actions)):
            if len(pts) < 2:
                raise ValueError(f"Grid needs at least 2 {name} points, got {len(pts)}")
            if any(b <= a for a, b in zip(pts, pts[1:])):
                raise ValueError(f"Grid {name} points must be strictly increasing")
        object.__setattr__(self, 'state_points', states)
        object.__setattr__(self, 'action_points', actions)

    @classmethod
    def uniform(cls, state_range, action_range, n_states: int, n_actions: int) -> 'GridSpec':
        return cls(tuple(np.linspace(*state_range, n_states)),
                   tuple(np.linspace(*action_range, n_actions)))

    @property
    def states(self) -> np.ndarray:
        return np.asarray(self.state_points)

    @property
    def actions(self) -> np.ndarray:
        return np.asarray(self.action_points)

    @property
    def resolution(self) -> Tuple[int, int]:
        return len(self.state_points), len(self.action_points)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.states, self.actions, indexing='ij')

    def check_within(self, model: StateActionModel):
        if not model.contains_states(self.states):
            raise DomainError(f"Grid states leave state domain {model.state_domain}")
        if not model.contains_actions(self.actions):
            raise DomainError(f"Grid actions leave action domain {model.action_domain}")


def default_grid(model: StateActionModel, n_states: int = 101, n_actions: int = 201,
                 state_range: Optional[Tuple[float, float]] = None) -> GridSpec:
    """Grid whose action range brackets every state optimum by half its size on each side."""
    lo_s, hi_s = state_range or model.state_domain
    states = np.linspace(lo_s, hi_s, n_states)
    optima = np.array([state_optimum(model, s) for s in states])
    a_min, a_max = float(optima.min()), float(optima.max())
    lo = a_min - 0.5 * abs(a_min)
    hi = a_max + 0.5 * abs(a_max)
    lo = max(lo, model.action_domain[0])
    hi = min(hi, model.action_domain[1])
    if not lo < hi:
        lo, hi = model.action_domain
    logger.debug(f"default grid {n_states}x{n_actions}, actions in [{lo:.6g}, {hi:.6g}]")
    return GridSpec(tuple(states), tuple(np.linspace(lo, hi, n_actions)))


@dataclass(frozen=True)
class Witness:
    """A tested pair and its margin; for pointwise checks both points coincide."""

    point_1: Tuple[float, float]
    point_2: Tuple[float, float]
    value_1: float
    value_2: float
    margin: float

    def sort_key(self):
        return (self.margin, self.point_1[0], self.point_1[1], self.point_2[0], self.point_2[1])

    def to_record(self) -> Dict[str, object]:
        return {
            'point_1': [float(x) for x in self.point_1],
            'point_2': [float(x) for x in self.point_2],
            'value_1': float(self.value_1),
            'value_2': float(self.value_2),
            'margin': float(self.margin),
        }


@dataclass(frozen=True)
class ConditionVerdict:
    condition: str
    status: Status
    min_margin: Optional[float]
    witnesses: Tuple[Witness, ...]
    pairs_tested: int
    margin_tol: float
    resolution: Tuple[int, int]
    witness_states: Optional[Tuple[float, float]] = None
    necessary: bool = False
    details: Mapping[str, float] = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.status in (Status.HOLDS_STRICTLY, Status.HOLDS_WEAKLY)

    @property
    def evidence(self) -> str:
        return f"evidence at resolution ({self.resolution[0]}, {self.resolution[1]})"

    def to_record(self) -> Dict[str, object]:
        return {
            'condition': self.condition,
            'status': self.status.value,
            'min_margin': None if self.min_margin is None else float(self.min_margin),
            'margin_tol': float(self.margin_tol),
            'pairs_tested': int(self.pairs_tested),
            'resolution': list(self.resolution),
            'evidence': self.evidence,
            'witness_states': None if self.witness_states is None else [float(s) for s in self.witness_states],
            'necessary': self.necessary,
            'details': {k: float(v) for k, v in sorted(self.details.items())},
            'witnesses': [w.to_record() for w in self.witnesses],
        }


def margin_tolerance(values) -> float:
    """MARGIN_TOL_REL scaled by the median absolute value, or by 1 when that is 0."""
    v = np.abs(np.asarray(values, dtype=float))
    v = v[np.isfinite(v)]
    scale = float(np.median(v)) if v.size else 0.0
    return MARGIN_TOL_REL * (scale if scale > 0 else 1.0)


def classify(min_margin: Optional[float], tol: float, pairs: int) -> Status:
    if pairs == 0 or min_margin is None:
        return Status.VACUOUS
    if min_margin > tol:
        return Status.HOLDS_STRICTLY
    if min_margin >= -tol:
        return Status.HOLDS_WEAKLY
    return Status.VIOLATED


def top_witnesses(witnesses: List[Witness]) -> Tuple[Witness, ...]:
    return tuple(sorted(witnesses, key=Witness.sort_key)[:MAX_WITNESSES])


def _ratio_field(model: StateActionModel, grid: GridSpec):
    grid.check_within(model)
    w, a = grid.mesh()
    values = np.asarray(ratio(model, w, a), dtype=float)
    signs = np.asarray(model.eval_Ua(w, a), dtype=float)
    return values, signs


def _sign_switch_sweep(values, signs, states, actions):
    """Ascending-action sweep keeping the best (largest) value among
    negative-sign points of earlier columns.

    Returns per-point margins (nan where not admissible as a second point),
    partner indices and the number of admissible pairs.
    """
    n_w, n_a = values.shape
    margins = np.full(values.shape, np.nan)
    partner = np.full(values.shape + (2,), -1, dtype=int)
    best_val, best_pt = -np.inf, None
    neg_seen, pairs = 0, 0
    for j in range(n_a):
        pos = signs[:, j] > 0
        if best_pt is not None and pos.any():
            margins[pos, j] = values[pos, j] - best_val
            partner[pos, j] = best_pt
            pairs += neg_seen * int(pos.sum())
        rows = np.flatnonzero(signs[:, j] < 0)
        if rows.size:
            k = int(rows[np.argmax(values[rows, j])])
            v = values[k, j]
            if best_pt is None or v > best_val or (v == best_val and states[k] < states[best_pt[0]]):
                best_val, best_pt = v, (k, j)
            neg_seen += rows.size
    return margins, partner, pairs


def _pair_witnesses(margins, partner, values, states, actions) -> List[Witness]:
    out = []
    for i, j in zip(*np.nonzero(~np.isnan(margins))):
        k, l = partner[i, j]
        out.append(Witness((states[k], actions[l]), (states[i], actions[j]),
                           values[k, l], values[i, j], margins[i, j]))
    return out


def _sweep_verdict(name, values, signs, states, actions, tol, resolution) -> ConditionVerdict:
    margins, partner, pairs = _sign_switch_sweep(values, signs, states, actions)
    min_margin = float(np.nanmin(margins)) if pairs else None
    status = classify(min_margin, tol, pairs)
    witnesses = top_witnesses(_pair_witnesses(margins, partner, values, states, actions))
    logger.info(f"{name}: {status.value} min_margin={min_margin} pairs={pairs}")
    return ConditionVerdict(name, status, min_margin, witnesses, pairs, tol, resolution)


def check_weak_condition(model: StateActionModel, grid: GridSpec) -> ConditionVerdict:
    """ratio(w1, a1) <= ratio(w2, a2) whenever a1 < a2 and U_a(w1, a1) < 0 < U_a(w2, a2)."""
    values, signs = _ratio_field(model, grid)
    return _sweep_verdict('weak', values, signs, grid.states, grid.actions,
                          margin_tolerance(values), grid.resolution)


class _MaxFenwick:
    """Prefix maximum (with argmax key) and prefix count over integer ranks."""

    def __init__(self, size: int):
        self.size = size
        self.best = [None] * (size + 1)
        self.count = [0] * (size + 1)

    def add(self, rank: int, key):
        pos = rank + 1
        while pos <= self.size:
            if self.best[pos] is None or key > self.best[pos]:
                self.best[pos] = key
            self.count[pos] += 1
            pos += pos & -pos

    def query(self, rank: int):
        """Best key and count among ranks strictly below ``rank``."""
        best, count, pos = None, 0, rank
        while pos > 0:
            if self.best[pos] is not None and (best is None or self.best[pos] > best):
                best = self.best[pos]
            count += self.count[pos]
            pos -= pos & -pos
        return best, count


def check_derivable_condition(model: StateActionModel, grid: GridSpec) -> ConditionVerdict:
    """ratio(w1, a1) <= ratio(w2, a2) whenever a1 < a2 and U_a(w1, a1) < U_a(w2, a2)."""
    values, signs = _ratio_field(model, grid)
    states, actions = grid.states, grid.actions
    tol = margin_tolerance(values)
    levels = np.unique(signs)
    ranks = np.searchsorted(levels, signs, side='left')
    tree = _MaxFenwick(levels.size)
    witnesses, pairs, min_margin = [], 0, None
    n_w, n_a = values.shape
    for j in range(n_a):
        for i in range(n_w):
            best, count = tree.query(int(ranks[i, j]))
            if best is None:
                continue
            pairs += count
            value_1, _, _, k, l = best
            margin = float(values[i, j] - value_1)
            min_margin = margin if min_margin is None else min(min_margin, margin)
            witnesses.append(Witness((states[k], actions[l]), (states[i], actions[j]),
                                     value_1, values[i, j], margin))
        for i in range(n_w):
            # ties resolve to the smallest (state, action)
            tree.add(int(ranks[i, j]), (values[i, j], -states[i], -actions[j], i, j))
    status = classify(min_margin, tol, pairs)
    logger.info(f"derivable: {status.value} min_margin={min_margin} pairs={pairs}")
    return ConditionVerdict('derivable', status, min_margin, top_witnesses(witnesses),
                            pairs, tol, grid.resolution)


def naive_min_margin(model: StateActionModel, grid: GridSpec, condition: str = 'weak'):
    """Quadratic pair enumeration; returns (min_margin, pairs_tested)."""
    values, signs = _ratio_field(model, grid)
    v = values.ravel()
    s = signs.ravel()
    col = np.broadcast_to(np.arange(values.shape[1]), values.shape).ravel()
    mask = col[:, None] < col[None, :]
    if condition == 'weak':
        mask &= (s[:, None] < 0) & (s[None, :] > 0)
    elif condition == 'derivable':
        mask &= s[:, None] < s[None, :]
    else:
        raise ValueError(f"Unknown condition for enumeration: {condition}")
    pairs = int(mask.sum())
    if pairs == 0:
        return None, 0
    return float(np.min((v[None, :] - v[:, None])[mask])), pairs


def normalized_gap(lhs, rhs):
    denom = np.abs(lhs) + np.abs(rhs)
    return np.where(denom > 0, (lhs - rhs) / np.where(denom > 0, denom, 1.0), 0.0)


def check_derivative_conditions(model: StateActionModel, grid: GridSpec,
                                deriv_tol: float = DERIV_TOL) -> ConditionVerdict:
    """Pointwise sufficient conditions on U_aaw, U_aaa, V_aa and V_aw.

    Margins are normalized as (lhs - rhs) / (|lhs| + |rhs|) and sign-flipped
    where U_aw < 0. Points with |U_aw| <= deriv_tol are skipped.
    """
    grid.check_within(model)
    w, a = grid.mesh()
    try:
        p = model_partials(model, w, a)
    except DomainError as e:
        raise MissingDerivatives(f"Higher partials unavailable on this grid: {str(e)}") from e

    active = np.abs(p.u_aw) > deriv_tol
    skipped = int((~active).sum())
    if skipped:
        logger.warning(f"derivative: skipped {skipped} points with |U_aw| <= {deriv_tol}")
    direction = np.sign(p.u_aw)
    first = direction * normalized_gap(p.u_aaw * p.v_a, p.v_aw * p.u_aa)
    second = direction * normalized_gap(
        p.v_a * (p.u_aaa * p.u_aw - p.u_aaw * p.u_aa),
        p.u_aa * (p.v_aa * p.u_aw - p.v_aw * p.u_aa))
    tested = int(active.sum())
    if tested == 0:
        return ConditionVerdict('derivative', Status.VACUOUS, None, (), 0, DERIV_MARGIN_TOL,
                                grid.resolution, details={'skipped_points': float(skipped)})

    point_margin = np.minimum(first, second)
    min_margin = float(point_margin[active].min())
    witnesses = [
        Witness((w[i, j], a[i, j]), (w[i, j], a[i, j]), first[i, j], second[i, j], point_margin[i, j])
        for i, j in zip(*np.nonzero(active))
    ]
    details = {
        'first_min': float(first[active].min()),
        'second_min': float(second[active].min()),
        'skipped_points': float(skipped),
    }
    status = classify(min_margin, DERIV_MARGIN_TOL, tested)
    logger.info(f"derivative: {status.value} first_min={details['first_min']:.3e} "
                f"second_min={details['second_min']:.3e}")
    return ConditionVerdict('derivative', status, min_margin, top_witnesses(witnesses),
                            tested, DERIV_MARGIN_TOL, grid.resolution, details=details)


def check_suboptimality(model: StateActionModel, grid: GridSpec,
                        prior_support: Sequence[float]) -> ConditionVerdict:
    """Search the prior support for a state pair whose ratios are reversed on every
    admissible action pair.

    A pair counts only when it has at least one admissible action pair. The
    first such pair is reported in ``witness_states``; otherwise NONE_FOUND.
    """
    support = sorted(float(s) for s in prior_support)
    if len(support) < 2:
        raise ValueError("Suboptimality search needs at least two support states")
    if not model.contains_states(support):
        raise DomainError(f"Prior support {support} leaves state domain {model.state_domain}")
    grid.check_within(model)
    actions = grid.actions
    optima = {s: state_optimum(model, s) for s in support}
    rows = {s: np.asarray(ratio(model, s, actions), dtype=float) for s in support}
    signs = {s: np.asarray(model.eval_Ua(s, actions), dtype=float) for s in support}
    tol = margin_tolerance(np.concatenate(list(rows.values())))

    total_pairs, closest, closest_witnesses = 0, None, []
    for idx, s in enumerate(support):
        for t in support[idx + 1:]:
            low, high = (s, t) if optima[s] < optima[t] else (t, s)
            if optima[low] == optima[high]:
                continue
            r1, u1, r2, u2 = rows[low], signs[low], rows[high], signs[high]
            best, best_j, seen, pairs = np.inf, -1, 0, 0
            witnesses = []
            for j in range(actions.size):
                if u2[j] > 0 and best_j >= 0:
                    pairs += seen
                    witnesses.append(Witness((low, actions[best_j]), (high, actions[j]),
                                             r1[best_j], r2[j], best - r2[j]))
                if u1[j] < 0:
                    seen += 1
                    if r1[j] < best:
                        best, best_j = r1[j], j
            total_pairs += pairs
            if not witnesses:
                logger.debug(f"subopt: pair ({low}, {high}) is vacuous on this grid")
                continue
            min_margin = min(wt.margin for wt in witnesses)
            if min_margin > tol:
                logger.info(f"subopt: witness pair ({low}, {high}) min_margin={min_margin:.6g}")
                return ConditionVerdict('subopt', Status.HOLDS_STRICTLY, min_margin,
                                        top_witnesses(witnesses), pairs, tol, grid.resolution,
                                        witness_states=(low, high))
            if closest is None or min_margin > closest:
                closest, closest_witnesses = min_margin, witnesses
    logger.info(f"subopt: NONE_FOUND over {len(support)} support states")
    return ConditionVerdict('subopt', Status.NONE_FOUND, closest, top_witnesses(closest_witnesses),
                            total_pairs, tol, grid.resolution)


def check_linear_case(v_prime: Callable, grid: GridSpec) -> ConditionVerdict:
    """V'(a1) <= V'(a2) for all interior grid actions a1 < a2.

    Necessary as well as sufficient when V depends on the action only and the
    receiver's marginal utility is proportional to (state - action).
    """
    actions = grid.actions[(grid.actions > 0) & (grid.actions < 1)]
    slopes = np.broadcast_to(np.asarray(v_prime(actions), dtype=float), actions.shape)
    tol = margin_tolerance(slopes)
    witnesses, min_margin = [], None
    best, best_j = -np.inf, -1
    for j in range(actions.size):
        if best_j >= 0:
            margin = float(slopes[j] - best)
            min_margin = margin if min_margin is None else min(min_margin, margin)
            witnesses.append(Witness((actions[best_j], actions[best_j]), (actions[j], actions[j]),
                                     best, slopes[j], margin))
        if slopes[j] > best:
            best, best_j = slopes[j], j
    pairs = actions.size * (actions.size - 1) // 2
    status = classify(min_margin, tol, pairs)
    logger.info(f"linear_case: {status.value} min_margin={min_margin}")
    return ConditionVerdict('linear_case', status, min_margin, top_witnesses(witnesses), pairs,
                            tol, (grid.resolution[0], int(actions.size)), necessary=True)


def _receiver_slope(model: StateActionModel, w, a) -> float:
    """Constant c with U_a = c * (w - a); raises NotLinearReceiver otherwise."""
    uaa = np.asarray(model.eval_Uaa(w, a), dtype=float)
    c = float(-uaa.flat[0])
    ua = np.asarray(model.eval_Ua(w, a), dtype=float)
    scale = max(1.0, float(np.max(np.abs(ua))))
    if c <= 0 or np.max(np.abs(uaa + c)) > LINEAR_FORM_TOL * max(1.0, c) \
            or np.max(np.abs(ua - c * (w - a))) > LINEAR_FORM_TOL * scale:
        raise NotLinearReceiver(f"{model.family}: U_a is not c*(w - a) on the grid")
    return c


def check_linear_receiver(model: StateActionModel, grid: GridSpec) -> Dict[str, ConditionVerdict]:
    """Compare the sign-switch condition on V_a with the stronger requirement that
    V_a be nondecreasing in both action and state."""
    grid.check_within(model)
    w, a = grid.mesh()
    _receiver_slope(model, w, a)
    va = np.asarray(model.eval_Va(w, a), dtype=float)
    states, actions = grid.states, grid.actions
    tol = margin_tolerance(va)
    ours = _sweep_verdict('linear_receiver_ours', va, w - a, states, actions, tol, grid.resolution)

    along_a = va[:, 1:] - va[:, :-1]
    along_w = va[1:, :] - va[:-1, :]
    witnesses = [
        Witness((w[i, j], a[i, j]), (w[i, j + 1], a[i, j + 1]), va[i, j], va[i, j + 1], along_a[i, j])
        for i, j in np.ndindex(along_a.shape)
    ] + [
        Witness((w[i, j], a[i, j]), (w[i + 1, j], a[i + 1, j]), va[i, j], va[i + 1, j], along_w[i, j])
        for i, j in np.ndindex(along_w.shape)
    ]
    min_margin = float(min(along_a.min(), along_w.min()))
    pairs = along_a.size + along_w.size
    status = classify(min_margin, tol, pairs)
    kolotilin = ConditionVerdict('linear_receiver_kolotilin', status, min_margin,
                                 top_witnesses(witnesses), pairs, tol, grid.resolution,
                                 details={'action_min': float(along_a.min()),
                                          'state_min': float(along_w.min())})
    logger.info(f"linear_receiver: ours={ours.status.value} kolotilin={status.value}")
    return {'ours': ours, 'kolotilin': kolotilin}


def disclosure_verdict(weak: ConditionVerdict, subopt: ConditionVerdict) -> Disclosure:
    """Combine the sufficient conditions for optimality and for suboptimality."""
    found = subopt.status == Status.HOLDS_STRICTLY
    if found and weak.holds:
        logger.warning("weak condition holds while a suboptimality witness exists; grid too coarse?")
        return Disclosure.INCONCLUSIVE
    if found:
        return Disclosure.SUBOPTIMAL
    if weak.holds:
        return Disclosure.OPTIMAL
    logger.warning("neither condition settles full disclosure; defer to the oracle")
    return Disclosure.INCONCLUSIVE
