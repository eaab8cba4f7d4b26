"""
Built-in model families: CRRA principal-agent, separable production, the
quadratic-loss (cheap talk) receiver and the action-only sender case.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial

from .conditions import (
    DERIV_MARGIN_TOL,
    ConditionVerdict,
    Disclosure,
    GridSpec,
    Witness,
    classify,
    normalized_gap,
    top_witnesses,
)
from .errors import ConfigError, DomainError, InvalidParams
from .model_core import StateActionModel, bracket_action_domain

logger = logging.getLogger(__name__)

CRRA_ACTION_FLOOR = 1e-6
SEPARABLE_ACTION_FLOOR = 1e-6


def _positive_actions(a):
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise DomainError("Power-law utilities need strictly positive actions")
    return a


# CRRA principal-agent


@dataclass(frozen=True)
class CrraParams:
    gamma: float
    rho: float
    delta: float = 0.5
    kappa: float = 0.5

    def __post_init__(self):
        for name in ('gamma', 'rho', 'delta', 'kappa'):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise InvalidParams(f"{name} must be finite, got {value}")
        if self.gamma < 0 or self.rho < 0:
            raise InvalidParams(f"Risk aversions must be nonnegative, got gamma={self.gamma}, rho={self.rho}")
        if self.gamma == 1 or self.rho == 1:
            raise InvalidParams("Log utility (gamma = 1 or rho = 1) is not supported")
        if not 0 < self.delta < 1:
            raise InvalidParams(f"delta must lie in (0, 1), got {self.delta}")
        if not 0 < self.kappa < 1:
            raise InvalidParams(f"kappa must lie in (0, 1), got {self.kappa}")

    def as_dict(self) -> Dict[str, float]:
        return {'gamma': self.gamma, 'rho': self.rho, 'delta': self.delta, 'kappa': self.kappa}


def crra_state_optimum(p: CrraParams, omega):
    """a*(w) = (kappa * (delta * w)^(1 - gamma))^(1 / (1 - kappa * (1 - gamma)))."""
    w = np.asarray(omega, dtype=float)
    e = p.kappa * (1 - p.gamma)
    return (p.kappa * (p.delta * w) ** (1 - p.gamma)) ** (1 / (1 - e))


def crra_model(p: CrraParams, state_domain: Tuple[float, float] = (1.0, 2.0),
               action_domain: Optional[Tuple[float, float]] = None) -> StateActionModel:
    """Agent: (delta w a^kappa)^(1-gamma)/(1-gamma) - a.  Principal: ((1-delta) w a^kappa)^(1-rho)/(1-rho)."""
    lo_s, hi_s = state_domain
    if lo_s <= 0:
        raise InvalidParams(f"CRRA state domain must be positive, got {state_domain}")
    g, r, d, k = p.gamma, p.rho, p.delta, p.kappa
    e, f = k * (1 - g), k * (1 - r)

    def A(w):
        return (d * np.asarray(w, dtype=float)) ** (1 - g)

    def B(w):
        return ((1 - d) * np.asarray(w, dtype=float)) ** (1 - r)

    def U(w, a):
        a = _positive_actions(a)
        return A(w) * a ** e / (1 - g) - a

    def Ua(w, a):
        a = _positive_actions(a)
        return k * A(w) * a ** (e - 1) - 1

    def Uaa(w, a):
        a = _positive_actions(a)
        return k * (e - 1) * A(w) * a ** (e - 2)

    def Uaaa(w, a):
        a = _positive_actions(a)
        return k * (e - 1) * (e - 2) * A(w) * a ** (e - 3)

    def Uaw(w, a):
        a = _positive_actions(a)
        return k * (1 - g) * A(w) / np.asarray(w, dtype=float) * a ** (e - 1)

    def Uaaw(w, a):
        a = _positive_actions(a)
        return k * (e - 1) * (1 - g) * A(w) / np.asarray(w, dtype=float) * a ** (e - 2)

    def V(w, a):
        a = _positive_actions(a)
        return B(w) * a ** f / (1 - r)

    def Va(w, a):
        a = _positive_actions(a)
        return k * B(w) * a ** (f - 1)

    def Vaa(w, a):
        a = _positive_actions(a)
        return k * (f - 1) * B(w) * a ** (f - 2)

    def Vaw(w, a):
        a = _positive_actions(a)
        return k * (1 - r) * B(w) / np.asarray(w, dtype=float) * a ** (f - 1)

    optima = crra_state_optimum(p, np.array([lo_s, hi_s]))
    if optima.min() <= 10 * CRRA_ACTION_FLOOR:
        raise InvalidParams(f"State optimum {optima.min():.3g} too close to the action floor")
    upper = 2.0 * float(optima.max())
    if action_domain is not None:
        lower = max(float(action_domain[0]), CRRA_ACTION_FLOOR)
        upper = max(float(action_domain[1]), upper)
    else:
        lower = CRRA_ACTION_FLOOR
    logger.debug(f"crra model {p.as_dict()} action domain [{lower:.3g}, {upper:.6g}]")
    return StateActionModel(
        state_domain=(lo_s, hi_s), action_domain=(lower, upper),
        eval_U=U, eval_V=V, eval_Ua=Ua, eval_Uaa=Uaa, eval_Va=Va,
        eval_Uaw=Uaw, eval_Uaaa=Uaaa, eval_Uaaw=Uaaw, eval_Vaa=Vaa, eval_Vaw=Vaw,
        family='crra', params=p.as_dict(),
    )


def crra_ratio_constant(p: CrraParams) -> float:
    g, r, d, k = p.gamma, p.rho, p.delta, p.kappa
    return k ** ((r - g) / (1 - g)) * (1 - d) ** (1 - r) * d ** (r - 1) / (1 - k * (1 - g))


def crra_ratio_closed_form(p: CrraParams, omega, a):
    """const * (U_a + 1)^((gamma - rho)/(1 - gamma)) * a^((1 - rho)/(1 - gamma))."""
    w = np.asarray(omega, dtype=float)
    a = _positive_actions(a)
    if np.any(w <= 0):
        raise InvalidParams("CRRA ratio needs positive states")
    g, r, k = p.gamma, p.rho, p.kappa
    marginal_plus_one = k * (p.delta * w) ** (1 - g) * a ** (k * (1 - g) - 1)
    out = crra_ratio_constant(p) * marginal_plus_one ** ((g - r) / (1 - g)) * a ** ((1 - r) / (1 - g))
    return float(out) if np.ndim(out) == 0 else out


def crra_regime(gamma: float, rho: float) -> Disclosure:
    """Where the sufficient conditions settle full disclosure in the (gamma, rho) plane."""
    if gamma == 1 or rho == 1:
        raise InvalidParams("Regime undefined at gamma = 1 or rho = 1")
    if gamma < 0 or rho < 0:
        raise InvalidParams("Risk aversions must be nonnegative")
    if (rho <= gamma < 1) or (rho >= gamma > 1):
        return Disclosure.OPTIMAL
    if (rho < 1 < gamma) or (gamma < 1 < rho):
        return Disclosure.SUBOPTIMAL
    return Disclosure.INCONCLUSIVE


# Separable production y = beta(w) * phi(a) + xi(a)


@dataclass(frozen=True)
class PowerTerm:
    scale: float
    exponent: float
    family: str = 'power'

    def value(self, a):
        return self.scale * a ** self.exponent

    def d1(self, a):
        return self.scale * self.exponent * a ** (self.exponent - 1)

    def d2(self, a):
        c = self.exponent
        return self.scale * c * (c - 1) * a ** (c - 2)

    def d3(self, a):
        c = self.exponent
        return self.scale * c * (c - 1) * (c - 2) * a ** (c - 3)


@dataclass(frozen=True)
class LogTerm:
    scale: float
    family: str = 'log'

    def value(self, a):
        return self.scale * np.log(a)

    def d1(self, a):
        return self.scale / a

    def d2(self, a):
        return -self.scale / a ** 2

    def d3(self, a):
        return 2 * self.scale / a ** 3


@dataclass(frozen=True)
class QuadraticTerm:
    """a - c * a^2 / 2."""

    c: float
    family: str = 'quadratic'

    def value(self, a):
        return a - 0.5 * self.c * a ** 2

    def d1(self, a):
        return 1 - self.c * a

    def d2(self, a):
        return -self.c + 0 * a

    def d3(self, a):
        return 0 * a


@dataclass(frozen=True)
class ZeroTerm:
    family: str = 'zero'

    def value(self, a):
        return 0 * a

    d1 = d2 = d3 = value


Term = Union[PowerTerm, LogTerm, QuadraticTerm, ZeroTerm]


@dataclass(frozen=True)
class Beta:
    """State loading: identity, intercept + slope * w, or scale * w^exponent."""

    family: str = 'identity'
    intercept: float = 0.0
    slope: float = 1.0
    scale: float = 1.0
    exponent: float = 1.0

    def value(self, w):
        w = np.asarray(w, dtype=float)
        if self.family == 'identity':
            return w
        if self.family == 'affine':
            return self.intercept + self.slope * w
        if self.family == 'power':
            return self.scale * w ** self.exponent
        raise InvalidParams(f"Unknown beta family: {self.family}")

    def d1(self, w):
        w = np.asarray(w, dtype=float)
        if self.family == 'identity':
            return np.ones_like(w)
        if self.family == 'affine':
            return self.slope + 0 * w
        if self.family == 'power':
            return self.scale * self.exponent * w ** (self.exponent - 1)
        raise InvalidParams(f"Unknown beta family: {self.family}")


def make_term(spec: Optional[Mapping]) -> Term:
    """Term from a config record like {'family': 'power', 'scale': 1, 'exponent': 0.5}."""
    if spec is None:
        return ZeroTerm()
    family = spec.get('family', 'zero')
    try:
        if family == 'power':
            return PowerTerm(float(spec.get('scale', 1.0)), float(spec['exponent']))
        if family == 'log':
            return LogTerm(float(spec.get('scale', 1.0)))
        if family == 'quadratic':
            return QuadraticTerm(float(spec.get('c', 1.0)))
        if family == 'zero':
            return ZeroTerm()
    except KeyError as e:
        raise InvalidParams(f"Term {family} is missing parameter {str(e)}") from e
    raise InvalidParams(f"Unknown term family: {family}")


def _is_linear(term: Term) -> bool:
    return term.family == 'zero' or (term.family == 'power' and term.exponent in (0.0, 1.0))


@dataclass(frozen=True)
class SeparableParams:
    phi: Term
    xi: Term = ZeroTerm()
    beta: Beta = Beta()
    delta: float = 0.5

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise InvalidParams(f"delta must lie in (0, 1), got {self.delta}")
        if self.phi.family not in ('power', 'log', 'quadratic'):
            raise InvalidParams(f"phi must be power, log or quadratic, got {self.phi.family}")
        if _is_linear(self.phi) and _is_linear(self.xi):
            raise InvalidParams("phi and xi cannot both be linear; output must be strictly concave in effort")

    @property
    def power_power(self) -> bool:
        return self.phi.family == 'power' and self.xi.family == 'power'

    def as_dict(self) -> Dict[str, object]:
        return {'phi': dict(self.phi.__dict__), 'xi': dict(self.xi.__dict__),
                'beta': dict(self.beta.__dict__), 'delta': self.delta}


def _validate_separable(p: SeparableParams, states: np.ndarray, actions: np.ndarray):
    beta, d_beta = p.beta.value(states), p.beta.d1(states)
    if np.any(beta <= 0) or np.any(d_beta <= 0):
        raise InvalidParams("beta must be positive and increasing on the state domain")
    curvature = p.phi.d2(actions) + p.xi.d2(actions)
    if np.any(curvature >= 0):
        raise InvalidParams("phi'' + xi'' must be negative (strict concavity of output)")
    if np.any(p.phi.d2(actions) * p.xi.d2(actions) < 0):
        raise InvalidParams("phi'' and xi'' must not have opposite signs")
    if np.any(p.phi.d1(actions) <= 0):
        raise InvalidParams("phi must be increasing so that state and effort are complements")


def separable_model(p: SeparableParams, state_domain: Tuple[float, float] = (1.0, 2.0),
                    action_domain: Optional[Tuple[float, float]] = None) -> StateActionModel:
    """Risk-neutral parties sharing output y: U = delta * y - a, V = (1 - delta) * y."""
    d, phi, xi, beta = p.delta, p.phi, p.xi, p.beta

    def y_a(w, a):
        return beta.value(w) * phi.d1(a) + xi.d1(a)

    def y_aa(w, a):
        return beta.value(w) * phi.d2(a) + xi.d2(a)

    def U(w, a):
        a = _positive_actions(a)
        return d * (beta.value(w) * phi.value(a) + xi.value(a)) - a

    def Ua(w, a):
        return d * y_a(w, _positive_actions(a)) - 1

    def Uaa(w, a):
        return d * y_aa(w, _positive_actions(a))

    def Uaaa(w, a):
        a = _positive_actions(a)
        return d * (beta.value(w) * phi.d3(a) + xi.d3(a))

    def Uaw(w, a):
        return d * beta.d1(w) * phi.d1(_positive_actions(a))

    def Uaaw(w, a):
        return d * beta.d1(w) * phi.d2(_positive_actions(a))

    def V(w, a):
        a = _positive_actions(a)
        return (1 - d) * (beta.value(w) * phi.value(a) + xi.value(a))

    def Va(w, a):
        return (1 - d) * y_a(w, _positive_actions(a))

    def Vaa(w, a):
        return (1 - d) * y_aa(w, _positive_actions(a))

    def Vaw(w, a):
        return (1 - d) * beta.d1(w) * phi.d1(_positive_actions(a))

    states = np.linspace(*state_domain, 33)
    if action_domain is None:
        lower = SEPARABLE_ACTION_FLOOR
        upper = bracket_action_domain(Ua, states, lower)
    else:
        lower, upper = (float(x) for x in action_domain)
        if np.any(Ua(states, upper) >= 0):
            raise InvalidParams(f"delta * y_a must fall below 1 at a_max = {upper}")
    _validate_separable(p, states, np.linspace(lower, upper, 129))
    if np.any(Uaw(*np.meshgrid(states, np.linspace(lower, upper, 129), indexing='ij')) <= 0):
        raise InvalidParams("state and effort must be complements (U_aw > 0)")
    logger.debug(f"separable model action domain [{lower:.3g}, {upper:.6g}]")
    return StateActionModel(
        state_domain=tuple(state_domain), action_domain=(lower, upper),
        eval_U=U, eval_V=V, eval_Ua=Ua, eval_Uaa=Uaa, eval_Va=Va,
        eval_Uaw=Uaw, eval_Uaaa=Uaaa, eval_Uaaw=Uaaw, eval_Vaa=Vaa, eval_Vaw=Vaw,
        family='separable', params=p.as_dict(),
    )


def check_separable_derivative_condition(p: SeparableParams, grid: GridSpec) -> ConditionVerdict:
    """Pointwise output conditions phi'' xi' >= phi' xi'' and
    y_a * (phi' y_aaa - phi'' y_aa) >= 0 on the grid.

    For power-power output the first reduces to kappa >= tau, reported in
    ``details['kappa_ge_tau']``.
    """
    w, a = grid.mesh()
    a = _positive_actions(a)
    phi, xi, beta = p.phi, p.xi, p.beta
    b = beta.value(w)
    y1 = b * phi.d1(a) + xi.d1(a)
    y2 = b * phi.d2(a) + xi.d2(a)
    y3 = b * phi.d3(a) + xi.d3(a)
    first = normalized_gap(phi.d2(a) * xi.d1(a), phi.d1(a) * xi.d2(a))
    second = normalized_gap(y1 * phi.d1(a) * y3, y1 * phi.d2(a) * y2)
    point_margin = np.minimum(first, second)
    min_margin = float(point_margin.min())
    details = {'first_min': float(first.min()), 'second_min': float(second.min())}
    if p.power_power:
        details['kappa_ge_tau'] = float(phi.exponent >= xi.exponent)
    witnesses = [Witness((w[i, j], a[i, j]), (w[i, j], a[i, j]), first[i, j], second[i, j], point_margin[i, j])
                 for i, j in np.ndindex(point_margin.shape)]
    status = classify(min_margin, DERIV_MARGIN_TOL, point_margin.size)
    logger.info(f"separable: {status.value} first_min={details['first_min']:.3e} "
                f"second_min={details['second_min']:.3e}")
    return ConditionVerdict('separable', status, min_margin, top_witnesses(witnesses),
                            point_margin.size, DERIV_MARGIN_TOL, grid.resolution, details=details)


def multiplicative_benchmark(phi: Term, grid: GridSpec) -> Dict[str, ConditionVerdict]:
    """Output w * phi(a): the inequality as printed next to the CRRA discussion,
    phi''' phi' >= phi'^2, and the reduction of the separable condition with
    xi = 0, phi''' phi' >= phi''^2. Both are reported."""
    a = _positive_actions(grid.actions)
    out = {}
    forms = {
        'footnote': (phi.d3(a) * phi.d1(a), phi.d1(a) ** 2),
        'reduced': (phi.d3(a) * phi.d1(a), phi.d2(a) ** 2),
    }
    for name, (lhs, rhs) in forms.items():
        lhs = np.broadcast_to(np.asarray(lhs, dtype=float), a.shape)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), a.shape)
        margins = normalized_gap(lhs, rhs)
        witnesses = [Witness((1.0, a[j]), (1.0, a[j]), lhs[j], rhs[j], margins[j]) for j in range(a.size)]
        status = classify(float(margins.min()), DERIV_MARGIN_TOL, a.size)
        out[name] = ConditionVerdict(f'benchmark_{name}', status, float(margins.min()),
                                     top_witnesses(witnesses), a.size, DERIV_MARGIN_TOL,
                                     (1, int(a.size)))
    logger.info(f"benchmark: footnote={out['footnote'].status.value} reduced={out['reduced'].status.value}")
    return out


# Quadratic-loss receiver


def _quadratic_receiver():
    def U(w, a):
        return -(np.asarray(w, dtype=float) - a) ** 2

    def Ua(w, a):
        return 2 * (np.asarray(w, dtype=float) - a)

    def Uaa(w, a):
        return -2.0 + 0 * (np.asarray(w, dtype=float) + a)

    def Uaw(w, a):
        return 2.0 + 0 * (np.asarray(w, dtype=float) + a)

    def zero(w, a):
        return 0 * (np.asarray(w, dtype=float) + a)

    return dict(eval_U=U, eval_Ua=Ua, eval_Uaa=Uaa, eval_Uaw=Uaw, eval_Uaaa=zero, eval_Uaaw=zero)


def _padded(state_domain, action_domain):
    if action_domain is not None:
        return tuple(action_domain)
    lo, hi = state_domain
    return (lo - 0.5, hi + 0.5)


def quadratic_cs_model(b: float = 0.0, state_domain: Tuple[float, float] = (0.0, 1.0),
                       action_domain: Optional[Tuple[float, float]] = None) -> StateActionModel:
    """U = -(w - a)^2, V = -(w - a - b)^2."""
    if not b >= 0:
        raise InvalidParams(f"Sender bias must be nonnegative, got {b}")

    def V(w, a):
        return -(np.asarray(w, dtype=float) - a - b) ** 2

    def Va(w, a):
        return 2 * (np.asarray(w, dtype=float) - a - b)

    receiver = _quadratic_receiver()
    return StateActionModel(
        state_domain=tuple(state_domain), action_domain=_padded(state_domain, action_domain),
        eval_V=V, eval_Va=Va, eval_Vaa=receiver['eval_Uaa'], eval_Vaw=receiver['eval_Uaw'],
        family='quadratic_cs', params={'b': float(b)}, linear_receiver=True, **receiver,
    )


def linear_receiver_model(v: Callable, v_a: Callable, v_aa: Optional[Callable] = None,
                          v_aw: Optional[Callable] = None,
                          state_domain: Tuple[float, float] = (0.0, 1.0),
                          action_domain: Optional[Tuple[float, float]] = None,
                          family: str = 'linear_receiver',
                          params: Optional[Mapping] = None) -> StateActionModel:
    """Quadratic-loss receiver paired with an arbitrary sender utility V(w, a)."""
    return StateActionModel(
        state_domain=tuple(state_domain), action_domain=_padded(state_domain, action_domain),
        eval_V=v, eval_Va=v_a, eval_Vaa=v_aa, eval_Vaw=v_aw,
        family=family, params=dict(params or {}), linear_receiver=True, **_quadratic_receiver(),
    )


def linear_case_model(v_spec: Union[Sequence[float], Polynomial, Tuple[Callable, Callable]],
                      state_domain: Tuple[float, float] = (0.0, 1.0),
                      action_domain: Tuple[float, float] = (0.0, 1.0)) -> StateActionModel:
    """Sender utility V(a) of the action only.

    ``v_spec`` is a Polynomial, polynomial coefficients in increasing degree,
    or a ``(v, v_prime)`` pair of callables.
    """
    if isinstance(v_spec, tuple) and len(v_spec) == 2 and all(callable(f) for f in v_spec):
        v, v_prime = v_spec
        v_second = None
        coefficients = None
    else:
        poly = v_spec if isinstance(v_spec, Polynomial) else Polynomial(list(v_spec))
        v, v_prime, v_second = poly, poly.deriv(), poly.deriv(2)
        coefficients = [float(c) for c in poly.coef]

    def lift(f):
        return lambda w, a: f(np.asarray(a, dtype=float)) + 0 * np.asarray(w, dtype=float)

    def zero(w, a):
        return 0 * (np.asarray(w, dtype=float) + a)

    return linear_receiver_model(
        lift(v), lift(v_prime),
        v_aa=None if v_second is None else lift(v_second), v_aw=zero,
        state_domain=state_domain, action_domain=action_domain,
        family='linear_case', params={'coefficients': coefficients},
    )


def sender_slope(model: StateActionModel) -> Callable:
    """V'(a) of an action-only sender utility."""
    w0 = model.state_domain[0]
    return lambda a: model.eval_Va(w0, a)


# Registry


def _build_crra(params, state_domain, action_domain):
    return crra_model(CrraParams(**params), state_domain, action_domain)


def _build_separable(params, state_domain, action_domain):
    return separable_model(separable_params_from(params), state_domain, action_domain)


def _build_quadratic_cs(params, state_domain, action_domain):
    return quadratic_cs_model(float(params.get('b', 0.0)), state_domain, action_domain)


def _build_linear_case(params, state_domain, action_domain):
    if 'coefficients' not in params:
        raise InvalidParams("linear_case needs polynomial 'coefficients' for V(a)")
    return linear_case_model(params['coefficients'], state_domain, action_domain or (0.0, 1.0))


MODEL_FAMILIES = {
    'crra': _build_crra,
    'separable': _build_separable,
    'quadratic_cs': _build_quadratic_cs,
    'linear_case': _build_linear_case,
}


def build_model(family: str, params: Mapping, state_domain: Tuple[float, float],
                action_domain: Optional[Tuple[float, float]] = None) -> StateActionModel:
    if family not in MODEL_FAMILIES:
        raise ConfigError(f"Unknown model family '{family}'; expected one of {sorted(MODEL_FAMILIES)}")
    try:
        return MODEL_FAMILIES[family](dict(params or {}), tuple(state_domain), action_domain)
    except TypeError as e:
        raise InvalidParams(f"Bad parameters for {family}: {str(e)}") from e


def separable_params_from(params: Mapping) -> SeparableParams:
    beta = Beta(**(params.get('beta') or {}))
    return SeparableParams(phi=make_term(params.get('phi')), xi=make_term(params.get('xi')),
                           beta=beta, delta=float(params.get('delta', 0.5)))
