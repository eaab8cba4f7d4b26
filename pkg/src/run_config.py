"""
Run configuration files.

A run config is a YAML document with these sections (all keys optional
unless marked):

    model:                       # required
      family: crra               # crra | separable | quadratic_cs | linear_case
      params: {gamma: 2.0, rho: 0.0, delta: 0.5, kappa: 0.5}
    domains:
      state: [1.0, 2.0]          # required
      action: null               # family default when omitted
    grid:
      states: 101
      actions: 201
      action_range: null         # [lo, hi]; bracketed around the state optima when omitted
    prior:
      support: [1.0, 2.0]
      probabilities: [0.5, 0.5]  # uniform when omitted
      # or, instead of both: weights: {1.0: 0.25, 2.0: 0.75}
    checks: [weak, subopt]       # required, non-empty
    oracle:
      enabled: true
      pi_grid: 11
      resolution_2state: 101
      resolution_3state: 60
      quad_points: 64
    output:
      directory: out
      formats: [csv, json-lines, svg]
"""
import hashlib
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import yaml

from .applications import MODEL_FAMILIES, build_model
from .conditions import GridSpec, default_grid
from .errors import ConfigError
from .model_core import Posterior, StateActionModel

logger = logging.getLogger(__name__)

KNOWN_CHECKS = ('weak', 'derivable', 'derivative', 'subopt', 'linear_case',
                'linear_receiver', 'separable', 'benchmark')
KNOWN_FORMATS = ('csv', 'svg', 'json-lines')
DEFAULT_FORMATS = ('csv', 'json-lines', 'svg')


@dataclass(frozen=True)
class OracleSettings:
    enabled: bool = False
    pi_grid: int = 11
    resolution_2state: int = 101
    resolution_3state: int = 60
    quad_points: int = 64


@dataclass(frozen=True)
class RunConfig:
    family: str
    params: Dict[str, Any]
    state_domain: Tuple[float, float]
    prior: Posterior
    checks: Tuple[str, ...]
    action_domain: Optional[Tuple[float, float]] = None
    grid_states: int = 101
    grid_actions: int = 201
    action_range: Optional[Tuple[float, float]] = None
    oracle: OracleSettings = field(default_factory=OracleSettings)
    output_dir: Optional[str] = None
    formats: Tuple[str, ...] = DEFAULT_FORMATS
    source: Optional[str] = None
    sha256: str = ''

    def build_model(self) -> StateActionModel:
        return build_model(self.family, self.params, self.state_domain, self.action_domain)

    def build_grid(self, model: StateActionModel) -> GridSpec:
        if self.action_range is None:
            return default_grid(model, self.grid_states, self.grid_actions)
        return GridSpec.uniform(model.state_domain, self.action_range,
                                self.grid_states, self.grid_actions)

    def with_overrides(self, grid: Optional[Tuple[int, int]] = None, out: Optional[str] = None,
                       formats: Optional[Tuple[str, ...]] = None) -> 'RunConfig':
        updated = self
        if grid is not None:
            updated = replace(updated, grid_states=grid[0], grid_actions=grid[1])
        if out is not None:
            updated = replace(updated, output_dir=out)
        if formats:
            bad = sorted(set(formats) - set(KNOWN_FORMATS))
            if bad:
                raise ConfigError(f"Unknown output formats: {bad}")
            updated = replace(updated, formats=tuple(formats))
        _check_grid(updated.grid_states, updated.grid_actions)
        return updated


def _interval(value, name) -> Optional[Tuple[float, float]]:
    if value is None:
        return None
    try:
        lo, hi = (float(x) for x in value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name} must be a [lo, hi] pair, got {value!r}") from e
    if not lo < hi:
        raise ConfigError(f"{name} must satisfy lo < hi, got [{lo}, {hi}]")
    return lo, hi


def _check_grid(n_states, n_actions):
    if n_states < 2 or n_actions < 2:
        raise ConfigError(f"Grid needs at least 2x2 points, got {n_states}x{n_actions}")


def parse_grid(text: str) -> Tuple[int, int]:
    """'NxM' -> (N, M)."""
    try:
        n, m = (int(x) for x in text.lower().split('x'))
    except ValueError as e:
        raise ConfigError(f"Grid must look like NxM, got {text!r}") from e
    _check_grid(n, m)
    return n, m


def config_from_dict(data: Dict[str, Any], source: Optional[str] = None, sha256: str = '') -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("Config must be a mapping of sections")
    model = data.get('model') or {}
    family = model.get('family')
    if family not in MODEL_FAMILIES:
        raise ConfigError(f"Unknown or missing model family {family!r}; expected one of {sorted(MODEL_FAMILIES)}")

    domains = data.get('domains') or {}
    state_domain = _interval(domains.get('state'), 'domains.state')
    if state_domain is None:
        raise ConfigError("domains.state is required")
    action_domain = _interval(domains.get('action'), 'domains.action')

    grid = data.get('grid') or {}
    n_states, n_actions = int(grid.get('states', 101)), int(grid.get('actions', 201))
    _check_grid(n_states, n_actions)

    checks = data.get('checks')
    if not checks:
        raise ConfigError("checks must list at least one check")
    unknown = sorted(set(checks) - set(KNOWN_CHECKS))
    if unknown:
        raise ConfigError(f"Unknown checks {unknown}; expected a subset of {list(KNOWN_CHECKS)}")

    prior_cfg = data.get('prior') or {}
    try:
        if 'weights' in prior_cfg:
            prior = Posterior.from_mapping({float(s): float(p) for s, p in prior_cfg['weights'].items()})
        else:
            support = prior_cfg.get('support', list(state_domain))
            probabilities = prior_cfg.get('probabilities') or [1.0 / len(support)] * len(support)
            prior = Posterior(tuple(support), tuple(probabilities))
    except (AttributeError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid prior: {str(e)}") from e
    if not all(state_domain[0] <= s <= state_domain[1] for s in prior.support):
        raise ConfigError(f"Prior support {prior.support} leaves domains.state {state_domain}")

    oracle_cfg = data.get('oracle') or {}
    oracle = OracleSettings(
        enabled=bool(oracle_cfg.get('enabled', False)),
        pi_grid=int(oracle_cfg.get('pi_grid', 11)),
        resolution_2state=int(oracle_cfg.get('resolution_2state', 101)),
        resolution_3state=int(oracle_cfg.get('resolution_3state', 60)),
        quad_points=int(oracle_cfg.get('quad_points', 64)),
    )
    if oracle.pi_grid < 3 or oracle.resolution_2state < 17 or oracle.resolution_3state < 2:
        raise ConfigError("oracle resolutions too small (pi_grid >= 3, resolution_2state >= 17)")

    output = data.get('output') or {}
    formats = tuple(output.get('formats') or DEFAULT_FORMATS)
    bad = sorted(set(formats) - set(KNOWN_FORMATS))
    if bad:
        raise ConfigError(f"Unknown output formats: {bad}")

    return RunConfig(
        family=family,
        params=dict(model.get('params') or {}),
        state_domain=state_domain,
        action_domain=action_domain,
        grid_states=n_states,
        grid_actions=n_actions,
        action_range=_interval(grid.get('action_range'), 'grid.action_range'),
        prior=prior,
        checks=tuple(checks),
        oracle=oracle,
        output_dir=output.get('directory'),
        formats=formats,
        source=source,
        sha256=sha256,
    )


def load_config(path: str) -> RunConfig:
    """Read and validate a YAML run config."""
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found: {path}")
    with open(path, 'rb') as f:
        raw = f.read()
    try:
        data = yaml.safe_load(raw.decode('utf-8'))
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed YAML in {path}: {str(e)}") from e
    config = config_from_dict(data, source=path, sha256=hashlib.sha256(raw).hexdigest())
    logger.info(f"Loaded config {path} (family={config.family}, checks={list(config.checks)})")
    return config
