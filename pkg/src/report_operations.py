import json
import logging
import os
from typing import Dict, Iterable, List, Optional, Sequence

import pandas as pd

from . import __version__
from .conditions import ConditionVerdict, Disclosure

logger = logging.getLogger(__name__)

TOOL_NAME = 'disclosure-check'
FLOAT_FORMAT = '%.17g'

VERDICT_COLUMNS = ['condition', 'status', 'min_margin', 'margin_tol', 'pairs_tested',
                   'n_states', 'n_actions', 'witness_state_1', 'witness_state_2',
                   'necessary', 'evidence']
WITNESS_COLUMNS = ['condition', 'rank', 'omega_1', 'a_1', 'omega_2', 'a_2',
                   'value_1', 'value_2', 'margin']


def csv_header(config_sha256: str) -> str:
    return f"# {TOOL_NAME} v{__version__} config_sha256={config_sha256 or 'none'}"


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def write_csv(df: pd.DataFrame, filepath: str, config_sha256: str = '') -> str:
    """Write a versioned CSV: one comment line, then the table at 17 significant digits."""
    logger.info(f"Saving to {filepath}")
    with open(filepath, 'w', newline='') as f:
        f.write(csv_header(config_sha256) + '\n')
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.info(f"File saved successfully ({os.path.getsize(filepath)} bytes)")
    return filepath


def read_csv(filepath: str) -> pd.DataFrame:
    return pd.read_csv(filepath, comment='#')


def write_jsonl(records: Iterable[Dict], filepath: str) -> str:
    logger.info(f"Saving to {filepath}")
    with open(filepath, 'w') as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + '\n')
    logger.info(f"File saved successfully ({os.path.getsize(filepath)} bytes)")
    return filepath


def read_jsonl(filepath: str) -> List[Dict]:
    with open(filepath) as f:
        return [json.loads(line) for line in f if line.strip()]


def verdict_records(verdicts: Sequence[ConditionVerdict], config) -> List[Dict]:
    """One JSON-lines record per verdict, tagged with the config that produced it."""
    return [{**v.to_record(), 'config': config.source, 'config_sha256': config.sha256,
             'family': config.family, 'tool_version': __version__} for v in verdicts]


def verdicts_frame(verdicts: Sequence[ConditionVerdict]) -> pd.DataFrame:
    rows = []
    for v in verdicts:
        states = v.witness_states or (None, None)
        rows.append({
            'condition': v.condition,
            'status': v.status.value,
            'min_margin': v.min_margin,
            'margin_tol': v.margin_tol,
            'pairs_tested': v.pairs_tested,
            'n_states': v.resolution[0],
            'n_actions': v.resolution[1],
            'witness_state_1': states[0],
            'witness_state_2': states[1],
            'necessary': v.necessary,
            'evidence': v.evidence,
        })
    return pd.DataFrame(rows, columns=VERDICT_COLUMNS)


def witnesses_frame(verdicts: Sequence[ConditionVerdict]) -> pd.DataFrame:
    rows = []
    for v in verdicts:
        for rank, w in enumerate(v.witnesses):
            rows.append({
                'condition': v.condition,
                'rank': rank,
                'omega_1': w.point_1[0], 'a_1': w.point_1[1],
                'omega_2': w.point_2[0], 'a_2': w.point_2[1],
                'value_1': w.value_1, 'value_2': w.value_2,
                'margin': w.margin,
            })
    return pd.DataFrame(rows, columns=WITNESS_COLUMNS)


def summary_text(verdicts: Sequence[ConditionVerdict], config,
                 disclosure: Optional[Disclosure] = None) -> str:
    """Human-readable check summary."""
    lines = [
        f"{TOOL_NAME} v{__version__}",
        f"config: {config.source or '<inline>'} (sha256 {config.sha256 or 'none'})",
        f"model: {config.family} {json.dumps(config.params, sort_keys=True, default=str)}",
        '',
    ]
    for v in verdicts:
        margin = 'n/a' if v.min_margin is None else f"{v.min_margin:.6g}"
        line = f"{v.condition:<28} {v.status.value:<15} min_margin={margin} pairs={v.pairs_tested}"
        if v.witness_states:
            line += f" witness_states=({v.witness_states[0]:g}, {v.witness_states[1]:g})"
        if v.necessary:
            line += " [necessary and sufficient]"
        lines.append(line)
    if verdicts:
        lines.append('')
        lines.append(f"All verdicts are {verdicts[0].evidence}.")
    if disclosure is not None:
        lines.append(f"Full disclosure: {disclosure.value}")
    return '\n'.join(lines) + '\n'


def write_text(text: str, filepath: str) -> str:
    with open(filepath, 'w') as f:
        f.write(text)
    logger.info(f"File saved successfully ({os.path.getsize(filepath)} bytes)")
    return filepath
