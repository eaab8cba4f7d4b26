import pandas as pd
import pytest

from src import __version__
from src.conditions import check_suboptimality, check_weak_condition
from src.oracle import concavify_2state
from src.report_operations import (
    VERDICT_COLUMNS,
    WITNESS_COLUMNS,
    csv_header,
    read_csv,
    read_jsonl,
    summary_text,
    verdict_records,
    verdicts_frame,
    witnesses_frame,
    write_csv,
    write_jsonl,
)
from src.report_visualization import plot_envelope, plot_ratio_field, plot_regime_map
from src.run_config import config_from_dict


@pytest.fixture
def verdicts(cs_biased, small_grid):
    return [check_weak_condition(cs_biased, small_grid),
            check_suboptimality(cs_biased, small_grid, [0.2, 0.8])]


def test_write_csv_header_and_precision(tmp_path):
    """Test write CSV header and precision."""
    df = pd.DataFrame({'x': [0.1, 1 / 3], 'label': ['a', 'b']})
    path = write_csv(df, str(tmp_path / 'out.csv'), 'abc123')
    with open(path) as f:
        first = f.readline().rstrip('\n')
        assert first == csv_header('abc123')
        assert f'v{__version__}' in first
        assert '0.33333333333333331' in f.read()
    back = read_csv(path)
    assert back['x'].tolist() == [0.1, 1 / 3]


def test_verdict_frames(verdicts):
    """Test verdict frames."""
    frame = verdicts_frame(verdicts)
    assert list(frame.columns) == VERDICT_COLUMNS
    assert frame['status'].tolist() == ['HOLDS_STRICTLY', 'NONE_FOUND']
    witnesses = witnesses_frame(verdicts)
    assert list(witnesses.columns) == WITNESS_COLUMNS
    assert (witnesses.groupby('condition')['rank'].min() == 0).all()


def test_verdict_records_tagged(verdicts, cs_config, tmp_path):
    """Test verdict records tagged."""
    config = config_from_dict(cs_config, source='run.yaml', sha256='deadbeef')
    path = write_jsonl(verdict_records(verdicts, config), str(tmp_path / 'verdicts.jsonl'))
    records = read_jsonl(path)
    assert [r['condition'] for r in records] == ['weak', 'subopt']
    assert records[0]['config_sha256'] == 'deadbeef'
    assert records[0]['tool_version'] == __version__


def test_summary_text(verdicts, cs_config):
    """Test summary text."""
    text = summary_text(verdicts, config_from_dict(cs_config))
    assert 'weak' in text and 'HOLDS_STRICTLY' in text
    assert 'evidence at resolution (11, 11)' in text


def test_svg_is_deterministic(tmp_path, cs_model, cs_biased, small_grid):
    """Test SVG is deterministic."""
    result = concavify_2state(cs_model, (0.0, 1.0), 0.5, resolution=17)
    first = plot_envelope(result, str(tmp_path / 'a.svg'))
    second = plot_envelope(result, str(tmp_path / 'b.svg'))
    with open(first, 'rb') as f1, open(second, 'rb') as f2:
        assert f1.read() == f2.read()

    w, a = small_grid.mesh()
    values = w - a - 0.2
    verdict = check_weak_condition(cs_biased, small_grid)
    path = plot_ratio_field(small_grid, values, verdict.witnesses, str(tmp_path / 'ratio.svg'))
    with open(path) as f:
        assert f.read().lstrip().startswith('<?xml')


def test_plot_regime_map(tmp_path):
    """Test plot regime map."""
    df = pd.DataFrame({
        'gamma': [0.5, 2.0, 0.5, 2.0],
        'rho': [0.0, 0.0, 2.0, 2.0],
        'regime': ['OPTIMAL', 'SUBOPTIMAL', 'SUBOPTIMAL', 'EXCLUDED'],
        'validated': [True, True, False, False],
        'agrees': [True, False, True, True],
    })
    path = plot_regime_map(df, str(tmp_path / 'map.svg'))
    with open(path) as f:
        assert '<svg' in f.read()
