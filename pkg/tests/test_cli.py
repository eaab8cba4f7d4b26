import json
import os
import subprocess
import sys

import pandas as pd
import pytest

from src.cli import EXIT_ERROR, EXIT_OK, EXIT_VIOLATED, create_parser, main
from src.report_operations import read_csv, read_jsonl

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def test_parser_subcommands():
    """Test parser subcommands."""
    parser = create_parser()
    args = parser.parse_args(['check', '--config', 'run.yaml', '--grid', '5x7', '--format', 'csv'])
    assert args.command == 'check'
    assert args.grid == (5, 7)
    assert args.formats == ['csv']
    args = parser.parse_args(['regime-map'])
    assert args.resolution == 26 and args.epsilon_band == 0.02


def test_no_command_is_an_error():
    """Test no command is an error."""
    assert main([]) == EXIT_ERROR


def test_check_crawford_sobel(write_config, cs_config, tmp_path, capsys):
    """Test check Crawford-Sobel."""
    out = tmp_path / 'out'
    code = main(['check', '--config', write_config(cs_config), '--out', str(out)])
    assert code == EXIT_OK
    for name in ('verdicts.jsonl', 'verdicts.csv', 'witnesses.csv', 'summary.txt', 'ratio_field.svg'):
        assert (out / name).exists()
    records = read_jsonl(str(out / 'verdicts.jsonl'))
    assert records[0]['condition'] == 'weak'
    assert records[0]['status'] == 'HOLDS_STRICTLY'
    assert records[0]['grid'] == [11, 11]
    assert 'HOLDS_STRICTLY' in capsys.readouterr().out


def test_check_crra_suboptimal(write_config, crra_config, tmp_path):
    """Test check CRRA suboptimal."""
    out = tmp_path / 'out'
    code = main(['check', '--config', write_config(crra_config), '--out', str(out)])
    assert code == EXIT_VIOLATED
    by_name = {r['condition']: r for r in read_jsonl(str(out / 'verdicts.jsonl'))}
    assert by_name['weak']['status'] == 'VIOLATED'
    assert by_name['subopt']['status'] == 'HOLDS_STRICTLY'
    assert sorted(by_name['subopt']['witness_states']) == [1.0, 2.0]
    assert 'Full disclosure: SUBOPTIMAL' in (out / 'summary.txt').read_text()


def test_check_empty_checks_fails(write_config, cs_config, tmp_path):
    """Test check empty checks fails."""
    cs_config['checks'] = []
    assert main(['check', '--config', write_config(cs_config), '--out', str(tmp_path)]) == EXIT_ERROR


def test_check_without_config_fails(tmp_path):
    """Test check without config fails."""
    assert main(['check', '--out', str(tmp_path)]) == EXIT_ERROR


def test_check_format_selection(write_config, cs_config, tmp_path):
    """Test check format selection."""
    out = tmp_path / 'out'
    assert main(['check', '--config', write_config(cs_config), '--out', str(out), '--format', 'csv']) == EXIT_OK
    assert (out / 'verdicts.csv').exists()
    assert not (out / 'verdicts.jsonl').exists()
    assert not (out / 'ratio_field.svg').exists()
    assert read_csv(str(out / 'verdicts.csv'))['status'].tolist() == ['HOLDS_STRICTLY']


def test_oracle_crawford_sobel(write_config, cs_config, tmp_path, capsys):
    """Test oracle Crawford-Sobel."""
    cs_config['model']['params'] = {'b': 0.0}
    cs_config['prior'] = {'support': [0.0, 1.0]}
    out = tmp_path / 'out'
    assert main(['oracle', '--config', write_config(cs_config), '--out', str(out)]) == EXIT_OK
    assert capsys.readouterr().out.startswith('FULL_DISCLOSURE_OPTIMAL margin=0.25')
    for name in ('binary_splits.csv', 'envelope_samples.csv', 'envelope.svg', 'oracle.jsonl'):
        assert (out / name).exists()
    splits = read_csv(str(out / 'binary_splits.csv'))
    assert (splits['gain'] - splits['gain_integral']).abs().max() < 1e-8


def test_oracle_crra_certificate(write_config, crra_config, tmp_path, capsys):
    """Test oracle CRRA certificate."""
    out = tmp_path / 'out'
    assert main(['oracle', '--config', write_config(crra_config), '--out', str(out)]) == EXIT_OK
    line = capsys.readouterr().out
    assert line.startswith('FULL_DISCLOSURE_SUBOPTIMAL')
    assert 'certificate' in line
    assert (read_csv(str(out / 'binary_splits.csv'))['gain'] < 0).any()
    envelope = read_jsonl(str(out / 'oracle.jsonl'))[0]
    assert envelope['verdict'] == 'FULL_DISCLOSURE_SUBOPTIMAL'


def test_oracle_rejects_four_states(write_config, cs_config, tmp_path):
    """Test oracle rejects four states."""
    cs_config['prior'] = {'support': [0.0, 0.3, 0.6, 1.0]}
    assert main(['oracle', '--config', write_config(cs_config), '--out', str(tmp_path)]) == EXIT_ERROR


def test_check_runs_oracle_when_enabled(write_config, cs_config, tmp_path):
    """Test check runs oracle when enabled."""
    cs_config['oracle'] = {'enabled': True, 'pi_grid': 5, 'resolution_2state': 17}
    out = tmp_path / 'out'
    assert main(['check', '--config', write_config(cs_config), '--out', str(out)]) == EXIT_OK
    assert (out / 'oracle.jsonl').exists()


def test_regime_map_single_point(tmp_path, capsys):
    """Test regime map single point."""
    out = tmp_path / 'map'
    code = main(['regime-map', '--gamma-range', '0.5', '0.5', '--rho-range', '0', '0',
                 '--resolution', '1', '--validate-every', '1', '--grid', '11x21', '--out', str(out)])
    assert code == EXIT_OK
    df = read_csv(str(out / 'regime_map.csv'))
    assert df['regime'].tolist() == ['OPTIMAL']
    assert bool(df['agrees'].iloc[0])
    assert (out / 'regime_map.svg').exists()
    assert 'disagreements 0' in capsys.readouterr().out


def test_regime_map_band_and_lattice(tmp_path):
    """Test regime map band and lattice."""
    out = tmp_path / 'map'
    code = main(['regime-map', '--resolution', '6', '--validate-every', '0', '--epsilon-band', '0.1',
                 '--format', 'csv', '--out', str(out)])
    assert code == EXIT_OK
    df = read_csv(str(out / 'regime_map.csv'))
    assert len(df) == 36
    excluded = df[df['regime'] == 'EXCLUDED']
    assert ((excluded['gamma'] - 1).abs().lt(0.1) | (excluded['rho'] - 1).abs().lt(0.1)).all()
    assert not (out / 'regime_map.svg').exists()


def test_regime_map_requires_band_across_one(tmp_path):
    """Test regime map requires band across one."""
    code = main(['regime-map', '--epsilon-band', '0', '--resolution', '3', '--out', str(tmp_path)])
    assert code == EXIT_ERROR


def test_verify_round_trip(write_config, crra_config, tmp_path):
    """Test verify round trip."""
    out = tmp_path / 'out'
    main(['check', '--config', write_config(crra_config), '--out', str(out)])
    verdicts = out / 'verdicts.jsonl'
    assert main(['verify', '--verdicts', str(verdicts)]) == EXIT_OK

    records = read_jsonl(str(verdicts))
    records[0]['min_margin'] = records[0]['min_margin'] * 2
    tampered = tmp_path / 'tampered.jsonl'
    tampered.write_text(''.join(json.dumps(r) + '\n' for r in records))
    assert main(['verify', '--verdicts', str(tampered)]) == EXIT_VIOLATED


@pytest.mark.parametrize('config, expected', [
    ('crawford_sobel.yaml', EXIT_OK),
    ('linear_case_concave.yaml', EXIT_VIOLATED),
])
def test_app_exit_codes(config, expected, tmp_path):
    """Test app exit codes."""
    result = subprocess.run(
        [sys.executable, 'app.py', 'check', '--config', os.path.join('configs', config),
         '--out', str(tmp_path), '--grid', '21x21'],
        cwd=ROOT, capture_output=True, text=True)
    assert result.returncode == expected, result.stderr
    assert pd.notna(read_csv(str(tmp_path / 'verdicts.csv'))['status']).all()


def test_comparison_condition_does_not_set_exit_code(write_config, cs_config, tmp_path):
    """Test that a violated Kolotilin comparison is reported without failing the run."""
    cs_config['model']['params'] = {'b': 0.1}
    cs_config['prior'] = {'support': [0.0, 0.5, 1.0]}
    cs_config['checks'] = ['weak', 'linear_receiver']
    out = tmp_path / 'out'
    assert main(['check', '--config', write_config(cs_config), '--out', str(out)]) == EXIT_OK
    by_name = {r['condition']: r['status'] for r in read_jsonl(str(out / 'verdicts.jsonl'))}
    assert by_name['linear_receiver_kolotilin'] == 'VIOLATED'
    assert by_name['weak'] == 'HOLDS_STRICTLY'


@pytest.mark.parametrize('config', ['crawford_sobel.yaml', 'crra_suboptimal.yaml', 'linear_case_convex.yaml'])
def test_outputs_are_byte_identical_across_runs(config, config_path, tmp_path):
    """Test that repeated check and oracle runs write identical CSV and JSON-lines files."""
    runs = []
    for name in ('first', 'second'):
        out = tmp_path / name
        for command in ('check', 'oracle'):
            main([command, '--config', config_path(config), '--out', str(out), '--grid', '21x21'])
        runs.append(out)
    names = sorted(p.name for p in runs[0].iterdir() if p.suffix in ('.csv', '.jsonl'))
    assert 'binary_splits.csv' in names and 'verdicts.jsonl' in names
    assert names == sorted(p.name for p in runs[1].iterdir() if p.suffix in ('.csv', '.jsonl'))
    for name in names:
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes(), name


@pytest.mark.slow
def test_regime_map_full_resolution(tmp_path, capsys):
    """Test the default (gamma, rho) sweep: every validated lattice point agrees."""
    out = tmp_path / 'map'
    code = main(['regime-map', '--resolution', '26', '--validate-every', '4',
                 '--epsilon-band', '0.02', '--format', 'csv', '--out', str(out)])
    assert code == EXIT_OK
    assert 'disagreements 0' in capsys.readouterr().out
    df = read_csv(str(out / 'regime_map.csv'))
    assert len(df) == 26 * 26
    assert df['validated'].sum() > 100
    assert set(df['regime']) == {'OPTIMAL', 'SUBOPTIMAL', 'INCONCLUSIVE', 'EXCLUDED'}
