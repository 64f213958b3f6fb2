"""Tests for the command-line entry point."""

import json
from pathlib import Path

import pytest
import yaml

from fivestar.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, build_parser, main
from fivestar.models import TrialDataset
from tests.conftest import TrialFactory


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    """YAML config matching the columns of trial_csv."""
    path: Path = tmp_path / 'analysis.yaml'
    config: dict[str, object] = {
        'seed': 11,
        'data': {
            'covariates': [
                {'name': 'x1', 'kind': 'binary'},
                {'name': 'z1', 'kind': 'continuous'},
                {'name': 'z2', 'kind': 'continuous'},
                {'name': 'region', 'kind': 'nominal', 'levels': ['EU', 'NA', 'APAC']},
            ],
        },
        'enet': {'psi_grid': [1.0], 'folds': 5, 'n_lambda': 20},
        'ctree': {'min_node': 30, 'pvalue_method': 'asymptotic'},
        'report': {'hazard_grid_points': 10},
        'logging': {'console_level': 'WARNING'},
    }
    path.write_text(yaml.safe_dump(config), encoding='utf-8')
    return path


class TestParser:
    def test_command_is_required(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_verbose_and_quiet_exclude_each_other(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args(['logrank', '--data', 'x.csv', '-v', '-q'])


class TestCommands:
    """Each command against a small trial CSV."""

    def test_logrank(
        self, trial_csv: Path, config_file: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code: int = main(['logrank', '--data', str(trial_csv), '--config', str(config_file), '-q'])

        assert code == EXIT_OK
        result = json.loads(capsys.readouterr().out)
        assert result['z'] < 0
        assert 0.0 < result['p_value'] < 0.05  # noqa: PLR2004

    def test_rmst_with_tau(
        self, trial_csv: Path, config_file: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code: int = main(
            ['rmst', '--data', str(trial_csv), '--config', str(config_file), '--tau', '1.0', '-q']
        )

        assert code == EXIT_OK
        assert json.loads(capsys.readouterr().out)['tau'] == pytest.approx(1.0)

    def test_km_to_file(self, trial_csv: Path, config_file: Path, tmp_path: Path) -> None:
        out: Path = tmp_path / 'curves' / 'km.csv'

        code: int = main(
            ['km', '--data', str(trial_csv), '--config', str(config_file), '--out', str(out), '-q']
        )

        assert code == EXIT_OK
        lines: list[str] = out.read_text(encoding='utf-8').splitlines()
        assert lines[0] == 'arm,time,survival,variance'
        assert lines[1].startswith('A,0.0,1.0')

    def test_analyze(
        self,
        trial_csv: Path,
        config_file: Path,
        tmp_path: Path,
        capsys: pytest.CaptureFixture[str],
    ) -> None:
        out: Path = tmp_path / 'report'

        code: int = main(
            ['analyze', '--data', str(trial_csv), '--config', str(config_file), '--out', str(out), '-q']
        )

        assert code == EXIT_OK
        assert capsys.readouterr().out.startswith('c=')
        assert (out / 'report.json').exists()
        assert (out / 'forest.csv').exists()


class TestExitCodes:
    """Failures map onto documented exit codes."""

    def test_missing_data_file(self, config_file: Path, tmp_path: Path) -> None:
        code: int = main(
            ['logrank', '--data', str(tmp_path / 'absent.csv'), '--config', str(config_file), '-q']
        )

        assert code == EXIT_INVALID

    def test_invalid_config(self, trial_csv: Path, tmp_path: Path) -> None:
        bad: Path = tmp_path / 'bad.yaml'
        bad.write_text('enet:\n  folds: 1\n', encoding='utf-8')

        code: int = main(['logrank', '--data', str(trial_csv), '--config', str(bad), '-q'])

        assert code == EXIT_INVALID

    def test_nonpositive_tau(self, trial_csv: Path, config_file: Path) -> None:
        code: int = main(
            ['rmst', '--data', str(trial_csv), '--config', str(config_file), '--tau=-1', '-q']
        )

        assert code == EXIT_INVALID

    def test_step_failure_is_numerical(self, make_trial: TrialFactory, tmp_path: Path) -> None:
        data: TrialDataset = make_trial(
            [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            [1, 0, 1, 0, 1, 0],
            ['A', 'B', 'A', 'B', 'A', 'B'],
        )
        path: Path = tmp_path / 'no_events_b.csv'
        data.to_frame().to_csv(path, index=False)
        empty_config: Path = tmp_path / 'empty.yaml'
        empty_config.write_text('logging:\n  console_level: ERROR\n', encoding='utf-8')

        code: int = main(
            ['analyze', '--data', str(path), '--config', str(empty_config), '--out', str(tmp_path / 'r')]
        )

        assert code == EXIT_NUMERICAL
