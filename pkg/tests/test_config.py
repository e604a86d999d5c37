"""TOML configuration loading, defaults, and rejection paths."""

import logging

import pytest

from fdmfg import ConfigurationError, StabilityError, load_config


def write(tmp_path, text):
    path = tmp_path / "run.toml"
    path.write_text(text)
    return str(path)


class TestDefaults:
    def test_empty_file_yields_reference_defaults(self, tmp_path):
        cfg = load_config(write(tmp_path, ""))
        assert cfg.network.beta == 1.0
        assert cfg.network.p_static == 6.0
        assert cfg.network.lambda_bs == 5e-4
        assert cfg.grid.num_time_steps == 100
        assert cfg.grid.num_energy_steps == 100
        assert cfg.grid.horizon_t == 1.0
        assert cfg.grid.e_max == 2.0
        assert cfg.solver.tolerance == 1e-5
        assert cfg.thresholds_db == (-10.0, 0.0, 10.0)
        assert cfg.seed == 0
        assert cfg.echo == {}

    def test_no_path_means_defaults(self):
        cfg = load_config(None)
        assert cfg.network.alpha == 3.0
        assert cfg.workers == 1

    def test_defaulted_fields_are_logged(self, tmp_path, caplog):
        with caplog.at_level(logging.INFO, logger="fdmfg.config"):
            load_config(write(tmp_path, "[network]\nbeta = 0.5\n"))
        joined = " ".join(r.getMessage() for r in caplog.records)
        assert "alpha" in joined
        assert "num_time_steps" in joined


class TestOverrides:
    def test_sections_apply(self, tmp_path):
        cfg = load_config(write(tmp_path, """
[network]
beta = 0.5
alpha = 3.5

[grid]
num_time_steps = 50
num_energy_steps = 40

[solver]
damping = 1.0

[quadrature]
omega_nodes = 96

[simulation]
n_realizations = 17
workers = 2
thresholds_db = [0.0]

[experiment]
seed = 99
label = "trial"
"""))
        assert cfg.network.beta == 0.5
        assert cfg.network.alpha == 3.5
        assert cfg.grid.num_time_steps == 50
        assert cfg.solver.damping == 1.0
        assert cfg.quadrature.omega_nodes == 96
        assert cfg.n_realizations == 17
        assert cfg.workers == 2
        assert cfg.thresholds_db == (0.0,)
        assert cfg.seed == 99
        assert cfg.label == "trial"
        assert cfg.echo["network"]["beta"] == 0.5

    def test_integer_accepted_for_float_field(self, tmp_path):
        cfg = load_config(write(tmp_path, "[network]\nbeta = 2\n"))
        assert cfg.network.beta == 2.0


class TestRejections:
    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigurationError, match="unknown key"):
            load_config(write(tmp_path, "[network]\nbetaa = 1.0\n"))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigurationError, match="unknown section"):
            load_config(write(tmp_path, "[metwork]\nbeta = 1.0\n"))

    def test_parse_error_carries_line(self, tmp_path):
        with pytest.raises(ConfigurationError, match="line 2"):
            load_config(write(tmp_path, "[network]\nbeta = = 1\n"))

    def test_alpha_at_pole(self, tmp_path):
        with pytest.raises(ConfigurationError, match="alpha"):
            load_config(write(tmp_path, "[network]\nalpha = 2.0\n"))

    def test_cfl_violation_detected_at_load(self, tmp_path):
        with pytest.raises(StabilityError) as err:
            load_config(write(tmp_path, "[grid]\nnum_energy_steps = 400\n"))
        assert err.value.ratio == pytest.approx(2.0)

    def test_wrong_type(self, tmp_path):
        with pytest.raises(ConfigurationError, match="must be a number"):
            load_config(write(tmp_path, "[network]\nbeta = \"high\"\n"))
        with pytest.raises(ConfigurationError, match="must be an integer"):
            load_config(write(tmp_path, "[grid]\nnum_time_steps = 50.5\n"))
        with pytest.raises(ConfigurationError, match="list of numbers"):
            load_config(write(tmp_path, "[simulation]\nthresholds_db = 3.0\n"))

    def test_bool_is_not_a_number(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(write(tmp_path, "[network]\nbeta = true\n"))

    def test_zero_realizations(self, tmp_path):
        with pytest.raises(ConfigurationError, match="n_realizations"):
            load_config(write(tmp_path, "[simulation]\nn_realizations = 0\n"))

    def test_bad_uplink_mode(self, tmp_path):
        with pytest.raises(ConfigurationError, match="uplink_signal"):
            load_config(write(tmp_path, '[network]\nuplink_signal = "mixed"\n'))

    def test_fixed_power_above_cap(self, tmp_path):
        with pytest.raises(ConfigurationError, match="fixed_power"):
            load_config(write(tmp_path, "[simulation]\nfixed_power = 1.5\n"))

    def test_seed_range(self, tmp_path):
        with pytest.raises(ConfigurationError, match="seed"):
            load_config(write(tmp_path, "[experiment]\nseed = -1\n"))
