"""Configuration parsing, validation, and lossless round trips."""

import math

import pytest

from maxwell_rb.config import (
    RunConfig,
    config_to_dict,
    default_config,
    load_config,
    parse_config_text,
    render_config,
    with_overrides,
)
from maxwell_rb.errors import ConfigError


class TestDefaults:
    def test_empty_file_is_valid(self):
        assert parse_config_text("") == default_config()

    def test_default_values(self):
        cfg = default_config()
        assert cfg.dims0 == (1.0, 1.1, 1.2)
        assert cfg.dims1 == (1.0, 1.1, 0.6)
        assert cfg.resolution == (6, 6, 6)
        assert cfg.K == 5
        assert cfg.gauge_mode == "mixed"
        assert cfg.N_init == "auto"
        assert cfg.matching == "greedy"

    def test_comments_and_blank_lines_ignored(self):
        text = "\n# a comment\nK = 3   # trailing note\n\nseed = 9\n"
        cfg = parse_config_text(text)
        assert cfg.K == 3 and cfg.seed == 9


class TestRoundTrip:
    def test_default_round_trip(self):
        cfg = default_config()
        assert parse_config_text(render_config(cfg)) == cfg

    def test_awkward_floats_round_trip(self):
        # repr-based rendering must survive values that decimal
        # formatting would truncate.
        cfg = with_overrides(
            default_config(),
            tol=3e-09,
            shift_fraction=0.1 + 0.2,
            dims1=(1.0, 1.0000000001, 0.6),
        )
        again = parse_config_text(render_config(cfg))
        assert again == cfg

    def test_render_lists_every_key_once(self):
        text = render_config(default_config())
        keys = [line.split("=")[0].strip() for line in text.strip().splitlines()]
        assert len(keys) == len(set(keys))
        assert "dims0" in keys and "output" in keys
        assert text.endswith("\n")

    def test_config_to_dict_plain_types(self):
        d = config_to_dict(default_config())
        assert d["resolution"] == [6, 6, 6]
        assert d["dims1"] == [1.0, 1.1, 0.6]
        assert d["gauge_mode"] == "mixed"
        assert all(not isinstance(v, tuple) for v in d.values())


class TestParseErrors:
    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match=r"<config>:3: unknown key 'frobnicate'"):
            parse_config_text("\nK = 5\nfrobnicate = 1\n")

    def test_missing_equals_reports_line(self):
        with pytest.raises(ConfigError, match=r":1: expected 'key = value'"):
            parse_config_text("K 5\n")

    def test_duplicate_key_reports_both_lines(self):
        with pytest.raises(ConfigError, match=r":4: duplicate key 'seed' \(first set on line 2\)"):
            parse_config_text("\nseed = 1\n\nseed = 2\n")

    def test_bad_number_reports_key(self):
        with pytest.raises(ConfigError, match=r"key 'tol'.*expected a number"):
            parse_config_text("tol = fast\n")

    def test_nan_rejected(self):
        with pytest.raises(ConfigError, match="NaN"):
            parse_config_text("tol = nan\n")

    def test_bad_choice_lists_options(self):
        with pytest.raises(ConfigError, match=r"classical\|mixed"):
            parse_config_text("gauge_mode = magnetostatic\n")

    def test_triple_needs_three_entries(self):
        with pytest.raises(ConfigError, match="three whitespace-separated"):
            parse_config_text("resolution = 4 4\n")

    def test_source_name_appears_in_message(self):
        with pytest.raises(ConfigError, match=r"runs/a\.cfg:1"):
            parse_config_text("K = x\n", source="runs/a.cfg")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.cfg")

    def test_load_config_reads_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("K = 4\n")
        assert load_config(path).K == 4


class TestValidation:
    @pytest.mark.parametrize(
        "text",
        [
            "K = 0",
            "tol = 0.0",
            "shift_fraction = 1.0",
            "cut_fraction = 0.0",
            "threshold = 1.0",
            "initial_steps = 1",
            "max_depth = -1",
            "track_buffer = -1",
            "resolution = 1 4 4",
            "dims0 = 1.0 -1.0 1.0",
            "eval_set_size = 0",
            "seed = -1",
            "N_train = 0",
        ],
    )
    def test_out_of_range_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text + "\n")

    def test_n_init_capped_by_snapshot_count(self):
        # more starting vectors than snapshots cannot exist
        with pytest.raises(ConfigError, match="exceeds the snapshot count"):
            parse_config_text("N_POD = 2\nK = 2\nN_init = 5\n")

    def test_n_init_capped_by_n_max(self):
        with pytest.raises(ConfigError, match="exceeds N_max"):
            parse_config_text("N_max = 10\nN_init = 20\n")

    def test_n_init_explicit_value_accepted(self):
        cfg = parse_config_text("N_init = 4\n")
        assert cfg.N_init == 4

    def test_tol_infinite_allowed(self):
        # inf disables greedy enrichment but is a legal setting
        assert math.isinf(parse_config_text("tol = inf\n").tol)


class TestOverrides:
    def test_override_changes_field(self):
        cfg = with_overrides(default_config(), seed=99, gauge_mode="classical")
        assert cfg.seed == 99 and cfg.gauge_mode == "classical"

    def test_override_revalidates(self):
        with pytest.raises(ConfigError, match="K must be"):
            with_overrides(default_config(), K=0)

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError, match="unknown configuration field"):
            with_overrides(default_config(), mesh_size=4)

    def test_original_untouched(self):
        base = default_config()
        with_overrides(base, seed=5)
        assert base.seed == RunConfig().seed
