"""Run configuration parsing, serialization, and validation tests."""

import pytest

from crossmlp.config import (INIT_CHOICES, LOSS_VARIANTS, SEED_ENV_VAR,
                             RunConfig, config_dict, config_from_dict,
                             load_config, parse_config, serialize_config)
from crossmlp.errors import ConfigurationError


class TestParsing:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.run.epochs == 35
        assert cfg.run.batch_size == 4
        assert cfg.model.blocks == 9
        assert cfg.loss.variant == "refined"
        assert cfg.loss.lambda_image == 0.5
        assert cfg.loss.lambda_tv == 1.0
        assert cfg.optim.lr == 2e-4
        assert cfg.optim.beta1 == 0.5

    def test_assignments(self):
        cfg = parse_config(
            "run.seed=7\nmodel.blocks=3\nloss.lambda_tv=0.25\n"
            "data.augment=true\nrun.init=xavier\n"
        )
        assert cfg.run.seed == 7
        assert cfg.model.blocks == 3
        assert cfg.loss.lambda_tv == 0.25
        assert cfg.data.augment is True
        assert cfg.run.init == "xavier"

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# a comment\n\nrun.seed=3  # trailing\n")
        assert cfg.run.seed == 3

    def test_unknown_section_names_line(self):
        with pytest.raises(ConfigurationError, match="line 2"):
            parse_config("run.seed=1\nnetwork.depth=3\n")

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown key"):
            parse_config("run.sede=1\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigurationError):
            parse_config("run.seed 1\n")

    def test_unqualified_key_rejected(self):
        with pytest.raises(ConfigurationError, match="section.field"):
            parse_config("seed=1\n")

    def test_type_errors(self):
        with pytest.raises(ConfigurationError, match="expected int"):
            parse_config("run.seed=abc\n")
        with pytest.raises(ConfigurationError, match="boolean"):
            parse_config("data.augment=maybe\n")

    def test_bool_spellings(self):
        for raw, want in (("true", True), ("1", True), ("yes", True),
                          ("false", False), ("0", False), ("no", False)):
            assert parse_config(f"data.augment={raw}\n").data.augment is want


class TestValidation:
    def test_init_choices(self):
        for choice in INIT_CHOICES:
            assert parse_config(f"run.init={choice}\n").run.init == choice
        with pytest.raises(ConfigurationError):
            parse_config("run.init=uniform\n")

    def test_loss_variants(self):
        for variant in LOSS_VARIANTS:
            assert parse_config(f"loss.variant={variant}\n").loss.variant == variant
        with pytest.raises(ConfigurationError):
            parse_config("loss.variant=plain\n")

    def test_nonnegative_epochs(self):
        assert parse_config("run.epochs=0\n").run.epochs == 0
        with pytest.raises(ConfigurationError):
            parse_config("run.epochs=-1\n")

    def test_positive_counts(self):
        for key in ("run.batch_size", "data.image_size", "data.classes",
                    "model.blocks"):
            with pytest.raises(ConfigurationError, match=key):
                parse_config(f"{key}=0\n")


class TestRoundTrip:
    def test_serialize_parse_identity(self):
        cfg = parse_config("run.seed=9\nmodel.blocks=5\ndata.augment=true\n"
                           "loss.lambda_tv=0.125\nrun.init=gaussian-wide\n")
        again = parse_config(serialize_config(cfg))
        assert again == cfg

    def test_dict_round_trip(self):
        cfg = parse_config("run.seed=4\nmodel.n_candidates=2\n")
        tree = config_dict(cfg)
        assert tree["run"]["seed"] == 4
        assert config_from_dict(tree) == cfg

    def test_dict_round_trip_validates(self):
        tree = config_dict(RunConfig())
        tree["loss"]["variant"] = "bogus"
        with pytest.raises(ConfigurationError):
            config_from_dict(tree)


class TestLoadConfig:
    def test_reads_file(self, tmp_path, monkeypatch):
        monkeypatch.delenv(SEED_ENV_VAR, raising=False)
        path = tmp_path / "run.cfg"
        path.write_text("run.seed=11\n")
        assert load_config(path).run.seed == 11

    def test_env_seed_override(self, tmp_path, monkeypatch):
        path = tmp_path / "run.cfg"
        path.write_text("run.seed=11\n")
        monkeypatch.setenv(SEED_ENV_VAR, "42")
        assert load_config(path).run.seed == 42

    def test_env_seed_must_be_integer(self, tmp_path, monkeypatch):
        path = tmp_path / "run.cfg"
        path.write_text("run.seed=11\n")
        monkeypatch.setenv(SEED_ENV_VAR, "not-a-seed")
        with pytest.raises(ConfigurationError, match=SEED_ENV_VAR):
            load_config(path)
