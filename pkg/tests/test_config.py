import pytest

from ariw.attacks import AttackSuite
from ariw.config import LossWeights, TrainConfig, format_config, parse_config
from ariw.gradmap import GradMode


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.lr, cfg.batch, cfg.steps, cfg.image_size, cfg.L) == (1e-4, 1, 3000, 64, 16)
    assert LossWeights().as_tuple() == (1.5, 1.0, 1.0, 1.0)
    assert cfg.grid == 8 and cfg.init_kind == "ones"


def test_round_trip_text():
    cfg = TrainConfig(lr=3e-4, seed=7, grad_mode=GradMode(enabled=False), attack_suite=AttackSuite.full_default(),
                      loss_weights=LossWeights(1, 2, 3, 4), kernel_size=5, channels=(8, 16))
    assert parse_config(format_config(cfg)) == cfg
    ctl = TrainConfig(decoder_lr_scale=10, psnr_target=34, psnr_target_start=20, psnr_target_ramp=1200, quality_gain=0.02)
    assert parse_config(format_config(ctl)) == ctl


def test_parse_errors():
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config("learning_rate = 0.1")
    with pytest.raises(ValueError, match="duplicate"):
        parse_config("lr = 0.1\nlr = 0.2")
    with pytest.raises(ValueError, match="key = value"):
        parse_config("lr 0.1")
    with pytest.raises(ValueError):
        parse_config("kernel_size = 4")
    with pytest.raises(ValueError):
        parse_config("image_size = 60")
    with pytest.raises(ValueError):
        parse_config("batch = 2")
    with pytest.raises(ValueError):
        parse_config("psnr_target = -1")
    with pytest.raises(ValueError):
        parse_config("decoder_lr_scale = 0")


def test_comments_and_blank_lines():
    cfg = parse_config("# desk run\n\nsteps = 10  # short\nattack_suite = identity, jpeg:50\n")
    assert cfg.steps == 10 and [s.label for s in cfg.attack_suite] == ["identity", "jpeg:50"]
