import numpy as np
import pytest

from stpool.activations import (
    SweepGrid,
    dominant_neighbor_type,
    median_neighbor_velocity,
    scene_channel_activations,
    select_channels,
    sweep_field,
)
from stpool.autodiff import max_pool_set, Tensor
from stpool.cli import main
from stpool.data_io import ScenarioConfig, generate_synthetic
from stpool.encoder import st_pooling_trace
from stpool.errors import ConfigError
from stpool.model import ModelConfig, init_model, named_parameters
from stpool.pipeline import prepare_scenes


@pytest.fixture(scope="module")
def setup():
    cfg = ModelConfig(hidden=8, refinements=1)
    model = init_model(cfg, seed=4)
    scenes = generate_synthetic(ScenarioConfig(kind="lead_brake", n_scenes=6, seed=6))
    prepared = prepare_scenes(scenes, cfg)
    return model, prepared


def test_grid_sweep_row_count(setup):
    model, _ = setup
    grid = SweepGrid(x1_min=-10, x1_max=10, x1_step=5, x2_min=-2, x2_max=2, x2_step=1, t_min=-1, t_max=0, t_step=0.5)
    rows = sweep_field(model, [0, 3], grid)
    assert len(rows) == 2 * 5 * 5 * 3


def test_zero_weight_model_all_zero_activations(setup):
    _, prepared = setup
    cfg = ModelConfig(hidden=8, refinements=1)
    model = init_model(cfg, seed=0)
    # Zero every trainable weight; fresh running stats stay (0 mean, 1 var).
    for _, t in named_parameters(model):
        t.data[...] = 0.0
    grid = SweepGrid(x1_min=-5, x1_max=5, x1_step=5, x2_min=0, x2_max=0, x2_step=1, t_min=-0.5, t_max=0, t_step=0.5)
    rows = sweep_field(model, [0], grid)
    assert all(r[4] == 0.0 for r in rows)
    scene_rows = scene_channel_activations(model, prepared, [0, 1])
    assert all(r[2] == 0.0 for r in scene_rows)


def test_pooled_value_is_max_over_per_point_field(setup):
    model, prepared = setup
    for pr in prepared[:3]:
        context, pre_pool, argmax_points, _valid = st_pooling_trace(pr.point_set, model.encoder, "eval")
        pooled, _ = max_pool_set(Tensor(pre_pool))
        np.testing.assert_allclose(context.data, pooled.data, rtol=1e-12)
        for d in (0, 5):
            np.testing.assert_allclose(context.data[d], pre_pool[:, d].max(), rtol=1e-12)


def test_scene_rows_carry_point_identity_and_rank(setup):
    model, prepared = setup
    rows = scene_channel_activations(model, prepared, [2])
    assert len(rows) == len(prepared)
    ranks = sorted(r[6] for r in rows)
    assert ranks == list(range(len(prepared)))
    best = min(rows, key=lambda r: r[6])
    assert best[2] == max(r[2] for r in rows)


def test_channel_out_of_range_rejected(setup):
    model, prepared = setup
    with pytest.raises(ConfigError):
        sweep_field(model, [999])
    with pytest.raises(ConfigError):
        scene_channel_activations(model, prepared, [-1])


def test_select_channels_prefers_variance(setup):
    model, prepared = setup
    channels = select_channels(model, prepared, n=2)
    assert len(channels) == 2
    assert all(0 <= c < 8 for c in channels)


def test_probe_stats_from_data(setup):
    _, prepared = setup
    v = median_neighbor_velocity(prepared)
    assert len(v) == 2 and all(np.isfinite(v))
    assert dominant_neighbor_type(prepared) == "vehicle"


def test_cli_activations_outputs(tmp_path):
    scenario = tmp_path / "scenario.txt"
    scenario.write_text("kind=lead_brake\nn_scenes=3\nseed=2\n", encoding="utf-8")
    data_dir = tmp_path / "data"
    assert main(["synth", "--config", str(scenario), "--out", str(data_dir)]) == 0
    run_cfg = tmp_path / "run.txt"
    run_cfg.write_text("hidden=8\nrefinements=1\nepochs=1\nbatch_size=8\nval_fraction=0.34\n", encoding="utf-8")
    train_out = tmp_path / "train"
    assert main(["train", "--config", str(run_cfg), "--data", str(data_dir), "--out", str(train_out)]) == 0
    act_out = tmp_path / "act"
    assert main([
        "activations", "--config", str(run_cfg), "--checkpoint", str(train_out / "final.ckpt"),
        "--data", str(data_dir), "--out", str(act_out), "--channels", "0,3",
    ]) == 0
    field = (act_out / "activations_field.csv").read_text().splitlines()
    assert field[0] == "channel,x1,x2,t,activation"
    # default grid: lon 90 step 5 -> 37, lat 15 step 1 -> 31, t 3 step 0.5 -> 7
    assert len(field) == 1 + 2 * 37 * 31 * 7
    scenes_csv = (act_out / "activations_scenes.csv").read_text().splitlines()
    assert scenes_csv[0] == "channel,scene_index,value,agent_id,point_t,is_target,rank"
    assert len(scenes_csv) == 1 + 2 * 3
