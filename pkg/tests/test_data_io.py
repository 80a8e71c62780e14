import numpy as np
import pytest

from stpool.data_io import (
    CSV_HEADER,
    Batcher,
    ScenarioConfig,
    WindowConfig,
    generate_synthetic,
    parse_csv,
    scenes_from_tracks,
    split_and_batch,
    write_csv,
)
from stpool.errors import ConfigError, DataError
from stpool.representation import Track


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


HEADER = ",".join(CSV_HEADER)


class TestParseCsv:
    def test_empty_file_with_header(self, tmp_path):
        p = tmp_path / "empty.csv"
        write_lines(p, [HEADER])
        assert parse_csv(p) == []

    def test_two_agents_three_frames(self, tmp_path):
        p = tmp_path / "two.csv"
        rows = [HEADER]
        for frame in range(3):
            t = 0.5 * frame
            rows.append(f"{frame},{t},1,vehicle,{frame}.0,0.0")
            rows.append(f"{frame},{t},2,pedestrian,0.0,{frame}.0")
        write_lines(p, rows)
        tracks = parse_csv(p)
        assert [tr.agent_id for tr in tracks] == [1, 2]
        assert all(len(tr) == 3 for tr in tracks)
        assert tracks[1].agent_type == "pedestrian"

    def test_duplicate_frame_agent_names_line(self, tmp_path):
        p = tmp_path / "dup.csv"
        write_lines(p, [HEADER, "0,0.0,1,vehicle,0,0", "0,0.0,1,vehicle,1,1"])
        with pytest.raises(DataError, match="dup.csv:3"):
            parse_csv(p)

    def test_missing_column_reported(self, tmp_path):
        p = tmp_path / "short.csv"
        write_lines(p, [HEADER, "0,0.0,1,vehicle,0"])
        with pytest.raises(DataError, match="short.csv:2"):
            parse_csv(p)

    def test_wrong_header_rejected(self, tmp_path):
        p = tmp_path / "hdr.csv"
        write_lines(p, ["a,b,c", "1,2,3"])
        with pytest.raises(DataError, match="expected header"):
            parse_csv(p)

    def test_unknown_type_reported_with_line(self, tmp_path):
        p = tmp_path / "typ.csv"
        write_lines(p, [HEADER, "0,0.0,1,horse,0,0"])
        with pytest.raises(DataError, match="typ.csv:2"):
            parse_csv(p)

    def test_non_monotone_timestamp_rejected(self, tmp_path):
        p = tmp_path / "mono.csv"
        write_lines(p, [HEADER, "0,1.0,1,vehicle,0,0", "1,0.5,1,vehicle,1,1"])
        with pytest.raises(DataError, match="increase"):
            parse_csv(p)

    def test_malformed_number_reported(self, tmp_path):
        p = tmp_path / "bad.csv"
        write_lines(p, [HEADER, "0,zero,1,vehicle,0,0"])
        with pytest.raises(DataError, match="bad.csv:2"):
            parse_csv(p)

    def test_round_trip_exact(self, tmp_path, rng):
        tracks = [
            Track(3, "bicycle", 0.5 * np.arange(4), rng.uniform(-50, 50, (4, 2))),
            Track(7, "vehicle", 0.5 * np.arange(2, 6), rng.uniform(-50, 50, (4, 2))),
        ]
        p = tmp_path / "rt.csv"
        write_csv(p, tracks)
        back = parse_csv(p)
        assert [tr.agent_id for tr in back] == [3, 7]
        for orig, got in zip(tracks, back):
            np.testing.assert_allclose(got.positions, orig.positions, atol=1e-9)
            np.testing.assert_allclose(got.times, orig.times, atol=1e-9)


class TestScenesFromTracks:
    def make_track(self, agent_id, frames, agent_type="vehicle", speed=1.0):
        times = 0.5 * np.asarray(frames, dtype=float)
        return Track(agent_id, agent_type, times, np.outer(times, [speed, 0.0]))

    def test_exact_window_single_scene(self):
        window = WindowConfig(history_steps=3, future_steps=2, dt=0.5)
        scenes = scenes_from_tracks([self.make_track(0, range(5))], window)
        assert len(scenes) == 1
        assert len(scenes[0].target) == 3
        assert scenes[0].future_positions.shape == (2, 2)

    def test_half_present_neighbor_kept_but_not_target(self):
        window = WindowConfig(history_steps=3, future_steps=2, dt=0.5)
        full = self.make_track(0, range(5))
        partial = self.make_track(1, range(2))
        scenes = scenes_from_tracks([full, partial], window)
        assert len(scenes) == 1
        assert scenes[0].target_id == 0
        assert 1 in scenes[0].tracks

    def test_non_overlapping_window_count(self):
        # 13 frames, window 3+2=5, stride 2 -> floor((13-5)/2)+1 = 5 scenes
        window = WindowConfig(history_steps=3, future_steps=2, dt=0.5, stride=2)
        scenes = scenes_from_tracks([self.make_track(0, range(13))], window)
        assert len(scenes) == (13 - 5) // 2 + 1

    def test_off_grid_timestamp_rejected(self):
        track = Track(0, "vehicle", np.array([0.0, 0.5, 0.8]), np.zeros((3, 2)))
        with pytest.raises(DataError, match="grid"):
            scenes_from_tracks([track], WindowConfig(history_steps=2, future_steps=1, dt=0.5))

    def test_every_point_maps_to_input(self):
        window = WindowConfig(history_steps=3, future_steps=2, dt=0.5)
        tracks = [self.make_track(0, range(5)), self.make_track(1, [1, 2], speed=2.0)]
        scenes = scenes_from_tracks(tracks, window)
        source = {
            (tr.agent_id, round(float(t), 9), round(float(p[0]), 9))
            for tr in tracks
            for t, p in zip(tr.times, tr.positions)
        }
        for scene in scenes:
            for aid, tr in scene.tracks.items():
                for t, p in zip(tr.times, tr.positions):
                    assert (aid, round(float(t), 9), round(float(p[0]), 9)) in source


class TestGenerateSynthetic:
    def test_constant_velocity_noiseless_future_is_linear(self):
        cfg = ScenarioConfig(kind="constant_velocity", n_scenes=5, noise_sigma=0.0, seed=3)
        for scene in generate_synthetic(cfg):
            v = scene.truth["velocity"]
            start = scene.truth["start"]
            expected = start[None, :] + scene.future_times[:, None] * v[None, :]
            np.testing.assert_allclose(scene.future_positions, expected, atol=1e-9)

    def test_lead_brake_follower_slows_in_future(self):
        cfg = ScenarioConfig(kind="lead_brake", n_scenes=8, seed=4)
        for scene in generate_synthetic(cfg):
            future = scene.future_positions
            final_speed = np.linalg.norm(future[-1] - future[-2]) / cfg.dt
            hist = scene.target.positions
            current_speed = np.linalg.norm(hist[-1] - hist[-2]) / cfg.dt
            assert final_speed < current_speed

    def test_crossing_target_decelerates(self):
        cfg = ScenarioConfig(kind="crossing", n_scenes=6, seed=9)
        for scene in generate_synthetic(cfg):
            future = scene.future_positions
            final_speed = np.linalg.norm(future[-1] - future[-2]) / cfg.dt
            assert final_speed < scene.truth["v_b"] + 1e-9

    def test_same_seed_bitwise_identical(self):
        cfg = ScenarioConfig(kind="lead_brake", n_scenes=4, seed=11, noise_sigma=0.05)
        a = generate_synthetic(cfg)
        b = generate_synthetic(cfg)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.future_positions, sb.future_positions)
            for aid in sa.tracks:
                np.testing.assert_array_equal(sa.tracks[aid].positions, sb.tracks[aid].positions)

    def test_dropout_keeps_target_complete(self):
        cfg = ScenarioConfig(kind="dropout", n_scenes=10, seed=5, dropout_rate=0.6)
        for scene in generate_synthetic(cfg):
            assert len(scene.target) == cfg.history_steps
            assert len(scene.target) >= 2

    def test_dropout_removes_neighbor_observations(self):
        base = ScenarioConfig(kind="lead_brake", n_scenes=6, seed=5)
        dropped = ScenarioConfig(kind="dropout", n_scenes=6, seed=5, dropout_rate=0.5)
        n_base = sum(
            len(s.tracks[a]) for s in generate_synthetic(base) for a in s.neighbor_ids()
        )
        n_drop = sum(
            len(s.tracks[a]) for s in generate_synthetic(dropped) for a in s.neighbor_ids()
        )
        assert n_drop < n_base

    def test_invalid_kind_names_valid_ones(self):
        with pytest.raises(ConfigError, match="constant_velocity"):
            ScenarioConfig(kind="warp_drive")

    def test_agent_count_in_range(self):
        cfg = ScenarioConfig(kind="constant_velocity", n_scenes=20, n_agents_min=3, n_agents_max=5, seed=0)
        for scene in generate_synthetic(cfg):
            assert 3 <= len(scene.tracks) <= 5


class TestSplitAndBatch:
    def scenes(self, n):
        cfg = ScenarioConfig(kind="constant_velocity", n_scenes=n, seed=1)
        return generate_synthetic(cfg)

    def test_zero_val_fraction(self):
        batcher, val = split_and_batch(self.scenes(10), 0.0, 4, seed=0)
        assert val == []
        assert len(batcher.scenes) == 10

    def test_partial_batch(self):
        batcher, _ = split_and_batch(self.scenes(100), 0.0, 128, seed=0)
        batches = batcher.epoch(0)
        assert len(batches) == 1
        assert len(batches[0]) == 100

    def test_balanced_batches(self):
        batcher, _ = split_and_batch(self.scenes(10), 0.0, 4, seed=0)
        sizes = [len(b) for b in batcher.epoch(0)]
        assert sorted(sizes) == [3, 3, 4]

    def test_same_seed_same_split(self):
        scenes = self.scenes(20)
        b1, v1 = split_and_batch(scenes, 0.25, 4, seed=7)
        b2, v2 = split_and_batch(scenes, 0.25, 4, seed=7)
        assert [id(s) for s in v1] == [id(s) for s in v2]
        assert [id(s) for s in b1.scenes] == [id(s) for s in b2.scenes]

    def test_epochs_reshuffle(self):
        batcher, _ = split_and_batch(self.scenes(20), 0.0, 20, seed=0)
        order0 = [id(s) for s in batcher.epoch(0)[0]]
        order1 = [id(s) for s in batcher.epoch(1)[0]]
        assert order0 != order1
        assert sorted(order0) == sorted(order1)

    def test_invalid_fraction_rejected(self):
        with pytest.raises(ConfigError):
            split_and_batch(self.scenes(4), 1.0, 2, seed=0)
