import json
import pathlib

import pytest

from torusarena.cli import main as cli_main
from torusarena.harness import (
    GreedyCourier,
    MatchConfig,
    MatchConfigError,
    ReplayError,
    cache_stats,
    log_digest,
    replay,
    run_match,
)
from torusarena.world import World, WorldConfig


def small_config(**overrides):
    cfg = MatchConfig(
        dims=(24, 24),
        team_size=4,
        steps=60,
        seed=11,
        opponent="idle",
        task_interval=0,
        goal_cluster_count=1,
        dispensers_per_type=1,
        taskboard_count=1,
    )
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


class TestConfigValidation:
    def test_bad_opponent_named_in_error(self):
        cfg = small_config(opponent="chess-engine")
        with pytest.raises(MatchConfigError, match="opponent"):
            cfg.validate()

    def test_bad_dims_named_in_error(self):
        cfg = small_config(dims=(4, 4))
        with pytest.raises(MatchConfigError, match="dims"):
            cfg.validate()

    def test_cache_location_does_not_change_config_hash(self):
        a, b = small_config(), small_config(cache_dir="/tmp/x", cache_readonly=True)
        assert a.config_hash() == b.config_hash()


class TestRunMatch:
    def test_same_invocation_same_digest(self):
        _, l1 = run_match(small_config())
        _, l2 = run_match(small_config())
        assert log_digest(l1) == log_digest(l2)

    def test_different_seed_different_digest(self):
        _, l1 = run_match(small_config())
        _, l2 = run_match(small_config(seed=12))
        assert log_digest(l1) != log_digest(l2)

    def test_report_counters_match_log(self):
        report, log = run_match(small_config())
        assert report.steps == 60
        idents = sum(
            json.loads(l).get("count", 0)
            for l in log
            if json.loads(l).get("type") == "identification"
        )
        assert report.identification_count == idents


class TestReplay:
    def test_replay_reproduces_report(self):
        report, log = run_match(small_config())
        assert replay(log) == report

    def test_flipped_byte_fails_checksum(self):
        _, log = run_match(small_config())
        middle = len(log) // 2
        line = log[middle]
        flipped = line.replace('"', "'", 1)
        with pytest.raises(ReplayError, match="checksum"):
            replay(log[:middle] + [flipped] + log[middle + 1 :])

    def test_truncated_log_reports_last_valid_step(self):
        _, log = run_match(small_config())
        with pytest.raises(ReplayError) as e:
            replay(log[: len(log) // 2])
        assert e.value.last_valid_step >= 0

    def test_fresh_log_replay(self):
        report, log = run_match(small_config())
        assert report.scores["beta"] == 0  # idle side never scores
        again = replay(log)
        assert again.to_dict() == report.to_dict()

    def test_committed_golden_log_replay(self):
        # Cross-version regression pin: a frozen log must keep replaying to
        # the frozen report, and the live engine must still reproduce it.
        fixtures = pathlib.Path(__file__).parent / "fixtures"
        log = (fixtures / "golden_match.log").read_text().splitlines()
        expected = json.loads((fixtures / "golden_match.report.json").read_text())
        assert replay(log).to_dict() == expected
        cfg = MatchConfig(
            dims=(24, 24),
            team_size=4,
            steps=80,
            seed=2024,
            opponent="greedy-courier",
            task_interval=10,
            goal_cluster_count=1,
            dispensers_per_type=1,
            taskboard_count=1,
        )
        report, fresh = run_match(cfg)
        assert fresh == log
        assert report.to_dict() == expected


class TestOpponents:
    def test_greedy_courier_carries_block_to_goal(self):
        cfg = WorldConfig(
            dims=(20, 20),
            teams={"alpha": 1, "beta": 1},
            obstacle_density=0.0,
            task_interval=0,
            clear_event_rate=0.0,
        )
        from torusarena.world import FixedLayout

        cfg.fixed = FixedLayout(
            obstacles=[],
            goals=[(10, 10)],
            dispensers=[((15, 10), "b1")],
            taskboards=[(17, 10)],
            spawns={"alpha01": (2, 2), "beta01": (18, 10)},
            tasks=[(0, "t", 10, 150, [((0, 1), "b1")])],
        )
        world = World(cfg, 0)
        courier = GreedyCourier(["beta01"], 0)
        percepts = world.percepts()
        for step in range(60):
            acts = courier.act(world, {"beta01": percepts["beta01"]}, step)
            percepts, _ = world.step(acts)
            if world.agents["beta01"].pos == (10, 10) and world.agents["beta01"].held:
                break
        assert world.agents["beta01"].pos == (10, 10)
        assert world.agents["beta01"].held

    def test_random_walk_deterministic(self):
        cfg = small_config(opponent="random-walk")
        _, l1 = run_match(cfg)
        _, l2 = run_match(cfg)
        assert log_digest(l1) == log_digest(l2)


class TestCacheStats:
    def test_fresh_dir_zero_keys(self, tmp_path):
        stats = cache_stats(str(tmp_path))
        assert stats["keys"] == 0

    def test_warm_run_lowers_misses_and_counts_keys(self, tmp_path):
        cfg = small_config(cache_dir=str(tmp_path), steps=120, task_interval=15)
        cold, _ = run_match(cfg)
        stats = cache_stats(str(tmp_path))
        warm, _ = run_match(cfg)
        if cold.cache_misses:
            assert stats["keys"] > 0
            assert warm.cache_misses < cold.cache_misses

    def test_corrupt_entry_listed_invalid(self, tmp_path):
        (tmp_path / "notakey").write_text("junk\n")
        stats = cache_stats(str(tmp_path))
        assert stats["invalid"] == ["notakey"]
        assert stats["keys"] == 0


class TestCli:
    def test_run_and_replay_roundtrip(self, tmp_path, capsys):
        log_path = tmp_path / "match.log"
        rc = cli_main(
            [
                "run",
                "--seed",
                "3",
                "--steps",
                "40",
                "--dims",
                "20x20",
                "--team-size",
                "3",
                "--log",
                str(log_path),
            ]
        )
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert "log_digest" in out
        rc = cli_main(["replay", "--log", str(log_path)])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["steps"] == 40

    def test_replay_corrupt_log_exits_3(self, tmp_path, capsys):
        log_path = tmp_path / "bad.log"
        rc = cli_main(
            ["run", "--seed", "3", "--steps", "10", "--dims", "20x20", "--team-size", "2", "--log", str(log_path)]
        )
        assert rc == 0
        capsys.readouterr()
        text = log_path.read_text().splitlines()
        text[3] = text[3].replace(":", ";", 1)
        log_path.write_text("\n".join(text) + "\n")
        rc = cli_main(["replay", "--log", str(log_path)])
        assert rc == 3

    def test_check_protocol_passes(self, capsys):
        rc = cli_main(["check-protocol", "--agents", "3", "--sightings", "2"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "PASS deadlock-free" in out
        assert out.count("PASS") >= 10  # standard checks + six scenarios

    def test_check_protocol_trace_file(self, tmp_path, capsys):
        trace = tmp_path / "nominal.trace"
        trace.write_text(
            "# two-agent nominal run\nsight a1 a2\nreport a1\nreport a2\n"
            "propose a2 a1\nabsorb a1\nnotify a2\n"
        )
        rc = cli_main(["check-protocol", "--agents", "2", "--sightings", "1", "--trace", str(trace)])
        assert rc == 0

    def test_check_protocol_infeasible_trace_exits_2(self, tmp_path, capsys):
        trace = tmp_path / "bogus.trace"
        trace.write_text("sight a1 a2\nabsorb a1\n")  # absorb before any propose
        rc = cli_main(["check-protocol", "--agents", "2", "--sightings", "1", "--trace", str(trace)])
        out = capsys.readouterr().out
        assert rc == 2
        assert "FAIL" in out and "counterexample" in out

    def test_bad_config_exits_1(self, capsys):
        rc = cli_main(["run", "--dims", "4x4", "--steps", "5"])
        assert rc == 1

    def test_cache_stats_command(self, tmp_path, capsys):
        rc = cli_main(["cache-stats", "--cache-dir", str(tmp_path)])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["keys"] == 0

    def test_export_map(self, capsys):
        rc = cli_main(
            ["export-map", "--seed", "2", "--steps", "30", "--dims", "20x20", "--team-size", "2"]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert out.startswith("owner: alpha01")

    def test_preset_round_one(self, capsys):
        rc = cli_main(["run", "--preset", "r1", "--steps", "5", "--seed", "1"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["steps"] == 5
