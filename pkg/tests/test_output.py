"""Artifact writers, engagement figures, and the command-line surface."""

import json
from dataclasses import asdict, replace

import numpy as np
import pytest

from conftest import make_scenario
from wtasim.cli import main, parse_args
from wtasim.dynamics import AgentState
from wtasim.llm_assigner import BackendConfig
from wtasim.mission import MissionConfig, ReplayRecord, run_mission
from wtasim.output import (
    CSV_COLUMNS,
    read_replay_log,
    write_metrics,
    write_replay_log,
    write_trajectory_csv,
)
from wtasim.plots import build_engagement_figure, emit_plot
from wtasim.scenario import (
    AssetSpec,
    CostWeights,
    InterceptorSpec,
    Scenario,
    TargetSpec,
    serialize_scenario,
    validate_scenario,
)


def _run(scn, assigner="hungarian", **cfg_kwargs):
    return run_mission(scn, assigner=assigner, cfg=MissionConfig(**cfg_kwargs))


def _hopeless_defense_scenario() -> Scenario:
    """One target walks into the protection zone; the interceptor is far
    off-axis, nearly unmaneuverable, and flying the wrong way."""
    scn = Scenario(
        interceptors=[
            InterceptorSpec(
                1,
                AgentState(np.array([0.0, 200.0, 0.0]), np.array([0.0, 2.0, 0.0])),
            )
        ],
        targets=[
            TargetSpec(
                1,
                AgentState(np.array([20.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0])),
                threat_level=0.8,
                intended_asset=1,
            )
        ],
        assets=[AssetSpec(1, np.array([0.0, 0.0, 0.0]), 0.9, 5.0)],
        a_max=0.01,
        x_max=1000.0,
        sim_dt=0.1,
        epoch_dt=2.0,
        t_final=30.0,
        kill_radius=0.1,
        cost_weights=CostWeights(),
        name="hopeless",
    )
    assert validate_scenario(scn) == []
    return scn


@pytest.fixture(scope="module")
def small_log():
    """A finished 2-on-3 run with intercepts and at least one breach."""
    return _run(make_scenario(2, 3))


@pytest.fixture(scope="module")
def zero_horizon_log():
    return _run(make_scenario(2, 2, t_final=0.0))


@pytest.fixture(scope="module")
def llm_log():
    scn = make_scenario(2, 2)
    return _run(
        scn,
        assigner="llm",
        backend=BackendConfig(endpoint_url="mock://echo_hungarian"),
    )


def _read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


class TestTrajectoryCsv:
    def test_header_matches_declared_columns(self, small_log, tmp_path):
        path = tmp_path / "t.csv"
        write_trajectory_csv(small_log, str(path))
        header, rows = _read_csv(path)
        assert header == list(CSV_COLUMNS)
        assert all(len(r) == len(CSV_COLUMNS) for r in rows)

    def test_rows_sorted_by_time_then_side_then_id(self, small_log, tmp_path):
        path = tmp_path / "t.csv"
        write_trajectory_csv(small_log, str(path))
        _, rows = _read_csv(path)
        keys = [(float(r[0]), r[1], int(r[2])) for r in rows]
        assert keys == sorted(keys)

    def test_assets_appear_at_every_sampled_time_with_zero_velocity(
        self, small_log, tmp_path
    ):
        path = tmp_path / "t.csv"
        write_trajectory_csv(small_log, str(path))
        _, rows = _read_csv(path)
        sampled_times = {r[0] for r in rows if r[1] != "asset"}
        asset_rows = [r for r in rows if r[1] == "asset"]
        assert {r[0] for r in asset_rows} == sampled_times
        assert len(asset_rows) == len(sampled_times) * len(small_log.scenario.assets)
        for r in asset_rows:
            assert [float(c) for c in r[6:9]] == [0.0, 0.0, 0.0]
            assert [float(c) for c in r[3:6]] == list(
                small_log.scenario.assets[int(r[2]) - 1].position
            )

    def test_assigned_target_only_on_interceptor_rows(self, small_log, tmp_path):
        path = tmp_path / "t.csv"
        write_trajectory_csv(small_log, str(path))
        _, rows = _read_csv(path)
        for r in rows:
            if r[1] == "interceptor":
                assert r[9] == "" or int(r[9]) in {
                    t.id for t in small_log.scenario.targets
                }
            else:
                assert r[9] == ""
        assert any(r[1] == "interceptor" and r[9] != "" for r in rows)

    def test_values_round_trip_at_rendered_precision(self, small_log, tmp_path):
        path = tmp_path / "t.csv"
        write_trajectory_csv(small_log, str(path))
        _, rows = _read_csv(path)
        by_key = {(r[0], r[1], int(r[2])): r for r in rows}
        for s in small_log.samples:
            key = (format(s.time, ".6g"), s.side, s.id)
            row = by_key[key]
            for cell, value in zip(row[3:9], (*s.position, *s.velocity)):
                assert float(cell) == float(format(value, ".6g"))
                if value != 0.0:
                    assert abs(float(cell) - value) <= 5e-6 * abs(value)

    def test_rows_for_each_agent_run_gap_free_until_removal(
        self, small_log, tmp_path
    ):
        path = tmp_path / "t.csv"
        write_trajectory_csv(small_log, str(path))
        _, rows = _read_csv(path)
        all_times = sorted({float(r[0]) for r in rows})
        terminal: dict[tuple[str, int], float] = {}
        for e in small_log.events:
            if e.kind == "intercept":
                i_id, t_id = e.subject_ids
                terminal[("interceptor", i_id)] = e.time
                terminal[("target", t_id)] = e.time
            elif e.kind in ("asset_breach", "x_max_violation"):
                side = "target" if e.kind == "asset_breach" else "interceptor"
                terminal[(side, e.subject_ids[0])] = e.time
        assert terminal, "fixture run should remove at least one agent"
        for (side, agent_id), t_end in terminal.items():
            times = sorted(
                float(r[0]) for r in rows if r[1] == side and int(r[2]) == agent_id
            )
            assert times, f"{side} {agent_id} never sampled"
            # Sampled right up to the step in which it was removed ...
            assert times[-1] <= t_end
            assert times[-1] >= t_end - small_log.scenario.sim_dt - 1e-9
            # ... with no holes earlier in its life.
            assert times == [t for t in all_times if t <= times[-1]]

    def test_zero_horizon_run_writes_header_only(self, zero_horizon_log, tmp_path):
        path = tmp_path / "t.csv"
        write_trajectory_csv(zero_horizon_log, str(path))
        assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"

    def test_identical_logs_render_identical_bytes(self, small_log, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trajectory_csv(small_log, str(a))
        write_trajectory_csv(small_log, str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_creates_missing_directories(self, small_log, tmp_path):
        path = tmp_path / "deep" / "nest" / "t.csv"
        write_trajectory_csv(small_log, str(path))
        assert path.exists()
        assert not any(p.name.startswith(".tmp_") for p in path.parent.iterdir())


class TestMetricsJson:
    def test_payload_identity_and_shape(self, small_log, tmp_path):
        path = tmp_path / "m.json"
        write_metrics(small_log, str(path))
        payload = json.loads(path.read_text())
        assert set(payload) == {
            "scenario",
            "assigner",
            "seed",
            "final_time",
            "metrics",
            "events",
            "assignments",
        }
        assert payload["scenario"] == small_log.scenario.name
        assert payload["assigner"] == small_log.assigner
        assert payload["seed"] == small_log.seed
        assert payload["final_time"] == small_log.final_time
        assert payload["metrics"] == asdict(small_log.metrics)
        assert len(payload["assignments"]) == len(small_log.history)
        first = payload["assignments"][0]
        assert set(first) == {
            "epoch",
            "time",
            "interceptor_ids",
            "target_ids",
            "source",
            "objective",
        }

    def test_event_list_recount_reproduces_the_metrics(self, small_log, tmp_path):
        path = tmp_path / "m.json"
        write_metrics(small_log, str(path))
        payload = json.loads(path.read_text())
        events = payload["events"]
        m = payload["metrics"]
        kinds = [e["kind"] for e in events]
        assert m["targets_intercepted"] == kinds.count("intercept")
        assert m["assets_breached"] == kinds.count("asset_breach")
        assert m["fallback_count"] == kinds.count("fallback_used")
        assert m["total_switches"] == sum(
            len(e["subject_ids"]) for e in events if e["kind"] == "reassignment"
        )
        hit_times = [e["time"] for e in events if e["kind"] == "intercept"]
        if hit_times:
            assert m["mean_intercept_time"] == pytest.approx(np.mean(hit_times))

    def test_zero_horizon_run_has_zeroed_metrics_and_no_events(
        self, zero_horizon_log, tmp_path
    ):
        path = tmp_path / "m.json"
        write_metrics(zero_horizon_log, str(path))
        payload = json.loads(path.read_text())
        assert payload["events"] == []
        assert all(v == 0 for v in payload["metrics"].values())
        assert len(payload["assignments"]) == 1

    def test_rendering_is_sorted_indented_and_repeatable(self, small_log, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_metrics(small_log, str(a))
        write_metrics(small_log, str(b))
        text = a.read_text()
        assert text.startswith('{\n  "assigner":')
        assert text.endswith("\n")
        assert a.read_bytes() == b.read_bytes()


class TestReplayLog:
    def test_round_trip_preserves_every_record(self, llm_log, tmp_path):
        path = tmp_path / "r.jsonl"
        assert llm_log.replay_records, "llm run should log exchanges"
        write_replay_log(llm_log, str(path))
        assert read_replay_log(str(path)) == llm_log.replay_records

    def test_one_json_object_per_line(self, llm_log, tmp_path):
        path = tmp_path / "r.jsonl"
        write_replay_log(llm_log, str(path))
        lines = path.read_text().splitlines()
        assert len(lines) == len(llm_log.replay_records)
        for line in lines:
            obj = json.loads(line)
            assert set(obj) == {f.name for f in ReplayRecord.__dataclass_fields__.values()}

    def test_empty_log_round_trip(self, zero_horizon_log, tmp_path):
        path = tmp_path / "r.jsonl"
        assert zero_horizon_log.replay_records == []
        write_replay_log(zero_horizon_log, str(path))
        assert path.read_text() == ""
        assert read_replay_log(str(path)) == []

    def test_blank_lines_are_skipped(self, llm_log, tmp_path):
        path = tmp_path / "r.jsonl"
        write_replay_log(llm_log, str(path))
        padded = tmp_path / "padded.jsonl"
        padded.write_text("\n" + path.read_text().replace("\n", "\n\n"))
        assert read_replay_log(str(padded)) == llm_log.replay_records

    def test_unparseable_line_names_file_and_line(self, llm_log, tmp_path):
        path = tmp_path / "r.jsonl"
        write_replay_log(llm_log, str(path))
        broken = tmp_path / "broken.jsonl"
        lines = path.read_text().splitlines()
        broken.write_text("\n".join([lines[0], "{not json"]) + "\n")
        with pytest.raises(ValueError, match=r"broken\.jsonl:2: bad replay record"):
            read_replay_log(str(broken))

    def test_wrong_record_shape_names_file_and_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"epoch": 1}\n')
        with pytest.raises(ValueError, match=r"bad\.jsonl:1: bad replay record"):
            read_replay_log(str(path))


class TestFigures:
    def test_emit_plot_writes_a_vector_graphics_file(self, small_log, tmp_path):
        path = tmp_path / "fig.svg"
        emit_plot(small_log, small_log.final_time, str(path))
        text = path.read_text()
        assert "<svg" in text
        assert len(text) > 1000
        assert not any(p.name.startswith(".tmp_") for p in tmp_path.iterdir())

    def test_extension_selects_the_format(self, small_log, tmp_path):
        path = tmp_path / "fig.png"
        emit_plot(small_log, 0.0, str(path))
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_times_outside_the_run_are_clamped(self, small_log, tmp_path):
        early, late = tmp_path / "early.svg", tmp_path / "late.svg"
        emit_plot(small_log, -50.0, str(early))
        emit_plot(small_log, small_log.final_time + 1e6, str(late))
        assert early.stat().st_size > 0
        assert late.stat().st_size > 0

    def test_figure_structure(self, small_log):
        fig = build_engagement_figure(small_log, small_log.final_time)
        try:
            ax = fig.axes[0]
            # One dashed protection circle per asset.
            assert len(ax.patches) == len(small_log.scenario.assets)
            assert small_log.scenario.name in ax.get_title()
            assert small_log.assigner in ax.get_title()
            assert ax.get_legend() is not None
            assert len(ax.lines) > len(small_log.scenario.assets)
        finally:
            import matplotlib.pyplot as plt

            plt.close(fig)

    def test_zero_horizon_figure_shows_zones_only(self, zero_horizon_log):
        fig = build_engagement_figure(zero_horizon_log, 0.0)
        try:
            ax = fig.axes[0]
            assert len(ax.patches) == len(zero_horizon_log.scenario.assets)
            # Only the asset markers; no tracks without samples.
            assert len(ax.lines) == len(zero_horizon_log.scenario.assets)
        finally:
            import matplotlib.pyplot as plt

            plt.close(fig)


class TestParseArgs:
    def test_minimal_run_command(self):
        cfg = parse_args(["run", "--scenario", "s.yaml", "--assigner", "hungarian"])
        assert cfg.command == "run"
        assert cfg.scenario_path == "s.yaml"
        assert cfg.assigner == "hungarian"
        assert cfg.backend is None
        assert cfg.seed == 0
        assert cfg.output_dir == "out"
        assert cfg.emit_plots is False
        assert cfg.epoch_dt is None
        assert cfg.switch_penalty == 0.0
        assert cfg.coverage is None
        assert cfg.threat_sense == "inverted"

    def test_every_flag_is_honored(self):
        cfg = parse_args(
            [
                "run",
                "--scenario", "a.yaml",
                "--assigner", "llm",
                "--backend", "mock://echo_previous",
                "--model", "m1",
                "--seed", "7",
                "--epoch-dt", "5",
                "--out", "results",
                "--emit-plots",
                "--switch-penalty", "0.4",
                "--coverage", "off",
                "--threat-sense", "literal",
            ]
        )
        assert cfg.assigner == "llm"
        assert cfg.backend.is_mock and cfg.backend.mock_mode == "echo_previous"
        assert cfg.backend.model_name == "m1"
        assert cfg.seed == 7
        assert cfg.epoch_dt == 5.0
        assert cfg.output_dir == "results"
        assert cfg.emit_plots is True
        assert cfg.switch_penalty == 0.4
        assert cfg.coverage == "off"
        assert cfg.threat_sense == "literal"

    def test_llm_without_backend_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            parse_args(["run", "--scenario", "s.yaml", "--assigner", "llm"])
        assert exc.value.code == 2
        err = capsys.readouterr().err
        assert "--backend" in err
        assert "WTASIM_API_KEY" in err

    def test_live_backend_without_key_is_a_usage_error(self, capsys, monkeypatch):
        monkeypatch.delenv("WTASIM_API_KEY", raising=False)
        with pytest.raises(SystemExit) as exc:
            parse_args(
                [
                    "run",
                    "--scenario", "s.yaml",
                    "--assigner", "llm",
                    "--backend", "https://api.example.com/v1/chat/completions",
                ]
            )
        assert exc.value.code == 2
        assert "WTASIM_API_KEY" in capsys.readouterr().err

    def test_live_backend_with_key_in_environment_is_accepted(self, monkeypatch):
        monkeypatch.setenv("WTASIM_API_KEY", "k-123")
        cfg = parse_args(
            [
                "run",
                "--scenario", "s.yaml",
                "--assigner", "llm",
                "--backend", "https://api.example.com/v1/chat/completions",
            ]
        )
        assert cfg.backend.endpoint_url.startswith("https://")
        assert not cfg.backend.is_mock

    def test_mock_backend_needs_no_key(self, monkeypatch):
        monkeypatch.delenv("WTASIM_API_KEY", raising=False)
        cfg = parse_args(
            [
                "run",
                "--scenario", "s.yaml",
                "--assigner", "llm",
                "--backend", "mock://echo_hungarian",
            ]
        )
        assert cfg.backend.is_mock

    def test_unknown_mock_mode_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            parse_args(
                [
                    "run",
                    "--scenario", "s.yaml",
                    "--assigner", "llm",
                    "--backend", "mock://banana",
                ]
            )
        assert exc.value.code == 2

    def test_backend_without_llm_is_rejected(self, capsys):
        with pytest.raises(SystemExit) as exc:
            parse_args(
                [
                    "run",
                    "--scenario", "s.yaml",
                    "--assigner", "hungarian",
                    "--backend", "mock://echo_hungarian",
                ]
            )
        assert exc.value.code == 2
        assert "--assigner llm" in capsys.readouterr().err

    def test_unknown_assigner_is_rejected(self, capsys):
        with pytest.raises(SystemExit) as exc:
            parse_args(["run", "--scenario", "s.yaml", "--assigner", "greedy"])
        assert exc.value.code == 2

    def test_replay_subcommand(self):
        cfg = parse_args(["replay", "--log", "x.jsonl"])
        assert cfg.command == "replay"
        assert cfg.log_path == "x.jsonl"

    def test_missing_subcommand_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            parse_args([])
        assert exc.value.code == 2


class TestMainExitCodes:
    @staticmethod
    def _save(scn, tmp_path, stem="scene"):
        path = tmp_path / f"{stem}.yaml"
        path.write_text(serialize_scenario(scn))
        return str(path)

    def test_clean_run_writes_artifacts_and_returns_0(self, tmp_path, capsys):
        scn_path = self._save(make_scenario(2, 2), tmp_path)
        out = tmp_path / "out"
        code = main(
            ["run", "--scenario", scn_path, "--assigner", "hungarian", "--out", str(out)]
        )
        assert code == 0
        assert (out / "trajectory.csv").exists()
        assert (out / "metrics.json").exists()
        assert not (out / "replay.jsonl").exists()
        stdout = capsys.readouterr().out
        assert "artifacts written to" in stdout
        assert "intercepted=2/2" in stdout

    def test_breached_run_returns_1(self, tmp_path, capsys):
        scn_path = self._save(_hopeless_defense_scenario(), tmp_path)
        out = tmp_path / "out"
        code = main(
            ["run", "--scenario", scn_path, "--assigner", "hungarian", "--out", str(out)]
        )
        assert code == 1
        payload = json.loads((out / "metrics.json").read_text())
        assert payload["metrics"]["assets_breached"] == 1

    def test_llm_mock_run_writes_the_replay_log(self, tmp_path, capsys):
        scn_path = self._save(make_scenario(2, 2), tmp_path)
        out = tmp_path / "out"
        code = main(
            [
                "run",
                "--scenario", scn_path,
                "--assigner", "llm",
                "--backend", "mock://echo_hungarian",
                "--out", str(out),
            ]
        )
        assert code == 0
        replay = out / "replay.jsonl"
        assert replay.exists()
        assert len(read_replay_log(str(replay))) >= 1

    def test_emit_plots_writes_three_figures(self, tmp_path, capsys):
        scn_path = self._save(make_scenario(2, 2, t_final=20.0), tmp_path)
        out = tmp_path / "out"
        code = main(
            [
                "run",
                "--scenario", scn_path,
                "--assigner", "auction",
                "--out", str(out),
                "--emit-plots",
            ]
        )
        assert code in (0, 1)
        for tag in ("t0", "mid", "final"):
            fig = out / f"fig_{tag}.svg"
            assert fig.exists() and fig.stat().st_size > 0

    def test_identical_invocations_produce_identical_artifacts(self, tmp_path, capsys):
        scn_path = self._save(make_scenario(2, 2), tmp_path)
        outs = []
        for name in ("one", "two"):
            out = tmp_path / name
            assert (
                main(
                    [
                        "run",
                        "--scenario", scn_path,
                        "--assigner", "llm",
                        "--backend", "mock://echo_hungarian",
                        "--seed", "3",
                        "--out", str(out),
                    ]
                )
                == 0
            )
            outs.append(out)
        for artifact in ("trajectory.csv", "metrics.json", "replay.jsonl"):
            assert (outs[0] / artifact).read_bytes() == (outs[1] / artifact).read_bytes()

    def test_missing_scenario_file_returns_2(self, tmp_path, capsys):
        code = main(
            [
                "run",
                "--scenario", str(tmp_path / "absent.yaml"),
                "--assigner", "hungarian",
            ]
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_invalid_epoch_override_returns_2(self, tmp_path, capsys):
        scn_path = self._save(make_scenario(2, 2), tmp_path)
        code = main(
            [
                "run",
                "--scenario", scn_path,
                "--assigner", "hungarian",
                "--epoch-dt", "0.35",
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_usage_error_returns_2_without_raising(self, capsys):
        assert main(["run", "--assigner", "hungarian"]) == 2

    def test_replay_of_a_logged_run_is_fully_consistent(self, tmp_path, capsys):
        scn_path = self._save(make_scenario(2, 2), tmp_path)
        out = tmp_path / "out"
        main(
            [
                "run",
                "--scenario", scn_path,
                "--assigner", "llm",
                "--backend", "mock://echo_hungarian",
                "--out", str(out),
            ]
        )
        capsys.readouterr()
        code = main(["replay", "--log", str(out / "replay.jsonl")])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "0 mismatched" in stdout
        assert "0 unparseable" in stdout

    def test_replay_of_missing_log_returns_2(self, tmp_path, capsys):
        assert main(["replay", "--log", str(tmp_path / "absent.jsonl")]) == 2
