"""Command-line entry point.

``wtasim run`` executes one mission and writes the trajectory table, the
metrics summary, the exchange replay log for language-model runs, and
optional engagement figures. ``wtasim replay`` re-parses a logged exchange
file offline. Exit codes: 0 success, 1 mission finished with at least one
breach, 2 usage or configuration error, 3 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

from .cost import CostConfig
from .llm_assigner import BackendConfig, ParseFailure, parse_response
from .mission import MissionConfig, run_mission
from .output import read_replay_log, write_metrics, write_replay_log, write_trajectory_csv
from .plots import emit_plot
from .scenario import ScenarioError, load_scenario

__all__ = ["RunConfig", "parse_args", "main"]

CLI_ASSIGNERS = ("hungarian", "milp", "auction", "llm")


@dataclass
class RunConfig:
    """Parsed command line for either subcommand."""

    command: str
    scenario_path: str | None = None
    assigner: str | None = None
    backend: BackendConfig | None = None
    seed: int = 0
    output_dir: str = "out"
    emit_plots: bool = False
    epoch_dt: float | None = None
    switch_penalty: float = 0.0
    coverage: str | None = None
    threat_sense: str = "inverted"
    log_path: str | None = None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wtasim",
        description="Closed-loop weapon-target assignment engagement simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one mission and write its artifacts")
    run.add_argument("--scenario", required=True, help="scenario YAML file")
    run.add_argument("--assigner", required=True, choices=CLI_ASSIGNERS)
    run.add_argument("--backend", help="chat endpoint URL or mock://<mode> (llm assigner)")
    run.add_argument("--model", default="gpt-4o-mini", help="backend model name")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--epoch-dt", type=float, help="override the scenario's decision period [s]")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--emit-plots", action="store_true", help="also render engagement figures")
    run.add_argument("--switch-penalty", type=float, default=0.0,
                     help="surrogate-cost penalty added to off-previous pairings")
    run.add_argument("--coverage", choices=("on", "off"),
                     help="override the scenario's coverage rule")
    run.add_argument("--threat-sense", choices=("literal", "inverted"), default="inverted",
                     help="whether high threat/priority lowers cost (inverted) or raises it")

    replay = sub.add_parser("replay", help="re-parse a logged exchange file offline")
    replay.add_argument("--log", required=True, help="replay log (JSON lines)")
    return parser


def parse_args(argv) -> RunConfig:
    """Parse and cross-check the command line.

    Raises SystemExit(2) through argparse on any usage problem, including
    an llm run without backend settings.
    """
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.command == "replay":
        return RunConfig(command="replay", log_path=ns.log)

    backend = None
    if ns.assigner == "llm":
        if not ns.backend:
            parser.error(
                "--assigner llm needs --backend (endpoint URL or mock://<mode>); "
                "live endpoints also need an API key in WTASIM_API_KEY"
            )
        try:
            backend = BackendConfig(endpoint_url=ns.backend, model_name=ns.model)
        except ValueError as exc:
            parser.error(str(exc))
        if not backend.is_mock and not os.environ.get(backend.api_key_env_var):
            parser.error(
                f"--backend {ns.backend} is a live endpoint but the API key environment "
                f"variable {backend.api_key_env_var} is not set"
            )
    elif ns.backend:
        parser.error("--backend only applies to --assigner llm")

    return RunConfig(
        command="run",
        scenario_path=ns.scenario,
        assigner=ns.assigner,
        backend=backend,
        seed=ns.seed,
        output_dir=ns.out,
        emit_plots=ns.emit_plots,
        epoch_dt=ns.epoch_dt,
        switch_penalty=ns.switch_penalty,
        coverage=ns.coverage,
        threat_sense=ns.threat_sense,
    )


def _run(cfg: RunConfig) -> int:
    scenario = load_scenario(cfg.scenario_path)
    mission_cfg = MissionConfig(
        seed=cfg.seed,
        backend=cfg.backend,
        cost=CostConfig(
            weights=scenario.cost_weights,
            threat_sense=cfg.threat_sense,
            switch_penalty=cfg.switch_penalty,
        ),
        epoch_dt=cfg.epoch_dt,
        coverage=cfg.coverage,
    )
    log = run_mission(scenario, assigner=cfg.assigner, cfg=mission_cfg)

    os.makedirs(cfg.output_dir, exist_ok=True)
    write_trajectory_csv(log, os.path.join(cfg.output_dir, "trajectory.csv"))
    write_metrics(log, os.path.join(cfg.output_dir, "metrics.json"))
    if cfg.assigner == "llm":
        write_replay_log(log, os.path.join(cfg.output_dir, "replay.jsonl"))
    if cfg.emit_plots:
        for tag, at in (("t0", 0.0), ("mid", log.final_time / 2.0), ("final", log.final_time)):
            emit_plot(log, at, os.path.join(cfg.output_dir, f"fig_{tag}.svg"))

    m = log.metrics
    print(
        f"{scenario.name}: assigner={cfg.assigner} t_end={log.final_time:g}s "
        f"intercepted={m.targets_intercepted}/{scenario.n_targets} "
        f"breached={m.assets_breached} switches={m.total_switches} "
        f"fallbacks={m.fallback_count}"
    )
    print(f"artifacts written to {cfg.output_dir}/")
    return 1 if m.assets_breached > 0 else 0


def _replay(cfg: RunConfig) -> int:
    records = read_replay_log(cfg.log_path)
    ok = mismatched = failed = 0
    for rec in records:
        try:
            parsed = parse_response(rec.response, rec.n_agents, rec.clip_bound)
        except ParseFailure as exc:
            status = f"parse_failed ({exc.reason})"
            failed += 1
        else:
            if rec.source == "llm" and parsed.values != rec.assignment:
                status = f"MISMATCH parsed={parsed.values} logged={rec.assignment}"
                mismatched += 1
            else:
                status = "ok"
                ok += 1
        print(f"epoch {rec.epoch} t={rec.time:g}s source={rec.source} -> {status}")
    print(
        f"{len(records)} record(s): {ok} consistent, {mismatched} mismatched, "
        f"{failed} unparseable"
    )
    return 0


def main(argv=None) -> int:
    try:
        cfg = parse_args(argv if argv is not None else sys.argv[1:])
    except SystemExit as exc:
        code = exc.code
        return int(code) if isinstance(code, int) else 2
    try:
        if cfg.command == "run":
            return _run(cfg)
        return _replay(cfg)
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
