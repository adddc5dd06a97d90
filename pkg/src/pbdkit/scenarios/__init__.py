"""Scripted case-study runs: hospital EHR, direct benefit transfer, contact tracing."""

from __future__ import annotations

from pathlib import Path
from typing import Callable

from .common import (
    ConfigError,
    ScenarioConfig,
    ScenarioResult,
    fixtures_dir,
    load_config,
    load_manifests,
    read_rules,
    render_report,
)
from .contact import contact_tracing_run
from .dbt import dbt_run
from .ehr import ehr_run

SCENARIOS: dict[str, Callable[..., ScenarioResult]] = {
    "ehr": ehr_run,
    "dbt": dbt_run,
    "contact-tracing": contact_tracing_run,
}

_FIXTURE_STEM = {"ehr": "ehr", "dbt": "dbt", "contact-tracing": "contact"}


def default_paths(scenario: str) -> tuple[Path, Path, Path]:
    """(config, rules, manifests) shipped with the package for ``scenario``."""
    fx = fixtures_dir()
    stem = _FIXTURE_STEM[scenario]
    return fx / f"{stem}.conf", fx / f"{stem}.rules", fx / "manifests"


def run_scenario(scenario: str, config: str | Path | ScenarioConfig | None = None, seed: int | None = None,
                 rules: str | Path | None = None, manifests: str | Path | None = None) -> ScenarioResult:
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    d_conf, d_rules, d_manifests = default_paths(scenario)
    cfg = config if isinstance(config, ScenarioConfig) else load_config(config or d_conf)
    if cfg.scenario != scenario:
        raise ConfigError(f"config is for {cfg.scenario!r}, not {scenario!r}")
    if seed is None:
        seed = cfg.int("seed", 0)
    return SCENARIOS[scenario](cfg, seed, read_rules(rules or d_rules), load_manifests(manifests or d_manifests))


__all__ = [
    "ConfigError",
    "SCENARIOS",
    "ScenarioConfig",
    "ScenarioResult",
    "default_paths",
    "render_report",
    "run_scenario",
]
