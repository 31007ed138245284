"""Campaign orchestration: config, search, noise statistics and persisted reports."""

from .config import DEFAULT_SIGMA_GRID, CampaignConfig, config_hash, load_config
from .report import load_result, read_controllers, write_controllers, write_report
from .runner import (
    SCHEMA_VERSION,
    ArimPoint,
    CampaignResult,
    ControllerRecord,
    analyze,
    rank_average_selection,
    rim_cell,
    rim_grid,
    run,
    search,
)

__all__ = [
    "DEFAULT_SIGMA_GRID",
    "CampaignConfig",
    "config_hash",
    "load_config",
    "load_result",
    "read_controllers",
    "write_controllers",
    "write_report",
    "SCHEMA_VERSION",
    "ArimPoint",
    "CampaignResult",
    "ControllerRecord",
    "analyze",
    "rank_average_selection",
    "rim_cell",
    "rim_grid",
    "run",
    "search",
]
