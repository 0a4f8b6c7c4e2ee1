"""File-facing adapters: run configs, CSV, JSON reports and SVG plots."""

from src.adapters.report_mapper import write_json
from src.adapters.run_config import RunConfig, load_config
from src.adapters.trajectory_csv import read_trajectory_csv, write_trajectory_csv

__all__ = ["RunConfig", "load_config", "read_trajectory_csv", "write_trajectory_csv", "write_json"]
