"""
The ``experiment`` command: a replication study from a YAML config.
"""
import logging
from typing import Optional

import click

from estavg.commands.common import domain_errors
from estavg.services.study_service import StudyService
from estavg.storage import load_experiment_config, write_result_table

logger = logging.getLogger(__name__)


@click.command("experiment")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False), help="Result table CSV (overrides the config)")
@click.option("--n-jobs", default=None, type=click.IntRange(min=1))
def experiment_command(config_path: str, out_path: Optional[str], n_jobs: Optional[int]):
    """Run a replication study and write its MSE table."""
    with domain_errors():
        config = load_experiment_config(config_path)
        table = StudyService.run_replication_study(config, n_jobs=n_jobs)
    out_path = out_path or config.output
    if out_path:
        write_result_table(table, out_path)
        logger.info("Result table written to %s", out_path)
    for row in table.rows:
        se = "" if row.se is None else f" ({row.se:.3g})"
        click.echo(f"{row.parameter:>10} {row.name:>10} {row.mse:.6g}{se}")
