"""
Main command-line entry point.
Configures logging and registers the commands.
"""
import logging
import logging.config
from pathlib import Path
from typing import Optional

import click

from estavg.config import settings
from estavg.commands import average_command, experiment_command, fit_command, simulate_command


def configure_logging(config_path: Optional[str] = None) -> None:
    """Load the logging ini file if present, else fall back to basicConfig at LOG_LEVEL."""
    path = Path(config_path or settings.LOGGING_CONFIG)
    if path.is_file():
        logging.config.fileConfig(path, disable_existing_loggers=False)
    else:
        logging.basicConfig(
            level=settings.LOG_LEVEL,
            format="%(levelname)-5.5s [%(name)s] %(message)s",
        )


@click.group(help=f"{settings.APP_NAME}: simulate, fit and average spatial estimators.")
@click.version_option("1.0.0", prog_name=settings.APP_NAME)
@click.option("--log-config", default=None, type=click.Path(dir_okay=False), help="Logging ini file")
def cli(log_config: Optional[str]):
    configure_logging(log_config)


# Register commands
cli.add_command(simulate_command)
cli.add_command(fit_command)
cli.add_command(average_command)
cli.add_command(experiment_command)


if __name__ == "__main__":
    # Use: python -m estavg.main
    cli()
