"""Command-line interface.

  nvdress simulate-ple CONFIG        PLE spectrum from the dressed-state model
  nvdress simulate-odmr CONFIG       ODMR spectrum vs drive frequency
  nvdress sweep-power CONFIG         PLE spectra over drive powers
  nvdress sweep-mw CONFIG            PLE spectra over drive frequencies
  nvdress fit-peaks CONFIG           Single-peak fits in configured windows
  nvdress fit-power-series CONFIG    Rabi slope from splitting vs power
  nvdress fit-sidebands CONFIG       Stark slopes, optical Rabi and PL ratio from sideband heights
  nvdress estimate-dipole CONFIG     Transition dipole and field arithmetic
  nvdress dipole-geometry CONFIG     Geometry of the ab-initio dipole table
  nvdress oracle-validate CONFIG     Time-domain oracle vs closed form
  nvdress show-config CONFIG         Print the resolved configuration

Exit codes: 0 success, 2 invalid input or output collision, 3 numerical failure.
"""

import logging
import sys
import time
from pathlib import Path

import click
import humanfriendly
from dotenv import load_dotenv

from nvdress.config import get_settings
from nvdress.errors import ConfigError, DomainError, ModelValidationError, NumericalError, OutputExistsError
from nvdress.run_config import load_config
from nvdress.runner import COMMANDS, run
from nvdress.yaml_utils import dump_yaml_text

load_dotenv()

LOGGER = logging.getLogger("cli")

EXIT_INVALID = 2
EXIT_NUMERICAL = 3

COMMAND_HELP = {
    "simulate-ple": "Synthesize a PLE spectrum over the scan grid.",
    "simulate-odmr": "Synthesize an ODMR spectrum over the scan grid of drive frequencies.",
    "sweep-power": "PLE spectra for every power in scan.powers_mw.",
    "sweep-mw": "PLE spectra for every drive frequency in scan.drive_frequencies_mhz.",
    "fit-peaks": "Fit one peak per window in fit.windows_mhz.",
    "fit-power-series": "Regress splitting against sqrt(power).",
    "fit-sidebands": "Fit the tracked sideband amplitude table in fit.data.",
    "estimate-dipole": "Dipole, field and load-response arithmetic from the dipole section.",
    "dipole-geometry": "Magnitudes, components and angles of the bundled dipole table.",
    "oracle-validate": "Compare the time-domain oracle with the closed-form spectrum.",
}


def configure_logging(log_level: str) -> None:
    """Configure logging with the specified level, routing warnings into it."""
    level = getattr(logging, log_level.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        force=True,  # Reconfigure if already configured
    )
    logging.captureWarnings(True)


@click.group(help="Dressed-state simulator and estimator for the driven NV excited state")
@click.option("--log-level", default=None, help="Override NVDRESS_LOG_LEVEL")
@click.pass_context
def cli(ctx, log_level):
    configure_logging(log_level or get_settings().log_level)
    ctx.ensure_object(dict)


def _execute(ctx: click.Context, command: str, config_path: str, output: str | None, overwrite: bool, workers):
    started = time.monotonic()
    target = Path(output) if output else Path(f"{Path(config_path).stem}.{command}.csv")
    try:
        config = load_config(Path(config_path))
        outcome = run(command, config, target, overwrite=overwrite, workers=workers)
    except (ConfigError, ModelValidationError, DomainError, OutputExistsError) as e:
        click.echo(f"Error: {e}", err=True)
        ctx.exit(EXIT_INVALID)
    except NumericalError as e:
        click.echo(f"Numerical failure: {e}", err=True)
        ctx.exit(EXIT_NUMERICAL)

    for line in outcome.summary:
        click.echo(line)
    click.echo(f"Wrote {outcome.output}")
    LOGGER.info(f"{command} finished in {humanfriendly.format_timespan(time.monotonic() - started)}")
    ctx.exit(outcome.exit_code)


def _register(command: str) -> None:
    @cli.command(name=command, help=COMMAND_HELP[command])
    @click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
    @click.option("--output", "-o", help="Result CSV (default: <config>.<command>.csv)")
    @click.option("--overwrite", is_flag=True, help="Replace existing result and sidecar")
    @click.option("--workers", type=click.IntRange(min=1), default=None, help="Override NVDRESS_WORKERS")
    @click.pass_context
    def command_fn(ctx, config_path, output, overwrite, workers):
        _execute(ctx, command, config_path, output, overwrite, workers)


for _name in COMMANDS:
    _register(_name)


@cli.command("show-config")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def show_config(ctx, config_path):
    """Print the resolved configuration, as a sidecar would record it."""
    try:
        config = load_config(Path(config_path))
    except (ConfigError, ModelValidationError, DomainError) as e:
        click.echo(f"Error: {e}", err=True)
        ctx.exit(EXIT_INVALID)
    click.echo(dump_yaml_text(config.echo()), nl=False)


def main():
    cli()


if __name__ == "__main__":
    sys.exit(main())
