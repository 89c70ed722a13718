"""
The ``simulate`` command: draw one observation from a preset or parameterized model.
"""
import logging
from typing import Dict, Optional

import click

from estavg.commands.common import domain_errors, split_list
from estavg.models import FAMILY_DEFAULTS, PRESET_NAMES, preset_spec, simulate
from estavg.schemas.geometry import GermGrainSet, Window
from estavg.storage import write_observation
from estavg.streams import stream

logger = logging.getLogger(__name__)


def parse_params(text: Optional[str]) -> Dict[str, float]:
    """``"kappa=10,mu=5"`` -> ``{"kappa": 10.0, "mu": 5.0}``."""
    params = {}
    for item in split_list(text) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.BadParameter(f"expected key=value, got '{item}'", param_hint="--params")
        params[key.strip()] = float(value)
    return params


@click.command("simulate")
@click.option(
    "--model", required=True,
    type=click.Choice(sorted(set(PRESET_NAMES) | set(FAMILY_DEFAULTS))),
    help="Preset name, or a family name whose default preset --params overrides",
)
@click.option("--params", default=None, help="Comma separated key=value model parameters")
@click.option("--window", "window_text", default=None, help="x0,x1,y0,y1 (defaults to the preset window)")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Observation CSV")
def simulate_command(model: str, params: Optional[str], window_text: Optional[str], seed: int, out_path: str):
    """Simulate an observation and write it as CSV."""
    with domain_errors():
        spec, window = preset_spec(FAMILY_DEFAULTS.get(model, model))
        overrides = parse_params(params)
        if overrides:
            fields = spec.model_dump()
            if fields.get("family") == "poisson" and "rho" in overrides:
                fields["preset"] = None
            fields.update(overrides)
            spec = type(spec).model_validate(fields)
        if window_text is not None:
            window = Window.parse(window_text)
        observation = simulate(spec, window, stream(seed, 0, 0))
        write_observation(observation, out_path)
    kind = "discs" if isinstance(observation, GermGrainSet) else "points"
    logger.info("Simulated %s: %d %s", model, observation.n, kind)
    click.echo(f"{observation.n} {kind} written to {out_path}")
