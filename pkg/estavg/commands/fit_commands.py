"""
The ``fit`` and ``average`` commands on one stored observation.
"""
import logging
from typing import Optional

import click

from estavg.commands.common import FAMILY_CHOICE, domain_errors, normalize_method, split_list
from estavg.schemas.experiment import AVERAGING_MODES, BootstrapConfig, Family, FitRecord
from estavg.schemas.geometry import GermGrainSet
from estavg.services.boolean_service import BooleanService
from estavg.services.fitting_service import FittingService
from estavg.services.pipeline_service import FAMILY_METHODS, PipelineService
from estavg.services.summary_service import SummaryService
from estavg.storage import (
    read_observation,
    read_pattern,
    write_field,
    write_fit_records,
    write_mse_matrix,
    write_pipeline_result,
)

logger = logging.getLogger(__name__)


def fit_one(observation, family: Family, method: str) -> FitRecord:
    """Run a single estimator of ``family`` on ``observation``."""
    if method not in FAMILY_METHODS[family]:
        raise ValueError(f"unknown method '{method}' for {family.value}; choose among {list(FAMILY_METHODS[family])}")
    if family == Family.BOOLEAN:
        if not isinstance(observation, GermGrainSet):
            raise ValueError("the Boolean family needs a disc set observation")
        measurements = BooleanService.measure_set(observation)
        if method == "tangent":
            return BooleanService.boolean_fit_tangent(measurements)
        return BooleanService.boolean_fit_area_perimeter(measurements)
    if family == Family.POISSON:
        bandwidth = SummaryService.select_bandwidth(observation, method)
        field = SummaryService.kernel_intensity(observation, bandwidth=bandwidth)
        return FitRecord(
            estimator=f"kernel:{method}", family=family.value,
            values={"bandwidth": bandwidth, "integral": field.mass()},
        )
    if family == Family.DPP:
        return FittingService.fit_dpp(observation, method)
    return FittingService.fit_thomas(observation, method)


@click.command("fit")
@click.option("--family", required=True, type=FAMILY_CHOICE)
@click.option(
    "--method", required=True,
    help="k, pcf or palm (dpp, thomas); area-perim or tangent (boolean); kernel:default, kernel:diggle or kernel:ppl (poisson)",
)
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default=None, type=click.Path(dir_okay=False), help="JSON-lines file (stdout if omitted)")
def fit_command(family: str, method: str, in_path: str, out_path: Optional[str]):
    """Fit one estimator and emit its record as a JSON line."""
    family = Family(family)
    method = normalize_method(family, method)
    with domain_errors():
        observation = read_observation(in_path) if family == Family.BOOLEAN else read_pattern(in_path)
        record = fit_one(observation, family, method)
    if out_path:
        write_fit_records([record], out_path)
    else:
        click.echo(record.model_dump_json())


@click.command("average")
@click.option("--family", required=True, type=FAMILY_CHOICE)
@click.option("--modes", default=",".join(AVERAGING_MODES), show_default=True, help="Comma separated averaging modes")
@click.option("--estimators", default=None, help="Comma separated subset of the family's methods")
@click.option("--boot-n", default=None, type=click.IntRange(min=2), help="Bootstrap sample count")
@click.option("--boot-seed", default=None, type=click.IntRange(min=0), help="Bootstrap seed")
@click.option("--boot-anchor", "anchor", default="default", show_default=True, help="default, mean-of-initials or a method name")
@click.option("--n-jobs", default=None, type=click.IntRange(min=1))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Result JSON")
@click.option("--mse-out", default=None, type=click.Path(dir_okay=False), help="Bootstrap MSE matrix CSV")
@click.option("--records-out", default=None, type=click.Path(dir_okay=False), help="Initial fit records, JSON lines")
@click.option(
    "--field-out", default=None, type=click.Path(dir_okay=False),
    help="Combined intensity field of the first mode (poisson); .bin writes the binary grid",
)
def average_command(
    family: str, modes: str, estimators: Optional[str], boot_n: Optional[int], boot_seed: Optional[int],
    anchor: str, n_jobs: Optional[int], in_path: str, out_path: str, mse_out: Optional[str],
    records_out: Optional[str], field_out: Optional[str],
):
    """Average the family's initial estimators on one observation."""
    family = Family(family)
    if field_out and family != Family.POISSON:
        raise click.UsageError("--field-out only applies to the poisson family")
    chosen = split_list(estimators)
    if chosen is not None:
        chosen = [normalize_method(family, m) for m in chosen]
    with domain_errors():
        observation = read_observation(in_path)
        bootstrap_fields = {"anchor": anchor}
        if boot_n is not None:
            bootstrap_fields["n_samples"] = boot_n
        if boot_seed is not None:
            bootstrap_fields["seed"] = boot_seed
        result = PipelineService.average_pipeline(
            observation, family, split_list(modes), BootstrapConfig(**bootstrap_fields),
            estimators=chosen, n_jobs=n_jobs,
        )
    write_pipeline_result(result, out_path)
    if mse_out:
        write_mse_matrix(result.mse_matrix, mse_out)
    if records_out:
        write_fit_records(result.records, records_out)
    if field_out:
        first = next(iter(result.modes.values()))
        write_field(first.field, field_out)
    for mode, outcome in result.modes.items():
        summary = ", ".join(
            f"{p}={e:.6g} (mse {m:.3g})" for p, e, m in zip(outcome.parameters, outcome.estimates, outcome.estimated_mse)
        ) or f"mise {outcome.estimated_mse[0]:.6g}"
        click.echo(f"{mode}: {summary}")
