from typing import Union

import numpy as np

from estavg.models.poisson import poisson_intensity, simulate_poisson, simulate_field, intensity_field
from estavg.models.dpp import dpp_alpha_max, dpp_theory_g, dpp_theory_k, simulate_dpp_gauss
from estavg.models.thomas import thomas_theory_g, thomas_theory_k, simulate_thomas
from estavg.models.boolean import boolean_moments, boolean_theory, simulate_boolean
from estavg.models.presets import preset_spec, PRESET_NAMES, FAMILY_DEFAULTS
from estavg.schemas.geometry import GermGrainSet, PointPattern, Window
from estavg.schemas.model_spec import BooleanSpec, DppGaussSpec, ModelSpec, PoissonSpec, ThomasSpec


def simulate(spec: ModelSpec, window: Window, rng: np.random.Generator) -> Union[PointPattern, GermGrainSet]:
    """Dispatch to the simulator of the spec's family."""
    if isinstance(spec, PoissonSpec):
        return simulate_poisson(spec, window, rng)
    if isinstance(spec, DppGaussSpec):
        return simulate_dpp_gauss(spec, window, rng)
    if isinstance(spec, ThomasSpec):
        return simulate_thomas(spec, window, rng)
    if isinstance(spec, BooleanSpec):
        return simulate_boolean(spec, window, rng)
    raise TypeError(f"unsupported model spec {type(spec).__name__}")


__all__ = [
    "simulate",
    "poisson_intensity",
    "simulate_poisson",
    "simulate_field",
    "intensity_field",
    "dpp_alpha_max",
    "dpp_theory_g",
    "dpp_theory_k",
    "simulate_dpp_gauss",
    "thomas_theory_g",
    "thomas_theory_k",
    "simulate_thomas",
    "boolean_moments",
    "boolean_theory",
    "simulate_boolean",
    "preset_spec",
    "PRESET_NAMES",
    "FAMILY_DEFAULTS",
]
