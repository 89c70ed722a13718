"""
Named model settings used by the simulation studies.
"""
from typing import Dict, Tuple

import numpy as np

from estavg.exceptions import UnknownPresetError
from estavg.models.dpp import dpp_alpha_max
from estavg.schemas.geometry import Window
from estavg.schemas.model_spec import BooleanSpec, DppGaussSpec, ModelSpec, PoissonSpec, ThomasSpec

# Log-linear intensity 4 exp(4x) of the inhomogeneous DPP settings.
INHOMOGENEOUS_BETA = (float(np.log(4.0)), 4.0)


def _presets() -> Dict[str, Tuple[ModelSpec, Window]]:
    unit = Window.unit()
    homogeneous_bound = dpp_alpha_max(100.0)
    beta0, beta1 = INHOMOGENEOUS_BETA
    inhomogeneous_bound = dpp_alpha_max(4.0 * np.exp(4.0))
    table: Dict[str, Tuple[ModelSpec, Window]] = {
        f"poisson{i}": (PoissonSpec(preset=i), unit) for i in (1, 2, 3, 4)
    }
    table.update({
        "dpp1": (DppGaussSpec.homogeneous_spec(100.0, homogeneous_bound), unit),
        "dpp2": (DppGaussSpec.homogeneous_spec(100.0, homogeneous_bound / 2.0), unit),
        "dpp3": (DppGaussSpec(beta0=beta0, beta1=beta1, alpha=inhomogeneous_bound), unit),
        "dpp4": (DppGaussSpec(beta0=beta0, beta1=beta1, alpha=inhomogeneous_bound / 2.0), unit),
    })
    for side in (1, 2, 3):
        table[f"thomas{side}"] = (ThomasSpec(kappa=10.0, mu=10.0, sigma=0.05), Window.square(float(side)))
    for rho in (25, 50, 100, 150):
        table[f"boolean{rho}"] = (BooleanSpec(rho=float(rho), alpha_r=1.0), unit)
    return table


PRESET_NAMES = tuple(_presets())

# Preset used when only the family is named.
FAMILY_DEFAULTS = {"poisson": "poisson1", "dpp": "dpp1", "thomas": "thomas1", "boolean": "boolean100"}


def preset_spec(name: str) -> Tuple[ModelSpec, Window]:
    """
    Model and window of a named preset (``poisson1``..``poisson4``, ``dpp1``..``dpp4``,
    ``thomas1``..``thomas3`` for windows [0, L]^2, ``boolean25``/``50``/``100``/``150``).

    Raises:
        UnknownPresetError: If the name is not a preset
    """
    table = _presets()
    if name not in table:
        raise UnknownPresetError(
            f"Unknown model preset '{name}'", {"preset": name, "known": list(table)}
        )
    return table[name]
