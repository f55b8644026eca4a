"""Named simulation scenarios.

``sim2-*`` presets: varying intercept only (``q = 0``) on ``[0, 20]^2``,
three variance levels of the intercept field (variants ``1``, ``2``, ``3``).
``simA-*`` presets: one covariate with a constant slope correction on
``[0, 1]^2``, intercept kernel Matérn (variant ``matern``) or exponential
(variant ``exponential``).

Resolutions name ``(fine_side, coarse_side)`` pairs.  The variance level
of the intercept field is a variance; the kernel stores its square root.
"""

from __future__ import annotations

import math
from dataclasses import replace
from fractions import Fraction

from ..covariance import KernelParams, TemporalStructure
from ..exceptions import ConfigurationError
from ..grid import GridSpec
from ..simulate import GlobalParams, RegionalParams, ScenarioConfig

SIM2_RESOLUTIONS = {"res1": (20, 10), "res2": (40, 20), "res3": (60, 10), "res3b": (60, 30)}
SIM2_VARIANCES = {"1": 0.003, "2": 0.0003, "3": 0.00003}
SIMA_RESOLUTIONS = {"res1": (25, 10), "res2": (40, 20), "res3": (55, 25)}
SIMA_KERNELS = {
    "matern": ("matern", 0.1, 0.001, 0.8),
    "exponential": ("exponential", 0.1, 0.001, 0.5),
}

PRESETS = tuple([f"sim2-{r}" for r in SIM2_RESOLUTIONS] + [f"simA-{r}" for r in SIMA_RESOLUTIONS])
DEFAULT_VARIANT = {"sim2": "1", "simA": "matern"}


def variants(name: str) -> tuple[str, ...]:
    family = _family(name)
    return tuple(SIM2_VARIANCES) if family == "sim2" else tuple(SIMA_KERNELS)


def _family(name: str) -> str:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return name.split("-")[0]


def scenario_catalog(name: str, variant: str | None = None, seed: int = 0) -> ScenarioConfig:
    """Return the preset scenario ``name`` (optionally ``name:variant``)."""
    if ":" in name and variant is None:
        name, variant = name.split(":", 1)
    family = _family(name)
    resolution = name.split("-", 1)[1]
    variant = DEFAULT_VARIANT[family] if variant is None else str(variant)
    if variant not in variants(name):
        raise ConfigurationError(
            f"unknown variant {variant!r} for {name}; available: {', '.join(variants(name))}")

    if family == "sim2":
        fine, coarse = SIM2_RESOLUTIONS[resolution]
        kernel = KernelParams("matern", 5.0, math.sqrt(SIM2_VARIANCES[variant]), 1.0)
        return ScenarioConfig(
            GridSpec((0.0, 20.0, 0.0, 20.0), fine, coarse),
            GlobalParams(5.707, (), 0.001),
            RegionalParams(5.706, (), kernel, (), 1.0 / 700000.0, TemporalStructure("iid")),
            T=12, train_fraction=Fraction(5, 6), replications=30, seed=seed,
            name=name, variant=variant, resolution=resolution,
        )

    fine, coarse = SIMA_RESOLUTIONS[resolution]
    fam, rng, var, nu = SIMA_KERNELS[variant]
    kernel = KernelParams(fam, rng, math.sqrt(var), nu)
    return ScenarioConfig(
        GridSpec((0.0, 1.0, 0.0, 1.0), fine, coarse),
        GlobalParams(5.6, (0.015,), 2.0),
        RegionalParams(-0.05, (-0.005,), kernel, (), 1.0, TemporalStructure("iid")),
        T=12, train_fraction=Fraction(5, 6), replications=10, seed=seed,
        name=name, variant=variant, resolution=resolution,
    )


def with_replications(config: ScenarioConfig, replications: int) -> ScenarioConfig:
    if replications < 1:
        raise ConfigurationError("replications must be >= 1")
    return replace(config, replications=int(replications))
