"""Growth exponents and bottom-of-spectrum tools for discrete subgroups of
products of SL(n, R).

The package is organised bottom-up:

``chamber``     root data, the Weyl chamber, the trace-form inner product and
                the polyhedral gauge family
``cartan``      Cartan projections of concrete matrices
``orbits``      word-ball enumeration and the orbit dataset file format
``synth``       growth-indicator models and synthetic orbit point clouds
``estimators``  counting-based exponent and growth-indicator estimates
``spectrum``    closed-form evaluators linking the exponents to lambda_0
``cli``         the ``growthspec`` command line front-end
"""

__version__ = "0.1.0"

from growthspec.chamber import (
    GaugeFamily,
    GroupDescriptor,
    RootSystem,
    build_root_system,
    d_s,
    norm_family,
    polyhedral_family,
    verify_gauge_family,
)
from growthspec.cartan import GroupElement, cartan_projection, riemannian_length
from growthspec.orbits import GeneratorSet, OrbitDataset, enumerate_ball, read_dataset, write_dataset
from growthspec.synth import Linear, MinLinear, SphericalCap, SynthConfig, evaluate_psi, sample_orbit
from growthspec.estimators import (
    GrowthIndicatorEstimate,
    GrowthRateEstimate,
    counting_exponent,
    growth_indicator,
    modified_critical_exponent,
)
from growthspec.spectrum import (
    SpectralReport,
    check_conditions,
    delta_tilde_from_psi,
    lambda0_from_delta_tilde,
    lambda0_from_psi,
    gauge_exponent_bounds,
)

__all__ = [
    "GaugeFamily",
    "GroupDescriptor",
    "RootSystem",
    "build_root_system",
    "d_s",
    "norm_family",
    "polyhedral_family",
    "verify_gauge_family",
    "GroupElement",
    "cartan_projection",
    "riemannian_length",
    "GeneratorSet",
    "OrbitDataset",
    "enumerate_ball",
    "read_dataset",
    "write_dataset",
    "Linear",
    "MinLinear",
    "SphericalCap",
    "SynthConfig",
    "evaluate_psi",
    "sample_orbit",
    "GrowthIndicatorEstimate",
    "GrowthRateEstimate",
    "counting_exponent",
    "growth_indicator",
    "modified_critical_exponent",
    "SpectralReport",
    "check_conditions",
    "delta_tilde_from_psi",
    "lambda0_from_delta_tilde",
    "lambda0_from_psi",
    "gauge_exponent_bounds",
]
