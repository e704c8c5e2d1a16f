"""Free-particle quantum turbulence: exact spectral evolution, flow diagnostics,
vortex detection and kinematics, and vortex correlation statistics."""

__version__ = "0.1.0"

from .grid import (  # noqa: E402
    GridSpec,
    WaveField,
    SpectralField,
    forward_transform,
    inverse_transform,
    spectral_gradient,
    spectral_laplacian,
    save_snapshot,
    load_snapshot,
)
from .evolution import InitialConditionParams, random_phase_ic, propagate, recurrence_time  # noqa: E402
from .flow import fluid_variables, helmholtz_decompose, flow_spectra, clip_velocity, fit_power_law  # noqa: E402
from .vortex import (  # noqa: E402
    PointVortex,
    detect_vortices_2d,
    plaquette_winding,
    vortex_velocity,
    material_velocity,
    biot_savart_2d,
    track_null,
)
from .lines import VortexLineSet, trace_vortex_lines_3d  # noqa: E402
from .correlation import (  # noqa: E402
    point_correlation_2d,
    line_correlation_3d,
    fit_gaussian_screening,
    fit_correlation_power_law,
)
from .analytic import BesselPairParams, bessel_pair_field, bessel_vortex_positions  # noqa: E402
