"""Conservative tracer advection on adaptive moving meshes over terrain.

The package is organised bottom-up:

``orography``     analytic terrain profiles sampled at vertex positions
``geometry``      column meshes, volumes, swept volumes, mesh fluxes
``poisson``       symmetric variable-coefficient elliptic solver (PCG + SGS)
``monge_ampere``  monitor pipeline and optimal-transport mesh generation
``advection``     volume-adjusted finite-volume transport scheme
``scenarios``     experiment configurations and the time loop
``config``/``io``/``cli``  plumbing: config files, output writers, CLI
"""

from .orography import OrographySpec, sample_orography
from .geometry import (
    ColumnMesh,
    SweptVolumeSet,
    MeshTanglingError,
    build_mesh,
    apply_vertex_positions,
    cell_volume,
    swept_volume,
    mesh_fluxes,
    courant_number,
)
from .poisson import PoissonProblem, SolveInfo, assemble, solve
from .monge_ampere import (
    NewtonParams,
    NewtonTrace,
    MongeAmpereDivergenceError,
    monitor_raw,
    monitor_normalise,
    monitor_smooth,
    equidistribution_constant,
    hessian_components,
    hessian_determinant,
    cofactor,
    newton_step,
    solve_monge_ampere,
    displaced_cell_centres,
    mesh_from_potential,
)
from .advection import (
    AdjustedState,
    CourantError,
    face_fluxes_from_stream,
    gauss_gradient,
    linear_upwind_face_values,
    advance_adjustment,
    rk2_step,
    step,
)
from .scenarios import (
    ScenarioConfig,
    DiagnosticsRecord,
    RunResult,
    control_config,
    stream_function,
    init_tracer,
    exact_tracer,
    l2_error,
    initial_adapted_mesh,
    run_scenario,
    convergence_study,
)
from .config import ConfigError, parse_config, serialise_config

__version__ = "0.1.0"
