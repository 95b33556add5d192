"""Quasineutral Vlasov-Poisson laboratory: phase-space data, field solvers,
kinetic stepping and kinetic Wasserstein distances."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapacityError,
    ChargeImbalanceError,
    ConvergenceError,
    TimeStepError,
    TruncationError,
    VacuumError,
)
from .phase_space import (  # noqa: E402
    GriddedDistribution,
    MomentFields,
    ParticleEnsemble,
    PhaseGrid,
    TorusPoint,
    deposit,
    maxwellian,
    moments,
    monokinetic,
    sample_particles,
    torus_distance,
)
from .fields import (  # noqa: E402
    FieldState,
    PlasmaParameters,
    debye_length,
    screening_profile,
    solve_limit_potential,
    solve_poisson_boltzmann,
    solve_scaled_poisson,
)
from .dynamics import (  # noqa: E402
    FieldHistory,
    FluidState,
    advance_kernel,
    advance_vp,
    advance_vpme,
    free_flow,
    integrate_pair,
    isothermal_euler_step,
    simulate,
)
from .transport import (  # noqa: E402
    CostSpec,
    Coupling,
    QState,
    adapted_distance,
    dobrushin_constant,
    exact_discrete_ot,
    kinetic_loeper_bound,
    kinetic_q,
    stability_budget,
    w1_1d,
    wasserstein,
)
