"""Numerical toolkit for spectral distributions of free multiplicative
Brownian motions with unitary initial data: domains, densities,
log-potentials, push-forward maps, moment hierarchies, and a finite-N
random-matrix laboratory for cross-checks."""

from .errors import (
    CholeskyFailure,
    GridTooCoarse,
    MissingLowerWord,
    NoConvergence,
    NumericalError,
    OutOfRegion,
    OutsideSource,
    OutsideTarget,
    ShootingDiverged,
    SingularInitialPoint,
    SingularPoint,
    StepTooLarge,
    ZeroDensity,
)
from .measures import (
    BrownParams,
    CircleMeasure,
    T_fn,
    delta1,
    dump_measure_json,
    f_beta,
    four_points,
    herglotz,
    herglotz_prime,
    load_measure_json,
    star_moment,
)
from .domain import (
    DomainProfile,
    InsideDisk,
    Location,
    OutsideDisk,
    OutsideSigma,
    boundary_polyline,
    build_profile,
    contains,
    invert_f_beta,
    mu_s_density,
    mu_s_quadrature,
    radial_profile,
    spiral_coords,
    unitary_mass,
    v_bounds,
)
from .density import (
    DensityRaster,
    density,
    raster,
    raster_log,
    sample,
    total_mass,
)
from .hj import (
    CharState,
    PotentialSample,
    blowup_momenta,
    domain_profile,
    evaluate_S,
    hamiltonian,
    initial_momenta,
    pde_residual_r,
    pde_residual_tau,
    s0_inside_gradients,
    s0_outside_gradient,
    s0_outside_value,
    shoot,
    transport,
)
from .pushforward import (
    PushMap,
    build_push_map,
    phi_s_limit,
    phi_stau,
    phi_stau_inverse,
    phi_stau_inverse_many,
    phi_stau_many,
    verify_composite,
    verify_pushforward,
)
from .moments import (
    MomentTable,
    StarWord,
    factorization_check,
    mc_star_moments,
    moment_rhs,
    solve_hierarchy,
    t_derivative_check,
    t_derivative_rhs,
)
from .rmt import (
    EigCloud,
    SimConfig,
    eig_cloud,
    eig_vs_density,
    eigenvalues,
    estimate_S_mc,
    girko_logdet,
    hermitian_increment,
    initial_unitary,
    sde_params,
    simulate_b,
    simulate_b_pair,
)
