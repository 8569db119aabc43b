"""Port-Hamiltonian modeling, verification and simulation of constrained multibody systems."""

from .core import (
    Multipliers,
    PhSystem,
    PortValues,
    State,
    constraint_violation,
    eval_point,
    from_cartesian,
    hamiltonian,
    is_consistent,
    port_values,
    power_balance_residual,
    residual_mks2,
)
from .errors import (
    ConstraintError,
    DomainError,
    NoConvergence,
    ParamError,
    PhError,
    PortError,
    RankError,
    ShapeError,
    SingularSystem,
)
from .interconnect import (
    CouplingSpec,
    check_interconnection_rank,
    couple,
    coupling_power_residual,
    coupling_power_residuals,
)
from .sim import SimConfig, SimulationError, Trajectory, consistent_init, multiplier_solve, simulate, step
from .structure import (
    ImageRep,
    SampleSet,
    VerificationReport,
    Verdict,
    assemble_constrained_dirac,
    assemble_unconstrained_dirac,
    check_dim_constancy,
    check_dirac_pointwise,
    check_lagrangian_local,
    check_resistive,
    continuous_kernel_basis,
    verify_system,
)

__version__ = "0.1.0"
