"""Built-in switched-system models."""
from .vehicle import (
    MODES,
    HORIZON_DEFAULT,
    desired_trajectory,
    vehicle_initial_state,
    vehicle_mode_field,
    vehicle_system,
)
from .power import (
    PowerNetwork,
    electrical_power,
    initial_state,
    kron_reduction,
    load_network,
    lossless_energy,
    power_system,
    solve_equilibrium,
    swing_mode_field,
)

__all__ = [
    "MODES",
    "HORIZON_DEFAULT",
    "desired_trajectory",
    "vehicle_initial_state",
    "vehicle_mode_field",
    "vehicle_system",
    "PowerNetwork",
    "electrical_power",
    "initial_state",
    "kron_reduction",
    "load_network",
    "lossless_energy",
    "power_system",
    "solve_equilibrium",
    "swing_mode_field",
]
