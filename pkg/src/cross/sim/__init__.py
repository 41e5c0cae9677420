from .network import (
    Intersection,
    Link,
    Movement,
    Network,
    Node,
    ScenarioError,
    load_network,
    load_scenario,
    movements_conflict,
    network_from_scenario,
    save_scenario,
)
from .demand import DemandEntry, DemandSchedule, Vehicle, sample_vehicles
from .generate import (
    arterial_scenario,
    generate_grid,
    grid_scenario,
    mixed_corridor_scenario,
    schedule_from_doc,
    t_junction_scenario,
)
from .engine import (
    DETECTOR_CAP,
    DetectorRead,
    Simulation,
    SimulationError,
    build_simulation,
    run_episode,
)
from .metrics import MetricReport

__all__ = [
    "Intersection", "Link", "Movement", "Network", "Node", "ScenarioError",
    "load_network", "load_scenario", "movements_conflict", "network_from_scenario",
    "save_scenario", "DemandEntry", "DemandSchedule", "Vehicle", "sample_vehicles",
    "arterial_scenario", "generate_grid", "grid_scenario", "mixed_corridor_scenario",
    "schedule_from_doc", "t_junction_scenario", "DETECTOR_CAP", "DetectorRead",
    "Simulation", "SimulationError", "build_simulation", "run_episode", "MetricReport",
]
