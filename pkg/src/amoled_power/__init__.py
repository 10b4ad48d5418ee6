"""Power-delivery model for small AMOLED display modules."""

from .chain import (
    Bypass,
    ChainConfig,
    ChargePump,
    ConversionChain,
    InductiveBoost,
    LinearRegulator,
    chain_efficiency,
    parse_chain,
    parse_config,
    validate_config,
)
from .core import (
    ConfigurationError,
    ConstraintError,
    DomainError,
    InfeasibleError,
    InputError,
    Mode,
    ModeSpec,
    PanelSpec,
    PowerModelError,
    PowerReport,
    Process,
    RailMeasurement,
    Source,
    weighted_scenario_power,
)
from .curves import EfficiencyCurve, crossover, efficiency_at, load_curve
from .load import OledDiodeModel, TftModel, emission_current, oled_forward_voltage, required_rail_span
from .optimizer import (
    RailSymmetry,
    SearchSpace,
    SupplyPlan,
    WorkloadTrace,
    optimize,
    select_supply,
    simulate_feedback,
)
from .power import (
    DigitalModel,
    Inductor,
    ModelSet,
    QuiescentModel,
    RailLoad,
    dcr_loss,
    evaluate_mode,
    fit_calibration,
    total_power_method1,
    total_power_method2,
)
from .sequence import DiodeRemovable, DiodeRequired, RailTimeline, detect_contention, diode_decision

__version__ = "0.1.0"
