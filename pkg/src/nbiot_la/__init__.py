"""NB-IoT NPUSCH uplink link adaptation: strategies, LUT scheduling and a session simulator."""

__version__ = "0.1.0"

from .channel import (  # noqa: E402
    DEFAULT_TABLE,
    LinkParams,
    Outcome,
    ResourceTable,
    SyntheticAwgn,
    TabulatedBler,
    draw_block_outcome,
    extract_oracle,
)
from .lut import Lut, LutEntry, LutKey, QosBand, brute_force_optimal, build_lut, candidates, classify_qos  # noqa: E402
from .simulator import SessionConfig, SessionResult, expected_ru_cost, performance, run_session, run_sweep  # noqa: E402
from .strategies import BlerEstimator, StrategyKind, Verdict, make_strategy  # noqa: E402
