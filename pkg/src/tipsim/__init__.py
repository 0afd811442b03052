"""tipsim: tip-pool dynamics in DAG ledgers under tip-inflation attacks.

Simulation (``engine``), analytic fixed-point models (``model``), DAG and
pool primitives (``dag``, ``selection``), and statistics (``stats``).
"""

from .dag import (
    Block,
    DagStore,
    Issuer,
    RemovalCause,
    TipPool,
    advance_time,
    ancestors_of,
    insert_block,
    new_dag,
    write_dag_csv,
)
from .engine import SimConfig, SimDag, SimResult, SimSeries, run, run_replicated
from .model import (
    AnalyticPrediction,
    RegimeParams,
    Stability,
    UnstableRegimeError,
    classify_stability,
    expiration_probability,
    predict,
    selection_probability,
    solve_l0,
    tip_pool_no_expiration,
)
from .selection import (
    AdversaryState,
    EmptyTipPool,
    SelectionParams,
    select_adversary,
    select_honest,
)
from .stats import (
    AggregateStats,
    RunStats,
    aggregate,
    classify_tips,
    future_cone_orphanage,
    orphanage_rate,
    recompute_tip_classes,
    run_stats,
    time_weighted_mean,
)

__version__ = "0.1.0"
