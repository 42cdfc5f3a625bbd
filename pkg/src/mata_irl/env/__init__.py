from .analysis import (
    ConstraintReport,
    EnergyLedger,
    EpisodeMetrics,
    ObjectiveWeights,
    TaskTiming,
    compute_metrics,
    energy_ledger,
    score_objective,
    task_timings,
    validate_constraints,
)
from .episode import (
    EpisodeLog,
    EpisodeRecorder,
    StepRecord,
    TrajectorySegment,
    extract_segments,
    read_log,
    run_episode,
    write_log,
)
from .world import (
    EnvConfig,
    StepEvents,
    WorldState,
    base_reward,
    direction_vectors,
    move,
    reset,
    step,
)
