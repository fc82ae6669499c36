"""Virtual mouse sensor-position laboratory."""

__version__ = "0.1.0"

from .analysis import (
    BlockSummary,
    FittsFit,
    SessionSummary,
    TaskConfig,
    Trial,
    fitts_fit,
    friedman_test,
    mean_ci,
    path_deviation,
    screen_outliers,
    summarize_session,
    task_geometry,
)
from .arm import ArmModel, ArmSession, SyntheticUser, regression_check, simulate_aim_game, simulate_trial
from .fusion import (
    CarryAccumulator,
    CountVec,
    CursorDelta,
    DualSample,
    VirtualConfig,
    emulate_stream,
    estimate_rotation,
    quantize_carry,
    virtual_fuse,
)
from .kinematics import Pose, SensorOffset, ideal_sensor_read, sensor_world_position
from .optimizer import (
    CalibrationPlan,
    GPState,
    ei_acquire,
    expected_improvement,
    gp_update,
    optimize_in_task,
    run_calibration,
)
from .trajectory import lemniscate_plan, path_length, run_experiment
