"""spatialforge: calibrated 3D scene geometry, rule-based relation derivation,
QA/CoT synthesis, verifiable rewards with GRPO advantages, a toy policy
simulator, benchmark evaluation, and a human-verification service."""

from .geometry import (
    CalibratedFrame,
    CameraExtrinsics,
    UnitVec3,
    Vec3,
    angular_difference,
    calibrate_direction,
    calibrate_point,
    camera_distance,
    derive_frame,
    distance,
    height_of,
    horizontal_bearing,
    make_extrinsics,
)
from .scenes import (
    FilterConfig,
    ObjectAnnotation,
    SceneAnnotation,
    SceneSet,
    filter_scenes,
    load_scenes,
    mix_datasets,
    record_verdict,
    save_scenes,
)
from .relations import (
    RelationConfig,
    RelationFact,
    derive_all,
    derive_facts,
)
from .qa import (
    CoTTrace,
    QARecord,
    TraceStep,
    gen_basic3d,
    gen_srcot,
    gen_srqa,
    render_record,
)
from .traces import (
    AttributionThresholds,
    ConsistencyReport,
    FailureAttribution,
    ParsedTrace,
    attribute_failure,
    check_consistency,
    extract_answer,
    failure_metrics,
    parse_trace,
)
from .rewards import (
    AdvantageGroup,
    GrpoConfig,
    RewardBreakdown,
    RewardWeights,
    accuracy_reward,
    composite_reward,
    format_reward,
    grpo_advantages,
    kl_penalty,
    process_reward_3d,
    reasoning_steps_reward,
)
from .sim import SimConfig, SimReport, ToyPolicy, run_simulation
from .evaluation import (
    BenchQuestion,
    EvalReport,
    bbox_center_heuristic,
    run_eval,
    score_predictions,
)
from .service import ReviewQueue, VerifyServer

__version__ = "0.1.0"
