"""Marker-less RGB-D target localization and grasp planning.

The pipeline takes synchronized color+depth frames, segments a target,
lifts the masked pixels into a cleaned point cloud, estimates the full
object from its visible half by mirror symmetry and cuts a slab of
grasp candidates around the corrected centroid. Frames travel between
machines over a latency-measured request-reply transport; a synthetic
ray-casting renderer with exact ground truth stands in for the camera
when measuring accuracy.
"""

from .cloud import (
    FilterParams,
    PointCloud,
    build_cloud,
    radius_outlier_removal,
    read_ply,
    voxel_downsample,
    write_ply,
)
from .errors import (
    CodecError,
    ContractViolation,
    GraspVisError,
    GripperApertureExceeded,
    NoValidGrasp,
    ObjectNotVisible,
    ProtocolError,
    RemoteError,
    StaleFrameError,
    TargetNotFound,
    TransportError,
)
from .geometry import (
    FrameId,
    Intrinsics,
    Pose,
    compose,
    deproject_pixel,
    project_point,
    rotation_about,
    transform_point,
    transform_points,
)
from .graspplan import (
    DEFAULT_SLAB_THICKNESS,
    GraspAssumptions,
    GraspPlan,
    centroid,
    mirror_about_axis,
    plan_grasp,
    plan_to_json_dict,
    principal_axis,
    transform_plan,
    write_plan,
)
from .imaging import (
    ColorFrame,
    DepthFrame,
    FramePair,
    SegMask,
    apply_mask,
    decode_color,
    decode_depth,
    encode_color,
    encode_depth,
    psnr,
)
from .pipeline import (
    STAGE_BUDGETS_MS,
    STUDY_FILTER_PARAMS,
    LocalizationStudy,
    PipelineConfig,
    StageTimings,
    TargetEstimate,
    TargetLocalizer,
    evaluate_localization,
    load_config,
    run_stream,
)
from .segmentation import (
    Detection,
    GroundTruthProvider,
    ProviderConfig,
    RemoteDetectionProvider,
    decode_detections,
    detect,
    encode_detections,
    make_provider,
)
from .simulator import (
    GroundTruth,
    Scene,
    SceneObject,
    bear_scene,
    bottle_scene,
    camera_pose_at,
    pose_grid,
    render,
)
from .transport import (
    FrameClient,
    FramePublisher,
    ReplyServer,
    RequestClient,
    TransitStudy,
    WireFramePair,
    decode_wire_frame_pair,
    encode_wire_frame_pair,
    measure_transit,
    pair_from_wire,
    parse_endpoint,
    request_frame,
    wire_from_pair,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
