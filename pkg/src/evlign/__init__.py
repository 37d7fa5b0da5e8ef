"""evlign: event-based facial keypoint alignment toolkit.

Event stream model and I/O, dense event representations, a deterministic
video-to-event simulator, dataset windowing/selection protocols, the
cross-modal attention layer stack with gradient verification, the
multi-representation self-supervised loss family with a toy trainer, and
landmark evaluation metrics. See each submodule for the contracts.
"""

from ._accel import backend_name
from .attention import (
    AttentionParams,
    Embeddings,
    LayerOutput,
    cmfa_block,
    cmfa_forward,
    cmfa_weights,
    layer_forward,
)
from .dataset import (
    WindowIndex,
    esie_protocol,
    esie_windows,
    segment_stream,
    select_max_event_segment,
    select_top_k_segments,
)
from .errors import (
    EvlignError,
    MetricError,
    NumericError,
    ParameterError,
    ParseError,
    ProtocolError,
    ShapeError,
    TrainingError,
    ValidationError,
)
from .events import (
    Event,
    EventStream,
    SensorGeometry,
    concat_streams,
    count_events,
    load_events,
    save_events,
    slice_window,
)
from .gradcheck import grad_check
from .metrics import (
    LandmarkSet,
    MetricReport,
    auc,
    ced_curve,
    evaluate,
    failure_rate,
    nme,
)
from .representations import (
    FrameRep,
    TimeSurfaceRep,
    VoxelRep,
    build_frame,
    build_timesurface,
    build_voxel,
    default_tau,
    scale_unit,
)
from .simulator import (
    FrameSequence,
    SimulatorConfig,
    frames_to_events,
    interpolate_frames,
)
from .ssmer import (
    BranchOutputs,
    RepresentationPairSet,
    SsmerHeads,
    build_pair_set,
    cosine_distance,
    heads_forward,
    multi_rep_loss,
    symmetric_pair_loss,
    synthetic_windows,
    train_toy,
)
from .tensor_io import read_tensor, write_tensor

__version__ = "0.1.0"
