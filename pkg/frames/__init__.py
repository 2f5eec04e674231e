from frames.diagnostics import frame_rank, node_identity_frame, project, project_and_invert
from frames.local import (
    FrameSet,
    ProjectionFeatures,
    broadcast_global_frames,
    generate_frames,
    global_frame,
    mix_frames,
    project_all,
    project_d1,
    project_d2,
    project_d3,
)
from frames.relational import identity_readout, relational_pool_reference
