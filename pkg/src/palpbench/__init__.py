"""palpbench: simulated multimodal palpation workbench.

Library layout mirrors the bench subsystems:

- materials / rig: phantoms and the virtual test bench (stages, force sensor,
  contact microphones, RGB-D camera, laser probe)
- protocol: the line-based serial contract, device emulator, and host driver
- calibration: eye-to-hand camera/stage registration
- features: force-curve and MFCC feature extraction
- learn: PCA, SVM (SMO + Platt), MLP, and evaluation
- scan: probe-point planning and probability-map interpolation
- session: end-to-end orchestration, persistence, HTTP API, and CLI
"""

from .materials import (
    MaterialSpec,
    Phantom,
    PhantomInvariantError,
    PhantomParseError,
    concentric_disk_phantom,
    load_phantom,
    parse_phantom,
    table_material,
    uniform_phantom,
)
from .rig import (
    CameraConfig,
    CameraFrame,
    Intrinsics,
    NoPhantomError,
    PalpationRecord,
    ProjectionError,
    RigConfig,
    RigError,
    RigSimulator,
    SensorModel,
    StagePose,
    TravelLimitError,
)

__version__ = "0.1.0"
