"""depthprobe: black-box probes for the pictorial depth cues used by
monocular depth estimators.

The package synthesizes cue-conflicting test images, collects disparity maps
from a model over a file-based protocol (or from built-in analytic oracles),
and extracts geometric and statistical evidence: horizon shifts, roll angles,
obstacle-distance trends and depth metrics.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    CameraModel,
    CenteredCoord,
    GroundPlaneModel,
    PixelRect,
    kitti_camera,
)
