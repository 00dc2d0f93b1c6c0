"""Camera-motion imitation from video: homography estimation, clip sampling,
augmentation-consistent targets, motion predictors and evaluation."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .homography import FrameGeometry  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .motion import MotionClass  # noqa: E402
from .sampling import Clip, ClipSpec  # noqa: E402
from .track import MotionTrack  # noqa: E402

__all__ = ["FrameGeometry", "MotionClass", "MotionTrack", "Clip", "ClipSpec", "BACKEND", "__version__"]
