"""Context-aware feature refinement for CTR prediction on top of a factorization machine."""

from .models import FMFRNet, ModelSpec
from .config import TrainConfig
from .refinement import build_variant, csgate, frnet_forward, resolve_variant

__all__ = ["FMFRNet", "ModelSpec", "TrainConfig", "build_variant", "csgate", "frnet_forward",
           "resolve_variant"]
__version__ = "0.1.0"
