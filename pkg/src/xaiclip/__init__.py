"""ROI-gated perturbation explainability engine for image segmentation."""

from .types import (  # noqa: F401
    BinaryMask,
    ExplainReport,
    ImageGrid,
    PatchGrid,
    SaliencyMap,
)
from .predictor import (  # noqa: F401
    HttpPredictor,
    LinearOracle,
    Prediction,
    PredictorInfo,
    RegionOracle,
    external_adapter,
)

__version__ = "0.1.0"
