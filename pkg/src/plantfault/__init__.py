"""Two-stage industrial plant fault detection.

Fault start times are found by thresholding windowed class probabilities
from a random forest / ridge-logistic ensemble; end times come from a
gradient boosting model evaluated over the intervals following each start.
"""

from plantfault.errors import (
    ConfigurationError,
    IngestError,
    InvariantError,
    PlantFaultError,
    SkipFault,
)
from plantfault.ingest import FaultEvent, PlantTable, RawPlantFiles, load_plant

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "FaultEvent",
    "IngestError",
    "InvariantError",
    "PlantFaultError",
    "PlantTable",
    "RawPlantFiles",
    "SkipFault",
    "load_plant",
]
