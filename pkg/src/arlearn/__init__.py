"""Multi-tenant association-rule learning engine.

Client applications register typed input/output schemas, feed training
rows, mine rules under support/confidence thresholds (Apriori, Max-Miner,
ID3 paths), query predicted outputs for current inputs, and tune rule
confidence via feedback. A trace-replay harness drives the same engine
from recorded sensor/action streams.
"""

from .errors import EngineError
from .model import (
    AttributeSchema,
    Dataset,
    Item,
    ItemSet,
    Rule,
    Schema,
    Thresholds,
    TrainingRow,
)

__version__ = "0.1.0"

__all__ = [
    "AttributeSchema",
    "Dataset",
    "EngineError",
    "Item",
    "ItemSet",
    "Rule",
    "Schema",
    "Thresholds",
    "TrainingRow",
    "__version__",
]
