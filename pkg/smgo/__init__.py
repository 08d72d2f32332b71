from smgo.lib.core import History, Sample, SearchSpace
from smgo.lib.engine import EngineConfig, SMGOEngine, run
from smgo.lib.gap import GapCertificate, gap_upper_bound

__all__ = [
    "EngineConfig",
    "GapCertificate",
    "History",
    "SMGOEngine",
    "Sample",
    "SearchSpace",
    "gap_upper_bound",
    "run",
]
