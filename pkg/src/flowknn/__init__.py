"""Flow-window KNN classification with instrumented neighbour selectors."""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    CALIBRATED,
    ClassLabel,
    Dataset,
    LabeledSample,
    SplitSpec,
    SynthConfig,
    kfold_assign,
    split,
    synth_generate,
)
from .evalbench import BenchReport, TuneResult, bench_selectors, evaluate, tune_k  # noqa: E402
from .flowfeat import (  # noqa: E402
    FeatureVector,
    FlowWindow,
    PacketMeta,
    extract_features,
    ingest_packets,
    windowize,
)
from .knn import KnnConfig, classify, manhattan, mode_with_tiebreak  # noqa: E402
from .selectors import (  # noqa: E402
    STRATEGIES,
    NeighborSet,
    SelectionStats,
    bubble_select,
    enumeration_select,
    kmin_select,
    merge_select,
    oddeven_select,
)
