"""Memory-budgeted compressed replay for class-incremental continual learning."""

from .tensor_io import (
    F32,
    U8,
    Dataset,
    FormatError,
    TensorSample,
    read_dataset,
    write_dataset,
)
from .storage import (
    AUTOENCODE,
    IDENTITY,
    QUANTIZE,
    THIN,
    CodecConfig,
    StorageModel,
    exemplar_cost,
    max_slots,
    storage_overhead,
    total_storage,
)
from .codecs import (
    AEWeights,
    Codebook,
    CodebookStats,
    CompressedExemplar,
    ae_compress,
    ae_decompress,
    build_codebook,
    dequantize,
    make_codec,
    quantize,
    read_ae_weights,
    read_stats,
    thin,
    unthin,
    write_ae_weights,
    write_stats,
)
from .memory import EpisodicMemory, Offer, OfferDecision
from .head import (
    SGDRSoftmaxHead,
    evaluate_on_seen,
    load_head,
    mix_batch,
    save_head,
    sgdr_learning_rate,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    TaskStream,
    build_task_stream,
    emit_report,
    make_synthetic_features,
    rows_to_csv,
    run_experiment,
    sweep,
)

__version__ = "0.1.0"
