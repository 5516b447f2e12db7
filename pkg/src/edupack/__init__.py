"""Corpus preparation and training-run analysis for continued pre-training.

The pipeline half turns raw JSONL text into fixed-length token sequences
stored in seekable compressed shards: quality filtering, exact
deduplication, byte-level tokenization, sequence packing, and a
distributed streaming reader with deterministic bounded shuffling. The
analysis half holds closed-form models of training memory, scaling
efficiency, learning-rate schedules, and benchmark-score aggregation,
with a report renderer that emits text, CSV, and SVG charts.
"""

from .analysis import (
    BenchmarkRow,
    BenchmarkTable,
    DtypeBytes,
    LossCurve,
    LossGap,
    LrSchedule,
    MemoryEstimate,
    ScalingEfficiency,
    TrainRunSpec,
    emit_report,
    estimate_memory,
    group_deltas,
    load_benchmark_table,
    load_loss_curve,
    loss_gap,
    lr_at,
    relative_delta,
    scaling_efficiency,
    table_average,
    tokens_per_parameter,
)
from .config import PipelineConfig, load_config
from .corpus import (
    CorpusStats,
    Document,
    corpus_stats,
    read_documents,
    write_documents,
)
from .dedup import DedupIndex, canonicalize, dedup_stream
from .errors import (
    ConfigError,
    DataError,
    JsonlError,
    PipelineError,
    ShardFormatError,
    TokenizeError,
    UsageError,
)
from .filtering import (
    FilterConfig,
    FilterReason,
    FilterVerdict,
    apply_filters,
    evaluate_document,
    filter_length,
    filter_repetition,
)
from .pack import PackConfig, PackedSequence, PackStats, pack_stream
from .shard import (
    CODEC_DEFLATE,
    CODEC_NONE,
    ShardHeader,
    ShardReader,
    ShardWriteConfig,
    SplitMix64,
    StreamConfig,
    read_header,
    shuffle,
    stream_read,
    write_shards,
)
from .tokenizer import (
    ByteTokenizer,
    TokenizedDoc,
    TokenizerSpec,
    iter_token_file,
    tokenize_parallel,
    write_token_file,
)

__version__ = "0.1.0"
