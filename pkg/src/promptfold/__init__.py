"""Staged prompt-internalization preprocessing for fine-tuning datasets."""

from .accounting import (
    PriceTable,
    TokenStats,
    compression_ratio,
    estimate_cost,
    load_price_table,
    measure,
)
from .compressor import (
    CompressionRequest,
    CompressionResult,
    ImportanceModel,
    compress,
    load_sidecar,
    train_importance_model,
)
from .pipeline import (
    DEFAULT_LAYOUT,
    PipelineConfig,
    RenderLayout,
    StageManifest,
    build_inference_prompt,
    load_config,
    load_manifest,
    preprocess,
    render_prompt,
    run_preprocess,
)
from .records import (
    Dataset,
    PromptRecord,
    RecordParseError,
    StagedRecord,
    load_dataset,
    parse_record,
    parse_staged,
    read_staged,
    serialize_staged,
)
from .retrieval import ExampleBank, bleu, build_bank, retrieve
from .schedule import InternalizationSchedule, make_schedule
from .tokenizer import Token, count_tokens, token_texts, tokenize

__version__ = "0.1.0"

__all__ = [
    "CompressionRequest",
    "CompressionResult",
    "Dataset",
    "DEFAULT_LAYOUT",
    "ExampleBank",
    "ImportanceModel",
    "InternalizationSchedule",
    "PipelineConfig",
    "PriceTable",
    "PromptRecord",
    "RecordParseError",
    "RenderLayout",
    "StageManifest",
    "StagedRecord",
    "Token",
    "TokenStats",
    "bleu",
    "build_bank",
    "build_inference_prompt",
    "compress",
    "compression_ratio",
    "count_tokens",
    "estimate_cost",
    "load_config",
    "load_dataset",
    "load_manifest",
    "load_price_table",
    "load_sidecar",
    "make_schedule",
    "measure",
    "parse_record",
    "parse_staged",
    "preprocess",
    "read_staged",
    "render_prompt",
    "retrieve",
    "run_preprocess",
    "serialize_staged",
    "token_texts",
    "tokenize",
    "train_importance_model",
]
