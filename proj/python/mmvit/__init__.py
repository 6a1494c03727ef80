# Copyright (c) 2026 The MMViT Kit Authors. All Rights Reserved.
# Licensed under the Apache License, Version 2.0.
"""Python bindings for the MMViT kit."""

from ._mmvit import (  # noqa: F401
    CheckpointError,
    Config,
    ConfigError,
    ContractError,
    DimensionError,
    Error,
    FormatError,
    InputError,
    Model,
    TransferError,
    augment,
    count_params,
    estimate_flops,
    fingerprint_hex,
    load_checkpoint,
    logmel_fbank,
    metrics,
    schedule,
    transfer,
)

__version__ = "0.1.0"
