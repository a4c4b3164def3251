"""Depth-aware convolution and pooling operators."""

from ._core import (
    SimilaritySpec,
    avg_pool_forward,
    compound_lr,
    compute_metrics,
    conv_forward,
    depth_avg_pool_backward,
    depth_avg_pool_forward,
    depth_conv_backward,
    depth_conv_forward,
    generate_dataset,
    global_pool_concat,
    poly_lr,
    relu,
    rf_trace,
    similarity,
    softmax_cross_entropy,
)

__all__ = [
    "SimilaritySpec",
    "avg_pool_forward",
    "compound_lr",
    "compute_metrics",
    "conv_forward",
    "depth_avg_pool_backward",
    "depth_avg_pool_forward",
    "depth_conv_backward",
    "depth_conv_forward",
    "generate_dataset",
    "global_pool_concat",
    "poly_lr",
    "relu",
    "rf_trace",
    "similarity",
    "softmax_cross_entropy",
]
