"""Causal graph-based video segmentation with temporally consistent superpixels."""

from .fhseg import RegionForest, Segmentation, forest_to_segmentation, remove_small_regions, segment_fh
from .imageio import Frame, gaussian_smooth, load_frame
from .markers import LabelAllocator, MarkerMap
from .msf import msf_label
from .pixelgraph import SortedPixelGraph, build_graph
from .temporal import FlowMap, SemanticMap, StreamParams, StreamState, process_frame, run_stream

__all__ = [
    "Frame",
    "FlowMap",
    "LabelAllocator",
    "MarkerMap",
    "RegionForest",
    "Segmentation",
    "SemanticMap",
    "SortedPixelGraph",
    "StreamParams",
    "StreamState",
    "build_graph",
    "forest_to_segmentation",
    "gaussian_smooth",
    "load_frame",
    "msf_label",
    "process_frame",
    "remove_small_regions",
    "run_stream",
    "segment_fh",
]
