"""Depth-assisted all-in-focus fusion of multi-focus image stacks."""

__version__ = "0.1.0"

from .depthprep import ADParams, ad_hole_fill, align_depth, dilate_fill, preprocess
from .dofseg import (HyperfocalError, SegParams, SegmentationMap, back_dof, dof_rule, front_dof,
                     max_dof, region_stats, segment_depth)
from .fusion import blend, focus_measure, fuse, select_in_focus, weight_map
from .imgcore import (Calibration, CameraIntrinsics, Extrinsics, OpticsConfig, read_raster,
                      write_raster)

__all__ = [
    "ADParams", "Calibration", "CameraIntrinsics", "Extrinsics", "HyperfocalError",
    "OpticsConfig", "SegParams", "SegmentationMap", "ad_hole_fill", "align_depth", "back_dof",
    "blend", "dilate_fill", "dof_rule", "focus_measure", "front_dof", "fuse", "max_dof",
    "preprocess", "read_raster", "region_stats", "segment_depth", "select_in_focus",
    "weight_map", "write_raster",
]
