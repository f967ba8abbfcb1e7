"""CPU real-time Lidar object-instance classification.

Pipeline: spherical range-image projection with decomposed normal-vector
channels, ground removal + angle-based instance clustering, masked patch
and statistics feature extraction, batch inference through a tiny
two-branch CNN, and pointwise IoU / AP / panoptic-quality evaluation.
"""

from .pointcloud import ClassId, LabeledScan, Scan, load_labels, load_scan  # noqa: F401
from .rangeimage import (  # noqa: F401
    ChannelConfig,
    ProjectionConfig,
    RangeImage,
    compute_normal_images,
    project,
    select_channels,
)

__version__ = "0.1.0"
