"""Simulated radar depth imaging guided by camera segmentation and monocular depth."""

from .beamforming import RadarProfile, beamform, find_peaks, span_range_peaks
from .fusion import DenseDepthImage, align_absolute, fuse, reject_outliers
from .pipeline import ObjectResult, PipelineOptions, process_object
from .radar import IQCube, RadarConfig, azimuth_beamwidth, preset, range_resolution, synthesize_capture
from .resilience import DeclutterReport, declutter, resolve_occlusion, rss_upper_bound
from .scene import ObjectClass, Scatterer, Scene, SceneObject, load_scene, save_scene
from .specular import CorrelationCurve, SparsePointCloud, estimate_depth, get_shape_contour, matched_filter
from .vision import CalibrationTransform, CameraModel, SegmentationMask, estimate_calibration

__version__ = "0.1.0"
