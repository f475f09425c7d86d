"""Procedural satellite imagery with exact keypoint and pose annotations."""
from .dataset import Dataset, DatasetSpec, SampleRecord, generate_dataset, split_sequences
from .render import Lighting, rasterize
from .satellites import KINDS, SatelliteModel, make_satellite
from .trajectory import sample_trajectory

__all__ = [
    "KINDS", "Dataset", "DatasetSpec", "Lighting", "SampleRecord", "SatelliteModel",
    "generate_dataset", "make_satellite", "rasterize", "sample_trajectory", "split_sequences",
]
