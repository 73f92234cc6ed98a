from .augment import AugmentationPolicy, augment
from .batching import balanced_batches
from .manifest import DatasetManifest, ManifestError, Record, load_manifest, write_manifest
from .prepare import DEFAULT_SIZE, DESK_SIZE, Sample, SampleError, prepare_arrays, prepare_sample, to_gray
from .synth import synth_scene, write_synth_dataset

__all__ = [
    "AugmentationPolicy", "augment", "balanced_batches", "DatasetManifest", "ManifestError", "Record",
    "load_manifest", "write_manifest", "DEFAULT_SIZE", "DESK_SIZE", "Sample", "SampleError",
    "prepare_arrays", "prepare_sample", "to_gray", "synth_scene", "write_synth_dataset",
]
