"""
Binary IDGC containers and the artifacts stored in them.
"""

from .artifacts import (KIND_CLASSIFIER, KIND_DATASET, KIND_DENOISER, ClassifierCheckpoint, DatasetBundle,
                        DenoiserCheckpoint, classifier_from_container, classifier_to_container,
                        dataset_from_container, dataset_to_container, denoiser_from_container,
                        denoiser_to_container, optimizer_from_container)
from .container import (FORMAT_VERSION, MAGIC, Container, decode_container, encode_container, file_digest,
                        read_container, write_container)

__all__ = [
    'FORMAT_VERSION',
    'MAGIC',
    'Container',
    'decode_container',
    'encode_container',
    'file_digest',
    'read_container',
    'write_container',
    'KIND_CLASSIFIER',
    'KIND_DATASET',
    'KIND_DENOISER',
    'ClassifierCheckpoint',
    'DatasetBundle',
    'DenoiserCheckpoint',
    'classifier_from_container',
    'classifier_to_container',
    'dataset_from_container',
    'dataset_to_container',
    'denoiser_from_container',
    'denoiser_to_container',
    'optimizer_from_container',
]
