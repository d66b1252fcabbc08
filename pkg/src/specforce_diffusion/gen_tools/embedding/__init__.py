"""
Invertible delay embedding between specific-force windows and images.
"""

from .delay_embedding import (INVERSION_MODES, PAD_ANCHORS, PADDING_CHECKS, EmbeddedImage, EmbeddingCodec,
                              EmbeddingParams, consistency_error, embed, embed_window, invert, invert_image,
                              padding_for, strip_padding)

__all__ = [
    'INVERSION_MODES',
    'PAD_ANCHORS',
    'PADDING_CHECKS',
    'EmbeddedImage',
    'EmbeddingCodec',
    'EmbeddingParams',
    'consistency_error',
    'embed',
    'embed_window',
    'invert',
    'invert_image',
    'padding_for',
    'strip_padding',
]
