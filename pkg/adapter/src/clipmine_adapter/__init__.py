"""Embeds seed images and video frames into the mining pipeline's formats."""

from .jobs import AdapterJob, EmbedResult, ImageItem, VideoItem, embed_images, embed_video_frames
from .media import MediaError, load_image, sample_video_frames
from .providers import (
    DEFAULT_MODEL,
    EmbeddingProvider,
    PixelProjectionProvider,
    ProviderError,
    get_provider,
    register_provider,
)

__version__ = "0.1.0"
