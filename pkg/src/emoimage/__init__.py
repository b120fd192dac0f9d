"""Speech emotion recognition from stacked spectral feature images with VGG-16."""

from .clip import AudioClip, Emotion
from .config import RunConfig
from .dsp import DspConfig, Spectrogram
from .features import FeatureImage, FeatureOrder

__all__ = ["AudioClip", "DspConfig", "Emotion", "FeatureImage", "FeatureOrder", "RunConfig", "Spectrogram"]
__version__ = "0.1.0"
