"""
specforce-diffusion

Class-conditional synthetic tri-axial specific-force (accelerometer) windows
generated by diffusion in the image domain.

Each window is turned into an image by an invertible delay embedding, an
EDM-style denoiser is trained on those images and sampled with a Heun
solver, and the sampled images are inverted back into time-domain signals.
Synthetic data is validated against real data with two CNN classifiers
(image- and signal-based), a Frechet distance over classifier features,
per-channel value distributions and t-SNE.

The whole stack runs on numpy: a small reverse-mode tensor engine provides
the layers, losses and Adam/AdamW optimizers.

Usage:
- Run the CLI with `python -m specforce_diffusion --help`
- Or use the installed command `specforce-diffusion`
- Configuration is an INI file (`--config`); the packaged defaults fill the gaps
"""

from .cli import cli, main
from .config.config_manager import RunConfigManager
from .gen_tools.core.pipeline_manager import PipelineManager
from .run_lifecycle import RunLifecycleManager

__all__ = [
    'cli',
    'main',
    'RunConfigManager',
    'PipelineManager',
    'RunLifecycleManager'
]
