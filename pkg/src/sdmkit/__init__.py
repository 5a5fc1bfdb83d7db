"""sdmkit: multimodal deep species-distribution modeling at desk scale."""

__version__ = "0.1.0"

from . import config, engine, evalkit, geodata, split  # noqa: F401
