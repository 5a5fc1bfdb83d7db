from .layers import (
    Conv2d,
    Dropout,
    Flatten,
    GlobalAvgPool2d,
    Linear,
    Module,
    ReLU,
    Sequential,
)
from .encoders import (
    SinusoidalLocationEncoder,
    available_encoders,
    build_encoder,
    register_encoder,
    sinusoidal_location_encoder,
)
from .surgery import modify_first_layer, modify_last_layer, strip_head
from .fusion import FusionModel, build_mme

__all__ = [
    "Conv2d",
    "Dropout",
    "Flatten",
    "GlobalAvgPool2d",
    "Linear",
    "Module",
    "ReLU",
    "Sequential",
    "SinusoidalLocationEncoder",
    "available_encoders",
    "build_encoder",
    "register_encoder",
    "sinusoidal_location_encoder",
    "modify_first_layer",
    "modify_last_layer",
    "strip_head",
    "FusionModel",
    "build_mme",
]
