from .model import (  # noqa: F401
    Model,
    ModelMeta,
    forward,
    forward_logits,
    init_random,
    param_count,
    predict,
)
from .weights import WeightFormatError, load_weights, save_weights  # noqa: F401
