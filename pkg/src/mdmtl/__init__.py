"""Multi-domain and multi-task linear models whose weights are generated
from semantic domain/task descriptors by matrix or tensor factorisations.
"""

__version__ = "0.1.0"

from .descriptors import Descriptor, DomainSchema, Encoding, build_Z
from .errors import (
    ConfigError,
    DataFormatError,
    DescriptorError,
    DivergenceError,
    ModelFormatError,
    ShapeError,
)
from .model_multi import (
    CPModel,
    FullTensorModel,
    TTModel,
    TuckerModel,
    compose,
    init_cp,
    init_full,
    init_tt,
    init_tucker,
    to_tucker,
)
from .model_single import SingleOutputModel, apply_preset, init_single
from .persist import load_model, save_model
from .trainer import TrainConfig, fit, grad_check
from .zero_shot import zsda_predict, zsda_weights, zsl_classify
