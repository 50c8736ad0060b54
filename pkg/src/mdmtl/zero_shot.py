"""Models for domains and tasks that have no training data.

A trained weight-generating function can be applied to any descriptor,
including one never seen in training. For domains this synthesises a new
domain model (zero-shot domain adaptation); for tasks, scoring each
candidate task descriptor and taking the best is zero-shot recognition.
"""

import numpy as np

from .descriptors import Descriptor, Encoding
from .errors import DescriptorError, ShapeError
from .model_multi import generate_weight_matrix
from .model_single import SingleOutputModel
from .tensor_core import as_vector

__all__ = ["zsda_weights", "zsda_predict", "zsda_weight_matrix", "zsl_classify"]


def _require_distributed(model, z):
    schema = z.schema if isinstance(z, Descriptor) else model.schema
    if schema is not None and schema.mode is not Encoding.DISTRIBUTED:
        raise DescriptorError(
            f"zero-shot domain synthesis needs a distributed descriptor schema, got "
            f"{schema.mode.value}: a one-hot code for an unseen domain shares nothing "
            "with the trained domains"
        )


def _descriptor(model, z):
    z = as_vector(z, "descriptor")
    b = model.dims[2]
    if z.shape[0] != b:
        raise ShapeError(f"descriptor length {z.shape[0]} != B={b}")
    return z


def zsda_weights(model, z_new):
    """Synthesised domain model ``Q @ z_new`` (length ``K``).

    Scores for the new domain are ``(x @ P) @ zsda_weights(model, z_new)``;
    ``model.P @ zsda_weights(...)`` is the equivalent ``D``-dimensional weight.
    """
    if not isinstance(model, SingleOutputModel):
        raise TypeError("zsda_weights needs a single-output model; use zsda_weight_matrix")
    _require_distributed(model, z_new)
    return model.Q @ _descriptor(model, z_new)


def zsda_predict(model, X, z_new):
    """Scores for instances ``X`` of an unseen domain described by ``z_new``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if isinstance(model, SingleOutputModel):
        return (X @ model.P) @ zsda_weights(model, z_new)
    return X @ zsda_weight_matrix(model, z_new)


def zsda_weight_matrix(model, z_new):
    """``D x C`` weight matrix synthesised for an unseen domain."""
    _require_distributed(model, z_new)
    return generate_weight_matrix(model, _descriptor(model, z_new))


def zsl_classify(model, x, candidates):
    """Index of the candidate descriptor with the highest score for ``x``.

    Ties go to the lowest index.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate descriptors")
    x = as_vector(x, "x")
    Z = np.array([_descriptor(model, z) for z in candidates])
    scores = np.asarray(model.forward(np.repeat(x[None], len(candidates), 0), Z))
    if scores.ndim == 2:
        if scores.shape[1] != 1:
            raise ShapeError("zero-shot recognition scores one output per candidate")
        scores = scores[:, 0]
    return int(np.argmax(scores))
