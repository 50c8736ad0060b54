import copy

import numpy as np


def uniform_init(rng, shape, fan_in):
    """Entries i.i.d. uniform in ``[-s, s]`` with ``s = 1/sqrt(fan_in)``."""
    s = 1.0 / np.sqrt(max(int(fan_in), 1))
    return rng.uniform(-s, s, size=shape)


class FactorizedModel:
    """Common plumbing for every weight-generating model.

    Subclasses are dataclasses whose array fields are listed, in their
    serialisation order, in ``blocks``. ``frozen`` names blocks that are
    constants rather than learned parameters; the trainer never updates
    them and their reported gradients are zero.
    """

    kind = None
    blocks = ()

    def params(self):
        return {name: getattr(self, name) for name in self.blocks}

    def trainable(self):
        return [name for name in self.blocks if name not in self.frozen]

    @property
    def n_params(self):
        """Number of learned scalars (frozen blocks excluded)."""
        return int(sum(getattr(self, n).size for n in self.trainable()))

    def copy(self):
        return copy.deepcopy(self)

    def backward(self, X, Z, dscores):
        grads = self._backward(X, Z, dscores)
        for name in self.frozen:
            grads[name] = np.zeros_like(getattr(self, name))
        return grads

    def _prep(self, X, Z):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        return X, Z
