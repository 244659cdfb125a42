"""xattrib: explainability toolkit over a small differentiable core.

Submodules
----------
tensor / layers / network   inference core (forward traces, gradients)
models                      builders, text serialization, synthetic data
shapley                     exact and sampled Shapley attribution
counterfactual              diverse counterfactual search
gradattr                    Grad-CAM and integrated gradients
lrp                         layer-wise relevance propagation family
fuzzy                       differentiable fuzzy FOL querying and revision
nle                         explanation graphs and template rendering
cli                         command-line front door
"""

from ._kernels import BACKEND as kernel_backend
from .layers import (Attention, AvgPool2D, Conv2D, Dense, Embedding, Flatten,
                     GraphConv, LSTMCell, MaxPool2D, SumPool)
from .network import (ActivationTrace, Network, attention, forward, gradient,
                      graph_conv, input_gradient, lstm_step, predict)
from .tensor import (ShapeError, Tensor, UnsupportedError, ValidationError,
                     XattribError)

__version__ = "0.1.0"

__all__ = [
    "ActivationTrace", "Attention", "AvgPool2D", "Conv2D", "Dense",
    "Embedding", "Flatten", "GraphConv", "LSTMCell", "MaxPool2D", "Network",
    "ShapeError", "SumPool", "Tensor", "UnsupportedError", "ValidationError",
    "XattribError", "attention", "forward", "gradient", "graph_conv",
    "input_gradient", "kernel_backend", "lstm_step", "predict", "__version__",
]
