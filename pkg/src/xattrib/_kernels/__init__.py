"""Kernel backend selection.

The compiled Cython core is preferred when its extension module built;
otherwise the numpy fallback is used. Set ``XATTR_KERNELS=pure`` or
``XATTR_KERNELS=compiled`` to force a backend (``compiled`` raises if the
extension is missing). ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

_requested = os.environ.get("XATTR_KERNELS", "auto").strip().lower() or "auto"
if _requested not in ("auto", "pure", "compiled"):
    raise ImportError(
        f"XATTR_KERNELS must be 'auto', 'pure' or 'compiled', got {_requested!r}"
    )

if _requested == "pure":
    from . import pure as _impl
elif _requested == "compiled":
    from . import _core as _impl  # ImportError here means the ext never built
else:
    try:
        from . import _core as _impl
    except ImportError:
        from . import pure as _impl

BACKEND = _impl.BACKEND

ACT_IDENTITY = _impl.ACT_IDENTITY
ACT_RELU = _impl.ACT_RELU
ACT_SIGMOID = _impl.ACT_SIGMOID
ACT_TANH = _impl.ACT_TANH
ACT_SOFTMAX = _impl.ACT_SOFTMAX

dense_forward = _impl.dense_forward
matvec_transpose = _impl.matvec_transpose
apply_activation = _impl.apply_activation
activation_vjp = _impl.activation_vjp
conv2d_forward = _impl.conv2d_forward
conv2d_input_vjp = _impl.conv2d_input_vjp
maxpool2d_forward = _impl.maxpool2d_forward
maxpool2d_input_vjp = _impl.maxpool2d_input_vjp
avgpool2d_forward = _impl.avgpool2d_forward
avgpool2d_input_vjp = _impl.avgpool2d_input_vjp
