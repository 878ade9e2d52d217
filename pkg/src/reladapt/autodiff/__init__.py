"""Minimal float64 reverse-mode autodiff engine used by all learned models."""

from .tensor import (  # noqa: F401
    Tensor,
    ShapeError,
    no_grad,
    is_grad_enabled,
    add,
    sub,
    mul,
    div,
    neg,
    powc,
    exp,
    log,
    sqrt,
    absval,
    tanh,
    relu,
    maximum,
    minimum,
    clip,
    matmul,
    tsum,
    tmean,
    reshape,
    transpose,
    getitem,
    concat,
    softmax,
    log_softmax,
    logsumexp,
    softplus,
    embedding,
    take_rows,
    dropout,
    ensure_tensor,
)
from .nn import (  # noqa: F401
    Module,
    parameter,
    Linear,
    Embedding,
    LayerNorm,
    MLP,
    MultiHeadSelfAttention,
    TransformerEncoderLayer,
    TransformerEncoder,
    padding_mask,
)
from .optim import Adam, clip_grad_norm  # noqa: F401
from .checkpoint import save_checkpoint, load_checkpoint  # noqa: F401
from .gradcheck import finite_difference_grad, max_relative_error  # noqa: F401
