from tensor_core.checkpoint import load_tensors, save_tensors
from tensor_core.gradcheck import grad_check
from tensor_core.ops import (
    abs_,
    add,
    concat,
    constant,
    cos,
    div,
    elementwise,
    exp,
    mask,
    matmul,
    mul,
    neg,
    reduce_sum,
    reshape,
    segment_sum,
    silu,
    sqrt,
    square,
    sub,
    take,
    transpose,
)
from tensor_core.tensor import Gradients, Tape, Tensor, as_tensor, backward, default_dtype, set_default_dtype
