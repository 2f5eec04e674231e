"""Dense tensors and the reverse-mode differentiation tape.

A Tensor is an immutable numpy array plus bookkeeping. Tensors that require
gradients belong to exactly one Tape; every operation on them appends an entry
to that tape, so entries are in topological order by construction.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from utils.errors import NonFiniteError, TapeError

logger = logging.getLogger(__name__)

_DTYPES = {"float64": np.float64, "float32": np.float32}
_default_dtype = np.float64


def set_default_dtype(name: str) -> None:
    """Switch new tensors to "float32" or "float64" (the default)."""
    global _default_dtype
    if name not in _DTYPES:
        raise ValueError(f"Unsupported dtype {name!r}; expected one of {sorted(_DTYPES)}")
    _default_dtype = _DTYPES[name]


def default_dtype():
    return _default_dtype


def check_finite(data: np.ndarray, what: str = "operation") -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{what} produced non-finite values")


class Tensor:
    """An immutable array that may take part in differentiation.

    Attributes:
        data: read-only numpy array
        requires_grad: whether gradients flow to this tensor
        tape: the tape recording this tensor, None for constants
        node_id: position of this tensor on its tape
        name: optional label, used for parameters
    """

    __slots__ = ("data", "requires_grad", "tape", "node_id", "name")

    def __init__(self, data, requires_grad=False, *, tape=None, node_id=None, name=None):
        array = np.array(data, dtype=_default_dtype if not _is_float(data) else None, copy=True)
        if array.dtype not in (np.float64, np.float32):
            array = array.astype(_default_dtype)
        array.setflags(write=False)
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.tape = tape
        self.node_id = node_id
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise TapeError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def __float__(self) -> float:
        return self.item()

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{grad}{label})"

    # Arithmetic sugar; the rules live in tensor_core.ops.
    def __add__(self, other):
        from tensor_core import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from tensor_core import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from tensor_core import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from tensor_core import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from tensor_core import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from tensor_core import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from tensor_core import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from tensor_core import ops
        return ops.div(other, self)

    def __neg__(self):
        from tensor_core import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from tensor_core import ops
        return ops.matmul(self, other)


def _is_float(data) -> bool:
    return isinstance(data, np.ndarray) and data.dtype in (np.float64, np.float32)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(frozen=True)
class TapeEntry:
    inputs: Tuple[Optional[int], ...]
    output: int
    backward: BackwardFn
    op: str


class Tape:
    """Append-only record of differentiable operations.

    A tape belongs to one worker; tensors from different tapes cannot be mixed.
    """

    def __init__(self):
        self.entries = []
        self.leaves: Dict[int, Tensor] = {}
        self._next_id = 0

    def _new_id(self) -> int:
        node_id = self._next_id
        self._next_id += 1
        return node_id

    def watch(self, data, name: Optional[str] = None) -> Tensor:
        """Register a leaf tensor whose gradient will be reported."""
        source = data.data if isinstance(data, Tensor) else data
        leaf = Tensor(source, requires_grad=True, tape=self, node_id=self._new_id(), name=name)
        self.leaves[leaf.node_id] = leaf
        return leaf

    def record(self, data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn, op: str) -> Tensor:
        out = Tensor(data, requires_grad=True, tape=self, node_id=self._new_id())
        inputs = tuple(p.node_id if p.requires_grad else None for p in parents)
        self.entries.append(TapeEntry(inputs=inputs, output=out.node_id, backward=backward, op=op))
        return out

    def __len__(self) -> int:
        return len(self.entries)


def common_tape(parents: Iterable[Tensor]) -> Optional[Tape]:
    tape = None
    for parent in parents:
        if not parent.requires_grad:
            continue
        if tape is None:
            tape = parent.tape
        elif parent.tape is not tape:
            raise TapeError("Cannot combine tensors recorded on different tapes")
    return tape


class Gradients:
    """Gradients of one output with respect to the leaves of a tape."""

    def __init__(self, tape: Tape, by_id: Dict[int, np.ndarray]):
        self._tape = tape
        self._by_id = by_id

    def __getitem__(self, leaf: Tensor) -> np.ndarray:
        if leaf.tape is not self._tape or leaf.node_id not in self._tape.leaves:
            raise TapeError(f"{leaf!r} is not a leaf of this tape")
        return self._by_id[leaf.node_id]

    def named(self) -> Dict[str, np.ndarray]:
        return {
            leaf.name: self._by_id[node_id]
            for node_id, leaf in self._tape.leaves.items()
            if leaf.name is not None
        }

    def __len__(self) -> int:
        return len(self._by_id)


def backward(tape: Tape, output: Tensor) -> Gradients:
    """Differentiate a scalar output with respect to every leaf on the tape.

    Args:
        tape: the tape that recorded ``output``
        output: a single-element tensor

    Returns:
        Gradients keyed by leaf; leaves that do not influence the output get zeros.

    Raises:
        TapeError: output is not a scalar, belongs to another tape, or the tape is not
            topologically ordered
    """
    if output.data.size != 1:
        raise TapeError(f"backward() needs a scalar output, got shape {output.shape}")
    if not output.requires_grad or output.tape is not tape:
        raise TapeError("Output was not recorded on this tape")

    grads: Dict[int, np.ndarray] = {output.node_id: np.ones_like(output.data)}
    for entry in reversed(tape.entries):
        if any(i is not None and i >= entry.output for i in entry.inputs):
            raise TapeError(f"Tape cycle at {entry.op} (node {entry.output})")
        if entry.output > output.node_id:
            continue
        upstream = grads.pop(entry.output, None)
        if upstream is None:
            continue
        for node_id, grad in zip(entry.inputs, entry.backward(upstream)):
            if node_id is None or grad is None:
                continue
            if node_id in grads:
                grads[node_id] = grads[node_id] + grad
            else:
                grads[node_id] = np.array(grad, copy=True)

    by_id = {}
    for node_id, leaf in tape.leaves.items():
        grad = grads.get(node_id)
        by_id[node_id] = np.zeros_like(leaf.data) if grad is None else grad.reshape(leaf.shape)
    return Gradients(tape, by_id)
