"""CPU atomic read-modify-write primitives for numba kernels.

The update pipeline needs exactly two shared atomic facilities: integer
add/subtract on the allocation counter and bitwise-OR on per-bisector
command words.  Numba does not expose CPU atomics directly, so these are
built as intrinsics that emit LLVM ``atomicrmw`` instructions.  Each
returns the value the memory held *before* the operation (fetch-op
semantics), which the reservation protocol relies on.
"""

from numba import types
from numba.core import cgutils
from numba.extending import intrinsic

__all__ = ["atomic_add", "atomic_sub", "atomic_or"]


def _atomic_rmw(op):
    @intrinsic
    def rmw(typingctx, arr, idx, val):
        if not isinstance(arr, types.Array):
            return None
        sig = arr.dtype(arr, types.intp, arr.dtype)

        def codegen(context, builder, signature, args):
            aryty = signature.args[0]
            ary = context.make_array(aryty)(context, builder, args[0])
            ptr = cgutils.get_item_pointer(context, builder, aryty, ary, [args[1]])
            return builder.atomic_rmw(op, ptr, args[2], "monotonic")

        return sig, codegen

    return rmw


atomic_add = _atomic_rmw("add")
atomic_sub = _atomic_rmw("sub")
atomic_or = _atomic_rmw("or")
