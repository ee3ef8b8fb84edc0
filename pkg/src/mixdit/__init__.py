"""mixdit: a desk-scale unified multimodal diffusion transformer.

Text, image and video segments are encoded into one interleaved token
sequence, attended to jointly by a small dense transformer with a four-axis
rotary positional embedding, and trained with a flow-matching objective on a
procedurally generated editing/generation task suite.

All numerics run on numpy. On import the BLAS thread pool is pinned to a
single thread so that every result is bit-identical regardless of
OPENBLAS/OMP environment settings; parallelism, where used, is organized
around that fixed reduction order.
"""

from threadpoolctl import threadpool_limits

# Keep a reference so the limit stays in force for the process lifetime.
_BLAS_LIMIT = threadpool_limits(limits=1, user_api="blas")

__version__ = "0.1.0"
