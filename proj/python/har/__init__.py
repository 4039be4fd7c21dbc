"""History attentive retrieval: attention-weighted query composition over
conversational history, exact inner-product search, and retrieval metrics.

The heavy lifting lives in the compiled extension ``har._core``; this
package re-exports its operations under stable names.
"""

from ._core import (
    HarError,
    __version__,
    aggregate_coarse,
    aggregate_fine,
    attention_weights,
    recall_at_k,
    reciprocal_rank,
    retrieval_loss,
    search,
)

__all__ = [
    "HarError",
    "__version__",
    "aggregate_coarse",
    "aggregate_fine",
    "attention_weights",
    "recall_at_k",
    "reciprocal_rank",
    "retrieval_loss",
    "search",
]
