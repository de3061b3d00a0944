"""Reference external-embedder child speaking the stdin/stdout wire protocol."""

from .framing import FrameError, decode_request, decode_response, encode_request, encode_response
from .serve import AdapterConfig, blockmean_fn, default_dim, resolve_entry, serve

__version__ = "0.1.0"
