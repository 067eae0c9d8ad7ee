"""Remote-model sidecar for the address matcher.

Implements the wire protocol the matcher's service speaks:

    POST /embed  {"texts": [...]}       -> {"vectors": [[512 floats], ...]}
    POST /score  {"pairs": [[a, b]...]} -> {"probabilities": [p, ...]}

Two model bundles are provided: a deterministic fallback that needs no
downloads (used by the conformance tests) and an optional transformer bundle
wrapping a pre-trained multilingual sentence encoder.
"""
from .model import DIM, DeterministicBundle, ModelBundle, load_bundle
from .app import create_app

__all__ = ["DIM", "ModelBundle", "DeterministicBundle", "load_bundle",
           "create_app"]
__version__ = "0.1.0"
