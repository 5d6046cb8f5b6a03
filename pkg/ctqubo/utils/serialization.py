import hashlib
from typing import Any, Dict

import msgpack
import numpy as np

def serialize(data: Any) -> bytes:
    return msgpack.packb(data, use_bin_type=True)

def deserialize(data: bytes) -> Any:
    return msgpack.unpackb(data, raw=False)

def pack_array(array: np.ndarray) -> Dict[str, Any]:
    contiguous = np.ascontiguousarray(array)
    return {
        "dtype": contiguous.dtype.str,
        "shape": list(contiguous.shape),
        "data": contiguous.tobytes(),
    }

def unpack_array(packed: Dict[str, Any]) -> np.ndarray:
    array = np.frombuffer(packed["data"], dtype=np.dtype(packed["dtype"]))
    return array.reshape(packed["shape"]).copy()

def generate_stable_key(*parts: Any) -> str:
    serialized = serialize(parts)
    return hashlib.blake2b(serialized, digest_size=16).hexdigest()
