"""Float container: u64 LE header length | UTF-8 JSON header | f32 LE payload."""

import json
import struct

import numpy as np


def write_container(path, header, arrays):
    payload = b"".join(np.ascontiguousarray(a).astype("<f4").tobytes() for a in arrays)
    head = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        f.write(payload)


def read_container(path):
    data = open(path, "rb").read()
    (n,) = struct.unpack_from("<Q", data, 0)
    header = json.loads(data[8:8 + n].decode("utf-8"))
    payload = np.frombuffer(data[8 + n:], dtype="<f4")
    return header, payload
