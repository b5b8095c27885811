"""Writer for the .tdmp tensor-dump format.

One JSON header line {"kind", "dims", "token_spans"} followed by a
row-major little-endian float32 payload of exactly prod(dims) values.
This mirrors the consumer-side format definition; byte spans index the
UTF-8 encoding of the prompt.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def write_dump(kind: str, values: np.ndarray, token_spans, path, undefined: bool = False) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = np.ascontiguousarray(values, dtype="<f4")
    header = {
        "kind": kind,
        "dims": list(payload.shape),
        "token_spans": [list(span) for span in token_spans],
    }
    if undefined:
        header["undefined"] = True
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload.tobytes())
    return str(path)


def char_spans_to_byte_spans(text: str, char_spans) -> list[tuple[int, int]]:
    """Convert tokenizer character offsets to UTF-8 byte offsets."""
    # prefix-encode once; cumulative byte length per char position
    cum = [0]
    for ch in text:
        cum.append(cum[-1] + len(ch.encode("utf-8")))
    return [(cum[s], cum[e]) for s, e in char_spans]
