import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from citegauge_bridge.service import create_app
from citegauge_bridge.tiny import build_tiny_bindings


@pytest.fixture(scope="session")
def seq2seq_bindings():
    return build_tiny_bindings(seed=0)


@pytest.fixture(scope="session")
def decoder_only_bindings():
    return build_tiny_bindings(seed=0, decoder_only_generator=True)


@pytest.fixture()
def client(seq2seq_bindings, tmp_path):
    app = create_app(seq2seq_bindings, dump_dir=str(tmp_path))
    with TestClient(app) as c:
        yield c


@pytest.fixture()
def decoder_client(decoder_only_bindings, tmp_path):
    app = create_app(decoder_only_bindings, dump_dir=str(tmp_path))
    with TestClient(app) as c:
        yield c


def read_tdmp(path):
    """Minimal reader for the .tdmp wire format (header line + f32 payload)."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        payload = np.frombuffer(fh.read(), dtype="<f4")
    dims = header["dims"]
    assert payload.size == int(np.prod(dims)), "payload size disagrees with dims"
    return header, payload.reshape(dims)
