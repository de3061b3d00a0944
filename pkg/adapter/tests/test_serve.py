import json
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from embed_adapter.framing import encode_request
from embed_adapter.serve import AdapterConfig, blockmean_fn, default_dim, resolve_entry

TESTS_DIR = Path(__file__).parent


def spawn(entry, dim=None, cwd=None):
    cmd = [sys.executable, "-m", "embed_adapter", "--entry", entry]
    if dim is not None:
        cmd += ["--dim", str(dim)]
    return subprocess.Popen(
        cmd,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        cwd=cwd or TESTS_DIR,
    )


def handshake(proc):
    proc.stdin.write(b'{"proto": 1}\n')
    proc.stdin.flush()
    reply = json.loads(proc.stdout.readline())
    assert reply["proto"] == 1
    return reply["dim"]


def roundtrip(proc, req_id, img, dim):
    proc.stdin.write(encode_request(req_id, img))
    proc.stdin.flush()
    resp = proc.stdout.read(8 + 8 * dim)
    (rid,) = struct.unpack_from("<Q", resp)
    assert rid == req_id
    return np.frombuffer(resp, dtype="<f8", offset=8)


class TestServeLoop:
    def test_handshake_then_close_exits_zero(self):
        proc = spawn("builtin:blockmean:2")
        assert handshake(proc) == 12
        proc.stdin.close()
        assert proc.wait(timeout=10) == 0

    def test_blockmean_matches_local_reference(self):
        rng = np.random.default_rng(1)
        proc = spawn("builtin:blockmean:2")
        dim = handshake(proc)
        ref = blockmean_fn(2)
        for i in range(50):
            img = rng.integers(0, 256, (int(rng.integers(2, 10)), int(rng.integers(2, 10)), 3), dtype=np.uint8)
            got = roundtrip(proc, i, img, dim)
            assert np.array_equal(got, ref(img))
        proc.stdin.close()
        assert proc.wait(timeout=10) == 0

    def test_responses_in_request_order(self):
        rng = np.random.default_rng(2)
        proc = spawn("builtin:blockmean:2")
        dim = handshake(proc)
        imgs = [rng.integers(0, 256, (4, 4, 3), dtype=np.uint8) for _ in range(20)]
        for i, img in enumerate(imgs):
            proc.stdin.write(encode_request(i, img))
        proc.stdin.flush()
        ref = blockmean_fn(2)
        for i, img in enumerate(imgs):
            resp = proc.stdout.read(8 + 8 * dim)
            (rid,) = struct.unpack_from("<Q", resp)
            assert rid == i
            assert np.array_equal(np.frombuffer(resp, dtype="<f8", offset=8), ref(img))
        proc.stdin.close()
        assert proc.wait(timeout=10) == 0

    def test_module_function_entry(self):
        proc = spawn("entry_fixtures:mean_and_max", dim=2)
        dim = handshake(proc)
        img = np.full((3, 3, 1), 10, dtype=np.uint8)
        got = roundtrip(proc, 0, img, dim)
        assert got.tolist() == [10.0, 10.0]
        proc.stdin.close()
        assert proc.wait(timeout=10) == 0

    def test_wrong_length_exits_nonzero_before_response(self):
        proc = spawn("entry_fixtures:wrong_length", dim=2)
        handshake(proc)
        proc.stdin.write(encode_request(0, np.zeros((2, 2, 1), dtype=np.uint8)))
        proc.stdin.flush()
        out, err = proc.communicate(timeout=10)
        assert proc.returncode != 0
        assert out == b""
        assert b"declared dim" in err

    def test_wrapped_exception_exits_nonzero(self):
        proc = spawn("entry_fixtures:explodes", dim=1)
        handshake(proc)
        proc.stdin.write(encode_request(0, np.zeros((2, 2, 1), dtype=np.uint8)))
        proc.stdin.flush()
        out, err = proc.communicate(timeout=10)
        assert proc.returncode != 0 and out == b"" and b"fell over" in err

    def test_desync_truncated_header(self):
        proc = spawn("builtin:blockmean:2")
        handshake(proc)
        proc.stdin.write(b"\x01\x02\x03")
        proc.stdin.close()
        err = proc.stderr.read()
        assert proc.wait(timeout=10) != 0 and b"desync" in err

    def test_bad_handshake_rejected(self):
        proc = spawn("builtin:blockmean:2")
        proc.stdin.write(b'{"proto": 99}\n')
        proc.stdin.close()
        proc.stderr.read()
        assert proc.wait(timeout=10) != 0


class TestConfig:
    def test_default_dim_blockmean(self):
        assert default_dim("builtin:blockmean:2") == 12
        assert default_dim("builtin:blockmean:1") == 3
        assert default_dim("some.module:fn") is None

    def test_resolve_rejects_bad_entries(self):
        with pytest.raises(ValueError):
            resolve_entry("not-an-entry")
        with pytest.raises(ValueError):
            resolve_entry("builtin:blockmean:0")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdapterConfig("builtin:blockmean:2", 0)

    def test_missing_dim_is_usage_error(self):
        proc = spawn("entry_fixtures:mean_and_max")
        proc.communicate(timeout=10)
        assert proc.returncode != 0
