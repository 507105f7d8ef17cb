import json
import socket
import struct
import threading
from pathlib import Path

import numpy as np
import pytest

from audiosds_bridge.model import EchoModel, CheckpointModel
from audiosds_bridge.server import BridgeServer, BridgeService, dumps_canonical
from audiosds_bridge.tensors import decode_tensor, encode_tensor

FIXTURES = Path(__file__).parent / "fixtures"
SHARED_WIRE = Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "wire"


def echo_server():
    return BridgeServer(BridgeService(EchoModel()))


def send_frames(address, frames):
    out = []
    with socket.create_connection(address, 10) as sock:
        for frame in frames:
            sock.sendall(struct.pack(">I", len(frame)) + frame)
            header = _read_exact(sock, 4)
            (length,) = struct.unpack(">I", header)
            out.append(_read_exact(sock, length))
    return out


def _read_exact(sock, n):
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("closed early")
        buf += chunk
    return bytes(buf)


def _read_frames(blob):
    frames, off = [], 0
    while off < len(blob):
        (length,) = struct.unpack_from(">I", blob, off)
        off += 4
        frames.append(blob[off : off + length])
        off += length
    return frames


class TestEchoMode:
    def test_predict_noise_round_trips_bit_exactly(self):
        rng = np.random.default_rng(0)
        tensor = encode_tensor(rng.standard_normal((3, 5)))
        request = dumps_canonical({
            "op": "predict_noise", "request_id": 42,
            "payload": {"latent": tensor, "t": 0.5, "conditioning": None},
        })
        with echo_server() as server:
            (raw,) = send_frames(server.address, [request])
        response = json.loads(raw)
        assert response["request_id"] == 42
        assert response["payload"]["noise"] == tensor  # byte-identical payload

    def test_handshake_reports_echo_codec(self):
        request = dumps_canonical({"op": "handshake", "request_id": 1, "payload": {}})
        with echo_server() as server:
            (raw,) = send_frames(server.address, [request])
        body = json.loads(raw)["payload"]
        assert body["latent_channels"] == 2
        assert body["compression_factor"] == 1
        assert body["sample_rate"] == 44100
        assert len(body["schedule_table"]) == 256

    def test_shared_golden_conformance_fixture(self):
        # the same byte streams that gate the toolkit's loopback server
        requests = _read_frames((SHARED_WIRE / "requests.bin").read_bytes())
        expected = _read_frames((SHARED_WIRE / "responses.bin").read_bytes())
        with echo_server() as server:
            responses = send_frames(server.address, requests)
        assert responses == expected


class TestProtocolErrors:
    def test_unknown_op_gets_error_envelope(self):
        request = dumps_canonical({"op": "mystify", "request_id": 7, "payload": {}})
        with echo_server() as server:
            (raw,) = send_frames(server.address, [request])
        response = json.loads(raw)
        assert response["request_id"] == 7
        assert response["error"]["code"] == "protocol"

    def test_malformed_frame_closes_connection(self):
        with echo_server() as server:
            with socket.create_connection(server.address, 5) as sock:
                sock.sendall(struct.pack(">I", 1 << 31))  # over the frame cap
                assert sock.recv(1) == b""  # server hung up

    def test_invalid_json_closes_connection(self):
        with echo_server() as server:
            with socket.create_connection(server.address, 5) as sock:
                body = b"{not json"
                sock.sendall(struct.pack(">I", len(body)) + body)
                assert sock.recv(1) == b""


class TestConcurrency:
    def test_interleaved_requests_matched_by_id(self):
        model = CheckpointModel(FIXTURES / "tiny_prior.ckpt")
        rng = np.random.default_rng(1)
        z = rng.standard_normal((10, 32))
        slow = dumps_canonical({
            "op": "denoise_multistep", "request_id": "slow",
            "payload": {"latent": encode_tensor(z), "t": 0.9,
                        "conditioning": {"class_id": 0}, "n_steps": 50,
                        "guidance_scale": 2.0},
        })
        fast = dumps_canonical({"op": "handshake", "request_id": "fast",
                                "payload": {}})
        with BridgeServer(BridgeService(model)) as server:
            with socket.create_connection(server.address, 20) as sock:
                sock.sendall(struct.pack(">I", len(slow)) + slow)
                sock.sendall(struct.pack(">I", len(fast)) + fast)
                got = []
                for _ in range(2):
                    header = _read_exact(sock, 4)
                    (length,) = struct.unpack(">I", header)
                    got.append(json.loads(_read_exact(sock, length)))
        ids = [g["request_id"] for g in got]
        assert sorted(ids, key=str) == ["fast", "slow"]
        # the cheap handshake overtakes the 50-step inference
        assert ids[0] == "fast"
        by_id = {g["request_id"]: g for g in got}
        assert "payload" in by_id["slow"]

    def test_deterministic_inference_across_calls(self):
        model = CheckpointModel(FIXTURES / "tiny_prior.ckpt")
        rng = np.random.default_rng(2)
        z = rng.standard_normal((10, 32))
        request = dumps_canonical({
            "op": "predict_noise", "request_id": 1,
            "payload": {"latent": encode_tensor(z), "t": 0.4,
                        "conditioning": {"class_id": 1}},
        })
        with BridgeServer(BridgeService(model)) as server:
            a, b = send_frames(server.address, [request, request])
        assert json.loads(a)["payload"] == json.loads(b)["payload"]
