"""Threaded protocol server.

Framing: 4-byte big-endian length + UTF-8 JSON; responses use canonical
serialization (sorted keys, compact separators). Requests on a connection
are executed by a worker pool, so responses may complete out of order;
clients correlate by request_id. Model inference runs behind a single
execution lane; echo-mode and handshake requests bypass it. A malformed
frame closes the connection with a logged reason.
"""

from __future__ import annotations

import json
import logging
import socket
import struct
import threading
from concurrent.futures import ThreadPoolExecutor

from .model import CheckpointModel, EchoModel, ModelError
from .tensors import TensorError, decode_tensor, encode_tensor

log = logging.getLogger("audiosds_bridge")

SCHEDULE_POINTS = 256


def dumps_canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def read_frame(sock):
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > 1 << 30:
        raise ValueError(f"frame of {length} bytes exceeds the 1 GiB cap")
    body = _read_exact(sock, length)
    if body is None:
        raise ValueError("connection closed mid-frame")
    return body


def _read_exact(sock, n):
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


class BridgeService:
    """Request dispatch over a loaded model."""

    def __init__(self, model):
        self.model = model
        self._lane = threading.Lock()  # single inference lane

    def handshake_payload(self):
        return {
            "latent_channels": int(self.model.latent_channels),
            "compression_factor": int(self.model.compression),
            "sample_rate": int(self.model.sample_rate),
            "schedule_table": self.model.schedule_table(SCHEDULE_POINTS),
        }

    def handle(self, request: dict) -> dict:
        request_id = request.get("request_id")
        try:
            op = request.get("op")
            payload = request.get("payload", {}) or {}
            if op == "handshake":
                body = self.handshake_payload()
            elif op == "schedule":
                body = {"schedule_table": self.model.schedule_table(SCHEDULE_POINTS)}
            elif op == "encode":
                audio = decode_tensor(payload["audio"])
                with self._lane:
                    latent = self.model.encode(audio, int(payload["sample_rate"]))
                body = {
                    "latent": encode_tensor(latent),
                    "compression_factor": int(self.model.compression),
                }
            elif op == "decode":
                latent = decode_tensor(payload["latent"])
                with self._lane:
                    audio, rate = self.model.decode(latent)
                body = {"audio": encode_tensor(audio), "sample_rate": int(rate)}
            elif op == "predict_noise":
                z = decode_tensor(payload["latent"])
                with self._lane:
                    eps = self.model.predict_noise(
                        z, float(payload["t"]), payload.get("conditioning")
                    )
                body = {"noise": encode_tensor(eps)}
            elif op == "denoise_multistep":
                z = decode_tensor(payload["latent"])
                with self._lane:
                    out = self.model.denoise_multistep(
                        z,
                        float(payload["t"]),
                        payload.get("conditioning"),
                        int(payload["n_steps"]),
                        float(payload.get("guidance_scale", 1.0)),
                    )
                body = {"latent": encode_tensor(out)}
            else:
                return _error(request_id, "protocol", f"unknown op {op!r}")
            return {"request_id": request_id, "payload": body}
        except TensorError as exc:
            return _error(request_id, "protocol", str(exc))
        except ModelError as exc:
            return _error(request_id, "backend", str(exc))
        except (KeyError, TypeError, ValueError) as exc:
            return _error(request_id, "protocol", f"malformed payload: {exc}")


def _error(request_id, code, message):
    return {"request_id": request_id, "error": {"code": code, "message": message}}


class BridgeServer:
    """Accepts connections and runs requests on a small worker pool."""

    def __init__(self, service: BridgeService, host="127.0.0.1", port=0, workers=4):
        self.service = service
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(16)
        self.address = self._sock.getsockname()
        self._pool = ThreadPoolExecutor(max_workers=workers)
        self._closing = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    def start(self):
        self._thread.start()
        return self

    def serve_forever(self):
        self.start()
        try:
            self._closing.wait()
        except KeyboardInterrupt:
            self.close()

    def _accept_loop(self):
        while not self._closing.is_set():
            try:
                conn, peer = self._sock.accept()
            except OSError:
                return
            threading.Thread(
                target=self._serve_connection, args=(conn, peer), daemon=True
            ).start()

    def _serve_connection(self, conn, peer):
        write_lock = threading.Lock()

        def respond(request):
            response = self.service.handle(request)
            frame = dumps_canonical(response)
            with write_lock:
                try:
                    conn.sendall(struct.pack(">I", len(frame)) + frame)
                except OSError:
                    pass

        with conn:
            while True:
                try:
                    frame = read_frame(conn)
                except (ValueError, OSError) as exc:
                    log.warning("closing %s: malformed frame: %s", peer, exc)
                    return
                if frame is None:
                    return
                try:
                    request = json.loads(frame)
                except json.JSONDecodeError as exc:
                    log.warning("closing %s: invalid JSON frame: %s", peer, exc)
                    return
                self._pool.submit(respond, request)

    def close(self):
        self._closing.set()
        try:
            self._sock.close()
        except OSError:
            pass
        self._pool.shutdown(wait=False)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()


def build_server(address="127.0.0.1:0", checkpoint=None, echo_mode=False,
                 workers=4) -> BridgeServer:
    host, _, port = address.rpartition(":")
    model = EchoModel() if echo_mode else CheckpointModel(checkpoint)
    return BridgeServer(BridgeService(model), host or "127.0.0.1", int(port),
                        workers=workers)
