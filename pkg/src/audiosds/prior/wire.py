"""Wire protocol for remote prior backends, plus a loopback test server.

Framing: each message is a 4-byte big-endian unsigned length followed by
that many bytes of UTF-8 JSON. Requests carry {"op", "request_id",
"payload"}; responses carry {"request_id", "payload"} or {"request_id",
"error": {"code", "message"}}. Tensors are {"shape": [...], "dtype":
"f32", "data": base64 of little-endian bytes}. Responses are serialized
canonically (sorted keys, no whitespace) so byte-level golden fixtures
are stable.

Ops:
    handshake        {} -> {latent_channels, compression_factor, sample_rate,
                            schedule_table: [[t, alpha, sigma], ...]}
    schedule         {} -> {schedule_table}
    encode           {audio, sample_rate} -> {latent, compression_factor}
    decode           {latent} -> {audio, sample_rate}
    predict_noise    {latent, t, conditioning} -> {noise}
    denoise_multistep {latent, t, conditioning, n_steps, guidance_scale}
                     -> {latent}

Conditioning is null, {"prompt": str}, or {"class_id": int}.
"""

from __future__ import annotations

import base64
import json
import socket
import struct
import threading

import numpy as np

from ..errors import (
    AudioSDSError,
    CapabilityError,
    InvalidInputError,
    ProtocolError,
    TransportError,
)
from ..waveform import Waveform
from .backends import PriorBackend
from .schedule import CosineSchedule, TableSchedule
from .types import Conditioning, Latent

SCHEDULE_TABLE_POINTS = 256


# -- tensors and framing ------------------------------------------------------


def encode_tensor(arr: np.ndarray) -> dict:
    arr = np.asarray(arr)
    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return {
        "shape": [int(s) for s in arr.shape],
        "dtype": "f32",
        "data": base64.b64encode(data).decode("ascii"),
    }


def decode_tensor(obj) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in obj["shape"])
        if obj["dtype"] != "f32":
            raise ProtocolError(f"unsupported tensor dtype {obj['dtype']!r}")
        raw = base64.b64decode(obj["data"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed tensor payload: {exc}") from exc
    count = int(np.prod(shape)) if shape else 1
    if len(raw) != 4 * count:
        raise ProtocolError(
            f"tensor payload holds {len(raw)} bytes, expected {4 * count}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def dumps_canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_frame(sock, payload: bytes) -> None:
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def read_frame(sock) -> bytes | None:
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > 1 << 30:
        raise ProtocolError(f"frame of {length} bytes exceeds the 1 GiB cap")
    body = _read_exact(sock, length)
    if body is None:
        raise ProtocolError("connection closed mid-frame")
    return body


def _read_exact(sock, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None if not buf else None
        buf += chunk
    return bytes(buf)


# -- server ------------------------------------------------------------------


class EchoBackend(PriorBackend):
    """Protocol-identity backend: predictions echo their input tensor."""

    has_encode_vjp = False
    has_decode_vjp = False
    sample_rate = 44100
    compression = 1
    latent_channels = 2

    def predict_noise(self, z: Latent, t: float, cond) -> np.ndarray:
        return z.values.copy()

    def encode(self, x: Waveform) -> Latent:
        return Latent(x.samples.copy(), compression=1)

    def decode(self, h: Latent) -> Waveform:
        return Waveform(h.values.copy(), self.sample_rate)

    def denoise_multistep(self, z, t, cond, n_steps, guidance_scale=1.0) -> Latent:
        return z.like(z.values.copy())


def handle_request(backend, request: dict) -> dict:
    """Dispatch one decoded request envelope to a backend; returns the response."""
    request_id = request.get("request_id")
    try:
        op = request.get("op")
        payload = request.get("payload", {}) or {}
        if op == "handshake" or op == "schedule":
            table = backend.schedule.table(SCHEDULE_TABLE_POINTS)
            body = {"schedule_table": table}
            if op == "handshake":
                body.update(
                    {
                        "latent_channels": int(getattr(backend, "latent_channels", 2)),
                        "compression_factor": int(getattr(backend, "compression", 1)),
                        "sample_rate": int(getattr(backend, "sample_rate", 0)),
                    }
                )
        elif op == "encode":
            audio = decode_tensor(payload["audio"])
            w = Waveform(audio, int(payload["sample_rate"]))
            h = backend.encode(w)
            body = {
                "latent": encode_tensor(h.values),
                "compression_factor": int(h.compression),
            }
        elif op == "decode":
            h = Latent(decode_tensor(payload["latent"]),
                       compression=int(getattr(backend, "compression", 1)))
            w = backend.decode(h)
            body = {"audio": encode_tensor(w.samples), "sample_rate": w.sample_rate}
        elif op == "predict_noise":
            z = Latent(decode_tensor(payload["latent"]))
            cond = Conditioning.from_json(payload.get("conditioning"))
            eps = backend.predict_noise(z, float(payload["t"]), cond)
            body = {"noise": encode_tensor(eps)}
        elif op == "denoise_multistep":
            z = Latent(decode_tensor(payload["latent"]))
            cond = Conditioning.from_json(payload.get("conditioning"))
            out = backend.denoise_multistep(
                z,
                float(payload["t"]),
                cond,
                int(payload["n_steps"]),
                float(payload.get("guidance_scale", 1.0)),
            )
            body = {"latent": encode_tensor(out.values)}
        else:
            raise ProtocolError(f"unknown op {op!r}")
        return {"request_id": request_id, "payload": body}
    except AudioSDSError as exc:
        code = {
            ProtocolError: "protocol",
            InvalidInputError: "invalid-input",
            CapabilityError: "capability",
        }.get(type(exc), "backend")
        return {"request_id": request_id, "error": {"code": code, "message": str(exc)}}
    except (KeyError, TypeError, ValueError) as exc:
        return {
            "request_id": request_id,
            "error": {"code": "protocol", "message": f"malformed payload: {exc}"},
        }


class LoopbackPriorServer:
    """Threaded socket server exposing any in-process backend over the protocol.

    One thread per connection; frames on a connection are answered in
    order, each response tagged with the request's id. Malformed frames
    close the connection.
    """

    def __init__(self, backend, host: str = "127.0.0.1", port: int = 0):
        self.backend = backend
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(8)
        self.address = self._sock.getsockname()
        self._closing = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    def start(self) -> "LoopbackPriorServer":
        self._thread.start()
        return self

    def _accept_loop(self):
        while not self._closing.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            threading.Thread(
                target=self._serve_connection, args=(conn,), daemon=True
            ).start()

    def _serve_connection(self, conn):
        with conn:
            while True:
                try:
                    frame = read_frame(conn)
                except (ProtocolError, OSError):
                    return  # malformed framing: drop the connection
                if frame is None:
                    return
                try:
                    request = json.loads(frame)
                except json.JSONDecodeError:
                    return
                response = handle_request(self.backend, request)
                try:
                    write_frame(conn, dumps_canonical(response))
                except OSError:
                    return

    def close(self):
        self._closing.set()
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()


# -- client backend ------------------------------------------------------------


class BridgeBackend(PriorBackend):
    """Remote prior spoken to over the wire protocol.

    The handshake's schedule table becomes the local schedule. The wire
    carries no derivative operations, so both VJPs are unavailable.
    """

    has_encode_vjp = False
    has_decode_vjp = False

    def __init__(self, address, timeout: float = 60.0):
        if isinstance(address, str):
            host, _, port = address.rpartition(":")
            address = (host or "127.0.0.1", int(port))
        self._address = tuple(address)
        self._timeout = timeout
        self._sock = None
        self._lock = threading.Lock()
        self._next_id = 0
        self.schedule = CosineSchedule()  # replaced by the handshake
        info = self.handshake()
        self.latent_channels = info["latent_channels"]
        self.compression = info["compression_factor"]
        self.sample_rate = info["sample_rate"]
        self.schedule = TableSchedule(info["schedule_table"])

    def _connect(self):
        if self._sock is None:
            try:
                self._sock = socket.create_connection(self._address, self._timeout)
            except OSError as exc:
                raise TransportError(
                    f"cannot reach prior bridge at {self._address[0]}:{self._address[1]}: {exc}"
                ) from exc
        return self._sock

    def _call(self, op: str, payload: dict) -> dict:
        with self._lock:
            sock = self._connect()
            self._next_id += 1
            request_id = self._next_id
            frame = dumps_canonical(
                {"op": op, "request_id": request_id, "payload": payload}
            )
            try:
                write_frame(sock, frame)
                raw = read_frame(sock)
            except OSError as exc:
                self._sock = None
                raise TransportError(f"bridge connection failed during {op}: {exc}") from exc
            if raw is None:
                self._sock = None
                raise TransportError(f"bridge closed the connection during {op}")
            try:
                response = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"bridge sent invalid JSON: {exc}") from exc
            if response.get("request_id") != request_id:
                raise ProtocolError(
                    f"response id {response.get('request_id')} does not match {request_id}"
                )
            if "error" in response:
                err = response["error"]
                raise ProtocolError(
                    f"bridge error for {op}: [{err.get('code')}] {err.get('message')}"
                )
            return response["payload"]

    def handshake(self) -> dict:
        return self._call("handshake", {})

    def predict_noise(self, z: Latent, t: float, cond) -> np.ndarray:
        payload = {
            "latent": encode_tensor(z.values),
            "t": float(t),
            "conditioning": cond.to_json() if cond is not None else None,
        }
        return decode_tensor(self._call("predict_noise", payload)["noise"])

    def encode(self, x: Waveform) -> Latent:
        payload = {"audio": encode_tensor(x.samples), "sample_rate": x.sample_rate}
        body = self._call("encode", payload)
        return Latent(decode_tensor(body["latent"]), body["compression_factor"])

    def decode(self, h: Latent) -> Waveform:
        body = self._call("decode", {"latent": encode_tensor(h.values)})
        return Waveform(decode_tensor(body["audio"]), int(body["sample_rate"]))

    def denoise_multistep(self, z, t, cond, n_steps, guidance_scale=1.0) -> Latent:
        payload = {
            "latent": encode_tensor(z.values),
            "t": float(t),
            "conditioning": cond.to_json() if cond is not None else None,
            "n_steps": int(n_steps),
            "guidance_scale": float(guidance_scale),
        }
        body = self._call("denoise_multistep", payload)
        return Latent(decode_tensor(body["latent"]), z.compression)

    def close(self):
        with self._lock:
            if self._sock is not None:
                try:
                    self._sock.close()
                finally:
                    self._sock = None
