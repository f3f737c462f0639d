"""Run the app under uvicorn on a background thread."""

from __future__ import annotations

import logging
import socket
import threading
import time

import uvicorn

from ..errors import BindFailure
from ..runtime import LatestFrameSlot
from .app import create_app

log = logging.getLogger(__name__)

# Kernel send buffer for every connection. Autotuning would let the kernel
# queue several megabytes of stale frames for a slow /stream client; a small
# fixed buffer makes the transport apply backpressure after about one frame,
# so the next part sent is the newest frame. Accepted sockets inherit it.
SEND_BUFFER_BYTES = 256 * 1024


def parse_addr(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


class ServerHandle:
    def __init__(self, server: uvicorn.Server, thread: threading.Thread, sock: socket.socket, slot: LatestFrameSlot):
        self.server = server
        self.thread = thread
        self.sock = sock
        self.slot = slot

    @property
    def address(self) -> tuple[str, int]:
        return self.sock.getsockname()[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def stop(self, timeout: float = 5.0) -> None:
        self.slot.close()  # ends open /stream responses
        self.server.should_exit = True
        self.thread.join(timeout)
        self.sock.close()


def serve_stream(slot: LatestFrameSlot, addr: str = "127.0.0.1:8000", app=None, ready_timeout: float = 10.0) -> ServerHandle:
    """Bind ``addr`` (port 0 picks a free port) and serve until ``stop``.

    Binding happens before this returns, so an unusable address raises
    BindFailure here instead of inside the server thread.
    """
    host, port = parse_addr(addr)
    try:
        sock = socket.create_server((host, port), reuse_port=False)
    except OSError as exc:
        raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_SNDBUF, SEND_BUFFER_BYTES)
    app = app or create_app(slot)
    config = uvicorn.Config(app, log_level="warning", lifespan="off", timeout_graceful_shutdown=2)
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, kwargs={"sockets": [sock]}, daemon=True, name="gaze-stream")
    thread.start()
    deadline = time.monotonic() + ready_timeout
    while not server.started:
        if not thread.is_alive() or time.monotonic() > deadline:
            sock.close()
            raise BindFailure(f"server on {host}:{port} failed to start")
        time.sleep(0.01)
    log.info("serving on http://%s:%d", *sock.getsockname()[:2])
    return ServerHandle(server, thread, sock, slot)
