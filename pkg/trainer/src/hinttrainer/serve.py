"""Local completion endpoint for trained students.

Speaks the same OpenAI-compatible chat-completions wire shape the pipeline's
HTTP backend expects, so a distilled student can be evaluated by the rollout
harness in base mode (no hints, no few-shot). Requests whose prompt exceeds
the model window get an explicit error response.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .model import decode, encode, generate
from .train import StudentArtifact

MAX_COMPLETION_BYTES = 160


class StudentServer:
    def __init__(self, artifact: StudentArtifact, port: int) -> None:
        model = artifact.build_model()
        # The handler serializes generation: one tiny model, many callers.
        lock = threading.Lock()

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802 - http.server API
                if not self.path.endswith("/chat/completions"):
                    self._reply(404, {"error": {"message": "unknown route"}})
                    return
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    body = json.loads(self.rfile.read(length))
                    messages = body["messages"]
                    prompt = "\n".join(m["content"] for m in messages)
                    max_tokens = int(body.get("max_tokens", 64))
                except (KeyError, ValueError, TypeError) as exc:
                    self._reply(400, {"error": {"message": f"bad request: {exc}"}})
                    return

                prompt_ids = encode(prompt)
                window = model.spec.max_positions
                if len(prompt_ids) >= window:
                    self._reply(
                        400,
                        {
                            "error": {
                                "message": (
                                    f"prompt of {len(prompt_ids)} tokens exceeds "
                                    f"the {window}-token window"
                                )
                            }
                        },
                    )
                    return

                budget = min(max_tokens, MAX_COMPLETION_BYTES, window - len(prompt_ids))
                with lock:
                    emitted = generate(model, prompt_ids, budget)
                self._reply(
                    200,
                    {
                        "object": "chat.completion",
                        "model": "hinttrainer-student",
                        "choices": [
                            {
                                "index": 0,
                                "message": {"role": "assistant", "content": decode(emitted)},
                                "finish_reason": "stop",
                            }
                        ],
                        "usage": {
                            "prompt_tokens": len(prompt_ids),
                            "completion_tokens": len(emitted),
                        },
                    },
                )

            def _reply(self, status: int, payload: dict) -> None:
                raw = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args) -> None:
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.port}/v1"

    def start(self) -> "StudentServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()


def serve_student(artifact: StudentArtifact, port: int = 0) -> StudentServer:
    """Start serving; port 0 picks a free one. Returns the running server."""
    return StudentServer(artifact, port).start()
