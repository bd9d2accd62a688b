"""Stdio server speaking the dare-gen/1 protocol.

One JSON request per line on stdin, one JSON response per line on stdout;
any failure is reported as {"ok": false, "error": ...} and the loop keeps
serving. The process exits when stdin closes.
"""

from __future__ import annotations

import json
import logging
import sys

from .backend import AdapterSession, BackendError, Settings

PROTOCOL_VERSION = "dare-gen/1"

log = logging.getLogger(__name__)


def handle(request: dict, state: dict) -> dict:
    op = request.get("op")
    if op == "hello":
        if state.get("session") is None:
            state["session"] = AdapterSession(Settings.from_env())
        return {
            "ok": True,
            "protocol": PROTOCOL_VERSION,
            "backend": state["session"].describe(),
        }
    session: AdapterSession | None = state.get("session")
    if session is None:
        # Tolerate hosts that skip the handshake.
        session = state["session"] = AdapterSession(Settings.from_env())
    if op == "fit_base":
        session.fit_base(request["corpus"])
        return {"ok": True}
    if op == "adapt":
        adapter_id = session.adapt(request["class"], request["corpus"])
        return {"ok": True, "adapter_id": adapter_id}
    if op == "sample":
        samples = session.sample(
            adapter_id=request["adapter_id"],
            n=request["n"],
            temperature=request["temperature"],
            top_k=request["top_k"],
            max_tokens=request["max_tokens"],
            seed=request["seed"],
        )
        return {"ok": True, "samples": samples}
    if op == "loglik":
        value = session.log_likelihood(request["adapter_id"], request["corpus"])
        return {"ok": True, "value": value}
    return {"ok": False, "error": f"unknown op {op!r}"}


def serve(stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    state: dict = {}
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            response = {"ok": False, "error": f"malformed JSON request: {exc.msg}"}
        else:
            try:
                response = handle(request, state)
            except (BackendError, KeyError, TypeError, ValueError) as exc:
                response = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
            except Exception as exc:  # never crash the session on a bad request
                log.exception("unexpected failure")
                response = {"ok": False, "error": f"internal error: {type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


def main() -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    serve()
    return 0


if __name__ == "__main__":
    sys.exit(main())
