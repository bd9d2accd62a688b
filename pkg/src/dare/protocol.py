"""Host side of the "dare-gen/1" external generator protocol.

The protocol is newline-delimited JSON over a child process's stdin/stdout,
one request per response, strictly ordered:

    -> {"op": "hello"}
    <- {"ok": true, "protocol": "dare-gen/1"}
    -> {"op": "fit_base", "corpus": [[tokens], ...]}
    <- {"ok": true}
    -> {"op": "adapt", "class": "<label>", "corpus": [[tokens], ...]}
    <- {"ok": true, "adapter_id": "<id>"}
    -> {"op": "sample", "adapter_id": "<id>", "n": K, "temperature": T,
        "top_k": k, "max_tokens": M, "seed": S}
    <- {"ok": true, "samples": [[tokens], ...]}
    -> {"op": "loglik", "adapter_id": "<id>", "corpus": [[tokens], ...]}
    <- {"ok": true, "value": float}

Any failure is reported as {"ok": false, "error": "<message>"}. Running this
module (``python -m dare.protocol``) serves the built-in n-gram backend over
the same protocol, which doubles as a loopback test target and a reference
server implementation.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import sys
import threading

from .generator import BuiltinGenerator, GeneratorParams, log_likelihood

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "dare-gen/1"
DEFAULT_TIMEOUT = 300.0


class ProtocolError(RuntimeError):
    """Any failure of the external generator session."""


class ExternalGeneratorSession:
    """Drives one external generator process; mirrors the backend surface.

    One session per child process; concurrent pipelines should each spawn
    their own session. Use as a context manager to guarantee the child is
    torn down.
    """

    def __init__(self, command: str | list[str], timeout: float = DEFAULT_TIMEOUT):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"could not launch generator command {self.command}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._stderr_tail: list[str] = []
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()
        self._handshake()

    def _pump_stdout(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _pump_stderr(self):
        for line in self._proc.stderr:
            self._stderr_tail.append(line.rstrip("\n"))
            del self._stderr_tail[:-20]

    def _stderr_hint(self) -> str:
        return f" (stderr: {' | '.join(self._stderr_tail)})" if self._stderr_tail else ""

    def _request(self, payload: dict) -> dict:
        op = payload.get("op", "?")
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise ProtocolError(f"generator process gone while sending {op!r}{self._stderr_hint()}") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise ProtocolError(f"timed out after {self.timeout}s waiting for response to {op!r}")
        if line is None:
            raise ProtocolError(f"generator process exited during {op!r}{self._stderr_hint()}")
        try:
            response = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"malformed response to {op!r}: {line.strip()!r}")
        if not isinstance(response, dict) or "ok" not in response:
            raise ProtocolError(f"malformed response to {op!r}: {line.strip()!r}")
        if not response["ok"]:
            raise ProtocolError(f"generator error for {op!r}: {response.get('error', 'unspecified')}")
        return response

    def _handshake(self):
        response = self._request({"op": "hello"})
        protocol = response.get("protocol")
        if protocol != PROTOCOL_VERSION:
            self.close()
            raise ProtocolError(f"protocol mismatch: expected {PROTOCOL_VERSION!r}, got {protocol!r}")
        self._hello = response

    # -- generator backend surface ------------------------------------------------

    def fit_base(self, corpus: list[list[str]]) -> None:
        self._request({"op": "fit_base", "corpus": corpus})

    def adapt(self, label: str, corpus: list[list[str]]) -> "ExternalSampleSource":
        response = self._request({"op": "adapt", "class": label, "corpus": corpus})
        adapter_id = response.get("adapter_id")
        if not isinstance(adapter_id, str):
            raise ProtocolError(f"adapt response missing adapter_id: {response!r}")
        return ExternalSampleSource(self, adapter_id)

    def sample(self, adapter_id: str, n: int, seed: int, params: GeneratorParams) -> list[list[str]]:
        response = self._request(
            {
                "op": "sample",
                "adapter_id": adapter_id,
                "n": n,
                "temperature": params.temperature,
                "top_k": params.top_k,
                "max_tokens": params.max_tokens,
                "seed": seed,
            }
        )
        samples = response.get("samples")
        if not isinstance(samples, list) or not all(
            isinstance(s, list) and all(isinstance(t, str) for t in s) for s in samples
        ):
            raise ProtocolError(f"malformed samples in response: {response!r}")
        return samples

    def loglik(self, adapter_id: str, corpus: list[list[str]]) -> float:
        response = self._request({"op": "loglik", "adapter_id": adapter_id, "corpus": corpus})
        value = response.get("value")
        if not isinstance(value, (int, float)):
            raise ProtocolError(f"malformed loglik value in response: {response!r}")
        return float(value)

    def describe(self) -> str:
        return f"external({' '.join(self.command)})"

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class ExternalSampleSource:
    """A per-class adapter handle usable wherever a sample source is expected."""

    def __init__(self, session: ExternalGeneratorSession, adapter_id: str):
        self.session = session
        self.adapter_id = adapter_id

    def sample_batch(self, n: int, seed: int, params: GeneratorParams) -> list[list[str]]:
        return self.session.sample(self.adapter_id, n, seed, params)

    def log_likelihood(self, corpus: list[list[str]]) -> float:
        return self.session.loglik(self.adapter_id, corpus)


def serve_builtin(stdin=None, stdout=None) -> None:
    """Serve the built-in n-gram backend over the protocol until EOF."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    backend = BuiltinGenerator()
    adapters: dict[str, object] = {}

    def respond(payload: dict):
        stdout.write(json.dumps(payload) + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
            op = request.get("op")
            if op == "hello":
                respond({"ok": True, "protocol": PROTOCOL_VERSION, "backend": backend.describe()})
            elif op == "fit_base":
                backend.fit_base(request["corpus"])
                respond({"ok": True})
            elif op == "adapt":
                adapter_id = f"adapter-{len(adapters)}"
                adapters[adapter_id] = backend.adapt(request["class"], request["corpus"])
                respond({"ok": True, "adapter_id": adapter_id})
            elif op == "sample":
                source = adapters[request["adapter_id"]]
                params = GeneratorParams(
                    temperature=request["temperature"],
                    top_k=request["top_k"],
                    max_tokens=request["max_tokens"],
                    min_tokens=1,
                    seed=request["seed"],
                )
                samples = source.sample_batch(request["n"], request["seed"], params)
                respond({"ok": True, "samples": samples})
            elif op == "loglik":
                source = adapters[request["adapter_id"]]
                respond({"ok": True, "value": log_likelihood(source.model, request["corpus"])})
            else:
                respond({"ok": False, "error": f"unknown op {op!r}"})
        except KeyError as exc:
            respond({"ok": False, "error": f"missing or unknown field/adapter: {exc}"})
        except json.JSONDecodeError as exc:
            respond({"ok": False, "error": f"malformed JSON request: {exc.msg}"})
        except Exception as exc:  # keep serving: protocol errors must not kill the process
            respond({"ok": False, "error": f"{type(exc).__name__}: {exc}"})


class ConformanceFailure(AssertionError):
    """A generator server violated the protocol contract."""


def check_conformance(
    command: str | list[str],
    base_corpus: list[list[str]] | None = None,
    class_corpus: list[list[str]] | None = None,
    label: str = "induce",
    timeout: float = DEFAULT_TIMEOUT,
) -> dict:
    """Drive a generator server through the whole protocol surface.

    Covers the handshake, base fitting, adaptation, sample shape and greedy
    determinism, log-likelihood, and the error paths (unknown op, unknown
    adapter id, malformed JSON). Raises ConformanceFailure on the first
    violation; returns a summary of what was exercised.
    """
    base_corpus = base_corpus or [
        ["ENTITY_A", "therapy", "caused", "severe", "ENTITY_B", "in", "adult", "patients", "."],
        ["ENTITY_A", "and", "ENTITY_B", "were", "recorded", "in", "the", "cohort", "."],
    ]
    class_corpus = class_corpus or [
        ["ENTITY_A", "therapy", "caused", "severe", "ENTITY_B", "in", "adult", "patients", "."],
        ["exposure", "to", "ENTITY_A", "triggered", "ENTITY_B", "symptoms", "within", "days", "."],
    ]

    argv = shlex.split(command) if isinstance(command, str) else list(command)
    proc = subprocess.Popen(
        argv,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
        bufsize=1,
    )

    def exchange(raw: str) -> dict:
        proc.stdin.write(raw + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            raise ConformanceFailure(f"server closed its output after: {raw!r}")
        try:
            response = json.loads(line)
        except json.JSONDecodeError:
            raise ConformanceFailure(f"response is not JSON: {line!r}")
        if not isinstance(response, dict) or "ok" not in response:
            raise ConformanceFailure(f"response missing 'ok': {response!r}")
        return response

    def request(payload: dict) -> dict:
        return exchange(json.dumps(payload))

    def expect_ok(payload: dict) -> dict:
        response = request(payload)
        if not response["ok"]:
            raise ConformanceFailure(f"{payload['op']} failed: {response.get('error')!r}")
        return response

    def expect_error(raw_or_payload) -> dict:
        response = (
            exchange(raw_or_payload) if isinstance(raw_or_payload, str) else request(raw_or_payload)
        )
        if response["ok"] or "error" not in response:
            raise ConformanceFailure(f"expected an error response, got: {response!r}")
        return response

    try:
        hello = expect_ok({"op": "hello"})
        if hello.get("protocol") != PROTOCOL_VERSION:
            raise ConformanceFailure(f"bad protocol id: {hello.get('protocol')!r}")

        expect_ok({"op": "fit_base", "corpus": base_corpus})
        adapter_id = expect_ok({"op": "adapt", "class": label, "corpus": class_corpus}).get(
            "adapter_id"
        )
        if not isinstance(adapter_id, str) or not adapter_id:
            raise ConformanceFailure(f"adapt returned no usable adapter_id: {adapter_id!r}")

        def sample(seed: int, top_k: int) -> list[list[str]]:
            response = expect_ok(
                {
                    "op": "sample",
                    "adapter_id": adapter_id,
                    "n": 3,
                    "temperature": 1.0,
                    "top_k": top_k,
                    "max_tokens": 20,
                    "seed": seed,
                }
            )
            samples = response.get("samples")
            if (
                not isinstance(samples, list)
                or len(samples) != 3
                or not all(
                    isinstance(s, list) and all(isinstance(t, str) for t in s) for s in samples
                )
            ):
                raise ConformanceFailure(f"bad samples payload: {samples!r}")
            if any(len(s) > 20 for s in samples):
                raise ConformanceFailure("a sample exceeds max_tokens")
            return samples

        sample(seed=7, top_k=5)
        if sample(seed=11, top_k=1) != sample(seed=11, top_k=1):
            raise ConformanceFailure("top_k=1 sampling with a fixed seed is not deterministic")

        loglik = expect_ok({"op": "loglik", "adapter_id": adapter_id, "corpus": class_corpus})
        value = loglik.get("value")
        if not isinstance(value, (int, float)) or value > 0:
            raise ConformanceFailure(f"loglik value must be a non-positive number, got {value!r}")

        expect_error({"op": "definitely-not-an-op"})
        expect_error({"op": "sample", "adapter_id": "no-such-adapter", "n": 1,
                      "temperature": 1.0, "top_k": 1, "max_tokens": 8, "seed": 0})
        expect_error("this is not json {")
        # The server must keep serving after error responses.
        expect_ok({"op": "hello"})
    finally:
        proc.stdin.close()
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
    return {"adapter_id": adapter_id, "hello": hello}


if __name__ == "__main__":
    serve_builtin()
