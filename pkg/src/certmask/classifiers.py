"""Pluggable classifiers: deterministic built-ins and an external adapter.

Built-ins are pure functions of the raw pixel bytes, so identical images
always yield identical labels across runs and processes. The lookup-table
classifier keys on a 64-bit FNV-1a digest of the pixel buffer; the digest
algorithm is fixed so tables remain portable.

External classifiers run as a child process speaking line-delimited JSON
over stdin/stdout. On startup the child emits ``{"ready": true, "classes":
K}``. Each request carries an id, the image dimensions, and base64 samples;
the child answers with the same id and a label below K. Requests are
strictly serial: one in flight at a time per process.
"""

from __future__ import annotations

import base64
import json
import os
import select
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from typing import Iterable, Protocol, runtime_checkable

from .masking import Image

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a digest of ``data``."""
    h = FNV64_OFFSET
    for b in data:
        h = ((h ^ b) * FNV64_PRIME) & _U64
    return h


def image_digest(image: Image) -> int:
    return fnv1a64(image.pixels)


class ClassifierError(RuntimeError):
    """Classification failed."""


class ProtocolError(ClassifierError):
    """The external classifier violated the wire protocol."""


@runtime_checkable
class Classifier(Protocol):
    classes: int | None

    def classify(self, image: Image) -> int: ...


@dataclass(frozen=True)
class ConstantClassifier:
    """Always returns the same label."""

    label: int
    classes: int | None = None

    def __post_init__(self):
        if self.label < 0:
            raise ValueError(f"label must be non-negative, got {self.label}")
        if self.classes is not None and self.label >= self.classes:
            raise ValueError(f"label {self.label} outside {self.classes} classes")

    def classify(self, image: Image) -> int:
        return self.label


@dataclass(frozen=True)
class MeanThresholdClassifier:
    """Buckets the global mean sample value by a strictly increasing list.

    The label is the number of thresholds t with t <= mean, computed in
    exact integer arithmetic (t * samples <= total) so the decision is
    reproducible in any language.
    """

    thresholds: tuple[int, ...]

    def __post_init__(self):
        if not self.thresholds:
            raise ValueError("at least one threshold required")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError(f"thresholds not strictly increasing: {self.thresholds}")

    @property
    def classes(self) -> int:
        return len(self.thresholds) + 1

    def classify(self, image: Image) -> int:
        total = sum(image.pixels)
        count = len(image.pixels)
        label = 0
        for t in self.thresholds:
            if t * count <= total:
                label += 1
        return label


@dataclass
class LookupTableClassifier:
    """Maps FNV-1a pixel digests to labels, with a default for misses."""

    table: dict[int, int]
    default: int = 0
    classes: int | None = None

    def __post_init__(self):
        labels = set(self.table.values()) | {self.default}
        if any(lab < 0 for lab in labels):
            raise ValueError("labels must be non-negative")
        if self.classes is None:
            self.classes = max(labels) + 1
        elif any(lab >= self.classes for lab in labels):
            raise ValueError(f"table labels exceed {self.classes} classes")

    def classify(self, image: Image) -> int:
        return self.table.get(image_digest(image), self.default)


class ExternalClassifier:
    """Child-process classifier speaking the line-delimited JSON protocol.

    The process starts lazily on first use. ``close()`` shuts stdin and
    waits for the child to exit within the timeout; use as a context
    manager to guarantee shutdown.
    """

    def __init__(self, command, timeout: float = 10.0):
        if timeout <= 0:
            raise ValueError(f"timeout must be positive, got {timeout}")
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.classes: int | None = None
        self._proc: subprocess.Popen | None = None
        self._next_id = 0
        self._buffer = b""
        self._transcript: list[str] = []

    def __enter__(self) -> "ExternalClassifier":
        self._ensure_started()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _log(self, direction: str, line: str) -> None:
        self._transcript.append(f"{direction} {line.strip()}")
        del self._transcript[:-50]

    def _fail(self, message: str) -> ProtocolError:
        transcript = "\n".join(self._transcript) or "<empty>"
        return ProtocolError(f"{message}\n--- transcript ---\n{transcript}")

    def _ensure_started(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise ClassifierError(f"cannot start {self.command}: {exc}") from exc
        os.set_blocking(self._proc.stdout.fileno(), False)
        handshake = self._read_message()
        if handshake.get("ready") is not True or "classes" not in handshake:
            raise self._fail(f"bad handshake: {handshake!r}")
        classes = handshake["classes"]
        if not isinstance(classes, int) or classes < 1:
            raise self._fail(f"bad class count in handshake: {classes!r}")
        self.classes = classes

    def _read_line(self) -> bytes:
        deadline = time.monotonic() + self.timeout
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise self._fail(f"timed out after {self.timeout}s waiting for reply")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise self._fail("classifier process closed its output")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def _read_message(self) -> dict:
        line = self._read_line()
        text = line.decode("utf-8", errors="replace")
        self._log("<<", text)
        try:
            message = json.loads(text)
        except json.JSONDecodeError as exc:
            raise self._fail(f"unparseable reply: {exc}") from exc
        if not isinstance(message, dict):
            raise self._fail(f"reply is not an object: {message!r}")
        return message

    def _send(self, payload: dict) -> None:
        line = json.dumps(payload, separators=(",", ":"))
        self._log(">>", line)
        try:
            self._proc.stdin.write(line.encode("utf-8") + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise self._fail(f"classifier process went away: {exc}") from exc

    def classify(self, image: Image) -> int:
        self._ensure_started()
        request_id = self._next_id
        self._next_id += 1
        self._send(
            {
                "id": request_id,
                "width": image.width,
                "height": image.height,
                "channels": image.channels,
                "pixels": base64.b64encode(image.pixels).decode("ascii"),
            }
        )
        reply = self._read_message()
        if reply.get("id") != request_id:
            raise self._fail(f"id mismatch: sent {request_id}, got {reply.get('id')!r}")
        if "error" in reply:
            raise self._fail(f"classifier reported error: {reply['error']}")
        label = reply.get("label")
        if not isinstance(label, int) or not 0 <= label < self.classes:
            raise self._fail(f"label {label!r} outside [0, {self.classes})")
        return label

    def close(self) -> None:
        if self._proc is None:
            return
        proc, self._proc = self._proc, None
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=self.timeout)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
            raise self._fail(f"classifier did not exit within {self.timeout}s")


def classify(classifier: Classifier, image: Image) -> int:
    label = classifier.classify(image)
    if label < 0:
        raise ClassifierError(f"classifier returned negative label {label}")
    return label


def classify_batch(classifier: Classifier, images: Iterable[Image]) -> list[int]:
    """Element-wise :func:`classify`; aborts on the first failure with its index."""
    labels = []
    for i, image in enumerate(images):
        try:
            labels.append(classify(classifier, image))
        except Exception as exc:
            raise ClassifierError(f"image {i}: {exc}") from exc
    return labels
