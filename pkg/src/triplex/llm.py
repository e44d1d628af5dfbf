"""Prompted chat-model OpenIE baseline: templates, a generic chat-completion
client, response parsing, and a cached corpus runner.

The wire contract is the de-facto chat-completions shape: POST a JSON body
{"model": ..., "messages": [{"role", "content"}], "temperature": ...} and read
the first choice's message content. Endpoint, headers and transport are fully
configurable, and every response is cached on disk keyed by prompt hash so a
completed run replays without network access.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
import urllib.request
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .data import ExtractionInstance
from .grammar import Sentence, Triplet
from .inference import Prediction, write_predictions


class LLMError(RuntimeError):
    pass


class ExemplarCountMismatch(LLMError):
    pass


class ChatClientError(LLMError):
    pass


PROMPT_MODES = ("zero-shot", "few-shot", "cot")
_DEFAULT_K = {"zero-shot": 0, "few-shot": 3, "cot": 1}


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt body with {exemplars} and {sentence} slots.

    Default bodies ship as editable text files under triplex/templates; pass a
    file path to use a customized one.
    """

    mode: str = "zero-shot"
    k: int | None = None
    body: str = ""

    def __post_init__(self) -> None:
        if self.mode not in PROMPT_MODES:
            raise LLMError(f"unknown prompt mode {self.mode!r}")
        if "{sentence}" not in self.effective_body():
            raise LLMError("template body must contain a {sentence} slot")

    def effective_body(self) -> str:
        if self.body:
            return self.body
        name = self.mode.replace("-", "_") + ".txt"
        return resources.files("triplex.templates").joinpath(name).read_text("utf-8")

    def exemplar_count(self) -> int:
        return self.k if self.k is not None else _DEFAULT_K[self.mode]

    @staticmethod
    def load(mode: str, path: "str | Path | None" = None, k: int | None = None
             ) -> "PromptTemplate":
        body = Path(path).read_text(encoding="utf-8") if path else ""
        return PromptTemplate(mode=mode, k=k, body=body)


def _stable_rng_order(seed: int, key: str, n: int) -> list[int]:
    """Deterministic pseudo-random permutation of range(n) from (seed, key)."""
    scored = []
    for i in range(n):
        h = hashlib.sha256(f"{seed}:{key}:{i}".encode("utf-8")).hexdigest()
        scored.append((h, i))
    return [i for _, i in sorted(scored)]


def _format_tuple(t: Triplet) -> str:
    return f"({t.subject}; {t.predicate}; {t.object})"


def _render_exemplar(inst: ExtractionInstance, cot: bool) -> str:
    lines = [f"Sentence: {inst.sentence.text}"]
    if cot:
        preds = [t.predicate for t in inst.triplets]
        steps = [f"The predicates are: {', '.join(preds) if preds else '(none)'}."]
        for t in inst.triplets:
            steps.append(
                f"For \"{t.predicate}\", the subject is \"{t.subject}\" "
                f"and the object is \"{t.object}\"."
            )
        lines.append("Reasoning: " + " ".join(steps))
    lines.append("Triplets:")
    lines.extend(_format_tuple(t) for t in inst.triplets)
    return "\n".join(lines)


def build_prompt(
    template: PromptTemplate,
    s: Sentence,
    exemplars: Sequence[ExtractionInstance] | None = None,
    seed: int = 0,
) -> str:
    """Render the prompt for one sentence.

    The exemplar draw is deterministic in (seed, sentence id); few-shot(k)
    requires a pool of at least k exemplars.
    """
    k = template.exemplar_count()
    pool = list(exemplars or [])
    if k > 0:
        if len(pool) < k:
            raise ExemplarCountMismatch(
                f"{template.mode} needs {k} exemplars, pool has {len(pool)}")
        order = _stable_rng_order(seed, s.id, len(pool))
        chosen = [pool[i] for i in order[:k]]
        block = "\n\n".join(
            _render_exemplar(e, cot=template.mode == "cot") for e in chosen
        ) + "\n\n"
    else:
        block = ""
    return template.effective_body().format(exemplars=block, sentence=s.text)


# ---------------------------------------------------------------------------
# Response parsing.

_TUPLE_RE = re.compile(r"\(([^()]*)\)")


def parse_llm_response(text: str) -> tuple[list[Triplet], list[str]]:
    """Pull (subject; predicate; object) lines out of arbitrary model text.

    Surrounding prose and list numbering are tolerated; parenthesized groups
    with the wrong arity or empty fields are skipped with a warning. Never
    raises.
    """
    triplets: list[Triplet] = []
    warnings: list[str] = []
    for m in _TUPLE_RE.finditer(text or ""):
        parts = [p.strip() for p in m.group(1).split(";")]
        if len(parts) != 3:
            warnings.append(f"skipped tuple with {len(parts)} field(s): ({m.group(1)})")
            continue
        if not all(parts):
            warnings.append(f"skipped tuple with empty field: ({m.group(1)})")
            continue
        triplets.append(Triplet(*parts))
    if not triplets and not warnings:
        warnings.append("no tuples found in response")
    return triplets, warnings


# ---------------------------------------------------------------------------
# Chat client.

Transport = Callable[[str, dict, dict, float], dict]


def _urllib_transport(url: str, headers: dict, payload: dict, timeout: float) -> dict:
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json", **headers}, method="POST",
    )
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


@dataclass
class ChatClientConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    auth_env: str = "CHAT_API_TOKEN"
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    rate_limit_per_min: float | None = None
    extra_headers: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise LLMError("temperature must be >= 0")
        if self.max_retries < 0:
            raise LLMError("max_retries must be >= 0")


class ChatClient:
    """Minimal chat-completion client with retries, backoff and rate limiting."""

    def __init__(self, cfg: ChatClientConfig, transport: Transport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self.transport = transport or _urllib_transport
        self.sleep = sleep
        self.request_count = 0
        self._lock = threading.Lock()
        self._last_request = 0.0

    def _headers(self) -> dict:
        headers = dict(self.cfg.extra_headers)
        token = os.environ.get(self.cfg.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _respect_rate_limit(self) -> None:
        if not self.cfg.rate_limit_per_min:
            return
        interval = 60.0 / self.cfg.rate_limit_per_min
        with self._lock:
            wait = self._last_request + interval - time.monotonic()
            self._last_request = max(time.monotonic(), self._last_request + interval)
        if wait > 0:
            self.sleep(wait)

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
        }
        last_err: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            self._respect_rate_limit()
            try:
                with self._lock:
                    self.request_count += 1
                resp = self.transport(self.cfg.endpoint, self._headers(),
                                      payload, self.cfg.timeout)
                return str(resp["choices"][0]["message"]["content"])
            except Exception as e:  # noqa: BLE001 - network layer is opaque here
                last_err = e
                if attempt < self.cfg.max_retries:
                    self.sleep(self.cfg.backoff * (2 ** attempt))
        raise ChatClientError(f"request failed after retries: {last_err}")


# ---------------------------------------------------------------------------
# Corpus runner with on-disk cache.

def _prompt_key(cfg: ChatClientConfig, prompt: str) -> str:
    blob = json.dumps(
        {"model": cfg.model, "temperature": cfg.temperature, "prompt": prompt},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def run_baseline(
    corpus: Sequence[ExtractionInstance],
    client: ChatClient,
    template: PromptTemplate,
    exemplar_pool: Sequence[ExtractionInstance] | None = None,
    seed: int = 0,
    cache_dir: "str | Path" = ".llm-cache",
    out_path: "str | Path | None" = None,
) -> list[Prediction]:
    """One request per sentence, cached on disk and resumable.

    Failed requests (after retries) become empty predictions with an error
    note and are not cached, so a rerun retries only them.
    """
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    cache_lock = threading.Lock()
    predictions: list[Prediction] = []

    for inst in corpus:
        prompt = build_prompt(template, inst.sentence, exemplar_pool, seed)
        key = _prompt_key(client.cfg, prompt)
        cache_file = cache / f"{key}.json"
        trace: dict = {"prompt_hash": key, "mode": template.mode}
        response: str | None = None

        if cache_file.exists():
            with cache_lock:
                response = json.loads(cache_file.read_text(encoding="utf-8"))["response"]
            trace["cached"] = True
        else:
            try:
                response = client.complete(prompt)
                with cache_lock:
                    cache_file.write_text(
                        json.dumps({"prompt_hash": key, "response": response},
                                   ensure_ascii=False),
                        encoding="utf-8",
                    )
            except ChatClientError as e:
                trace["error"] = str(e)

        if response is None:
            predictions.append(Prediction(inst.sentence.id, [], [], trace))
            continue
        triplets, warnings = parse_llm_response(response)
        if warnings:
            trace["parse_warnings"] = warnings
        predictions.append(Prediction(inst.sentence.id, triplets, [], trace))

    if out_path is not None:
        write_predictions(predictions, out_path)
    return predictions
