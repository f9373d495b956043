"""Chat-completions adapter that scores prompts by positive-token log-probabilities."""

from __future__ import annotations

import json
import logging
import math
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple

import httpx

from ..errors import CapabilityError, ConfigurationError, ProposalParseError, TransportError
from ..scorekit import DEFAULT_FLOOR, DEFAULT_TOKEN_SET, PositiveTokenSet, aggregate_positive_logprob
from .base import PolicyBackend
from .prompts import get_template, render_prompt

log = logging.getLogger(__name__)

_RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class RemoteEndpointConfig:
    base_url: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 2
    top_logprobs: int = 20
    max_tokens: int = 1
    max_in_flight: int = 4
    fallback_text_parse: bool = False

    def __post_init__(self):
        if not self.timeout > 0:
            raise ConfigurationError("timeout must be > 0")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ConfigurationError("max_in_flight must be >= 1")

    @property
    def url(self) -> str:
        base = self.base_url.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"


class Journal:
    """Append-only JSON-Lines log of request/response pairs."""

    def __init__(self, path):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()

    def write(self, record: dict) -> None:
        if self.path is None:
            return
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def build_request(endpoint: RemoteEndpointConfig, prompt: str, images: Sequence[str] = (),
                  logprobs: bool = True, max_tokens: Optional[int] = None) -> dict:
    content = [{"type": "text", "text": prompt}]
    for img in images:
        content.append({"type": "image_url", "image_url": {"url": img}})
    body = {
        "model": endpoint.model,
        "messages": [{"role": "user", "content": content}],
        "max_tokens": endpoint.max_tokens if max_tokens is None else max_tokens,
    }
    if logprobs:
        body["logprobs"] = True
        body["top_logprobs"] = endpoint.top_logprobs
    return body


def post_with_retries(endpoint: RemoteEndpointConfig, body: dict, client: Optional[httpx.Client] = None,
                      journal: Optional[Journal] = None) -> dict:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(endpoint.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    owns = client is None
    client = client or httpx.Client(timeout=endpoint.timeout)
    attempts = endpoint.max_retries + 1
    last_error = None
    try:
        for attempt in range(1, attempts + 1):
            try:
                resp = client.post(endpoint.url, json=body, headers=headers, timeout=endpoint.timeout)
            except httpx.TimeoutException as exc:
                last_error = f"timeout: {exc}"
            except httpx.HTTPError as exc:
                last_error = f"http error: {exc}"
            else:
                if resp.status_code == 200:
                    data = resp.json()
                    if journal:
                        journal.write({"request": body, "response": data, "attempts": attempt})
                    return data
                last_error = f"HTTP {resp.status_code}"
                if resp.status_code not in _RETRY_STATUS:
                    break
            log.warning("request attempt %d/%d failed: %s", attempt, attempts, last_error)
    finally:
        if owns:
            client.close()
    if journal:
        journal.write({"request": body, "error": last_error, "attempts": attempt})
    raise TransportError(f"request failed after {attempt} attempt(s): {last_error}")


def first_token_logprobs(response: Mapping) -> Optional[dict]:
    """Top log-probabilities of the first generated token, keyed by trimmed token text.

    Variants that trim to the same string are merged by summing probabilities.
    """
    try:
        content = response["choices"][0]["logprobs"]["content"]
    except (KeyError, IndexError, TypeError):
        return None
    if not content:
        return None
    first = content[0]
    entries = first.get("top_logprobs") or [{"token": first.get("token"), "logprob": first.get("logprob")}]
    merged = {}
    for e in entries:
        tok = (e.get("token") or "").strip()
        lp = e.get("logprob")
        if not tok or lp is None or not math.isfinite(lp):
            continue
        if tok in merged:
            hi, lo = max(merged[tok], lp), min(merged[tok], lp)
            merged[tok] = hi + math.log1p(math.exp(lo - hi))
        else:
            merged[tok] = float(lp)
    return merged


def response_text(response: Mapping) -> str:
    try:
        msg = response["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        return ""
    if isinstance(msg, list):
        return "".join(part.get("text", "") for part in msg if isinstance(part, dict))
    return msg or ""


def text_fallback_score(text: str, floor: float = DEFAULT_FLOOR) -> float:
    """Lossy scoring when no log-probabilities are returned: Yes -> 0, anything else -> floor."""
    return 0.0 if text.strip().lower().startswith("yes") else floor


def remote_score(endpoint: RemoteEndpointConfig, prompt: str, images: Sequence[str] = (),
                 token_set: PositiveTokenSet = DEFAULT_TOKEN_SET, floor: float = DEFAULT_FLOOR,
                 client: Optional[httpx.Client] = None, journal: Optional[Journal] = None) -> Tuple[float, dict]:
    body = build_request(endpoint, prompt, images)
    response = post_with_retries(endpoint, body, client, journal)
    lps = first_token_logprobs(response)
    if lps is None:
        if not endpoint.fallback_text_parse:
            raise CapabilityError(
                "response carries no logprobs; enable fallback_text_parse to score from the answer text"
            )
        return text_fallback_score(response_text(response), floor), response
    return aggregate_positive_logprob(lps, token_set, floor), response


# proposal parsing
def _extract_json(text: str):
    start = text.find("{")
    end = text.rfind("}")
    if start < 0 or end <= start:
        raise ProposalParseError("no JSON object in model output", text)
    try:
        return json.loads(text[start:end + 1])
    except json.JSONDecodeError as exc:
        raise ProposalParseError(f"malformed JSON: {exc}", text) from exc


def _flatten(x):
    if isinstance(x, (list, tuple)):
        for v in x:
            yield from _flatten(v)
    else:
        yield x


def parse_proposals(text: str, instance, state=None) -> list:
    """Parse the candidate JSON schema into structured actions."""
    return [a for a, _ in parse_proposals_with_confidence(text, instance, state)]


def parse_proposals_with_confidence(text: str, instance, state=None) -> list:
    """Parse candidates into ``(action, high_confidence)`` pairs.

    Jigsaw candidates carry a (possibly nested) ``permutation``; Sudoku
    candidates carry 1-based ``coordinates`` and matching ``value`` lists.
    Structurally invalid candidates are dropped.
    """
    data = _extract_json(text)
    cands = data.get("candidates") if isinstance(data, dict) else None
    if not isinstance(cands, list):
        raise ProposalParseError("missing 'candidates' list", text)
    state = state if state is not None else instance.initial_state()
    out = []
    for cand in cands:
        if not isinstance(cand, dict):
            continue
        try:
            if instance.kind == "jigsaw":
                action = tuple(int(v) for v in _flatten(cand["permutation"]))
            elif instance.kind == "sudoku":
                coords, values = cand["coordinates"], list(_flatten(cand["value"]))
                if len(coords) != len(values):
                    continue
                action = tuple((int(r) - 1, int(c) - 1, int(v)) for (r, c), v in zip(coords, values))
            else:
                raise ProposalParseError(f"task {instance.kind!r} has no open actions", text)
            instance.validate_action(state, action)
        except ProposalParseError:
            raise
        except Exception:
            continue
        confident = str(cand.get("High Confidence", "")).strip().lower().startswith("yes")
        if all(action != a for a, _ in out):
            out.append((action, confident))
    if not out:
        raise ProposalParseError("no structurally valid candidates", text)
    return out


def _describe_view(instance, state) -> str:
    """Opaque handle standing in for a rendered image of the state."""
    return f"<image:{instance.kind}:{instance.seed}:step{state.depth}>"


class RemotePolicy(PolicyBackend):
    """Scores thinker/observer prompts against a chat-completions endpoint.

    Images are the instance's opaque ``image_payload`` when present; symbolic
    tasks pass textual handles instead.
    """

    name = "remote"

    def __init__(self, endpoint: RemoteEndpointConfig, question: str = "",
                 token_set: PositiveTokenSet = DEFAULT_TOKEN_SET, floor: float = DEFAULT_FLOOR,
                 journal_path=None, client: Optional[httpx.Client] = None, seed: int = 0):
        self.endpoint = endpoint
        self.question = question
        self.token_set = token_set
        self.floor = floor
        self.journal = Journal(journal_path)
        self.client = client
        self.seed = seed
        self.max_in_flight = endpoint.max_in_flight
        self.concurrent = endpoint.max_in_flight > 1
        self._tokens = 0
        self._lock = threading.Lock()
        self._confidence = {}

    @property
    def tokens_used(self) -> int:
        return self._tokens

    def _images(self, instance):
        payload = getattr(instance, "image_payload", None)
        return [payload] if payload else []

    def _score(self, prompt, images):
        raw, response = remote_score(self.endpoint, prompt, images, self.token_set, self.floor,
                                     self.client, self.journal)
        usage = response.get("usage") or {}
        with self._lock:
            self._tokens += int(usage.get("total_tokens", 0))
        return raw

    def _bindings(self, instance, state, action, role):
        view = _describe_view(instance, state)
        b = {"question": self.question, "img-url": view}
        if instance.kind == "visual-search" and role == "thinker":
            from ..envs.visual_search import QUADRANT_NAMES
            b["quadrant"] = QUADRANT_NAMES.get(action, action)
        elif instance.kind in ("frozen-lake", "maze", "visuothink"):
            b["direction"] = "Upper" if action == "Up" else action
            b["position"] = "human" if instance.kind == "frozen-lake" else "home"
            if role == "observer":
                b["img-url"] = [view, f"<region:{state.visual.pos}>"]
        elif instance.kind == "jigsaw" and role == "observer":
            b["img-url"] = [_describe_view(instance, instance.initial_state()), view]
        return b

    def score_prior_batch(self, instance, state, actions, stream):
        if instance.open_actions:
            # open actions are scored by the proposer's own Yes/No confidence flag
            with self._lock:
                return [0.0 if self._confidence.get((state, a)) else self.floor for a in actions]
        template = get_template("thinker", instance.kind)
        return [self._score(render_prompt(template, self._bindings(instance, state, a, "thinker")),
                            self._images(instance)) for a in actions]

    def score_observer(self, instance, parent_state, action, child_state, stream):
        template = get_template("observer", instance.kind)
        prompt = render_prompt(template, self._bindings(instance, child_state, action, "observer"))
        return self._score(prompt, self._images(instance))

    def propose(self, instance, state, n_cands, stream):
        template = get_template("thinker", instance.kind)
        prompt = render_prompt(template, {"img-url": _describe_view(instance, state), "cands": n_cands})
        body = build_request(self.endpoint, prompt, self._images(instance), logprobs=False, max_tokens=1024)
        response = post_with_retries(self.endpoint, body, self.client, self.journal)
        pairs = parse_proposals_with_confidence(response_text(response), instance, state)
        with self._lock:
            for action, confident in pairs:
                self._confidence[(state, action)] = confident
        return [a for a, _ in pairs]
