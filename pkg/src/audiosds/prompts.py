"""Automated prompt-set generation for separation.

Pipeline: caption the mixture with an audio-captioning service, ask an
LLM to split the caption into candidate K-prompt decompositions using the
stored request template, optionally re-caption the separated sources and
decide whether to keep, re-prompt, or subdivide.

Clients are a single text-in/text-out POST interface, so the whole
pipeline runs offline against canned mocks; live endpoints are configured
through environment variables (AUDIOSDS_CAPTION_URL, AUDIOSDS_LLM_URL).

The LLM response parser is line-oriented and tolerant: it collects
"Example k (N=j)" blocks and their "Channel n Prompt:" lines, strips
straight and typographic quotes, and fails loudly (with the raw text
attached) rather than guessing.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources

from .errors import ClientError, ParseError, PromptValidationError
from .waveform import Waveform
from .wavio import wav_bytes

CAPTION_SLOT = "<AUDIO_CAPTION>"

_EXAMPLE_RE = re.compile(r"^\s*Example\s+\d+\s*\(\s*N\s*=\s*(\d+)\s*\)", re.IGNORECASE)
_CHANNEL_RE = re.compile(r"^\s*Channel\s+(\d+)\s+Prompt:\s*(.+?)\s*$", re.IGNORECASE)
_QUOTES = "\"'“”‘’"


def request_template() -> str:
    """The stored LLM request template with the <AUDIO_CAPTION> slot."""
    return (
        resources.files("audiosds").joinpath("data/prompt_template.txt").read_text()
    )


def render_request(caption: str) -> str:
    return request_template().replace(CAPTION_SLOT, caption)


# -- clients -----------------------------------------------------------------


class HttpTextClient:
    """POSTs a text payload, returns the text response."""

    def __init__(self, url: str, token: str | None = None, timeout: float = 30.0,
                 retries: int = 2):
        self.url = url
        self.token = token
        self.timeout = timeout
        self.retries = retries

    def post(self, payload: str) -> str:
        headers = {"Content-Type": "text/plain; charset=utf-8"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last = None
        for attempt in range(self.retries + 1):
            try:
                req = urllib.request.Request(
                    self.url, data=payload.encode("utf-8"), headers=headers
                )
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return resp.read().decode("utf-8")
            except (urllib.error.URLError, OSError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(0.2 * (attempt + 1))
        raise ClientError(f"POST to {self.url} failed: {last}", retries=self.retries)


def client_from_env(var: str) -> HttpTextClient | None:
    url = os.environ.get(var, "").strip()
    if not url:
        return None
    return HttpTextClient(url, token=os.environ.get(f"{var}_TOKEN"))


class MockTextClient:
    """Canned client keyed by payload hash, with an optional fallback response."""

    def __init__(self, by_hash=None, default=None, fail=False):
        self.by_hash = dict(by_hash or {})
        self.default = default
        self.fail = fail
        self.requests = []

    @classmethod
    def from_dir(cls, path) -> "MockTextClient":
        """Load fixtures from a directory: <payload-sha256>.txt plus default.txt."""
        import pathlib

        root = pathlib.Path(path)
        by_hash = {}
        default = None
        for f in sorted(root.glob("*.txt")):
            if f.stem == "default":
                default = f.read_text()
            else:
                by_hash[f.stem] = f.read_text()
        return cls(by_hash=by_hash, default=default)

    def post(self, payload: str) -> str:
        self.requests.append(payload)
        if self.fail:
            raise ClientError("mock client configured to fail", retries=0)
        key = hashlib.sha256(payload.encode("utf-8")).hexdigest()
        if key in self.by_hash:
            return self.by_hash[key]
        if self.default is not None:
            return self.default
        raise ClientError(f"mock client has no fixture for payload hash {key[:12]}")


def audio_payload(audio: Waveform) -> str:
    """Canonical captioning payload: hex digest of the float-32 WAV bytes."""
    return hashlib.sha256(wav_bytes(audio)).hexdigest()


# -- pipeline steps ------------------------------------------------------------


def caption(audio: Waveform, client) -> str:
    """Step 1: caption the mixture."""
    text = client.post(audio_payload(audio))
    if not str(text).strip():
        raise ParseError("captioner returned an empty caption", raw_text=text)
    return str(text).strip()


@dataclass
class DecompositionProposal:
    """One candidate split of the mixture into K prompts."""

    num_sources: int
    prompts: list
    caption_text: str = ""
    raw_response: str = ""

    def validate(self):
        if self.num_sources < 2:
            raise PromptValidationError(
                f"proposal needs K >= 2, got {self.num_sources}",
                raw_text=self.raw_response,
            )
        cleaned = [p.strip() for p in self.prompts]
        if len(cleaned) != self.num_sources:
            raise PromptValidationError(
                f"proposal lists {len(cleaned)} prompts for K={self.num_sources}",
                raw_text=self.raw_response,
            )
        if any(not p for p in cleaned):
            raise PromptValidationError("empty prompt in proposal",
                                        raw_text=self.raw_response)
        if len(set(cleaned)) != len(cleaned):
            raise PromptValidationError("duplicate prompts in proposal",
                                        raw_text=self.raw_response)


def _strip_quotes(text: str) -> str:
    return text.strip().strip(_QUOTES).strip()


def parse_decompositions(response: str, caption_text: str = ""):
    """All well-formed Example blocks in an LLM response, with rejection reasons."""
    proposals = []
    rejections = []
    current_k = None
    current_prompts = []

    def flush():
        nonlocal current_k, current_prompts
        if current_k is None:
            return
        prop = DecompositionProposal(
            num_sources=current_k,
            prompts=current_prompts,
            caption_text=caption_text,
            raw_response=response,
        )
        try:
            prop.validate()
            proposals.append(prop)
        except PromptValidationError as exc:
            rejections.append((prop, str(exc)))
        current_k, current_prompts = None, []

    for line in response.splitlines():
        m = _EXAMPLE_RE.match(line)
        if m:
            flush()
            current_k = int(m.group(1))
            continue
        m = _CHANNEL_RE.match(line)
        if m and current_k is not None:
            current_prompts.append(_strip_quotes(m.group(2)))
    flush()
    return proposals, rejections


def suggest_decompositions(caption_text: str, k_values, client):
    """Step 2: ask the LLM for prompt sets; at least one proposal per requested K."""
    body = render_request(caption_text)
    response = client.post(body)
    proposals, rejections = parse_decompositions(response, caption_text)
    if not proposals and not rejections:
        raise ParseError(
            "no Example/Channel blocks found in LLM response", raw_text=response
        )
    selected = []
    for k in k_values:
        matches = [p for p in proposals if p.num_sources == k]
        if not matches:
            rejected_k = [r for p, r in rejections if p.num_sources == k]
            if rejected_k:
                raise PromptValidationError(
                    f"every K={k} proposal was rejected: {rejected_k[0]}",
                    raw_text=response,
                )
            raise ParseError(f"no proposal with K={k} in LLM response",
                             raw_text=response)
        selected.extend(matches)
    return selected


# -- step 3: optional branching -------------------------------------------------


@dataclass
class RefineDecision:
    """Outcome of re-captioning the separated sources."""

    action: str  # keep | reprompt | subdivide
    source_index: int | None = None
    recaptions: list = field(default_factory=list)
    proposals: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    degraded: bool = False


@dataclass
class RefineConfig:
    min_overlap: float = 0.2
    multi_event_separators: tuple = (" and ", " while ", ";")


_STOPWORDS = {
    "a", "an", "the", "is", "are", "on", "in", "of", "with", "someone", "sound",
    "sounds", "audio", "quietly", "softly",
}


def _keywords(text: str):
    words = re.findall(r"[a-z]+", text.lower())
    return {w for w in words if w not in _STOPWORDS and len(w) > 2}


def keyword_overlap(a: str, b: str) -> float:
    ka, kb = _keywords(a), _keywords(b)
    if not ka or not kb:
        return 0.0
    return len(ka & kb) / min(len(ka), len(kb))


def _looks_multi_event(caption_text: str, cfg: RefineConfig) -> bool:
    parts = [caption_text]
    for sep in cfg.multi_event_separators:
        parts = [q for p in parts for q in p.split(sep)]
    # a clause only counts as an event if it names more than a lone word
    parts = [p for p in parts if len(_keywords(p)) >= 2]
    if len(parts) < 2:
        return False
    return keyword_overlap(parts[0], parts[-1]) < 0.5


def branch_refine(sources, prompts, caption_client, llm_client,
                  cfg: RefineConfig | None = None) -> RefineDecision:
    """Step 3: re-caption each source and decide keep / re-prompt / subdivide.

    Client failures degrade to keep (fail-open) with a warning recorded.
    """
    cfg = cfg or RefineConfig()
    recaptions = []
    for k, source in enumerate(sources):
        try:
            recaptions.append(caption(source, caption_client))
        except ClientError as exc:
            return RefineDecision(
                action="keep",
                recaptions=recaptions,
                warnings=[f"captioner failed on source {k}: {exc}"],
                degraded=True,
            )

    for k, (recap, prompt) in enumerate(zip(recaptions, prompts)):
        if _looks_multi_event(recap, cfg):
            return RefineDecision(action="subdivide", source_index=k,
                                  recaptions=recaptions)

    mismatched = [
        k for k, (recap, prompt) in enumerate(zip(recaptions, prompts))
        if keyword_overlap(recap, prompt) < cfg.min_overlap
    ]
    if mismatched:
        try:
            proposals = suggest_decompositions(
                " and ".join(recaptions), [len(sources)], llm_client
            )
        except (ClientError, ParseError) as exc:
            return RefineDecision(
                action="keep", recaptions=recaptions,
                warnings=[f"re-prompting failed: {exc}"], degraded=True,
            )
        return RefineDecision(action="reprompt", recaptions=recaptions,
                              proposals=proposals)
    return RefineDecision(action="keep", recaptions=recaptions)
