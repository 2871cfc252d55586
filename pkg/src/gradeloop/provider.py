"""Single abstraction over the AI provider for all five capabilities.

The gateway wraps a backend (deterministic fixture-driven mock, or a real
HTTP endpoint) and owns the cross-cutting contract: canonical request
payloads with idempotency keys, a bounded-parallelism retry loop, response
validation (no grade ever leaves here selecting items outside the rubric),
and per-capability call counters.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

from .canon import payload_hash
from .errors import MalformedProviderOutput, ProviderUnavailable
from .model import (
    ConfidenceTier,
    ImageRegion,
    Question,
    TranscriptionConfidence,
)
from .rubric import Rubric, RubricProposalRequest

log = logging.getLogger(__name__)


class ProviderCapability(str, Enum):
    TRANSCRIBE = "transcribe"
    PROPOSE_RUBRIC = "propose_rubric"
    GRADE = "grade"
    SUMMARIZE = "summarize"
    FEEDBACK = "feedback"
    SYNTHESIZE_WISDOMS = "synthesize_wisdoms"


@dataclass(frozen=True)
class ProviderRequest:
    capability: ProviderCapability
    payload: Mapping[str, Any]
    idempotency_key: str

    @classmethod
    def build(cls, capability: ProviderCapability, payload: Mapping[str, Any]) -> ProviderRequest:
        doc = {"capability": capability.value, **payload}
        return cls(capability=capability, payload=doc, idempotency_key=payload_hash(doc))


@dataclass(frozen=True)
class ProviderTranscription:
    text: str
    confidence: TranscriptionConfidence

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "confidence": self.confidence.value}


@dataclass(frozen=True)
class ProviderGradeResult:
    selected_item_ids: frozenset[str]
    confidence: ConfidenceTier
    rationale: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "selected_item_ids": sorted(self.selected_item_ids),
            "confidence": self.confidence.value,
            "rationale": self.rationale,
        }


@dataclass(frozen=True)
class WisdomDraft:
    """Provider-synthesized grading instruction, not yet an entity."""

    item_id: str
    text: str
    source_discrepancy_ids: tuple[str, ...]


class WisdomLike(Protocol):
    id: str
    text: str


class DiscrepancyLike(Protocol):
    id: str
    record_id: str
    added: frozenset[str]
    removed: frozenset[str]


def _wisdom_entry(wisdom: "WisdomLike | Mapping[str, Any]") -> dict[str, str]:
    if isinstance(wisdom, Mapping):
        return {"id": str(wisdom["id"]), "text": str(wisdom["text"])}
    return {"id": wisdom.id, "text": wisdom.text}


class ProviderBackend(Protocol):
    def execute(self, request: ProviderRequest) -> Mapping[str, Any]:
        """Return the capability's raw response document, or raise."""


class ProviderGateway:
    """Validating, caching, retrying front door to the provider backend.

    Thread-safe; concurrent in-flight requests are bounded by
    ``max_parallel``. Replaying a request with an idempotency key already
    seen returns the cached result without a second backend call.
    """

    def __init__(
        self,
        backend: ProviderBackend,
        max_parallel: int = 8,
        retries: int = 3,
        backoff_seconds: float = 0.05,
        audit_log: bool = False,
    ) -> None:
        self._backend = backend
        self._slots = threading.BoundedSemaphore(max_parallel)
        self._retries = retries
        self._backoff = backoff_seconds
        self._audit = audit_log
        self._cache: dict[str, Mapping[str, Any]] = {}
        self._cache_lock = threading.Lock()
        self.calls: Counter[str] = Counter()
        self.cache_hits: int = 0

    def _execute(self, request: ProviderRequest) -> Mapping[str, Any]:
        with self._cache_lock:
            cached = self._cache.get(request.idempotency_key)
            if cached is not None:
                self.cache_hits += 1
        if cached is not None:
            return cached
        if self._audit:
            log.info("provider request %s: %s", request.capability.value, request.payload)
        last_error: ProviderUnavailable | None = None
        for attempt in range(self._retries):
            try:
                with self._slots:
                    self.calls[request.capability.value] += 1
                    result = self._backend.execute(request)
                break
            except ProviderUnavailable as exc:
                last_error = exc
                if attempt + 1 < self._retries and self._backoff > 0:
                    time.sleep(self._backoff * (2**attempt))
        else:
            assert last_error is not None
            raise last_error
        with self._cache_lock:
            self._cache.setdefault(request.idempotency_key, result)
        return result

    def transcribe(self, region: ImageRegion, context: Question | None = None) -> ProviderTranscription:
        request = ProviderRequest.build(
            ProviderCapability.TRANSCRIBE,
            {
                "region": region.to_dict(),
                "question": context.to_dict() if context is not None else None,
            },
        )
        raw = self._execute(request)
        try:
            return ProviderTranscription(
                text=str(raw["text"]),
                confidence=TranscriptionConfidence(raw["confidence"]),
            )
        except (KeyError, ValueError) as exc:
            raise MalformedProviderOutput(f"bad transcription document: {exc}") from exc

    def grade(
        self,
        transcription: ProviderTranscription,
        question: Question,
        rubric: Rubric,
        wisdoms: Sequence[WisdomLike] = (),
    ) -> ProviderGradeResult:
        # The payload always embeds the full rubric and the complete
        # ordered active wisdom list; graders never see a partial context.
        request = ProviderRequest.build(
            ProviderCapability.GRADE,
            {
                "transcription": transcription.to_dict(),
                "question_id": question.id,
                "statement": question.statement,
                "rubric": rubric.to_dict(),
                "wisdoms": [_wisdom_entry(w) for w in wisdoms],
            },
        )
        raw = self._execute(request)
        try:
            selected = frozenset(str(item) for item in raw["selected_item_ids"])
            confidence = ConfidenceTier(raw["confidence"])
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedProviderOutput(f"bad grade document: {exc}") from exc
        stray = selected - rubric.item_ids()
        if stray:
            raise MalformedProviderOutput(
                f"provider selected items outside the rubric: {sorted(stray)}"
            )
        return ProviderGradeResult(
            selected_item_ids=selected,
            confidence=confidence,
            rationale=str(raw.get("rationale", "")),
        )

    def summarize(
        self,
        selected_labels: Sequence[str],
        transcription_text: str,
        rubric: Rubric | None = None,
    ) -> str:
        request = ProviderRequest.build(
            ProviderCapability.SUMMARIZE,
            {
                "selected_labels": list(selected_labels),
                "transcription": transcription_text,
                "rubric": rubric.to_dict() if rubric is not None else None,
            },
        )
        raw = self._execute(request)
        if "text" not in raw:
            raise MalformedProviderOutput("summary document missing text")
        return str(raw["text"])

    def feedback(
        self,
        selected_labels: Sequence[str],
        score: str,
        style_prompt: str | None = None,
    ) -> str:
        request = ProviderRequest.build(
            ProviderCapability.FEEDBACK,
            {
                "selected_labels": list(selected_labels),
                "score": score,
                "style_prompt": style_prompt,
            },
        )
        raw = self._execute(request)
        if "text" not in raw:
            raise MalformedProviderOutput("feedback document missing text")
        return str(raw["text"])

    def synthesize_wisdoms(
        self,
        discrepancies: Sequence[DiscrepancyLike],
        rubric: Rubric,
    ) -> list[WisdomDraft]:
        if not discrepancies:
            raise ValueError("cannot synthesize wisdoms from an empty discrepancy list")
        request = ProviderRequest.build(
            ProviderCapability.SYNTHESIZE_WISDOMS,
            {
                "rubric": rubric.to_dict(),
                "discrepancies": [
                    {
                        "id": d.id,
                        "record_id": d.record_id,
                        "added": sorted(d.added),
                        "removed": sorted(d.removed),
                    }
                    for d in discrepancies
                ],
            },
        )
        raw = self._execute(request)
        drafts = []
        for entry in raw.get("wisdoms", []):
            sources = tuple(str(s) for s in entry.get("source_discrepancy_ids", []))
            if not sources:
                raise MalformedProviderOutput("wisdom draft cites no discrepancies")
            drafts.append(
                WisdomDraft(
                    item_id=str(entry.get("item_id", "")),
                    text=str(entry["text"]),
                    source_discrepancy_ids=sources,
                )
            )
        if not drafts:
            raise MalformedProviderOutput("provider returned no wisdom drafts")
        return drafts

    def propose_rubric(self, proposal: RubricProposalRequest) -> Rubric:
        request = ProviderRequest.build(ProviderCapability.PROPOSE_RUBRIC, proposal.to_dict())
        raw = self._execute(request)
        try:
            return Rubric.from_dict(raw["rubric"])
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedProviderOutput(f"bad rubric document: {exc}") from exc


class MockBackend:
    """Fixture-driven backend: same fixture in, identical bytes out.

    The fixture is a table keyed by (question, student). Grading rows carry
    a pre-wisdom and a post-wisdom variant; which one answers depends only
    on whether the request carried any wisdoms, which is what makes the
    calibration loop's convergence observable in tests.

    Fixture shape::

        {
          "names":   {"<page_ref>": {"text": ..., "confidence": "high"|"low"}},
          "pages":   {"<page_ref>": "<student_id>"},
          "responses": {
            "<question_id>": {
              "<student_id>": {
                "text": ...,
                "transcription_confidence": "high"|"low",
                "pre":  {"selected": [...], "confidence": "low"|"medium"|"high"},
                "post": {"selected": [...], "confidence": ...},
                "unavailable": false,   # transcribe raises ProviderUnavailable
                "grade_fail": false,    # grade raises ProviderUnavailable
                "malformed": false      # grade returns an out-of-rubric id
              }
            }
          },
          "rubrics": {"<question_id>": {...rubric json...}}
        }
    """

    def __init__(self, fixture: Mapping[str, Any]) -> None:
        self._fixture = fixture
        self._text_index: dict[str, dict[str, Mapping[str, Any]]] = {}
        for question_id, rows in fixture.get("responses", {}).items():
            index: dict[str, Mapping[str, Any]] = {}
            for student_id in sorted(rows):
                row = rows[student_id]
                index.setdefault(str(row.get("text", "")), row)
            self._text_index[question_id] = index

    @classmethod
    def from_file(cls, path: str | Path) -> MockBackend:
        with open(path, encoding="utf-8") as handle:
            return cls(json.load(handle))

    def execute(self, request: ProviderRequest) -> Mapping[str, Any]:
        capability = request.capability
        payload = request.payload
        if capability is ProviderCapability.TRANSCRIBE:
            return self._transcribe(payload)
        if capability is ProviderCapability.GRADE:
            return self._grade(payload)
        if capability is ProviderCapability.SUMMARIZE:
            return {"text": _summary_template(payload["selected_labels"])}
        if capability is ProviderCapability.FEEDBACK:
            return {"text": _feedback_template(payload)}
        if capability is ProviderCapability.SYNTHESIZE_WISDOMS:
            return self._synthesize(payload)
        if capability is ProviderCapability.PROPOSE_RUBRIC:
            return self._propose_rubric(payload)
        raise MalformedProviderOutput(f"unsupported capability {capability}")

    def _transcribe(self, payload: Mapping[str, Any]) -> Mapping[str, Any]:
        page = payload["region"]["page"]
        if payload.get("question") is None:
            entry = self._fixture.get("names", {}).get(page)
            if entry is None:
                raise ProviderUnavailable(f"no stored image for page {page!r}")
            return {"text": entry["text"], "confidence": entry.get("confidence", "high")}
        student_id = self._fixture.get("pages", {}).get(page)
        if student_id is None:
            raise ProviderUnavailable(f"no stored image for page {page!r}")
        row = self._fixture.get("responses", {}).get(payload["question"]["id"], {}).get(student_id)
        if row is None:
            raise ProviderUnavailable(f"no fixture row for page {page!r}")
        if row.get("unavailable"):
            raise ProviderUnavailable("fixture row marked unavailable")
        return {
            "text": row.get("text", ""),
            "confidence": row.get("transcription_confidence", "high"),
        }

    def _grade(self, payload: Mapping[str, Any]) -> Mapping[str, Any]:
        row = self._text_index.get(payload["question_id"], {}).get(
            payload["transcription"]["text"]
        )
        if row is None:
            raise MalformedProviderOutput("mock has no grading row for this transcription")
        if row.get("grade_fail"):
            raise ProviderUnavailable("fixture row marked grade_fail")
        if row.get("malformed"):
            return {
                "selected_item_ids": ["__not_a_rubric_item__"],
                "confidence": "low",
                "rationale": "malformed fixture row",
            }
        variant = row["post" if payload["wisdoms"] else "pre"]
        return {
            "selected_item_ids": sorted(variant.get("selected", [])),
            "confidence": variant.get("confidence", "medium"),
            "rationale": variant.get("rationale", "fixture"),
        }

    def _synthesize(self, payload: Mapping[str, Any]) -> Mapping[str, Any]:
        # One wisdom per distinct rubric item involved in any discrepancy.
        labels = {item["id"]: item["label"] for item in payload["rubric"]["items"]}
        by_item: dict[str, list[str]] = {}
        for disc in payload["discrepancies"]:
            for item_id in list(disc["added"]) + list(disc["removed"]):
                by_item.setdefault(item_id, []).append(disc["id"])
        wisdoms = []
        for item_id in sorted(by_item):
            label = labels.get(item_id, item_id)
            wisdoms.append(
                {
                    "item_id": item_id,
                    "text": (
                        f"When deciding whether '{label}' applies, follow the instructor's"
                        " corrected examples rather than the literal rubric wording."
                    ),
                    "source_discrepancy_ids": sorted(set(by_item[item_id])),
                }
            )
        return {"wisdoms": wisdoms}

    def _propose_rubric(self, payload: Mapping[str, Any]) -> Mapping[str, Any]:
        override = self._fixture.get("rubrics", {}).get(payload["question_id"])
        if override is not None:
            return {"rubric": override}
        from fractions import Fraction

        from .canon import frac_to_str

        budget = Fraction(payload["point_budget"])
        question_id = payload["question_id"]
        if payload["scheme"] == "subtractive":
            shares = [Fraction(3, 10), Fraction(3, 10), Fraction(2, 10)]
            items = [
                {
                    "id": f"{question_id}-r{i + 1}",
                    "label": label,
                    "points": frac_to_str(-budget * share),
                    "wisdom_notes": [],
                }
                for i, (label, share) in enumerate(
                    zip(["incorrect setup", "calculation error", "missing justification"], shares)
                )
            ]
            base = frac_to_str(budget)
        else:
            shares = [Fraction(4, 10), Fraction(3, 10), Fraction(3, 10)]
            items = [
                {
                    "id": f"{question_id}-r{i + 1}",
                    "label": label,
                    "points": frac_to_str(budget * share),
                    "wisdom_notes": [],
                }
                for i, (label, share) in enumerate(
                    zip(["correct setup", "correct result", "clear justification"], shares)
                )
            ]
            base = "0"
        return {
            "rubric": {
                "question_id": question_id,
                "scheme": payload["scheme"],
                "items": items,
                "base_points": base,
                "min_total": "0",
                "max_total": frac_to_str(budget),
            }
        }


def _summary_template(selected_labels: Sequence[str]) -> str:
    if not selected_labels:
        return "No errors identified; the response satisfies the rubric."
    return "Key issues: " + "; ".join(selected_labels) + "."


def _feedback_template(payload: Mapping[str, Any]) -> str:
    labels = payload["selected_labels"]
    style = payload.get("style_prompt")
    if labels:
        body = "Please revisit: " + "; ".join(labels) + f". Score: {payload['score']}."
    else:
        body = f"Great work; no rubric deductions applied. Score: {payload['score']}."
    if style:
        body += f" [{style}]"
    return body


PROMPT_TEMPLATES = {
    ProviderCapability.TRANSCRIBE: (
        "Transcribe the student's handwritten or typed answer in the attached image region "
        "into plain text. Reply as JSON: {\"text\": ..., \"confidence\": \"high\"|\"low\"}."
    ),
    ProviderCapability.GRADE: (
        "Grade the transcribed answer against the rubric. Apply every grading instruction "
        "listed under 'wisdoms'. Reply as JSON: {\"selected_item_ids\": [...], "
        "\"confidence\": \"high\"|\"medium\"|\"low\", \"rationale\": ...}."
    ),
    ProviderCapability.SUMMARIZE: (
        "Write one or two sentences summarizing the student's response and the selected "
        "rubric items. Reply as JSON: {\"text\": ...}."
    ),
    ProviderCapability.FEEDBACK: (
        "Write feedback for the student explaining each selected rubric item. Follow the "
        "style prompt if given. Reply as JSON: {\"text\": ...}."
    ),
    ProviderCapability.SYNTHESIZE_WISDOMS: (
        "Given discrepancies between AI rubric selections and instructor corrections, write "
        "explainable grading instructions. Reply as JSON: {\"wisdoms\": [{\"item_id\": ..., "
        "\"text\": ..., \"source_discrepancy_ids\": [...]}]}."
    ),
    ProviderCapability.PROPOSE_RUBRIC: (
        "Draft a rubric for the problem statement (and reference solution when given) using "
        "the requested scheme and point budget. Reply as JSON: {\"rubric\": {...}}."
    ),
}


class HttpBackend:
    """Adapter for a real LLM endpoint speaking an OpenAI-style chat API.

    Endpoint and credential come from configuration or the environment
    (``GRADELOOP_PROVIDER_URL`` / ``GRADELOOP_PROVIDER_KEY``). Each request
    sends the fixed capability template plus the canonical payload and
    expects a single JSON document back.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str = "gpt-4o",
        timeout_seconds: float = 60.0,
    ) -> None:
        self.endpoint = endpoint or os.environ.get("GRADELOOP_PROVIDER_URL", "")
        self.api_key = api_key or os.environ.get("GRADELOOP_PROVIDER_KEY", "")
        self.model = model
        self.timeout = timeout_seconds
        if not self.endpoint:
            raise ValueError("real provider requires an endpoint URL")

    def execute(self, request: ProviderRequest) -> Mapping[str, Any]:
        import httpx

        from .canon import canonical_json

        body = {
            "model": self.model,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": PROMPT_TEMPLATES[request.capability]},
                {"role": "user", "content": canonical_json(request.payload)},
            ],
        }
        try:
            response = httpx.post(
                self.endpoint.rstrip("/") + "/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(str(exc)) from exc
        if response.status_code >= 500:
            raise ProviderUnavailable(f"provider returned {response.status_code}")
        if response.status_code >= 400:
            raise MalformedProviderOutput(
                f"provider rejected the request: {response.status_code}"
            )
        try:
            content = response.json()["choices"][0]["message"]["content"]
            return json.loads(content)
        except (KeyError, IndexError, ValueError) as exc:
            raise MalformedProviderOutput(f"unparseable provider response: {exc}") from exc
