"""HTTP service tying the modules together behind a JSON API.

App factory plus a small context object holding the store, provider
gateway, pipeline, calibration manager, and submission matcher. Exports
are rendered as canonical bytes (sorted keys, fixed separators) so two
identical corpora produce byte-identical downloads.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping

from fastapi import Body, FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .analytics import accuracy_report, autograded_count, time_savings, usage_counters
from .calibration import CalibrationManager
from .canon import canonical_bytes, frac_from_str
from .errors import (
    EmptyRoster,
    GradingError,
    MalformedProviderOutput,
    ProviderUnavailable,
    StateConflict,
    UnknownEntity,
    ValidationFailed,
    VersionConflict,
)
from .ingest import (
    MatchResult,
    MatchStatus,
    SubmissionMatcher,
    UploadManifest,
    resolve_match,
    split_submissions,
)
from .mc import MsmcPolicy
from .model import (
    Assignment,
    ConfidenceTier,
    Course,
    Question,
    QuestionFormat,
    StudentRef,
    Submission,
    derived_id,
    validate_question,
)
from .pipeline import (
    GradeRecord,
    GradingPipeline,
    GradingRun,
    RecordStatus,
    apply_review,
)
from .provider import MockBackend, ProviderGateway
from .review import (
    ConfidencePolicy,
    DEFAULT_POLICY,
    build_review_queue,
    dispatch_feedback,
    export_grades_csv,
    render_view,
)
from .rubric import Rubric, RubricItem, RubricScheme, build_rubric_proposal_request, require_valid
from .store import DocumentStore

COURSE = "course"
ASSIGNMENT = "assignment"
QUESTION = "question"
SUBMISSION = "submission"
MATCH = "match"
RECORD = "grade_record"
RUN = "grading_run"
POLICY = "policy"


@dataclass
class ServiceContext:
    store: DocumentStore
    gateway: ProviderGateway
    pipeline: GradingPipeline
    calibration: CalibrationManager
    matcher: SubmissionMatcher
    run_threads: dict[str, threading.Thread] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    # -- typed loaders -------------------------------------------------------

    def course(self, course_id: str) -> Course:
        return Course.from_dict(self.store.get(COURSE, course_id).payload)

    def assignment(self, assignment_id: str) -> Assignment:
        return Assignment.from_dict(self.store.get(ASSIGNMENT, assignment_id).payload)

    def question(self, question_id: str) -> Question:
        return Question.from_dict(self.store.get(QUESTION, question_id).payload)

    def submission(self, submission_id: str) -> Submission:
        return Submission.from_dict(self.store.get(SUBMISSION, submission_id).payload)

    def record(self, record_id: str) -> GradeRecord:
        return GradeRecord.from_dict(self.store.get(RECORD, record_id).payload)

    def questions_of(self, assignment_id: str) -> list[Question]:
        questions = [
            Question.from_dict(r.payload)
            for r in self.store.list(QUESTION)
            if r.payload["assignment_id"] == assignment_id
        ]
        return sorted(questions, key=lambda q: q.ordinal)

    def submissions_of(self, assignment_id: str) -> list[Submission]:
        return [
            Submission.from_dict(r.payload)
            for r in self.store.list(SUBMISSION)
            if r.payload["assignment_id"] == assignment_id
        ]

    def records_of(self, assignment_id: str) -> list[GradeRecord]:
        question_ids = {q.id for q in self.questions_of(assignment_id)}
        return [
            GradeRecord.from_dict(r.payload)
            for r in self.store.list(RECORD)
            if r.payload["question_id"] in question_ids
        ]

    def unmatched_submission_ids(self, assignment_id: str) -> frozenset[str]:
        return frozenset(
            s.id for s in self.submissions_of(assignment_id) if s.student is None
        )

    def policy_of(self, assignment_id: str) -> ConfidencePolicy:
        stored = self.store.try_get(POLICY, assignment_id)
        if stored is None:
            return DEFAULT_POLICY
        return ConfidencePolicy.from_dict(stored.payload["rules"])

    def versioned(self, kind: str, entity_id: str) -> dict[str, Any]:
        stored = self.store.get(kind, entity_id)
        return {**stored.payload, "version": stored.version}

    # -- idempotent creation -------------------------------------------------

    def create(self, kind: str, entity_id: str, payload: Mapping[str, Any]) -> dict[str, Any]:
        """Create an entity; re-posting identical content returns the
        existing entity, diverging content is a conflict."""
        existing = self.store.try_get(kind, entity_id)
        if existing is not None:
            if existing.payload == dict(payload):
                return {**existing.payload, "version": existing.version}
            raise StateConflict(f"{kind}/{entity_id} already exists with different content")
        stored = self.store.put(kind, entity_id, payload, expected_version=0, action="create")
        return {**stored.payload, "version": stored.version}


def build_context(
    store: DocumentStore | None = None,
    gateway: ProviderGateway | None = None,
    fixture_path: str | None = None,
    store_path: str | None = None,
    parallelism: int = 8,
) -> ServiceContext:
    if store is None:
        store = DocumentStore(store_path)
    if gateway is None:
        backend = MockBackend.from_file(fixture_path) if fixture_path else MockBackend({})
        gateway = ProviderGateway(backend, max_parallel=parallelism)
    pipeline = GradingPipeline(store, gateway, parallelism=parallelism)
    calibration = CalibrationManager(store, pipeline, gateway)
    matcher = SubmissionMatcher(gateway)
    return ServiceContext(
        store=store,
        gateway=gateway,
        pipeline=pipeline,
        calibration=calibration,
        matcher=matcher,
    )


def _status_of(error: Exception) -> int:
    if isinstance(error, ProviderUnavailable):
        return 503
    if isinstance(error, MalformedProviderOutput):
        return 502
    if isinstance(error, (VersionConflict, StateConflict)):
        return 409
    if isinstance(error, UnknownEntity):
        return 404
    return 400


def _tier(value: str | None) -> ConfidenceTier | None:
    return ConfidenceTier(value) if value else None


def create_app(context: ServiceContext | None = None, **kwargs: Any) -> FastAPI:
    ctx = context if context is not None else build_context(**kwargs)
    app = FastAPI(title="gradeloop", docs_url=None, redoc_url=None)
    app.state.ctx = ctx
    idempotency_cache: dict[str, tuple[int, bytes, str]] = {}
    idempotency_lock = threading.Lock()

    @app.exception_handler(GradingError)
    async def grading_error_handler(request: Request, error: GradingError) -> JSONResponse:
        return JSONResponse(
            status_code=_status_of(error),
            content={"error": type(error).__name__, "detail": str(error)},
        )

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, error: ValueError) -> JSONResponse:
        return JSONResponse(
            status_code=400, content={"error": "ValueError", "detail": str(error)}
        )

    @app.middleware("http")
    async def idempotency_middleware(request: Request, call_next: Any) -> Response:
        key = request.headers.get("Idempotency-Key")
        if not key or request.method not in {"POST", "PUT", "PATCH"}:
            return await call_next(request)
        cache_key = f"{request.method} {request.url.path} {key}"
        with idempotency_lock:
            hit = idempotency_cache.get(cache_key)
        if hit is not None:
            status, body, media_type = hit
            return Response(content=body, status_code=status, media_type=media_type)
        response = await call_next(request)
        body = b"".join([chunk async for chunk in response.body_iterator])
        if response.status_code < 500:
            with idempotency_lock:
                idempotency_cache.setdefault(
                    cache_key, (response.status_code, body, response.media_type)
                )
        return Response(
            content=body,
            status_code=response.status_code,
            media_type=response.media_type,
            headers={
                k: v for k, v in response.headers.items() if k.lower() != "content-length"
            },
        )

    # -- health --------------------------------------------------------------

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    # -- courses and assignments --------------------------------------------

    @app.post("/courses", status_code=201)
    def create_course(body: dict = Body(...)) -> dict[str, Any]:
        roster = tuple(StudentRef.from_dict(s) for s in body.get("roster", []))
        course = Course(
            id=derived_id("course", body["name"], body.get("subject") or ""),
            name=body["name"],
            roster=roster,
            subject=body.get("subject"),
        )
        return ctx.create(COURSE, course.id, course.to_dict())

    @app.get("/courses")
    def list_courses() -> list[dict[str, Any]]:
        return [r.payload for r in ctx.store.list(COURSE)]

    @app.get("/courses/{course_id}")
    def get_course(course_id: str) -> dict[str, Any]:
        return ctx.versioned(COURSE, course_id)

    @app.post("/assignments", status_code=201)
    def create_assignment(body: dict = Body(...)) -> dict[str, Any]:
        course = ctx.course(body["course_id"])
        assignment = Assignment(
            id=derived_id("assignment", course.id, body["title"]),
            course_id=course.id,
            title=body["title"],
        )
        return ctx.create(ASSIGNMENT, assignment.id, assignment.to_dict())

    @app.get("/assignments")
    def list_assignments(course_id: str | None = None) -> list[dict[str, Any]]:
        return [
            r.payload
            for r in ctx.store.list(ASSIGNMENT)
            if course_id is None or r.payload["course_id"] == course_id
        ]

    @app.get("/assignments/{assignment_id}")
    def get_assignment(assignment_id: str) -> dict[str, Any]:
        return ctx.versioned(ASSIGNMENT, assignment_id)

    # -- questions and rubrics ----------------------------------------------

    @app.post("/questions", status_code=201)
    def create_question(body: dict = Body(...)) -> dict[str, Any]:
        assignment = ctx.assignment(body["assignment_id"])
        points = body.get("points")
        question = Question(
            id=derived_id("question", assignment.id, str(body["ordinal"])),
            assignment_id=assignment.id,
            ordinal=int(body["ordinal"]),
            format=QuestionFormat(body["format"]),
            statement=body.get("statement", ""),
            reference_solution=body.get("reference_solution", ""),
            options=tuple(body.get("options", ())),
            answer_key=frozenset(body.get("answer_key", ())),
            points=frac_from_str(str(points)) if points is not None else None,
        )
        report = validate_question(question, for_grading=False)
        if not report.ok:
            raise ValidationFailed("; ".join(report.violations))
        return ctx.create(QUESTION, question.id, question.to_dict())

    @app.get("/questions/{question_id}")
    def get_question(question_id: str) -> dict[str, Any]:
        return ctx.versioned(QUESTION, question_id)

    @app.get("/assignments/{assignment_id}/questions")
    def list_questions(assignment_id: str) -> list[dict[str, Any]]:
        ctx.assignment(assignment_id)
        return [q.to_dict() for q in ctx.questions_of(assignment_id)]

    @app.put("/questions/{question_id}/rubric")
    def put_rubric(question_id: str, body: dict = Body(...)) -> dict[str, Any]:
        question = ctx.question(question_id)
        items = tuple(
            RubricItem(
                id=item["id"],
                label=item["label"],
                points=frac_from_str(str(item["points"])),
                wisdom_notes=tuple(item.get("wisdom_notes", ())),
            )
            for item in body["items"]
        )
        rubric = Rubric(
            question_id=question_id,
            scheme=RubricScheme(body["scheme"]),
            items=items,
            base_points=frac_from_str(str(body.get("base_points", "0"))),
            min_total=frac_from_str(str(body.get("min_total", "0"))),
            max_total=frac_from_str(str(body["max_total"])),
        )
        require_valid(rubric)
        updated = question.with_rubric(rubric)
        report = validate_question(updated)
        if not report.ok:
            raise ValidationFailed("; ".join(report.violations))
        stored = ctx.store.put(QUESTION, question_id, updated.to_dict(), action="rubric")
        return {**stored.payload, "version": stored.version}

    @app.post("/questions/{question_id}/rubric/proposals")
    def propose_rubric(question_id: str, body: dict = Body(default={})) -> dict[str, Any]:
        question = ctx.question(question_id)
        request = build_rubric_proposal_request(
            question,
            scheme=RubricScheme(body.get("scheme", "subtractive")),
            point_budget=frac_from_str(str(body.get("point_budget", "10"))),
        )
        draft = ctx.gateway.propose_rubric(request)
        return draft.to_dict()

    # -- ingestion -----------------------------------------------------------

    @app.post("/submissions/bulk", status_code=201)
    def bulk_submissions(body: dict = Body(...)) -> dict[str, Any]:
        manifest = UploadManifest.from_dict(body)
        assignment = ctx.assignment(manifest.assignment_id)
        course = ctx.course(assignment.course_id)
        questions = ctx.questions_of(assignment.id)
        submissions = split_submissions(manifest, questions)
        matches: list[MatchResult] = []
        for submission in submissions:
            existing = ctx.store.try_get(SUBMISSION, submission.id)
            if existing is not None:
                # Re-upload of the same group; keep the stored state.
                matches.append(
                    MatchResult.from_dict(ctx.store.get(MATCH, submission.id).payload)
                )
                continue
            if course.roster and submission.name_region is not None:
                result = ctx.matcher.match(submission, course.roster)
            else:
                result = MatchResult(submission.id, None, 0.0, MatchStatus.UNMATCHED)
            if result.status is MatchStatus.AUTO_MATCHED and result.candidate is not None:
                submission = submission.with_student(result.candidate)
            ctx.store.put(SUBMISSION, submission.id, submission.to_dict(), action="ingest")
            ctx.store.put(MATCH, submission.id, result.to_dict(), action="match")
            matches.append(result)
        return {
            "assignment_id": assignment.id,
            "submissions": [s.to_dict() for s in ctx.submissions_of(assignment.id)],
            "matches": [m.to_dict() for m in matches],
        }

    @app.get("/submissions/{submission_id}")
    def get_submission(submission_id: str) -> dict[str, Any]:
        payload = ctx.versioned(SUBMISSION, submission_id)
        match = ctx.store.try_get(MATCH, submission_id)
        payload["match"] = match.payload if match else None
        return payload

    @app.get("/assignments/{assignment_id}/submissions")
    def list_submissions(assignment_id: str) -> list[dict[str, Any]]:
        ctx.assignment(assignment_id)
        out = []
        for submission in ctx.submissions_of(assignment_id):
            payload = submission.to_dict()
            match = ctx.store.try_get(MATCH, submission.id)
            payload["match"] = match.payload if match else None
            out.append(payload)
        return out

    @app.post("/submissions/{submission_id}/match")
    def match_submission(submission_id: str, body: dict = Body(...)) -> dict[str, Any]:
        submission = ctx.submission(submission_id)
        assignment = ctx.assignment(submission.assignment_id)
        course = ctx.course(assignment.course_id)
        if not course.roster:
            raise EmptyRoster(f"course {course.id} has an empty roster")
        current = MatchResult.from_dict(ctx.store.get(MATCH, submission_id).payload)
        student = next((s for s in course.roster if s.id == body["student_id"]), None)
        if student is None:
            raise ValidationFailed(f"student {body['student_id']} is not on the roster")
        bound, result = resolve_match(submission, current, student, course.roster)
        ctx.store.put(SUBMISSION, bound.id, bound.to_dict(), actor="instructor", action="match")
        ctx.store.put(MATCH, bound.id, result.to_dict(), actor="instructor", action="match")
        payload = bound.to_dict()
        payload["match"] = result.to_dict()
        return payload

    # -- review policy -------------------------------------------------------

    @app.get("/assignments/{assignment_id}/policy")
    def get_policy(assignment_id: str) -> dict[str, Any]:
        ctx.assignment(assignment_id)
        return {"assignment_id": assignment_id, "rules": ctx.policy_of(assignment_id).to_dict()}

    @app.put("/assignments/{assignment_id}/policy")
    def put_policy(assignment_id: str, body: dict = Body(...)) -> dict[str, Any]:
        ctx.assignment(assignment_id)
        policy = ConfidencePolicy.from_dict(body["rules"])
        ctx.store.put(
            POLICY,
            assignment_id,
            {"assignment_id": assignment_id, "rules": policy.to_dict()},
            action="policy",
        )
        return {"assignment_id": assignment_id, "rules": policy.to_dict()}

    # -- grading runs --------------------------------------------------------

    def _start_run(question_id: str, body: Mapping[str, Any], wait: bool) -> dict[str, Any]:
        question = ctx.question(question_id)
        submissions = ctx.submissions_of(question.assignment_id)
        if not submissions:
            raise ValidationFailed(f"assignment {question.assignment_id} has no submissions")
        policy = ctx.policy_of(question.assignment_id)
        wisdoms = ctx.calibration.wisdoms_for_question(question_id, active_only=True)
        regrade = bool(body.get("regrade", False))
        if regrade:
            prior = [
                r
                for r in ctx.pipeline.runs_for_question(question_id)
                if r.state.value == "completed"
            ]
            if not prior:
                raise StateConflict(f"question {question_id} has no completed run to regrade")
            run = ctx.pipeline.prepare_run(
                question,
                submissions,
                wisdoms,
                msmc_policy=prior[-1].msmc_policy,
                regrade_of=prior[-1].id,
            )
        else:
            run = ctx.pipeline.prepare_run(
                question,
                submissions,
                wisdoms,
                msmc_policy=MsmcPolicy(body.get("msmc_policy", "exact_match")),
            )

        if wait:
            final = ctx.pipeline.execute_run(run, question, submissions, policy)
            return final.to_dict()
        thread = threading.Thread(
            target=ctx.pipeline.execute_run,
            args=(run, question, submissions, policy),
            daemon=True,
        )
        with ctx.lock:
            ctx.run_threads[run.id] = thread
        thread.start()
        return run.to_dict()

    @app.post("/questions/{question_id}/grading-runs", status_code=202)
    def start_grading_run(
        question_id: str, body: dict = Body(default={}), wait: bool = False
    ) -> dict[str, Any]:
        return _start_run(question_id, body, wait)

    @app.get("/grading-runs/{run_id}")
    def get_run(run_id: str) -> dict[str, Any]:
        return ctx.versioned(RUN, run_id)

    @app.get("/questions/{question_id}/grading-runs")
    def list_runs(question_id: str) -> list[dict[str, Any]]:
        ctx.question(question_id)
        return [run.to_dict() for run in ctx.pipeline.runs_for_question(question_id)]

    # -- review --------------------------------------------------------------

    @app.get("/assignments/{assignment_id}/review-queue")
    def review_queue(assignment_id: str, seed: int = 0) -> dict[str, Any]:
        ctx.assignment(assignment_id)
        records = ctx.records_of(assignment_id)
        policy = ctx.policy_of(assignment_id)
        unmatched = ctx.unmatched_submission_ids(assignment_id)
        queue = build_review_queue(records, policy, seed, unmatched)
        by_id = {record.id: record for record in records}
        questions = {q.id: q for q in ctx.questions_of(assignment_id)}
        submissions = {s.id: s for s in ctx.submissions_of(assignment_id)}
        entries = []
        for entry in queue.entries:
            record = by_id[entry.record_id]
            submission = submissions.get(record.submission_id)
            student = submission.student if submission else None
            entries.append(
                {
                    **entry.to_dict(),
                    "question_id": record.question_id,
                    "question_ordinal": questions[record.question_id].ordinal,
                    "submission_id": record.submission_id,
                    "student": (
                        {"id": student.id, "display_name": student.display_name}
                        if student
                        else None
                    ),
                    "confidence": record.confidence.value if record.confidence else None,
                    "status": record.status.value,
                }
            )
        return {
            "assignment_id": assignment_id,
            "seed": queue.seed,
            "spot_check_count": queue.spot_check_count,
            "entries": entries,
        }

    @app.get("/grade-records/{record_id}")
    def get_record(record_id: str) -> dict[str, Any]:
        return ctx.versioned(RECORD, record_id)

    @app.get("/grade-records/{record_id}/view")
    def get_record_view(record_id: str) -> dict[str, Any]:
        stored = ctx.store.get(RECORD, record_id)
        record = GradeRecord.from_dict(stored.payload)
        question = ctx.question(record.question_id)
        submission = None
        if ctx.store.try_get(SUBMISSION, record.submission_id) is not None:
            submission = ctx.submission(record.submission_id)
        view = render_view(record, question, submission)
        view["version"] = stored.version
        return view

    @app.post("/grade-records/{record_id}/review")
    def review_record(record_id: str, body: dict = Body(...)) -> dict[str, Any]:
        record = ctx.record(record_id)
        question = ctx.question(record.question_id)
        selection = (
            frozenset(body["selected_item_ids"])
            if body.get("selected_item_ids") is not None
            else None
        )
        score = frac_from_str(str(body["score"])) if body.get("score") is not None else None
        updated = apply_review(
            record,
            question,
            selection,
            score_override=score,
            comment=body.get("comment"),
            confirm=bool(body.get("confirm", False)),
        )
        stored = ctx.store.put(
            RECORD,
            record_id,
            updated.to_dict(),
            expected_version=body.get("expected_version"),
            actor="reviewer",
            action="review",
        )
        return {**stored.payload, "version": stored.version}

    # -- calibration ---------------------------------------------------------

    @app.post("/questions/{question_id}/calibration-sessions", status_code=201)
    def open_calibration(question_id: str, body: dict = Body(default={})) -> dict[str, Any]:
        question = ctx.question(question_id)
        session = ctx.calibration.open_session(
            question,
            sample_size=int(body.get("sample_size", 10)),
            seed=int(body.get("seed", 0)),
        )
        return session.to_dict()

    @app.get("/calibration-sessions/{session_id}")
    def get_calibration(session_id: str) -> dict[str, Any]:
        return ctx.calibration.load_session(session_id).to_dict()

    @app.post("/calibration-sessions/{session_id}/corrections")
    def record_correction(session_id: str, body: dict = Body(...)) -> dict[str, Any]:
        session = ctx.calibration.load_session(session_id)
        question = ctx.question(session.question_id)
        updated = ctx.calibration.record_correction(
            session_id,
            body["record_id"],
            frozenset(body["selected_item_ids"]),
            question,
            comment=body.get("comment"),
        )
        return updated.to_dict()

    @app.get("/calibration-sessions/{session_id}/discrepancies")
    def get_discrepancies(session_id: str) -> list[dict[str, Any]]:
        return [d.to_dict() for d in ctx.calibration.extract_discrepancies(session_id)]

    @app.post("/calibration-sessions/{session_id}/propose-wisdoms")
    def propose_wisdoms(session_id: str) -> list[dict[str, Any]]:
        session = ctx.calibration.load_session(session_id)
        question = ctx.question(session.question_id)
        drafts = ctx.calibration.propose_wisdoms(session_id, question)
        return [w.to_dict() for w in drafts]

    @app.post("/calibration-sessions/{session_id}/apply")
    def apply_calibration(session_id: str) -> dict[str, Any]:
        session = ctx.calibration.load_session(session_id)
        question = ctx.question(session.question_id)
        policy = ctx.policy_of(question.assignment_id)
        applied, _ = ctx.calibration.apply_and_regrade(session_id, question, policy)
        return applied.to_dict()

    @app.get("/questions/{question_id}/wisdoms")
    def list_wisdoms(question_id: str, active: bool | None = None) -> list[dict[str, Any]]:
        ctx.question(question_id)
        wisdoms = ctx.calibration.wisdoms_for_question(question_id)
        if active is not None:
            wisdoms = [w for w in wisdoms if w.active is active]
        return [w.to_dict() for w in wisdoms]

    @app.get("/wisdoms/{wisdom_id}")
    def get_wisdom(wisdom_id: str) -> dict[str, Any]:
        return ctx.calibration.load_wisdom(wisdom_id).to_dict()

    @app.patch("/wisdoms/{wisdom_id}")
    def patch_wisdom(wisdom_id: str, body: dict = Body(...)) -> dict[str, Any]:
        wisdom = ctx.calibration.load_wisdom(wisdom_id)
        if "text" in body:
            wisdom = ctx.calibration.edit_wisdom(wisdom_id, body["text"])
        if "active" in body:
            wisdom = ctx.calibration.set_wisdom_active(wisdom_id, bool(body["active"]))
        return wisdom.to_dict()

    # -- feedback ------------------------------------------------------------

    @app.post("/assignments/{assignment_id}/feedback")
    def send_feedback(assignment_id: str, body: dict = Body(default={})) -> dict[str, Any]:
        ctx.assignment(assignment_id)
        records = ctx.records_of(assignment_id)
        questions = {q.id: q for q in ctx.questions_of(assignment_id)}
        updated, count, failed = dispatch_feedback(
            records, questions, ctx.gateway, style_prompt=body.get("style_prompt", "")
        )
        for record in updated:
            ctx.store.put(RECORD, record.id, record.to_dict(), action="feedback")
        return {"assignment_id": assignment_id, "dispatched": count, "failed": failed}

    # -- reports and exports -------------------------------------------------

    @app.get("/reports/time-savings")
    def report_time_savings(
        assignment_id: str, t_avg_minutes: str = "3"
    ) -> dict[str, Any]:
        ctx.assignment(assignment_id)
        submissions = ctx.submissions_of(assignment_id)
        questions = ctx.questions_of(assignment_id)
        records = ctx.records_of(assignment_id)
        policy = ctx.policy_of(assignment_id)
        unmatched = ctx.unmatched_submission_ids(assignment_id)
        c = autograded_count(records, policy, unmatched)
        report = time_savings(
            frac_from_str(t_avg_minutes), len(submissions), len(questions), c
        )
        return report.to_dict()

    @app.get("/reports/accuracy")
    def report_accuracy(
        by: str = "subject", tier: str | None = None, assignment_id: str | None = None
    ) -> dict[str, Any]:
        groups: dict[str, list[GradeRecord]] = {}
        if assignment_id is not None:
            ctx.assignment(assignment_id)
            groups[assignment_id] = ctx.records_of(assignment_id)
        else:
            for stored in ctx.store.list(COURSE):
                course = Course.from_dict(stored.payload)
                label = (course.subject or course.name) if by == "subject" else course.name
                for assignment in ctx.store.list(ASSIGNMENT):
                    if assignment.payload["course_id"] != course.id:
                        continue
                    groups.setdefault(label, []).extend(
                        ctx.records_of(assignment.payload["id"])
                    )
        return accuracy_report(groups, tier=_tier(tier))

    @app.get("/reports/usage")
    def report_usage() -> dict[str, int]:
        return usage_counters(ctx.gateway)

    @app.get("/assignments/{assignment_id}/export/grades.csv")
    def export_csv(assignment_id: str) -> Response:
        ctx.assignment(assignment_id)
        questions = ctx.questions_of(assignment_id)
        submissions = ctx.submissions_of(assignment_id)
        records = {r.id: r for r in ctx.records_of(assignment_id)}
        csv_text = export_grades_csv(questions, records, submissions)
        return Response(content=csv_text, media_type="text/csv")

    @app.get("/assignments/{assignment_id}/export/records.json")
    def export_records(assignment_id: str) -> Response:
        assignment = ctx.assignment(assignment_id)
        export = {
            "assignment": assignment.to_dict(),
            "questions": [q.to_dict() for q in ctx.questions_of(assignment_id)],
            "submissions": sorted(
                (s.to_dict() for s in ctx.submissions_of(assignment_id)),
                key=lambda s: s["id"],
            ),
            "records": sorted(
                (r.to_dict() for r in ctx.records_of(assignment_id)),
                key=lambda r: r["id"],
            ),
        }
        return Response(content=canonical_bytes(export), media_type="application/json")

    return app
