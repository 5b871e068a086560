"""Live negotiation arena: an HTTP service hosting human-vs-agent sessions.

The agent always holds seat A ("Alice"); the human holds seat B and only
ever sees their own utilities. Sessions walk a strict phase machine:

    negotiating -> selecting -> surveying -> done

State is kept in memory under a per-session lock and persisted as an
append-only JSON-lines event log per session, replayed on startup. Models
come from a read-only registry file: {"models": {"name": "path.npz"}}.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import env, model as model_mod
from .env import ActKind, Allocation, DialogueAct, IllegalActError
from .model import PolicyModel

PHASES = ("negotiating", "selecting", "surveying", "done")
LIKERT_ITEMS = 8
SURVEY_QUESTIONS = [
    "Was Alice an effective negotiator?",
    "How fair was Alice to you?",
    "Was Alice a pushover?",
    "How would you rate the difficulty of the negotiation?",
    "How fair was Alice to BOTH players?",
    "Did Alice's negotiation strategy seem novel?",
    "If you could have Alice represent you in a negotiation similar to the one you "
    "just completed, how likely would you be let it represent you?",
    "How much of an expert negotiator would you consider Alice to be?",
    "How would you describe Alice's negotiation strategy?",
    "Any comments?",
]


class ActBody(BaseModel):
    kind: str
    alloc: Optional[list[int]] = Field(default=None, min_length=3, max_length=3)


class SelectionBody(BaseModel):
    alloc: list[int] = Field(min_length=3, max_length=3)


class SurveyBody(BaseModel):
    q1: int
    q2: int
    q3: int
    q4: int
    q5: int
    q6: int
    q7: int
    q8: int
    q9: str = ""
    q10: str = ""


class CreateBody(BaseModel):
    model_id: str
    seed: Optional[int] = None
    practice: bool = False


def _parse_act(body: ActBody) -> DialogueAct:
    try:
        kind = ActKind(body.kind)
    except ValueError as exc:
        raise HTTPException(422, detail=f"unknown act kind {body.kind!r}") from exc
    alloc = Allocation(*body.alloc) if body.alloc is not None else None
    try:
        return DialogueAct(kind, alloc)
    except ValueError as exc:
        raise HTTPException(422, detail=str(exc)) from exc


@dataclass
class Session:
    session_id: str
    model_id: str
    seed: int
    practice: bool
    pair: env.ContextPair
    transcript: env.Transcript
    phase: str = "negotiating"
    outcome: Optional[env.Outcome] = None
    survey: Optional[dict] = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    agent_session: Optional[model_mod.Session] = field(default=None, repr=False)
    rng: Optional[np.random.Generator] = field(default=None, repr=False)

    def human_view(self) -> dict:
        acts = [
            {
                "who": "agent" if who == "A" else "you",
                "kind": act.kind.value,
                **({"alloc": list(act.allocation)} if act.allocation is not None else {}),
            }
            for who, act in self.transcript.acts
        ]
        view = {
            "session_id": self.session_id,
            "model_id": self.model_id,
            "practice": self.practice,
            "phase": self.phase,
            "counts": list(self.pair.counts),
            "your_utilities": list(self.pair.utilities_b),
            "your_turn": self.phase == "negotiating" and self.transcript.next_speaker == "B",
            "t_max": self.transcript.t_max,
            "transcript": acts,
        }
        if self.outcome is not None:
            view["outcome"] = {
                "agreed": self.outcome.agreed,
                "pareto": self.outcome.pareto,
                "your_score": self.outcome.score_b,
                "agent_score": self.outcome.score_a,
                "your_selection": list(self.outcome.selection_b),
                "agent_selection": list(self.outcome.selection_a),
            }
        return view


class ArenaStore:
    """Sessions plus study sequencing, persisted as JSONL event logs."""

    def __init__(self, models: dict[str, PolicyModel], data_dir: Path, include_practice: bool = True, t_max: int = env.DEFAULT_T_MAX):
        self.models = models
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.include_practice = include_practice
        self.t_max = t_max
        self.sessions: dict[str, Session] = {}
        self.study: dict[str, dict] = {}
        self.global_lock = threading.Lock()
        self.entropy = np.random.default_rng()
        self._replay()

    # -- persistence ------------------------------------------------------

    def _log(self, session_id: str, event: dict) -> None:
        with open(self.sessions_dir / f"{session_id}.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, separators=(",", ":")) + "\n")

    def _study_log(self, event: dict) -> None:
        with open(self.data_dir / "study.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, separators=(",", ":")) + "\n")

    def _replay(self) -> None:
        for path in sorted(self.sessions_dir.glob("*.jsonl")):
            try:
                self._replay_session(path)
            except Exception:  # noqa: BLE001 - a corrupt log must not block startup
                continue
        study_path = self.data_dir / "study.jsonl"
        if study_path.exists():
            for line in study_path.read_text(encoding="utf-8").splitlines():
                event = json.loads(line)
                state = self.study.setdefault(event["token"], {"steps": []})
                state["steps"].append((event["step"], event.get("session_id")))

    def _replay_session(self, path: Path) -> None:
        events = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
        if not events or events[0]["type"] != "created":
            return
        head = events[0]
        if head["model_id"] not in self.models:
            return
        session = self._build_session(
            session_id=head["session_id"],
            model_id=head["model_id"],
            seed=head["seed"],
            practice=head.get("practice", False),
        )
        for event in events[1:]:
            if event["type"] == "act":
                act = DialogueAct(
                    ActKind(event["kind"]),
                    Allocation(*event["alloc"]) if event.get("alloc") is not None else None,
                )
                self._apply_act_unlogged(session, event["who"], act)
            elif event["type"] == "selection":
                self._apply_selection_unlogged(session, Allocation(*event["alloc"]))
            elif event["type"] == "survey":
                session.survey = event["answers"]
                session.phase = "done"
        self.sessions[session.session_id] = session

    # -- session construction ---------------------------------------------

    def _build_session(self, session_id: str, model_id: str, seed: int, practice: bool) -> Session:
        rng = np.random.default_rng(seed)
        pair = env.sample_context_pair(rng)
        transcript = env.new_transcript(pair, t_max=self.t_max)
        model = self.models[model_id]
        agent_session = model_mod.Session(model, pair.context_for("A"), self_starts=pair.starter == "A")
        return Session(
            session_id=session_id,
            model_id=model_id,
            seed=seed,
            practice=practice,
            pair=pair,
            transcript=transcript,
            agent_session=agent_session,
            rng=rng,
        )

    def create_session(self, model_id: str, seed: Optional[int], practice: bool = False) -> Session:
        if model_id not in self.models:
            raise HTTPException(404, detail=f"unknown model {model_id!r}")
        if seed is None:
            seed = int(self.entropy.integers(2**31 - 1))
        session_id = uuid.uuid4().hex
        session = self._build_session(session_id, model_id, seed, practice)
        with self.global_lock:
            self.sessions[session_id] = session
        self._log(
            session_id,
            {
                "type": "created",
                "session_id": session_id,
                "model_id": model_id,
                "seed": seed,
                "practice": practice,
            },
        )
        with session.lock:
            self._agent_turn(session)
        return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, detail="unknown session")
        return session

    # -- game flow ----------------------------------------------------------

    def _apply_act_unlogged(self, session: Session, who: str, act: DialogueAct) -> None:
        assert session.transcript.next_speaker == who
        session.transcript = env.apply_act(session.transcript, act)
        session.agent_session.observe(act, who == "A")
        if session.transcript.terminated:
            session.phase = "selecting"

    def _agent_turn(self, session: Session) -> None:
        while session.phase == "negotiating" and session.transcript.next_speaker == "A":
            probs = session.agent_session.distribution()
            act = model_mod.id_to_act(int(session.rng.choice(model_mod.VOCAB_SIZE, p=probs)))
            self._apply_act_unlogged(session, "A", act)
            self._log(
                session.session_id,
                {
                    "type": "act",
                    "who": "A",
                    "kind": act.kind.value,
                    "alloc": list(act.allocation) if act.allocation else None,
                },
            )

    def human_act(self, session: Session, act: DialogueAct) -> None:
        with session.lock:
            if session.phase != "negotiating":
                raise HTTPException(409, detail=f"session is in phase {session.phase!r}")
            if session.transcript.next_speaker != "B":
                raise HTTPException(409, detail="not your turn")
            try:
                env.check_act_legal(session.transcript, act)
            except IllegalActError as exc:
                raise HTTPException(422, detail=f"illegal act ({exc.rule}): {exc}") from exc
            self._apply_act_unlogged(session, "B", act)
            self._log(
                session.session_id,
                {
                    "type": "act",
                    "who": "B",
                    "kind": act.kind.value,
                    "alloc": list(act.allocation) if act.allocation else None,
                },
            )
            self._agent_turn(session)

    def _apply_selection_unlogged(self, session: Session, human_selection: Allocation) -> None:
        env.validate_allocation(session.pair.counts, human_selection)
        deal = env.standing_agreement(session.transcript)
        counts = session.pair.counts
        if deal is not None:
            proposer, claim = deal
            agent_selection = claim if proposer == "A" else Allocation(*(c - x for c, x in zip(counts, claim)))
        else:
            picks = session.agent_session.selection_logits().argmax(axis=1)
            agent_selection = Allocation(*(min(int(p), c) for p, c in zip(picks, counts)))
        session.outcome = env.resolve_outcome(session.transcript, agent_selection, human_selection)
        session.phase = "surveying"

    def submit_selection(self, session: Session, alloc: Allocation) -> None:
        with session.lock:
            if session.phase != "selecting":
                raise HTTPException(409, detail=f"session is in phase {session.phase!r}")
            try:
                self._apply_selection_unlogged(session, alloc)
            except ValueError as exc:
                raise HTTPException(422, detail=str(exc)) from exc
            self._log(session.session_id, {"type": "selection", "alloc": list(alloc)})

    def record_survey(self, session: Session, body: SurveyBody) -> None:
        with session.lock:
            if session.phase != "surveying":
                raise HTTPException(409, detail=f"session is in phase {session.phase!r}")
            answers = body.model_dump()
            for i in range(1, LIKERT_ITEMS + 1):
                value = answers[f"q{i}"]
                if not 1 <= value <= 5:
                    raise HTTPException(422, detail=f"q{i} must lie in 1..5, got {value}")
            session.survey = answers
            session.phase = "done"
            self._log(session.session_id, {"type": "survey", "answers": answers})

    # -- study sequencing ---------------------------------------------------

    def study_next(self, token: str) -> dict:
        with self.global_lock:
            state = self.study.setdefault(token, {"steps": []})
            steps = state["steps"]
            # resume an unfinished negotiation step
            if steps:
                step, session_id = steps[-1]
                if session_id is not None:
                    session = self.sessions.get(session_id)
                    if session is not None and session.phase != "done":
                        return {"step": step, "session": session.human_view()}
            sequence = self._study_sequence(token)
            if len(steps) >= len(sequence):
                return {"step": "done"}
            step_name, model_id = sequence[len(steps)]
            if step_name == "quiz":
                steps.append(("quiz", None))
                self._study_log({"token": token, "step": "quiz", "session_id": None})
                return {"step": "quiz", "questions": SURVEY_QUESTIONS[:2]}
        session = self.create_session(model_id, seed=None, practice=step_name == "practice")
        with self.global_lock:
            self.study[token]["steps"].append((step_name, session.session_id))
        self._study_log({"token": token, "step": step_name, "session_id": session.session_id})
        return {"step": step_name, "session": session.human_view()}

    def _study_sequence(self, token: str) -> list[tuple[str, Optional[str]]]:
        names = sorted(self.models)
        order = np.random.default_rng(abs(hash(token)) % (2**32)).permutation(len(names))
        sequence: list[tuple[str, Optional[str]]] = []
        if self.include_practice:
            sequence.append(("quiz", None))
            sequence.append(("practice", names[int(order[0])]))
        sequence.extend(("negotiate", names[int(i)]) for i in order)
        return sequence

    # -- export -------------------------------------------------------------

    def export_rows(self) -> list[dict]:
        rows = []
        for session in sorted(self.sessions.values(), key=lambda s: s.session_id):
            if session.outcome is None or session.practice:
                continue
            row = {
                "session_id": session.session_id,
                "model_id": session.model_id,
                "agreed": session.outcome.agreed,
                "pareto": session.outcome.pareto,
                "human_score": session.outcome.score_b,
                "agent_score": session.outcome.score_a,
                "length": len(session.transcript),
            }
            answers = session.survey or {}
            for i in range(1, 11):
                row[f"q{i}"] = answers.get(f"q{i}", "")
            rows.append(row)
        return rows


def load_registry(registry_path, data_dir=None) -> dict[str, PolicyModel]:
    path = Path(registry_path)
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    models = {}
    for name, model_file in spec["models"].items():
        model_path = Path(model_file)
        if not model_path.is_absolute():
            model_path = path.parent / model_path
        models[name] = model_mod.load_model(model_path)
    return models


def build_app(
    registry_path=None,
    data_dir=None,
    models: Optional[dict[str, PolicyModel]] = None,
    include_practice: bool = True,
    t_max: int = env.DEFAULT_T_MAX,
    ui_dir=None,
) -> FastAPI:
    if models is None:
        models = load_registry(registry_path)
    store = ArenaStore(models, Path(data_dir), include_practice=include_practice, t_max=t_max)
    app = FastAPI(title="negolab arena")
    app.state.store = store
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=str(ui_dir), html=True), name="webui")

    @app.post("/sessions")
    def create_session(body: CreateBody):
        session = store.create_session(body.model_id, body.seed, practice=body.practice)
        return session.human_view()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return store.get(session_id).human_view()

    @app.post("/sessions/{session_id}/acts")
    def post_act(session_id: str, body: ActBody):
        session = store.get(session_id)
        store.human_act(session, _parse_act(body))
        return session.human_view()

    @app.post("/sessions/{session_id}/selection")
    def post_selection(session_id: str, body: SelectionBody):
        session = store.get(session_id)
        store.submit_selection(session, Allocation(*body.alloc))
        return session.human_view()

    @app.post("/sessions/{session_id}/survey")
    def post_survey(session_id: str, body: SurveyBody):
        session = store.get(session_id)
        store.record_survey(session, body)
        return session.human_view()

    @app.get("/survey/questions")
    def survey_questions():
        return {"questions": SURVEY_QUESTIONS, "likert_items": LIKERT_ITEMS}

    @app.get("/export")
    def export_csv():
        from fastapi.responses import PlainTextResponse

        rows = store.export_rows()
        columns = [
            "session_id",
            "model_id",
            "agreed",
            "pareto",
            "human_score",
            "agent_score",
            "length",
        ] + [f"q{i}" for i in range(1, 11)]
        lines = [",".join(columns)]
        for row in rows:
            lines.append(",".join(str(row[c]) for c in columns))
        return PlainTextResponse("\n".join(lines) + "\n", media_type="text/csv")

    @app.get("/export/summary")
    def export_summary():
        rows = store.export_rows()
        by_model: dict[str, list[dict]] = {}
        for row in rows:
            if row["q1"] != "":
                by_model.setdefault(row["model_id"], []).append(row)
        summary = {}
        for model_id, model_rows in sorted(by_model.items()):
            summary[model_id] = {
                f"q{i}": float(np.mean([r[f"q{i}"] for r in model_rows])) for i in range(1, LIKERT_ITEMS + 1)
            }
            summary[model_id]["n"] = len(model_rows)
        return summary

    @app.get("/study/{token}/next")
    def study_next(token: str):
        return store.study_next(token)

    return app
