"""One adaptive-test session: select, observe, refit, repeat."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from ..cdm import DiagnosisModel, UpdateConfig
from ..environment import Record, SessionState
from ..errors import ContractViolationError
from ..strategy import Strategy


@dataclass
class SessionResult:
    session: SessionState
    initial_state: np.ndarray
    states: list[np.ndarray] = field(default_factory=list)

    @property
    def questions(self) -> list[int]:
        return list(self.session.tested)

    @property
    def answers(self) -> list[int]:
        return [r.answer for r in self.session.records]


def run_session(strategy: Strategy, model: DiagnosisModel, examinee: int,
                answer_oracle: Callable[[int], int], n_steps: int,
                update_config: UpdateConfig | None = None,
                selectable: Iterable[int] | None = None) -> SessionResult:
    """Run the per-step loop for one examinee.

    ``selectable`` restricts selection to questions the oracle can answer
    (replay over recorded data); without it the whole pool is fair game.
    The state snapshot after each refit is kept for per-step metrics.
    """
    if n_steps < 1:
        raise ContractViolationError(f"n_steps must be >= 1, got {n_steps}")
    session = SessionState.fresh(examinee, model.n_questions, selectable)
    state = model.init_state()
    result = SessionResult(session=session, initial_state=state.copy())

    for _ in range(n_steps):
        question = strategy.select(session, model, state)
        answer = answer_oracle(question)
        if answer not in (0, 1):
            raise ContractViolationError(
                f"answer oracle returned {answer!r} for question {question}")
        session.administer(Record(examinee, question, int(answer)))
        state = model.update(state, session.records, update_config)
        result.states.append(state.copy())

    return result
