"""Registry of the 32 AI-readiness criteria and the 0-5 score scale.

Criterion identifiers are the JSON keys the scoring prompt asks the model to
emit, so ``Contradiction_avoidance`` keeps its capital C.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass


class Dimension(str, enum.Enum):
    ProblemDefinition = "ProblemDefinition"
    AcceptanceValidation = "AcceptanceValidation"
    ImplementationContext = "ImplementationContext"
    RiskAwareness = "RiskAwareness"
    Traceability = "Traceability"

    @property
    def short_label(self) -> str:
        return _SHORT_LABELS[self]


_SHORT_LABELS = {
    Dimension.ProblemDefinition: "Prob.",
    Dimension.AcceptanceValidation: "Acc/Val.",
    Dimension.ImplementationContext: "Impl.",
    Dimension.RiskAwareness: "Risk",
    Dimension.Traceability: "Trace",
}

SCORE_LABELS = {
    0: "missing",
    1: "poor",
    2: "weak",
    3: "acceptable",
    4: "good",
    5: "excellent",
}

MIN_SCORE = 0
MAX_SCORE = 5
HIGH_QUALITY_THRESHOLD = 4


@dataclass(frozen=True)
class Criterion:
    ordinal: int
    json_key: str
    display_name: str
    dimension: Dimension
    question: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dimension"] = self.dimension.value
        return d


_P = Dimension.ProblemDefinition
_A = Dimension.AcceptanceValidation
_I = Dimension.ImplementationContext
_R = Dimension.RiskAwareness
_T = Dimension.Traceability

# (json_key, display name, dimension, question) in prompt order.
_ROWS = (
    ("clarity", "Clarity of the problem statement", _P,
     "Does the issue clearly describe what needs to be solved or implemented?"),
    ("problem_comprehension", "Problem comprehension", _P,
     "Does the issue provide enough background information (e.g., logs, stack traces, screenshots, "
     "or examples) to fully understand the problem?"),
    ("ambiguity_avoidance", "Ambiguity avoidance", _P,
     "Does the issue avoid vague or open-ended phrasing, unclear goals, or underspecified requirements?"),
    ("Contradiction_avoidance", "Contradiction avoidance", _P,
     "Does the issue avoid any contradicting statements or claims?"),
    ("scope", "Scope of the task", _P,
     "Is the work small enough for one automated change and free of unrelated goals?"),
    ("detail_simplicity_alignment", "Detail and task-simplicity alignment", _P,
     "Does the issue provide an appropriate amount of detail relative to the task’s simplicity, "
     "including cases where no information is needed (e.g., dependency upgrade, adding a link, "
     "renaming a file, implementing another pull request)?"),
    ("expected_edge_behaviors", "Expected and edge behaviors", _P,
     "Does it specify both nominal and exceptional cases to consider?"),
    ("readability_structure", "Readability and structure", _P,
     "Is the issue well organized (sections, bullets, markdown headings, clear formatting)?"),
    ("root_cause_articulation", "Root cause articulation", _P,
     "Does the issue identify or hypothesize the underlying cause of the bug or limitation, "
     "not just the symptom?"),
    ("reproduction_steps", "Reproduction steps and evidence", _P,
     "Does the issue list concrete steps or minimal examples provided to reproduce or confirm the problem?"),
    ("validation_guidance", "Validation guidance", _A,
     "Does the issue describe how to verify correctness of the change "
     "(unit, integration, manual, end-to-end tests)?"),
    ("goal_test_alignment", "Goal-test alignment", _A,
     "Do the success conditions logically align with the stated work to do "
     "(e.g., problem to fix or feature to implement)?"),
    ("context_guidance", "Context guidance", _I,
     "Does the issue identify relevant files, modules, or components relevant to the work "
     "that the AI should do?"),
    ("solution_guidance", "Solution direction guidance", _I,
     "Does the issue propose a plausible approach or direction without prescribing exact code?"),
    ("context_setup", "Context setup / environment specification", _I,
     "Does the issue specify configuration, dependency, or version details relevant to the work to do?"),
    ("actionability_granularity", "Actionability granularity", _I,
     "Are the required actions broken down into manageable, concrete steps for implementation?"),
    ("common_task_familiarity", "Common task familiarity", _I,
     "Does the task to implement refer to a common Github task for which AI-agents are faimilar with "
     "(e.g., configure dependabot, configure CI/CD, ...)?"),
    ("system_localization", "System/component localization", _I,
     "Does the issue specify the affected subsystem or API explicitly (paths, classes, functions)?"),
    ("navigation_hints", "Naviguation hints", _I,
     "Does the issue provide directly or indirectly hints that will help the AI-agent quickly navigate "
     "the project (e.g., parameters or function names easy to grep, a specific type of artifacts "
     "like tests, ...)?"),
    ("boundary_assumptions", "Boundary and assumption clarity", _I,
     "Does the issue state environment assumptions, preconditions, or constraints "
     "(e.g., OS, framework version)?"),
    ("example_relevance", "Example relevance", _I,
     "Does the issue mention examples that are realistic and representative of real use cases?"),
    ("dependency_awareness", "Dependency awareness", _I,
     "Does the issue mention external APIs, libraries, or services it depends on or affects?"),
    ("migration_awareness", "Refactor and migration awareness", _I,
     "Does the issue acknowledge code or API migrations that may affect implementation?"),
    ("sensitive_task", "Sensitive or critical task awareness", _R,
     "Does the issue identify any security, privacy, or safety implications, ensuring suitability "
     "for AI involvement?"),
    ("risk_anticipation", "Risk anticipation", _R,
     "Does the issue foresee possible side effects, regressions, or integration risks for which the AI "
     "will need human oversight to avoid harm?"),
    ("backward_compatibility", "Backward compatibility consideration", _R,
     "Does the issue mention how changes affect existing users or APIs?"),
    ("performance_awareness", "Performance and scalability awareness", _R,
     "Does the issue mention performance constraints, latency, or efficiency targets?"),
    ("testing_risk_level", "Testing risk level", _R,
     "Does the issue describe potential testing difficulty (mocking, integration setup)?"),
    ("traceability_linkage", "Traceability and linkage", _T,
     "Does the issue reference related issues, PRs, specs, or documentation for context directly "
     "through links or indirectly (e.g., reference to the open pull requests)?"),
    ("context_freshness", "Update recency and context freshness", _T,
     "Does the issue appear up-to-date (references current versions, not deprecated APIs)?"),
    ("self_containment", "Self-containment", _T,
     "Can a developer or AI agent act on this issue using only the information provided?"),
    ("overall_coherence", "Overall coherence and alignment", _T,
     "Do all parts of the issue (problem, hints, validation) logically connect?"),
)

_CRITERIA: tuple[Criterion, ...] = tuple(
    Criterion(i + 1, key, name, dim, question) for i, (key, name, dim, question) in enumerate(_ROWS)
)
_BY_KEY = {c.json_key: c for c in _CRITERIA}

CRITERION_KEYS: tuple[str, ...] = tuple(c.json_key for c in _CRITERIA)


def all_criteria() -> list[Criterion]:
    return list(_CRITERIA)


def criteria_by_dimension(dim: Dimension) -> list[Criterion]:
    dim = Dimension(dim)
    return [c for c in _CRITERIA if c.dimension is dim]


def get_criterion(key: str) -> Criterion:
    try:
        return _BY_KEY[key]
    except KeyError:
        raise KeyError(f"unknown criterion key: {key!r}") from None


def is_valid_score(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and MIN_SCORE <= value <= MAX_SCORE


def is_high_quality(score: int) -> bool:
    """A score of 4 (good) or 5 (excellent) counts as high quality; 0-3 is low."""
    if not is_valid_score(score):
        raise ValueError(f"score must be an integer in 0..5, got {score!r}")
    return score >= HIGH_QUALITY_THRESHOLD


def score_label(score: int) -> str:
    return SCORE_LABELS[score]


def registry_document() -> list[dict]:
    return [c.to_dict() for c in _CRITERIA]


def registry_json(indent: int | None = 2) -> str:
    return json.dumps(registry_document(), indent=indent, ensure_ascii=False)


def load_registry_json(text: str) -> list[Criterion]:
    return [
        Criterion(d["ordinal"], d["json_key"], d["display_name"], Dimension(d["dimension"]), d["question"])
        for d in json.loads(text)
    ]
