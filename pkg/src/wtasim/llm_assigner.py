"""Language-model-backed assignment with validation and fallback.

Each decision epoch is a fresh single-turn exchange: the scene snapshot is
rendered into a structured prompt, sent to a chat-completion endpoint, and
the reply is parsed as a bracketed MATLAB-style row vector of target ids.
Malformed or infeasible replies trigger a bounded number of re-queries with
the identical prompt; exhaustion falls back to a classical solver so the
mission loop always receives a feasible assignment.

A ``mock://<mode>`` endpoint scheme swaps the HTTP client for deterministic
in-process stand-ins (echo solvers and fault injectors) so the full query,
parse, validate, retry, and fallback path runs offline.
"""

from __future__ import annotations

import os
import re
import time as _time
from dataclasses import dataclass, field

import numpy as np
import requests

from .cost import CostConfig, CostMatrix, build_cost_matrix
from .geometry import SceneSnapshot
from .solvers import Assignment, MilpConstraints, solve_hungarian, solve_milp, _objective

__all__ = [
    "PromptDocument",
    "BackendConfig",
    "AssignerOutcome",
    "ParseFailure",
    "ParsedVector",
    "ValidationFailure",
    "BackendError",
    "BackendTimeout",
    "MOCK_MODES",
    "format_prompt",
    "render_vector",
    "extract_vector",
    "extract_matrix",
    "query_backend",
    "parse_response",
    "validate_assignment",
    "assign_with_fallback",
]

MOCK_MODES = (
    "echo_hungarian",
    "echo_previous",
    "malformed",
    "malformed_once_then_valid",
    "out_of_range",
    "timeout",
)

FALLBACK_SOLVERS = ("hungarian", "milp")

# Rendering of +inf time-to-asset entries in prompts.
INF_RENDER = "1e9"


@dataclass(frozen=True)
class PromptDocument:
    """The three sections of one decision-epoch prompt."""

    system_section: str
    scene_section: str
    decision_request: str

    def full_text(self) -> str:
        return "\n\n".join((self.system_section, self.scene_section, self.decision_request))


@dataclass
class BackendConfig:
    """Connection and policy settings for the assignment backend.

    endpoint_url accepts either an HTTP chat-completion URL or
    ``mock://<mode>`` with mode one of MOCK_MODES.
    """

    endpoint_url: str
    model_name: str = "gpt-4o-mini"
    api_key_env_var: str = "WTASIM_API_KEY"
    timeout: float = 10.0
    temperature: float = 0.0
    max_retries: int = 2
    fallback_solver: str = "hungarian"

    def __post_init__(self) -> None:
        if not self.timeout > 0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")
        if self.max_retries < 1:
            raise ValueError(f"max_retries must be at least 1, got {self.max_retries}")
        if self.fallback_solver not in FALLBACK_SOLVERS:
            raise ValueError(
                f"fallback_solver must be one of {FALLBACK_SOLVERS}, got {self.fallback_solver!r}"
            )
        if self.is_mock and self.mock_mode not in MOCK_MODES:
            raise ValueError(f"unknown mock mode {self.mock_mode!r}; choose from {MOCK_MODES}")

    @property
    def is_mock(self) -> bool:
        return self.endpoint_url.startswith("mock://")

    @property
    def mock_mode(self) -> str:
        return self.endpoint_url[len("mock://"):]


@dataclass
class AssignerOutcome:
    """Result of one epoch's assignment attempt chain.

    assignment is in snapshot column space (1-based target columns);
    clipped holds 0-based positions whose reply entries were clipped into
    range, and failures the reason for each unsuccessful attempt.
    """

    assignment: Assignment
    source: str  # "llm" | "fallback"
    attempts: int
    latency: float
    raw_response: str
    prompt: PromptDocument
    clipped: list[int] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)


class ParseFailure(ValueError):
    """Reply text did not yield a usable vector.

    reason is one of "no_vector", "wrong_arity", "empty_brackets".
    """

    def __init__(self, reason: str, detail: str):
        self.reason = reason
        super().__init__(f"{reason}: {detail}")


@dataclass
class ParsedVector:
    """Integer vector extracted from a reply, with clip bookkeeping."""

    values: list[int]
    clipped: list[int] = field(default_factory=list)


class ValidationFailure(ValueError):
    """Parsed vector violates the assignment constraints."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


class BackendError(RuntimeError):
    """Transport failure or bad status from the backend; retryable."""


class BackendTimeout(BackendError):
    """Backend did not answer within the configured timeout; retryable."""

    def __init__(self, message: str, latency: float):
        self.latency = latency
        super().__init__(message)


# ---------------------------------------------------------------------------
# Prompt rendering
# ---------------------------------------------------------------------------

def _fmt(x: float, precision: int) -> str:
    if np.isinf(x):
        return INF_RENDER
    return f"{float(x):.{precision}f}"


def _render_row(row: np.ndarray, precision: int) -> str:
    return ",".join(_fmt(x, precision) for x in row)


def _render_matrix(m: np.ndarray, precision: int) -> str:
    return "[" + ";".join("[" + _render_row(row, precision) + "]" for row in m) + "]"


def _render_list(v: np.ndarray, precision: int) -> str:
    return "[" + _render_row(np.asarray(v), precision) + "]"


def render_vector(ids) -> str:
    """Bracketed space-separated integer vector, the reply format."""
    return "[" + " ".join(str(int(k)) for k in ids) + "]"


_SYSTEM_SECTION = """You are an expert mission planner for a weapon target assignment problem.
Goal: Solve the optimal assignment problem and protect high-priority assets by assigning interceptors to incoming targets.

PROVIDED DATA STRUCTURE:
N_i = number of interceptors (agents), N_t = number of targets, N_a = number of defended assets.
Agents: agent_i, i=1,...,N_i; Targets: target_k, k=1,...,N_t; Assets: asset_m, m=1,...,N_a.
PREVIOUS_ASSIGNMENT: MATLAB row vector where entry i gives the Target ID assigned to Agent i.
DISTANCE_MATRIX (N_i x N_t): distance between Agent i and Target k.
CLOSING_MATRIX (N_i x N_t): relative closing speed between Agent i and Target k.
TIME_TO_ASSET (N_t): time until each target reaches its associated asset.
THREAT_LEVEL (N_t): threat level of each target.
ASSET_PRIORITY (N_a): priority of each defended asset.

CONSTRAINTS:
- Each interceptor must be assigned to exactly ONE target.
- Returned vector must follow the same format as PREVIOUS_ASSIGNMENT (index i = Agent ID, value = Target ID).
- Avoid frequent reassignments; keep PREVIOUS_ASSIGNMENT unless clearly advantageous.
- Prefer small distance, high closing speed, and low time-to-asset.
- Prioritize high-priority assets.
- RETURN ONLY a MATLAB row vector in the same format as PREVIOUS_ASSIGNMENT."""

_DECISION_REQUEST = """DECISION REQUEST:
Please return your decision for the assignment as a MATLAB row vector in the same format as PREVIOUS_ASSIGNMENT, where index i corresponds to the Agent ID and the value corresponds to the assigned Target ID. Example: [2 1 3 10 8 4 7 5 9 6]."""


def format_prompt(snapshot: SceneSnapshot, precision: int = 1) -> PromptDocument:
    """Render the snapshot into the structured three-section prompt.

    Byte-deterministic for identical snapshots. All ids are the agents'
    original ids; once removals make those ids non-contiguous, explicit
    AGENT_IDS / TARGET_IDS lines are added so the reply id space stays
    unambiguous.
    """
    lines = ["CURRENT SCENARIO INFORMATION:"]
    n, nt = snapshot.n_interceptors, snapshot.n_targets
    na = len(snapshot.asset_priority)
    lines.append(f"N_i = {n}, N_t = {nt}, N_a = {na}")
    if snapshot.interceptor_ids != list(range(1, n + 1)):
        lines.append("AGENT_IDS: " + render_vector(snapshot.interceptor_ids))
    if snapshot.target_ids != list(range(1, nt + 1)):
        lines.append("TARGET_IDS: " + render_vector(snapshot.target_ids))
    prev = snapshot.previous_assignment if snapshot.previous_assignment is not None else []
    lines.append("PREVIOUS_ASSIGNMENT: " + render_vector(prev))
    lines.append("DISTANCE_MATRIX: " + _render_matrix(snapshot.distance, precision))
    lines.append("CLOSING_MATRIX: " + _render_matrix(snapshot.closing, precision))
    lines.append("TIME_TO_ASSET: " + _render_list(snapshot.time_to_asset, precision))
    lines.append("THREAT_LEVEL: " + _render_list(snapshot.threat_level, precision))
    lines.append("ASSET_PRIORITY: " + _render_list(snapshot.asset_priority, precision))
    return PromptDocument(
        system_section=_SYSTEM_SECTION,
        scene_section="\n".join(lines),
        decision_request=_DECISION_REQUEST,
    )


def extract_vector(text: str, name: str) -> np.ndarray:
    """Pull a named bracketed list (e.g. "TIME_TO_ASSET") back out of a prompt."""
    m = re.search(rf"^{re.escape(name)}: \[(.*)\]$", text, re.MULTILINE)
    if m is None:
        raise ValueError(f"field {name} not found")
    body = m.group(1).strip()
    if not body:
        return np.empty(0)
    return np.array([float(tok) for tok in body.split(",")])


def extract_matrix(text: str, name: str) -> np.ndarray:
    """Pull a named row-major matrix back out of a prompt."""
    m = re.search(rf"^{re.escape(name)}: \[(.*)\]$", text, re.MULTILINE)
    if m is None:
        raise ValueError(f"field {name} not found")
    rows = []
    for chunk in m.group(1).split(";"):
        chunk = chunk.strip().strip("[]")
        rows.append([float(tok) for tok in chunk.split(",")])
    return np.array(rows)


# ---------------------------------------------------------------------------
# Response parsing and validation
# ---------------------------------------------------------------------------

_SPAN_RE = re.compile(r"\[([^\[\]]*)\]")
_VECTOR_RE = re.compile(r"^\s*-?\d+(?:[\s,]+-?\d+)*\s*$")
_STRAY_RE = re.compile(r"[^0-9,\s\-]")


def parse_response(raw: str, n_agents: int, n_targets: int) -> ParsedVector:
    """Extract the assignment vector from a raw reply.

    The first grammar match ('[' INT (SEP INT)* ']', SEP one-or-more of
    space/comma) on the earliest line containing one wins; stray
    non-numeric characters inside the brackets are stripped first. The
    vector must have exactly n_agents entries; entries outside
    [1, n_targets] are clipped into range and their positions flagged.

    Raises ParseFailure with reason "no_vector", "wrong_arity" or
    "empty_brackets".
    """
    saw_empty = False
    for line in raw.splitlines():
        for span in _SPAN_RE.finditer(line):
            content = span.group(1)
            if content.strip() == "":
                saw_empty = True
                continue
            cleaned = _STRAY_RE.sub("", content)
            if not _VECTOR_RE.match(cleaned):
                continue
            values = [int(tok) for tok in re.split(r"[\s,]+", cleaned.strip()) if tok]
            if len(values) != n_agents:
                raise ParseFailure(
                    "wrong_arity", f"expected {n_agents} entries, got {len(values)}"
                )
            clipped = []
            for idx, val in enumerate(values):
                bounded = min(max(val, 1), n_targets)
                if bounded != val:
                    values[idx] = bounded
                    clipped.append(idx)
            return ParsedVector(values=values, clipped=clipped)
    if saw_empty:
        raise ParseFailure("empty_brackets", "reply contained only empty brackets")
    raise ParseFailure("no_vector", "no bracketed integer vector in reply")


def validate_assignment(
    z,
    snapshot: SceneSnapshot,
    coverage_required: bool,
    cost_matrix: CostMatrix | None = None,
) -> Assignment:
    """Check a target-id vector against the assignment constraints.

    z holds one original target id per snapshot interceptor row. Every id
    must name a live target, and with coverage required every live target
    must appear at least once. Returns the Assignment in column space with
    its objective under the given cost matrix (NaN when absent).

    Raises ValidationFailure listing every violation.
    """
    violations: list[str] = []
    z = [int(k) for k in z]
    if len(z) != snapshot.n_interceptors:
        raise ValidationFailure(
            [f"expected {snapshot.n_interceptors} entries, got {len(z)}"]
        )
    cols = np.zeros(snapshot.n_interceptors, dtype=int)
    for i, target_id in enumerate(z):
        col = snapshot.target_column(target_id)
        if col is None:
            violations.append(
                f"interceptor {snapshot.interceptor_ids[i]}: target {target_id} is not live"
            )
        else:
            cols[i] = col + 1
    if not violations and coverage_required:
        covered = set(z)
        for target_id in snapshot.target_ids:
            if target_id not in covered:
                violations.append(f"target {target_id} uncovered")
    if violations:
        raise ValidationFailure(violations)
    objective = (
        _objective(cost_matrix.values, cols - 1) if cost_matrix is not None else float("nan")
    )
    return Assignment(target_of=cols, objective=objective)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

def _columns_to_ids(assignment: Assignment, snapshot: SceneSnapshot) -> list[int]:
    return [snapshot.target_ids[c - 1] for c in assignment.target_of]


def _mock_complete(
    prompt: PromptDocument,
    cfg: BackendConfig,
    snapshot: SceneSnapshot | None,
    cost_config: CostConfig | None,
    attempt: int,
) -> tuple[str, float]:
    """Deterministic in-process stand-ins for the chat backend.

    Echo modes compute from the full-precision snapshot rather than
    re-parsing the rendered prompt, so transparency against the direct
    solver route is exact; the prompt round-trip is checked separately.
    """
    mode = cfg.mock_mode
    if mode == "timeout":
        raise BackendTimeout(f"mock backend timed out after {cfg.timeout}s", cfg.timeout)
    if mode == "malformed" or (mode == "malformed_once_then_valid" and attempt == 1):
        return "I think agent 1 should engage the closest target, but let me reconsider.", 0.0
    if snapshot is None:
        raise BackendError(f"mock mode {mode!r} needs snapshot context")
    if mode == "echo_previous" and snapshot.previous_assignment is not None:
        return render_vector(snapshot.previous_assignment), 0.0
    cost = build_cost_matrix(snapshot, cost_config if cost_config is not None else CostConfig())
    ids = _columns_to_ids(solve_hungarian(cost), snapshot)
    if mode == "out_of_range":
        ids = list(ids)
        ids[0] = max(snapshot.target_ids) + 7
    return render_vector(ids), 0.0


def _http_complete(prompt: PromptDocument, cfg: BackendConfig) -> tuple[str, float]:
    """Single-turn chat-completion request; returns (text, wall latency)."""
    headers = {"Content-Type": "application/json"}
    if cfg.api_key_env_var:
        key = os.environ.get(cfg.api_key_env_var)
        if not key:
            raise BackendError(
                f"api key environment variable {cfg.api_key_env_var} is not set"
            )
        headers["Authorization"] = f"Bearer {key}"
    payload = {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt.full_text()}],
        "temperature": cfg.temperature,
    }
    start = _time.perf_counter()
    try:
        response = requests.post(
            cfg.endpoint_url, json=payload, headers=headers, timeout=cfg.timeout
        )
    except requests.Timeout as exc:
        raise BackendTimeout(
            f"backend timed out after {cfg.timeout}s", _time.perf_counter() - start
        ) from exc
    except requests.RequestException as exc:
        raise BackendError(f"transport error: {exc}") from exc
    latency = _time.perf_counter() - start
    if response.status_code != 200:
        raise BackendError(f"backend returned status {response.status_code}")
    try:
        text = response.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"malformed backend payload: {exc}") from exc
    return str(text), latency


def query_backend(
    prompt: PromptDocument,
    cfg: BackendConfig,
    snapshot: SceneSnapshot | None = None,
    cost_config: CostConfig | None = None,
    attempt: int = 1,
) -> tuple[str, float]:
    """Send one prompt and return (reply text, latency in seconds).

    Timeouts, transport errors, and bad statuses raise BackendError
    subclasses, all retryable. Mock endpoints are dispatched in-process
    with zero latency so runs are reproducible.
    """
    if cfg.is_mock:
        return _mock_complete(prompt, cfg, snapshot, cost_config, attempt)
    return _http_complete(prompt, cfg)


# ---------------------------------------------------------------------------
# Retry / fallback loop
# ---------------------------------------------------------------------------

def _solve_fallback(cost: CostMatrix, solver: str, coverage_required: bool) -> Assignment:
    if solver == "milp":
        return solve_milp(cost.values, MilpConstraints(coverage_required=coverage_required))
    return solve_hungarian(cost)


def assign_with_fallback(
    snapshot: SceneSnapshot,
    cfg: BackendConfig,
    cost_config: CostConfig | None = None,
    coverage_required: bool | None = None,
) -> AssignerOutcome:
    """Full epoch decision: prompt, query, parse, validate, retry, fall back.

    Up to max_retries + 1 identical-prompt attempts; any timeout, transport
    failure, parse failure, or constraint violation moves to the next
    attempt. After exhaustion the configured classical solver runs over the
    snapshot's surrogate cost matrix, so the outcome always carries a
    feasible assignment.
    """
    cost_config = cost_config if cost_config is not None else CostConfig()
    if coverage_required is None:
        coverage_required = snapshot.n_interceptors >= snapshot.n_targets
    prompt = format_prompt(snapshot)
    cost = build_cost_matrix(snapshot, cost_config)
    clip_bound = max(snapshot.target_ids)

    total_latency = 0.0
    failures: list[str] = []
    last_response = ""
    attempts = 0
    for attempt in range(1, cfg.max_retries + 2):
        attempts = attempt
        try:
            text, latency = query_backend(
                prompt, cfg, snapshot=snapshot, cost_config=cost_config, attempt=attempt
            )
        except BackendTimeout as exc:
            total_latency += exc.latency
            failures.append(f"attempt {attempt}: timeout ({exc})")
            continue
        except BackendError as exc:
            failures.append(f"attempt {attempt}: backend error ({exc})")
            continue
        total_latency += latency
        last_response = text
        try:
            parsed = parse_response(text, snapshot.n_interceptors, clip_bound)
        except ParseFailure as exc:
            failures.append(f"attempt {attempt}: parse failure ({exc})")
            continue
        try:
            assignment = validate_assignment(
                parsed.values, snapshot, coverage_required, cost_matrix=cost
            )
        except ValidationFailure as exc:
            failures.append(f"attempt {attempt}: invalid assignment ({exc})")
            continue
        return AssignerOutcome(
            assignment=assignment,
            source="llm",
            attempts=attempts,
            latency=total_latency,
            raw_response=text,
            prompt=prompt,
            clipped=parsed.clipped,
            failures=failures,
        )

    assignment = _solve_fallback(cost, cfg.fallback_solver, coverage_required)
    return AssignerOutcome(
        assignment=assignment,
        source="fallback",
        attempts=attempts,
        latency=total_latency,
        raw_response=last_response,
        prompt=prompt,
        failures=failures,
    )
