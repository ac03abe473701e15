"""Prompt rendering: statements, worked exemplars, and refinement follow-ups.

Three prompt modes share one pipeline:

* ``Direct`` -- m statement/solution shot pairs, then the target question.
* ``CoT``    -- one worked exemplar whose reasoning section replays a greedy
  trace (straight-line, no backtracking).
* ``AoT``    -- one worked exemplar whose reasoning section replays a full
  depth-first trace, prunes and backtracks included.

The exemplar reasoning section always has the same five numbered phases
(State definition / Initialization / Search / Solution path / Output Format),
and every search step is rendered with the same four fields (Step /
Transition tried / preview & test / Outcome).  Formats are fixed: rendering
is a pure function of the instance, mode and exemplars.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

from .answers import canonical_text
from .generate import EXEMPLAR_LEVEL, exemplar_instance
from .solver import Action, SearchMode, SearchTrace, solve
from .tasks import (
    MeetingPayload,
    Payload,
    ProblemInstance,
    TaskError,
    TaskKind,
    ThreeDMPayload,
    TripPayload,
    Verdict,
    VertexCoverPayload,
    minutes_to_clock,
    payload_kind,
)


class PromptError(TaskError):
    """Base class for prompt-rendering failures."""


class WrongTraceMode(PromptError):
    """The exemplar trace's search mode does not fit the prompt mode."""


class TraceNotSuccessful(PromptError):
    """Worked exemplars must come from traces that found a solution."""


class ExemplarTargetOverlap(PromptError):
    """The target instance may never appear among its own exemplars."""


class ContextBudgetExceeded(PromptError):
    """The body exceeds the token budget even after trace truncation."""


class PromptMode(str, Enum):
    DIRECT = "Direct"
    COT = "CoT"
    AOT = "AoT"


@dataclass(frozen=True)
class PromptBundle:
    """A fully rendered prompt plus the metadata needed to trace it back."""

    mode: PromptMode
    system_text: str
    exemplar_ids: tuple[str, ...]
    shot_count: int
    body: str
    target_id: str
    round_index: int = 0


DIRECT_SHOT_COUNT = 5
WORKED_SHOT_COUNT = 1

TASK_DESCRIPTIONS: dict[TaskKind, str] = {
    TaskKind.TRIP_PLANNING: (
        "You are an expert at planning trips. You are given a few constraints "
        "regarding the cities to visit and the durations of staying at each "
        "city. You are also given the flight information between the cities."
    ),
    TaskKind.VERTEX_COVER: (
        "You are an expert at graph covering problems. You are given an "
        "undirected graph and a required cover size. You must choose vertices "
        "so that every edge has at least one chosen endpoint."
    ),
    TaskKind.THREE_DM: (
        "You are an expert at combinatorial matching problems. You are given "
        "triples drawn from three disjoint element sets. You must select "
        "disjoint triples that cover every element exactly once."
    ),
    TaskKind.MEETING_PLANNING: (
        "You are an expert at planning meetings. You are given friends' "
        "locations and availability windows along with travel times between "
        "locations. You must meet as many friends as possible."
    ),
}

PREVIEW_HEADERS: dict[TaskKind, str] = {
    TaskKind.TRIP_PLANNING: "Calendar preview & test:",
    TaskKind.VERTEX_COVER: "Cover preview & test:",
    TaskKind.THREE_DM: "Matching preview & test:",
    TaskKind.MEETING_PLANNING: "Schedule preview & test:",
}

SEARCH_PHASE_TITLES: dict[PromptMode, str] = {
    PromptMode.COT: "Greedy Search",
    PromptMode.AOT: "Depth-First Search with pruning",
}

THINKING_HEADERS: dict[PromptMode, str] = {
    PromptMode.COT: "Greedy Search Thinking Process:",
    PromptMode.AOT: "Depth-First Search Thinking Process:",
}

_STATE_DEFINITIONS: dict[TaskKind, tuple[str, ...]] = {
    TaskKind.TRIP_PLANNING: (
        "path  ordered list of visited cities",
        "UD  current independent-day total",
        "start  calendar start-day of the last city",
        "used  set of visited cities",
    ),
    TaskKind.VERTEX_COVER: (
        "cover  set of chosen vertices",
        "uncovered  edges with no chosen endpoint yet",
        "budget  total number of vertices allowed",
    ),
    TaskKind.THREE_DM: (
        "matched  chosen triples so far",
        "used  y and z elements already taken",
        "next  the smallest x element still unmatched",
    ),
    TaskKind.MEETING_PLANNING: (
        "location  where you currently are",
        "clock  the current time of day",
        "met  friends already met",
    ),
}

_WINDOW_SENTENCES: dict[str, str] = {
    "wedding": "You are going to attend a wedding in {city} between day {a} and day {b}.",
    "visit relatives": "You plan to visit relatives in {city} between day {a} and day {b}.",
    "workshop": "You have to attend a workshop in {city} between day {a} and day {b}.",
    "meet your friends": (
        "You would like to meet your friends at {city} between day {a} and "
        "day {b} to tour together."
    ),
    "annual show": "You want to attend the annual show in {city} between day {a} and day {b}.",
    "conference": "You have to attend a conference in {city} between day {a} and day {b}.",
}

_NUMBER_WORDS = (
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen",
    "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
)


def _number_word(n: int) -> str:
    return _NUMBER_WORDS[n] if 0 <= n < len(_NUMBER_WORDS) else str(n)


def estimate_tokens(text: str) -> int:
    """Cheap length-based token estimate (≈4 characters per token)."""
    return max(1, len(text) // 4)


# ---------------------------------------------------------------------------
# Problem statements
# ---------------------------------------------------------------------------


def _trip_statement(payload: TripPayload) -> str:
    n = len(payload.cities)
    noun = "city" if n == 1 else "cities"
    sentences = [
        f"You plan to visit {n} European {noun} for {payload.total_days} days in total.",
        "You only take direct flights to commute between cities.",
    ]
    for city in payload.cities:
        sentences.append(f"You plan to stay in {city} for {payload.stay_of(city)} days.")
        w = payload.window_of(city)
        if w:
            sentences.append(
                _WINDOW_SENTENCES[w.label].format(city=city, a=w.start, b=w.end)
            )
    items = []
    for i, a in enumerate(payload.cities):
        for b in payload.cities[i + 1 :]:
            there = payload.has_flight(a, b)
            back = payload.has_flight(b, a)
            if there and back:
                items.append(f"{a} and {b}")
            elif there:
                items.append(f"from {a} to {b}")
            elif back:
                items.append(f"from {b} to {a}")
    flights = ", ".join(items) + "." if items else "none."
    return (
        " ".join(sentences)
        + "\n\nHere are the cities that have direct flights:\n"
        + flights
        + f"\n\nFind a trip plan of visiting the cities for {payload.total_days} "
        "days by taking direct flights to commute between them."
    )


def _cover_statement(payload: VertexCoverPayload) -> str:
    n, m, k = payload.vertex_count, len(payload.edges), payload.target_size
    edges = ", ".join(f"V{u}-V{v}" for u, v in payload.edges) + "." if payload.edges else "none."
    return (
        f"You are given an undirected graph with {n} vertices, labeled V0 "
        f"through V{n - 1}, and {m} edges. A vertex cover is a set of vertices "
        "that includes at least one endpoint of every edge.\n\n"
        "Here are the edges of the graph:\n"
        + edges
        + f"\n\nFind a vertex cover of the graph that uses exactly {k} vertices."
    )


def _threedm_statement(payload: ThreeDMPayload) -> str:
    n = payload.n
    triples = (
        ", ".join(f"(x{x}, y{y}, z{z})" for x, y, z in payload.triples) + "."
        if payload.triples
        else "none."
    )
    return (
        f"You are given three disjoint sets X, Y and Z, each with {n} elements: "
        f"x0 through x{n - 1}, y0 through y{n - 1}, and z0 through z{n - 1}. "
        f"A perfect matching is a set of {n} triples, each using one element of "
        "X, one of Y and one of Z, such that every element appears in exactly "
        "one chosen triple.\n\n"
        "Here are the available triples:\n"
        + triples
        + "\n\nFind a perfect matching using only the listed triples."
    )


def _meeting_statement(payload: MeetingPayload) -> str:
    sentences = [
        "You are visiting San Francisco for one day and want to meet as many "
        "friends as possible.",
        f"You arrive at {payload.start_location} at "
        f"{minutes_to_clock(payload.day_start)}.",
    ]
    for f in payload.friends:
        sentences.append(
            f"{f.name} will be at {f.location} from "
            f"{minutes_to_clock(f.avail_start)} to {minutes_to_clock(f.avail_end)}; "
            f"you would like to meet {f.name} for at least {f.min_minutes} minutes."
        )
    travel = (
        ", ".join(
            f"{a} and {b}: {t}"
            for (a, b), t in sorted(payload.travel_minutes.items())
        )
        + "."
        if payload.travel_minutes
        else "none."
    )
    return (
        " ".join(sentences)
        + "\n\nHere are the travel times in minutes:\n"
        + travel
        + "\n\nFind a schedule that meets as many friends as possible, honoring "
        "every availability window and all travel times."
    )


def statement_text(payload: Payload) -> str:
    """The natural-language question for a payload (deterministic, fixed form)."""
    if isinstance(payload, TripPayload):
        return _trip_statement(payload)
    if isinstance(payload, VertexCoverPayload):
        return _cover_statement(payload)
    if isinstance(payload, ThreeDMPayload):
        return _threedm_statement(payload)
    assert isinstance(payload, MeetingPayload)
    return _meeting_statement(payload)


# ---------------------------------------------------------------------------
# Exemplar sections: objective and constraints
# ---------------------------------------------------------------------------


def _objective(payload: Payload) -> str:
    if isinstance(payload, TripPayload):
        return (
            f"Plan a **{payload.total_days}-day** trip that visits the "
            f"**{_number_word(len(payload.cities))}** European cities below, "
            "using only the direct flights provided."
        )
    if isinstance(payload, VertexCoverPayload):
        return (
            f"Choose **{payload.target_size}** vertices of the "
            f"**{payload.vertex_count}-vertex** graph below so that every "
            "listed edge has at least one chosen endpoint."
        )
    if isinstance(payload, ThreeDMPayload):
        return (
            f"Choose **{_number_word(payload.n)}** pairwise-disjoint triples "
            "from the list below so that every element of X, Y and Z is "
            "covered exactly once."
        )
    assert isinstance(payload, MeetingPayload)
    return (
        f"Plan one day that meets as many of the "
        f"**{_number_word(len(payload.friends))}** friends below as possible, "
        f"starting from {payload.start_location} at "
        f"{minutes_to_clock(payload.day_start)}."
    )


def _trip_constraints(payload: TripPayload) -> str:
    parts = [
        "1. **Adjacency overlap**  The last day of city *i* is also the first "
        "day of city *i + 1*.",
        "2. **Stay-length & fixed-window requirements**",
    ]
    for city in payload.cities:
        w = payload.window_of(city)
        window = (
            f"**must cover Day {w.start}-{w.end}** ({w.label})" if w else "--"
        )
        parts.append(
            f"City: {city}\nRequired stay: {payload.stay_of(city)} days\n"
            f"Fixed-day window: {window}"
        )
    parts.append(
        "The sum of **independent days** (Σ stay - overlaps) must equal "
        f"**{payload.total_days}** exactly."
    )
    lines = []
    for origin in payload.cities:
        hops = [
            f"{origin}→{dest}"
            for dest in payload.cities
            if dest != origin and payload.has_flight(origin, dest)
        ]
        if hops:
            lines.append("  ".join(hops))
    flights = "\n".join(lines) if lines else "none"
    parts.append(
        "3. **Flights requirements**  A direct flight exists **only** when "
        "explicitly listed:\n\n" + flights
    )
    return "\n\n".join(parts)


def _cover_constraints(payload: VertexCoverPayload) -> str:
    by_u: dict[int, list[str]] = {}
    for u, v in payload.edges:
        by_u.setdefault(u, []).append(f"V{u}-V{v}")
    lines = ["  ".join(by_u[u]) for u in sorted(by_u)]
    edges = "\n".join(lines) if lines else "none"
    return "\n\n".join(
        [
            "1. **Coverage**  Every listed edge needs at least one chosen endpoint.",
            f"2. **Size budget**  The cover must use exactly "
            f"**{payload.target_size}** vertices.",
            "3. **Edges**  An edge exists **only** when explicitly listed:\n\n"
            + edges,
        ]
    )


def _threedm_constraints(payload: ThreeDMPayload) -> str:
    by_x: dict[int, list[str]] = {}
    for x, y, z in payload.triples:
        by_x.setdefault(x, []).append(f"(x{x}, y{y}, z{z})")
    lines = [f"x{x}: " + "  ".join(by_x[x]) for x in sorted(by_x)]
    triples = "\n".join(lines) if lines else "none"
    return "\n\n".join(
        [
            "1. **Disjointness**  No two chosen triples may share any element.",
            "2. **Coverage**  Every element of X, Y and Z must appear in "
            "exactly one chosen triple.",
            "3. **Available triples**  A triple may be chosen **only** when "
            "explicitly listed:\n\n" + triples,
        ]
    )


def _meeting_constraints(payload: MeetingPayload) -> str:
    parts = [
        "1. **Availability windows**  A friend can only be met inside the "
        "listed window, for at least the listed minimum duration.",
        f"2. **Travel**  You start at {payload.start_location} at "
        f"{minutes_to_clock(payload.day_start)}; moving between locations "
        "costs the listed minutes.",
    ]
    for f in payload.friends:
        parts.append(
            f"Friend: {f.name}\nLocation: {f.location}\n"
            f"Available: {minutes_to_clock(f.avail_start)}-"
            f"{minutes_to_clock(f.avail_end)}\n"
            f"Minimum: {f.min_minutes} minutes"
        )
    by_first: dict[str, list[str]] = {}
    for (a, b), t in sorted(payload.travel_minutes.items()):
        by_first.setdefault(a, []).append(f"{a} ↔ {b}: {t}")
    lines = ["  ".join(by_first[a]) for a in sorted(by_first)]
    travel = "\n".join(lines) if lines else "none"
    parts.append("Travel times in minutes:\n" + travel)
    return "\n\n".join(parts)


def _constraints(payload: Payload) -> str:
    if isinstance(payload, TripPayload):
        return _trip_constraints(payload)
    if isinstance(payload, VertexCoverPayload):
        return _cover_constraints(payload)
    if isinstance(payload, ThreeDMPayload):
        return _threedm_constraints(payload)
    assert isinstance(payload, MeetingPayload)
    return _meeting_constraints(payload)


# ---------------------------------------------------------------------------
# Exemplar sections: the search narrative
# ---------------------------------------------------------------------------


def _init_comment(detail: str) -> str:
    return detail.split("; ")[-1]


def _step_block(kind: TaskKind, label: str, transition: str, preview: str, outcome: str) -> str:
    return (
        f"Step: {label}\n"
        f"Transition tried: {transition}\n"
        f"{PREVIEW_HEADERS[kind]} {preview}\n"
        f"Outcome: {outcome}"
    )


def _transition_text(kind: TaskKind, mode: PromptMode, event) -> str:
    # The depth-first exemplar elides the parent on deep transitions; the
    # greedy exemplar names it at every step.
    if (
        mode is PromptMode.AOT
        and kind is TaskKind.TRIP_PLANNING
        and event.depth >= 3
        and "→" in event.detail
    ):
        return "…→" + event.detail.split("→", 1)[1]
    return event.detail


def _event_block(kind: TaskKind, mode: PromptMode, event, success_label: str | None) -> str:
    if event.action is Action.BACKTRACK:
        return f"Backtrack: {event.detail}"
    if event.action is Action.PRUNE:
        outcome = f"**Prune ({event.reason})**"
    elif event.step_label == success_label:
        outcome = "**Success**"
    else:
        outcome = "keep"
    return _step_block(
        kind, event.step_label, _transition_text(kind, mode, event),
        event.state_summary, outcome,
    )


@dataclass
class _Unit:
    """A droppable run of step blocks inside the accepting section."""

    blocks: list[str]
    step_count: int
    droppable: bool
    shared_prefix: int
    position: int


@dataclass
class _Section:
    """One root subtree of a DFS trace (or the whole trace when rootless)."""

    root: str
    units: list[_Unit]
    has_success: bool
    narrative: str | None = None

    @property
    def step_count(self) -> int:
        return sum(u.step_count for u in self.units)


def _prefix_len(a: str, b: str) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def _units_for(
    kind: TaskKind,
    mode: PromptMode,
    events: list,
    success_label: str | None,
) -> list[_Unit]:
    on_path: set[str] = {"S0"}
    if success_label:
        on_path.update(success_label[:i] for i in range(1, len(success_label) + 1))
    units: list[_Unit] = []
    group: _Unit | None = None
    group_root = ""
    for event in events:
        block = _event_block(kind, mode, event, success_label)
        is_step = event.action is not Action.BACKTRACK
        if group is not None:
            group.blocks.append(block)
            group.step_count += 1 if is_step else 0
            if event.action is Action.BACKTRACK and event.step_label == group_root:
                units.append(group)
                group = None
            continue
        if (
            event.action is Action.EXPANSION
            and event.step_label not in on_path
        ):
            group = _Unit(
                blocks=[block],
                step_count=1,
                droppable=True,
                shared_prefix=_prefix_len(event.step_label, success_label or ""),
                position=len(units),
            )
            group_root = event.step_label
            continue
        units.append(
            _Unit(
                blocks=[block],
                step_count=1 if is_step else 0,
                droppable=event.action is Action.PRUNE,
                shared_prefix=_prefix_len(event.step_label, success_label or ""),
                position=len(units),
            )
        )
    if group is not None:  # unterminated group (trace ended inside it)
        units.append(group)
    return units


def _split_sections(
    kind: TaskKind,
    mode: PromptMode,
    events: list,
    success_label: str | None,
    fold_first_root: bool,
) -> list[_Section]:
    if kind is not TaskKind.TRIP_PLANNING:
        return [
            _Section(
                root="",
                units=_units_for(kind, mode, events, success_label),
                has_success=any(
                    e.step_label == success_label and e.action is Action.EXPANSION
                    for e in events
                ),
            )
        ]
    raw: list[tuple[str, list, str | None]] = []
    current_root: str | None = None
    bucket: list = []
    for event in events:
        if event.step_label == "S0":
            if current_root is not None:
                raw.append((current_root, bucket, None))
            current_root = event.move
            bucket = [event]
        elif event.action is Action.BACKTRACK and event.step_label == "":
            if current_root is not None:
                raw.append(
                    (
                        current_root,
                        bucket,
                        f"No child of the {current_root} root survives, so the "
                        "algorithm back-tracks to choose a new start city.",
                    )
                )
            current_root = None
            bucket = []
        else:
            bucket.append(event)
    if current_root is not None:
        raw.append((current_root, bucket, None))

    sections: list[_Section] = []
    for i, (root, chunk, narrative) in enumerate(raw):
        if i == 0 and fold_first_root and chunk and chunk[0].step_label == "S0":
            chunk = chunk[1:]
        sections.append(
            _Section(
                root=root,
                units=_units_for(kind, mode, chunk, success_label),
                has_success=any(
                    e.step_label == success_label and e.action is Action.EXPANSION
                    for e in chunk
                ),
                narrative=narrative,
            )
        )
    return sections


def _section_title(index: int, section: _Section) -> str:
    letter = ""
    i = index + 1
    while i > 0:
        i, rem = divmod(i - 1, 26)
        letter = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"[rem] + letter
    step_blocks = [
        b for u in section.units for b in u.blocks if b.startswith("Step:")
    ]
    if section.has_success:
        qualifier = "search (full trace)"
    elif step_blocks and all("Outcome: **Prune" in b for b in step_blocks):
        qualifier = "subtree (cut in one shot)"
    else:
        qualifier = "subtree (exhausted)"
    return f"3-{letter}. {section.root}-rooted {qualifier}"


def _output_format(payload: Payload, trace: SearchTrace) -> str:
    solution = trace.solution
    assert solution is not None
    if isinstance(payload, TripPayload):
        lines = []
        for leg in solution.legs:  # type: ignore[union-attr]
            w = payload.window_of(leg.city)
            suffix = f"  ({w.label})" if w else ""
            lines.append(f"Day {leg.day_from}-{leg.day_to}  {leg.city}{suffix}")
        return "\n".join(lines)
    if isinstance(payload, VertexCoverPayload):
        inner = ", ".join(f"V{v}" for v in sorted(solution.vertices))  # type: ignore[union-attr]
        return f"Vertex cover: [{inner}]"
    if isinstance(payload, ThreeDMPayload):
        return "\n".join(
            f"(x{x}, y{y}, z{z})" for x, y, z in sorted(solution.triples)  # type: ignore[union-attr]
        )
    assert isinstance(payload, MeetingPayload)
    return "\n".join(
        f"Meet {m.friend} at {m.location} from {minutes_to_clock(m.start)} "
        f"to {minutes_to_clock(m.end)}."
        for m in solution.meetings  # type: ignore[union-attr]
    )


def _reasoning_sections(
    payload: Payload,
    trace: SearchTrace,
    mode: PromptMode,
) -> tuple[str, str, list[_Section], str, str]:
    """The five phase bodies: state defs, init line, search sections, path, output."""
    kind = payload_kind(payload)
    init_event = trace.events[0]
    success_event = trace.events[-1]
    success_label = success_event.step_label
    core = [
        e
        for e in trace.events[1:]
        if e.action not in (Action.INITIALIZATION, Action.EVALUATION, Action.SUCCESS)
    ]

    state_lines = "\n".join(_STATE_DEFINITIONS[kind])

    if mode is PromptMode.COT:
        init_line = f"Initial state: {init_event.state_summary} # {_init_comment(init_event.detail)}"
        sections = [
            _Section(
                root="",
                units=_units_for(kind, mode, core, success_label),
                has_success=True,
            )
        ]
    else:
        fold = (
            kind is TaskKind.TRIP_PLANNING
            and bool(core)
            and core[0].step_label == "S0"
            and core[0].action is Action.EXPANSION
        )
        if fold:
            root = core[0].move
            assert isinstance(payload, TripPayload)
            span = payload.stay_of(root)
            init_line = (
                f"Pick an initial state: (path=[{root}], UD={span}, start=1) "
                f"# {root} spans Day 1-{span}"
            )
        else:
            init_line = (
                f"Pick an initial state: {init_event.state_summary} "
                f"# {_init_comment(init_event.detail)}"
            )
        sections = _split_sections(kind, mode, core, success_label, fold)

    return (
        state_lines,
        init_line,
        sections,
        success_event.detail,
        _output_format(payload, trace),
    )


def _assemble_search_phase(
    kind: TaskKind,
    mode: PromptMode,
    sections: list[_Section],
    dropped_sections: set[int],
    dropped_units: set[tuple[int, int]],
) -> str:
    blocks: list[str] = [f"3. {SEARCH_PHASE_TITLES[mode]}"]
    named = kind is TaskKind.TRIP_PLANNING and mode is PromptMode.AOT
    for i, section in enumerate(sections):
        if named:
            blocks.append(_section_title(i, section))
        if i in dropped_sections:
            blocks.append(
                f"(… {section.step_count} steps under the {section.root} root omitted …)"
            )
        else:
            omitted = 0
            for j, unit in enumerate(section.units):
                if (i, j) in dropped_units:
                    omitted += unit.step_count
                    continue
                if omitted:
                    blocks.append(f"(… {omitted} steps omitted …)")
                    omitted = 0
                blocks.extend(unit.blocks)
            if omitted:
                blocks.append(f"(… {omitted} steps omitted …)")
        if section.narrative:
            blocks.append(section.narrative)
    return "\n\n".join(blocks)


def _exemplar_block(
    instance: ProblemInstance,
    trace: SearchTrace,
    mode: PromptMode,
) -> tuple[str, list[_Section], str]:
    """Everything of the worked exemplar except phase 3, which is assembled
    separately so truncation can re-assemble it."""
    state_lines, init_line, sections, path_line, output_block = _reasoning_sections(
        instance.payload, trace, mode
    )
    prefix = (
        f"### Objective ###\n\n{_objective(instance.payload)}\n\n"
        f"### Constraints ###\n\n{_constraints(instance.payload)}\n\n"
        "### Solution Thinking Process ###\n\n"
        f"1. State definition\n{state_lines}\n\n"
        f"2. Initialization\n{init_line}\n\n"
    )
    suffix = (
        f"\n\n4. Unique solution path found\n{path_line}\n\n"
        f"5. Output Format\n{output_block}"
    )
    return prefix, sections, suffix


# ---------------------------------------------------------------------------
# Rendering entry points
# ---------------------------------------------------------------------------


def _validate(
    instance: ProblemInstance,
    mode: PromptMode,
    exemplars: Sequence[tuple[ProblemInstance, SearchTrace]],
) -> None:
    if mode is PromptMode.DIRECT:
        if not exemplars:
            raise PromptError("Direct mode needs at least one exemplar")
    elif len(exemplars) != WORKED_SHOT_COUNT:
        raise PromptError(f"{mode.value} mode uses exactly one worked exemplar")
    for ex, trace in exemplars:
        if ex.kind is not instance.kind:
            raise PromptError(
                f"exemplar {ex.id} is {ex.kind.value}, target is {instance.kind.value}"
            )
        if ex.id == instance.id:
            raise ExemplarTargetOverlap(f"{ex.id} is both target and exemplar")
        if trace.kind is not ex.kind:
            raise PromptError(f"trace kind {trace.kind.value} does not match {ex.id}")
        if mode is PromptMode.COT and trace.mode is not SearchMode.GREEDY:
            raise WrongTraceMode("CoT requires a greedy trace")
        if mode is PromptMode.AOT and trace.mode is not SearchMode.DFS:
            raise WrongTraceMode("AoT requires a depth-first trace")
        if not trace.succeeded:
            raise TraceNotSuccessful(f"exemplar trace for {ex.id} found no solution")


def _direct_body(
    instance: ProblemInstance,
    exemplars: Sequence[tuple[ProblemInstance, SearchTrace]],
) -> str:
    parts = [f"{len(exemplars)}-Shot In-Context Examples:"]
    for i, (ex, trace) in enumerate(exemplars, start=1):
        assert trace.solution is not None
        parts.append(f"### Task{i} ###\n{statement_text(ex.payload)}")
        parts.append(
            f"### Solution{i} ###\n{canonical_text(ex.payload, trace.solution)}"
        )
    parts.append("Question:")
    parts.append(f"### Target Question ###\n{statement_text(instance.payload)}")
    return "\n\n".join(parts)


def render(
    instance: ProblemInstance,
    mode: PromptMode,
    exemplars: Sequence[tuple[ProblemInstance, SearchTrace]],
    token_budget: int | None = None,
) -> PromptBundle:
    """Render the full prompt for ``instance``.

    ``exemplars`` pairs worked instances with their traces: any number of
    successful traces for Direct, exactly one greedy trace for CoT, exactly
    one depth-first trace for AoT.  When ``token_budget`` is given and the
    body estimate exceeds it, pruned subtrees are elided farthest from the
    accepting path first; the accepting path itself is never cut, and
    ContextBudgetExceeded is raised if even the fully elided body is too big.
    """
    _validate(instance, mode, exemplars)
    kind = instance.kind

    if mode is PromptMode.DIRECT:
        body = _direct_body(instance, exemplars)
        if token_budget is not None and estimate_tokens(body) > token_budget:
            raise ContextBudgetExceeded(
                f"direct body is ≈{estimate_tokens(body)} tokens; "
                f"budget {token_budget} (nothing can be elided in Direct mode)"
            )
    else:
        ex, trace = exemplars[0]
        prefix, sections, suffix = _exemplar_block(ex, trace, mode)
        target = f"\n\nQuestion:\n\n### Target Question ###\n{statement_text(instance.payload)}"

        def assemble(dropped_sections: set[int], dropped_units: set[tuple[int, int]]) -> str:
            phase3 = _assemble_search_phase(
                kind, mode, sections, dropped_sections, dropped_units
            )
            return (
                f"{THINKING_HEADERS[mode]}\n\n{prefix}{phase3}{suffix}{target}"
            )

        body = assemble(set(), set())
        if token_budget is not None and estimate_tokens(body) > token_budget:
            if mode is PromptMode.COT:
                raise ContextBudgetExceeded(
                    f"greedy body is ≈{estimate_tokens(body)} tokens; "
                    f"budget {token_budget} (a greedy trace has no prunable steps)"
                )
            success_index = next(
                (i for i, s in enumerate(sections) if s.has_success), 0
            )
            section_order = sorted(
                (i for i, s in enumerate(sections) if not s.has_success),
                key=lambda i: (-abs(i - success_index), i),
            )
            unit_order = sorted(
                (
                    (i, j)
                    for i, s in enumerate(sections)
                    if s.has_success
                    for j, u in enumerate(s.units)
                    if u.droppable
                ),
                key=lambda ij: (
                    sections[ij[0]].units[ij[1]].shared_prefix,
                    sections[ij[0]].units[ij[1]].position,
                ),
            )
            dropped_s: set[int] = set()
            dropped_u: set[tuple[int, int]] = set()
            for i in section_order:
                dropped_s.add(i)
                body = assemble(dropped_s, dropped_u)
                if estimate_tokens(body) <= token_budget:
                    break
            if estimate_tokens(body) > token_budget:
                for ij in unit_order:
                    dropped_u.add(ij)
                    body = assemble(dropped_s, dropped_u)
                    if estimate_tokens(body) <= token_budget:
                        break
            if estimate_tokens(body) > token_budget:
                raise ContextBudgetExceeded(
                    f"body is ≈{estimate_tokens(body)} tokens after eliding "
                    f"every prunable subtree; budget {token_budget}"
                )

    return PromptBundle(
        mode=mode,
        system_text=TASK_DESCRIPTIONS[kind],
        exemplar_ids=tuple(ex.id for ex, _ in exemplars),
        shot_count=len(exemplars),
        body=body,
        target_id=instance.id,
    )


EMPTY_ANSWER_PLACEHOLDER = "no plan was produced"

REFINE_INSTRUCTION = (
    "Carefully review the original question and your previous answer against "
    "every stated constraint. If you find any mistake, correct it and give a "
    "complete final answer in the required format. If your answer is already "
    "correct, restate it in the required format."
)


def render_refine(
    previous: PromptBundle,
    previous_text: str,
    verdict_hint: Verdict | None = None,
) -> PromptBundle:
    """The follow-up message for one refinement round.

    Refinement is verdict-blind: ``verdict_hint`` is accepted so orchestration
    code can pass what it has, but nothing from it reaches the prompt — the
    model must find mistakes on its own.
    """
    del verdict_hint
    quoted = previous_text.strip() or EMPTY_ANSWER_PLACEHOLDER
    body = (
        "Your previous answer was:\n\n<<<\n"
        + quoted
        + "\n>>>\n\n"
        + REFINE_INSTRUCTION
    )
    return replace(previous, body=body, round_index=previous.round_index + 1)


def default_exemplars(
    kind: TaskKind,
    mode: PromptMode,
    shots: int | None = None,
) -> list[tuple[ProblemInstance, SearchTrace]]:
    """Stock exemplars: fixed mid-difficulty instances from a reserved seed
    namespace, solved in the trace mode the prompt mode calls for."""
    count = shots if shots is not None else (
        DIRECT_SHOT_COUNT if mode is PromptMode.DIRECT else WORKED_SHOT_COUNT
    )
    search = SearchMode.GREEDY if mode is PromptMode.COT else SearchMode.DFS
    out = []
    for index in range(count):
        ex = exemplar_instance(kind, index, EXEMPLAR_LEVEL)
        out.append((ex, solve(ex, search)))
    return out


def bundle_text(bundle: PromptBundle) -> str:
    """System text and body as one inspectable document (golden-file format)."""
    return f"{bundle.system_text}\n\n{bundle.body}\n"
