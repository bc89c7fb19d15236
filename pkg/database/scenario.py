"""
Scenario files
INI sections [scenario], [marking], [flows.N] and [analysis], keyed by model field names
"""

import configparser
import logging
import re
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from analyzers.tune import FLOW_PATTERNS
from protocol.cmc import MarkingConfig
from simulator.filters import FilterKind
from simulator.network import FlowSpec, HopSpec, ScenarioSpec

logger = logging.getLogger(__name__)

SCENARIO_SECTION = "scenario"
MARKING_SECTION = "marking"
ANALYSIS_SECTION = "analysis"
FLOW_PREFIX = "flows."
DIRECTIONS = ("forward", "reverse")
EMPTY_VALUES = ("", "none")

_SECTION_LINE = re.compile(r"^\s*\[([^\]]+)\]\s*$")
_KEY_LINE = re.compile(r"^\s*([^#;=:\s][^=:]*?)\s*[=:]")


class ConfigError(ValueError):
    """Scenario file or override problem, located by section, field and line."""

    def __init__(self, message: str, section: Optional[str] = None, field: Optional[str] = None, line: Optional[int] = None):
        self.section = section
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section:
            where.append(f"[{section}]")
        if field:
            where.append(field)
        super().__init__(f"{' '.join(where)}: {message}" if where else message)


def parse_int_list(value: Union[str, Sequence[int], int]) -> List[int]:
    """`1..16`, `1,2,4` or a mix of both."""
    if isinstance(value, int):
        return [value]
    if not isinstance(value, str):
        return [int(item) for item in value]
    result: List[int] = []
    for part in value.replace(" ", "").split(","):
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            start, stop = int(lo), int(hi)
            if stop < start:
                raise ValueError(f"Empty range '{part}'")
            result.extend(range(start, stop + 1))
        else:
            result.append(int(part))
    return result


def parse_float_list(value: Union[str, Sequence[float], float]) -> List[float]:
    if isinstance(value, (int, float)):
        return [float(value)]
    if not isinstance(value, str):
        return [float(item) for item in value]
    return [float(part) for part in value.replace(" ", "").split(",") if part]


class AnalysisSpec(BaseModel):
    """Analytical workflow settings; unset thresholds and capacities come from [marking]."""

    model_config = ConfigDict(frozen=True)

    r_values: List[int] = Field(default_factory=lambda: [1])
    capacity: Optional[int] = Field(None, ge=1)
    delta_star_ns: Optional[float] = Field(None, gt=0)
    thresholds_ns: List[float] = Field(default_factory=list)
    optimize: bool = False
    search_lo_ns: Optional[float] = Field(None, gt=0)
    search_hi_ns: Optional[float] = Field(None, gt=0)
    search_steps: Optional[int] = Field(None, ge=1)
    engine: Literal["moments", "histogram"] = "moments"
    model: Optional[str] = None
    model_hops: int = Field(1, ge=1)
    pure_exponential: bool = False
    filter_kind: FilterKind = FilterKind.MIN_RTT
    filter_window: int = Field(8, ge=1)

    @field_validator("r_values", mode="before")
    @classmethod
    def _r_values(cls, value: Any) -> List[int]:
        values = parse_int_list(value)
        if not values or min(values) < 1:
            raise ValueError("r_values must name at least one level count >= 1")
        return values

    @field_validator("thresholds_ns", mode="before")
    @classmethod
    def _thresholds(cls, value: Any) -> List[float]:
        values = parse_float_list(value)
        if any(item <= 0 for item in values):
            raise ValueError("thresholds must be positive")
        return values

    @field_validator("model")
    @classmethod
    def _model(cls, value: Optional[str]) -> Optional[str]:
        if value is None:
            return None
        name = value.upper()
        if name != "MI" and name not in FLOW_PATTERNS:
            raise ValueError(f"Unknown model '{value}', choose from {sorted(FLOW_PATTERNS) + ['MI']}")
        return name

    def search(self, default: Tuple[float, float, int]) -> Tuple[float, float, int]:
        lo, hi, steps = default
        return (
            self.search_lo_ns if self.search_lo_ns is not None else lo,
            self.search_hi_ns if self.search_hi_ns is not None else hi,
            self.search_steps if self.search_steps is not None else steps,
        )


class ScenarioFile(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario: Optional[ScenarioSpec] = None
    marking: MarkingConfig = Field(default_factory=MarkingConfig)
    analysis: AnalysisSpec = Field(default_factory=AnalysisSpec)


def _line_index(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """Line numbers of section headers and keys."""
    index: Dict[Tuple[str, Optional[str]], int] = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        header = _SECTION_LINE.match(line)
        if header:
            section = header.group(1).strip()
            index.setdefault((section, None), number)
            continue
        key = _KEY_LINE.match(line)
        if key and section is not None:
            index.setdefault((section, key.group(1).strip().lower()), number)
    return index


def _new_parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))


def _read(text: str, source: str) -> configparser.ConfigParser:
    parser = _new_parser()
    try:
        parser.read_string(text, source=source)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", section=exc.section, line=exc.lineno) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", section=exc.section, field=exc.option, line=exc.lineno) from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any section", line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        line, content = exc.errors[0] if exc.errors else (None, "")
        raise ConfigError(f"cannot parse {content}", line=line) from exc
    return parser


def apply_overrides(parser: configparser.ConfigParser, overrides: Sequence[str]) -> None:
    """Apply `section.key=value` overrides; flow sections take `flows.N.forward.field=value`."""
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"override '{override}' must look like section.key=value")
        target, value = override.split("=", 1)
        target = target.strip()
        if target.startswith(FLOW_PREFIX):
            parts = target.split(".", 2)
            if len(parts) < 3:
                raise ConfigError(f"override '{override}' names no key", section=target)
            section, key = f"{parts[0]}.{parts[1]}", parts[2]
        elif "." in target:
            section, key = target.split(".", 1)
        else:
            raise ConfigError(f"override '{override}' names no section")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key.lower(), value.strip())


def _plain(section: configparser.SectionProxy) -> Dict[str, str]:
    return {key: value for key, value in section.items() if value.strip().lower() not in EMPTY_VALUES}


def _check_keys(
    name: str,
    keys: Sequence[str],
    model: type,
    lines: Dict[Tuple[str, Optional[str]], int],
    skip: Sequence[str] = (),
) -> None:
    allowed = set(model.model_fields) - set(skip)
    for key in keys:
        if key not in allowed:
            raise ConfigError(
                f"unknown key, expected one of {sorted(allowed)}", section=name, field=key, line=lines.get((name, key))
            )


def _flow_sections(parser: configparser.ConfigParser) -> List[Tuple[int, str]]:
    flows = []
    for name in parser.sections():
        if not name.startswith(FLOW_PREFIX):
            if name not in (SCENARIO_SECTION, MARKING_SECTION, ANALYSIS_SECTION):
                raise ConfigError("unknown section", section=name)
            continue
        suffix = name[len(FLOW_PREFIX):]
        if not suffix.isdigit() or int(suffix) < 1:
            raise ConfigError("flow sections are numbered from 1", section=name)
        flows.append((int(suffix), name))
    flows.sort()
    numbers = [number for number, _ in flows]
    if numbers != list(range(1, len(numbers) + 1)):
        raise ConfigError(f"flow sections must be numbered 1..{len(numbers)} without gaps, got {numbers}")
    return flows


def _hop(parser: configparser.ConfigParser, name: str, lines: Dict[Tuple[str, Optional[str]], int]) -> Dict[str, Any]:
    hop: Dict[str, Any] = {}
    for key, value in parser.items(name):
        where = {"section": name, "field": key, "line": lines.get((name, key))}
        direction, _, field = key.partition(".")
        if direction not in DIRECTIONS:
            raise ConfigError("keys must start with forward or reverse", **where)
        text = value.strip()
        if not field:
            if text.lower() in EMPTY_VALUES:
                continue
            pattern = text.upper()
            if pattern not in FLOW_PATTERNS:
                raise ConfigError(f"unknown flow pattern '{text}', choose from {sorted(FLOW_PATTERNS)}", **where)
            size, gap = FLOW_PATTERNS[pattern]
            preset = {"mean_packet_bytes": size, "mean_interarrival_us": gap}
            hop[direction] = {**preset, **hop.get(direction, {})}
            continue
        if field not in FlowSpec.model_fields:
            raise ConfigError(f"unknown flow field, expected one of {sorted(FlowSpec.model_fields)}", **where)
        if text.lower() in EMPTY_VALUES:
            continue
        hop.setdefault(direction, {})[field] = text
    return hop


def _locate(exc: ValidationError, part: str, flows: List[Tuple[int, str]]) -> Tuple[str, Optional[str], str]:
    error = exc.errors()[0]
    loc = [str(item) for item in error.get("loc", ())]
    message = error.get("msg", str(exc))
    if part == MARKING_SECTION:
        return MARKING_SECTION, loc[0] if loc else None, message
    if part == ANALYSIS_SECTION:
        return ANALYSIS_SECTION, loc[0] if loc else None, message
    if loc and loc[0] == "hops" and len(loc) >= 2 and loc[1].isdigit():
        section = flows[int(loc[1])][1] if int(loc[1]) < len(flows) else SCENARIO_SECTION
        return section, ".".join(loc[2:]) or None, message
    if loc and loc[0] == "marking":
        return MARKING_SECTION, ".".join(loc[1:]) or None, message
    return SCENARIO_SECTION, loc[0] if loc else None, message


def _build(parser: configparser.ConfigParser, lines: Dict[Tuple[str, Optional[str]], int]) -> ScenarioFile:
    def fail(exc: ValidationError, part: str, flows: List[Tuple[int, str]]):
        section, field, message = _locate(exc, part, flows)
        line = lines.get((section, field)) or lines.get((section, None))
        return ConfigError(message, section=section, field=field, line=line)

    flows = _flow_sections(parser)

    marking_values = _plain(parser[MARKING_SECTION]) if parser.has_section(MARKING_SECTION) else {}
    _check_keys(MARKING_SECTION, list(marking_values), MarkingConfig, lines)
    scenario_values = _plain(parser[SCENARIO_SECTION]) if parser.has_section(SCENARIO_SECTION) else {}
    _check_keys(SCENARIO_SECTION, list(scenario_values), ScenarioSpec, lines, skip=("hops", "marking"))
    analysis_values = _plain(parser[ANALYSIS_SECTION]) if parser.has_section(ANALYSIS_SECTION) else {}
    _check_keys(ANALYSIS_SECTION, list(analysis_values), AnalysisSpec, lines)

    if "line_rate" in scenario_values and "line_rate" not in marking_values:
        marking_values["line_rate"] = scenario_values["line_rate"]

    try:
        marking = MarkingConfig(**marking_values)
    except ValidationError as exc:
        raise fail(exc, MARKING_SECTION, flows) from exc

    try:
        analysis = AnalysisSpec(**analysis_values)
    except ValidationError as exc:
        raise fail(exc, ANALYSIS_SECTION, flows) from exc

    scenario = None
    if scenario_values or flows:
        if not flows:
            raise ConfigError("a scenario needs at least one [flows.N] section", section=SCENARIO_SECTION)
        hops = [_hop(parser, name, lines) for _, name in flows]
        try:
            scenario = ScenarioSpec(hops=hops, marking=marking, **scenario_values)
        except ValidationError as exc:
            raise fail(exc, SCENARIO_SECTION, flows) from exc

    return ScenarioFile(scenario=scenario, marking=marking, analysis=analysis)


def parse_scenario(text: str, overrides: Sequence[str] = (), source: str = "<scenario>") -> ScenarioFile:
    parser = _read(text, source)
    apply_overrides(parser, overrides)
    return _build(parser, _line_index(text))


def load_scenario(path: Union[str, Path], overrides: Sequence[str] = ()) -> ScenarioFile:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scenario file not found: {path}")
    logger.info(f"Loading scenario {path}")
    return parse_scenario(path.read_text(encoding="utf-8"), overrides, source=str(path))


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(item) for item in value)
    return str(value)


def _section(parser: configparser.ConfigParser, name: str, model: BaseModel, skip: Sequence[str] = ()) -> None:
    parser.add_section(name)
    for key in type(model).model_fields:
        if key in skip:
            continue
        value = getattr(model, key)
        if value is None:
            continue
        parser.set(name, key, _format(value))


def echo_scenario(resolved: ScenarioFile) -> str:
    """Resolved configuration as a scenario file; parsing the echo gives the same configuration."""
    parser = _new_parser()
    marking = resolved.scenario.marking if resolved.scenario is not None else resolved.marking
    if resolved.scenario is not None:
        _section(parser, SCENARIO_SECTION, resolved.scenario, skip=("hops", "marking"))
    _section(parser, MARKING_SECTION, marking)
    if resolved.scenario is not None:
        for number, hop in enumerate(resolved.scenario.hops, start=1):
            name = f"{FLOW_PREFIX}{number}"
            parser.add_section(name)
            for direction in DIRECTIONS:
                flow = getattr(hop, direction)
                if flow is None:
                    continue
                for key in FlowSpec.model_fields:
                    parser.set(name, f"{direction}.{key}", _format(getattr(flow, key)))
    _section(parser, ANALYSIS_SECTION, resolved.analysis)

    lines = []
    for name in parser.sections():
        lines.append(f"[{name}]")
        lines.extend(f"{key} = {value}" for key, value in parser.items(name))
        lines.append("")
    return "\n".join(lines)
