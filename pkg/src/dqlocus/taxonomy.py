"""Lifecycle taxonomy: organizations, phases, actors, and DQ parameters.

The lifecycle model has two organizations (data-generating and
data-receiving), three phases (generation, transformation, reuse) and a
registry of actors allowed at specific organization/phase pairs. Data
generation happens only at the data-generating organization, so exactly
five (organization, phase) pairs are valid.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum

from .errors import (
    ActorPhaseMismatch,
    AliasCollision,
    BuiltinActorImmutable,
    DuplicateActor,
    EmptyAllowedPhases,
    InvalidActorName,
    InvalidPhaseForOrganization,
    SchemaViolation,
    UnknownActor,
)


class Organization(str, Enum):
    """Where along the lifecycle an activity happens, organizationally."""

    DGO = "DGO"  # data-generating organization
    DRO = "DRO"  # data-receiving organization


class Phase(str, Enum):
    """Lifecycle phase. Declaration order is lifecycle order."""

    DG = "DG"  # data generation
    DT = "DT"  # data transformation
    DR = "DR"  # data reuse


#: The five valid (organization, phase) pairs, in lifecycle order.
#: Data generation is exclusive to the data-generating organization.
ORG_PHASE_PAIRS: tuple[tuple[Organization, Phase], ...] = (
    (Organization.DGO, Phase.DG),
    (Organization.DGO, Phase.DT),
    (Organization.DGO, Phase.DR),
    (Organization.DRO, Phase.DT),
    (Organization.DRO, Phase.DR),
)

_PAIR_ORDER = {pair: i for i, pair in enumerate(ORG_PHASE_PAIRS)}

#: Actor and label identifiers: leading uppercase letter, alphanumerics after.
IDENTIFIER_RE = re.compile(r"[A-Z][A-Za-z0-9]*")


class ParameterCategory(str, Enum):
    INTRINSIC = "Intrinsic"
    CONTEXTUAL = "Contextual"
    SYSTEM_TECHNICAL = "SystemTechnical"


class MeasurementKind(str, Enum):
    COMPUTED = "Computed"
    ATTESTED = "Attested"


@dataclass(frozen=True)
class DQParameter:
    """One of the data quality parameters checks and attestations refer to.

    ``attested_fallback`` marks a computed parameter that may still be
    attested when no measurement source exists (interoperability without
    mapping logs).
    """

    name: str
    category: ParameterCategory
    measurement_kind: MeasurementKind
    attested_fallback: bool = False

    @property
    def attestable(self) -> bool:
        return self.measurement_kind is MeasurementKind.ATTESTED or self.attested_fallback


_CORE_PARAMETERS: tuple[DQParameter, ...] = (
    # intrinsic, alphabetical
    DQParameter("Completeness", ParameterCategory.INTRINSIC, MeasurementKind.COMPUTED),
    DQParameter("Conformance", ParameterCategory.INTRINSIC, MeasurementKind.COMPUTED),
    DQParameter("Plausibility", ParameterCategory.INTRINSIC, MeasurementKind.COMPUTED),
    # contextual, alphabetical
    DQParameter("Accessibility", ParameterCategory.CONTEXTUAL, MeasurementKind.ATTESTED),
    DQParameter("Governance", ParameterCategory.CONTEXTUAL, MeasurementKind.ATTESTED),
    DQParameter("Relevance", ParameterCategory.CONTEXTUAL, MeasurementKind.ATTESTED),
    DQParameter("Timeliness", ParameterCategory.CONTEXTUAL, MeasurementKind.COMPUTED),
    # system/technical, alphabetical
    DQParameter(
        "Interoperability",
        ParameterCategory.SYSTEM_TECHNICAL,
        MeasurementKind.COMPUTED,
        attested_fallback=True,
    ),
    DQParameter("OperatingPlatform", ParameterCategory.SYSTEM_TECHNICAL, MeasurementKind.ATTESTED),
)

_PARAMETERS_BY_NAME = {p.name: p for p in _CORE_PARAMETERS}


def core_parameters() -> list[DQParameter]:
    """The nine core parameters in stable order (by category, then name)."""
    return list(_CORE_PARAMETERS)


def parameter_by_name(name: str) -> DQParameter:
    try:
        return _PARAMETERS_BY_NAME[name]
    except KeyError:
        raise SchemaViolation(f"unknown DQ parameter: {name!r}") from None


@dataclass(frozen=True)
class Actor:
    """An agent class that creates, transforms, or reuses data."""

    canonical_name: str
    aliases: frozenset[str] = frozenset()
    allowed_phases: frozenset[tuple[Organization, Phase]] = frozenset()
    builtin: bool = False


def _actor(name: str, aliases: tuple[str, ...], pairs: tuple[tuple[Organization, Phase], ...]) -> Actor:
    return Actor(name, frozenset(aliases), frozenset(pairs), builtin=True)


_DGO_DG = (Organization.DGO, Phase.DG)
_DGO_DT = (Organization.DGO, Phase.DT)
_DGO_DR = (Organization.DGO, Phase.DR)
_DRO_DT = (Organization.DRO, Phase.DT)
_DRO_DR = (Organization.DRO, Phase.DR)

# Builtin actor table. Generation-phase actors: patients, clinicians,
# wearables, the EHR system itself, and the organization whose policies
# shape entry. Transformation: data engineers or the EHR system, at either
# organization. Reuse: clinicians, researchers, stakeholders, AI models,
# and the organization, at either organization.
_BUILTIN_ACTORS: tuple[Actor, ...] = (
    _actor("AIModel", ("AI",), (_DGO_DR, _DRO_DR)),
    _actor("Clinician", (), (_DGO_DG, _DGO_DR, _DRO_DR)),
    _actor("DataEngineer", ("Engineer",), (_DGO_DT, _DRO_DT)),
    _actor("EHRSystem", ("EHR",), (_DGO_DG, _DGO_DT, _DRO_DT)),
    _actor("Organization", ("Org",), (_DGO_DG, _DGO_DR, _DRO_DR)),
    _actor("Patient", (), (_DGO_DG,)),
    _actor("Researcher", (), (_DGO_DR, _DRO_DR)),
    _actor("Stakeholder", (), (_DGO_DR, _DRO_DR)),
    _actor("Wearable", (), (_DGO_DG,)),
)


class ActorRegistry:
    """Immutable lookup of actors by canonical name or alias.

    The builtin actors are always present; ``with_actor`` returns a new
    registry, never mutating the receiver.
    """

    def __init__(self, actors: tuple[Actor, ...] = _BUILTIN_ACTORS):
        self._actors: dict[str, Actor] = {a.canonical_name: a for a in actors}
        self._by_alias: dict[str, str] = {}
        for a in actors:
            for alias in a.aliases:
                self._by_alias[alias] = a.canonical_name

    def __contains__(self, name: str) -> bool:
        return name in self._actors or name in self._by_alias

    def __iter__(self):
        return iter(sorted(self._actors.values(), key=lambda a: a.canonical_name))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ActorRegistry) and self._actors == other._actors

    def get(self, name: str) -> Actor:
        """Look up an actor by canonical name only."""
        try:
            return self._actors[name]
        except KeyError:
            raise UnknownActor(f"unknown actor: {name!r}") from None

    def resolve(self, name: str, *, allow_aliases: bool = True) -> Actor:
        """Resolve a name or (optionally) alias to its actor."""
        if name in self._actors:
            return self._actors[name]
        if allow_aliases and name in self._by_alias:
            return self._actors[self._by_alias[name]]
        raise UnknownActor(f"unknown actor: {name!r}")

    def with_actor(
        self,
        name: str,
        aliases: set[str] | frozenset[str] = frozenset(),
        allowed_phases: set[tuple[Organization, Phase]] | frozenset = frozenset(),
    ) -> "ActorRegistry":
        """Return a new registry extended with a custom actor."""
        if not IDENTIFIER_RE.fullmatch(name):
            raise InvalidActorName(
                f"actor name {name!r} must start uppercase and contain only alphanumerics"
            )
        if name in self._actors or name in self._by_alias:
            raise DuplicateActor(f"actor {name!r} is already registered")
        pairs = frozenset(allowed_phases)
        if not pairs:
            raise EmptyAllowedPhases(f"actor {name!r} must be allowed in at least one phase")
        for pair in pairs:
            if pair not in _PAIR_ORDER:
                org, phase = pair
                raise InvalidPhaseForOrganization(
                    f"{org.value}-{phase.value} is not a valid organization-phase pair"
                )
        taken = set(self._actors) | set(self._by_alias) | {name}
        for alias in aliases:
            if alias in taken:
                raise AliasCollision(f"alias {alias!r} collides with an existing name")
            taken.add(alias)
        actor = Actor(name, frozenset(aliases), pairs, builtin=False)
        return ActorRegistry(tuple(self._actors.values()) + (actor,))

    def without_actor(self, name: str) -> "ActorRegistry":
        """Return a new registry with a custom actor removed."""
        actor = self.get(name)
        if actor.builtin:
            raise BuiltinActorImmutable(f"builtin actor {name!r} cannot be removed")
        remaining = tuple(a for a in self._actors.values() if a.canonical_name != name)
        return ActorRegistry(remaining)


_BUILTIN_REGISTRY = ActorRegistry()


def builtin_registry() -> ActorRegistry:
    """The registry holding only the builtin actors."""
    return _BUILTIN_REGISTRY


def register_actor(
    registry: ActorRegistry,
    name: str,
    aliases: set[str] | frozenset[str] = frozenset(),
    allowed_phases: set[tuple[Organization, Phase]] | frozenset = frozenset(),
) -> ActorRegistry:
    """Functional form of :meth:`ActorRegistry.with_actor`."""
    return registry.with_actor(name, aliases, allowed_phases)


@dataclass(frozen=True)
class LifecycleLocus:
    """A validated (organization, phase, actor) triple.

    ``actor`` holds the canonical actor name. Construct through
    :func:`validate_locus` to guarantee the invariants hold.
    """

    organization: Organization
    phase: Phase
    actor: str

    @property
    def org_phase(self) -> tuple[Organization, Phase]:
        return (self.organization, self.phase)

    @property
    def sort_key(self) -> tuple[int, str]:
        """Lifecycle order of the (org, phase) pair, then actor name."""
        return (_PAIR_ORDER.get((self.organization, self.phase), len(_PAIR_ORDER)), self.actor)

    def __str__(self) -> str:
        return f"{self.organization.value}-{self.phase.value}-{self.actor}"


def pair_order(org: Organization, phase: Phase) -> int:
    """Position of an (organization, phase) pair in lifecycle order."""
    try:
        return _PAIR_ORDER[(org, phase)]
    except KeyError:
        raise InvalidPhaseForOrganization(
            f"{org.value}-{phase.value} is not a valid organization-phase pair"
        ) from None


def validate_locus(
    org: Organization,
    phase: Phase,
    actor_name: str,
    registry: ActorRegistry | None = None,
    *,
    allow_aliases: bool = True,
) -> LifecycleLocus:
    """Build a locus, resolving the actor name through the registry.

    Raises InvalidPhaseForOrganization for the impossible DRO-DG pair,
    UnknownActor for unresolvable names, and ActorPhaseMismatch when the
    actor is not allowed at the pair.
    """
    registry = registry or _BUILTIN_REGISTRY
    if (org, phase) not in _PAIR_ORDER:
        raise InvalidPhaseForOrganization(
            f"{org.value}-{phase.value} is not a valid organization-phase pair:"
            " data generation happens only at the data-generating organization"
        )
    actor = registry.resolve(actor_name, allow_aliases=allow_aliases)
    if (org, phase) not in actor.allowed_phases:
        raise ActorPhaseMismatch(
            f"actor {actor.canonical_name!r} is not allowed at {org.value}-{phase.value}"
        )
    return LifecycleLocus(organization=org, phase=phase, actor=actor.canonical_name)


def parse_locus(text: str, registry: ActorRegistry | None = None, *, allow_aliases: bool = True) -> LifecycleLocus:
    """Parse an ``ORG-PHASE-Actor`` string into a validated locus."""
    parts = text.split("-", 2)
    if len(parts) != 3:
        raise SchemaViolation(f"locus must be ORG-PHASE-Actor, got {text!r}")
    org_s, phase_s, actor_s = parts
    try:
        org = Organization(org_s)
        phase = Phase(phase_s)
    except ValueError:
        raise SchemaViolation(f"locus must be ORG-PHASE-Actor, got {text!r}") from None
    return validate_locus(org, phase, actor_s, registry, allow_aliases=allow_aliases)


def enumerate_loci(registry: ActorRegistry | None = None) -> list[LifecycleLocus]:
    """Every valid locus, in lifecycle order then actor name."""
    registry = registry or _BUILTIN_REGISTRY
    loci = []
    for org, phase in ORG_PHASE_PAIRS:
        for actor in registry:
            if (org, phase) in actor.allowed_phases:
                loci.append(LifecycleLocus(organization=org, phase=phase, actor=actor.canonical_name))
    return loci


def load_registry_config(text: str | bytes) -> ActorRegistry:
    """Load custom actors from a JSON config on top of the builtin set.

    Format: ``{"actors": [{"name", "aliases", "allowed_phases": ["DGO-DG", ...]}]}``.
    Builtin entries cannot be redefined, only extended with new actors.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaViolation(f"registry config is not valid JSON: {e}") from None
    if not isinstance(doc, dict) or set(doc) - {"actors"}:
        raise SchemaViolation("registry config must be an object with an 'actors' list")
    entries = doc.get("actors", [])
    if not isinstance(entries, list):
        raise SchemaViolation("'actors' must be a list")
    registry = _BUILTIN_REGISTRY
    for entry in entries:
        if not isinstance(entry, dict):
            raise SchemaViolation("each actor entry must be an object")
        unknown = set(entry) - {"name", "aliases", "allowed_phases"}
        if unknown:
            raise SchemaViolation(f"unknown actor entry keys: {sorted(unknown)}")
        name = entry.get("name")
        if not isinstance(name, str):
            raise SchemaViolation("actor entry requires a string 'name'")
        aliases = entry.get("aliases", [])
        if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
            raise SchemaViolation(f"actor {name!r}: 'aliases' must be a list of strings")
        raw_pairs = entry.get("allowed_phases", [])
        if not isinstance(raw_pairs, list):
            raise SchemaViolation(f"actor {name!r}: 'allowed_phases' must be a list")
        pairs = set()
        for raw in raw_pairs:
            if not isinstance(raw, str) or raw.count("-") != 1:
                raise SchemaViolation(f"actor {name!r}: phase {raw!r} must be 'ORG-PHASE'")
            org_s, phase_s = raw.split("-")
            try:
                pairs.add((Organization(org_s), Phase(phase_s)))
            except ValueError:
                raise SchemaViolation(f"actor {name!r}: phase {raw!r} must be 'ORG-PHASE'") from None
        registry = registry.with_actor(name, set(aliases), pairs)
    return registry
