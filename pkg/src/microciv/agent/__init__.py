"""The decision agent: memory, retrieval, skill workflows, and reflection."""

from microciv.agent.memory import (  # noqa: F401
    AgentMemory,
    ReflectionEntry,
    embed,
    retrieve_experiences,
)
from microciv.agent.skills import SkillCall, SkillError, SKILLS  # noqa: F401
from microciv.agent.workflows import SkillResponse, propose_skills, respond_to_skill  # noqa: F401
from microciv.agent.reflection import (  # noqa: F401
    ReflectionRoles,
    Trajectory,
    TrajectoryStep,
    reflect_rearview,
    reflect_with_simulator,
    segment_trajectory,
)
from microciv.agent.controller import CivAgent  # noqa: F401
