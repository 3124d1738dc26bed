"""Multi-stage modular reasoning engine for video question answering."""

from .core import (
    FrameWindow,
    MemoryState,
    QAItem,
    QAType,
    RunConfig,
    StageRecord,
    TemporalConjunction,
    TemporalRegion,
    VideoMeta,
    uniform_sample,
)
from .baselines import JcefConfig, run_jcef, run_llm_only, run_single_stage
from .pipeline import (
    LlmBackedPlanner,
    RuleBasedPlanner,
    apply_conjunction,
    apply_trim,
    build_context,
    run_morevqa,
)
from .tools import (
    MockBackend,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    ToolRequest,
    ToolResponse,
    ToolSession,
    WorldFixture,
    load_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "FrameWindow",
    "JcefConfig",
    "LlmBackedPlanner",
    "MemoryState",
    "MockBackend",
    "QAItem",
    "QAType",
    "RecordingBackend",
    "RemoteBackend",
    "ReplayBackend",
    "RuleBasedPlanner",
    "RunConfig",
    "StageRecord",
    "TemporalConjunction",
    "TemporalRegion",
    "ToolRequest",
    "ToolResponse",
    "ToolSession",
    "VideoMeta",
    "WorldFixture",
    "apply_conjunction",
    "apply_trim",
    "build_context",
    "load_corpus",
    "run_jcef",
    "run_llm_only",
    "run_morevqa",
    "run_single_stage",
    "uniform_sample",
]
