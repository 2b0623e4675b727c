"""Run configuration: thresholds, loop budgets, backend settings.

The config file is a flat JSON key-value document; environment variables
(LLM_MODE, LLM_BASE_URL, LLM_MODEL, LLM_API_KEY, PPL_MODEL) override the
backend settings it contains.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .ambiguity import Thresholds
from .llm import DEFAULT_MAX_PROMPT_CHARS, LlmConfig


@dataclass
class RunConfig:
    thresholds: Thresholds = field(default_factory=Thresholds)
    turn_budget: int = 10
    tool_k: int = 10
    n_exemplars: int = 1
    parallelism: int = 1


def load_config(path: str | Path | None = None,
                env=os.environ) -> tuple[RunConfig, LlmConfig]:
    data: dict = {}
    if path:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    run = RunConfig(
        thresholds=Thresholds(
            entity_threshold=float(data.get("entity_threshold", Thresholds().entity_threshold)),
            intent_threshold=float(data.get("intent_threshold", Thresholds().intent_threshold)),
        ),
        turn_budget=int(data.get("turn_budget", 10)),
        tool_k=int(data.get("tool_k", 10)),
        n_exemplars=int(data.get("n_exemplars", 1)),
        parallelism=int(data.get("parallelism", 1)),
    )
    llm_base = LlmConfig(
        mode=data.get("llm_mode", "mock"),
        base_url=data.get("llm_base_url", ""),
        model=data.get("llm_model", "mock"),
        api_key=data.get("llm_api_key", ""),
        ppl_model=data.get("ppl_model", ""),
        cassette=data.get("cassette", ""),
        max_prompt_chars=int(data.get("max_prompt_chars", DEFAULT_MAX_PROMPT_CHARS)),
    )
    return run, LlmConfig.from_env(base=llm_base, env=env)
