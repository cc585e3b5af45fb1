"""Plain gradient descent on the prompt/image alignment loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .encoders import alignment_grad, alignment_loss
from .errors import DeidError, OptimizationError
from .projection import SelectionPolicy, project_prompt
from .textkit import EmbeddingTable, embed


@dataclass
class OptTrace:
    """Loss trajectory of one optimization run: initial value plus one per step."""

    losses: np.ndarray
    step_count: int
    learning_rate: float


def optimize_prompt(
    prompt: np.ndarray,
    f_img: np.ndarray,
    enc,
    learning_rate: float,
    steps: int,
) -> tuple[np.ndarray, OptTrace]:
    """Run exactly `steps` full-gradient updates H <- H - learning_rate * grad.

    Returns the final prompt and a trace of steps + 1 losses. The run is
    bitwise deterministic; a non-finite loss or gradient aborts with the
    offending step index.
    """
    if learning_rate < 0.0:
        raise DeidError("learning_rate must be >= 0")
    if steps < 0:
        raise DeidError("steps must be >= 0")
    current = np.array(prompt, dtype=np.float64, copy=True)
    losses = np.empty(steps + 1, dtype=np.float64)
    losses[0] = alignment_loss(current, f_img, enc)
    if not np.isfinite(losses[0]):
        raise OptimizationError("non-finite loss at step 0")
    for t in range(1, steps + 1):
        grad = alignment_grad(current, f_img, enc)
        if not np.all(np.isfinite(grad)):
            raise OptimizationError(f"non-finite gradient at step {t}")
        current = current - learning_rate * grad
        if not np.all(np.isfinite(current)):
            raise OptimizationError(f"non-finite prompt at step {t}")
        losses[t] = alignment_loss(current, f_img, enc)
        if not np.isfinite(losses[t]):
            raise OptimizationError(f"non-finite loss at step {t}")
    return current, OptTrace(losses=losses, step_count=steps, learning_rate=learning_rate)


def refine_cycle(
    prompt: np.ndarray,
    f_img: np.ndarray,
    enc,
    table: EmbeddingTable,
    blacklist_ids: set[int],
    whitelist_ids: set[int],
    cfg: PipelineConfig,
    rng: np.random.Generator | None = None,
    audit: list | None = None,
) -> tuple[list[int], list[OptTrace]]:
    """Alternate optimize / project / re-embed for cfg.rounds rounds.

    Each round optimizes the continuous prompt, snaps it to constrained
    token ids, and re-embeds those ids as the next round's start. Returns
    the final token sequence and one trace per round.
    """
    policy = SelectionPolicy(mode=cfg.mode, temperature=cfg.temperature)
    current = np.array(prompt, dtype=np.float64, copy=True)
    traces: list[OptTrace] = []
    tokens: list[int] = []
    for _ in range(cfg.rounds):
        current, trace = optimize_prompt(current, f_img, enc, cfg.learning_rate, cfg.steps)
        traces.append(trace)
        tokens = project_prompt(
            current,
            table,
            blacklist_ids,
            whitelist_ids,
            k=cfg.top_k,
            bias=cfg.whitelist_bias,
            policy=policy,
            rng=rng,
            audit=audit,
        )
        current = embed(tokens, table)
    return tokens, traces
