"""Seeded RNG plumbing.

All stochastic code paths draw from explicit ``torch.Generator`` objects so
that every CLI subcommand and the trainer are reproducible under a fixed seed.
Generator states round-trip through checkpoints as raw byte tensors.
"""

from __future__ import annotations

import torch


def make_generator(seed: int | None, device: str = "cpu") -> torch.Generator:
    """Create a generator, seeded when `seed` is given, else from entropy."""
    g = torch.Generator(device=device)
    if seed is not None:
        g.manual_seed(int(seed))
    else:
        g.seed()
    return g


def generator_state(g: torch.Generator) -> torch.Tensor:
    return g.get_state()


def restore_generator(state: torch.Tensor, device: str = "cpu") -> torch.Generator:
    g = torch.Generator(device=device)
    g.set_state(state)
    return g
