import random
from contextlib import contextmanager
import logging

import numpy as np
import torch

logger = logging.getLogger(__name__)


def seed_everything(seed: int) -> np.random.Generator:
    """Seed python, numpy and torch; return a numpy Generator for local use"""
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    logger.debug(f"Seeded all generators with {seed}")
    return np.random.default_rng(seed)


@contextmanager
def seeded_init(seed: int):
    """Run module construction under a fixed torch seed without touching the global stream"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield
