"""Agent pool state and encoder-parameter (un)flattening.

The flattened parameter vectors are what the spawner resamples; layout is
(A, b, sigma) for feed-forward encoders plus B for recurrent ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import EsnParams, RfnParams


@dataclass
class AgentPool:
    """Mutable per-episode state of the N agents."""

    encoders: list  # RfnParams | EsnParams per agent
    latents: np.ndarray  # (N, d_y, d_z) current Z
    predictions: np.ndarray  # (N, d_y)
    latent_transforms: np.ndarray  # (N, d_z, d_z) post-composition maps
    esn_state: np.ndarray | None = None  # (N, d_y, d_z) recurrent carry

    @property
    def size(self) -> int:
        return len(self.encoders)

    @staticmethod
    def create(encoders, d_y: int, d_z: int) -> "AgentPool":
        n = len(encoders)
        return AgentPool(
            encoders=list(encoders),
            latents=np.zeros((n, d_y, d_z)),
            predictions=np.zeros((n, d_y)),
            latent_transforms=np.tile(np.eye(d_z), (n, 1, 1)),
            esn_state=np.zeros((n, d_y, d_z)),
        )


def flatten_encoder(p) -> np.ndarray:
    if isinstance(p, RfnParams):
        return np.concatenate([p.A.ravel(), p.b.ravel(), p.sigma.ravel()])
    if isinstance(p, EsnParams):
        return np.concatenate([p.A.ravel(), p.B.ravel(), p.b.ravel(), p.sigma.ravel()])
    raise TypeError(f"unknown encoder params {type(p)!r}")


def unflatten_encoder(vec: np.ndarray, template):
    vec = np.asarray(vec, dtype=float)
    if isinstance(template, RfnParams):
        sizes = [template.A.size, template.b.size, template.sigma.size]
        a, b, sig = np.split(vec, np.cumsum(sizes)[:-1])
        return RfnParams(
            A=a.reshape(template.A.shape),
            b=b.reshape(template.b.shape),
            sigma=np.abs(sig.reshape(template.sigma.shape)),
        )
    if isinstance(template, EsnParams):
        sizes = [template.A.size, template.B.size, template.b.size, template.sigma.size]
        a, bb, b, sig = np.split(vec, np.cumsum(sizes)[:-1])
        return EsnParams(
            A=a.reshape(template.A.shape),
            B=bb.reshape(template.B.shape),
            b=b.reshape(template.b.shape),
            sigma=np.abs(sig.reshape(template.sigma.shape)),
            activation=template.activation,
        )
    raise TypeError(f"unknown encoder params {type(template)!r}")
