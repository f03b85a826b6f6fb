"""Random-feature and echo-state latent encoders.

Both encoders map an input vector x_t to a d_y x d_z latent matrix by
column-tiling x to width d_z, applying a random affine map, adding scaled
row noise and passing the result through a fixed nonlinearity:

    RFN:  Z_t = relu(A [x..x] + b + sigma W_t)
    ESN:  Z_t = phi(A [x..x] + B Z_{t-1} + b + sigma W_t)

where W_t is a 1 x d_z standard-normal row and sigma a d_y column scale.
The ESN saturation phi is the hard sigmoid clamp((x + 3) / 6, 0, 1) by
default (so phi(0) = 0.5), with tanh as an option.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EncodeError

HARD_SIGMOID = "hard_sigmoid"
TANH = "tanh"


@dataclass(frozen=True)
class RfnParams:
    A: np.ndarray  # (d_y, d_x)
    b: np.ndarray  # (d_y, d_z)
    sigma: np.ndarray  # (d_y,)

    def __post_init__(self):
        for name in ("A", "b", "sigma"):
            a = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(a)):
                raise EncodeError(f"{name} contains non-finite entries")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(self.sigma < 0):
            raise EncodeError("sigma must be nonnegative elementwise")


@dataclass(frozen=True)
class EsnParams:
    A: np.ndarray  # (d_y, d_x)
    B: np.ndarray  # (d_y, d_y)
    b: np.ndarray  # (d_y, d_z)
    sigma: np.ndarray  # (d_y,)
    activation: str = HARD_SIGMOID

    def __post_init__(self):
        for name in ("A", "B", "b", "sigma"):
            a = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(a)):
                raise EncodeError(f"{name} contains non-finite entries")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.activation not in (HARD_SIGMOID, TANH):
            raise EncodeError(f"unknown activation {self.activation!r}")


def _tile_input(x: np.ndarray, d_z: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    return np.tile(x[:, None], (1, d_z))


def _preactivation(A, b, x, extra, sigma, noise):
    d_y, d_z = b.shape
    x = np.asarray(x, dtype=float).reshape(-1)
    if A.shape[0] != d_y or A.shape[1] != x.shape[0]:
        raise EncodeError(f"A has shape {A.shape}, incompatible with x of length {x.shape[0]}")
    noise = np.asarray(noise, dtype=float).reshape(1, -1)
    if noise.shape[1] != d_z:
        raise EncodeError(f"noise must have d_z={d_z} entries, got {noise.shape[1]}")
    pre = A @ _tile_input(x, d_z) + b + sigma.reshape(-1, 1) @ noise
    if extra is not None:
        pre = pre + extra
    return pre


def hard_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.clip((x + 3.0) / 6.0, 0.0, 1.0)


def rfn_encode(x_t, p: RfnParams, noise) -> np.ndarray:
    """Rectified random-feature encoding of a single input vector."""
    return np.maximum(_preactivation(p.A, p.b, x_t, None, p.sigma, noise), 0.0)


def esn_encode(x_t, z_prev, p: EsnParams, noise) -> np.ndarray:
    """Saturating recurrent encoding; z_prev is the previous latent matrix."""
    z_prev = np.asarray(z_prev, dtype=float)
    if z_prev.shape != p.b.shape:
        raise EncodeError(f"z_prev has shape {z_prev.shape}, expected {p.b.shape}")
    if not np.all(np.isfinite(z_prev)):
        raise EncodeError("z_prev contains non-finite entries")
    pre = _preactivation(p.A, p.b, x_t, p.B @ z_prev, p.sigma, noise)
    if p.activation == TANH:
        return np.tanh(pre)
    return hard_sigmoid(pre)


def sample_rfn_params(d_y: int, d_z: int, d_x: int, sigma: float, rng: np.random.Generator) -> RfnParams:
    """Draw encoder weights from standard normals, uniform sigma scale."""
    return RfnParams(
        A=rng.standard_normal((d_y, d_x)),
        b=rng.standard_normal((d_y, d_z)),
        sigma=np.full(d_y, float(sigma)),
    )


def sample_esn_params(
    d_y: int,
    d_z: int,
    d_x: int,
    sigma: float,
    rng: np.random.Generator,
    activation: str = HARD_SIGMOID,
) -> EsnParams:
    return EsnParams(
        A=rng.standard_normal((d_y, d_x)),
        B=rng.standard_normal((d_y, d_y)),
        b=rng.standard_normal((d_y, d_z)),
        sigma=np.full(d_y, float(sigma)),
        activation=activation,
    )
