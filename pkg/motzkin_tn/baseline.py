"""
baseline.py
- MLP baseline: token embedding -> concatenation -> affine -> ReLU -> affine -> sigmoid
- Glorot-uniform weights, zero biases
- binary cross-entropy with manual backpropagation
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from motzkin_tn.errors import ShapeError
from motzkin_tn.mps import Batch
from motzkin_tn.tensor import Rng, Tensor, rng_uniform

PARAM_NAMES = ("embedding", "w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class MlpModel:
    n: int
    embedding: Tensor   # (v, d_e)
    w1: Tensor          # (n * d_e, d_h)
    b1: Tensor          # (d_h,)
    w2: Tensor          # (d_h, 1)
    b2: Tensor          # (1,)

    @property
    def v(self) -> int:
        return int(self.embedding.shape[0])

    @property
    def d_e(self) -> int:
        return int(self.embedding.shape[1])

    @property
    def d_h(self) -> int:
        return int(self.w1.shape[1])

    def params(self) -> List[Tensor]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def with_params(self, params: Sequence[Tensor]) -> "MlpModel":
        return replace(self, **{name: np.asarray(p) for name, p in zip(PARAM_NAMES, params)})


def _glorot(rng: Rng, fan_in: int, fan_out: int) -> Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng_uniform(rng, (fan_in, fan_out), -bound, bound)


def init_mlp(n: int, v: int, d_e: int = 16, d_h: int = 256, rng: Optional[Rng] = None) -> MlpModel:
    if min(n, v, d_e, d_h) < 1:
        raise ValueError(f"MLP dims must be positive, got n={n}, v={v}, d_e={d_e}, d_h={d_h}")
    if rng is None:
        raise ValueError("a generator is required to initialize the MLP")
    return MlpModel(
        n=n,
        embedding=_glorot(rng, v, d_e),
        w1=_glorot(rng, n * d_e, d_h),
        b1=np.zeros(d_h),
        w2=_glorot(rng, d_h, 1),
        b2=np.zeros(1),
    )


def zero_mlp(n: int, v: int, d_e: int, d_h: int) -> MlpModel:
    return MlpModel(n=n, embedding=np.zeros((v, d_e)), w1=np.zeros((n * d_e, d_h)),
                    b1=np.zeros(d_h), w2=np.zeros((d_h, 1)), b2=np.zeros(1))


def mlp_parameter_count(model: MlpModel) -> int:
    return int(sum(p.size for p in model.params()))


def _forward(model: MlpModel, codes: np.ndarray) -> Tuple[Tensor, Tensor, Tensor, Tensor]:
    codes = np.asarray(codes)
    if codes.ndim == 1:
        codes = codes[None, :]
    if codes.ndim != 2 or codes.shape[1] != model.n:
        raise ShapeError(f"MLP expects chains of length {model.n}, got code array of shape {codes.shape}")
    x = model.embedding[codes].reshape(codes.shape[0], model.n * model.d_e)
    pre = x @ model.w1 + model.b1
    hidden = np.maximum(pre, 0.0)
    z = (hidden @ model.w2 + model.b2)[:, 0]
    return x, pre, hidden, z


def mlp_forward_batch(model: MlpModel, codes: np.ndarray) -> np.ndarray:
    return expit(_forward(model, codes)[3])


def mlp_forward(model: MlpModel, chain: Sequence[int]) -> float:
    return float(mlp_forward_batch(model, np.asarray(chain)[None, :])[0])


def mlp_loss_and_grad(model: MlpModel, batch: Batch) -> Tuple[float, List[Tensor]]:
    """
    Mean BCE on the sigmoid output; grads in PARAM_NAMES order.
    The loss is taken on the logit (softplus(z) - y z), so it stays finite and matches dz when saturated.
    """
    codes = np.asarray(batch.codes)
    y = np.asarray(batch.labels, dtype=np.float64)
    size = codes.shape[0]
    x, pre, hidden, z = _forward(model, codes)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))

    dz = (expit(z) - y) / size                          # (B,)
    g_w2 = hidden.T @ dz[:, None]
    g_b2 = np.array([dz.sum()])
    d_hidden = dz[:, None] * model.w2[:, 0][None, :]
    d_pre = np.where(pre > 0, d_hidden, 0.0)
    g_w1 = x.T @ d_pre
    g_b1 = d_pre.sum(axis=0)
    d_x = (d_pre @ model.w1.T).reshape(size, model.n, model.d_e)
    g_emb = np.zeros_like(model.embedding)
    np.add.at(g_emb, codes, d_x)
    return loss, [g_emb, g_w1, g_b1, g_w2, g_b2]


def main() -> None:
    from motzkin_tn.tensor import make_rng

    model = init_mlp(16, 3, rng=make_rng(0))
    print("=== baseline.main() ===")
    print("parameters:", mlp_parameter_count(model))
    print("p(uuuuuuuudddddddd):", mlp_forward(model, [0] * 8 + [2] * 8))


if __name__ == "__main__":
    main()
