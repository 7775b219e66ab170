"""The tensor core in isolation: build a two-layer perceptron out of the
primitives, train it on a toy regression with hand-rolled Adam, and verify
every gradient against central finite differences.
"""

import numpy as np

from randla import numeric
from randla.numeric import Tensor, gradient_check
from randla.rng import Rng

rng = Rng(1)

# toy regression: y = sin(2x) on [-1, 1]
x = rng.uniforms((256, 1)) * 2.0 - 1.0
y = np.sin(2.0 * x)

w1 = Tensor(rng.uniforms((1, 32)) - 0.5, requires_grad=True)
b1 = Tensor(np.zeros(32), requires_grad=True)
w2 = Tensor(rng.uniforms((32, 1)) - 0.5, requires_grad=True)
b2 = Tensor(np.zeros(1), requires_grad=True)
params = [w1, b1, w2, b2]


def model(inp):
    h = numeric.leaky_relu(numeric.affine(inp, w1, b1))
    return numeric.affine(h, w2, b2)


def loss_fn():
    pred = model(Tensor(x))
    diff = numeric.add(pred, Tensor(-y))
    sq = numeric.elementwise_mul(diff, diff)
    return numeric.scale(numeric.reduce_sum_axis(numeric.reshape(sq, (-1,)), axis=0), 1.0 / x.size)


m = [np.zeros_like(p.data) for p in params]
v = [np.zeros_like(p.data) for p in params]
for step in range(1, 401):
    numeric.zero_grads(params)
    loss = loss_fn()
    loss.backward()
    for i, p in enumerate(params):
        m[i] = 0.9 * m[i] + 0.1 * p.grad
        v[i] = 0.999 * v[i] + 0.001 * p.grad ** 2
        p.data -= 0.01 * (m[i] / (1 - 0.9 ** step)) / (np.sqrt(v[i] / (1 - 0.999 ** step)) + 1e-8)
    if step % 100 == 0:
        print(f"step {step:3d}  mse {float(loss.data):.5f}")

err = gradient_check(lambda *ts: loss_fn(), params, probe_limit=10)
print(f"\nreverse-mode vs central differences, max relative error: {err:.2e}")

probe = np.array([[-0.9], [0.0], [0.9]])
print("sin(2x) at x=-0.9, 0, 0.9:", np.round(np.sin(2 * probe[:, 0]), 3).tolist())
print("model prediction:          ", np.round(model(Tensor(probe)).data[:, 0], 3).tolist())
