"""
Checking reverse-mode gradients
===============================

Every model component runs on the small autodiff engine in ``hrm.autodiff``.
Here we differentiate one LSTM step and compare against central differences.
"""

import numpy as np

from hrm.autodiff import Tensor, concat, forward_backward, lstm_step, stop_gradient, straight_through

rng = np.random.default_rng(0)


def leaf(*shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


x, h, c = leaf(2, 3), leaf(2, 4), leaf(2, 4)
cell = {"W": leaf(3, 16), "U": leaf(4, 16), "b": leaf(16)}
w = rng.normal(size=(2, 8))


def loss():
    h2, c2 = lstm_step(x, h, c, cell)
    return (concat([h2, c2]) * w).sum()


value, grads = forward_backward(loss, {"x": x, **cell})
print("loss", value)

# central differences on a few coordinates of U
eps = 1e-6
U = cell["U"].data.reshape(-1)
for k in (0, 7, 33):
    old = U[k]
    U[k] = old + eps
    up = float(loss().data)
    U[k] = old - eps
    down = float(loss().data)
    U[k] = old
    print(f"U[{k}]  analytic {grads['U'].reshape(-1)[k]: .8f}  numeric {(up - down) / (2 * eps): .8f}")

# stop-gradient and the straight-through estimator
a = leaf(3)
_, g = forward_backward(lambda: (a * stop_gradient(a)).sum(), {"a": a})
print("d/da a*sg(a) =", g["a"], "= a:", a.data)
hard = np.array([0.0, 1.0, 0.0])
_, g = forward_backward(lambda: (straight_through(hard, a) * np.array([1.0, 2.0, 3.0])).sum(), {"a": a})
print("straight-through passes the gradient of the soft branch:", g["a"])
