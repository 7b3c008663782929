"""Autodiff basics: build a graph, run backward, check gradients numerically.

The tensor module is a small reverse-mode engine over numpy arrays.
Everything the training loops need (convolutions, batchnorm, the losses)
differentiates through one mechanism, shown here on toy shapes.
"""

import numpy as np

import retinagen.tensor as T
from retinagen.networks import build_mlp

print("scalar chain rule")
print("-" * 40)
x = T.Tensor([3.0], requires_grad=True)
loss = T.tsum(T.mul(x, x))  # d/dx sum(x^2) = 2x
loss.backward()
print(f"d(x^2)/dx at x=3 -> {x.grad[0]}   (expect 6)")

x.zero_grad()
y = T.Tensor([5.0], requires_grad=True)
T.backward(T.tsum(T.mul(x, y)))
print(f"d(xy)/dx = {x.grad[0]}, d(xy)/dy = {y.grad[0]}   (expect 5 and 3)\n")

print("a convolution and its adjoint")
print("-" * 40)
rng = np.random.default_rng(0)
a = T.Tensor(rng.normal(size=(1, 3, 8, 8)))
w = T.Tensor(rng.normal(size=(4, 3, 4, 4)))
fwd = T.conv2d(a, w, stride=2, pad=1)
b = T.Tensor(rng.normal(size=fwd.shape))
lhs = float((fwd.data * b.data).sum())
rhs = float((a.data * T.conv_transpose2d(b, w, stride=2, pad=1).data).sum())
print(f"<conv(a,w), b>            = {lhs:+.6f}")
print(f"<a, conv_transpose(b,w)>  = {rhs:+.6f}")
print(f"relative gap              = {abs(lhs - rhs) / abs(lhs):.2e}\n")

print("finite-difference gradient check on a small network")
print("-" * 40)
net = build_mlp([6, 8, 3], seed=1, dtype=np.float64)
data = rng.normal(size=(5, 6))
target = T.Tensor(rng.normal(size=(5, 3)))
err = T.grad_check(net, lambda n: T.l2(n.forward(data)[0], target), eps=1e-5)
print(f"max relative error over sampled parameters: {err:.2e}")
print("anything below 1e-6 means the analytic gradients are trustworthy")
