"""One-hidden-layer network: sigmoid hidden units, linear output, logistic loss.

Trained one example at a time with per-coordinate adaptive steps
(accumulated squared gradients). An example selected with probability p
contributes its loss multiplied by 1/p.
"""
from __future__ import annotations

import numpy as np

from paractive.learners.base import Learner, NumericError
from paractive.rng import substream

EPS = 1e-8
PARAMS = ("W1", "b1", "w2", "b2")

# abstract cost of one forward pass, and of a forward+backward update
SCORE_OPS = 1
UPDATE_OPS = 2


def sigmoid(z):
    return 0.5 + 0.5 * np.tanh(0.5 * z)


def forward(params, X):
    h = sigmoid(X @ params["W1"].T + params["b1"])
    return h @ params["w2"] + params["b2"], h


def loss(params, x, y, weight=1.0):
    f, _ = forward(params, x[None, :])
    return weight * float(np.logaddexp(0.0, -y * f[0]))


def loss_grad(params, x, y, weight=1.0):
    """Analytic gradient of weight * log(1 + exp(-y f(x))) w.r.t. every parameter."""
    z = params["W1"] @ x + params["b1"]
    h = sigmoid(z)
    f = float(h @ params["w2"] + params["b2"])
    dl_df = -weight * y * float(sigmoid(-y * f))
    dz = dl_df * params["w2"] * h * (1.0 - h)
    return {
        "W1": np.outer(dz, x),
        "b1": dz,
        "w2": dl_df * h,
        "b2": np.array(dl_df),
    }


class NeuralNet(Learner):
    tag = "nn"

    def __init__(self, dim, hidden=100, step=0.07, seed=0, init="uniform"):
        self.dim = int(dim)
        self.hidden = int(hidden)
        self.step = float(step)
        self.seed = int(seed)
        self.init = init
        shapes = {"W1": (self.hidden, self.dim), "b1": (self.hidden,),
                  "w2": (self.hidden,), "b2": ()}
        if init == "zeros":
            self.params_ = {k: np.zeros(s) for k, s in shapes.items()}
        elif init == "uniform":
            rng = substream(seed, "init")
            fan_in = {"W1": self.dim, "b1": self.dim, "w2": self.hidden, "b2": self.hidden}
            self.params_ = {
                k: rng.uniform(-1.0, 1.0, size=s) / np.sqrt(fan_in[k]) for k, s in shapes.items()
            }
        else:
            raise ValueError(f"unknown init {init!r}")
        self.params_["b2"] = np.asarray(self.params_["b2"], dtype=float)
        self.acc = {k: np.zeros_like(v) for k, v in self.params_.items()}
        self.ops = 0

    def score_batch(self, X):
        X = self._check_dim(np.atleast_2d(X))
        return forward(self.params_, X)[0]

    def score_cost(self):
        return SCORE_OPS

    def update(self, batch):
        for ex in batch:
            with np.errstate(invalid="ignore", over="ignore"):
                grads = loss_grad(self.params_, np.asarray(ex.x, dtype=float), ex.y, 1.0 / ex.p)
            # check everything first so a failure leaves the model untouched
            for k in PARAMS:
                if not np.all(np.isfinite(grads[k])):
                    raise NumericError(f"non-finite gradient for {k} at example {ex.index}")
            for k in PARAMS:
                gk = grads[k]
                self.acc[k] += gk * gk
                self.params_[k] -= self.step * gk / (np.sqrt(self.acc[k]) + EPS)
        cost = UPDATE_OPS * len(batch)
        self.ops += cost
        return cost

    def copy(self):
        other = NeuralNet.__new__(NeuralNet)
        other.__dict__.update(self.__dict__)
        other.params_ = {k: v.copy() for k, v in self.params_.items()}
        other.acc = {k: v.copy() for k, v in self.acc.items()}
        return other

    def params(self):
        return {"dim": self.dim, "hidden": self.hidden, "step": self.step,
                "seed": self.seed, "init": self.init}

    def state_arrays(self):
        out = {k: self.params_[k] for k in PARAMS}
        out.update({"acc_" + k: self.acc[k] for k in PARAMS})
        return out

    @classmethod
    def from_state(cls, params, arrays):
        net = cls(**params)
        for k in PARAMS:
            net.params_[k] = np.array(arrays[k], dtype=float)
            net.acc[k] = np.array(arrays["acc_" + k], dtype=float)
        return net
