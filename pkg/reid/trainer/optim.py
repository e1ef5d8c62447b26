import numpy as np


class Adam:
    """Adam with bias correction, updating a dict of arrays in place."""

    def __init__(self, params, learning_rate, betas=(0.9, 0.999), eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.first = {name: np.zeros_like(p) for name, p in params.items()}
        self.second = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, params, grads):
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for name, param in params.items():
            grad = grads[name]
            self.first[name] = self.beta1 * self.first[name] + (1.0 - self.beta1) * grad
            self.second[name] = self.beta2 * self.second[name] + (1.0 - self.beta2) * grad * grad
            m_hat = self.first[name] / correction1
            v_hat = self.second[name] / correction2
            param -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
