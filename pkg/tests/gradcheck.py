"""Central finite-difference gradient check shared by the loss tests."""

import numpy as np
import torch


def fd_relative_error(fn, x_hat: torch.Tensor, eps: float = 1e-6) -> float:
    """||autograd - finite difference|| / ||finite difference|| over every input element."""
    x_hat = x_hat.detach().clone().double().requires_grad_(True)
    fn(x_hat).backward()
    analytic = x_hat.grad.detach().numpy().ravel()
    base = x_hat.detach().clone()
    flat = base.view(-1)
    numeric = np.zeros_like(analytic)
    with torch.no_grad():
        for i in range(flat.numel()):
            old = flat[i].item()
            flat[i] = old + eps
            up = fn(base).item()
            flat[i] = old - eps
            down = fn(base).item()
            flat[i] = old
            numeric[i] = (up - down) / (2 * eps)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-300))
