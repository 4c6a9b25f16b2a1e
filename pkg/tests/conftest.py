import numpy as np
import pytest

from pushdp import (
    ClipConfig,
    FusionConfig,
    LrSchedule,
    NoiseSchedule,
    PrivacyBudget,
    TopologySchedule,
)
from pushdp.config import DataSpec, ExperimentConfig, ModelSpec


def make_config(**overrides) -> ExperimentConfig:
    """Small, fast experiment config; override any field by keyword."""
    n = overrides.pop("n", 8)
    T = overrides.pop("T", 60)
    tau = overrides.pop("tau", 5)
    theta = overrides.pop("theta", 0.5)
    epsilon = overrides.pop("epsilon", 1.0)
    ratio = overrides.pop("sampling_ratio", 0.5)
    defaults = dict(
        algorithm="adp-vrsgp",
        n=n,
        T=T,
        topology=TopologySchedule(kind="static-ring", n=n, k=min(2, n - 1)),
        noise=NoiseSchedule(form="stepwise", T=T, s=0.2, tau=tau, a1=1.0, a2=10.0),
        lr=LrSchedule(eta_base=1.0, xi=0.5),
        clip=ClipConfig(g0=0.1, psi=0.99),
        fusion=FusionConfig(theta=theta, tau=tau),
        budgets=[
            PrivacyBudget(epsilon=epsilon, delta=1e-5, sampling_ratio=ratio)
            for _ in range(n)
        ],
        model=ModelSpec(kind="logistic", features=5, l2=0.01),
        data=DataSpec(kind="blobs", n_samples=240, test_fraction=0.2, alpha_conc=1.0),
        theory_enabled=False,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


def reference_dsgd(model, dataset, node_indices, P, eta, T):
    """Plain decentralized SGD reference: full-batch local gradient step then
    one mixing pass, x <- P (x - eta * grad).  Independent of the engine's
    clip/perturb/fuse/push-sum machinery."""
    n = len(node_indices)
    X = np.zeros((n, model.dim))
    trajectory = []
    for _ in range(T):
        grads = np.stack(
            [
                model.loss_and_grad(
                    X[i], dataset.features[node_indices[i]], dataset.labels[node_indices[i]]
                )[1]
                for i in range(n)
            ]
        )
        X = P @ (X - eta * grads)
        trajectory.append(X.copy())
    return trajectory


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
