# fedtoe/core/scenario.py
"""
Client placement, data partitioning and the desk-scale learning tasks.

Two tasks stand in for real datasets. QuadraticTask has every constant the
convergence bound needs in closed form (smoothness, gradient variance,
heterogeneity, optimum). LogisticTask is softmax regression on Gaussian
blobs, label-sorted so that farther clients hold larger labels.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from fedtoe.core.errors import ParameterError
from fedtoe.core.random_streams import substream
from fedtoe.schemas.channel import ChannelParams
from fedtoe.schemas.scenario import ClientProfile, HeterogeneityReport

logger = logging.getLogger(__name__)


def place_clients(N: int, radius_m: float, rng: np.random.Generator, min_distance_m: float = 0.0) -> np.ndarray:
    """Distances of N clients dropped uniformly over a disk around the server"""
    if N < 1:
        raise ParameterError(f"need at least one client, got {N}")
    distances = radius_m * np.sqrt(rng.random(N))
    return np.maximum(distances, min_distance_m)


def build_clients(
    distances: Sequence[float], sample_counts: Sequence[int], shards: Sequence[np.ndarray] | None = None
) -> list[ClientProfile]:
    counts = np.asarray(sample_counts, dtype=float)
    p = counts / counts.sum()
    return [
        ClientProfile(
            id=i, d=float(d), n=int(n), p=float(p_i), shard=None if shards is None else shards[i]
        )
        for i, (d, n, p_i) in enumerate(zip(distances, sample_counts, p))
    ]


class LearningTask(ABC):
    """Federated objective F(w) = sum_i p_i F_i(w)"""

    dim: int
    p: np.ndarray

    @property
    def num_clients(self) -> int:
        return self.p.size

    @property
    @abstractmethod
    def smoothness(self) -> float:
        """L: a Lipschitz constant of every local gradient"""

    @property
    @abstractmethod
    def sigma_sq(self) -> float:
        """Per-sample stochastic gradient variance"""

    @abstractmethod
    def gradient(self, client: int, w: np.ndarray) -> np.ndarray:
        """Exact local gradient"""

    @abstractmethod
    def stochastic_gradient(self, client: int, w: np.ndarray, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Unbiased mini-batch estimate of the local gradient"""

    @abstractmethod
    def loss(self, w: np.ndarray) -> float:
        pass

    @abstractmethod
    def initial_point(self) -> np.ndarray:
        pass

    def client_gradients(self, w: np.ndarray) -> np.ndarray:
        return np.stack([self.gradient(i, w) for i in range(self.num_clients)])

    def global_gradient(self, w: np.ndarray) -> np.ndarray:
        return self.p @ self.client_gradients(w)

    def test_metric(self, w: np.ndarray) -> float | None:
        return None

    def lower_bound(self) -> float:
        """Common lower bound of every F_i; both losses here are nonnegative"""
        return 0.0


class QuadraticTask(LearningTask):
    """F_i(w) = 1/2 ||A_i (w - c_i)||^2 with additive Gaussian gradient noise"""

    def __init__(self, A: np.ndarray, centers: np.ndarray, p: np.ndarray, noise_std: float):
        self.A = A
        self.H = np.einsum("nji,njk->nik", A, A)
        self.centers = centers
        self.p = np.asarray(p, dtype=float)
        self.noise_std = float(noise_std)
        self.dim = centers.shape[1]

    @property
    def smoothness(self) -> float:
        return float(max(np.linalg.eigvalsh(H)[-1] for H in self.H))

    @property
    def sigma_sq(self) -> float:
        return self.noise_std**2 * self.dim

    def gradient(self, client: int, w: np.ndarray) -> np.ndarray:
        return self.H[client] @ (w - self.centers[client])

    def stochastic_gradient(self, client, w, batch_size, rng):
        if batch_size < 1:
            raise ParameterError("batch size must be >= 1")
        noise = rng.normal(0.0, self.noise_std / np.sqrt(batch_size), size=self.dim)
        return self.gradient(client, w) + noise

    def client_gradients(self, w: np.ndarray) -> np.ndarray:
        return np.einsum("nij,nj->ni", self.H, w[None, :] - self.centers)

    def loss(self, w: np.ndarray) -> float:
        residual = np.einsum("nij,nj->ni", self.A, w[None, :] - self.centers)
        return float(0.5 * self.p @ np.sum(residual**2, axis=1))

    def optimum(self) -> np.ndarray:
        H_bar = np.einsum("n,nij->ij", self.p, self.H)
        target = np.einsum("n,nij,nj->i", self.p, self.H, self.centers)
        return np.linalg.solve(H_bar, target)

    def optimum_value(self) -> float:
        return self.loss(self.optimum())

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dim)

    def dissimilarity_operator(self) -> tuple[np.ndarray, np.ndarray]:
        """(M_i, v_i) with grad F_i(w) - grad F(w) = M_i w - v_i"""
        H_bar = np.einsum("n,nij->ij", self.p, self.H)
        Hc = np.einsum("nij,nj->ni", self.H, self.centers)
        return self.H - H_bar[None], Hc - self.p @ Hc


def make_quadratic(
    N: int,
    dim: int,
    heterogeneity: float,
    noise_std: float,
    rng: np.random.Generator,
    p: Sequence[float] | None = None,
    curvature_spread: float = 0.0,
    eigen_range: tuple[float, float] = (0.5, 1.0),
) -> QuadraticTask:
    """
    Random quadratic task.

    Clients share one curvature (scaled per client by up to
    ``curvature_spread``) and have optima spread around a common centre by
    ``heterogeneity``; zero heterogeneity and zero spread give identical clients.
    """
    if heterogeneity < 0:
        raise ParameterError(f"heterogeneity must be >= 0, got {heterogeneity}")
    basis, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    eigen = rng.uniform(*eigen_range, size=dim)
    A_shared = basis @ np.diag(np.sqrt(eigen)) @ basis.T
    scales = 1.0 + curvature_spread * rng.uniform(-1.0, 1.0, size=N)
    A = scales[:, None, None] * A_shared[None]
    center = rng.normal(size=dim)
    centers = center[None, :] + heterogeneity * rng.normal(size=(N, dim))
    weights = np.full(N, 1.0 / N) if p is None else np.asarray(p, dtype=float)
    return QuadraticTask(A, centers, weights, noise_std)


class LogisticTask(LearningTask):
    """Softmax regression with a small ridge term; parameters flattened to (features+1) x classes"""

    def __init__(
        self,
        features: np.ndarray,
        labels: np.ndarray,
        shards: list[np.ndarray],
        classes: int,
        test_features: np.ndarray,
        test_labels: np.ndarray,
        ridge: float = 1e-3,
    ):
        if any(shard.size == 0 for shard in shards):
            raise ParameterError("every client shard must hold at least one sample")
        self.features = np.hstack([features, np.ones((features.shape[0], 1))])
        self.labels = labels
        self.shards = shards
        self.classes = classes
        self.test_features = np.hstack([test_features, np.ones((test_features.shape[0], 1))])
        self.test_labels = test_labels
        self.ridge = ridge
        sizes = np.array([shard.size for shard in shards], dtype=float)
        self.p = sizes / sizes.sum()
        self.dim = self.features.shape[1] * classes

    @property
    def smoothness(self) -> float:
        return float(0.5 * np.max(np.sum(self.features**2, axis=1)) + self.ridge)

    @property
    def sigma_sq(self) -> float:
        """Largest per-sample gradient variance over clients, at the initial point"""
        w = self.initial_point()
        worst = 0.0
        for shard in self.shards:
            per_sample = np.stack([self._batch_gradient(shard[j : j + 1], w) for j in range(shard.size)])
            worst = max(worst, float(np.mean(np.sum((per_sample - per_sample.mean(axis=0)) ** 2, axis=1))))
        return worst

    def _batch_gradient(self, rows: np.ndarray, w: np.ndarray) -> np.ndarray:
        X = self.features[rows]
        W = w.reshape(X.shape[1], self.classes)
        probabilities = softmax(X @ W, axis=1)
        probabilities[np.arange(rows.size), self.labels[rows]] -= 1.0
        return (X.T @ probabilities / rows.size).ravel() + self.ridge * w

    def gradient(self, client, w):
        return self._batch_gradient(self.shards[client], w)

    def stochastic_gradient(self, client, w, batch_size, rng):
        shard = self.shards[client]
        if shard.size == 0:
            raise ParameterError(f"client {client} has no samples")
        return self._batch_gradient(shard[rng.integers(0, shard.size, size=batch_size)], w)

    def _client_loss(self, rows: np.ndarray, w: np.ndarray) -> float:
        X = self.features[rows]
        logits = X @ w.reshape(X.shape[1], self.classes)
        nll = -log_softmax(logits, axis=1)[np.arange(rows.size), self.labels[rows]].mean()
        return float(nll + 0.5 * self.ridge * w @ w)

    def loss(self, w):
        return float(sum(p_i * self._client_loss(shard, w) for p_i, shard in zip(self.p, self.shards)))

    def initial_point(self):
        return np.zeros(self.dim)

    def test_metric(self, w):
        logits = self.test_features @ w.reshape(self.test_features.shape[1], self.classes)
        return float(np.mean(np.argmax(logits, axis=1) == self.test_labels))

    def label_sets(self) -> list[set[int]]:
        return [set(np.unique(self.labels[shard]).tolist()) for shard in self.shards]


def make_logistic_noniid(
    N: int,
    classes_per_client: int,
    samples_per_client: int,
    rng: np.random.Generator,
    classes: int = 10,
    feature_dim: int = 20,
    separation: float = 3.0,
    test_samples: int = 1000,
    distances: Sequence[float] | None = None,
) -> LogisticTask:
    """
    Gaussian-blob classification sharded by label.

    The data is cut into N * classes_per_client single-label shards in
    label order. The client of distance rank j receives shards j, j + N,
    j + 2N, ..., so it holds at most classes_per_client labels and farther
    clients hold larger ones. classes_per_client = classes gives every
    client one shard of each label.
    """
    if classes_per_client < 1:
        raise ParameterError("classes_per_client must be >= 1")
    c = min(classes_per_client, classes)
    n_shards = N * c
    shard_size = max(samples_per_client // c, 1)
    shard_labels = np.arange(n_shards) * classes // n_shards

    means = rng.normal(0.0, separation, size=(classes, feature_dim)) / np.sqrt(feature_dim)
    labels = np.repeat(shard_labels, shard_size)
    features = means[labels] + rng.normal(size=(labels.size, feature_dim)) / np.sqrt(feature_dim)
    test_labels = rng.integers(0, classes, size=test_samples)
    test_features = means[test_labels] + rng.normal(size=(test_samples, feature_dim)) / np.sqrt(feature_dim)

    rank = np.argsort(np.asarray(distances), kind="stable") if distances is not None else np.arange(N)
    shards: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * N
    for j, client in enumerate(rank):
        owned = j + N * np.arange(c)
        shards[client] = np.concatenate([np.arange(s * shard_size, (s + 1) * shard_size) for s in owned])
    return LogisticTask(features, labels, shards, classes, test_features, test_labels)


def local_stochastic_gradient(
    task: LearningTask, client: int, w: np.ndarray, batch_size: int, rng: np.random.Generator
) -> np.ndarray:
    if batch_size < 1:
        raise ParameterError(f"batch size must be >= 1, got {batch_size}")
    return task.stochastic_gradient(client, w, batch_size, rng)


def heterogeneity_D(
    task: LearningTask,
    w: np.ndarray,
    radius: float = 0.0,
    rng: np.random.Generator | None = None,
    samples: int = 64,
) -> HeterogeneityReport:
    """
    D_i^2 = ||grad F_i(w) - grad F(w)||^2 at ``w`` and over the ball of ``radius`` around it.

    For quadratics the ball value is the triangle-inequality bound
    (||M_i w - v_i|| + ||M_i|| radius)^2, exact when clients share curvature.
    Other tasks take the largest value over ``samples`` random ball points.
    """
    gradients = task.client_gradients(w)
    pointwise = np.sum((gradients - task.p @ gradients) ** 2, axis=1)
    if radius == 0.0:
        return HeterogeneityReport(pointwise=pointwise, ball_max=pointwise.copy(), radius=0.0)

    if isinstance(task, QuadraticTask):
        M, _ = task.dissimilarity_operator()
        spectral = np.array([np.linalg.norm(M_i, 2) for M_i in M])
        ball_max = (np.sqrt(pointwise) + spectral * radius) ** 2
    else:
        rng = rng or np.random.default_rng(0)
        ball_max = pointwise.copy()
        for _ in range(samples):
            direction = rng.normal(size=w.size)
            point = w + radius * rng.random() ** (1.0 / w.size) * direction / np.linalg.norm(direction)
            sampled = task.client_gradients(point)
            ball_max = np.maximum(ball_max, np.sum((sampled - task.p @ sampled) ** 2, axis=1))
    return HeterogeneityReport(pointwise=pointwise, ball_max=ball_max, radius=radius)


def heterogeneity_along(task: LearningTask, points: Sequence[np.ndarray]) -> np.ndarray:
    """Largest D_i^2 over visited iterates"""
    worst = np.zeros(task.num_clients)
    for w in points:
        worst = np.maximum(worst, heterogeneity_D(task, w).pointwise)
    return worst


@dataclass(frozen=True)
class Scenario:
    clients: list[ClientProfile]
    task: LearningTask
    channel: ChannelParams

    @property
    def p(self) -> np.ndarray:
        return np.array([client.p for client in self.clients])

    @property
    def distances(self) -> np.ndarray:
        return np.array([client.d for client in self.clients])


def build_scenario(config) -> Scenario:
    """Scenario described by an ExperimentConfig"""
    section = config.scenario
    distances = place_clients(
        section.num_clients, section.radius_m, substream(section.seed, 0), section.min_distance_m
    )
    task_rng = substream(section.seed, 1)
    if section.task == "quadratic":
        counts = [section.samples_per_client] * section.num_clients
        clients = build_clients(distances, counts)
        task: LearningTask = make_quadratic(
            section.num_clients, section.dim, section.heterogeneity, section.noise_std, task_rng,
            p=[client.p for client in clients], curvature_spread=section.curvature_spread,
        )
    else:
        per_client = section.classes if section.partition == "iid" else section.classes_per_client
        task = make_logistic_noniid(
            section.num_clients, per_client, section.samples_per_client, task_rng,
            classes=section.classes, feature_dim=section.feature_dim, separation=section.separation,
            test_samples=section.test_samples, distances=distances,
        )
        clients = build_clients(distances, [shard.size for shard in task.shards], task.shards)
    logger.info(
        f"📋 Scenario: {section.num_clients} clients within {section.radius_m:.0f} m, "
        f"{section.task} task of dimension {task.dim}"
    )
    return Scenario(clients=clients, task=task, channel=config.channel)
