"""Comparison strategies: RAND, MFI, KLI (unidimensional) and D-Opt, MKLI
(multidimensional), behind the same interface as the two-stage strategy.

The unidimensional pair reads an IrtModel's (a, b) directly; the
multidimensional pair reads a MirtModel's (a, d).  Fisher information uses
the 2PL form a^2 P (1-P); the divergence strategies integrate the KL
between response curves over a shrinking interval of radius 3/sqrt(t).
"""

from __future__ import annotations

import numpy as np

from .cdm import DiagnosisModel, IrtModel, MirtModel
from .environment import SessionState
from .errors import CapabilityError, CapacityError
from .strategy import Strategy

KLI_POINTS = 64
MKLI_POINTS_PER_AXIS = 16
DOPT_RIDGE = 1e-6
DELTA_SCALE = 3.0
_EPS = 1e-12

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _argmax_by_id(pool: list[int], scores: np.ndarray) -> int:
    best = int(np.argmax(scores))
    return pool[best]  # pool is ascending, argmax returns first maximum


def _require(model: DiagnosisModel, cls, strategy: str):
    if not isinstance(model, cls):
        raise CapabilityError(
            f"strategy {strategy!r} requires a {cls.kind} model, got {model.kind!r}")


def _bernoulli_kl(p_hat: np.ndarray, p: np.ndarray) -> np.ndarray:
    p_hat = np.clip(p_hat, _EPS, 1.0 - _EPS)
    p = np.clip(p, _EPS, 1.0 - _EPS)
    return (p_hat * np.log(p_hat / p)
            + (1.0 - p_hat) * np.log((1.0 - p_hat) / (1.0 - p)))


def _bernoulli_kl_from_logits(p_hat: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Same divergence with p given as a logit: log p = -softplus(-z) and
    log(1-p) = -softplus(z), which avoids clipping and large temporaries."""
    p_hat = np.clip(p_hat, _EPS, 1.0 - _EPS)
    entropy = p_hat * np.log(p_hat) + (1.0 - p_hat) * np.log(1.0 - p_hat)
    cross = p_hat * np.logaddexp(0.0, -z) + (1.0 - p_hat) * np.logaddexp(0.0, z)
    return entropy + cross


class RandStrategy(Strategy):
    """Uniform over the pool; the draw depends only on (seed, examinee, step)."""

    name = "rand"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def select(self, session: SessionState, model: DiagnosisModel,
               state: np.ndarray) -> int:
        pool = self._pool(session)
        rng = np.random.default_rng([self.seed, session.examinee, session.step])
        return int(pool[rng.integers(len(pool))])


def fisher_information(model: IrtModel, theta: float, questions) -> np.ndarray:
    qs = np.asarray(questions, dtype=np.int64)
    p = model.predict_many(np.array([theta]), qs)
    return model.a[qs] ** 2 * p * (1.0 - p)


class MfiStrategy(Strategy):
    name = "mfi"

    def select(self, session: SessionState, model: DiagnosisModel,
               state: np.ndarray) -> int:
        _require(model, IrtModel, self.name)
        pool = self._pool(session)
        theta = float(np.asarray(state).reshape(-1)[0])
        return _argmax_by_id(pool, fisher_information(model, theta, pool))


class KliStrategy(Strategy):
    """Integrated KL divergence over theta in [theta_hat - d_t, theta_hat + d_t],
    d_t = 3/sqrt(answered steps); trapezoid rule.  Falls back to Fisher
    information before the first answer (d_t undefined at t = 0)."""

    name = "kli"

    def select(self, session: SessionState, model: DiagnosisModel,
               state: np.ndarray) -> int:
        _require(model, IrtModel, self.name)
        pool = self._pool(session)
        theta = float(np.asarray(state).reshape(-1)[0])
        if session.step == 0:
            return _argmax_by_id(pool, fisher_information(model, theta, pool))
        return _argmax_by_id(pool, self.scores(model, theta, pool, session.step))

    @staticmethod
    def scores(model: IrtModel, theta: float, pool, t: int,
               n_points: int = KLI_POINTS) -> np.ndarray:
        delta = DELTA_SCALE / np.sqrt(t)
        grid = np.linspace(theta - delta, theta + delta, n_points)
        qs = np.asarray(pool, dtype=np.int64)
        p_hat = model.predict_many(np.array([theta]), qs)
        # response curves over the grid: (n_pool, n_points)
        z = model.a[qs, None] * (grid[None, :] - model.b[qs, None])
        kl = _bernoulli_kl_from_logits(p_hat[:, None], z)
        return _trapezoid(kl, grid, axis=1)


def information_matrices(model: MirtModel, state: np.ndarray, questions) -> np.ndarray:
    qs = np.asarray(questions, dtype=np.int64)
    p = model.predict_many(state, qs)
    a = model.a[qs]
    return (p * (1.0 - p))[:, None, None] * np.einsum("ij,ik->ijk", a, a)


class DOptStrategy(Strategy):
    """Maximizes det(F_T + F_j): F_T sums the administered questions'
    information matrices at the current state, ridge-stabilized."""

    name = "dopt"

    def select(self, session: SessionState, model: DiagnosisModel,
               state: np.ndarray) -> int:
        _require(model, MirtModel, self.name)
        pool = self._pool(session)
        return _argmax_by_id(pool, self.scores(model, state, pool, session.tested))

    @staticmethod
    def scores(model: MirtModel, state: np.ndarray, pool,
               tested) -> np.ndarray:
        dim = model.state_dim
        f_t = DOPT_RIDGE * np.eye(dim)
        if tested:
            f_t = f_t + information_matrices(model, state, list(tested)).sum(axis=0)
        f_j = information_matrices(model, state, pool)
        return np.linalg.det(f_t[None, :, :] + f_j)


class MkliStrategy(Strategy):
    """KL integrated over the L-inf ball of radius 3/sqrt(t) around the
    state, tensor-product trapezoid grid; D-Opt fallback before the first
    answer, mirroring KLI's Fisher fallback."""

    name = "mkli"

    def select(self, session: SessionState, model: DiagnosisModel,
               state: np.ndarray) -> int:
        _require(model, MirtModel, self.name)
        if model.state_dim > 3:
            raise CapacityError(
                f"mkli quadrature supports dim <= 3, model has {model.state_dim}")
        pool = self._pool(session)
        if session.step == 0:
            return _argmax_by_id(pool, DOptStrategy.scores(model, state, pool, []))
        return _argmax_by_id(pool, self.scores(model, state, pool, session.step))

    @staticmethod
    def scores(model: MirtModel, state: np.ndarray, pool, t: int,
               n_points: int = MKLI_POINTS_PER_AXIS) -> np.ndarray:
        dim = model.state_dim
        theta = np.asarray(state, dtype=np.float64).reshape(dim)
        delta = DELTA_SCALE / np.sqrt(t)
        axes = [np.linspace(theta[i] - delta, theta[i] + delta, n_points)
                for i in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([m.ravel() for m in mesh], axis=1)  # (n_points^dim, dim)

        qs = np.asarray(pool, dtype=np.int64)
        p_hat = model.predict_many(theta, qs)
        z = model.a[qs] @ grid.T + model.d[qs, None]
        kl = _bernoulli_kl_from_logits(p_hat[:, None], z)

        values = kl.reshape((len(qs),) + (n_points,) * dim)
        for axis in range(dim, 0, -1):
            values = _trapezoid(values, axes[axis - 1], axis=axis)
        return values


def compatible(strategy_name: str, model_kind: str) -> bool:
    needs = {"mfi": "irt", "kli": "irt", "dopt": "mirt", "mkli": "mirt"}
    required = needs.get(strategy_name)
    return required is None or required == model_kind


STRATEGY_NAMES = ("maat", "rand", "mfi", "kli", "dopt", "mkli")
