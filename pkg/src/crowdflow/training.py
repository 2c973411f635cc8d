"""Mini-batch gradient training with naive or t-test early stopping."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidConfig, NonFiniteGradient, NonFiniteLoss, ShapeMismatch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class EarlyStopRule:
    """``naive`` stops after ``patience`` epochs without a new minimum;
    ``ttest`` compares the last two windows of ``window`` validation errors."""

    variant: str = "ttest"
    patience: int = 10
    window: int = 5
    p_threshold: float = 0.1
    pooled: bool = False

    def __post_init__(self):
        if self.variant not in ("naive", "ttest", "none"):
            raise InvalidConfig(f"unknown early-stop variant {self.variant!r}")
        if self.patience < 1:
            raise InvalidConfig("patience must be >= 1")
        if self.window < 2:
            raise InvalidConfig("t-test window must be >= 2")
        if not (0 < self.p_threshold < 1):
            raise InvalidConfig("p_threshold must be in (0, 1)")

    def should_stop(self, history: Sequence[float]) -> bool:
        if self.variant == "naive":
            return should_stop_naive(history, self.patience)
        if self.variant == "ttest":
            return should_stop_ttest(history, self.window, self.p_threshold, self.pooled)
        return False


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 200
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    early_stop: EarlyStopRule = field(default_factory=EarlyStopRule)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1:
            raise InvalidConfig("batch_size and max_epochs must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidConfig(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        if "early_stop" in doc:
            doc["early_stop"] = EarlyStopRule(**doc["early_stop"])
        return cls(**doc)


def batch_iterator(n_samples: int, batch_size: int, seed: int = 0, epoch: int = 0) -> list[np.ndarray]:
    """Seeded shuffle of ``range(n_samples)`` cut into consecutive batches."""
    if n_samples < 1:
        raise InvalidConfig("need at least one sample")
    rng = np.random.default_rng([seed, epoch])
    perm = rng.permutation(n_samples)
    return [perm[i:i + batch_size] for i in range(0, n_samples, batch_size)]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def init_state(params, cfg: TrainConfig):
    if cfg.optimizer == "adam":
        return AdamState(np.zeros_like(params), np.zeros_like(params))
    return None


def optimizer_step(params, grad, state, cfg: TrainConfig):
    """Return ``(new_params, new_state)``; inputs are not modified."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ShapeMismatch(f"gradient shape {grad.shape} != parameter shape {params.shape}")
    if not np.isfinite(grad).all():
        raise NonFiniteGradient("gradient contains NaN or inf")
    lr = cfg.learning_rate
    if cfg.optimizer == "sgd":
        return params - lr * grad, state
    if state is None:
        state = AdamState(np.zeros_like(params), np.zeros_like(params))
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * state.v + (1 - ADAM_BETA2) * grad * grad
    m_hat = m / (1 - ADAM_BETA1 ** t)
    v_hat = v / (1 - ADAM_BETA2 ** t)
    return params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS), AdamState(m, v, t)


# -- early stopping --------------------------------------------------------

def should_stop_naive(val_history: Sequence[float], patience: int) -> bool:
    """True when none of the last ``patience`` errors beat the earlier minimum."""
    if len(val_history) <= patience:
        return False
    return min(val_history[-patience:]) >= min(val_history[:-patience])


def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 10_000) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            break
    return h


def _ibeta(x: float, y: float, a: float, b: float) -> float:
    # y = 1 - x supplied separately so callers can avoid cancellation near x = 1
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(y)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    return _ibeta(x, 1.0 - x, a, b)


def student_t_pvalue(t: float, df: float) -> float:
    """Two-sided p-value of Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise InvalidConfig("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    t2 = t * t
    x, y = df / (df + t2), t2 / (df + t2)
    return min(1.0, max(0.0, _ibeta(x, y, df / 2.0, 0.5)))


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float


def two_sample_ttest(a: Sequence[float], b: Sequence[float], pooled: bool = False) -> TTestResult:
    """Welch (default) or pooled two-sample t-test, two-sided."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise InvalidConfig("each sample needs at least 2 values")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if pooled:
        df = na + nb - 2.0
        sp = ((na - 1) * va + (nb - 1) * vb) / df
        se2 = sp * (1.0 / na + 1.0 / nb)
    else:
        se2 = va / na + vb / nb
        df = None
    if se2 == 0.0:
        if ma == mb:
            return TTestResult(0.0, float(na + nb - 2), 1.0)
        return TTestResult(math.copysign(math.inf, ma - mb), float(na + nb - 2), 0.0)
    t = (ma - mb) / math.sqrt(se2)
    if df is None:
        # Welch-Satterthwaite
        qa, qb = va / na, vb / nb
        df = se2 * se2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
    return TTestResult(float(t), float(df), student_t_pvalue(float(t), float(df)))


def should_stop_ttest(val_history: Sequence[float], n: int, p_threshold: float = 0.1,
                      pooled: bool = False) -> bool:
    """Stop once the last two windows of ``n`` errors are statistically indistinguishable."""
    if len(val_history) < 2 * n:
        return False
    recent = list(val_history[-2 * n:])
    return two_sample_ttest(recent[:n], recent[n:], pooled).p >= p_threshold


# -- loop ------------------------------------------------------------------

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_rmse: float
    stopped: bool
    rule_fired: str


def train_loop(params, n_train: int,
               loss_and_grad: Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]],
               evaluate: Callable[[np.ndarray], float],
               cfg: TrainConfig) -> tuple[np.ndarray, list[EpochRecord]]:
    """Run epochs of mini-batch updates.

    ``loss_and_grad(params, batch_index)`` returns the batch MSE and its gradient;
    ``evaluate(params)`` returns the validation RMSE. The parameters from the
    epoch with the lowest validation RMSE are returned, not the last ones.
    """
    params = np.array(params, dtype=np.float64)
    state = init_state(params, cfg)
    best_params, best_val = params.copy(), math.inf
    history: list[float] = []
    log: list[EpochRecord] = []
    for epoch in range(1, cfg.max_epochs + 1):
        total = 0.0
        for batch in batch_iterator(n_train, cfg.batch_size, cfg.seed, epoch):
            loss, grad = loss_and_grad(params, batch)
            if not math.isfinite(loss) or not np.isfinite(grad).all():
                raise NonFiniteLoss(epoch)
            total += loss * len(batch)
            params, state = optimizer_step(params, grad, state, cfg)
        train_loss = total / n_train
        val = float(evaluate(params))
        if not math.isfinite(train_loss) or not math.isfinite(val):
            raise NonFiniteLoss(epoch)
        history.append(val)
        if val < best_val:
            best_val, best_params = val, params.copy()
        stop = cfg.early_stop.should_stop(history)
        log.append(EpochRecord(epoch, train_loss, val, stop, cfg.early_stop.variant if stop else ""))
        if stop:
            break
    return best_params, log


LOG_FIELDS = ("epoch", "train_loss", "val_rmse", "stopped", "rule_fired")


def write_log_csv(log: Sequence[EpochRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        for rec in log:
            writer.writerow([rec.epoch, repr(float(rec.train_loss)), repr(float(rec.val_rmse)),
                             str(rec.stopped).lower(), rec.rule_fired])


def read_log_csv(path) -> list[EpochRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            EpochRecord(int(r["epoch"]), float(r["train_loss"]), float(r["val_rmse"]),
                        r["stopped"] == "true", r["rule_fired"])
            for r in csv.DictReader(fh)
        ]
