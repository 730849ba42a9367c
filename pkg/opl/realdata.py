"""
KuaiRec-style real-data protocol

A fully observed user x item watch-ratio matrix is turned into an off-policy
learning problem: secondary rewards are built from the matrix and item
metadata, a synthetic logging policy picks items for training users, target
rewards are masked at random, and held-out users give exact ground truth.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from .core import (
    EvaluationTables,
    LoggedDataset,
    LoggingPolicy,
    Policy,
    Stream,
    ValueReport,
    make_rng,
    sample_actions,
)
from .errors import ConfigurationError, IngestionError
from .estimators import SurrogateAggregator

logger = logging.getLogger(__name__)

LONG_WATCH_THRESHOLD = 2.0
ENGAGEMENT_FLOOR = 0.5
N_SECONDARY = 4


class SchemaConfig(BaseModel):
    """File names and column names of the three input tables"""
    model_config = ConfigDict(frozen=True)

    interactions_file: str = "interactions.csv"
    items_file: str = "items.csv"
    users_file: str = "users.csv"
    user_column: str = "user_id"
    item_column: str = "item_id"
    reward_column: str = "watch_ratio"
    upload_age_column: str = "upload_age"
    video_length_column: str = "video_length"
    user_feature_columns: Optional[List[str]] = Field(
        default=None, description="defaults to every users column except the id"
    )


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """
    Attributes:
        user_ids: (U,) ids in users-file order
        item_ids: (I,) ids in items-file order
        user_features: (U, d_x) per-column standardized user features
        watch_ratio: (U, I) fully observed target rewards
        upload_age: (I,) min-max normalized to [0, 1]
        video_length: (I,) min-max normalized to [0, 1]
    """
    user_ids: np.ndarray
    item_ids: np.ndarray
    user_features: np.ndarray
    watch_ratio: np.ndarray
    upload_age: np.ndarray
    video_length: np.ndarray

    @property
    def n_users(self) -> int:
        return self.watch_ratio.shape[0]

    @property
    def n_items(self) -> int:
        return self.watch_ratio.shape[1]


# ============================================================================
# INGESTION
# ============================================================================

def _read_table(path: Path, required: List[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError as e:
        raise IngestionError(f"missing input file {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise IngestionError(f"cannot parse {path}: {e}") from e
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise IngestionError(f"{path.name} lacks columns {missing}")
    return frame


def _numeric(frame: pd.DataFrame, columns: List[str], source: str) -> pd.DataFrame:
    """Coerce `columns` to floats; the first bad cell is reported by file row (header is row 1)."""
    out = frame.copy()
    for column in columns:
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            row = int(bad[0]) + 2
            raise IngestionError(
                f"{source} row {row}: non-numeric value {frame[column].iloc[bad[0]]!r} in column '{column}'",
                row=row,
            )
        out[column] = values.astype(float)
    return out


def _min_max(values: np.ndarray) -> np.ndarray:
    span = values.max() - values.min()
    return np.zeros_like(values) if span == 0 else (values - values.min()) / span


def _standardize(features: np.ndarray) -> np.ndarray:
    std = features.std(axis=0)
    return (features - features.mean(axis=0)) / np.where(std > 0, std, 1.0)


def load_matrix(path: Union[str, Path], schema: SchemaConfig = SchemaConfig()) -> InteractionMatrix:
    """
    Assemble the dense interaction matrix from the three tables under `path`.

    Duplicate (user, item) rows are averaged.

    Raises:
        IngestionError: on a missing file or column, a non-numeric field, a negative
            watch ratio or an unknown id (with the file row), or an absent (user, item) cell
    """
    path = Path(path)
    s = schema
    users = _read_table(path / s.users_file, [s.user_column])
    items = _read_table(path / s.items_file, [s.item_column, s.upload_age_column, s.video_length_column])
    interactions = _read_table(path / s.interactions_file, [s.user_column, s.item_column, s.reward_column])

    feature_columns = s.user_feature_columns or [c for c in users.columns if c != s.user_column]
    if not feature_columns:
        raise IngestionError(f"{s.users_file} has no feature columns")
    users = _numeric(users, feature_columns, s.users_file)
    items = _numeric(items, [s.upload_age_column, s.video_length_column], s.items_file)
    interactions = _numeric(interactions, [s.reward_column], s.interactions_file)

    user_ids = users[s.user_column].to_numpy()
    item_ids = items[s.item_column].to_numpy()
    user_index = pd.Index(user_ids)
    item_index = pd.Index(item_ids)
    for column, index in ((s.user_column, user_index), (s.item_column, item_index)):
        unknown = np.flatnonzero(~interactions[column].isin(index).to_numpy())
        if unknown.size:
            row = int(unknown[0]) + 2
            raise IngestionError(
                f"{s.interactions_file} row {row}: unknown {column} {interactions[column].iloc[unknown[0]]!r}",
                row=row,
            )

    negative = np.flatnonzero((interactions[s.reward_column] < 0.0).to_numpy())
    if negative.size:
        first = negative[0]
        row = int(first) + 2
        cell = (interactions[s.user_column].iloc[first], interactions[s.item_column].iloc[first])
        raise IngestionError(
            f"{s.interactions_file} row {row}: negative {s.reward_column} {interactions[s.reward_column].iloc[first]!r}",
            row=row,
            cell=cell,
        )

    mean_reward = interactions.groupby([s.user_column, s.item_column])[s.reward_column].mean()
    n_duplicates = len(interactions) - len(mean_reward)
    if n_duplicates:
        logger.info("averaged %d duplicate (user, item) rows", n_duplicates)
    dense = mean_reward.unstack(s.item_column).reindex(index=user_index, columns=item_index)
    absent = np.argwhere(dense.isna().to_numpy())
    if absent.size:
        user, item = user_ids[absent[0][0]], item_ids[absent[0][1]]
        raise IngestionError(
            f"{len(absent)} (user, item) cells are absent, first ({user!r}, {item!r})", cell=(user, item)
        )

    logger.debug("loaded %d users x %d items from %s", len(user_ids), len(item_ids), path)
    return InteractionMatrix(
        user_ids=user_ids,
        item_ids=item_ids,
        user_features=_standardize(users[feature_columns].to_numpy(dtype=float)),
        watch_ratio=dense.to_numpy(dtype=float),
        upload_age=_min_max(items[s.upload_age_column].to_numpy(dtype=float)),
        video_length=_min_max(items[s.video_length_column].to_numpy(dtype=float)),
    )


def build_secondary(matrix: InteractionMatrix) -> np.ndarray:
    """
    Secondary rewards per (user, item), shape (U, I, 4):
    s1 = 1 if r >= 2.0, s2 = -1 if r < 0.5, s3 = -upload_age, s4 = video_length.
    """
    r = matrix.watch_ratio
    shape = r.shape
    return np.stack(
        [
            (r >= LONG_WATCH_THRESHOLD).astype(float),
            np.where(r < ENGAGEMENT_FLOOR, -1.0, 0.0),
            np.broadcast_to(-matrix.upload_age, shape),
            np.broadcast_to(matrix.video_length, shape),
        ],
        axis=2,
    )


# ============================================================================
# PROBLEM CONSTRUCTION
# ============================================================================

@dataclass(frozen=True, eq=False)
class RealDataProblem:
    """
    Attributes:
        data: logged rows for training users
        evaluation: exact value tables over the held-out users
        items: (n_actions,) matrix columns used as the action set
        train_users: row indices of training users
        eval_users: row indices of held-out users
        logging_policy: synthesized pi_0
        aggregator: F(s) = s_1
    """
    data: LoggedDataset
    evaluation: EvaluationTables
    items: np.ndarray
    train_users: np.ndarray
    eval_users: np.ndarray
    logging_policy: LoggingPolicy
    aggregator: SurrogateAggregator


def make_opl_problem(
    matrix: InteractionMatrix,
    n_actions: int = 100,
    n: int = 1000,
    obs_prob: float = 0.2,
    temperature: float = -2.0,
    train_fraction: float = 0.7,
    seed: int = 0,
    beta: float = 0.3,
) -> RealDataProblem:
    """
    Build logged data and a held-out evaluation handle from `matrix`.

    Args:
        matrix: fully observed interaction matrix
        n_actions: number of items drawn as the action set
        n: logged rows, drawn from training users with replacement
        obs_prob: constant p(o|x)
        temperature: logging-policy phi
        train_fraction: share of users used for logging
        seed: master seed
        beta: combined-objective weight of the evaluation handle

    Raises:
        ConfigurationError: if n_actions exceeds the item count
    """
    if n_actions > matrix.n_items:
        raise ConfigurationError(f"n_actions={n_actions} exceeds the {matrix.n_items} available items")
    if n < 1 or not 0.0 < obs_prob <= 1.0 or not 0.0 < train_fraction < 1.0:
        raise ConfigurationError("need n >= 1, obs_prob in (0, 1] and train_fraction in (0, 1)")
    if matrix.n_users < 2:
        raise ConfigurationError("need at least two users to split")

    rng = make_rng(seed, Stream.PROBLEM)
    items = np.sort(rng.choice(matrix.n_items, size=n_actions, replace=False))
    order = rng.permutation(matrix.n_users)
    n_train = min(max(int(round(train_fraction * matrix.n_users)), 1), matrix.n_users - 1)
    train_users, eval_users = np.sort(order[:n_train]), np.sort(order[n_train:])
    logging_policy = LoggingPolicy.from_rng(rng, matrix.user_features.shape[1], n_actions, temperature)

    secondary = build_secondary(matrix)[:, items, :]
    rewards = matrix.watch_ratio[:, items]
    users = rng.choice(train_users, size=n)
    contexts = matrix.user_features[users]
    probs = logging_policy.action_dist(contexts)
    actions = sample_actions(probs, rng)
    obs_flags = (rng.random(n) < obs_prob).astype(np.int64)
    data = LoggedDataset(
        contexts=contexts,
        actions=actions,
        obs_flags=obs_flags,
        secondary=secondary[users, actions],
        target=rewards[users, actions],
        obs_prob=np.full(n, obs_prob),
        pscore=probs[np.arange(n), actions],
        n_actions=n_actions,
    )
    evaluation = EvaluationTables(
        contexts=matrix.user_features[eval_users],
        target=rewards[eval_users],
        secondary=secondary[eval_users].sum(axis=2),
        beta=beta,
    )
    return RealDataProblem(
        data=data,
        evaluation=evaluation,
        items=items,
        train_users=train_users,
        eval_users=eval_users,
        logging_policy=logging_policy,
        aggregator=SurrogateAggregator.first_dimension(N_SECONDARY),
    )


def matrix_true_values(handle: EvaluationTables, policy: Policy, beta: Optional[float] = None) -> ValueReport:
    """Exact values over the held-out users, read from the matrix, with the optimal and uniform references."""
    if beta is not None:
        handle = replace(handle, beta=beta)
    return handle.report(policy)
