"""Trainer-side client for the groundrl reward-scoring service."""

__version__ = "0.1.0"

from .client import (
    ClientConfig,
    ConnectionFailedError,
    ProtocolError,
    RequestTimeoutError,
    RewardClient,
    RewardClientError,
    ScoreResult,
    ServerError,
    decode_score_response,
    encode_score_request,
    score_group_offline,
)
from .hooks import make_rollout_scoring_hook

__all__ = [
    "__version__",
    "ClientConfig",
    "ConnectionFailedError",
    "ProtocolError",
    "RequestTimeoutError",
    "RewardClient",
    "RewardClientError",
    "ScoreResult",
    "ServerError",
    "decode_score_response",
    "encode_score_request",
    "score_group_offline",
    "make_rollout_scoring_hook",
]
