from .client import (
    ClientRoundState,
    StaleDirectionError,
    client_apply_update,
    client_emit_embeddings,
    start_client_round,
)
from .messages import DownLink, RoundTraceWriter, UpLink, read_round_trace
from .split_server import ServerRoundState, server_emit_delta, server_unbalanced_update

__all__ = [
    "ClientRoundState",
    "StaleDirectionError",
    "client_apply_update",
    "client_emit_embeddings",
    "start_client_round",
    "DownLink",
    "RoundTraceWriter",
    "UpLink",
    "read_round_trace",
    "ServerRoundState",
    "server_emit_delta",
    "server_unbalanced_update",
]
