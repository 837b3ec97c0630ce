"""Multiplayer game host: sessions, chat, archives, and the HTTP wire."""

from microciv.server.host import GameHost, GameSession, HostError, RatingRecord  # noqa: F401
from microciv.server.http import serve_host, make_server  # noqa: F401
