"""Domain error hierarchy.

Every error carries a short machine-readable ``code`` that the gateway
copies into Error envelopes and the HTTP layer maps onto status codes.
Codes are lowercase space-separated phrases, stable across releases;
``message`` (the str() of the exception) is free-form diagnostic text.
"""

from __future__ import annotations


class StudyhallError(Exception):
    """Base class for all domain-level failures."""

    code = "error"


# session lifecycle

class SessionNotFound(StudyhallError):
    code = "session not found"


class SessionClosed(StudyhallError):
    code = "session closed"


class TutorSeatTaken(StudyhallError):
    code = "tutor seat taken"


class InvalidToken(StudyhallError):
    code = "invalid token"


class UnknownPeer(StudyhallError):
    code = "unknown peer"


# signaling

class NotPaired(StudyhallError):
    code = "not paired"


class IllegalTransition(StudyhallError):
    code = "illegal transition"


class RoleViolation(StudyhallError):
    code = "role violation"


# stream quality

class ZoomTargetNotInFeeds(StudyhallError):
    code = "zoom target not in feeds"


# avatar

class EmptyText(StudyhallError):
    code = "empty text"


class InvalidRate(StudyhallError):
    code = "invalid rate"


# telemetry rules

class UnknownStudent(StudyhallError):
    code = "unknown student"


# event log

class StorageFailure(StudyhallError):
    code = "storage failure"


# configuration

class ConfigInvalid(StudyhallError):
    code = "config invalid"
