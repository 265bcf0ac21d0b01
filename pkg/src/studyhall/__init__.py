"""studyhall: a real-time backbone for hybrid one-on-many tutoring.

Server side of a classroom where one tutor supervises multiple remote
students: WebRTC signaling relay, presence tracking, telemetry-driven
attention alerts, bandwidth-aware stream tiering, avatar command
composition with viseme timelines, and a durable per-session event log,
all exposed over one WebSocket plus a small HTTP API.
"""

__version__ = "0.1.0"
