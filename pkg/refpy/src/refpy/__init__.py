"""Reference tracker: normalized cross-correlation search behind a line protocol.

Plain Python on purpose. The package exists to show that a tracker written
against the published wire grammar, with no shared code, evaluates cleanly.
"""

__version__ = "0.1.0"
