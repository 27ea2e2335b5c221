"""Badge steering analysis: activity profiles, activity groups, steering curves,
lifecycle flows and a post-badge decline classifier."""

__version__ = "0.1.0"
