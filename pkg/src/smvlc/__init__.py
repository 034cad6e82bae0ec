"""Spatial-modulation VLC with channel-adaptive bit mapping."""
