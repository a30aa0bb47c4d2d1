"""Genre classification of broadcast programmes from sound-event statistics.

Pipeline: PCM audio -> 5 s segments -> 64x496 log-mel spectrograms -> event
probabilities from a CNN tagger -> top-k tagging statistics per programme ->
back-end classifier over nine genres.
"""

__version__ = "0.1.0"
