"""Training side of the Lidar patch classifier.

Talks to the inference package purely through its file interfaces: raw
scan/label pairs go in through its CLI, LPCH patch dumps come back, and
trained weights leave as LCNW checkpoint files.
"""

__version__ = "0.1.0"
