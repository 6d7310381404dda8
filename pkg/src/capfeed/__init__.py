"""capfeed: interactive image-captioning adaptation with feedback-driven
augmentation and replay-guarded continual updates."""

__version__ = "0.1.0"
