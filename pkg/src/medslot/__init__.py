"""Medication slot filling from clinical notes with sequence-to-sequence models."""

from .corpus import SLOT_LABELS, SentencePair, SlotFrame
from .errors import DivergedTraining, MedslotError

__version__ = "0.1.0"

__all__ = ["SLOT_LABELS", "SentencePair", "SlotFrame", "MedslotError", "DivergedTraining", "__version__"]
