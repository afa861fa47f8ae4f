"""cerhv: CER-ranked label-noise detection with human verification for HTR datasets."""

__version__ = "0.1.0"
