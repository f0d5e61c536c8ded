"""Motor-imagery BCI with a subject-identity gate that routes trials to per-subject classifiers."""

__version__ = "0.1.0"
