"""The 20 canonical amino-acid one-letter codes, alphabetical order.

Non-canonical letters (X, B, Z, U, O) are rejected at ingestion everywhere;
silently coercing them would corrupt recovery metrics.
"""

ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
AA_INDEX = {a: i for i, a in enumerate(ALPHABET)}
GAP = "-"
