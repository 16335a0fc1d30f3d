"""pagegeo: geolocation inference for remote-management device pages.

Pipeline: corpus ingestion -> Nilsimsa digests -> structural clustering
-> differential text extraction -> four-stage geographic clue mining
(keyword match, search augmentation, weighted model ensemble, IP-database
disambiguation) -> evaluation and distribution reports.
"""

__version__ = "0.1.0"

from .lsh import StructuralDigest, hamming_distance, nilsimsa_digest, similarity

__all__ = [
    "StructuralDigest",
    "nilsimsa_digest",
    "hamming_distance",
    "similarity",
    "__version__",
]
